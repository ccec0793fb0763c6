//! Real nonsymmetric eigensolver for the small projected matrices.
//!
//! The core is the classic Francis double-shift QR iteration on a Hessenberg
//! matrix with accumulation of the transformations, followed by
//! back-substitution on the quasi-triangular factor to recover eigenvectors
//! (the EISPACK `hqr2` lineage, as in the public-domain Jama port). General
//! square matrices are reduced to Hessenberg form by Householder similarity
//! first. Pairs whose back-substituted residual is poor are polished by one
//! or two steps of shifted inverse iteration in complex arithmetic.

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use num_complex::Complex64;

const EPS: f64 = 2.220446049250313e-16;

/// Eigenvalues and eigenvectors of a small real matrix.
#[derive(Debug, Clone)]
pub struct EigenDecomp {
    /// Eigenvalues; complex ones occur in conjugate pairs for real input.
    pub values: Vec<Complex64>,
    /// Column j pairs with `values[j]`, normalized to unit 2-norm.
    pub vectors: Vec<Vec<Complex64>>,
    /// Index of the conjugate partner for members of a complex pair.
    pub conj_pair: Vec<Option<usize>>,
}

impl EigenDecomp {
    pub fn order(&self) -> usize {
        self.values.len()
    }
}

/// Eigendecomposition of an upper Hessenberg matrix.
///
/// The input must be numerically Hessenberg: entries below the first
/// subdiagonal may not exceed `1e-14 * ||H||_F` in aggregate.
pub fn hess_eig(h: &DenseMatrix) -> Result<EigenDecomp> {
    assert!(h.is_square());
    let mass = h.below_hessenberg_mass();
    if mass > 1e-14 * h.norm_fro().max(1e-300) {
        return Err(Error::NotHessenberg(mass));
    }
    let n = h.rows();
    let mut work = h.clone();
    // Clean sub-Hessenberg noise so the QR sweeps see exact zeros.
    for i in 0..n {
        for j in 0..i.saturating_sub(1) {
            work[(i, j)] = 0.0;
        }
    }
    let v = DenseMatrix::identity(n);
    let (d, e, schur_vectors) = hqr2(work, v)?;
    Ok(assemble(h, &d, &e, &schur_vectors))
}

/// Eigendecomposition of a general small real matrix: Householder reduction
/// to Hessenberg form, then the same QR core.
pub fn dense_eig(a: &DenseMatrix) -> Result<EigenDecomp> {
    assert!(a.is_square());
    let (h, q) = hessenberg_reduce(a);
    let (d, e, schur_vectors) = hqr2(h, q)?;
    Ok(assemble(a, &d, &e, &schur_vectors))
}

/// Householder similarity reduction A = Q H Q^T with H upper Hessenberg.
fn hessenberg_reduce(a: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let n = a.rows();
    let mut h = a.clone();
    let mut ort = vec![0.0; n];
    if n < 3 {
        return (h, DenseMatrix::identity(n));
    }
    let high = n - 1;
    for m in 1..high {
        let mut scale = 0.0;
        for i in m..=high {
            scale += h[(i, m - 1)].abs();
        }
        if scale == 0.0 {
            continue;
        }
        let mut hsum = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h[(i, m - 1)] / scale;
            hsum += ort[i] * ort[i];
        }
        let mut g = hsum.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        let hh = hsum - ort[m] * g;
        ort[m] -= g;

        for j in m..n {
            let mut f = 0.0;
            for i in (m..=high).rev() {
                f += ort[i] * h[(i, j)];
            }
            f /= hh;
            for i in m..=high {
                h[(i, j)] -= f * ort[i];
            }
        }
        for i in 0..=high {
            let mut f = 0.0;
            for j in (m..=high).rev() {
                f += ort[j] * h[(i, j)];
            }
            f /= hh;
            for j in m..=high {
                h[(i, j)] -= f * ort[j];
            }
        }
        ort[m] *= scale;
        h[(m, m - 1)] = scale * g;
    }

    let mut q = DenseMatrix::identity(n);
    for m in (1..high).rev() {
        if h[(m, m - 1)] != 0.0 {
            for i in m + 1..=high {
                ort[i] = h[(i, m - 1)];
            }
            for j in m..=high {
                let mut g = 0.0;
                for i in m..=high {
                    g += ort[i] * q[(i, j)];
                }
                g = (g / ort[m]) / h[(m, m - 1)];
                for i in m..=high {
                    q[(i, j)] += g * ort[i];
                }
            }
        }
    }
    // Householder vectors were stored below the subdiagonal; remove them.
    for i in 2..n {
        for j in 0..i - 1 {
            h[(i, j)] = 0.0;
        }
    }
    (h, q)
}

/// Francis QR on a Hessenberg matrix plus eigenvector back-substitution.
///
/// Returns (re(values), im(values), eigenvector columns of the original
/// matrix packed real/imag in the Jama convention).
#[allow(clippy::needless_range_loop)]
fn hqr2(mut h: DenseMatrix, mut v: DenseMatrix) -> Result<(Vec<f64>, Vec<f64>, DenseMatrix)> {
    let nn = h.rows();
    let mut d = vec![0.0; nn];
    let mut e = vec![0.0; nn];
    if nn == 0 {
        return Ok((d, e, v));
    }
    let high = nn - 1;
    let mut exshift = 0.0;
    #[allow(unused_assignments)]
    let (mut p, mut q, mut r, mut s, mut z): (f64, f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut w, mut x, mut y): (f64, f64, f64);

    let mut norm = 0.0;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += h[(i, j)].abs();
        }
    }

    let max_sweeps = 30 * nn;
    let mut total_sweeps = 0usize;
    let mut en = high as isize;
    let mut iter = 0;
    while en >= 0 {
        let n = en as usize;
        let mut l = n;
        while l > 0 {
            s = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[(l, l - 1)].abs() < EPS * s {
                break;
            }
            l -= 1;
        }

        if l == n {
            // One real root.
            h[(n, n)] += exshift;
            d[n] = h[(n, n)];
            e[n] = 0.0;
            en -= 1;
            iter = 0;
        } else if l == n - 1 {
            // A 2x2 block: real pair or complex pair.
            w = h[(n, n - 1)] * h[(n - 1, n)];
            p = (h[(n - 1, n - 1)] - h[(n, n)]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            h[(n, n)] += exshift;
            h[(n - 1, n - 1)] += exshift;
            x = h[(n, n)];
            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                d[n - 1] = x + z;
                d[n] = d[n - 1];
                if z != 0.0 {
                    d[n] = x - w / z;
                }
                e[n - 1] = 0.0;
                e[n] = 0.0;
                x = h[(n, n - 1)];
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = (p * p + q * q).sqrt();
                p /= r;
                q /= r;
                for j in n - 1..nn {
                    z = h[(n - 1, j)];
                    h[(n - 1, j)] = q * z + p * h[(n, j)];
                    h[(n, j)] = q * h[(n, j)] - p * z;
                }
                for i in 0..=n {
                    z = h[(i, n - 1)];
                    h[(i, n - 1)] = q * z + p * h[(i, n)];
                    h[(i, n)] = q * h[(i, n)] - p * z;
                }
                for i in 0..=high {
                    z = v[(i, n - 1)];
                    v[(i, n - 1)] = q * z + p * v[(i, n)];
                    v[(i, n)] = q * v[(i, n)] - p * z;
                }
            } else {
                d[n - 1] = x + p;
                d[n] = x + p;
                e[n - 1] = z;
                e[n] = -z;
            }
            en -= 2;
            iter = 0;
        } else {
            // Form shift and run one double QR sweep.
            x = h[(n, n)];
            y = 0.0;
            w = 0.0;
            if l < n {
                y = h[(n - 1, n - 1)];
                w = h[(n, n - 1)] * h[(n - 1, n)];
            }
            if iter == 10 {
                exshift += x;
                for i in 0..=n {
                    h[(i, i)] -= x;
                }
                s = h[(n, n - 1)].abs() + h[(n - 1, n - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 20 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in 0..=n {
                        h[(i, i)] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = 0.964;
                    w = 0.964;
                }
            }
            iter += 1;
            total_sweeps += 1;
            if total_sweeps > max_sweeps {
                return Err(Error::NoConvergence(max_sweeps));
            }

            let mut m = n - 2;
            loop {
                z = h[(m, m)];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[(m + 1, m)] + h[(m, m + 1)];
                q = h[(m + 1, m + 1)] - z - r - s;
                r = h[(m + 2, m + 1)];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[(m, m - 1)].abs() * (q.abs() + r.abs())
                    < EPS
                        * (p.abs() * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs()))
                {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=n {
                h[(i, i - 2)] = 0.0;
                if i > m + 2 {
                    h[(i, i - 3)] = 0.0;
                }
            }

            for k in m..n {
                let notlast = k != n - 1;
                if k != m {
                    p = h[(k, k - 1)];
                    q = h[(k + 1, k - 1)];
                    r = if notlast { h[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        h[(k, k - 1)] = -s * x;
                    } else if l != m {
                        h[(k, k - 1)] = -h[(k, k - 1)];
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for j in k..nn {
                        p = h[(k, j)] + q * h[(k + 1, j)];
                        if notlast {
                            p += r * h[(k + 2, j)];
                            h[(k + 2, j)] -= p * z;
                        }
                        h[(k, j)] -= p * x;
                        h[(k + 1, j)] -= p * y;
                    }
                    for i in 0..=n.min(k + 3) {
                        p = x * h[(i, k)] + y * h[(i, k + 1)];
                        if notlast {
                            p += z * h[(i, k + 2)];
                            h[(i, k + 2)] -= p * r;
                        }
                        h[(i, k)] -= p;
                        h[(i, k + 1)] -= p * q;
                    }
                    for i in 0..=high {
                        p = x * v[(i, k)] + y * v[(i, k + 1)];
                        if notlast {
                            p += z * v[(i, k + 2)];
                            v[(i, k + 2)] -= p * r;
                        }
                        v[(i, k)] -= p;
                        v[(i, k + 1)] -= p * q;
                    }
                }
            }
        }
    }

    if norm == 0.0 {
        return Ok((d, e, v));
    }

    // Back substitution on the quasi-triangular factor.
    for nrev in (0..nn).rev() {
        let n = nrev;
        p = d[n];
        q = e[n];
        if q == 0.0 {
            let mut l = n;
            h[(n, n)] = 1.0;
            for i in (0..n).rev() {
                w = h[(i, i)] - p;
                r = 0.0;
                for j in l..=n {
                    r += h[(i, j)] * h[(j, n)];
                }
                if e[i] < 0.0 {
                    z = w;
                    s = r;
                } else {
                    l = i;
                    if e[i] == 0.0 {
                        h[(i, n)] = if w != 0.0 { -r / w } else { -r / (EPS * norm) };
                    } else {
                        x = h[(i, i + 1)];
                        y = h[(i + 1, i)];
                        q = (d[i] - p) * (d[i] - p) + e[i] * e[i];
                        let t = (x * s - z * r) / q;
                        h[(i, n)] = t;
                        h[(i + 1, n)] = if x.abs() > z.abs() {
                            (-r - w * t) / x
                        } else {
                            (-s - y * t) / z
                        };
                    }
                    let t = h[(i, n)].abs();
                    if (EPS * t) * t > 1.0 {
                        for j in i..=n {
                            h[(j, n)] /= t;
                        }
                    }
                }
            }
        } else if q < 0.0 {
            let mut l = n - 1;
            if h[(n, n - 1)].abs() > h[(n - 1, n)].abs() {
                h[(n - 1, n - 1)] = q / h[(n, n - 1)];
                h[(n - 1, n)] = -(h[(n, n)] - p) / h[(n, n - 1)];
            } else {
                let (cr, ci) = cdiv(0.0, -h[(n - 1, n)], h[(n - 1, n - 1)] - p, q);
                h[(n - 1, n - 1)] = cr;
                h[(n - 1, n)] = ci;
            }
            h[(n, n - 1)] = 0.0;
            h[(n, n)] = 1.0;
            if n >= 2 {
                for i in (0..=n - 2).rev() {
                    let mut ra = 0.0;
                    let mut sa = 0.0;
                    for j in l..=n {
                        ra += h[(i, j)] * h[(j, n - 1)];
                        sa += h[(i, j)] * h[(j, n)];
                    }
                    w = h[(i, i)] - p;
                    if e[i] < 0.0 {
                        z = w;
                        r = ra;
                        s = sa;
                    } else {
                        l = i;
                        if e[i] == 0.0 {
                            let (cr, ci) = cdiv(-ra, -sa, w, q);
                            h[(i, n - 1)] = cr;
                            h[(i, n)] = ci;
                        } else {
                            x = h[(i, i + 1)];
                            y = h[(i + 1, i)];
                            let mut vr = (d[i] - p) * (d[i] - p) + e[i] * e[i] - q * q;
                            let vi = (d[i] - p) * 2.0 * q;
                            if vr == 0.0 && vi == 0.0 {
                                vr = EPS * norm * (w.abs() + q.abs() + x.abs() + y.abs() + z.abs());
                            }
                            let (cr, ci) =
                                cdiv(x * r - z * ra + q * sa, x * s - z * sa - q * ra, vr, vi);
                            h[(i, n - 1)] = cr;
                            h[(i, n)] = ci;
                            if x.abs() > z.abs() + q.abs() {
                                h[(i + 1, n - 1)] = (-ra - w * h[(i, n - 1)] + q * h[(i, n)]) / x;
                                h[(i + 1, n)] = (-sa - w * h[(i, n)] - q * h[(i, n - 1)]) / x;
                            } else {
                                let (cr, ci) =
                                    cdiv(-r - y * h[(i, n - 1)], -s - y * h[(i, n)], z, q);
                                h[(i + 1, n - 1)] = cr;
                                h[(i + 1, n)] = ci;
                            }
                        }
                        let t = h[(i, n - 1)].abs().max(h[(i, n)].abs());
                        if (EPS * t) * t > 1.0 {
                            for j in i..=n {
                                h[(j, n - 1)] /= t;
                                h[(j, n)] /= t;
                            }
                        }
                    }
                }
            }
        }
    }

    // Transform the triangular-factor vectors back to the original basis.
    for j in (0..nn).rev() {
        for i in 0..=high {
            let mut acc = 0.0;
            for k in 0..=j.min(high) {
                acc += v[(i, k)] * h[(k, j)];
            }
            v[(i, j)] = acc;
        }
    }

    Ok((d, e, v))
}

fn cdiv(xr: f64, xi: f64, yr: f64, yi: f64) -> (f64, f64) {
    if yr.abs() > yi.abs() {
        let r = yi / yr;
        let dd = yr + r * yi;
        ((xr + r * xi) / dd, (xi - r * xr) / dd)
    } else {
        let r = yr / yi;
        let dd = yi + r * yr;
        ((r * xr + xi) / dd, (r * xi - xr) / dd)
    }
}

/// Extract complex pairs from the packed real Schur output, normalize, polish
/// weak pairs by shifted inverse iteration, and flag conjugate partners.
fn assemble(a: &DenseMatrix, d: &[f64], e: &[f64], v: &DenseMatrix) -> EigenDecomp {
    let n = d.len();
    let mut values: Vec<Complex64> = Vec::with_capacity(n);
    let mut vectors: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    let mut conj_pair: Vec<Option<usize>> = vec![None; n];
    let mut j = 0;
    while j < n {
        if e[j] == 0.0 {
            values.push(Complex64::new(d[j], 0.0));
            vectors.push(v.col(j).iter().map(|&x| Complex64::new(x, 0.0)).collect());
            j += 1;
        } else {
            let re = v.col(j);
            let im = v.col(j + 1);
            values.push(Complex64::new(d[j], e[j]));
            vectors.push(
                re.iter()
                    .zip(&im)
                    .map(|(&r, &i)| Complex64::new(r, i))
                    .collect(),
            );
            values.push(Complex64::new(d[j + 1], e[j + 1]));
            vectors.push(
                re.iter()
                    .zip(&im)
                    .map(|(&r, &i)| Complex64::new(r, -i))
                    .collect(),
            );
            conj_pair[j] = Some(j + 1);
            conj_pair[j + 1] = Some(j);
            j += 2;
        }
    }

    let anorm = a.norm_fro().max(1e-300);
    for idx in 0..values.len() {
        normalize(&mut vectors[idx]);
        let res = eig_residual(a, values[idx], &vectors[idx]);
        if res > 1e-11 * anorm {
            if let Some(better) = inverse_iteration(a, values[idx], &vectors[idx]) {
                if eig_residual(a, values[idx], &better) < res {
                    vectors[idx] = better;
                }
            }
        }
    }

    EigenDecomp {
        values,
        vectors,
        conj_pair,
    }
}

fn normalize(v: &mut [Complex64]) {
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        for c in v.iter_mut() {
            *c /= norm;
        }
    }
}

pub fn eig_residual(a: &DenseMatrix, lambda: Complex64, w: &[Complex64]) -> f64 {
    let n = a.rows();
    let mut res = 0.0;
    for i in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..n {
            acc += a[(i, k)] * w[k];
        }
        acc -= lambda * w[i];
        res += acc.norm_sqr();
    }
    let wn = w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    res.sqrt() / wn.max(1e-300)
}

/// One step of shifted inverse iteration in complex arithmetic.
fn inverse_iteration(
    a: &DenseMatrix,
    lambda: Complex64,
    w: &[Complex64],
) -> Option<Vec<Complex64>> {
    let n = a.rows();
    let shift = lambda + Complex64::new(1e-12 * a.norm_fro().max(1.0), 0.0);
    let mut m: Vec<Complex64> = Vec::with_capacity(n * n);
    for i in 0..n {
        for k in 0..n {
            let mut val = Complex64::new(a[(i, k)], 0.0);
            if i == k {
                val -= shift;
            }
            m.push(val);
        }
    }
    let mut x = w.to_vec();
    for _ in 0..2 {
        x = complex_solve(&mut m.clone(), n, &x)?;
        normalize(&mut x);
    }
    Some(x)
}

/// Gaussian elimination with partial pivoting on a complex system.
fn complex_solve(m: &mut [Complex64], n: usize, b: &[Complex64]) -> Option<Vec<Complex64>> {
    let mut x = b.to_vec();
    let idx = |i: usize, j: usize| i * n + j;
    for col in 0..n {
        let mut p = col;
        let mut best = m[idx(col, col)].norm();
        for r in col + 1..n {
            let v = m[idx(r, col)].norm();
            if v > best {
                best = v;
                p = r;
            }
        }
        if best == 0.0 {
            return None;
        }
        if p != col {
            for j in 0..n {
                m.swap(idx(col, j), idx(p, j));
            }
            x.swap(col, p);
        }
        let dpiv = m[idx(col, col)];
        for r in col + 1..n {
            let f = m[idx(r, col)] / dpiv;
            if f.norm() == 0.0 {
                continue;
            }
            for j in col + 1..n {
                let v = m[idx(col, j)];
                m[idx(r, j)] -= f * v;
            }
            let xc = x[col];
            x[r] -= f * xc;
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s -= m[idx(i, j)] * x[j];
        }
        x[i] = s / m[idx(i, i)];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_matrix_eigenpairs() {
        let h = DenseMatrix::from_rows(3, 3, &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0]);
        let dec = hess_eig(&h).unwrap();
        let mut vals: Vec<f64> = dec.values.iter().map(|v| v.re).collect();
        vals.sort_by(f64::total_cmp);
        assert!((vals[0] - 1.0).abs() < 1e-14);
        assert!((vals[1] - 2.0).abs() < 1e-14);
        assert!((vals[2] - 3.0).abs() < 1e-14);
        for (val, vec) in dec.values.iter().zip(&dec.vectors) {
            assert!(eig_residual(&h, *val, vec) < 1e-12);
            // Axis vectors up to sign.
            let big: Vec<f64> = vec.iter().map(|c| c.norm()).collect();
            assert!((big.iter().cloned().fold(0.0, f64::max) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_two_by_two() {
        let h = DenseMatrix::from_rows(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let dec = hess_eig(&h).unwrap();
        let mut vals: Vec<f64> = dec.values.iter().map(|v| v.re).collect();
        vals.sort_by(f64::total_cmp);
        assert!((vals[0] + 1.0).abs() < 1e-14);
        assert!((vals[1] - 1.0).abs() < 1e-14);
    }

    /// Roots of the characteristic cubic, found by the trigonometric formula,
    /// as an oracle for a random 3x3 Hessenberg matrix.
    fn cubic_eigen_oracle(h: &DenseMatrix) -> Vec<Complex64> {
        // det(H - x I) = -x^3 + c2 x^2 + c1 x + c0 written as x^3 + p x + q
        // after the depressed-cubic shift.
        let a11 = h[(0, 0)];
        let a12 = h[(0, 1)];
        let a13 = h[(0, 2)];
        let a21 = h[(1, 0)];
        let a22 = h[(1, 1)];
        let a23 = h[(1, 2)];
        let a32 = h[(2, 1)];
        let a33 = h[(2, 2)];
        let tr = a11 + a22 + a33;
        let sum2 = (a11 * a22 - a12 * a21) + (a11 * a33) + (a22 * a33 - a23 * a32);
        let det = a11 * (a22 * a33 - a23 * a32) - a12 * (a21 * a33) + a13 * (a21 * a32);
        // x^3 - tr x^2 + sum2 x - det = 0; shift x = y + tr/3.
        let sh = tr / 3.0;
        let p = sum2 - tr * tr / 3.0;
        let q = -det + sum2 * sh - tr * sh * sh + sh * sh * sh + p * 0.0;
        // Evaluate the depressed cubic coefficients directly for robustness.
        let q = {
            let _ = q;
            let f = |x: f64| x * x * x - tr * x * x + sum2 * x - det;
            f(sh)
        };
        let disc = -(4.0 * p * p * p + 27.0 * q * q);
        if disc >= 0.0 {
            // Three real roots via the trigonometric method.
            let m = 2.0 * (-p / 3.0).sqrt();
            let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
            let theta = arg.acos() / 3.0;
            (0..3)
                .map(|k| {
                    let y = m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos();
                    Complex64::new(y + sh, 0.0)
                })
                .collect()
        } else {
            // One real root by Cardano, complex pair by deflation.
            let half_q = q / 2.0;
            let rad = (half_q * half_q + p * p * p / 27.0).sqrt();
            let u = (-half_q + rad).cbrt();
            let v = (-half_q - rad).cbrt();
            let y1 = u + v;
            let x1 = y1 + sh;
            // Remaining quadratic from Vieta: x^2 + (x1 - tr) x + det / x1.
            let b = x1 - tr;
            let c = det / x1;
            let disc2 = b * b - 4.0 * c;
            let re = -b / 2.0;
            let im = (-disc2).sqrt() / 2.0;
            vec![
                Complex64::new(x1, 0.0),
                Complex64::new(re, im),
                Complex64::new(re, -im),
            ]
        }
    }

    #[test]
    fn random_hessenberg_matches_cubic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..30 {
            let mut h = DenseMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
            h[(2, 0)] = 0.0;
            let dec = hess_eig(&h).unwrap();
            let mut want = cubic_eigen_oracle(&h);
            let mut got = dec.values.clone();
            let key = |c: &Complex64| (c.re, c.im);
            want.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
            got.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
            for (g, w) in got.iter().zip(&want) {
                assert!(
                    (g - w).norm() < 1e-8 * (1.0 + w.norm()),
                    "trial {trial}: got {g}, want {w}"
                );
            }
        }
    }

    #[test]
    fn residuals_within_contract_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [4usize, 8, 16, 31] {
            let a = DenseMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let dec = dense_eig(&a).unwrap();
            assert_eq!(dec.order(), n);
            for (val, vec) in dec.values.iter().zip(&dec.vectors) {
                let res = eig_residual(&a, *val, vec);
                assert!(res <= 1e-10 * a.norm_fro(), "n={n} res={res:e}");
            }
            // Conjugate pairing is symmetric and value-consistent.
            for (i, pair) in dec.conj_pair.iter().enumerate() {
                if let Some(j) = pair {
                    assert_eq!(dec.conj_pair[*j], Some(i));
                    assert!((dec.values[i].conj() - dec.values[*j]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_non_hessenberg() {
        let mut a = DenseMatrix::zeros(3, 3);
        a[(2, 0)] = 1.0;
        a[(0, 0)] = 1.0;
        assert!(matches!(hess_eig(&a), Err(Error::NotHessenberg(_))));
    }

    #[test]
    fn defective_jordan_block_converges() {
        // Jordan block: defective, eigenvalue 2 thrice.
        let h = DenseMatrix::from_rows(3, 3, &[2.0, 1.0, 0.0, 0.0, 2.0, 1.0, 0.0, 0.0, 2.0]);
        let dec = hess_eig(&h).unwrap();
        for v in &dec.values {
            assert!((v - Complex64::new(2.0, 0.0)).norm() < 1e-5);
        }
    }
}
