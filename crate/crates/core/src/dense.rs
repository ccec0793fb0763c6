//! Dense kernels for the small projected problems: an LU solver, the matrix
//! exponential via scaling-and-squaring, and phi-functions of small matrices.
//!
//! Everything here targets matrices of moderate order (k up to a few hundred);
//! storage is row-major `f64`.

use crate::error::{Error, Result};

/// Absolute floor used when forming relative tolerances, so that zero-norm
/// inputs do not divide by zero.
pub const NORM_FLOOR: f64 = 1e-300;

/// Coefficients of the degree-13 diagonal Pade approximant of exp.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Scaling threshold for the degree-13 Pade approximant.
const THETA13: f64 = 5.371920351148152;

/// Small dense real matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Build from a flat row-major slice.
    pub fn from_rows(rows: usize, cols: usize, entries: &[f64]) -> Self {
        assert_eq!(rows * cols, entries.len(), "entry count must match shape");
        assert!(
            entries.iter().all(|v| v.is_finite()),
            "entries must be finite"
        );
        Self {
            rows,
            cols,
            data: entries.to_vec(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Stack column vectors (all of equal length) into a matrix.
    pub fn from_columns(cols: &[Vec<f64>]) -> Self {
        let nrows = cols.first().map_or(0, Vec::len);
        let mut m = Self::zeros(nrows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            assert_eq!(c.len(), nrows);
            for i in 0..nrows {
                m[(i, j)] = c[i];
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[f64]) {
        assert_eq!(v.len(), self.rows);
        for i in 0..self.rows {
            self[(i, j)] = v[i];
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == 0.0 {
                    continue;
                }
                let brow = other.row(l);
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// y = A^T x without forming the transpose.
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len());
        let mut y = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for (yj, a) in y.iter_mut().zip(self.row(i)) {
                *yj += a * xi;
            }
        }
        y
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut m = self.clone();
        m.scale(s);
        m
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius mass strictly below the first subdiagonal.
    pub fn below_hessenberg_mass(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols.min(i.saturating_sub(1)) {
                s += self[(i, j)] * self[(i, j)];
            }
        }
        s.sqrt()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Leading square block of order `n`.
    pub fn leading(&self, n: usize) -> Self {
        Self::from_fn(n, n, |i, j| self[(i, j)])
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization with partial pivoting.
pub struct LuFactors {
    lu: DenseMatrix,
    piv: Vec<usize>,
}

impl LuFactors {
    pub fn factor(m: &DenseMatrix) -> Result<Self> {
        assert!(m.is_square(), "LU factorization needs a square matrix");
        let n = m.rows();
        let tol = 1e-14 * m.norm_fro().max(NORM_FLOOR);
        let mut lu = m.clone();
        let mut piv: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let mut p = col;
            let mut best = lu[(col, col)].abs();
            for r in col + 1..n {
                let v = lu[(r, col)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best <= tol {
                return Err(Error::SingularMatrix {
                    step: col,
                    pivot: best,
                });
            }
            if p != col {
                for j in 0..n {
                    let t = lu[(col, j)];
                    lu[(col, j)] = lu[(p, j)];
                    lu[(p, j)] = t;
                }
                piv.swap(col, p);
            }
            let d = lu[(col, col)];
            for r in col + 1..n {
                let f = lu[(r, col)] / d;
                lu[(r, col)] = f;
                if f == 0.0 {
                    continue;
                }
                for j in col + 1..n {
                    let v = lu[(col, j)];
                    lu[(r, j)] -= f * v;
                }
            }
        }
        Ok(Self { lu, piv })
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows();
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }

    pub fn solve_mat(&self, b: &DenseMatrix) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            out.set_col(j, &self.solve_vec(&b.col(j)));
        }
        out
    }
}

/// Solve M X = B by LU with partial pivoting.
pub fn lu_solve(m: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(LuFactors::factor(m)?.solve_mat(b))
}

/// Solve M x = b for a single right-hand side.
pub fn lu_solve_vec(m: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    Ok(LuFactors::factor(m)?.solve_vec(b))
}

/// Matrix exponential by scaling-and-squaring with the degree-13 diagonal
/// Pade approximant. The squaring count comes from the 1-norm; inputs with
/// 1-norm beyond 1e8 are refused rather than silently losing accuracy.
pub fn expm(m: &DenseMatrix) -> Result<DenseMatrix> {
    assert!(m.is_square(), "expm needs a square matrix");
    let norm = m.norm_one();
    if !norm.is_finite() || norm > 1e8 {
        return Err(Error::Overflow(norm));
    }
    let n = m.rows();
    if n == 0 {
        return Ok(DenseMatrix::zeros(0, 0));
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as u32
    } else {
        0
    };
    let a = m.scaled(0.5f64.powi(s as i32));

    let a2 = a.matmul(&a);
    let a4 = a2.matmul(&a2);
    let a6 = a2.matmul(&a4);
    let eye = DenseMatrix::identity(n);

    // U = A [A6 (b13 A6 + b11 A4 + b9 A2) + b7 A6 + b5 A4 + b3 A2 + b1 I]
    let mut inner = a6.scaled(PADE13[13]);
    inner.add_assign(&a4.scaled(PADE13[11]));
    inner.add_assign(&a2.scaled(PADE13[9]));
    let mut u = a6.matmul(&inner);
    u.add_assign(&a6.scaled(PADE13[7]));
    u.add_assign(&a4.scaled(PADE13[5]));
    u.add_assign(&a2.scaled(PADE13[3]));
    u.add_assign(&eye.scaled(PADE13[1]));
    let u = a.matmul(&u);

    // V = A6 (b12 A6 + b10 A4 + b8 A2) + b6 A6 + b4 A4 + b2 A2 + b0 I
    let mut inner = a6.scaled(PADE13[12]);
    inner.add_assign(&a4.scaled(PADE13[10]));
    inner.add_assign(&a2.scaled(PADE13[8]));
    let mut v = a6.matmul(&inner);
    v.add_assign(&a6.scaled(PADE13[6]));
    v.add_assign(&a4.scaled(PADE13[4]));
    v.add_assign(&a2.scaled(PADE13[2]));
    v.add_assign(&eye.scaled(PADE13[0]));

    // exp(A) ~ (V - U)^{-1} (V + U)
    let mut e = lu_solve(&v.sub(&u), &v.add(&u)).map_err(|_| Error::Overflow(norm))?;
    for _ in 0..s {
        e = e.matmul(&e);
    }
    Ok(e)
}

/// Evaluate u_l = phi_l(M) b for l = 0..=s with a single exponential of the
/// augmented matrix [[M, b e1^T], [0, J_s]], J_s the nilpotent upper shift.
pub fn phi_col(m: &DenseMatrix, b: &[f64], s: usize) -> Result<Vec<Vec<f64>>> {
    assert!(m.is_square());
    let k = m.rows();
    assert_eq!(b.len(), k);

    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if s == 0 {
        let e = expm(m)?;
        return Ok(vec![e.matvec(b)]);
    }
    // Normalizing b keeps the augmented 1-norm comparable to ||M||_1.
    let eta = if bnorm > 0.0 { bnorm } else { 1.0 };
    let dim = k + s;
    let mut w = DenseMatrix::zeros(dim, dim);
    for i in 0..k {
        for j in 0..k {
            w[(i, j)] = m[(i, j)];
        }
        w[(i, k)] = b[i] / eta;
    }
    for j in k..dim - 1 {
        w[(j, j + 1)] = 1.0;
    }
    let e = expm(&w)?;
    let mut out = Vec::with_capacity(s + 1);
    // phi_0(M) b from the top-left exponential block.
    let mut u0 = vec![0.0; k];
    for i in 0..k {
        let mut acc = 0.0;
        for j in 0..k {
            acc += e[(i, j)] * b[j];
        }
        u0[i] = acc;
    }
    out.push(u0);
    for l in 1..=s {
        out.push((0..k).map(|i| eta * e[(i, k + l - 1)]).collect());
    }
    Ok(out)
}

/// Truncated-series evaluation of phi_l(M) b, the independent reference for
/// `phi_col`. Intended for arguments with small 1-norm (converges rapidly for
/// ||M||_1 <= 4); terms stop once they fall below 1e-18 of the accumulated sum.
pub fn phi_taylor(m: &DenseMatrix, b: &[f64], ell: usize) -> Vec<f64> {
    assert!(m.is_square());
    let k = m.rows();
    assert_eq!(b.len(), k);
    let fact_ell = factorial(ell);
    let mut term: Vec<f64> = b.iter().map(|v| v / fact_ell).collect();
    let mut acc = term.clone();
    for mth in 1..500 {
        term = m.matvec(&term);
        let denom = (mth + ell) as f64;
        for v in &mut term {
            *v /= denom;
        }
        for (a, t) in acc.iter_mut().zip(&term) {
            *a += t;
        }
        let tn = term.iter().map(|v| v * v).sum::<f64>().sqrt();
        let an = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if tn < 1e-18 * an.max(NORM_FLOOR) {
            break;
        }
    }
    acc
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

pub fn vec_norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
