//! The k-step Arnoldi process, its shift-and-invert variant, and the
//! thick-restart basis compression.

use crate::dense::{axpy, dot, lu_solve_vec, vec_norm2, DenseMatrix};
use crate::error::{Error, Result};
use crate::shifted::{ShiftInvertOp, ShiftedSolver};
use crate::sparse::LinearOp;

/// Relative breakdown threshold against the operator 1-norm estimate.
const BREAKDOWN_REL: f64 = 1e-12;

/// An Arnoldi-like decomposition A V_k = V_{k+1} Hbar_k.
///
/// `basis` holds k+1 orthonormal columns of length n; `hbar` is the extended
/// (k+1) x k projection matrix. On a fresh start `hbar` is Hessenberg; after
/// a thick restart its leading (q+1) x q block is full.
#[derive(Debug, Clone)]
pub struct ArnoldiDecomp {
    pub basis: Vec<Vec<f64>>,
    pub hbar: DenseMatrix,
    pub steps: usize,
    pub beta: f64,
    pub breakdown: Option<usize>,
}

impl ArnoldiDecomp {
    /// Start from a single vector; `beta` records its norm.
    pub fn new(v: &[f64]) -> Self {
        let beta = vec_norm2(v);
        assert!(beta > 0.0, "starting vector must be nonzero");
        let v1 = v.iter().map(|x| x / beta).collect();
        Self {
            basis: vec![v1],
            hbar: DenseMatrix::zeros(1, 0),
            steps: 0,
            beta,
            breakdown: None,
        }
    }

    /// Warm start from `m+1` orthonormal columns and an (m+1) x m projection
    /// satisfying A V_m = V_{m+1} Hbar_m, as produced by a thick restart.
    pub fn from_partial(basis: Vec<Vec<f64>>, hbar: DenseMatrix, beta: f64) -> Self {
        let m = basis.len() - 1;
        assert_eq!(hbar.rows(), m + 1);
        assert_eq!(hbar.cols(), m);
        Self {
            basis,
            hbar,
            steps: m,
            beta,
            breakdown: None,
        }
    }

    pub fn k(&self) -> usize {
        self.steps
    }

    /// The square projected matrix H_k (leading k x k block of Hbar).
    pub fn h_square(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.steps, self.steps, |i, j| self.hbar[(i, j)])
    }

    /// Subdiagonal coupling h_{k+1,k}; zero after breakdown.
    pub fn h_sub(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.hbar[(self.steps, self.steps - 1)]
        }
    }

    /// y = V_k u for a coefficient vector of length k.
    pub fn expand(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.steps);
        let n = self.basis[0].len();
        let mut y = vec![0.0; n];
        for (col, &c) in self.basis.iter().zip(u) {
            axpy(&mut y, c, col);
        }
        y
    }

    /// y = V_{k+1} c for a coefficient vector of length k+1.
    pub fn expand_extended(&self, c: &[f64]) -> Vec<f64> {
        assert_eq!(c.len(), self.steps + 1);
        let n = self.basis[0].len();
        let mut y = vec![0.0; n];
        for (col, &ci) in self.basis.iter().zip(c) {
            axpy(&mut y, ci, col);
        }
        y
    }

    /// Frobenius departure from orthonormality of the stored basis.
    pub fn ortho_defect(&self) -> f64 {
        let m = self.basis.len();
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                let g = dot(&self.basis[i], &self.basis[j]) - if i == j { 1.0 } else { 0.0 };
                s += g * g;
            }
        }
        s.sqrt()
    }
}

/// Extend the decomposition to `target_k` steps with modified Gram-Schmidt
/// plus one unconditional reorthogonalization pass per step. Breakdown
/// (h_{j+1,j} below the relative threshold) is recorded, not an error; the
/// span is then invariant and downstream solves are exact.
pub fn arnoldi_extend(op: &dyn LinearOp, d: &mut ArnoldiDecomp, target_k: usize) {
    let n = op.dim();
    assert!(
        target_k <= n,
        "subspace dimension cannot exceed the operator order"
    );
    let tol = BREAKDOWN_REL * op.one_norm_est().max(1e-300);

    if d.breakdown.is_some() {
        return;
    }
    if d.hbar.cols() < target_k {
        // Grow hbar into a (target_k + 1) x target_k frame.
        let mut grown = DenseMatrix::zeros(target_k + 1, target_k);
        for i in 0..d.hbar.rows() {
            for j in 0..d.hbar.cols() {
                grown[(i, j)] = d.hbar[(i, j)];
            }
        }
        d.hbar = grown;
    }

    while d.steps < target_k {
        let j = d.steps;
        let mut w = op.apply_vec(&d.basis[j]);
        // MGS sweep plus one unconditional second pass; both passes fold
        // their coefficients into the same hbar column.
        for _pass in 0..2 {
            for (i, vi) in d.basis.iter().enumerate() {
                let c = dot(&w, vi);
                if c != 0.0 {
                    axpy(&mut w, -c, vi);
                }
                d.hbar[(i, j)] += c;
            }
        }
        let h_next = vec_norm2(&w);
        d.hbar[(j + 1, j)] = h_next;
        d.steps = j + 1;
        if h_next <= tol {
            d.hbar[(j + 1, j)] = 0.0;
            d.breakdown = Some(j + 1);
            // Truncate the frame to the achieved size.
            let k = d.steps;
            let mut shrunk = DenseMatrix::zeros(k + 1, k);
            for col in 0..k {
                for row in 0..(k + 1).min(d.hbar.rows()) {
                    shrunk[(row, col)] = d.hbar[(row, col)];
                }
            }
            // Last basis vector is unusable; pad with a zero row in spirit:
            // keep basis at k columns and a zero coupling row.
            d.hbar = shrunk;
            d.basis.push(vec![0.0; n]);
            return;
        }
        for v in &mut w {
            *v /= h_next;
        }
        d.basis.push(w);
    }

    // Trim the frame if it was allocated larger than reached.
    if d.hbar.cols() > d.steps {
        let k = d.steps;
        let mut shrunk = DenseMatrix::zeros(k + 1, k);
        for col in 0..k {
            for row in 0..=k {
                shrunk[(row, col)] = d.hbar[(row, col)];
            }
        }
        d.hbar = shrunk;
    }
}

/// Run a fresh k-step Arnoldi process on `op` starting from `v`.
pub fn arnoldi(op: &dyn LinearOp, v: &[f64], k: usize) -> ArnoldiDecomp {
    let mut d = ArnoldiDecomp::new(v);
    arnoldi_extend(op, &mut d, k);
    d
}

/// The k-step Arnoldi process on (I + gamma A)^{-1}, with shifted solves in
/// place of matvecs. NaN output from a failed inner solve is surfaced as a
/// SolveFailure.
pub fn si_arnoldi(solver: &ShiftedSolver<'_>, v: &[f64], k: usize) -> Result<ArnoldiDecomp> {
    let op = ShiftInvertOp::new(solver);
    let d = arnoldi(&op, v, k);
    if d.hbar.data().iter().any(|x| !x.is_finite()) {
        return Err(Error::SolveFailure(
            "shifted solve failed inside Arnoldi".into(),
        ));
    }
    Ok(d)
}

/// Residual direction of the harmonic approximation in basis coordinates,
/// w = [gamma h^2 (I + gamma H)^{-H} e_k ; -h], for a Hessenberg Hbar.
/// The gamma -> 0 limit recovers the plain Arnoldi direction [0; -h].
pub fn residual_direction(hbar: &DenseMatrix, gamma: f64) -> Result<Vec<f64>> {
    let k = hbar.cols();
    assert!(k >= 1);
    let h_sub = hbar[(k, k - 1)];
    let mut w = vec![0.0; k + 1];
    if gamma == 0.0 || h_sub == 0.0 {
        w[k] = -h_sub;
        return Ok(w);
    }
    // Solve (I + gamma H)^T x = e_k.
    let mut shifted_t = DenseMatrix::from_fn(k, k, |i, j| gamma * hbar[(j, i)]);
    for i in 0..k {
        shifted_t[(i, i)] += 1.0;
    }
    let mut ek = vec![0.0; k];
    ek[k - 1] = 1.0;
    let x = lu_solve_vec(&shifted_t, &ek).map_err(|_| Error::SingularShift(gamma))?;
    for i in 0..k {
        w[i] = gamma * h_sub * h_sub * x[i];
    }
    w[k] = -h_sub;
    Ok(w)
}

/// Unit null vector of (Ibar + gamma Hbar)^H, computed from the full QR of
/// (Ibar + gamma Hbar). Valid in every cycle, including restarted ones where
/// Hbar is no longer Hessenberg.
pub fn null_direction(hbar: &DenseMatrix, gamma: f64) -> Result<Vec<f64>> {
    let k = hbar.cols();
    let rows = k + 1;
    // M = Ibar + gamma Hbar, sized (k+1) x k.
    let mut m = DenseMatrix::from_fn(rows, k, |i, j| gamma * hbar[(i, j)]);
    for i in 0..k {
        m[(i, i)] += 1.0;
    }
    // Householder QR; accumulate Q applied to e_{k+1}.
    let mut q = DenseMatrix::identity(rows);
    for col in 0..k {
        let mut x: Vec<f64> = (col..rows).map(|i| m[(i, col)]).collect();
        let alpha = vec_norm2(&x);
        if alpha == 0.0 {
            return Err(Error::SingularShift(gamma));
        }
        let sign = if x[0] >= 0.0 { 1.0 } else { -1.0 };
        x[0] += sign * alpha;
        let vnorm = vec_norm2(&x);
        if vnorm == 0.0 {
            continue;
        }
        for v in &mut x {
            *v /= vnorm;
        }
        // Apply the reflector to M (columns col..) and accumulate into Q.
        for j in col..k {
            let mut c = 0.0;
            for (r, xv) in x.iter().enumerate() {
                c += xv * m[(col + r, j)];
            }
            c *= 2.0;
            for (r, xv) in x.iter().enumerate() {
                m[(col + r, j)] -= c * xv;
            }
        }
        for j in 0..rows {
            let mut c = 0.0;
            for (r, xv) in x.iter().enumerate() {
                c += xv * q[(col + r, j)];
            }
            c *= 2.0;
            for (r, xv) in x.iter().enumerate() {
                q[(col + r, j)] -= c * xv;
            }
        }
    }
    // Null vector of M^T is the last row of the accumulated Q (last column
    // of the full Q factor).
    let w: Vec<f64> = (0..rows).map(|j| q[(k, j)]).collect();
    let norm = vec_norm2(&w);
    if norm == 0.0 {
        return Err(Error::SingularShift(gamma));
    }
    Ok(w.iter().map(|v| v / norm).collect())
}

/// Output of the thick-restart compression.
#[derive(Debug, Clone)]
pub struct RestartBasis {
    /// Orthonormal (k+1) x (q+1) coordinate basis spanning the retained
    /// vectors plus the residual direction.
    pub w_q1: DenseMatrix,
    /// Warm-start decomposition: q+1 basis columns, (q+1) x q projection.
    pub decomp: ArnoldiDecomp,
    /// Retained count after any rank-deficiency drops.
    pub q: usize,
}

/// Compress the decomposition onto `ritz` (k x q, real columns; conjugate
/// pairs already split) plus the residual direction `n_vec` (length k+1).
///
/// The new basis V_{q+1} = V_{k+1} W_{q+1} and projection
/// Hbar_q = W_{q+1}^H Hbar_k W_q seed the next cycle; the (q+1)-th column is
/// the next Arnoldi starting vector.
pub fn compress_restart(
    d: &ArnoldiDecomp,
    ritz: &DenseMatrix,
    n_vec: &[f64],
) -> Result<RestartBasis> {
    let k = d.steps;
    assert_eq!(ritz.rows(), k);
    assert_eq!(n_vec.len(), k + 1);
    let q_in = ritz.cols();
    assert!(q_in < k, "q + 1 must not exceed k");

    // Orthonormalize the ritz columns (k-dimensional), dropping any column
    // whose post-projection norm collapses.
    let mut w_cols: Vec<Vec<f64>> = Vec::with_capacity(q_in + 1);
    for j in 0..q_in {
        let mut col = ritz.col(j);
        for _ in 0..2 {
            for existing in &w_cols {
                let c = dot(&col, existing);
                axpy(&mut col, -c, existing);
            }
        }
        let norm = vec_norm2(&col);
        if norm <= 1e-12 {
            // Dropped column: q shrinks by one.
            continue;
        }
        for v in &mut col {
            *v /= norm;
        }
        w_cols.push(col);
    }
    let q = w_cols.len();
    if q == 0 && q_in > 0 {
        return Err(Error::RankDeficient(0));
    }

    // Extend to (k+1)-vectors with a zero bottom entry, then append the
    // normalized residual direction and orthonormalize it against the rest.
    let mut w_ext: Vec<Vec<f64>> = w_cols
        .iter()
        .map(|c| {
            let mut e = c.clone();
            e.push(0.0);
            e
        })
        .collect();
    let nn = vec_norm2(n_vec);
    if nn == 0.0 {
        return Err(Error::RankDeficient(q));
    }
    let mut last: Vec<f64> = n_vec.iter().map(|v| v / nn).collect();
    for _ in 0..2 {
        for existing in &w_ext {
            let c = dot(&last, existing);
            axpy(&mut last, -c, existing);
        }
    }
    let lnorm = vec_norm2(&last);
    if lnorm <= 1e-12 {
        return Err(Error::RankDeficient(q));
    }
    for v in &mut last {
        *v /= lnorm;
    }
    w_ext.push(last);
    let w_q1 = DenseMatrix::from_columns(&w_ext);

    // Hbar_q^new = W_{q+1}^T Hbar_k W_q  ((q+1) x q).
    let mut hbar_q = DenseMatrix::zeros(q + 1, q);
    for j in 0..q {
        // t = Hbar_k * w_j   (length k+1)
        let wj = &w_cols[j];
        let mut t = vec![0.0; k + 1];
        for (r, tr) in t.iter_mut().enumerate() {
            let mut acc = 0.0;
            for c in 0..k {
                acc += d.hbar[(r, c)] * wj[c];
            }
            *tr = acc;
        }
        for (i, wi) in w_ext.iter().enumerate() {
            hbar_q[(i, j)] = dot(wi, &t);
        }
    }

    // V_{q+1}^new = V_{k+1} W_{q+1}  (n x (q+1)).
    let n = d.basis[0].len();
    let mut new_basis: Vec<Vec<f64>> = Vec::with_capacity(q + 1);
    for wi in &w_ext {
        let mut col = vec![0.0; n];
        for (vb, &c) in d.basis.iter().zip(wi.iter()) {
            axpy(&mut col, c, vb);
        }
        new_basis.push(col);
    }

    Ok(RestartBasis {
        w_q1,
        decomp: ArnoldiDecomp::from_partial(new_basis, hbar_q, d.beta),
        q,
    })
}
