//! Sparse operator abstraction and CSR kernels.

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::par;
use std::sync::atomic::{AtomicUsize, Ordering};

/// An apply-only linear operator. Implementations must be reentrant; solver
/// drivers own any operation counters.
pub trait LinearOp: Sync {
    fn dim(&self) -> usize;

    /// y = A x. `x` and `y` have length `dim()`.
    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// An estimate of the operator 1-norm, used for breakdown scaling.
    fn one_norm_est(&self) -> f64;

    fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply(x, &mut y);
        y
    }
}

/// Sparse matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrOperator {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    pub name: Option<String>,
}

impl CsrOperator {
    /// Build from coordinate triplets. Duplicate entries are summed; rows are
    /// sorted by column index; explicit NaN/Inf entries are rejected.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut cleaned: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: i.max(j) + 1,
                });
            }
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("non-finite entry at ({i}, {j})"),
                });
            }
            cleaned.push((i, j, v));
        }
        cleaned.sort_unstable_by_key(|&(i, j, _)| (i, j));

        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(cleaned.len());
        for (i, j, v) in cleaned {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => merged.push((i, j, v)),
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        for &(i, _, _) in &merged {
            row_ptr[i + 1] += 1;
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        let col_idx = merged.iter().map(|t| t.1).collect();
        let values = merged.iter().map(|t| t.2).collect();
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
            name: None,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterate the (col, value) pairs of one row.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    /// Reference sequential kernel: per-row left-to-right accumulation in
    /// stored order. The parallel `apply` computes each output element with
    /// the identical per-row order, so results are bitwise equal.
    pub fn apply_seq(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for (j, v) in self.row(i) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
    }

    /// Exact 1-norm (maximum absolute column sum).
    pub fn one_norm(&self) -> f64 {
        let mut col_sums = vec![0.0f64; self.n];
        for (&j, &v) in self.col_idx.iter().zip(&self.values) {
            col_sums[j] += v.abs();
        }
        col_sums.into_iter().fold(0.0, f64::max)
    }

    /// Half bandwidths (lower, upper).
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0usize;
        let mut ku = 0usize;
        for i in 0..self.n {
            for (j, _) in self.row(i) {
                if j < i {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        (kl, ku)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Structural invariants: monotone offsets, in-range strictly increasing
    /// columns per row, finite values.
    pub fn validate(&self) -> Result<()> {
        if self.row_ptr.len() != self.n + 1 {
            return Err(Error::DimensionMismatch {
                expected: self.n + 1,
                got: self.row_ptr.len(),
            });
        }
        for r in 0..self.n {
            if self.row_ptr[r + 1] < self.row_ptr[r] {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("offsets decrease at row {r}"),
                });
            }
            let mut last: Option<usize> = None;
            for (j, v) in self.row(r) {
                if j >= self.n {
                    return Err(Error::DimensionMismatch {
                        expected: self.n,
                        got: j + 1,
                    });
                }
                if let Some(l) = last {
                    if j <= l {
                        return Err(Error::Parse {
                            line: 0,
                            msg: format!("columns not strictly increasing in row {r}"),
                        });
                    }
                }
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line: 0,
                        msg: format!("stored NaN/Inf in row {r}"),
                    });
                }
                last = Some(j);
            }
        }
        Ok(())
    }
}

/// Below this row count the fork-join overhead outweighs the row-parallel
/// speedup, so `apply` falls through to the sequential kernel.
const PAR_ROWS_MIN: usize = 1 << 16;

impl LinearOp for CsrOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        if self.n < PAR_ROWS_MIN {
            return self.apply_seq(x, y);
        }
        par::for_each_row(y, |i, out| {
            let mut acc = 0.0;
            for (j, v) in self.row(i) {
                acc += v * x[j];
            }
            *out = acc;
        });
    }

    fn one_norm_est(&self) -> f64 {
        self.one_norm()
    }
}

/// Wraps an operator with an atomic application tally. The counter belongs to
/// the solver run, not to the matrix.
pub struct CountingOp<'a> {
    inner: &'a dyn LinearOp,
    count: AtomicUsize,
}

impl<'a> CountingOp<'a> {
    pub fn new(inner: &'a dyn LinearOp) -> Self {
        Self {
            inner,
            count: AtomicUsize::new(0),
        }
    }

    pub fn count(&self) -> usize {
        self.count.load(Ordering::Relaxed)
    }
}

impl LinearOp for CountingOp<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.apply(x, y);
    }

    fn one_norm_est(&self) -> f64 {
        self.inner.one_norm_est()
    }
}
