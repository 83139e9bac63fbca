//! Forward-evaluation linear operator abstraction.
//!
//! The central constraint of this crate is that operators may only be usable
//! through forward products `v -> Av`. [`OperatorHandle`] carries an explicit
//! capability flag for the adjoint; baseline solvers that need `A^T` must go
//! through [`OperatorHandle::apply_adjoint`], which fails on forward-only
//! handles. Forward applications are counted per handle and serve as the
//! unit of computational cost.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::RngState;

/// Sparse matrix in compressed sparse row layout.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub m: usize,
    pub d: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from coordinate triplets. Duplicates are summed, column indices
    /// within each row come out strictly increasing.
    pub fn from_triplets(m: usize, d: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        for &(i, j, _) in triplets {
            if i >= m || j >= d {
                return Err(Error::InvalidSpec(format!(
                    "triplet ({i}, {j}) outside {m}x{d}"
                )));
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; m + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        // make row_ptr cumulative; entries were per-row counts shifted by one
        for i in 0..m {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(CsrMatrix { m, d, row_ptr, col_idx, values })
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        for i in 0..self.m {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * v[self.col_idx[k]];
            }
            y[i] = acc;
        }
        y
    }

    fn matvec_t(&self, w: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.d];
        for i in 0..self.m {
            let wi = w[i];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.col_idx[k]] += self.values[k] * wi;
            }
        }
        y
    }
}

/// How a square embedding pads the original operator.
#[derive(Debug, Clone, Copy)]
pub enum Padding {
    /// Underdetermined input: zero rows appended, `[A; 0]`.
    ZeroRows(usize),
    /// Overdetermined input: zero columns appended, `[A 0]`.
    ZeroCols(usize),
}

#[derive(Debug)]
enum Backend {
    Dense { data: Vec<f64> },
    Csr(CsrMatrix),
    CumSum,
    SquareEmbedded { inner: Arc<OperatorHandle>, pad: Padding },
}

/// A linear map from R^d to R^m, applied through forward products only.
///
/// Handles are immutable after construction and safe to share across
/// threads; the application counters are atomics.
#[derive(Debug)]
pub struct OperatorHandle {
    m: usize,
    d: usize,
    backend: Backend,
    adjoint_available: bool,
    applies: AtomicU64,
    adjoint_applies: AtomicU64,
}

impl OperatorHandle {
    /// Dense operator from row-major data of shape `m x d`.
    pub fn dense(m: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != m * d {
            return Err(Error::DimensionMismatch { expected: m * d, got: data.len() });
        }
        Ok(Self::new(m, d, Backend::Dense { data }, true))
    }

    pub fn csr(matrix: CsrMatrix) -> Self {
        let (m, d) = (matrix.m, matrix.d);
        Self::new(m, d, Backend::Csr(matrix), true)
    }

    /// The running-sum operator `(Av)_i = v_1 + ... + v_i`, square by
    /// construction. Applied in O(d), never stored as a triangular matrix.
    pub fn cumsum(d: usize) -> Self {
        Self::new(d, d, Backend::CumSum, true)
    }

    fn new(m: usize, d: usize, backend: Backend, adjoint_available: bool) -> Self {
        OperatorHandle {
            m,
            d,
            backend,
            adjoint_available,
            applies: AtomicU64::new(0),
            adjoint_applies: AtomicU64::new(0),
        }
    }

    /// Strip the adjoint capability, modelling an operator of which only a
    /// forward implementation exists.
    pub fn forward_only(mut self) -> Self {
        self.adjoint_available = false;
        self
    }

    pub fn output_dim(&self) -> usize {
        self.m
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn is_square(&self) -> bool {
        self.m == self.d
    }

    pub fn adjoint_available(&self) -> bool {
        self.adjoint_available
    }

    /// Number of forward applications so far.
    pub fn apply_count(&self) -> u64 {
        self.applies.load(Ordering::Relaxed)
    }

    pub fn adjoint_apply_count(&self) -> u64 {
        self.adjoint_applies.load(Ordering::Relaxed)
    }

    pub fn reset_counters(&self) {
        self.applies.store(0, Ordering::Relaxed);
        self.adjoint_applies.store(0, Ordering::Relaxed);
    }

    /// Forward product `Av`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        self.applies.fetch_add(1, Ordering::Relaxed);
        Ok(self.apply_unchecked(v))
    }

    fn apply_unchecked(&self, v: &[f64]) -> Vec<f64> {
        match &self.backend {
            Backend::Dense { data } => linalg::dense_matvec(data, self.m, self.d, v),
            Backend::Csr(csr) => csr.matvec(v),
            Backend::CumSum => {
                let mut acc = 0.0;
                v.iter()
                    .map(|x| {
                        acc += x;
                        acc
                    })
                    .collect()
            }
            Backend::SquareEmbedded { inner, pad } => match pad {
                Padding::ZeroRows(extra) => {
                    let mut y = inner.apply(v).expect("inner dims fixed at construction");
                    y.extend(std::iter::repeat(0.0).take(*extra));
                    y
                }
                Padding::ZeroCols(_) => inner
                    .apply(&v[..inner.d])
                    .expect("inner dims fixed at construction"),
            },
        }
    }

    /// Adjoint product `A^T w`; only for handles with the capability.
    pub fn apply_adjoint(&self, w: &[f64]) -> Result<Vec<f64>> {
        if !self.adjoint_available {
            return Err(Error::AdjointUnavailable);
        }
        if w.len() != self.m {
            return Err(Error::DimensionMismatch { expected: self.m, got: w.len() });
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        self.adjoint_applies.fetch_add(1, Ordering::Relaxed);
        Ok(match &self.backend {
            Backend::Dense { data } => linalg::dense_matvec_t(data, self.m, self.d, w),
            Backend::Csr(csr) => csr.matvec_t(w),
            Backend::CumSum => {
                // transpose of the lower-triangular all-ones matrix: suffix sums
                let mut acc = 0.0;
                let mut y = vec![0.0; self.d];
                for i in (0..self.d).rev() {
                    acc += w[i];
                    y[i] = acc;
                }
                y
            }
            Backend::SquareEmbedded { inner, pad } => match pad {
                Padding::ZeroRows(_) => inner.apply_adjoint(&w[..inner.m])?,
                Padding::ZeroCols(extra) => {
                    let mut y = inner.apply_adjoint(w)?;
                    y.extend(std::iter::repeat(0.0).take(*extra));
                    y
                }
            },
        })
    }

    /// Materialize the matrix column by column through forward products.
    /// Intended for desk-scale diagnostics only.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut cols = Vec::with_capacity(self.d);
        let mut e = vec![0.0; self.d];
        for j in 0..self.d {
            e[j] = 1.0;
            cols.push(self.apply(&e).expect("basis vector is valid input"));
            e[j] = 0.0;
        }
        let mut data = vec![0.0; self.m * self.d];
        for (j, col) in cols.iter().enumerate() {
            for i in 0..self.m {
                data[i * self.d + j] = col[i];
            }
        }
        data
    }
}

/// Euclidean norms of the columns of the operator, computed through d
/// forward applications of basis vectors.
pub fn column_norms(op: &OperatorHandle) -> Vec<f64> {
    let d = op.input_dim();
    let mut e = vec![0.0; d];
    let mut norms = Vec::with_capacity(d);
    for j in 0..d {
        e[j] = 1.0;
        let col = op.apply(&e).expect("basis vector is valid input");
        norms.push(linalg::norm(&col));
        e[j] = 0.0;
    }
    norms
}

/// Sampled lower bound on the operator norm: the maximum Rayleigh quotient
/// `|Ax|/|x|` over Gaussian draws. Callers that need an upper bound (the
/// SGDAS stepsize policy) must apply a safety factor on top.
pub fn estimate_operator_norm(op: &OperatorHandle, rng: &mut RngState, n_samples: usize) -> f64 {
    assert!(n_samples >= 1);
    let d = op.input_dim();
    let mut best = 0.0f64;
    for _ in 0..n_samples {
        let x: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
        let nx = linalg::norm(&x);
        if nx == 0.0 {
            continue;
        }
        let y = op.apply(&x).expect("gaussian draw is finite");
        best = best.max(linalg::norm(&y) / nx);
    }
    best
}

/// Additive noise attached to a right-hand side.
#[derive(Debug, Clone)]
pub struct NoiseRecord {
    pub r: Vec<f64>,
    pub norm: f64,
    /// `|A^T r'|` for the range-space part r' of r, when a dense
    /// decomposition was feasible at construction time.
    pub range_noise_norm: Option<f64>,
}

/// A least-squares problem instance: operator, observed right-hand side, and
/// optionally the ground truth and the injected noise.
#[derive(Debug, Clone)]
pub struct Problem {
    pub op: Arc<OperatorHandle>,
    pub rhs: Vec<f64>,
    pub ground_truth: Option<Vec<f64>>,
    pub noise: Option<NoiseRecord>,
}

impl Problem {
    pub fn new(op: OperatorHandle, rhs: Vec<f64>) -> Self {
        Problem { op: Arc::new(op), rhs, ground_truth: None, noise: None }
    }
}

/// Zero-pad a rectangular problem to a square one so that square-system
/// solvers apply. Underdetermined input gains zero rows, overdetermined
/// input gains zero columns; square input passes through unchanged. The
/// embedded handle applies the original operator internally and never
/// materializes the padding.
pub fn embed_square(p: Problem) -> Problem {
    let (m, d) = (p.op.output_dim(), p.op.input_dim());
    if m == d {
        return p;
    }
    if m < d {
        let extra = d - m;
        let op = OperatorHandle::new(
            d,
            d,
            Backend::SquareEmbedded { inner: Arc::clone(&p.op), pad: Padding::ZeroRows(extra) },
            p.op.adjoint_available,
        );
        let mut rhs = p.rhs;
        rhs.extend(std::iter::repeat(0.0).take(extra));
        let noise = p.noise.map(|mut n| {
            n.r.extend(std::iter::repeat(0.0).take(extra));
            n
        });
        Problem { op: Arc::new(op), rhs, ground_truth: p.ground_truth, noise }
    } else {
        let extra = m - d;
        let op = OperatorHandle::new(
            m,
            m,
            Backend::SquareEmbedded { inner: Arc::clone(&p.op), pad: Padding::ZeroCols(extra) },
            p.op.adjoint_available,
        );
        let ground_truth = p.ground_truth.map(|mut v| {
            v.extend(std::iter::repeat(0.0).take(extra));
            v
        });
        Problem { op: Arc::new(op), rhs: p.rhs, ground_truth, noise: p.noise }
    }
}
