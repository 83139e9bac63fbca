//! Iterative solvers.
//!
//! The two randomized adjoint-free methods (SGDAS and random descent) plus
//! the baselines used for comparison: Landweber (needs the adjoint), TFQMR
//! and CGS (square systems only). All runs start from v = 0 and share the
//! trace format.

mod krylov;

pub use krylov::{run_cgs, run_tfqmr};

use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, norm_sq};
use crate::operator::{estimate_operator_norm, OperatorHandle, Problem};
use crate::rng::RngState;
use crate::sampling::{c_constant, sample, SamplerSpec};

/// Squared-norm threshold below which a direction counts as a kernel draw.
/// Relative to |x|^2; the exact linesearch takes a zero step there.
pub const NULL_DIRECTION_EPS: f64 = 1e-28;

/// Breakdown threshold for Krylov inner products, relative to the problem
/// scale.
pub const BREAKDOWN_EPS: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq)]
pub enum StoppingRule {
    MaxIter(usize),
    /// Stop when |Av - b| / |b| falls below the tolerance. A zero right-hand
    /// side stops immediately.
    RelResidual(f64),
    /// Discrepancy principle: stop when |Av - b| <= factor * noise_norm.
    Morozov { factor: f64, noise_norm: f64 },
    /// First satisfied rule wins, evaluated in listed order.
    AnyOf(Vec<StoppingRule>),
}

impl StoppingRule {
    pub fn rel_residual_with_cap(tol: f64, max_iter: usize) -> Self {
        StoppingRule::AnyOf(vec![StoppingRule::RelResidual(tol), StoppingRule::MaxIter(max_iter)])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepsizePolicy {
    Fixed(f64),
    /// tau = (2/c) / (lambda_max + lambda_min), the minimizer of the
    /// contraction factor over fixed stepsizes.
    OptimalSpectral { lambda_max: f64, lambda_min: f64 },
    /// tau = 1 / (c * (safety * estimate)^2) with the estimate from sampled
    /// Rayleigh quotients. The estimate is biased low and the admissible
    /// range tau < 2/(c |A|^2) is a hard bound, hence the safety factor.
    NormSurrogate { safety: f64, samples: usize },
}

impl StepsizePolicy {
    pub fn norm_surrogate_default() -> Self {
        StepsizePolicy::NormSurrogate { safety: 1.5, samples: 50 }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Direction distribution; ignored by the deterministic methods.
    pub sampler: SamplerSpec,
    pub stopping: StoppingRule,
    pub stepsize: StepsizePolicy,
    /// Record every `record_stride`-th iteration (plus first and last).
    pub record_stride: usize,
    /// Fully recompute the incrementally maintained residual every this many
    /// iterations to bound floating-point drift.
    pub residual_refresh_every: usize,
    pub seed: u64,
    pub stream: u64,
}

impl SolveOptions {
    pub fn new(sampler: SamplerSpec, stopping: StoppingRule) -> Self {
        SolveOptions {
            sampler,
            stopping,
            stepsize: StepsizePolicy::norm_surrogate_default(),
            record_stride: 1,
            residual_refresh_every: 1000,
            seed: 0,
            stream: 0,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct IterationRecord {
    pub k: usize,
    pub residual_norm: f64,
    pub stepsize: f64,
    /// |A^T (Av - b)|, recorded only when the handle exposes an adjoint.
    pub ls_residual_norm: Option<f64>,
    /// |v - v_hat| when the ground truth is known.
    pub error_norm: Option<f64>,
    /// Forward applications consumed by this run so far.
    pub apply_count: u64,
    /// Wall-clock nanoseconds since the run started.
    pub wall_ns: u128,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum Termination {
    Converged,
    MaxIterReached,
    Breakdown(String),
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SolverTrace {
    pub method: String,
    pub sampler: Option<String>,
    pub records: Vec<IterationRecord>,
    pub final_iterate: Vec<f64>,
    pub termination: Termination,
    pub iterations: usize,
    pub total_applies: u64,
    pub total_adjoint_applies: u64,
    /// Draws that fell into the kernel of the operator (stepsize 0).
    pub null_steps: u64,
    pub wall_ns: u128,
}

impl SolverTrace {
    pub fn final_residual_norm(&self) -> f64 {
        self.records.last().map(|r| r.residual_norm).unwrap_or(f64::NAN)
    }
}

/// Evaluate a stopping rule. Returns the termination it implies, if any.
fn stop_reason(k: usize, residual_norm: f64, rhs_norm: f64, rule: &StoppingRule) -> Option<Termination> {
    match rule {
        StoppingRule::MaxIter(n) => (k >= *n).then_some(Termination::MaxIterReached),
        StoppingRule::RelResidual(tol) => {
            if rhs_norm == 0.0 || residual_norm / rhs_norm <= *tol {
                Some(Termination::Converged)
            } else {
                None
            }
        }
        StoppingRule::Morozov { factor, noise_norm } => {
            (residual_norm <= factor * noise_norm).then_some(Termination::Converged)
        }
        StoppingRule::AnyOf(rules) => rules.iter().find_map(|r| stop_reason(k, residual_norm, rhs_norm, r)),
    }
}

/// Whether a stopping rule fires for the given record.
pub fn check_stop(record: &IterationRecord, rhs_norm: f64, rule: &StoppingRule) -> bool {
    stop_reason(record.k, record.residual_norm, rhs_norm, rule).is_some()
}

/// One draw of the gradient estimator `<Av - b, Ax> x`. Costs exactly one
/// forward application; its expectation over isotropic x is `A^T (Av - b)`.
pub fn sgdas_gradient_sample(op: &OperatorHandle, residual: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let ax = op.apply(x)?;
    let g = dot(residual, &ax);
    Ok(x.iter().map(|xi| g * xi).collect())
}

/// Exact linesearch stepsize for a step v + tau x, minimizing
/// |A(v + tau x) - b|^2. The Ax = 0 branch is a defined value, not an error.
pub fn exact_stepsize(residual: &[f64], ax: &[f64]) -> f64 {
    let nsq = norm_sq(ax);
    if nsq > 0.0 {
        -dot(residual, ax) / nsq
    } else {
        0.0
    }
}

fn resolve_sgdas_stepsize(op: &OperatorHandle, c: f64, policy: &StepsizePolicy, rng: &RngState) -> Result<f64> {
    match policy {
        StepsizePolicy::Fixed(tau) => {
            if *tau <= 0.0 {
                return Err(Error::StepsizeUnresolvable(format!("fixed stepsize {tau} not positive")));
            }
            Ok(*tau)
        }
        StepsizePolicy::OptimalSpectral { lambda_max, lambda_min } => {
            if *lambda_min <= 0.0 || lambda_max < lambda_min {
                return Err(Error::StepsizeUnresolvable(
                    "spectral policy needs lambda_max >= lambda_min > 0".into(),
                ));
            }
            Ok((2.0 / c) / (lambda_max + lambda_min))
        }
        StepsizePolicy::NormSurrogate { safety, samples } => {
            let mut est_rng = rng.substream(0x6e6f726d);
            let est = estimate_operator_norm(op, &mut est_rng, (*samples).max(1));
            if est == 0.0 {
                return Err(Error::StepsizeUnresolvable("operator norm estimate is zero".into()));
            }
            let surrogate = safety * est;
            Ok(1.0 / (c * surrogate * surrogate))
        }
    }
}

/// State shared by the two randomized iterations: the iterate, the
/// incrementally maintained residual, and the bookkeeping for records.
struct RunState<'a> {
    problem: &'a Problem,
    rhs_norm: f64,
    v: Vec<f64>,
    residual: Vec<f64>,
    applies: u64,
    records: Vec<IterationRecord>,
    record_stride: usize,
    refresh_every: usize,
    adjoint_diag: bool,
    start_adjoint: u64,
    started: Instant,
}

impl<'a> RunState<'a> {
    fn new(problem: &'a Problem, opts: &SolveOptions) -> Self {
        let residual: Vec<f64> = problem.rhs.iter().map(|b| -b).collect();
        RunState {
            problem,
            rhs_norm: norm(&problem.rhs),
            v: vec![0.0; problem.op.input_dim()],
            residual,
            applies: 0,
            records: Vec::new(),
            record_stride: opts.record_stride.max(1),
            refresh_every: opts.residual_refresh_every.max(1),
            adjoint_diag: problem.op.adjoint_available(),
            start_adjoint: problem.op.adjoint_apply_count(),
            started: Instant::now(),
        }
    }

    fn apply(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        self.applies += 1;
        self.problem.op.apply(x)
    }

    fn maybe_refresh(&mut self, k: usize) -> Result<()> {
        if (k + 1) % self.refresh_every == 0 {
            let av = self.apply_for_refresh()?;
            for i in 0..self.residual.len() {
                self.residual[i] = av[i] - self.problem.rhs[i];
            }
        }
        Ok(())
    }

    fn apply_for_refresh(&mut self) -> Result<Vec<f64>> {
        let v = self.v.clone();
        self.apply(&v)
    }

    fn record(&mut self, k: usize, stepsize: f64) {
        let ls = if self.adjoint_diag {
            self.problem.op.apply_adjoint(&self.residual).ok().map(|g| norm(&g))
        } else {
            None
        };
        let err = self
            .problem
            .ground_truth
            .as_ref()
            .map(|vh| norm(&crate::linalg::sub(&self.v, vh)));
        self.records.push(IterationRecord {
            k,
            residual_norm: norm(&self.residual),
            stepsize,
            ls_residual_norm: ls,
            error_norm: err,
            apply_count: self.applies,
            wall_ns: self.started.elapsed().as_nanos(),
        });
    }

    fn should_record(&self, k: usize) -> bool {
        k % self.record_stride == 0
    }

    fn finish(self, method: &str, sampler: Option<String>, termination: Termination, k: usize, null_steps: u64, started: Instant) -> SolverTrace {
        SolverTrace {
            method: method.to_string(),
            sampler,
            records: self.records,
            final_iterate: self.v,
            termination,
            iterations: k,
            total_applies: self.applies,
            total_adjoint_applies: self.problem.op.adjoint_apply_count() - self.start_adjoint,
            null_steps,
            wall_ns: started.elapsed().as_nanos(),
        }
    }
}

/// Stochastic gradient descent with adjoint sampling. Each iteration draws an
/// isotropic direction x and steps `v -= tau <Av - b, Ax> x`. The residual
/// vector is maintained incrementally so one iteration costs one forward
/// application, with a periodic full recomputation to bound drift.
pub fn run_sgdas(p: &Problem, opts: &SolveOptions) -> Result<SolverTrace> {
    if !opts.sampler.is_isotropic() {
        return Err(Error::NotIsotropic);
    }
    let started = Instant::now();
    let c = c_constant(&opts.sampler)?;
    let mut rng = RngState::new(opts.seed, opts.stream);
    let tau = resolve_sgdas_stepsize(&p.op, c, &opts.stepsize, &rng)?;
    let mut state = RunState::new(p, opts);

    let mut k = 0usize;
    let termination = loop {
        if state.should_record(k) {
            state.record(k, tau);
        }
        if let Some(t) = stop_reason(k, norm(&state.residual), state.rhs_norm, &opts.stopping) {
            break t;
        }
        let x = sample(&opts.sampler, &mut rng);
        let ax = state.apply(&x)?;
        let g = tau * dot(&state.residual, &ax);
        axpy(-g, &x, &mut state.v);
        axpy(-g, &ax, &mut state.residual);
        state.maybe_refresh(k)?;
        k += 1;
    };
    if !state.should_record(k) {
        state.record(k, tau);
    }
    Ok(state.finish("sgdas", Some(opts.sampler.token().into()), termination, k, 0, started))
}

/// Random descent: step `v += tau x` with tau from the exact linesearch.
/// Any sampler is allowed; the per-realization residual norm never
/// increases. Kernel draws yield stepsize 0 and are counted, not resampled.
pub fn run_rd(p: &Problem, opts: &SolveOptions) -> Result<SolverTrace> {
    let started = Instant::now();
    let mut rng = RngState::new(opts.seed, opts.stream);
    let mut state = RunState::new(p, opts);
    let mut null_steps = 0u64;

    let mut k = 0usize;
    let mut last_tau = 0.0;
    let termination = loop {
        if state.should_record(k) {
            state.record(k, last_tau);
        }
        if let Some(t) = stop_reason(k, norm(&state.residual), state.rhs_norm, &opts.stopping) {
            break t;
        }
        let x = sample(&opts.sampler, &mut rng);
        let ax = state.apply(&x)?;
        let tau = if norm_sq(&ax) < NULL_DIRECTION_EPS * norm_sq(&x) {
            null_steps += 1;
            0.0
        } else {
            exact_stepsize(&state.residual, &ax)
        };
        if tau != 0.0 {
            axpy(tau, &x, &mut state.v);
            axpy(tau, &ax, &mut state.residual);
        }
        state.maybe_refresh(k)?;
        last_tau = tau;
        k += 1;
    };
    if !state.should_record(k) {
        state.record(k, last_tau);
    }
    Ok(state.finish("rd", Some(opts.sampler.token().into()), termination, k, null_steps, started))
}

/// Deterministic Landweber iteration `v -= omega A^T (Av - b)`. Requires the
/// adjoint capability; two operator applications per iteration.
pub fn run_landweber(p: &Problem, opts: &SolveOptions) -> Result<SolverTrace> {
    if !p.op.adjoint_available() {
        return Err(Error::AdjointUnavailable);
    }
    let started = Instant::now();
    let omega = match &opts.stepsize {
        StepsizePolicy::Fixed(w) => {
            if *w <= 0.0 {
                return Err(Error::StepsizeUnresolvable(format!("fixed stepsize {w} not positive")));
            }
            *w
        }
        StepsizePolicy::OptimalSpectral { lambda_max, .. } => {
            if *lambda_max <= 0.0 {
                return Err(Error::StepsizeUnresolvable("lambda_max must be positive".into()));
            }
            1.0 / lambda_max
        }
        StepsizePolicy::NormSurrogate { safety, samples } => {
            let mut est_rng = RngState::new(opts.seed, opts.stream).substream(0x6c77);
            let est = estimate_operator_norm(&p.op, &mut est_rng, (*samples).max(1));
            if est == 0.0 {
                return Err(Error::StepsizeUnresolvable("operator norm estimate is zero".into()));
            }
            let s = safety * est;
            1.0 / (s * s)
        }
    };
    let mut state = RunState::new(p, opts);

    let mut k = 0usize;
    let termination = loop {
        if state.should_record(k) {
            state.record(k, omega);
        }
        if let Some(t) = stop_reason(k, norm(&state.residual), state.rhs_norm, &opts.stopping) {
            break t;
        }
        let grad = p.op.apply_adjoint(&state.residual)?;
        axpy(-omega, &grad, &mut state.v);
        let av = state.apply_for_refresh()?;
        for i in 0..state.residual.len() {
            state.residual[i] = av[i] - p.rhs[i];
        }
        k += 1;
    };
    if !state.should_record(k) {
        state.record(k, omega);
    }
    Ok(state.finish("landweber", None, termination, k, 0, started))
}

/// Dispatch by CLI method token.
pub fn run_method(method: &str, p: &Problem, opts: &SolveOptions) -> Result<SolverTrace> {
    match method {
        "sgdas" => run_sgdas(p, opts),
        "rd" => run_rd(p, opts),
        "landweber" => run_landweber(p, opts),
        "tfqmr" => run_tfqmr(p, opts),
        "cgs" => run_cgs(p, opts),
        other => Err(Error::InvalidSpec(format!("unknown method token `{other}`"))),
    }
}

/// Methods that require a square operator (callers embed first).
pub fn needs_square(method: &str) -> bool {
    matches!(method, "tfqmr" | "cgs")
}
