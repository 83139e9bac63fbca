//! Transpose-free Krylov baselines for square systems: TFQMR and CGS.
//!
//! Both are standard reference implementations, included for solver
//! comparisons. They use two forward applications per iteration (TFQMR
//! spends a third on the true-residual check used for stopping) and never
//! touch the adjoint. Rectangular problems must be embedded to square form
//! first.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, sub};
use crate::operator::Problem;
use crate::solvers::{
    stop_reason, IterationRecord, SolveOptions, SolverTrace, Termination, BREAKDOWN_EPS,
};

struct KrylovRun<'a> {
    problem: &'a Problem,
    rhs_norm: f64,
    applies: u64,
    records: Vec<IterationRecord>,
    record_stride: usize,
    started: Instant,
}

impl<'a> KrylovRun<'a> {
    fn new(problem: &'a Problem, opts: &SolveOptions) -> Result<Self> {
        if !problem.op.is_square() {
            return Err(Error::NotSquare {
                m: problem.op.output_dim(),
                d: problem.op.input_dim(),
            });
        }
        Ok(KrylovRun {
            problem,
            rhs_norm: norm(&problem.rhs),
            applies: 0,
            records: Vec::new(),
            record_stride: opts.record_stride.max(1),
            started: Instant::now(),
        })
    }

    /// Forward application; a non-finite iterate is reported as a breakdown
    /// (Err(None)) so divergence ends the run with a trace instead of an
    /// input-validation error.
    fn apply(&mut self, x: &[f64]) -> std::result::Result<Vec<f64>, Option<Error>> {
        self.applies += 1;
        match self.problem.op.apply(x) {
            Ok(v) => Ok(v),
            Err(Error::NonFiniteInput) => Err(None),
            Err(e) => Err(Some(e)),
        }
    }

    /// Apply where the input is known finite (initial vectors).
    fn apply_strict(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        self.apply(x).map_err(|e| e.unwrap_or(Error::NonFiniteInput))
    }

    fn record(&mut self, k: usize, x: &[f64], residual_norm: f64) {
        let err = self
            .problem
            .ground_truth
            .as_ref()
            .filter(|vh| vh.len() == x.len())
            .map(|vh| norm(&sub(x, vh)));
        self.records.push(IterationRecord {
            k,
            residual_norm,
            stepsize: f64::NAN,
            ls_residual_norm: None,
            error_norm: err,
            apply_count: self.applies,
            wall_ns: self.started.elapsed().as_nanos(),
        });
    }

    fn finish(self, method: &str, x: Vec<f64>, termination: Termination, k: usize, started: Instant) -> SolverTrace {
        SolverTrace {
            method: method.to_string(),
            sampler: None,
            records: self.records,
            final_iterate: x,
            termination,
            iterations: k,
            total_applies: self.applies,
            total_adjoint_applies: 0,
            null_steps: 0,
            wall_ns: started.elapsed().as_nanos(),
        }
    }
}

/// Transpose-free quasi-minimal residual method for square systems.
/// Breakdowns (vanishing inner products of the underlying Lanczos
/// recurrence) terminate the run with a detail string.
pub fn run_tfqmr(p: &Problem, opts: &SolveOptions) -> Result<SolverTrace> {
    let started = Instant::now();
    let mut run = KrylovRun::new(p, opts)?;
    let n = p.op.input_dim();
    let b = &p.rhs;
    let scale = run.rhs_norm * run.rhs_norm;

    let mut x = vec![0.0; n];
    // v^0 = 0, so r0 = b
    let mut w = b.clone();
    let mut u = b.clone();
    let rstar = b.clone();
    let mut rho = dot(&rstar, b);
    let mut au = run.apply_strict(&u)?;
    let mut v = au.clone();
    let mut d = vec![0.0; n];
    let mut tau = run.rhs_norm;
    let mut theta = 0.0f64;
    let mut eta = 0.0f64;
    let mut alpha = 0.0f64;
    let mut true_residual = run.rhs_norm;

    let mut k = 0usize;
    if run.should_record(k) {
        run.record(k, &x, true_residual);
    }
    let termination = loop {
        if let Some(t) = stop_reason(k, true_residual, run.rhs_norm, &opts.stopping) {
            break t;
        }
        let mut broke = None;
        // one full iteration = two half-steps of the odd/even recurrence
        for half in 0..2 {
            if half == 0 {
                let sigma = dot(&rstar, &v);
                if sigma.abs() < BREAKDOWN_EPS * scale.max(f64::MIN_POSITIVE) {
                    broke = Some(format!("sigma = {sigma:.3e} vanished at iteration {k}"));
                    break;
                }
                alpha = rho / sigma;
            }
            axpy(-alpha, &au, &mut w);
            let coef = if eta == 0.0 { 0.0 } else { theta * theta * eta / alpha };
            for i in 0..n {
                d[i] = u[i] + coef * d[i];
            }
            // tau = 0 means the quasi-residual already vanished exactly
            theta = if tau > 0.0 { norm(&w) / tau } else { 0.0 };
            let c = 1.0 / (1.0 + theta * theta).sqrt();
            tau *= theta * c;
            eta = c * c * alpha;
            axpy(eta, &d, &mut x);
            if half == 0 {
                // u_{odd} = u_{even} - alpha v
                axpy(-alpha, &v, &mut u);
                au = match run.apply(&u) {
                    Ok(y) => y,
                    Err(None) => {
                        broke = Some(format!("non-finite iterate at iteration {k}"));
                        break;
                    }
                    Err(Some(e)) => return Err(e),
                };
            } else {
                let rho_new = dot(&rstar, &w);
                if rho.abs() < BREAKDOWN_EPS * scale.max(f64::MIN_POSITIVE) {
                    broke = Some(format!("rho = {rho:.3e} vanished at iteration {k}"));
                    break;
                }
                let beta = rho_new / rho;
                rho = rho_new;
                let mut u_next = w.clone();
                axpy(beta, &u, &mut u_next);
                let au_next = match run.apply(&u_next) {
                    Ok(y) => y,
                    Err(None) => {
                        broke = Some(format!("non-finite iterate at iteration {k}"));
                        break;
                    }
                    Err(Some(e)) => return Err(e),
                };
                for i in 0..n {
                    v[i] = au_next[i] + beta * (au[i] + beta * v[i]);
                }
                u = u_next;
                au = au_next;
            }
        }
        if let Some(detail) = broke {
            break Termination::Breakdown(detail);
        }
        k += 1;
        // quasi-residual tau only bounds the residual; use the true residual
        // for stopping and traces
        let ax = match run.apply(&x) {
            Ok(y) => y,
            Err(None) => break Termination::Breakdown(format!("non-finite iterate at iteration {k}")),
            Err(Some(e)) => return Err(e),
        };
        true_residual = norm(&sub(&ax, b));
        if !true_residual.is_finite() {
            break Termination::Breakdown(format!("non-finite residual at iteration {k}"));
        }
        if run.should_record(k) {
            run.record(k, &x, true_residual);
        }
    };
    if run.records.last().map(|r| r.k) != Some(k) {
        run.record(k, &x, true_residual);
    }
    Ok(run.finish("tfqmr", x, termination, k, started))
}

/// Conjugate gradient squared for square systems. CGS is allowed to diverge;
/// residual growth is recorded in the trace, only vanishing inner products
/// or non-finite values are reported as breakdowns.
pub fn run_cgs(p: &Problem, opts: &SolveOptions) -> Result<SolverTrace> {
    let started = Instant::now();
    let mut run = KrylovRun::new(p, opts)?;
    let n = p.op.input_dim();
    let b = &p.rhs;
    let scale = run.rhs_norm * run.rhs_norm;

    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let rstar = b.clone();
    let mut u = r.clone();
    let mut pvec = r.clone();
    let mut rho = dot(&rstar, &r);
    let mut residual_norm = run.rhs_norm;

    let mut k = 0usize;
    if run.should_record(k) {
        run.record(k, &x, residual_norm);
    }
    let termination = loop {
        if let Some(t) = stop_reason(k, residual_norm, run.rhs_norm, &opts.stopping) {
            break t;
        }
        let ap = match run.apply(&pvec) {
            Ok(y) => y,
            Err(None) => break Termination::Breakdown(format!("non-finite iterate at iteration {k}")),
            Err(Some(e)) => return Err(e),
        };
        let sigma = dot(&rstar, &ap);
        if sigma.abs() < BREAKDOWN_EPS * scale.max(f64::MIN_POSITIVE) || !sigma.is_finite() {
            break Termination::Breakdown(format!("sigma = {sigma:.3e} at iteration {k}"));
        }
        let alpha = rho / sigma;
        // q = u - alpha A p
        let mut q = u.clone();
        axpy(-alpha, &ap, &mut q);
        // x += alpha (u + q), r -= alpha A (u + q)
        let uq: Vec<f64> = u.iter().zip(&q).map(|(a, b)| a + b).collect();
        axpy(alpha, &uq, &mut x);
        let auq = match run.apply(&uq) {
            Ok(y) => y,
            Err(None) => break Termination::Breakdown(format!("non-finite iterate at iteration {k}")),
            Err(Some(e)) => return Err(e),
        };
        axpy(-alpha, &auq, &mut r);
        let rho_new = dot(&rstar, &r);
        if rho.abs() < BREAKDOWN_EPS * scale.max(f64::MIN_POSITIVE) || !rho_new.is_finite() {
            break Termination::Breakdown(format!("rho = {rho:.3e} at iteration {k}"));
        }
        let beta = rho_new / rho;
        rho = rho_new;
        // u = r + beta q; p = u + beta (q + beta p)
        u = r.clone();
        axpy(beta, &q, &mut u);
        for i in 0..n {
            pvec[i] = u[i] + beta * (q[i] + beta * pvec[i]);
        }
        k += 1;
        residual_norm = norm(&r);
        if !residual_norm.is_finite() {
            break Termination::Breakdown(format!("non-finite residual at iteration {k}"));
        }
        if run.should_record(k) {
            run.record(k, &x, residual_norm);
        }
    };
    if run.records.last().map(|r| r.k) != Some(k) {
        run.record(k, &x, residual_norm);
    }
    Ok(run.finish("cgs", x, termination, k, started))
}

impl KrylovRun<'_> {
    fn should_record(&self, k: usize) -> bool {
        k % self.record_stride == 0
    }
}
