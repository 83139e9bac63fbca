//! Experiment protocols behind the CLI: benchmark comparisons across
//! methods and samplers, the ill-posed inverse-integration study, and
//! operator analysis reports.

use serde::Serialize;

use crate::analysis::{
    coordinate_m_exact, estimate_m, normal_m_eigen_bounds, rate_bounds, svd_small_dense,
    NormalMEigenBounds, RateReport, SpectralData,
};
use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::operator::{column_norms, embed_square, Problem};
use crate::rng::RngState;
use crate::sampling::{c_constant, kaczmarz_weights, SamplerSpec, SamplerVariant};
use crate::solvers::{
    needs_square, run_method, SolveOptions, SolverTrace, StepsizePolicy, StoppingRule, Termination,
};

/// Resolve a CLI sampler token, including the `weighted` Kaczmarz sampler
/// which needs the operator's column norms.
pub fn resolve_sampler(token: &str, problem: &Problem) -> Result<SamplerSpec> {
    let d = problem.op.input_dim();
    if token == "weighted" {
        let (weights, _had_zero) = kaczmarz_weights(&column_norms(&problem.op))?;
        SamplerSpec::new(SamplerVariant::WeightedCoordinate(weights), d)
    } else {
        SamplerSpec::from_token(token, d)
    }
}

// ---------------------------------------------------------------------------
// Benchmark comparisons
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub trials: usize,
    pub methods: Vec<String>,
    pub samplers: Vec<String>,
    pub seed: u64,
    pub threads: usize,
}

impl BenchConfig {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        BenchConfig {
            tol,
            max_iter,
            trials: 1,
            methods: vec!["sgdas".into(), "rd".into(), "landweber".into(), "tfqmr".into(), "cgs".into()],
            samplers: vec!["rademacher".into(), "coordinate".into(), "normal".into(), "sphere".into()],
            seed: 0,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct TrialOutcome {
    rel_residual: f64,
    v_norm: f64,
    iterations: usize,
    applies: u64,
    wall_s: f64,
    converged: bool,
}

/// One row of the comparison table: a (method, sampler) pair aggregated
/// over trials.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampler: Option<String>,
    /// Whether the problem was zero-padded to square form for this method.
    pub embedded: bool,
    pub trials: usize,
    pub converged_trials: usize,
    pub rel_residual_mean: f64,
    pub rel_residual_std: f64,
    pub v_norm_mean: f64,
    pub v_norm_std: f64,
    pub iterations_mean: f64,
    pub applies_mean: f64,
    pub wall_s_mean: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub m: usize,
    pub d: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub trials: usize,
    pub rows: Vec<BenchRow>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn run_trial(
    problem: &Problem,
    method: &str,
    sampler: &SamplerSpec,
    cfg: &BenchConfig,
    trial: usize,
    original_d: usize,
) -> Result<TrialOutcome> {
    let mut opts = SolveOptions::new(sampler.clone(), StoppingRule::rel_residual_with_cap(cfg.tol, cfg.max_iter));
    opts.stepsize = StepsizePolicy::norm_surrogate_default();
    opts.record_stride = cfg.max_iter.max(1);
    opts.seed = cfg.seed;
    opts.stream = trial as u64;
    let trace = run_method(method, problem, &opts)?;
    let rhs_norm = norm(&problem.rhs);
    let rel = if rhs_norm > 0.0 { trace.final_residual_norm() / rhs_norm } else { 0.0 };
    // report the norm of the iterate restricted to the original variables
    let take = original_d.min(trace.final_iterate.len());
    Ok(TrialOutcome {
        rel_residual: rel,
        v_norm: norm(&trace.final_iterate[..take]),
        iterations: trace.iterations,
        applies: trace.total_applies,
        wall_s: trace.wall_ns as f64 * 1e-9,
        converged: trace.termination == Termination::Converged,
    })
}

fn bench_cell(
    problem: &Problem,
    method: &str,
    sampler_token: Option<&str>,
    cfg: &BenchConfig,
) -> Result<BenchRow> {
    let original_d = problem.op.input_dim();
    let embed = needs_square(method) && !problem.op.is_square();
    let run_problem = if embed { embed_square(problem.clone()) } else { problem.clone() };
    let sampler = match sampler_token {
        Some(token) => resolve_sampler(token, &run_problem)?,
        // deterministic methods ignore the sampler; any valid one will do
        None => SamplerSpec::from_token("rademacher", run_problem.op.input_dim())?,
    };

    let threads = cfg.threads.max(1).min(cfg.trials.max(1));
    let mut outcomes: Vec<Option<Result<TrialOutcome>>> = Vec::new();
    outcomes.resize_with(cfg.trials, || None);
    if threads <= 1 {
        for (trial, slot) in outcomes.iter_mut().enumerate() {
            *slot = Some(run_trial(&run_problem, method, &sampler, cfg, trial, original_d));
        }
    } else {
        let chunks: Vec<(usize, Result<TrialOutcome>)> = std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for t in 0..threads {
                let run_problem = &run_problem;
                let sampler = &sampler;
                handles.push(scope.spawn(move || {
                    let mut local = Vec::new();
                    let mut trial = t;
                    while trial < cfg.trials {
                        local.push((trial, run_trial(run_problem, method, sampler, cfg, trial, original_d)));
                        trial += threads;
                    }
                    local
                }));
            }
            handles.into_iter().flat_map(|h| h.join().expect("trial thread panicked")).collect()
        });
        for (trial, outcome) in chunks {
            outcomes[trial] = Some(outcome);
        }
    }

    let mut done = Vec::with_capacity(cfg.trials);
    for outcome in outcomes {
        done.push(outcome.expect("all trials assigned")?);
    }
    let (rel_mean, rel_std) = mean_std(&done.iter().map(|o| o.rel_residual).collect::<Vec<_>>());
    let (vn_mean, vn_std) = mean_std(&done.iter().map(|o| o.v_norm).collect::<Vec<_>>());
    Ok(BenchRow {
        method: method.to_string(),
        sampler: sampler_token.map(str::to_string),
        embedded: embed,
        trials: cfg.trials,
        converged_trials: done.iter().filter(|o| o.converged).count(),
        rel_residual_mean: rel_mean,
        rel_residual_std: rel_std,
        v_norm_mean: vn_mean,
        v_norm_std: vn_std,
        iterations_mean: done.iter().map(|o| o.iterations as f64).sum::<f64>() / done.len() as f64,
        applies_mean: done.iter().map(|o| o.applies as f64).sum::<f64>() / done.len() as f64,
        wall_s_mean: done.iter().map(|o| o.wall_s).sum::<f64>() / done.len() as f64,
    })
}

/// Run the method x sampler comparison grid on one problem. Randomized
/// methods get one row per sampler; deterministic methods get one row.
/// Trials run concurrently up to the configured thread count, each on its
/// own RNG stream, and rows are assembled in a deterministic order.
pub fn run_bench(problem: &Problem, cfg: &BenchConfig) -> Result<BenchReport> {
    let mut rows = Vec::new();
    for method in &cfg.methods {
        if matches!(method.as_str(), "sgdas" | "rd") {
            for sampler in &cfg.samplers {
                // SGDAS requires isotropy; skip the weighted sampler for it
                if method == "sgdas" && sampler == "weighted" {
                    continue;
                }
                rows.push(bench_cell(problem, method, Some(sampler), cfg)?);
            }
        } else {
            rows.push(bench_cell(problem, method, None, cfg)?);
        }
    }
    Ok(BenchReport {
        m: problem.op.output_dim(),
        d: problem.op.input_dim(),
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        trials: cfg.trials,
        rows,
    })
}

/// Render the comparison table in the rel-residual / |v| / time layout.
pub fn format_bench_table(report: &BenchReport) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:<11} {:>9} {:>12} {:>12} {:>10} {:>10}",
        "method", "sampler", "embedded", "rel_res", "|v|", "iters", "time_s"
    );
    for row in &report.rows {
        let _ = writeln!(
            out,
            "{:<10} {:<11} {:>9} {:>12.3e} {:>12.4e} {:>10.1} {:>10.4}",
            row.method,
            row.sampler.as_deref().unwrap_or("-"),
            if row.embedded { "yes" } else { "no" },
            row.rel_residual_mean,
            row.v_norm_mean,
            row.iterations_mean,
            row.wall_s_mean,
        );
    }
    out
}

// ---------------------------------------------------------------------------
// Ill-posed inverse-integration study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct IllposedConfig {
    pub d: usize,
    pub noise_level: f64,
    pub morozov_factor: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub samplers: Vec<String>,
    /// Monte-Carlo sample count for the per-sampler M estimates.
    pub m_samples: usize,
}

impl IllposedConfig {
    pub fn new(d: usize) -> Self {
        IllposedConfig {
            d,
            noise_level: 5e-3,
            morozov_factor: 1.001,
            max_iter: 150_000,
            seed: 1,
            samplers: vec!["normal".into(), "sphere".into(), "rademacher".into(), "coordinate".into()],
            m_samples: 200_000,
        }
    }
}

/// Error metrics for one method on the ill-posed problem.
#[derive(Debug, Clone, Serialize)]
pub struct MethodCurve {
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampler: Option<String>,
    /// Smallest relative reconstruction error along the iteration.
    pub best_rel_error: f64,
    pub best_iteration: usize,
    /// Relative error at the discrepancy-principle stopping index, absent if
    /// the residual never fell below factor * |noise|.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub morozov_rel_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub morozov_iteration: Option<usize>,
    pub final_rel_error: f64,
}

/// Per-sampler comparison of the convergence factors along the singular
/// basis: mu_hat_i sigma_i^2 for random descent against sigma_i^2 / |A|^2
/// for Landweber.
#[derive(Debug, Clone, Serialize)]
pub struct FactorComparison {
    pub sampler: String,
    pub mu_sigma_sq: Vec<f64>,
    /// Fraction of the smallest-sigma half of indices where the random
    /// descent factor exceeds the Landweber factor.
    pub fraction_small_half_above_landweber: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IllposedReport {
    pub d: usize,
    pub noise_level: f64,
    pub noise_norm: f64,
    pub morozov_factor: f64,
    /// Landweber factors sigma_i^2 / |A|^2 at omega = 1 / |A|^2.
    pub landweber_factors: Vec<f64>,
    pub methods: Vec<MethodCurve>,
    pub factors: Vec<FactorComparison>,
}

fn scan_curve(
    trace: &SolverTrace,
    truth_norm: f64,
    morozov_threshold: f64,
) -> (f64, usize, Option<f64>, Option<usize>, f64) {
    let mut best = f64::INFINITY;
    let mut best_k = 0;
    let mut morozov: Option<(f64, usize)> = None;
    let mut last = f64::NAN;
    for rec in &trace.records {
        let rel = rec.error_norm.expect("ground truth known") / truth_norm;
        if rel < best {
            best = rel;
            best_k = rec.k;
        }
        if morozov.is_none() && rec.residual_norm <= morozov_threshold {
            morozov = Some((rel, rec.k));
        }
        last = rel;
    }
    (best, best_k, morozov.map(|m| m.0), morozov.map(|m| m.1), last)
}

/// Run the inverse-integration study: Landweber with omega = 1 / |A|^2 from
/// the SVD, random descent with each configured sampler, error/residual
/// curves, discrepancy-principle stops, and the factor comparison.
pub fn run_illposed(cfg: &IllposedConfig) -> Result<(IllposedReport, Vec<(String, SolverTrace)>)> {
    let problem = crate::io::make_inverse_integration_problem(
        cfg.d,
        crate::io::SolutionSpec::Rough,
        cfg.noise_level,
        cfg.seed,
    )?;
    let dense = problem.op.to_dense();
    let spectral = svd_small_dense(&dense, cfg.d, cfg.d)?;
    let truth_norm = norm(problem.ground_truth.as_ref().expect("generated with ground truth"));
    let noise_norm = problem.noise.as_ref().expect("noise recorded").norm;
    let threshold = cfg.morozov_factor * noise_norm;
    let lambda_max = spectral.lambda_max();

    let mut methods = Vec::new();
    let mut traces = Vec::new();

    let base_opts = |sampler: SamplerSpec| {
        let mut o = SolveOptions::new(sampler, StoppingRule::MaxIter(cfg.max_iter));
        o.record_stride = 1;
        o.seed = cfg.seed;
        o
    };

    // Landweber reference
    {
        let mut opts = base_opts(SamplerSpec::from_token("rademacher", cfg.d)?);
        opts.stepsize = StepsizePolicy::OptimalSpectral { lambda_max, lambda_min: spectral.lambda_min_full() };
        let trace = run_method("landweber", &problem, &opts)?;
        let (best, best_k, moro, moro_k, last) = scan_curve(&trace, truth_norm, threshold);
        methods.push(MethodCurve {
            method: "landweber".into(),
            sampler: None,
            best_rel_error: best,
            best_iteration: best_k,
            morozov_rel_error: moro,
            morozov_iteration: moro_k,
            final_rel_error: last,
        });
        traces.push(("landweber".to_string(), trace));
    }

    for (idx, token) in cfg.samplers.iter().enumerate() {
        let sampler = resolve_sampler(token, &problem)?;
        let mut opts = base_opts(sampler);
        opts.stream = idx as u64 + 1;
        let trace = run_method("rd", &problem, &opts)?;
        let (best, best_k, moro, moro_k, last) = scan_curve(&trace, truth_norm, threshold);
        methods.push(MethodCurve {
            method: "rd".into(),
            sampler: Some(token.clone()),
            best_rel_error: best,
            best_iteration: best_k,
            morozov_rel_error: moro,
            morozov_iteration: moro_k,
            final_rel_error: last,
        });
        traces.push((format!("rd_{token}"), trace));
    }

    let landweber_factors: Vec<f64> =
        spectral.singular_values.iter().map(|s| s * s / lambda_max).collect();

    let mut factors = Vec::new();
    for (idx, token) in cfg.samplers.iter().enumerate() {
        let sampler = resolve_sampler(token, &problem)?;
        let mut rng = RngState::new(cfg.seed, 1000 + idx as u64);
        let est = estimate_m(&problem.op, &sampler, &mut rng, cfg.m_samples)?;
        let mu_hat = est.projected_diagonal(&spectral);
        let mu_sigma_sq: Vec<f64> = mu_hat
            .iter()
            .zip(&spectral.singular_values)
            .map(|(mu, s)| mu * s * s)
            .collect();
        let half = spectral.rank / 2;
        let small = spectral.rank - half;
        let above = (half..spectral.rank)
            .filter(|&i| mu_sigma_sq[i] > landweber_factors[i])
            .count();
        factors.push(FactorComparison {
            sampler: token.clone(),
            mu_sigma_sq,
            fraction_small_half_above_landweber: above as f64 / small as f64,
            diverged: est.diverged,
        });
    }

    let report = IllposedReport {
        d: cfg.d,
        noise_level: cfg.noise_level,
        noise_norm,
        morozov_factor: cfg.morozov_factor,
        landweber_factors,
        methods,
        factors,
    };
    Ok((report, traces))
}

// ---------------------------------------------------------------------------
// Operator analysis
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct AnalyzeConfig {
    pub sampler: String,
    pub samples: usize,
    pub seed: u64,
    /// Stepsize for the rate report; defaults to 1 / (c |A|^2).
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeReport {
    pub m: usize,
    pub d: usize,
    pub sampler: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    /// Rate constants; absent for non-isotropic samplers (no c constant).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateReport>,
    pub m_eigenvalues: Vec<f64>,
    /// Diagonal of U^T M_hat U in the singular basis.
    pub mu_hat_diag: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coordinate_exact_diag: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normal_bounds: Option<NormalMEigenBounds>,
    pub n_samples: usize,
    pub n_null_directions: usize,
    pub diverged: bool,
}

/// Estimate M for the given sampler, decompose the operator, and assemble
/// the full diagnostic report.
pub fn run_analyze(problem: &Problem, cfg: &AnalyzeConfig) -> Result<AnalyzeReport> {
    let (m, d) = (problem.op.output_dim(), problem.op.input_dim());
    if m.max(d) > 2000 {
        return Err(Error::TooLarge(m.max(d)));
    }
    let dense = problem.op.to_dense();
    let spectral: SpectralData = svd_small_dense(&dense, m, d)?;
    let sampler = resolve_sampler(&cfg.sampler, problem)?;
    let mut rng = RngState::new(cfg.seed, 0);
    let est = estimate_m(&problem.op, &sampler, &mut rng, cfg.samples)?;
    let m_eigenvalues = est.eigenvalues();
    let mu_hat_diag = est.projected_diagonal(&spectral);

    let c = c_constant(&sampler).ok();
    let rate = c.map(|c| {
        let tau = cfg.tau.unwrap_or(1.0 / (c * spectral.lambda_max()));
        let mut r = rate_bounds(&spectral, m_eigenvalues.last().copied(), c, tau);
        if matches!(sampler.variant, SamplerVariant::NormalStd | SamplerVariant::SphereSqrtD)
            && spectral.rank == d
            && d > 2
        {
            if let Ok(b) = normal_m_eigen_bounds(&spectral.singular_values, d) {
                r.normal_lower = Some(b.lower);
                r.normal_upper = Some(b.upper);
            }
        }
        r
    });

    let coordinate_exact_diag = if matches!(sampler.variant, SamplerVariant::Coordinate) {
        let norms = column_norms(&problem.op);
        coordinate_m_exact(&norms).ok().map(|mat| (0..d).map(|j| mat[j * d + j]).collect())
    } else {
        None
    };
    let normal_bounds = if matches!(
        sampler.variant,
        SamplerVariant::NormalStd | SamplerVariant::SphereSqrtD
    ) && spectral.rank == d
        && d > 2
    {
        normal_m_eigen_bounds(&spectral.singular_values, d).ok()
    } else {
        None
    };

    Ok(AnalyzeReport {
        m,
        d,
        sampler: cfg.sampler.clone(),
        c,
        singular_values: spectral.singular_values.clone(),
        rank: spectral.rank,
        rate,
        m_eigenvalues,
        mu_hat_diag,
        coordinate_exact_diag,
        normal_bounds,
        n_samples: est.n_samples,
        n_null_directions: est.n_null_directions,
        diverged: est.diverged,
    })
}
