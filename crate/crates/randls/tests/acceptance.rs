//! End-to-end checks of the solver guarantees, one criterion per test.
//! Each test prints a single `[PASS]`/`[FAIL]` line for its criterion.

use randls::analysis::{
    contraction_spectral_radius, coordinate_m_exact, estimate_m, normal_m_eigen_bounds,
    predict_coefficient, sgdas_optimal_stepsize, singular_coefficients, svd_small_dense,
    SpectralData,
};
use randls::experiment::IllposedConfig;
use randls::io::{
    generate_problem, read_matrix_market, write_matrix_market, Consistency, ProblemGenSpec,
};
use randls::linalg::{dense_matvec, dense_matvec_t, dot, norm, norm_sq, sub};
use randls::operator::{column_norms, embed_square, OperatorHandle, Problem};
use randls::rng::RngState;
use randls::sampling::{
    c_constant, empirical_second_moments, kaczmarz_weights, sample, SamplerSpec, SamplerVariant,
};
use randls::solvers::{
    exact_stepsize, run_cgs, run_landweber, run_rd, run_sgdas, run_tfqmr, sgdas_gradient_sample,
    SolveOptions, StepsizePolicy, StoppingRule, Termination,
};

fn finish(id: &str, failures: Vec<String>) {
    if failures.is_empty() {
        println!("[PASS] {id}");
    } else {
        println!("[FAIL] {id}: {}", failures.join(" | "));
        panic!("{id} failed: {}", failures.join(" | "));
    }
}

fn randn_vec(rng: &mut RngState, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.next_gaussian()).collect()
}

fn spec_of(variant: SamplerVariant, d: usize) -> SamplerSpec {
    SamplerSpec::new(variant, d).unwrap()
}

fn svd_of(a: &[f64], m: usize, d: usize) -> SpectralData {
    svd_small_dense(a, m, d).unwrap()
}

// ---------------------------------------------------------------- criterion 1

#[test]
fn c01_gradient_sample_is_unbiased() {
    let mut failures = Vec::new();
    let (m, d) = (8, 5);
    let mut rng = RngState::new(101, 0);
    let a = randn_vec(&mut rng, m * d);
    let op = OperatorHandle::dense(m, d, a.clone()).unwrap();
    let v = randn_vec(&mut rng, d);
    let b = randn_vec(&mut rng, m);
    let residual = sub(&op.apply(&v).unwrap(), &b);
    let exact = dense_matvec_t(&a, m, d, &residual);

    let spec = spec_of(SamplerVariant::Rademacher, d);
    let n = 200_000usize;
    let mut sum = vec![0.0; d];
    let mut sumsq = vec![0.0; d];
    for _ in 0..n {
        let x = sample(&spec, &mut rng);
        let g = sgdas_gradient_sample(&op, &residual, &x).unwrap();
        for i in 0..d {
            sum[i] += g[i];
            sumsq[i] += g[i] * g[i];
        }
    }
    for i in 0..d {
        let mean = sum[i] / n as f64;
        let var = (sumsq[i] / n as f64 - mean * mean).max(0.0);
        let se = (var / n as f64).sqrt();
        let dev = (mean - exact[i]).abs();
        if dev > 5.0 * se {
            failures.push(format!("component {i}: |mean - exact| = {dev:.3e} > 5 se = {:.3e}", 5.0 * se));
        }
    }
    finish("C1 unbiased gradient sampling", failures);
}

// ---------------------------------------------------------------- criterion 2

#[test]
fn c02_sampler_isotropy_constants() {
    let mut failures = Vec::new();
    let variants: [(&str, fn(usize) -> SamplerVariant); 4] = [
        ("rademacher", |_| SamplerVariant::Rademacher),
        ("coordinate", |_| SamplerVariant::Coordinate),
        ("normal", |_| SamplerVariant::NormalStd),
        ("sphere", |_| SamplerVariant::SphereSqrtD),
    ];
    for (name, make) in variants {
        for d in [2usize, 8] {
            let spec = spec_of(make(d), d);
            let c = c_constant(&spec).unwrap();
            let mut rng = RngState::new(202, (d as u64) << 8);
            let mm = empirical_second_moments(&spec, &mut rng, 500_000);
            for i in 0..d {
                for j in 0..d {
                    let id = if i == j { 1.0 } else { 0.0 };
                    let cov_dev = (mm.cov[i * d + j] - id).abs();
                    if cov_dev >= 0.02 {
                        failures.push(format!("{name} d={d}: |cov[{i},{j}] - I| = {cov_dev:.3e}"));
                    }
                    let fourth_dev = (mm.fourth[i * d + j] - c * id).abs();
                    if fourth_dev > 0.03 * c {
                        failures.push(format!("{name} d={d}: |fourth[{i},{j}] - cI| = {fourth_dev:.3e} > {:.3e}", 0.03 * c));
                    }
                }
            }
        }
    }
    finish("C2 isotropy constants", failures);
}

// ---------------------------------------------------------------- criterion 3

#[test]
fn c03_rd_residual_monotone() {
    let mut failures = Vec::new();
    let mut rng = RngState::new(303, 0);
    for case in 0..100u64 {
        let m = 5 + (rng.next_u64() % 21) as usize;
        let d = 2 + (rng.next_u64() % 14) as usize;
        let a = randn_vec(&mut rng, m * d);
        let b = randn_vec(&mut rng, m);
        let op = OperatorHandle::dense(m, d, a).unwrap();
        let problem = Problem::new(op, b);
        for (si, variant) in [
            SamplerVariant::Rademacher,
            SamplerVariant::Coordinate,
            SamplerVariant::NormalStd,
            SamplerVariant::SphereSqrtD,
        ]
        .into_iter()
        .enumerate()
        {
            let mut opts = SolveOptions::new(spec_of(variant, d), StoppingRule::MaxIter(500));
            opts.seed = 303 + case;
            opts.stream = si as u64;
            let trace = run_rd(&problem, &opts).unwrap();
            for w in trace.records.windows(2) {
                if w[1].residual_norm > w[0].residual_norm * (1.0 + 1e-10) {
                    failures.push(format!(
                        "case {case} sampler {si}: residual rose {:.15e} -> {:.15e} at k={}",
                        w[0].residual_norm, w[1].residual_norm, w[1].k
                    ));
                }
            }
        }
    }
    finish("C3 RD residual monotonicity", failures);
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn c04_rd_one_step_dominates_sgdas() {
    let mut failures = Vec::new();
    let (m, d) = (10, 6);
    let mut rng = RngState::new(404, 0);
    let a = randn_vec(&mut rng, m * d);
    let spectral = svd_of(&a, m, d);
    let variants = [
        SamplerVariant::Rademacher,
        SamplerVariant::Coordinate,
        SamplerVariant::NormalStd,
        SamplerVariant::SphereSqrtD,
    ];
    for trial in 0..1000usize {
        let spec = spec_of(variants[trial % 4].clone(), d);
        let c = c_constant(&spec).unwrap();
        let tau = 1.0 / (c * spectral.lambda_max());
        let v = randn_vec(&mut rng, d);
        let b = randn_vec(&mut rng, m);
        let r = sub(&dense_matvec(&a, m, d, &v), &b);
        let x = sample(&spec, &mut rng);
        let ax = dense_matvec(&a, m, d, &x);
        let t_rd = exact_stepsize(&r, &ax);
        let t_sg = -tau * dot(&r, &ax);
        let res = |t: f64| {
            let mut w = r.clone();
            for i in 0..m {
                w[i] += t * ax[i];
            }
            norm(&w)
        };
        let (res_rd, res_sg) = (res(t_rd), res(t_sg));
        if res_rd > res_sg * (1.0 + 1e-12) {
            failures.push(format!("trial {trial}: RD residual {res_rd:.15e} > SGDAS residual {res_sg:.15e}"));
        }
    }
    finish("C4 RD one-step domination", failures);
}

// ---------------------------------------------------------------- criterion 5

#[test]
fn c05_sublinear_normal_equation_residual() {
    let mut failures = Vec::new();
    let (m, d) = (30usize, 20usize);
    let mut rng = RngState::new(505, 0);
    let full: Vec<f64> = randn_vec(&mut rng, m * d);
    let bl = randn_vec(&mut rng, m * 10);
    let cr = randn_vec(&mut rng, 10 * d);
    let mut lowrank = vec![0.0; m * d];
    for i in 0..m {
        for j in 0..d {
            lowrank[i * d + j] = (0..10).map(|k| bl[i * 10 + k] * cr[k * d + j]).sum();
        }
    }
    for (label, a) in [("full-rank", full), ("rank-deficient", lowrank)] {
        let spectral = svd_of(&a, m, d);
        let b = randn_vec(&mut rng, m);
        let norm_b_sq = norm_sq(&b);
        let spec = spec_of(SamplerVariant::Rademacher, d);
        let c = c_constant(&spec).unwrap();
        let bound_scale = c * spectral.lambda_max() * norm_b_sq;
        let tau = 1.0 / (c * spectral.lambda_max());
        let problem = Problem::new(OperatorHandle::dense(m, d, a).unwrap(), b);
        let runs = 200usize;
        let horizons = [10usize, 100, 1000];
        let mut sums = [0.0f64; 3];
        for run in 0..runs {
            let mut opts = SolveOptions::new(spec.clone(), StoppingRule::MaxIter(1000));
            opts.stepsize = StepsizePolicy::Fixed(tau);
            opts.seed = 505;
            opts.stream = run as u64;
            let trace = run_sgdas(&problem, &opts).unwrap();
            for (hi, &n) in horizons.iter().enumerate() {
                let min_ls_sq = trace
                    .records
                    .iter()
                    .filter(|r| r.k < n)
                    .map(|r| {
                        let ls = r.ls_residual_norm.expect("dense handle records the normal-equation residual");
                        ls * ls
                    })
                    .fold(f64::INFINITY, f64::min);
                sums[hi] += min_ls_sq;
            }
        }
        for (hi, &n) in horizons.iter().enumerate() {
            let mean = sums[hi] / runs as f64;
            let bound = 1.2 * bound_scale / n as f64;
            if mean > bound {
                failures.push(format!("{label} N={n}: mean min |A^T r|^2 = {mean:.6e} > {bound:.6e}"));
            }
        }
    }
    finish("C5 sublinear normal-equation residual", failures);
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn c06_linear_residual_rate() {
    let mut failures = Vec::new();
    let (m, d) = (30usize, 20usize);
    let mut rng = RngState::new(606, 0);
    let a = randn_vec(&mut rng, m * d);
    let spectral = svd_of(&a, m, d);
    assert_eq!(spectral.rank, d, "test matrix must be full rank");
    let v_hat = randn_vec(&mut rng, d);
    let b = dense_matvec(&a, m, d, &v_hat);
    let norm_b_sq = norm_sq(&b);
    let spec = spec_of(SamplerVariant::Rademacher, d);
    let c = c_constant(&spec).unwrap();
    let tau = 1.0 / (c * spectral.lambda_max());
    let beta = 1.0 - spectral.sigma_min().powi(2) / (c * spectral.lambda_max());
    let problem = Problem::new(OperatorHandle::dense(m, d, a).unwrap(), b);
    let (runs, kmax) = (200usize, 200usize);
    let mut mean_sq = vec![0.0f64; kmax + 1];
    for run in 0..runs {
        let mut opts = SolveOptions::new(spec.clone(), StoppingRule::MaxIter(kmax));
        opts.stepsize = StepsizePolicy::Fixed(tau);
        opts.seed = 606;
        opts.stream = run as u64;
        let trace = run_sgdas(&problem, &opts).unwrap();
        for rec in &trace.records {
            mean_sq[rec.k] += rec.residual_norm * rec.residual_norm / runs as f64;
        }
    }
    for (k, &msq) in mean_sq.iter().enumerate() {
        let bound = 1.1 * beta.powi(k as i32) * norm_b_sq;
        if msq > bound {
            failures.push(format!("k={k}: mean residual^2 = {msq:.6e} > {bound:.6e}"));
        }
    }
    finish("C6 linear residual rate", failures);
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn c07_optimal_sgdas_stepsize() {
    let mut failures = Vec::new();
    let mut rng = RngState::new(707, 0);
    for case in 0..50 {
        let lambda_min = 10f64.powf(-2.0 + 3.0 * rng.next_f64());
        let ratio = 10f64.powf(3.0 * rng.next_f64());
        let lambda_max = lambda_min * ratio;
        let c = 2.0 + 18.0 * rng.next_f64();
        let mut eigs = vec![lambda_min, lambda_max];
        for _ in 0..8 {
            eigs.push(lambda_min + (lambda_max - lambda_min) * rng.next_f64());
        }
        let opt = sgdas_optimal_stepsize(lambda_max, lambda_min, c).unwrap();
        let rho_at_opt = contraction_spectral_radius(&eigs, opt.tau_opt, c);
        if (rho_at_opt - opt.lambda_opt).abs() > 1e-12 {
            failures.push(format!(
                "case {case}: lambda_opt {:.15e} vs spectral radius {rho_at_opt:.15e}",
                opt.lambda_opt
            ));
        }
        // multiplicative tau grid at 1e-4 relative resolution over the stable range
        let tau_hi = 2.0 / (c * lambda_max);
        let mut tau = 0.01 * opt.tau_opt;
        let step = 1.0 + 1e-4;
        let mut best = f64::INFINITY;
        while tau < tau_hi {
            best = best.min(contraction_spectral_radius(&eigs, tau, c));
            tau *= step;
        }
        if best < opt.lambda_opt - 1e-12 {
            failures.push(format!(
                "case {case}: grid found radius {best:.15e} below lambda_opt {:.15e}",
                opt.lambda_opt
            ));
        }
    }
    finish("C7 optimal SGDAS stepsize", failures);
}

// ---------------------------------------------------------------- criterion 8

#[test]
fn c08_m_estimation() {
    let mut failures = Vec::new();

    // coordinate sampling admits a closed-form diagonal M
    let (m, d) = (15usize, 10usize);
    let mut rng = RngState::new(808, 0);
    let a = randn_vec(&mut rng, m * d);
    let op = OperatorHandle::dense(m, d, a).unwrap();
    let exact = coordinate_m_exact(&column_norms(&op)).unwrap();
    let spec = spec_of(SamplerVariant::Coordinate, d);
    let est = estimate_m(&op, &spec, &mut rng, 1_000_000).unwrap();
    let mut num = 0.0;
    let mut den = 0.0;
    for idx in 0..d * d {
        num += (est.matrix[idx] - exact[idx]).powi(2);
        den += exact[idx] * exact[idx];
    }
    let rel = (num / den).sqrt();
    if rel >= 0.02 {
        failures.push(format!("coordinate: relative Frobenius error {rel:.4e} >= 2%"));
    }

    // Gaussian sampling: M diagonalizes in the right singular basis and its
    // eigenvalues obey both the general bracket and the closed-form bounds
    for d in 3usize..=8 {
        let m = d + 10;
        let mut rng = RngState::new(809, d as u64);
        let a = randn_vec(&mut rng, m * d);
        let spectral = svd_of(&a, m, d);
        assert_eq!(spectral.rank, d);
        let op = OperatorHandle::dense(m, d, a).unwrap();
        let spec = spec_of(SamplerVariant::NormalStd, d);
        let est = estimate_m(&op, &spec, &mut rng, 1_000_000).unwrap();
        let proj = est.project(&spectral);
        let max_diag = (0..d).map(|i| proj[i * d + i]).fold(0.0f64, f64::max);
        for i in 0..d {
            for j in 0..d {
                if i != j && proj[i * d + j].abs() >= 0.01 * max_diag {
                    failures.push(format!(
                        "normal d={d}: off-diagonal [{i},{j}] = {:.3e} >= 1% of max diagonal",
                        proj[i * d + j]
                    ));
                }
            }
        }
        let bracket_lo = 1.0 / (d as f64 * spectral.sigma_max().powi(2));
        let bracket_hi = 1.0 / (d as f64 * spectral.sigma_min().powi(2));
        let bounds = normal_m_eigen_bounds(&spectral.singular_values, d).unwrap();
        for i in 0..d {
            let mu = proj[i * d + i];
            if mu < bracket_lo || mu > bracket_hi {
                failures.push(format!("normal d={d}: mu_{i} = {mu:.6e} outside bracket [{bracket_lo:.6e}, {bracket_hi:.6e}]"));
            }
            if mu < bounds.lower || mu > bounds.upper {
                failures.push(format!(
                    "normal d={d}: mu_{i} = {mu:.6e} outside closed-form bounds [{:.6e}, {:.6e}]",
                    bounds.lower, bounds.upper
                ));
            }
        }
    }
    finish("C8 M estimation", failures);
}

// ---------------------------------------------------------------- criterion 9

#[test]
fn c09_weighted_coordinate_kaczmarz_rate() {
    let mut failures = Vec::new();
    let (m, d) = (30usize, 20usize);
    let mut rng = RngState::new(909, 0);
    let a = randn_vec(&mut rng, m * d);
    let spectral = svd_of(&a, m, d);
    let v_hat = randn_vec(&mut rng, d);
    let b = dense_matvec(&a, m, d, &v_hat);
    let norm_b_sq = norm_sq(&b);
    let op = OperatorHandle::dense(m, d, a).unwrap();
    let (weights, _) = kaczmarz_weights(&column_norms(&op)).unwrap();
    let spec = spec_of(SamplerVariant::WeightedCoordinate(weights), d);
    let rate = 1.0 - spectral.sigma_min().powi(2) / spectral.frobenius_sq();
    let problem = Problem::new(op, b);
    let (runs, kmax) = (200usize, 200usize);
    let mut mean_sq = vec![0.0f64; kmax + 1];
    for run in 0..runs {
        let mut opts = SolveOptions::new(spec.clone(), StoppingRule::MaxIter(kmax));
        opts.seed = 909;
        opts.stream = run as u64;
        let trace = run_rd(&problem, &opts).unwrap();
        for rec in &trace.records {
            mean_sq[rec.k] += rec.residual_norm * rec.residual_norm / runs as f64;
        }
    }
    for (k, &msq) in mean_sq.iter().enumerate() {
        let bound = 1.1 * rate.powi(k as i32) * norm_b_sq;
        if msq > bound {
            failures.push(format!("k={k}: mean residual^2 = {msq:.6e} > {bound:.6e}"));
        }
    }
    finish("C9 weighted-coordinate Kaczmarz rate", failures);
}

// --------------------------------------------------------------- criterion 10

#[test]
fn c10_singular_coefficient_formula() {
    let mut failures = Vec::new();
    let d = 20usize;
    let mut rng = RngState::new(1010, 0);
    let a = randn_vec(&mut rng, d * d);
    let spectral = svd_of(&a, d, d);
    let v_hat = randn_vec(&mut rng, d);
    let clean = dense_matvec(&a, d, d, &v_hat);
    let noise: Vec<f64> = randn_vec(&mut rng, d).iter().map(|x| 0.01 * x).collect();
    let b: Vec<f64> = clean.iter().zip(&noise).map(|(c, r)| c + r).collect();
    let r = spectral.rank;
    let init: Vec<f64> = (0..r).map(|i| -dot(&v_hat, &spectral.right_vectors[i])).collect();
    let noise_coef: Vec<f64> = (0..r).map(|i| dot(&noise, &spectral.left_vectors[i])).collect();
    let omega = 1.0 / spectral.lambda_max();

    let mut problem = Problem::new(OperatorHandle::dense(d, d, a).unwrap(), b);
    problem.ground_truth = Some(v_hat.clone());

    // deterministic part: the recursion has a closed form, exact per iteration
    for k in 1..=200usize {
        let mut opts = SolveOptions::new(spec_of(SamplerVariant::Rademacher, d), StoppingRule::MaxIter(k));
        opts.stepsize = StepsizePolicy::OptimalSpectral {
            lambda_max: spectral.lambda_max(),
            lambda_min: spectral.lambda_min_full(),
        };
        opts.record_stride = k;
        let trace = run_landweber(&problem, &opts).unwrap();
        let coeffs = singular_coefficients(&trace.final_iterate, &v_hat, &spectral);
        for i in 0..r {
            let sigma = spectral.singular_values[i];
            let pred = predict_coefficient(k, init[i], noise_coef[i], sigma, omega * sigma * sigma);
            let dev = (coeffs[i] - pred).abs();
            if dev > 1e-10 * (1.0 + pred.abs()) {
                failures.push(format!("landweber k={k} i={i}: |measured - predicted| = {dev:.3e}"));
            }
        }
    }

    // stochastic part: the same recursion holds in expectation with rate
    // factors mu_i sigma_i^2 from the estimated direction-weight matrix
    let spec = spec_of(SamplerVariant::SphereSqrtD, d);
    let mut mrng = RngState::new(1011, 0);
    let mu = estimate_m(&problem.op, &spec, &mut mrng, 400_000)
        .unwrap()
        .projected_diagonal(&spectral);
    let (runs, kfix) = (500usize, 150usize);
    let mut sums = vec![0.0f64; r];
    let mut sumsq = vec![0.0f64; r];
    for run in 0..runs {
        let mut opts = SolveOptions::new(spec.clone(), StoppingRule::MaxIter(kfix));
        opts.record_stride = kfix;
        opts.seed = 1012;
        opts.stream = run as u64;
        let trace = run_rd(&problem, &opts).unwrap();
        let coeffs = singular_coefficients(&trace.final_iterate, &v_hat, &spectral);
        for i in 0..r {
            sums[i] += coeffs[i];
            sumsq[i] += coeffs[i] * coeffs[i];
        }
    }
    for i in 0..r {
        let mean = sums[i] / runs as f64;
        let var = (sumsq[i] / runs as f64 - mean * mean).max(0.0);
        let se = (var / runs as f64).sqrt();
        let sigma = spectral.singular_values[i];
        let pred = predict_coefficient(kfix, init[i], noise_coef[i], sigma, mu[i] * sigma * sigma);
        let dev = (mean - pred).abs();
        if dev > 3.0 * se + 1e-12 {
            failures.push(format!("rd i={i}: |mean - predicted| = {dev:.3e} > 3 se = {:.3e}", 3.0 * se));
        }
    }
    finish("C10 singular-coefficient formula", failures);
}

// --------------------------------------------------------------- criterion 11

#[test]
fn c11_illposed_experiment() {
    let mut failures = Vec::new();
    let started = std::time::Instant::now();
    let cfg = IllposedConfig::new(100);
    let (report, _) = randls::experiment::run_illposed(&cfg).unwrap();
    for curve in &report.methods {
        let label = match &curve.sampler {
            Some(s) => format!("{} ({s})", curve.method),
            None => curve.method.clone(),
        };
        match curve.morozov_rel_error {
            Some(err) => {
                if !(0.03..=0.10).contains(&err) {
                    failures.push(format!("{label}: discrepancy-stopped error {err:.4} outside [0.03, 0.10]"));
                }
                if curve.best_rel_error > err + 1e-12 {
                    failures.push(format!(
                        "{label}: best error {:.4} exceeds discrepancy-stopped error {err:.4}",
                        curve.best_rel_error
                    ));
                }
            }
            None => failures.push(format!("{label}: residual never reached the discrepancy threshold")),
        }
    }
    if report.methods.len() != 5 {
        failures.push(format!("expected 5 method curves, got {}", report.methods.len()));
    }
    for fc in &report.factors {
        if fc.fraction_small_half_above_landweber <= 0.5 {
            failures.push(format!(
                "{}: only {:.0}% of small-sigma factors above the Landweber factor",
                fc.sampler,
                100.0 * fc.fraction_small_half_above_landweber
            ));
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    if elapsed >= 300.0 {
        failures.push(format!("runtime {elapsed:.1}s exceeds 5 minutes"));
    }
    finish("C11 ill-posed experiment", failures);
}

// --------------------------------------------------------------- criterion 12

#[test]
fn c12_solver_comparison() {
    let mut failures = Vec::new();
    for (m, d) in [(300usize, 1200usize), (1200usize, 300usize)] {
        let spec = ProblemGenSpec { m, d, density: 0.1, seed: 7, consistency: Consistency::Consistent };
        let problem = generate_problem(&spec).unwrap();
        for (si, token) in ["rademacher", "coordinate", "normal", "sphere"].iter().enumerate() {
            let sampler = SamplerSpec::from_token(token, d).unwrap();
            let mut opts = SolveOptions::new(sampler, StoppingRule::rel_residual_with_cap(1e-2, 10_000));
            opts.record_stride = 10_000;
            opts.seed = 12;
            opts.stream = si as u64;
            let trace = run_rd(&problem, &opts).unwrap();
            if trace.termination != Termination::Converged {
                failures.push(format!(
                    "{m}x{d} rd/{token}: {:?} with relative residual {:.3e}",
                    trace.termination,
                    trace.final_residual_norm() / norm(&problem.rhs)
                ));
            }
        }
        let embedded = embed_square(problem.clone());
        for (name, runner) in [
            ("tfqmr", run_tfqmr as fn(&Problem, &SolveOptions) -> randls::Result<randls::solvers::SolverTrace>),
            ("cgs", run_cgs),
        ] {
            let n = embedded.op.input_dim();
            let mut opts = SolveOptions::new(
                spec_of(SamplerVariant::Rademacher, n),
                StoppingRule::rel_residual_with_cap(1e-2, 10_000),
            );
            opts.record_stride = 10_000;
            let trace = runner(&embedded, &opts).unwrap();
            if trace.termination == Termination::Converged {
                failures.push(format!("{m}x{d} embedded {name} unexpectedly reached the tolerance"));
            }
        }
    }

    // well-conditioned square system: both Krylov methods against a direct solve
    let n = 50usize;
    let mut rng = RngState::new(1212, 0);
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = 0.05 * rng.next_gaussian() + if i == j { 1.0 } else { 0.0 };
        }
    }
    let b = randn_vec(&mut rng, n);
    let spectral = svd_of(&a, n, n);
    let mut direct = vec![0.0; n];
    for i in 0..spectral.rank {
        let coef = dot(&b, &spectral.left_vectors[i]) / spectral.singular_values[i];
        for j in 0..n {
            direct[j] += coef * spectral.right_vectors[i][j];
        }
    }
    let direct_norm = norm(&direct);
    let problem = Problem::new(OperatorHandle::dense(n, n, a).unwrap(), b);
    for (name, runner) in [
        ("tfqmr", run_tfqmr as fn(&Problem, &SolveOptions) -> randls::Result<randls::solvers::SolverTrace>),
        ("cgs", run_cgs),
    ] {
        let opts = SolveOptions::new(
            spec_of(SamplerVariant::Rademacher, n),
            StoppingRule::rel_residual_with_cap(1e-10, 200),
        );
        let trace = runner(&problem, &opts).unwrap();
        let rel_res = trace.final_residual_norm() / norm(&problem.rhs);
        if rel_res > 1e-8 {
            failures.push(format!("50x50 {name}: relative residual {rel_res:.3e} > 1e-8"));
        }
        let rel_err = norm(&sub(&trace.final_iterate, &direct)) / direct_norm;
        if rel_err > 1e-8 {
            failures.push(format!("50x50 {name}: relative error vs direct solve {rel_err:.3e} > 1e-8"));
        }
    }
    finish("C12 solver comparison", failures);
}

// --------------------------------------------------------------- criterion 13

#[test]
fn c13_matrix_market_round_trip() {
    let mut failures = Vec::new();
    let dir = tempfile::tempdir().unwrap();

    // fixture with comments, duplicates disallowed, exact re-read
    let fixture = dir.path().join("fixture.mtx");
    std::fs::write(
        &fixture,
        "%%MatrixMarket matrix coordinate real general\n% small fixture\n4 3 5\n1 1 1.5\n2 2 -2.25e-3\n3 1 0.1\n4 3 7\n1 3 -0.875\n",
    )
    .unwrap();
    let op = read_matrix_market(&fixture).unwrap();
    if (op.output_dim(), op.input_dim()) != (4, 3) {
        failures.push(format!("fixture dims ({}, {})", op.output_dim(), op.input_dim()));
    }
    let rewritten = dir.path().join("rewritten.mtx");
    write_matrix_market(&op, &rewritten).unwrap();
    let op2 = read_matrix_market(&rewritten).unwrap();
    let (d1, d2) = (op.to_dense(), op2.to_dense());
    if d1.len() != d2.len() || d1.iter().zip(&d2).any(|(x, y)| x.to_bits() != y.to_bits()) {
        failures.push("round-trip is not bit-exact".into());
    }

    // the ash331 dimension check runs only when the file is available
    let candidates: Vec<std::path::PathBuf> = std::env::var_os("ASH331_PATH")
        .map(std::path::PathBuf::from)
        .into_iter()
        .chain([
            std::path::PathBuf::from("data/ash331.mtx"),
            std::path::PathBuf::from("../../data/ash331.mtx"),
        ])
        .collect();
    match candidates.iter().find(|p| p.is_file()) {
        Some(path) => match read_matrix_market(path) {
            Ok(op) => {
                if (op.output_dim(), op.input_dim()) != (331, 104) {
                    failures.push(format!(
                        "ash331 dims ({}, {}), expected (331, 104)",
                        op.output_dim(),
                        op.input_dim()
                    ));
                }
            }
            Err(e) => failures.push(format!("ash331 failed to parse: {e}")),
        },
        None => println!("note: ash331.mtx not present (set ASH331_PATH to enable the dimension check)"),
    }
    finish("C13 MatrixMarket round-trip", failures);
}
