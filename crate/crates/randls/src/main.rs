//! Command-line harness: single solves, method comparison benchmarks,
//! the ill-posed inverse-integration study, and operator analysis.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use randls::error::Error;
use randls::experiment::{
    format_bench_table, resolve_sampler, run_analyze, run_bench, run_illposed, AnalyzeConfig,
    BenchConfig, IllposedConfig,
};
use randls::io::{
    generate_problem, parse_gen_spec, read_matrix_market, write_report_json, write_trace_csv,
};
use randls::linalg::norm;
use randls::operator::{embed_square, Problem};
use randls::rng::RngState;
use randls::solvers::{
    needs_square, run_method, SolveOptions, StoppingRule, Termination,
};

const EXIT_OK: u8 = 0;
const EXIT_MAX_ITER: u8 = 2;
const EXIT_BREAKDOWN: u8 = 3;
const EXIT_USAGE: u8 = 64;
const EXIT_FILE: u8 = 74;

#[derive(Parser)]
#[command(name = "randls", version, about = "Adjoint-free randomized least-squares solvers")]
struct Cli {
    /// Base RNG seed; all randomness derives from it deterministically.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for benchmark trials.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Directory for reports and traces.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver on one problem and write a trace.
    Solve(SolveArgs),
    /// Compare methods and samplers on a problem, averaged over trials.
    Bench(BenchArgs),
    /// The ill-posed inverse-integration study.
    Illposed(IllposedArgs),
    /// Estimate M and report rate constants and eigenvalue brackets.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// MatrixMarket path or inline `gen:m=..,d=..,density=..[,seed=..][,noise=..]`.
    #[arg(long)]
    matrix: String,
    /// One of: sgdas, rd, landweber, tfqmr, cgs.
    #[arg(long)]
    method: String,
    /// One of: rademacher, coordinate, normal, sphere, weighted.
    #[arg(long, default_value = "rademacher")]
    sampler: String,
    /// Relative residual tolerance.
    #[arg(long, default_value_t = 1e-2)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Enable discrepancy-principle stopping with this factor.
    #[arg(long)]
    morozov: Option<f64>,
    /// Noise norm for the discrepancy principle (defaults to the generated
    /// problem's recorded noise).
    #[arg(long)]
    noise_norm: Option<f64>,
    /// Trace CSV output path.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// MatrixMarket path or inline gen spec; alternative to --m/--d/--density.
    #[arg(long)]
    matrix: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long, default_value_t = 1e-2)]
    tol: f64,
    /// Iteration cap; defaults to 10000, or 10*max(m,d) for file matrices.
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, value_delimiter = ',', default_value = "sgdas,rd,tfqmr,cgs")]
    methods: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "rademacher,coordinate,normal,sphere")]
    samplers: Vec<String>,
}

#[derive(Args)]
struct IllposedArgs {
    #[arg(long, default_value_t = 100)]
    d: usize,
    /// Noise level relative to |A v_hat|.
    #[arg(long, default_value_t = 5e-3)]
    noise: f64,
    #[arg(long, default_value_t = 1.001)]
    morozov: f64,
    #[arg(long, default_value_t = 150_000)]
    max_iter: usize,
    /// Samplers for the random descent runs; Landweber always runs.
    #[arg(long, value_delimiter = ',', default_value = "normal,sphere,rademacher,coordinate")]
    samplers: Vec<String>,
    /// Monte-Carlo samples for the per-sampler M estimates.
    #[arg(long, default_value_t = 200_000)]
    m_samples: usize,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// MatrixMarket path or inline gen spec.
    #[arg(long)]
    matrix: String,
    #[arg(long, default_value = "normal")]
    sampler: String,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Stepsize for the rate report; defaults to 1/(c |A|^2).
    #[arg(long)]
    tau: Option<f64>,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::ParseError { .. } | Error::UnsupportedFormat(_) => EXIT_FILE,
        Error::InvalidSpec(_) => EXIT_USAGE,
        _ => 1,
    }
}

/// Load a problem from a path or inline gen spec. File matrices get a
/// consistent right-hand side b = A v_hat with a seeded normal v_hat.
fn load_problem(matrix: &str, seed: u64) -> Result<Problem, Error> {
    if matrix.starts_with("gen:") {
        let mut spec = parse_gen_spec(matrix)?;
        if spec.seed == 0 {
            spec.seed = seed;
        }
        generate_problem(&spec)
    } else {
        let op = read_matrix_market(Path::new(matrix))?;
        let d = op.input_dim();
        let mut rng = RngState::new(seed, 2);
        let v_hat: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
        let rhs = op.apply(&v_hat)?;
        op.reset_counters();
        let mut problem = Problem::new(op, rhs);
        problem.ground_truth = Some(v_hat);
        Ok(problem)
    }
}

fn cmd_solve(cli: &Cli, args: &SolveArgs) -> Result<u8, Error> {
    let problem = load_problem(&args.matrix, cli.seed)?;
    let embed = needs_square(&args.method) && !problem.op.is_square();
    let problem = if embed { embed_square(problem) } else { problem };

    let mut rules = vec![
        StoppingRule::RelResidual(args.tol),
        StoppingRule::MaxIter(args.max_iter),
    ];
    if let Some(factor) = args.morozov {
        let noise_norm = args
            .noise_norm
            .or_else(|| problem.noise.as_ref().map(|n| n.norm))
            .ok_or_else(|| {
                Error::InvalidSpec("--morozov needs --noise-norm or a noisy generated problem".into())
            })?;
        rules.insert(0, StoppingRule::Morozov { factor, noise_norm });
    }

    let sampler = resolve_sampler(&args.sampler, &problem)?;
    let mut opts = SolveOptions::new(sampler, StoppingRule::AnyOf(rules));
    opts.seed = cli.seed;
    let trace = run_method(&args.method, &problem, &opts)?;

    let rhs_norm = norm(&problem.rhs);
    let rel = if rhs_norm > 0.0 { trace.final_residual_norm() / rhs_norm } else { 0.0 };
    println!(
        "method={} sampler={} embedded={}",
        trace.method,
        trace.sampler.as_deref().unwrap_or("-"),
        if embed { "yes" } else { "no" }
    );
    println!(
        "rel_residual={rel:.6e} v_norm={:.6e} iterations={} applies={} wall_s={:.4}",
        norm(&trace.final_iterate),
        trace.iterations,
        trace.total_applies,
        trace.wall_ns as f64 * 1e-9,
    );
    println!("termination={:?}", trace.termination);
    if let Some(path) = &args.trace {
        write_trace_csv(&trace, rhs_norm, path)?;
    }
    Ok(match trace.termination {
        Termination::Converged => EXIT_OK,
        Termination::MaxIterReached => EXIT_MAX_ITER,
        Termination::Breakdown(_) => EXIT_BREAKDOWN,
    })
}

fn cmd_bench(cli: &Cli, args: &BenchArgs) -> Result<u8, Error> {
    let (problem, file_mode) = match (&args.matrix, args.m, args.d, args.density) {
        (Some(matrix), _, _, _) => (load_problem(matrix, cli.seed)?, !matrix.starts_with("gen:")),
        (None, Some(m), Some(d), Some(density)) => {
            let spec = randls::io::ProblemGenSpec::new(m, d, density, cli.seed)?;
            (generate_problem(&spec)?, false)
        }
        _ => {
            return Err(Error::InvalidSpec(
                "bench needs --matrix or all of --m/--d/--density".into(),
            ))
        }
    };
    let (m, d) = (problem.op.output_dim(), problem.op.input_dim());
    let max_iter = args.max_iter.unwrap_or(if file_mode { 10 * m.max(d) } else { 10_000 });

    let mut cfg = BenchConfig::new(args.tol, max_iter);
    cfg.trials = args.trials.max(1);
    cfg.methods = args.methods.clone();
    cfg.samplers = args.samplers.clone();
    cfg.seed = cli.seed;
    cfg.threads = cli.threads;
    let report = run_bench(&problem, &cfg)?;
    print!("{}", format_bench_table(&report));
    if let Some(dir) = &cli.out_dir {
        std::fs::create_dir_all(dir)?;
        write_report_json(&report, &dir.join("bench.json"))?;
    }
    Ok(EXIT_OK)
}

fn cmd_illposed(cli: &Cli, args: &IllposedArgs) -> Result<u8, Error> {
    let mut cfg = IllposedConfig::new(args.d);
    cfg.noise_level = args.noise;
    cfg.morozov_factor = args.morozov;
    cfg.max_iter = args.max_iter;
    cfg.seed = if cli.seed == 0 { 1 } else { cli.seed };
    cfg.samplers = args.samplers.clone();
    cfg.m_samples = args.m_samples;
    let (report, traces) = run_illposed(&cfg)?;

    for curve in &report.methods {
        let label = match &curve.sampler {
            Some(s) => format!("{} ({s})", curve.method),
            None => curve.method.clone(),
        };
        match (curve.morozov_rel_error, curve.morozov_iteration) {
            (Some(err), Some(k)) => println!(
                "{label}: best_error={:.4} at k={}, morozov_error={err:.4} at k={k}",
                curve.best_rel_error, curve.best_iteration
            ),
            _ => println!(
                "{label}: best_error={:.4} at k={}, discrepancy threshold never reached",
                curve.best_rel_error, curve.best_iteration
            ),
        }
    }
    if let Some(dir) = &cli.out_dir {
        std::fs::create_dir_all(dir)?;
        write_report_json(&report, &dir.join("illposed.json"))?;
        for (label, trace) in &traces {
            let rhs_norm = trace
                .records
                .first()
                .map(|r| r.residual_norm)
                .unwrap_or(f64::NAN);
            write_trace_csv(trace, rhs_norm, &dir.join(format!("illposed_{label}.csv")))?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_analyze(cli: &Cli, args: &AnalyzeArgs) -> Result<u8, Error> {
    let problem = load_problem(&args.matrix, cli.seed)?;
    let cfg = AnalyzeConfig {
        sampler: args.sampler.clone(),
        samples: args.samples,
        seed: cli.seed,
        tau: args.tau,
    };
    let report = run_analyze(&problem, &cfg)?;
    let rendered = serde_json::to_value(&report).expect("report serializes");
    println!("{}", serde_json::to_string_pretty(&rendered).expect("json renders"));
    if let Some(dir) = &cli.out_dir {
        std::fs::create_dir_all(dir)?;
        write_report_json(&report, &dir.join("analyze.json"))?;
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // help/version requests are successful exits; anything else is a
            // usage error with the documented code
            let benign = matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = err.print();
            return ExitCode::from(if benign { EXIT_OK } else { EXIT_USAGE });
        }
    };
    let result = match &cli.command {
        Command::Solve(args) => cmd_solve(&cli, args),
        Command::Bench(args) => cmd_bench(&cli, args),
        Command::Illposed(args) => cmd_illposed(&cli, args),
        Command::Analyze(args) => cmd_analyze(&cli, args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
