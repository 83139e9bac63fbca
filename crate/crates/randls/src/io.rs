//! Problem ingestion and result export.
//!
//! MatrixMarket coordinate parsing into CSR handles, seeded random sparse
//! problem generation, the inverse-integration (running sum) test problem,
//! and CSV/JSON writers for solver traces and analysis reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::operator::{CsrMatrix, NoiseRecord, OperatorHandle, Problem};
use crate::rng::RngState;
use crate::solvers::{IterationRecord, SolverTrace};

/// Parse a MatrixMarket `matrix coordinate real {general|symmetric}` file
/// into a CSR operator. Indices are 1-based, `%` lines are comments,
/// symmetric entries are mirrored and duplicates are summed.
pub fn read_matrix_market(path: &Path) -> Result<OperatorHandle> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    let (header_no, header) = lines
        .next()
        .ok_or_else(|| Error::ParseError { line: 1, reason: "empty file".into() })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || !fields[0].eq_ignore_ascii_case("%%MatrixMarket") {
        return Err(Error::ParseError {
            line: header_no + 1,
            reason: "expected `%%MatrixMarket matrix coordinate real <symmetry>` header".into(),
        });
    }
    let (object, format, field, symmetry) = (
        fields[1].to_ascii_lowercase(),
        fields[2].to_ascii_lowercase(),
        fields[3].to_ascii_lowercase(),
        fields[4].to_ascii_lowercase(),
    );
    if object != "matrix" || format != "coordinate" || field != "real" {
        return Err(Error::UnsupportedFormat(format!("{object} {format} {field} {symmetry}")));
    }
    let symmetric = match symmetry.as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(Error::UnsupportedFormat(format!("symmetry `{other}`"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if size.is_none() {
            if toks.len() != 3 {
                return Err(Error::ParseError { line: line_no, reason: "size line needs `m d nnz`".into() });
            }
            let m: usize = toks[0]
                .parse()
                .map_err(|_| Error::ParseError { line: line_no, reason: "bad row count".into() })?;
            let d: usize = toks[1]
                .parse()
                .map_err(|_| Error::ParseError { line: line_no, reason: "bad column count".into() })?;
            let nnz: usize = toks[2]
                .parse()
                .map_err(|_| Error::ParseError { line: line_no, reason: "bad entry count".into() })?;
            if m == 0 || d == 0 {
                return Err(Error::ParseError { line: line_no, reason: "zero dimension".into() });
            }
            if symmetric && m != d {
                return Err(Error::ParseError {
                    line: line_no,
                    reason: "symmetric matrix must be square".into(),
                });
            }
            size = Some((m, d, nnz));
            continue;
        }
        let (m, d, _) = size.unwrap();
        if toks.len() != 3 {
            return Err(Error::ParseError { line: line_no, reason: "entry needs `i j value`".into() });
        }
        let i: usize = toks[0]
            .parse()
            .map_err(|_| Error::ParseError { line: line_no, reason: "bad row index".into() })?;
        let j: usize = toks[1]
            .parse()
            .map_err(|_| Error::ParseError { line: line_no, reason: "bad column index".into() })?;
        let value: f64 = toks[2]
            .parse()
            .map_err(|_| Error::ParseError { line: line_no, reason: "bad value".into() })?;
        if i == 0 || i > m || j == 0 || j > d {
            return Err(Error::ParseError {
                line: line_no,
                reason: format!("index ({i}, {j}) outside {m} x {d} (1-based)"),
            });
        }
        triplets.push((i - 1, j - 1, value));
        if symmetric && i != j {
            triplets.push((j - 1, i - 1, value));
        }
    }

    let (m, d, nnz) = size.ok_or(Error::ParseError { line: 2, reason: "missing size line".into() })?;
    let base = if symmetric { triplets.iter().filter(|(i, j, _)| i <= j).count() } else { triplets.len() };
    if base != nnz {
        return Err(Error::ParseError {
            line: 0,
            reason: format!("declared {nnz} entries, found {base}"),
        });
    }
    Ok(OperatorHandle::csr(CsrMatrix::from_triplets(m, d, &triplets)?))
}

/// Write an operator's nonzero entries as MatrixMarket
/// `matrix coordinate real general`, with shortest round-trip decimals.
/// Intended for fixture-scale matrices: the operator is densified.
pub fn write_matrix_market(op: &OperatorHandle, path: &Path) -> Result<()> {
    let (m, d) = (op.output_dim(), op.input_dim());
    let dense = op.to_dense();
    let mut entries = Vec::new();
    for i in 0..m {
        for j in 0..d {
            let v = dense[i * d + j];
            if v != 0.0 {
                entries.push((i + 1, j + 1, v));
            }
        }
    }
    let mut out = String::new();
    out.push_str("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(out, "{m} {d} {}", entries.len());
    for (i, j, v) in entries {
        let _ = writeln!(out, "{i} {j} {v}");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Consistency of a generated right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub enum Consistency {
    /// b = A v_hat exactly.
    Consistent,
    /// b = A v_hat + r with |r| = noise_level * |A v_hat|, r a scaled
    /// standard normal vector.
    Noisy { noise_level: f64 },
}

/// Specification for a random sparse least-squares problem with standard
/// normal entries.
#[derive(Debug, Clone)]
pub struct ProblemGenSpec {
    pub m: usize,
    pub d: usize,
    /// Fraction of entries that are nonzero, in (0, 1].
    pub density: f64,
    pub seed: u64,
    pub consistency: Consistency,
}

impl ProblemGenSpec {
    pub fn new(m: usize, d: usize, density: f64, seed: u64) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::InvalidSpec("dimensions must be positive".into()));
        }
        if !(density > 0.0 && density <= 1.0) {
            return Err(Error::InvalidSpec(format!("density {density} outside (0, 1]")));
        }
        Ok(ProblemGenSpec { m, d, density, seed, consistency: Consistency::Consistent })
    }
}

/// Parse the inline generator syntax `gen:m=300,d=1200,density=0.1,seed=7`.
pub fn parse_gen_spec(text: &str) -> Result<ProblemGenSpec> {
    let body = text
        .strip_prefix("gen:")
        .ok_or_else(|| Error::InvalidSpec(format!("`{text}` does not start with `gen:`")))?;
    let (mut m, mut d, mut density, mut seed, mut noise) = (None, None, None, 0u64, None);
    for pair in body.split(',') {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::InvalidSpec(format!("`{pair}` is not key=value")))?;
        let bad = |k: &str| Error::InvalidSpec(format!("bad value for `{k}`"));
        match key {
            "m" => m = Some(value.parse::<usize>().map_err(|_| bad(key))?),
            "d" => d = Some(value.parse::<usize>().map_err(|_| bad(key))?),
            "density" => density = Some(value.parse::<f64>().map_err(|_| bad(key))?),
            "seed" => seed = value.parse::<u64>().map_err(|_| bad(key))?,
            "noise" => noise = Some(value.parse::<f64>().map_err(|_| bad(key))?),
            other => return Err(Error::InvalidSpec(format!("unknown key `{other}`"))),
        }
    }
    let m = m.ok_or_else(|| Error::InvalidSpec("missing m".into()))?;
    let d = d.ok_or_else(|| Error::InvalidSpec("missing d".into()))?;
    let density = density.ok_or_else(|| Error::InvalidSpec("missing density".into()))?;
    let mut spec = ProblemGenSpec::new(m, d, density, seed)?;
    if let Some(level) = noise {
        spec.consistency = Consistency::Noisy { noise_level: level };
    }
    Ok(spec)
}

/// Size limit below which generated problems get a dense SVD-based
/// range/perp split of their injected noise.
const SPLIT_DENSE_LIMIT: usize = 40_000;

/// Generate a random sparse problem: A with Bernoulli(density) nonzeros and
/// standard normal values, v_hat standard normal, b = A v_hat plus optional
/// scaled noise. Fully determined by the seed.
pub fn generate_problem(spec: &ProblemGenSpec) -> Result<Problem> {
    let (m, d) = (spec.m, spec.d);
    let mut mat_rng = RngState::new(spec.seed, 1);
    let mut triplets = Vec::new();
    for i in 0..m {
        for j in 0..d {
            if mat_rng.next_f64() < spec.density {
                triplets.push((i, j, mat_rng.next_gaussian()));
            }
        }
    }
    if triplets.is_empty() {
        // expected nnz = round(density m d) >= 1: never ship an all-zero A
        triplets.push((0, 0, mat_rng.next_gaussian()));
    }
    let op = OperatorHandle::csr(CsrMatrix::from_triplets(m, d, &triplets)?);

    let mut sol_rng = RngState::new(spec.seed, 2);
    let v_hat: Vec<f64> = (0..d).map(|_| sol_rng.next_gaussian()).collect();
    let clean = op.apply(&v_hat)?;

    let (rhs, noise) = match spec.consistency {
        Consistency::Consistent => (clean, None),
        Consistency::Noisy { noise_level } => {
            let mut noise_rng = RngState::new(spec.seed, 3);
            let raw: Vec<f64> = (0..m).map(|_| noise_rng.next_gaussian()).collect();
            let raw_norm = norm(&raw);
            let target = noise_level * norm(&clean);
            let scale = if raw_norm > 0.0 { target / raw_norm } else { 0.0 };
            let r: Vec<f64> = raw.iter().map(|x| scale * x).collect();
            let range_noise_norm = if m * d <= SPLIT_DENSE_LIMIT {
                let dense = op.to_dense();
                let split = crate::analysis::split_noise(&dense, m, d, &r)?;
                Some(norm(&op.apply_adjoint(&split.r_range)?))
            } else {
                None
            };
            let rhs: Vec<f64> = clean.iter().zip(&r).map(|(b, ri)| b + ri).collect();
            (rhs, Some(NoiseRecord { norm: norm(&r), r, range_noise_norm }))
        }
    };
    op.reset_counters();
    let mut problem = Problem::new(op, rhs);
    problem.ground_truth = Some(v_hat);
    problem.noise = noise;
    Ok(problem)
}

/// Choice of ground truth for the inverse-integration problem.
#[derive(Debug, Clone)]
pub enum SolutionSpec {
    /// v_hat_i = eps_i (1 + 0.2 eta_i) with eps_i random signs and eta_i
    /// standard normal: a rough signal whose energy concentrates on the
    /// small-singular-value vectors of the running-sum operator.
    Rough,
    Provided(Vec<f64>),
}

/// The discrete inverse-integration problem: the running-sum operator on
/// R^d, a rough (or provided) ground truth, and noise scaled to
/// |r| = noise_level * |A v_hat|. The noise record is retained so the
/// discrepancy principle can be applied when solving.
pub fn make_inverse_integration_problem(
    d: usize,
    solution: SolutionSpec,
    noise_level: f64,
    seed: u64,
) -> Result<Problem> {
    assert!(d >= 2, "inverse integration needs d >= 2");
    assert!(noise_level >= 0.0);
    let op = OperatorHandle::cumsum(d);
    let v_hat = match solution {
        SolutionSpec::Provided(v) => {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: v.len() });
            }
            v
        }
        SolutionSpec::Rough => {
            let mut rng = RngState::new(seed, 1);
            (0..d)
                .map(|_| {
                    let eps = if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 };
                    eps * (1.0 + 0.2 * rng.next_gaussian())
                })
                .collect()
        }
    };
    let clean = op.apply(&v_hat)?;
    let mut noise_rng = RngState::new(seed, 2);
    let raw: Vec<f64> = (0..d).map(|_| noise_rng.next_gaussian()).collect();
    let raw_norm = norm(&raw);
    let target = noise_level * norm(&clean);
    let scale = if raw_norm > 0.0 { target / raw_norm } else { 0.0 };
    let r: Vec<f64> = raw.iter().map(|x| scale * x).collect();
    // the running sum is invertible, so all noise lives in the range
    let range_noise_norm = Some(norm(&op.apply_adjoint(&r)?));
    let rhs: Vec<f64> = clean.iter().zip(&r).map(|(b, ri)| b + ri).collect();
    op.reset_counters();
    let mut problem = Problem::new(op, rhs);
    problem.ground_truth = Some(v_hat);
    problem.noise = Some(NoiseRecord { norm: norm(&r), r, range_noise_norm });
    Ok(problem)
}

fn push_opt(out: &mut String, value: Option<f64>) {
    match value {
        Some(v) if v.is_finite() => {
            let _ = write!(out, "{v}");
        }
        _ => {}
    }
}

/// Write a solver trace as CSV with the schema
/// `k,residual_norm,rel_residual,stepsize,error_norm,ls_residual_norm,apply_count,wall_ns`.
/// Absent optional fields are left empty; floats use shortest round-trip
/// decimals. `rhs_norm` supplies the denominator of rel_residual.
pub fn write_trace_csv(trace: &SolverTrace, rhs_norm: f64, path: &Path) -> Result<()> {
    let mut out = String::from(
        "k,residual_norm,rel_residual,stepsize,error_norm,ls_residual_norm,apply_count,wall_ns\n",
    );
    for rec in &trace.records {
        let _ = write!(out, "{},{},", rec.k, rec.residual_norm);
        push_opt(&mut out, (rhs_norm > 0.0).then(|| rec.residual_norm / rhs_norm));
        out.push(',');
        push_opt(&mut out, Some(rec.stepsize));
        out.push(',');
        push_opt(&mut out, rec.error_norm);
        out.push(',');
        push_opt(&mut out, rec.ls_residual_norm);
        let _ = writeln!(out, ",{},{}", rec.apply_count, rec.wall_ns);
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read back a trace CSV written by `write_trace_csv`. The rel_residual
/// column is derived data and is not restored.
pub fn read_trace_csv(path: &Path) -> Result<Vec<IterationRecord>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::ParseError { line: 1, reason: "empty trace file".into() })?;
    if !header.starts_with("k,residual_norm,rel_residual") {
        return Err(Error::ParseError { line: 1, reason: "unexpected trace header".into() });
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            return Err(Error::ParseError { line: line_no, reason: "expected 8 columns".into() });
        }
        let bad = |what: &str| Error::ParseError { line: line_no, reason: format!("bad {what}") };
        let opt = |s: &str, what: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>().map(Some).map_err(|_| bad(what))
            }
        };
        records.push(IterationRecord {
            k: cols[0].parse().map_err(|_| bad("k"))?,
            residual_norm: cols[1].parse().map_err(|_| bad("residual_norm"))?,
            stepsize: opt(cols[3], "stepsize")?.unwrap_or(f64::NAN),
            error_norm: opt(cols[4], "error_norm")?,
            ls_residual_norm: opt(cols[5], "ls_residual_norm")?,
            apply_count: cols[6].parse().map_err(|_| bad("apply_count"))?,
            wall_ns: cols[7].parse().map_err(|_| bad("wall_ns"))?,
        });
    }
    Ok(records)
}

/// Serialize a report as pretty JSON with sorted keys (serde_json maps are
/// ordered, so nested objects come out in a stable order).
pub fn write_report_json<T: serde::Serialize>(report: &T, path: &Path) -> Result<()> {
    let value = serde_json::to_value(report).expect("report serializes");
    let text = serde_json::to_string_pretty(&value).expect("json renders");
    fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests;
