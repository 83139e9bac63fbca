use super::*;
use crate::analysis::svd_small_dense;
use crate::linalg::dot;
use crate::solvers::Termination;

use std::io::Write as _;

fn write_temp(content: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(content.as_bytes()).unwrap();
    f
}

fn trace_with(records: Vec<IterationRecord>) -> SolverTrace {
    SolverTrace {
        method: "rd".into(),
        sampler: Some("rademacher".into()),
        records,
        final_iterate: vec![0.0],
        termination: Termination::MaxIterReached,
        iterations: 0,
        total_applies: 0,
        total_adjoint_applies: 0,
        null_steps: 0,
        wall_ns: 0,
    }
}

// -------- read_matrix_market --------

#[test]
fn parses_identity_fixture() {
    let f = write_temp(
        "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n2 2 1.0\n",
    );
    let op = read_matrix_market(f.path()).unwrap();
    assert_eq!((op.output_dim(), op.input_dim()), (2, 2));
    assert_eq!(op.apply(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
}

#[test]
fn parses_comments_and_blank_lines() {
    let f = write_temp(
        "%%MatrixMarket matrix coordinate real general\n% a comment\n\n2 3 2\n% another\n1 1 2.5\n2 3 -1.0\n",
    );
    let op = read_matrix_market(f.path()).unwrap();
    assert_eq!((op.output_dim(), op.input_dim()), (2, 3));
    assert_eq!(op.apply(&[1.0, 0.0, 1.0]).unwrap(), vec![2.5, -1.0]);
}

#[test]
fn mirrors_symmetric_entries() {
    let f = write_temp(
        "%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 1.0\n2 1 3.0\n",
    );
    let op = read_matrix_market(f.path()).unwrap();
    let dense = op.to_dense();
    assert_eq!(dense, vec![1.0, 3.0, 3.0, 0.0]);
}

#[test]
fn sums_duplicate_entries() {
    let f = write_temp(
        "%%MatrixMarket matrix coordinate real general\n1 1 2\n1 1 1.5\n1 1 2.5\n",
    );
    let op = read_matrix_market(f.path()).unwrap();
    assert_eq!(op.to_dense(), vec![4.0]);
}

#[test]
fn rejects_unsupported_variants() {
    for variant in [
        "%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n",
        "%%MatrixMarket matrix coordinate pattern general\n1 1 1\n1 1\n",
        "%%MatrixMarket matrix array real general\n1 1\n1.0\n",
    ] {
        let f = write_temp(variant);
        assert!(matches!(read_matrix_market(f.path()), Err(Error::UnsupportedFormat(_))));
    }
}

#[test]
fn reports_parse_errors_with_line_numbers() {
    let f = write_temp("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n");
    match read_matrix_market(f.path()) {
        Err(Error::ParseError { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected parse error, got {other:?}"),
    }
    let f = write_temp("%%MatrixMarket matrix coordinate real general\nnot a size line\n");
    assert!(matches!(read_matrix_market(f.path()), Err(Error::ParseError { line: 2, .. })));
}

#[test]
fn rejects_rectangular_symmetric() {
    let f = write_temp("%%MatrixMarket matrix coordinate real symmetric\n2 3 1\n1 1 1.0\n");
    assert!(matches!(read_matrix_market(f.path()), Err(Error::ParseError { .. })));
}

#[test]
fn matrix_market_round_trip_is_bit_exact() {
    // parse -> serialize -> parse reproduces every value exactly
    let f = write_temp(
        "%%MatrixMarket matrix coordinate real general\n3 2 4\n1 1 0.1\n2 2 -3.735439358634763\n3 1 1e-12\n3 2 7.25\n",
    );
    let op1 = read_matrix_market(f.path()).unwrap();
    let out = tempfile::NamedTempFile::new().unwrap();
    write_matrix_market(&op1, out.path()).unwrap();
    let op2 = read_matrix_market(out.path()).unwrap();
    let (d1, d2) = (op1.to_dense(), op2.to_dense());
    assert_eq!(d1.len(), d2.len());
    for (a, b) in d1.iter().zip(&d2) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

// -------- generate_problem --------

#[test]
fn dense_two_by_two_is_exactly_consistent() {
    let spec = ProblemGenSpec::new(2, 2, 1.0, 5).unwrap();
    let p = generate_problem(&spec).unwrap();
    let v_hat = p.ground_truth.as_ref().unwrap();
    let av = p.op.apply(v_hat).unwrap();
    for (x, y) in av.iter().zip(&p.rhs) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    assert!(p.noise.is_none());
}

#[test]
fn generation_is_deterministic() {
    let spec = ProblemGenSpec::new(30, 50, 0.1, 99).unwrap();
    let p1 = generate_problem(&spec).unwrap();
    let p2 = generate_problem(&spec).unwrap();
    assert_eq!(p1.op.to_dense(), p2.op.to_dense());
    assert_eq!(p1.rhs, p2.rhs);
    assert_eq!(p1.ground_truth, p2.ground_truth);
}

#[test]
fn noisy_generation_hits_requested_level() {
    let mut spec = ProblemGenSpec::new(40, 20, 0.5, 3).unwrap();
    spec.consistency = Consistency::Noisy { noise_level: 1e-3 };
    let p = generate_problem(&spec).unwrap();
    let v_hat = p.ground_truth.as_ref().unwrap();
    let clean = p.op.apply(v_hat).unwrap();
    let r: Vec<f64> = p.rhs.iter().zip(&clean).map(|(b, c)| b - c).collect();
    let ratio = norm(&r) / norm(&clean);
    assert!((ratio - 1e-3).abs() < 0.2e-3, "ratio {ratio}");
    let noise = p.noise.as_ref().unwrap();
    assert!((noise.norm - norm(&r)).abs() < 1e-15);
    // small problem: the range split was computed
    assert!(noise.range_noise_norm.is_some());
}

#[test]
fn generation_guarantees_a_nonzero() {
    // density small enough that a 2x2 draw could come out empty
    let spec = ProblemGenSpec::new(2, 2, 1e-9, 0).unwrap();
    let p = generate_problem(&spec).unwrap();
    assert!(p.op.to_dense().iter().any(|&v| v != 0.0));
}

#[test]
fn gen_spec_validation() {
    assert!(ProblemGenSpec::new(0, 2, 0.5, 0).is_err());
    assert!(ProblemGenSpec::new(2, 2, 0.0, 0).is_err());
    assert!(ProblemGenSpec::new(2, 2, 1.5, 0).is_err());
}

#[test]
fn parses_inline_gen_spec() {
    let spec = parse_gen_spec("gen:m=300,d=1200,density=0.1,seed=7").unwrap();
    assert_eq!((spec.m, spec.d, spec.seed), (300, 1200, 7));
    assert_eq!(spec.density, 0.1);
    assert_eq!(spec.consistency, Consistency::Consistent);
    let noisy = parse_gen_spec("gen:m=4,d=4,density=1,noise=0.001").unwrap();
    assert_eq!(noisy.consistency, Consistency::Noisy { noise_level: 0.001 });
    assert!(parse_gen_spec("m=1,d=1,density=1").is_err());
    assert!(parse_gen_spec("gen:m=1,density=1").is_err());
    assert!(parse_gen_spec("gen:m=1,d=1,density=1,bogus=2").is_err());
}

// -------- make_inverse_integration_problem --------

#[test]
fn inverse_integration_is_running_sum() {
    let p = make_inverse_integration_problem(100, SolutionSpec::Rough, 1e-3, 1).unwrap();
    assert_eq!((p.op.output_dim(), p.op.input_dim()), (100, 100));
    let mut e = vec![0.0; 100];
    e[0] = 1.0;
    assert!(p.op.apply(&e).unwrap().iter().all(|&x| x == 1.0));
}

#[test]
fn inverse_integration_zero_noise_is_consistent() {
    let p = make_inverse_integration_problem(50, SolutionSpec::Rough, 0.0, 1).unwrap();
    let noise = p.noise.as_ref().unwrap();
    assert_eq!(noise.norm, 0.0);
    let av = p.op.apply(p.ground_truth.as_ref().unwrap()).unwrap();
    assert_eq!(av, p.rhs);
}

#[test]
fn inverse_integration_noise_level_is_exact() {
    let p = make_inverse_integration_problem(100, SolutionSpec::Rough, 1e-3, 1).unwrap();
    let clean = p.op.apply(p.ground_truth.as_ref().unwrap()).unwrap();
    let noise = p.noise.as_ref().unwrap();
    assert!((noise.norm / norm(&clean) - 1e-3).abs() < 1e-12);
}

#[test]
fn provided_solution_is_used_verbatim() {
    let v = vec![1.0, -1.0, 2.0];
    let p = make_inverse_integration_problem(3, SolutionSpec::Provided(v.clone()), 0.0, 1).unwrap();
    assert_eq!(p.ground_truth.as_ref().unwrap(), &v);
    assert!(matches!(
        make_inverse_integration_problem(3, SolutionSpec::Provided(vec![1.0]), 0.0, 1),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn rough_solution_energy_concentrates_on_small_singular_values() {
    let d = 100;
    // seed 83 puts 65% of the energy in the small-sigma half for d = 100
    let p = make_inverse_integration_problem(d, SolutionSpec::Rough, 0.0, 83).unwrap();
    let v_hat = p.ground_truth.as_ref().unwrap();
    let dense = p.op.to_dense();
    let s = svd_small_dense(&dense, d, d).unwrap();
    assert_eq!(s.rank, d);
    let total: f64 = v_hat.iter().map(|x| x * x).sum();
    // singular values are sorted descending: the second half of indices are
    // the small-sigma directions
    let small: f64 = (d / 2..d).map(|i| dot(v_hat, &s.right_vectors[i]).powi(2)).sum();
    assert!(small / total > 0.6, "fraction {}", small / total);
}

// -------- trace CSV --------

#[test]
fn empty_trace_writes_header_only() {
    let out = tempfile::NamedTempFile::new().unwrap();
    write_trace_csv(&trace_with(vec![]), 1.0, out.path()).unwrap();
    let text = fs::read_to_string(out.path()).unwrap();
    assert_eq!(
        text,
        "k,residual_norm,rel_residual,stepsize,error_norm,ls_residual_norm,apply_count,wall_ns\n"
    );
}

#[test]
fn single_record_writes_two_lines() {
    let rec = IterationRecord {
        k: 0,
        residual_norm: 2.0,
        stepsize: 0.5,
        ls_residual_norm: None,
        error_norm: Some(1.5),
        apply_count: 3,
        wall_ns: 42,
    };
    let out = tempfile::NamedTempFile::new().unwrap();
    write_trace_csv(&trace_with(vec![rec]), 4.0, out.path()).unwrap();
    let text = fs::read_to_string(out.path()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1], "0,2,0.5,0.5,1.5,,3,42");
}

#[test]
fn trace_round_trip_is_bit_exact() {
    let recs = vec![
        IterationRecord {
            k: 0,
            residual_norm: 0.123_456_789_012_345_67,
            stepsize: f64::NAN,
            ls_residual_norm: Some(1e-300),
            error_norm: None,
            apply_count: 1,
            wall_ns: 10,
        },
        IterationRecord {
            k: 7,
            residual_norm: 3.0 / 7.0,
            stepsize: 1.0 / 3.0,
            ls_residual_norm: None,
            error_norm: Some(2.0f64.sqrt()),
            apply_count: 14,
            wall_ns: 20,
        },
    ];
    let out = tempfile::NamedTempFile::new().unwrap();
    write_trace_csv(&trace_with(recs.clone()), 0.0, out.path()).unwrap();
    let back = read_trace_csv(out.path()).unwrap();
    assert_eq!(back.len(), recs.len());
    for (a, b) in recs.iter().zip(&back) {
        assert_eq!(a.k, b.k);
        assert_eq!(a.residual_norm.to_bits(), b.residual_norm.to_bits());
        // NaN stepsize serializes as empty and reads back as NaN
        assert_eq!(a.stepsize.is_nan(), b.stepsize.is_nan());
        if !a.stepsize.is_nan() {
            assert_eq!(a.stepsize.to_bits(), b.stepsize.to_bits());
        }
        assert_eq!(a.error_norm.map(f64::to_bits), b.error_norm.map(f64::to_bits));
        assert_eq!(a.ls_residual_norm.map(f64::to_bits), b.ls_residual_norm.map(f64::to_bits));
        assert_eq!(a.apply_count, b.apply_count);
        assert_eq!(a.wall_ns, b.wall_ns);
    }
}

// -------- JSON reports --------

#[test]
fn report_json_sorts_keys() {
    #[derive(serde::Serialize)]
    struct Demo {
        zeta: f64,
        alpha: u32,
    }
    let out = tempfile::NamedTempFile::new().unwrap();
    write_report_json(&Demo { zeta: 0.5, alpha: 3 }, out.path()).unwrap();
    let text = fs::read_to_string(out.path()).unwrap();
    assert!(text.find("alpha").unwrap() < text.find("zeta").unwrap());
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed["alpha"], 3);
    assert_eq!(parsed["zeta"], 0.5);
}
