mod common;

use std::f64::consts::FRAC_PI_4;

use blscale_core::{
    bl_estimate, derive_adjoint_params, make_random_feasible, make_remark_datum, maximize_gaussian,
    rank1_scalar_oracle, run_flow, sandwich_check, DatumFile, FlowConfig, FlowConfig32, SandwichConfig, Termination,
};
use common::ensemble_member;

#[test]
fn documented_random_example_is_recovered() {
    let nd = make_random_feasible::<f64>(3, 3, &[2, 2, 2], &[0.5; 3], 7).unwrap();
    let expected = nd.expected.unwrap().bl_log;
    let est = bl_estimate(&run_flow(&nd.datum, &FlowConfig::default())).unwrap();
    assert!((est.log_value - expected).abs() < 1e-6, "{} vs {expected}", est.log_value);
}

#[test]
fn remark_estimate_at_tight_tolerance() {
    let d = make_remark_datum::<f64>(FRAC_PI_4).unwrap().datum;
    let config = FlowConfig {
        max_iters: 1_000_000,
        geo_tol: 1e-12,
        ..FlowConfig::default()
    };
    let est = bl_estimate(&run_flow(&d, &config)).unwrap();
    let exact = 2f64.powf(0.25);
    assert!((est.value - exact).abs() / exact < 1e-6);
    assert!(est.value <= exact);
}

#[test]
fn remark_sandwich_with_transport() {
    let d = make_remark_datum::<f64>(FRAC_PI_4).unwrap().datum;
    let config = FlowConfig {
        max_iters: 200_000,
        geo_tol: 1e-10,
        ..FlowConfig::default()
    };
    let trace = run_flow(&d, &config);
    let est = bl_estimate(&trace).unwrap();
    let params = derive_adjoint_params(&d, &[0.5, 0.25, 0.25], 0.5).unwrap();
    let rep = sandwich_check(&d, &params, est.log_value, Some(&trace.last.transport), &SandwichConfig::default())
        .unwrap();
    assert!(rep.upper_ok, "{rep:?}");
    assert!(rep.lower_ok, "{rep:?}");
    assert!(rep.margin_upper >= 0.0);
}

#[test]
fn oracles_bracket_the_flow() {
    let d = make_remark_datum::<f64>(1.0).unwrap().datum;
    let gaussian = maximize_gaussian(&d, 5_000, 1e-14).unwrap().log_bl_lower;
    let oracle = rank1_scalar_oracle(&d, 25).unwrap();
    let exact = -0.5 * 1f64.sin().ln();
    assert!(gaussian <= exact + 1e-12);
    assert!((oracle - exact).abs() < 1e-9);
}

#[test]
fn single_precision_flow() {
    let nd = ensemble_member(3);
    let d32 = nd.datum.cast::<f32>();
    let config = FlowConfig32 {
        geo_tol: 1e-6,
        stall_tol: 1e-9,
        ..FlowConfig32::default()
    };
    let trace = run_flow(&d32, &config);
    assert_eq!(trace.termination, Termination::Converged);
    let est = bl_estimate(&trace).unwrap();
    let expected = nd.expected.unwrap().bl_log;
    assert!((est.log_value as f64 - expected).abs() < 1e-3);
}

#[test]
fn trace_files_round_trip() {
    let nd = ensemble_member(2);
    let trace = run_flow(&nd.datum, &FlowConfig::default());
    let mut csv_bytes = Vec::new();
    trace.write_csv(&mut csv_bytes).unwrap();
    let text = String::from_utf8(csv_bytes).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "k,isotropy_defect,log_scale,cumulative_log_scale,bl_estimate"
    );
    assert_eq!(lines.count(), trace.records.len());

    let mut json = Vec::new();
    trace.write_json(&mut json).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&json).unwrap();
    assert_eq!(v["records"].as_array().unwrap().len(), trace.records.len());
    assert_eq!(v["termination"]["status"], "converged");
}

#[test]
fn datum_file_preserves_expected_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rf.json");
    let nd = ensemble_member(11);
    let expected = nd.expected.clone().unwrap().bl_log;
    DatumFile::from(nd).write(&path).unwrap();
    let back = DatumFile::read(&path).unwrap();
    assert_eq!(back.expected.unwrap().bl_log, expected);
    let est = bl_estimate(&run_flow(&back.datum, &FlowConfig::default())).unwrap();
    assert!((est.log_value - expected).abs() < 1e-6);
}
