//! End-to-end tests of the `netgain` binary: exit codes, schemas, fixture
//! values, and byte-level determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use netgain::allocator::AllocationJson;
use netgain::analysis::hinf_norm;
use netgain::graph::NetworkFile;
use netgain::simulator::PiecewiseConstantSignal;
use netgain_cli::{AnalyzeJson, BoundJson, SignedJson};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn netgain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netgain"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

fn write_temp(dir: &tempfile::TempDir, name: &str, content: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, content).unwrap();
    path
}

#[test]
fn analyze_certifies_the_optimal_fixture() {
    let out = netgain(&[
        "analyze",
        "--input",
        fixture("diamond_optimal.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let report: AnalyzeJson = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert!((report.certificate.gamma.0 - 5.0).abs() <= 1e-9);
    assert!(report.certificate.lmi_margin.unwrap().abs() <= 1e-6);
    assert!(!report.certificate.bound.0.is_finite());
    assert_eq!(report.port_resistances.len(), 2);
    assert!((report.port_resistances[0].0 - 25.0 / 6.0).abs() <= 1e-9);
    assert!((report.port_resistances[1].0 - 5.0 / 3.0).abs() <= 1e-9);
}

#[test]
fn analyze_reports_infinite_gain_with_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_temp(
        &dir,
        "split.json",
        r#"{"n": 4,
            "edges": [{"u": 0, "v": 1, "w": 1.0}, {"u": 2, "v": 3, "w": 1.0}],
            "ports": [{"in": 0, "out": 2}]}"#,
    );
    let out = netgain(&["analyze", "--input", input.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let report: AnalyzeJson = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert!(!report.certificate.gamma.0.is_finite());
    assert!(report.certificate.gain_matrix.is_none());
    let port = report.disconnected_port.unwrap();
    assert_eq!((port.inflow, port.outflow), (0, 2));
    assert!(stdout_of(&out).contains("\"gamma\": \"inf\""));
}

#[test]
fn analyze_single_edge_bound_is_tight() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_temp(
        &dir,
        "edge.json",
        r#"{"n": 2, "edges": [{"u": 0, "v": 1, "w": 0.5}], "ports": [{"in": 0, "out": 1}]}"#,
    );
    let out = netgain(&["analyze", "--input", input.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report: AnalyzeJson = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert!((report.certificate.gamma.0 - 2.0).abs() <= 1e-10);
    assert!((report.certificate.bound.0 - 2.0).abs() <= 1e-10);
}

#[test]
fn malformed_json_exits_one_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_temp(&dir, "broken.json", "{ \"n\": 2, \"edges\": [");
    let out = netgain(&["analyze", "--input", input.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(
        err.contains("line") && err.contains("column"),
        "missing diagnostics: {err}"
    );
}

#[test]
fn analyze_rejects_free_weights_and_optimize_rejects_fixed() {
    let out = netgain(&[
        "analyze",
        "--input",
        fixture("diamond_topology.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("free"));

    let out = netgain(&[
        "optimize",
        "--input",
        fixture("diamond_optimal.json").to_str().unwrap(),
        "--budget",
        "1.0",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("free"));
}

#[test]
fn optimize_recovers_the_known_optimum() {
    let out = netgain(&[
        "optimize",
        "--input",
        fixture("diamond_topology.json").to_str().unwrap(),
        "--budget",
        "1.0",
        "--oracle",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let report: AllocationJson = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert!((report.gamma - 5.0).abs() <= 1e-3, "gamma = {}", report.gamma);
    let sum: f64 = report.weights.iter().sum();
    assert!((sum - 1.0).abs() <= 1e-9);
    assert!(report.suboptimality_vs_oracle.unwrap() <= 0.05 * 5.0);

    // Budget scaling: gamma*(2) = gamma*(1)/2.
    let out2 = netgain(&[
        "optimize",
        "--input",
        fixture("diamond_topology.json").to_str().unwrap(),
        "--budget",
        "2.0",
    ]);
    let report2: AllocationJson = serde_json::from_str(&stdout_of(&out2)).unwrap();
    assert!(
        (report2.gamma - 2.5).abs() <= 1e-3,
        "gamma at budget 2 = {}",
        report2.gamma
    );
}

#[test]
fn optimize_infeasible_topology_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_temp(
        &dir,
        "island.json",
        r#"{"n": 4,
            "edges": [{"u": 0, "v": 1}, {"u": 1, "v": 2}],
            "ports": [{"in": 0, "out": 3}]}"#,
    );
    let out = netgain(&[
        "optimize",
        "--input",
        input.to_str().unwrap(),
        "--budget",
        "1.0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("infeasible"));
}

#[test]
fn simulate_reproduces_the_verification_curves() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("trace.csv");
    let out = netgain(&[
        "simulate",
        "--input",
        fixture("diamond_optimal.json").to_str().unwrap(),
        "--signal",
        fixture("two_pulse_input.json").to_str().unwrap(),
        "--output",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains("holds"));

    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,x_0,x_1,x_2,x_3,y_0,y_1,d_l2_running,y_l2_running,gamma_times_d_l2"
    );
    let last = csv.lines().last().unwrap();
    let cols: Vec<f64> = last.split(',').map(|x| x.parse().unwrap()).collect();
    let scaled_input = cols[cols.len() - 1];
    let output_norm = cols[cols.len() - 2];
    assert!(
        (scaled_input - 5.0 * 3.0f64.sqrt()).abs() <= 1e-6,
        "gamma ||d|| = {scaled_input}"
    );
    assert!(output_norm <= scaled_input);
}

#[test]
fn simulate_zero_input_gives_zero_trace() {
    let dir = tempfile::tempdir().unwrap();
    let signal = write_temp(
        &dir,
        "zero.json",
        r#"{"breakpoints": [], "values": [], "after": [0.0, 0.0]}"#,
    );
    let out = netgain(&[
        "simulate",
        "--input",
        fixture("diamond_optimal.json").to_str().unwrap(),
        "--signal",
        signal.to_str().unwrap(),
        "--t-final",
        "1.0",
    ]);
    assert_eq!(out.status.code(), Some(0));
    for line in stdout_of(&out).lines().skip(1) {
        for value in line.split(',').skip(1) {
            assert_eq!(value.parse::<f64>().unwrap(), 0.0);
        }
    }
}

#[test]
fn simulate_flags_a_halved_gain_under_worst_case_input() {
    // Build the worst-case disturbance from the certificate: hold the
    // achieving direction long enough for the running ratio to approach
    // the true gain, then check against half of it.
    let text = std::fs::read_to_string(fixture("diamond_optimal.json")).unwrap();
    let file = NetworkFile::from_json(&text).unwrap();
    let graph = file.fixed_graph().unwrap();
    let ports = file.port_set().unwrap();
    let cert = hinf_norm(&graph, &ports)
        .unwrap()
        .expect_finite("fixture gain");
    let rate = graph
        .laplacian()
        .spectrum()
        .smallest_positive()
        .unwrap();
    let hold = 50.0 / rate;
    let direction: Vec<f64> = cert.achieving_direction.iter().copied().collect();
    let signal = PiecewiseConstantSignal::new(
        vec![hold],
        vec![direction],
        vec![0.0; ports.len()],
    )
    .unwrap();

    let dir = tempfile::tempdir().unwrap();
    let signal_path = write_temp(&dir, "worst.json", &signal.to_json());
    let halved = format!("{}", 0.5 * cert.gamma);
    let out = netgain(&[
        "simulate",
        "--input",
        fixture("diamond_optimal.json").to_str().unwrap(),
        "--signal",
        signal_path.to_str().unwrap(),
        "--gamma",
        &halved,
        "--t-final",
        &format!("{hold}"),
        "--dt",
        "0.01",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(
        stderr_of(&out).contains("violated"),
        "stderr: {}",
        stderr_of(&out)
    );
}

#[test]
fn check_signed_matches_the_analytic_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let keep = write_temp(
        &dir,
        "keep.json",
        r#"{"n": 3, "edges": [
            {"u": 0, "v": 1, "w": 1.0}, {"u": 0, "v": 2, "w": 1.0},
            {"u": 1, "v": 2, "w": 1.0}, {"u": 0, "v": 1, "w": -1.4}]}"#,
    );
    let out = netgain(&["check-signed", "--input", keep.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report: SignedJson = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert!(report.psd);
    assert!((report.threshold.unwrap() - 1.5).abs() <= 1e-9);

    let lose = write_temp(
        &dir,
        "lose.json",
        r#"{"n": 3, "edges": [
            {"u": 0, "v": 1, "w": 1.0}, {"u": 0, "v": 2, "w": 1.0},
            {"u": 1, "v": 2, "w": 1.0}, {"u": 0, "v": 1, "w": -1.6}]}"#,
    );
    let out = netgain(&["check-signed", "--input", lose.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report: SignedJson = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert!(!report.psd);
    assert!(report.lambda_min < 0.0);
}

#[test]
fn check_signed_routes_multiple_negatives_to_numeric_mode() {
    let dir = tempfile::tempdir().unwrap();
    let two = write_temp(
        &dir,
        "two.json",
        r#"{"n": 4, "edges": [
            {"u": 0, "v": 1, "w": 2.0}, {"u": 1, "v": 2, "w": 2.0},
            {"u": 2, "v": 3, "w": 2.0}, {"u": 0, "v": 2, "w": -0.1},
            {"u": 1, "v": 3, "w": -0.1}]}"#,
    );
    let out = netgain(&["check-signed", "--input", two.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("--numeric-only"));

    let out = netgain(&[
        "check-signed",
        "--input",
        two.to_str().unwrap(),
        "--numeric-only",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report: SignedJson = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert!(report.threshold.is_none());
    assert_eq!(report.negative_edges, 2);
    assert!(report.psd);
}

#[test]
fn bound_command_reports_the_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_temp(
        &dir,
        "edge.json",
        r#"{"n": 2, "edges": [{"u": 0, "v": 1, "w": 0.25}], "ports": [{"in": 0, "out": 1}]}"#,
    );
    let out = netgain(&["bound", "--input", input.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report: BoundJson = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert!((report.bound.0 - 4.0).abs() <= 1e-10);
    assert!((report.lambda2 - 0.5).abs() <= 1e-10);
    assert!((report.port_gram_lambda_max - 2.0).abs() <= 1e-12);

    let out = netgain(&[
        "bound",
        "--input",
        fixture("diamond_optimal.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn identical_config_and_seed_give_identical_bytes() {
    let topology = fixture("diamond_topology.json");
    let args = [
        "optimize",
        "--input",
        topology.to_str().unwrap(),
        "--budget",
        "1.0",
        "--seed",
        "42",
    ];
    let a = netgain(&args);
    let b = netgain(&args);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.status.code(), b.status.code());

    let optimal = fixture("diamond_optimal.json");
    let analyze = ["analyze", "--input", optimal.to_str().unwrap()];
    let a = netgain(&analyze);
    let b = netgain(&analyze);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn emitted_json_reparses_under_the_schema() {
    let out = netgain(&[
        "analyze",
        "--input",
        fixture("diamond_optimal.json").to_str().unwrap(),
    ]);
    let text = stdout_of(&out);
    let report: AnalyzeJson = serde_json::from_str(&text).unwrap();
    let round = serde_json::to_string(&report).unwrap();
    let again: AnalyzeJson = serde_json::from_str(&round).unwrap();
    assert_eq!(report, again);

    // Fixture files themselves parse under the network schema.
    for name in ["diamond_topology.json", "diamond_optimal.json"] {
        let text = std::fs::read_to_string(fixture(name)).unwrap();
        NetworkFile::from_json(&text).unwrap();
    }
    let text = std::fs::read_to_string(fixture("two_pulse_input.json")).unwrap();
    PiecewiseConstantSignal::from_json(&text).unwrap();
}
