//! End-to-end tests of the `gsg` binary: exit codes, error objects, output
//! shapes, and byte-level determinism.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gsg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsg"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, contents: &str) {
    std::fs::write(dir.join(name), contents).unwrap();
}

fn read_json(dir: &Path, name: &str) -> Value {
    let raw = std::fs::read_to_string(dir.join(name)).unwrap();
    serde_json::from_str(&raw).unwrap()
}

fn stderr_error(out: &Output) -> Value {
    let raw = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(raw.trim()).unwrap_or_else(|_| panic!("stderr not JSON: {raw}"))
}

#[test]
fn empty_circuit_simulates_to_vacuum() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "empty.json", r#"{"n_modes":1,"elements":[]}"#);
    let out = gsg(dir.path(), &["simulate", "empty.json", "--out", "state.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(dir.path(), "state.json");
    assert_eq!(doc["state"]["n_modes"], 1);
    assert_eq!(doc["state"]["mean"], serde_json::json!([0.0, 0.0]));
    assert_eq!(doc["state"]["cov"][0][0], 0.5);
    assert_eq!(doc["state"]["cov"][0][1], 0.0);
    assert_eq!(doc["state"]["cov"][1][1], 0.5);
    assert_eq!(doc["run_config"]["command"], "simulate");

    // identical invocations produce identical bytes
    let first = std::fs::read(dir.path().join("state.json")).unwrap();
    let out = gsg(dir.path(), &["simulate", "empty.json", "--out", "state.json"]);
    assert!(out.status.success());
    let second = std::fs::read(dir.path().join("state.json")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn exit_codes_distinguish_failure_modes() {
    let dir = tempfile::tempdir().unwrap();
    // unknown subcommand
    let out = gsg(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_error(&out)["error"]["kind"], "usage");

    // missing input file
    let out = gsg(dir.path(), &["simulate", "missing.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_error(&out)["error"]["kind"], "io");

    // unparseable input file
    write(dir.path(), "broken.json", "{nope");
    let out = gsg(dir.path(), &["simulate", "broken.json"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stderr_error(&out)["error"]["kind"], "parse");

    // parsed but out of range
    write(dir.path(), "hot.json", r#"{"v1":2.0}"#);
    let out = gsg(dir.path(), &["chip", "hot.json"]);
    assert_eq!(out.status.code(), Some(5));
    assert_eq!(stderr_error(&out)["error"]["kind"], "validation");

    // numerically impossible request: an unsqueezed signal never crosses
    // the fidelity level, so the threshold bisection cannot bracket
    let out = gsg(
        dir.path(),
        &["fit-bound", "--fidelity", "0.95", "--grid", "0:1:3", "--out", "fit.json"],
    );
    assert_eq!(out.status.code(), Some(6));
    assert_eq!(stderr_error(&out)["error"]["kind"], "numerical");

    // malformed grid syntax
    let out = gsg(
        dir.path(),
        &["sweep-eta", "--r", "1.0", "--alpha", "0.5", "--grid", "oops", "--out", "c.csv"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_error(&out)["error"]["kind"], "usage");
}

#[test]
fn chip_frame_of_zeros_yields_vacuum_signals() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "zero.json", "{}");
    let out = gsg(dir.path(), &["chip", "zero.json", "--out", "chip.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(dir.path(), "chip.json");
    let reduced = &doc["reduced"];
    assert_eq!(reduced["n_modes"], 2);
    for i in 0..4 {
        assert_eq!(reduced["mean"][i], 0.0);
        for j in 0..4 {
            let expect = if i == j { 0.5 } else { 0.0 };
            assert_eq!(reduced["cov"][i][j], expect, "cov[{i}][{j}]");
        }
    }
    // the undeposited beam leaves through the last rail
    let full_mean = doc["state"]["mean"].as_array().unwrap();
    let beam_x = full_mean[4].as_f64().unwrap();
    assert!(beam_x.abs() > 1.0);
}

#[test]
fn compile_then_simulate_round_trips_a_two_mode_target() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "target.json",
        r#"{"n_modes":2,
            "alpha":[[0.3,0.1],[-0.2,0.4]],
            "zeta":[[[0.7071067811865476,0.0],[0.7071067811865475,0.0]],
                    [[-0.7071067811865475,0.0],[0.7071067811865476,0.0]]],
            "r":[0.8,0.5]}"#,
    );
    let out = gsg(dir.path(), &["compile", "target.json", "--out", "prog.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(dir.path(), "prog.json");
    let fidelity = doc["metadata"]["achieved_fidelity"].as_f64().unwrap();
    assert!(fidelity >= 0.999, "lossless round trip fidelity {fidelity}");
    assert!(doc["voltages"].is_object(), "two-mode targets map to voltages");
    let v1 = doc["voltages"]["v1"].as_f64().unwrap();
    assert!((v1 - 0.8).abs() < 1e-9, "strongest squeezer drive {v1}");

    // the emitted program is itself simulable
    let program = serde_json::to_string(&doc["program"]).unwrap();
    write(dir.path(), "prog_only.json", &program);
    let out = gsg(dir.path(), &["simulate", "prog_only.json", "--out", "sim.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sim = read_json(dir.path(), "sim.json");
    assert_eq!(sim["reduced"]["n_modes"], 2);
}

#[test]
fn wigner_reads_chip_output_and_tabulates_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "frame.json", r#"{"v1":1.0,"v5":1.0}"#);
    let out = gsg(dir.path(), &["chip", "frame.json", "--out", "chip.json"]);
    assert!(out.status.success());
    let out = gsg(
        dir.path(),
        &["wigner", "chip.json", "--axes", "x1,p1", "--range", "-2:2", "--n", "5", "--out", "w.csv"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("w.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# label: wigner_slice"));
    let data: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], "x1,p1,wigner");
    assert_eq!(data.len(), 1 + 25);
    // squeezed along x: the ridge at the origin beats the x = +-2 wings
    let value = |line: &str| -> f64 { line.split(',').nth(2).unwrap().parse().unwrap() };
    let center = value(data[13]);
    let wing = value(data[11]);
    assert!(center > 10.0 * wing);

    // pinning a spectator quadrature shifts the slice deterministically
    let out = gsg(
        dir.path(),
        &["wigner", "chip.json", "--axes", "x1,p1", "--fixed", "x2=1.5", "--range", "-2:2", "--n", "5", "--out", "w2.csv"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv2 = std::fs::read_to_string(dir.path().join("w2.csv")).unwrap();
    assert_ne!(csv, csv2);

    let out = gsg(
        dir.path(),
        &["wigner", "chip.json", "--axes", "x1,x9", "--range", "-2:2", "--n", "5", "--out", "w3.csv"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_eta_matches_reference_fidelities() {
    let dir = tempfile::tempdir().unwrap();
    let out = gsg(
        dir.path(),
        &["sweep-eta", "--r", "1.73", "--alpha", "0.5", "--grid", "1e-4:1e-2:3log", "--out", "c.csv"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("c.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("eta"))
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][0], 1e-4);
    assert_eq!(rows[2][0], 1e-2);
    assert!((rows[0][2] - 0.9992543462574791).abs() < 1e-9);
    assert!((rows[2][2] - 0.9305606212775553).abs() < 1e-9);
    assert!(rows[0][2] > rows[1][2] && rows[1][2] > rows[2][2]);
}

#[test]
fn fit_bound_reproduces_the_strong_squeezing_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let out = gsg(dir.path(), &["fit-bound", "--fidelity", "0.95", "--out", "fit.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(dir.path(), "fit.json");
    let (a, b, c) = (
        doc["fit"]["a"].as_f64().unwrap(),
        doc["fit"]["b"].as_f64().unwrap(),
        doc["fit"]["c"].as_f64().unwrap(),
    );
    let at_endpoint = a * 1.73f64.powf(b) + c;
    assert!((at_endpoint - (-21.5)).abs() <= 1.0, "curve gives {at_endpoint} dB");
    assert!(doc["reference_max_gap_db"].as_f64().unwrap() < 1.5);
}

#[test]
fn sweeps_are_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "sweep-loss", "--levels", "0,2.2", "--mitigate", "--r-grid", "0.2:1.0:4", "--out", "l.csv",
    ];
    let out = gsg(dir.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let baseline = std::fs::read(dir.path().join("l.csv")).unwrap();
    for threads in ["1", "3"] {
        let out = Command::new(env!("CARGO_BIN_EXE_gsg"))
            .current_dir(dir.path())
            .env("GSG_THREADS", threads)
            .args(args)
            .output()
            .unwrap();
        assert!(out.status.success());
        let rerun = std::fs::read(dir.path().join("l.csv")).unwrap();
        assert_eq!(baseline, rerun, "GSG_THREADS={threads} changed the bytes");
    }
    let out = Command::new(env!("CARGO_BIN_EXE_gsg"))
        .current_dir(dir.path())
        .env("GSG_THREADS", "many")
        .args(args)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_is_recorded_in_outputs() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "empty.json", r#"{"n_modes":1,"elements":[]}"#);
    let out = gsg(dir.path(), &["simulate", "empty.json", "--seed", "7", "--out", "s.json"]);
    assert!(out.status.success());
    assert_eq!(read_json(dir.path(), "s.json")["run_config"]["seed"], 7);
}

#[test]
fn oracle_flag_attaches_photon_basis_moments() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "circ.json",
        r#"{"n_modes":2,"elements":[
            {"kind":"Squeezer","r":0.5,"phi":0.0,"mode":0},
            {"kind":"BeamSplitter","eta":0.3,"modes":[0,1]},
            {"kind":"Displace","alpha":[0.4,-0.2],"mode":1}]}"#,
    );
    let out = gsg(
        dir.path(),
        &["simulate", "circ.json", "--oracle", "--cutoff", "24", "--out", "sim.json"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(dir.path(), "sim.json");
    assert_eq!(doc["fock"]["cutoff"], 24);
    let gm = doc["state"]["mean"].as_array().unwrap();
    let fm = doc["fock"]["mean"].as_array().unwrap();
    for (a, b) in gm.iter().zip(fm) {
        assert!((a.as_f64().unwrap() - b.as_f64().unwrap()).abs() < 1e-8);
    }

    // loss channels have no photon-basis counterpart here
    write(dir.path(), "model.json", r#"{"mzi_loss_db":2.2,"squeezer_loss_db":0.7}"#);
    let out = gsg(
        dir.path(),
        &["simulate", "circ.json", "--loss", "model.json", "--oracle"],
    );
    assert_eq!(out.status.code(), Some(5));

    // but the Gaussian path folds them in fine
    let out = gsg(
        dir.path(),
        &["simulate", "circ.json", "--loss", "model.json", "--out", "lossy.json"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lossy = read_json(dir.path(), "lossy.json");
    let pure = doc["state"]["cov"][0][0].as_f64().unwrap();
    let mixed = lossy["state"]["cov"][0][0].as_f64().unwrap();
    assert!(mixed > pure, "loss widens the squeezed quadrature");
}
