use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use superset::fourier::{Measurement, SparseSignal};
use superset::pruning::RecoveryResult;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_superset"))
        .args(args)
        .current_dir(dir)
        .env_remove("SUPERSET_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn synth_prints_coherence_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["synth", "--family", "k2", "--n", "1000", "--m", "120", "--sigma", "1e-3", "--seed", "7"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).trim(), "coherence 0.9765");

    let signal = SparseSignal::read_text(fs::read(dir.path().join("signal.txt")).unwrap().as_slice()).unwrap();
    assert_eq!(signal.support(), &[100, 101]);
    let (y, sigma) = Measurement::read_csv(fs::read(dir.path().join("measurement.csv")).unwrap().as_slice()).unwrap();
    assert_eq!(sigma, Some(1e-3));
    assert_eq!(y.model().l(), 40);

    // Bit-exact: writing the parsed values reproduces the file.
    let mut again = Vec::new();
    y.write_csv(&mut again, sigma).unwrap();
    assert_eq!(again, fs::read(dir.path().join("measurement.csv")).unwrap());
    let mut again = Vec::new();
    signal.write_text(&mut again).unwrap();
    assert_eq!(again, fs::read(dir.path().join("signal.txt")).unwrap());
}

#[test]
fn synth_rejects_bad_parameters() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["synth", "--family", "k2", "--m", "0"])), 2);
    assert_eq!(
        code(&run(dir.path(), &["synth", "--family", "well-separated", "--n", "100", "--m", "120"])),
        2
    );
    assert_eq!(code(&run(dir.path(), &["synth", "--family", "k9"])), 2);
    assert_eq!(code(&run(dir.path(), &["synth", "--family", "k2", "--sigma", "-1"])), 2);
    assert_eq!(code(&run(dir.path(), &["synth", "--family", "k2", "--n", "999", "--m", "120"])), 2);
    assert_eq!(code(&run(dir.path(), &["bogus"])), 2);
}

#[test]
fn synth_reports_unwritable_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["synth", "--family", "k2", "--signal-out", "missing/dir/s.txt"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn noiseless_recovery_both_methods() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["synth", "--family", "k2"])), 0);
    let o = run(
        dir.path(),
        &["recover", "--input", "measurement.csv", "--truth", "signal.txt", "--method", "both"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    for line in out.lines() {
        assert!(line.contains("support={100,101}"), "{line}");
        let rel: f64 = line.split("relative_error=").nth(1).unwrap().trim().parse().unwrap();
        assert!(rel < 1e-8, "{line}");
    }
    assert_eq!(out.lines().count(), 2);
    for name in ["result.superset.json", "result.pencil.json"] {
        let r = RecoveryResult::read_json(fs::read(dir.path().join(name)).unwrap().as_slice()).unwrap();
        assert_eq!(r.support, vec![100, 101]);
    }
}

#[test]
fn recover_error_paths() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("garbage.csv"), "not a measurement\n").unwrap();
    assert_eq!(code(&run(dir.path(), &["recover", "--input", "garbage.csv"])), 3);
    assert_eq!(code(&run(dir.path(), &["recover", "--input", "absent.csv"])), 3);
    assert_eq!(code(&run(dir.path(), &["recover"])), 2);

    assert_eq!(code(&run(dir.path(), &["synth", "--family", "k2", "--m", "30"])), 0);
    fs::write(dir.path().join("bad_truth.txt"), "n 1000\n5 x y\n").unwrap();
    assert_eq!(
        code(&run(dir.path(), &["recover", "--input", "measurement.csv", "--truth", "bad_truth.txt"])),
        3
    );
    // L must stay below m.
    assert_eq!(code(&run(dir.path(), &["recover", "--input", "measurement.csv", "--l", "30"])), 2);
    assert_eq!(
        code(&run(dir.path(), &["recover", "--input", "measurement.csv", "--method", "pencil", "--pencil-c", "0"])),
        2
    );
}

#[test]
fn recover_exit_code_for_empty_estimate() {
    // Pure noise far above the denoising threshold of nothing: a zero
    // measurement leaves the pencil with no eigenvalue.
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("# n=64 m=12 L=4\nj,re,im\n");
    for j in 0..12 {
        csv.push_str(&format!("{j},0,0\n"));
    }
    fs::write(dir.path().join("zero.csv"), csv).unwrap();
    let o = run(dir.path(), &["recover", "--input", "zero.csv", "--method", "pencil", "--sigma", "0.1"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn recover_exit_code_for_over_complete() {
    // Generic data fills the whole Hankel range, so every grid atom passes
    // the noiseless angle test: far more atoms than samples.
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("# n=64 m=12 L=4\nj,re,im\n");
    for j in 0..12 {
        csv.push_str(&format!("{j},{},{}\n", (j * j % 7) as f64 - 3.0, (j % 5) as f64 * 0.5));
    }
    fs::write(dir.path().join("generic.csv"), csv).unwrap();
    let o = run(dir.path(), &["recover", "--input", "generic.csv", "--method", "noiseless"]);
    assert_eq!(code(&o), 5, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn noiseless_method_recovers_exactly() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["synth", "--family", "k3", "--m", "40"])), 0);
    let o = run(
        dir.path(),
        &["recover", "--input", "measurement.csv", "--truth", "signal.txt", "--method", "noiseless"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("noiseless support={100,101,102}"));
}

#[test]
fn phase_diagram_smoke_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "phase-diagram",
        "--family",
        "k2",
        "--trials",
        "5",
        "--sigma-grid",
        "-3.5:-2:0.5",
        "--m-grid",
        "40:220:60",
        "--pgm",
        "--out-dir",
        "a",
    ];
    let o = run(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 2);
    let csv = fs::read_to_string(dir.path().join("a/k2_superset.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "m,log10(1-mu),-3.5,-3,-2.5,-2");
    assert_eq!(csv.lines().count(), 5);
    assert!(dir.path().join("a/k2_pencil.pgm").exists());
    assert!(!dir.path().join("a/k2_superset.progress.jsonl").exists());

    let mut b = args.to_vec();
    *b.last_mut().unwrap() = "b";
    let o = Command::new(env!("CARGO_BIN_EXE_superset"))
        .args(&b)
        .current_dir(dir.path())
        .env("SUPERSET_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    for f in ["k2_superset.csv", "k2_superset.json", "k2_pencil.csv", "k2_pencil.pgm"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn phase_diagram_resumes_from_progress_file() {
    let dir = tempfile::tempdir().unwrap();
    let base = [
        "phase-diagram", "--family", "k2", "--trials", "2", "--sigma-grid", "-3,-2", "--m-grid", "40,80",
        "--methods", "superset",
    ];
    let mut full = base.to_vec();
    full.extend(["--out-dir", "full"]);
    assert_eq!(code(&run(dir.path(), &full)), 0);
    let json = fs::read_to_string(dir.path().join("full/k2_superset.json")).unwrap();
    let diagram: superset::experiments::PhaseDiagram = serde_json::from_str(&json).unwrap();

    // A partial progress file with a fabricated count for cell 0 and a torn
    // last line; the resumed run must keep the recorded cell.
    fs::create_dir(dir.path().join("part")).unwrap();
    let spec_line = serde_json::to_string(&diagram.spec).unwrap();
    fs::write(
        dir.path().join("part/k2_superset.progress.jsonl"),
        format!("{spec_line}\n{{\"cell\":0,\"successes\":1,\"trials\":2}}\n{{\"cell\":1,\"succ"),
    )
    .unwrap();
    let mut part = base.to_vec();
    part.extend(["--out-dir", "part"]);
    assert_eq!(code(&run(dir.path(), &part)), 0);
    let json = fs::read_to_string(dir.path().join("part/k2_superset.json")).unwrap();
    let resumed: superset::experiments::PhaseDiagram = serde_json::from_str(&json).unwrap();
    assert_eq!(resumed.successes[0][0], 1);
    assert_eq!(resumed.successes[0][1], diagram.successes[0][1]);
    assert_eq!(resumed.successes[1], diagram.successes[1]);
}

#[test]
fn phase_diagram_config_file_and_precedence() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"family": "k3", "trials": 1, "m_grid": "60", "sigma_grid": "-3", "methods": "pencil", "out_dir": "cfgout"}"#,
    )
    .unwrap();
    let o = run(dir.path(), &["phase-diagram", "--config", "cfg.json", "--family", "k2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let json = fs::read_to_string(dir.path().join("cfgout/k2_pencil.json")).unwrap();
    let d: superset::experiments::PhaseDiagram = serde_json::from_str(&json).unwrap();
    assert_eq!(d.spec.trials, 1);
    assert_eq!(d.spec.m_grid, vec![60]);

    fs::write(dir.path().join("bad.json"), r#"{"trails": 3}"#).unwrap();
    assert_eq!(code(&run(dir.path(), &["phase-diagram", "--config", "bad.json"])), 3);
    fs::write(dir.path().join("zero.json"), r#"{"trials": 0}"#).unwrap();
    assert_eq!(code(&run(dir.path(), &["phase-diagram", "--config", "zero.json"])), 2);
}

#[test]
fn phase_diagram_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["phase-diagram", "--trials", "0"])), 2);
    assert_eq!(code(&run(dir.path(), &["phase-diagram", "--methods", "noiseless"])), 2);
    assert_eq!(code(&run(dir.path(), &["phase-diagram", "--m-grid", "2000", "--trials", "1"])), 2);
    assert_eq!(code(&run(dir.path(), &["phase-diagram", "--m-grid", "10.5", "--trials", "1"])), 2);
    assert_eq!(code(&run(dir.path(), &["phase-diagram", "--sigma-grid", "-2:-3:0.5"])), 2);
    assert_eq!(code(&run(dir.path(), &["--threads", "0", "coherence", "--m", "120"])), 2);
}

#[test]
fn coherence_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["coherence", "--n", "1000", "--m", "120"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).trim(), "coherence 0.9765");
    let o = run(dir.path(), &["coherence", "--m-grid", "10:30:10"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 4);
    assert_eq!(code(&run(dir.path(), &["coherence"])), 2);
    assert_eq!(code(&run(dir.path(), &["coherence", "--m", "2000"])), 2);
}
