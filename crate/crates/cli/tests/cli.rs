use std::path::Path;
use std::process::{Command, Output};

fn dsfdi(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsfdi"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn dsfdi")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn source(m: usize, seed: u64, segments: &str) -> String {
    format!(
        r#"{{"kind": "synthetic", "n_x": 3, "n_u": 2, "m": {m}, "latent_dim": 2, "noise_std": 0.01,
            "seed": {seed}, "system_seed": 5, "maneuver_mismatch": 1.0, "maneuver_segments": {segments}}}"#
    )
}

fn write_config(dir: &Path) {
    let train = source(3000, 1, r#"[{"start": 500, "stop": 600, "intensity": 3.0}]"#);
    let val = source(1000, 2, "[]");
    let cfg = format!(r#"{{"train": [{train}], "validation": {val}}}"#);
    std::fs::write(dir.join("cfg.json"), cfg).unwrap();
}

#[test]
fn synth_writes_a_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let synth = r#"{"n_x": 3, "n_u": 2, "m": 200, "latent_dim": 2, "noise_std": 0.01, "seed": 4}"#;
    std::fs::write(dir.path().join("synth.json"), synth).unwrap();
    let out = dsfdi(&["synth", "--config", "synth.json", "--out", "flight.csv"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));

    let text = std::fs::read_to_string(dir.path().join("flight.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x1,x2,x3,u1,u2");
    assert_eq!(lines.count(), 200);

    let again = dsfdi(&["synth", "--config", "synth.json", "--seed", "5", "--out", "other.csv"], dir.path());
    assert!(again.status.success());
    assert_ne!(text, std::fs::read_to_string(dir.path().join("other.csv")).unwrap());
}

#[test]
fn design_run_and_report_agree() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    let p = dir.path();

    let design = dsfdi(&["design", "--config", "cfg.json", "--out", "bundle.json"], p);
    assert!(design.status.success(), "{}", stderr(&design));
    assert!(stdout(&design).contains("Th_D = "));

    let run = dsfdi(&["run", "--config", "cfg.json", "--out", "fresh.json"], p);
    assert!(run.status.success(), "{}", stderr(&run));
    let table = stdout(&run);
    assert!(table.contains("fault-free") && table.contains("RB") && table.contains("DS"), "{table}");

    let reused = dsfdi(&["run", "--config", "cfg.json", "--bundle", "bundle.json", "--out", "reused.json"], p);
    assert!(reused.status.success(), "{}", stderr(&reused));
    let fresh = std::fs::read_to_string(p.join("fresh.json")).unwrap();
    assert_eq!(fresh, std::fs::read_to_string(p.join("reused.json")).unwrap());

    let report = dsfdi(
        &["report", "--config", "cfg.json", "--bundle", "bundle.json", "--out", "out",
          "--scenario", "x2", "--series", "detection", "--series", "combined:RB"],
        p,
    );
    assert!(report.status.success(), "{}", stderr(&report));
    assert_eq!(fresh, std::fs::read_to_string(p.join("out/report.json")).unwrap());
    let det = std::fs::read_to_string(p.join("out/x2_detection.csv")).unwrap();
    assert!(det.starts_with("time,abs_e_d,th_d,fault"));
    assert_eq!(det.lines().count(), 1001);
    assert!(p.join("out/x2_combined_RB.csv").exists());
}

#[test]
fn seed_override_changes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    let p = dir.path();
    for (seed, out) in [("3", "a.json"), ("3", "b.json"), ("4", "c.json")] {
        let o = dsfdi(&["run", "--config", "cfg.json", "--seed", seed, "--out", out], p);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |f: &str| std::fs::read_to_string(p.join(f)).unwrap();
    assert_eq!(read("a.json"), read("b.json"));
    assert_ne!(read("a.json"), read("c.json"));
}

#[test]
fn failures_exit_nonzero_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();

    let missing = dsfdi(&["run", "--config", "nope.json", "--out", "r.json"], p);
    assert!(!missing.status.success());
    assert!(stderr(&missing).contains("nope.json"), "{}", stderr(&missing));

    let csv = r#"{"train": [{"kind": "csv", "paths": ["gone.csv"]}],
                  "validation": {"kind": "csv", "paths": ["gone.csv"]},
                  "x_names": ["x1"], "u_names": ["u1"]}"#;
    std::fs::write(p.join("csv.json"), csv).unwrap();
    let failed = dsfdi(&["design", "--config", "csv.json", "--out", "b.json"], p);
    assert!(!failed.status.success());
    assert!(stderr(&failed).contains("load training data"), "{}", stderr(&failed));
    assert!(!p.join("b.json").exists());

    write_config(p);
    let bad_series = dsfdi(&["report", "--config", "cfg.json", "--out", "o", "--series", "bogus"], p);
    assert!(!bad_series.status.success());

    let usage = dsfdi(&["run"], p);
    assert_eq!(usage.status.code(), Some(2));
}
