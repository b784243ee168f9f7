use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vlft-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn bound_prints_one_row() {
    let out = lab(&[
        "bound",
        "--bsc",
        "0.0789",
        "--k",
        "64",
        "--kind",
        "repeated",
        "--delta-frac",
        "0.4",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("label,k,M_log2,N,n_1,I,m,ell,epsilon,throughput"));
    assert!(
        lines[1].starts_with("repeated,64,64,178,1,1,178,104.92547"),
        "{}",
        lines[1]
    );
}

#[test]
fn validation_errors_exit_2_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.json",
        r#"{"bsc":0.1,"k_list":[16,8],"curves":[],"colour":1}"#,
    );
    let out = lab(&["sweep", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("colour") && err.contains("strictly increasing"),
        "{err}"
    );

    let out = lab(&["bound", "--k", "8", "--kind", "warp"]);
    assert_eq!(out.status.code(), Some(2));
    let out = lab(&["bound", "--bsc", "1.5", "--k", "8", "--kind", "infinite"]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = lab(&["sweep", "--config", "/no/such/config.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn mirrored_crossover_gives_the_same_bound() {
    let a = lab(&["bound", "--bsc", "0.3", "--k", "8", "--kind", "infinite"]);
    let b = lab(&["bound", "--bsc", "0.7", "--k", "8", "--kind", "infinite"]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn infeasible_only_runs_exit_3() {
    let out = lab(&[
        "bound", "--bsc", "0.2", "--k", "16", "--kind", "repeated", "--n", "4",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("infeasible"));
}

#[test]
fn empty_curves_write_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "empty.json",
        r#"{"bsc":0.1,"k_list":[8],"curves":[]}"#,
    );
    let csv = dir.path().join("out.csv");
    let out = lab(&["sweep", "--config", &cfg, "--out", csv.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.ends_with('\n'));
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sim.json",
        r#"{"bsc":0.0789,"k_list":[4,6],"curves":[
            {"label":"rep","kind":"repeated","block_length":{"delta_frac":0.4}},
            {"label":"per","kind":"periodic","increment":2}],
           "simulation":{"trials":400,"seed":3}}"#,
    );
    let run = |threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_vlft-lab"))
            .args(["simulate", "--config", &cfg])
            .env("VLFT_THREADS", threads)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        out.stdout
    };
    let one = run("1");
    assert_eq!(one, run("4"));
    let text = String::from_utf8(one).unwrap();
    assert!(text.lines().skip(1).all(|l| !l.ends_with(",,")), "{text}");
}

#[test]
fn flags_override_config_scalars() {
    let base = lab(&["sweep", "--config", "fig1"]);
    let flipped = lab(&["sweep", "--config", "fig1", "--bsc", "0.11"]);
    assert!(base.status.success() && flipped.status.success());
    assert_ne!(base.stdout, flipped.stdout);
    let out = lab(&["simulate", "--config", "fig1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn converse_and_presets() {
    let out = lab(&["converse", "--bsc", "0", "--ell", "1"]);
    let v: f64 = String::from_utf8(out.stdout)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!((v - (2.0 + std::f64::consts::LOG2_E)).abs() < 1e-9);
    let out = lab(&["presets"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("fig1") && text.contains("fig2"));
}
