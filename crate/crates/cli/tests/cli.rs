use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_neyman-scott"));
    cmd.env_remove("NEYMAN_SCOTT_OUTPUT_DIR");
    cmd
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn generate(dir: &Path, name: &str, extra: &[&str]) {
    let mut args = vec![
        "generate",
        "--m",
        "2",
        "--n",
        "100",
        "--sigma2",
        "1",
        "--scheme",
        "linear:0,1",
        "--seed",
        "42",
        "-o",
        name,
    ];
    args.extend_from_slice(extra);
    let out = run(dir, &args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

fn estimate(dir: &Path, input: &str, method: &str) -> Value {
    let out = run(dir, &["estimate", "-i", input, "--method", method]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn generate_writes_panel_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "panel.csv", &[]);
    let csv = std::fs::read_to_string(dir.path().join("panel.csv")).unwrap();
    assert!(csv.starts_with("group,replicate,value\n1,1,"));
    assert_eq!(csv.lines().count(), 201);
    let side: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("panel.json")).unwrap())
            .unwrap();
    assert_eq!(side["seed"], 42);
    assert_eq!(side["spec"]["mu"][2], 3.0);
}

#[test]
fn regeneration_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "a.csv", &[]);
    generate(dir.path(), "b.csv", &[]);
    let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_eq!(read("a.json"), read("b.json"));
}

#[test]
fn generate_rejects_single_replicate() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "generate", "--m", "1", "--n", "5", "--seed", "1", "-o", "x.csv",
        ],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("m must be >= 2"));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn bad_flags_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&run(dir.path(), &["generate", "--n", "5", "-o", "x.csv"])),
        2
    );
    assert_eq!(
        code(&run(
            dir.path(),
            &["generate", "--n", "5", "--seed", "1", "--scheme", "cubic:1", "-o", "x.csv"]
        )),
        2
    );
    assert_eq!(
        code(&run(
            dir.path(),
            &["generate", "--n", "5", "--seed", "1", "--sigma2", "0", "-o", "x.csv"]
        )),
        2
    );
    assert_eq!(code(&run(dir.path(), &["frobnicate"])), 2);
}

#[test]
fn output_dir_env_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .current_dir(dir.path())
        .env("NEYMAN_SCOTT_OUTPUT_DIR", dir.path().join("outdir"))
        .args(["generate", "--n", "3", "--seed", "5", "-o", "p.csv"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("outdir/p.csv").exists());
    assert!(dir.path().join("outdir/p.json").exists());
}

#[test]
fn closed_and_newton_agree() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "panel.csv", &[]);
    let closed = estimate(dir.path(), "panel.csv", "closed");
    let newton = estimate(dir.path(), "panel.csv", "newton");
    let a = closed["sigma2_hat"].as_f64().unwrap();
    let b = newton["sigma2_hat"].as_f64().unwrap();
    assert!((a - b).abs() < 1e-8);
    assert_eq!(newton["optimizer"]["converged"], true);
    for r in [&closed, &newton] {
        assert_eq!(r["second_order"]["is_maximum"], true);
        assert_eq!(r["diagnostic"]["warning"], true);
    }
    assert_eq!(closed["second_order"]["stationary"], true);
}

#[test]
fn recast_reports_identity_check() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "panel.csv", &[]);
    let out = run(
        dir.path(),
        &[
            "estimate",
            "-i",
            "panel.csv",
            "--method",
            "recast",
            "--contrasts",
            "y.csv",
        ],
    );
    assert_eq!(code(&out), 0);
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["identity_check"]["passed"], true);
    assert_eq!(r["n_eff"], 100);
    let y = std::fs::read_to_string(dir.path().join("y.csv")).unwrap();
    assert!(y.starts_with("group,contrast_index,value\n1,1,"));
    assert_eq!(y.lines().count(), 101);
}

#[test]
fn malformed_cell_exits_one_citing_row() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.csv"),
        "group,replicate,value\n1,1,0.5\n1,2,oops\n",
    )
    .unwrap();
    let out = run(dir.path(), &["estimate", "-i", "bad.csv"]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.csv:3"), "{err}");
    assert_eq!(
        code(&run(dir.path(), &["estimate", "-i", "missing.csv"])),
        1
    );
}

#[test]
fn experiment_worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let base = [
        "experiment",
        "--kind",
        "sweep",
        "--n-grid",
        "10,100,1000",
        "--replications",
        "200",
        "--seed",
        "9",
    ];
    for (w, name) in [("1", "w1.csv"), ("4", "w4.csv")] {
        let mut args = base.to_vec();
        args.extend(["--workers", w, "-o", name]);
        let out = run(dir.path(), &args);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(dir.path().join("w1.csv")).unwrap();
    let b = std::fs::read(dir.path().join("w4.csv")).unwrap();
    assert_eq!(a, b);
    assert!(String::from_utf8_lossy(&a)
        .starts_with("estimator,n,R,mean,bias,variance,mse,se_mean,crlb_ratio\n"));
}

#[test]
fn experiment_from_config_file_prints_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"version": 1, "kind": "bias", "sigma2": 1.0, "m": 2, "n_grid": [10000],
            "replications": 1000, "master_seed": 20130101, "scheme": "linear:0,1"}"#,
    )
    .unwrap();
    let out = run(
        dir.path(),
        &[
            "experiment",
            "--config",
            "cfg.json",
            "--format",
            "json",
            "-o",
            "r.json",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let verdicts: Vec<&str> = stdout
        .lines()
        .filter(|l| l.contains("vs predicted"))
        .collect();
    assert_eq!(verdicts.len(), 3);
    assert!(verdicts.iter().all(|l| l.ends_with("PASS")), "{stdout}");
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["master_seed"], 20130101);
    assert_eq!(report["config"]["n_grid"][0], 10000);
    assert!(report["seed_derivation"]
        .as_str()
        .unwrap()
        .contains("mix64"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"version": 1, "n_grid": [5, 50], "replications": 3, "master_seed": 1}"#,
    )
    .unwrap();
    let out = run(
        dir.path(),
        &[
            "experiment",
            "--config",
            "cfg.json",
            "--n-grid",
            "7",
            "-o",
            "r.csv",
        ],
    );
    assert_eq!(code(&out), 0);
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(csv
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(1) == Some("7")));
    assert!(csv.contains(",7,3,"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, body: &str| std::fs::write(dir.path().join(name), body).unwrap();
    write("empty.json", r#"{"version": 1, "n_grid": []}"#);
    write("badver.json", r#"{"version": 7}"#);
    write("junk.json", "{not json");
    write("unknown.json", r#"{"version": 1, "frequency": 3}"#);
    for f in [
        "empty.json",
        "badver.json",
        "junk.json",
        "unknown.json",
        "absent.json",
    ] {
        assert_eq!(
            code(&run(dir.path(), &["experiment", "--config", f])),
            2,
            "{f}"
        );
    }
    assert_eq!(
        code(&run(
            dir.path(),
            &["experiment", "--kind", "sweep", "--n-grid", "10,20"]
        )),
        2
    );
}

#[test]
fn path_and_group_mean_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "experiment",
            "--kind",
            "path",
            "--n-grid",
            "100000",
            "-o",
            "p.csv",
        ],
    );
    assert_eq!(code(&out), 0);
    let csv = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    assert!(csv.starts_with("n,naive,recast\n1,"));
    assert!(csv
        .trim_end()
        .lines()
        .last()
        .unwrap()
        .starts_with("100000,"));
    assert!(String::from_utf8_lossy(&out.stdout).matches("PASS").count() == 2);

    let out = run(
        dir.path(),
        &[
            "experiment",
            "--kind",
            "group-mean",
            "--n-grid",
            "10,100",
            "--replications",
            "2000",
            "-o",
            "g.csv",
        ],
    );
    assert_eq!(code(&out), 0);
    let csv = std::fs::read_to_string(dir.path().join("g.csv")).unwrap();
    assert_eq!(
        csv.lines().filter(|l| l.starts_with("mu_hat_1,")).count(),
        2
    );
}
