use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn reference_cfg() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.cfg")
}

fn radbif(dir: &Path, args: &[&str]) -> Output {
    let out_dir = format!("out.dir={}", dir.join("out").display());
    Command::new(env!("CARGO_BIN_EXE_radbif"))
        .arg("--config")
        .arg(reference_cfg())
        .args(["--override", &out_dir])
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn steklov_prints_mu1() {
    let dir = tempfile::tempdir().unwrap();
    let o = radbif(dir.path(), &["steklov"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("mu1=0.3130353"), "{}", stdout(&o));
    let csv = fs::read_to_string(dir.path().join("out/steklov.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2050);
}

#[test]
fn negative_lambda_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        radbif(dir.path(), &["solve", "--lambda", "-1"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn unknown_key_and_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = radbif(dir.path(), &["--override", "grid.Q=3", "steklov"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("grid.Q") && err.contains("cont.eps_step_off"));

    let o = Command::new(env!("CARGO_BIN_EXE_radbif"))
        .args(["--config", "/nonexistent/run.cfg", "steklov"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn hypothesis_violations_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["branch", "limit"] {
        let o = radbif(dir.path(), &["--override", "model.name=linear", cmd]);
        assert_eq!(o.status.code(), Some(2), "{cmd}");
    }
    let o = radbif(
        dir.path(),
        &[
            "--override",
            "model.name=linear",
            "multiplicity",
            "--lambda",
            "0.32",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    // no second solution left of mu0
    let o = radbif(
        dir.path(),
        &[
            "--override",
            "grid.M=256",
            "multiplicity",
            "--lambda",
            "0.2",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn branch_outputs_are_deterministic_and_tagged() {
    let dir = tempfile::tempdir().unwrap();
    let run = || {
        let o = radbif(dir.path(), &["--override", "grid.M=256", "branch"]);
        assert_eq!(o.status.code(), Some(0));
        (
            fs::read(dir.path().join("out/branch.jsonl")).unwrap(),
            fs::read(dir.path().join("out/branch.dat")).unwrap(),
        )
    };
    let first = run();
    assert_eq!(first, run());
    let text = String::from_utf8(first.0).unwrap();
    let mut hash = None;
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in [
            "lambda",
            "norm_u1",
            "norm_u2",
            "norm_pair",
            "ds",
            "tangent_sign",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let h = v["config_hash"].as_str().unwrap().to_string();
        assert_eq!(h.len(), 64);
        assert_eq!(hash.get_or_insert(h.clone()), &h);
    }
    let last: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(last["lambda"].as_f64(), Some(1e-3));
}

#[test]
fn report_is_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = radbif(dir.path(), &["--override", "grid.M=512", "report"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["direction"], "Right");
    assert_eq!(v["theta1"].as_f64(), Some(0.8));
    let saved: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    assert!(saved["config_hash"].is_string());
}

#[test]
fn solve_limit_multiplicity_and_rescale() {
    let dir = tempfile::tempdir().unwrap();
    let o = radbif(
        dir.path(),
        &["--override", "grid.M=512", "solve", "--lambda", "0.32"],
    );
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("out/solve.csv")).unwrap();
    assert!(csv.starts_with("r,u1,u2"));

    let o = radbif(dir.path(), &["--override", "grid.M=512", "limit"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("sup_w2=0.5722"));

    let o = radbif(
        dir.path(),
        &[
            "--override",
            "grid.M=512",
            "multiplicity",
            "--lambda",
            "0.32",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(
        dir.path().join("out/minimal.csv").exists() && dir.path().join("out/second.csv").exists()
    );

    let o = radbif(dir.path(), &["--override", "grid.M=512", "rescale-check"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("lambda,ratio1,ratio2"));
}

#[test]
fn verify_passes_at_m512() {
    let dir = tempfile::tempdir().unwrap();
    let o = radbif(dir.path(), &["--override", "grid.M=512", "verify"]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 9);
}
