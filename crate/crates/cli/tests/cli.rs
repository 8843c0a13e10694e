//! Contract tests against the installed binary: subcommands, exit codes,
//! output layout, determinism. Everything runs in temporary directories.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const CSV_HEADER: &str = "t,beta,f_gap,grad_norm_sq,dist_center_sq,dist_minnorm_sq,energy";

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tikhoflow"));
    cmd.env_remove("TIKHOFLOW_OUT");
    cmd
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&read(&dir.join("manifest.json"))).expect("manifest parses")
}

#[test]
fn run_writes_the_full_artifact_set_and_a_clean_manifest() {
    let tmp = TempDir::new().unwrap();
    let out = bin()
        .args(["run", "--preset", "zero_smoke", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let csv = read(&tmp.path().join("run.csv"));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let last = lines.last().expect("data rows");
    let cols: Vec<f64> = last.split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(cols.len(), 7);
    assert!((cols[0] - 4.5).abs() < 1e-12, "t_end row, got t = {}", cols[0]);
    for (i, v) in cols.iter().enumerate().skip(2) {
        assert!(v.abs() < 1e-12, "column {i} should have collapsed, got {v}");
    }

    let m = manifest(tmp.path());
    assert_eq!(m["status"], "ok");
    assert_eq!(m["label"], "zero_smoke");
    let arts = m["artifacts"].as_array().expect("artifact list");
    assert_eq!(arts.len(), 6, "run.csv + 5 plots, got {arts:?}");
    for a in arts {
        let p = tmp.path().join(a.as_str().unwrap());
        assert!(p.exists(), "listed artifact missing: {}", p.display());
    }
    for plot in ["f_gap", "grad_norm_sq", "dist_center_sq", "dist_minnorm_sq", "energy"] {
        let svg = read(&tmp.path().join(format!("{plot}.svg")));
        assert!(svg.starts_with("<svg"), "{plot}.svg is not an svg");
    }
}

#[test]
fn identical_configs_give_bitwise_identical_tables() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for dir in [&a, &b] {
        let out = bin()
            .args(["run", "--preset", "zero_smoke", "--out"])
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", stderr(&out));
    }
    assert_eq!(
        read(&a.path().join("run.csv")),
        read(&b.path().join("run.csv")),
        "same config should reproduce the table byte for byte"
    );
}

#[test]
fn the_manifest_echo_reproduces_the_run() {
    let first = TempDir::new().unwrap();
    let out = bin()
        .args(["run", "--preset", "min_norm", "--set", "run.t_end=50", "--out"])
        .arg(first.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let m = manifest(first.path());
    let echo = m["config"].as_object().expect("config echo");
    let mut cfg = String::new();
    for (k, v) in echo {
        cfg.push_str(&format!("{k}={}\n", v.as_str().unwrap()));
    }
    let cfg_path = first.path().join("echo.cfg");
    fs::write(&cfg_path, cfg).unwrap();

    let second = TempDir::new().unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(second.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert_eq!(
        read(&first.path().join("run.csv")),
        read(&second.path().join("run.csv"))
    );
}

#[test]
fn set_overrides_replace_single_keys_and_are_echoed() {
    let tmp = TempDir::new().unwrap();
    let out = bin()
        .args(["run", "--preset", "zero_smoke", "--set", "run.samples=77", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let csv = read(&tmp.path().join("run.csv"));
    assert_eq!(csv.lines().count(), 78, "header plus 77 sample rows");
    let m = manifest(tmp.path());
    assert_eq!(m["config"]["run.samples"], "77");
    assert_eq!(m["sample_count"], 77);
}

#[test]
fn unknown_keys_are_usage_errors() {
    let out = bin()
        .args(["run", "--preset", "zero_smoke", "--set", "typo.key=1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("typo.key"));
}

#[test]
fn bad_coefficients_are_rejected_before_any_output() {
    let tmp = TempDir::new().unwrap();
    let target = tmp.path().join("never");
    let out = bin()
        .args([
            "run",
            "--set",
            "problem.name=example1",
            "--set",
            "schedule.family=power_log",
            "--set",
            "schedule.m=2",
            "--set",
            "flow.c=-1",
            "--out",
        ])
        .arg(&target)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    assert!(!target.exists(), "no output directory on config errors");
}

#[test]
fn runtime_failures_exit_one_and_leave_no_partial_outputs() {
    let tmp = TempDir::new().unwrap();
    let target = tmp.path().join("never");
    let out = bin()
        .args([
            "run",
            "--preset",
            "zero_smoke",
            "--set",
            "integrator.max_steps=5",
            "--out",
        ])
        .arg(&target)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("integrate"), "phase named: {}", stderr(&out));
    assert!(!target.exists(), "no partial outputs on runtime errors");
}

#[test]
fn checkschedule_accepts_the_reference_polylog_schedule() {
    let out = bin()
        .args([
            "checkschedule",
            "--set",
            "schedule.family=power_log",
            "--set",
            "schedule.m=2",
            "--set",
            "schedule.p=2",
            "--set",
            "flow.c=5",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("json report");
    assert_eq!(doc["report"]["verdict"], true);
    let estimate = doc["report"]["cond_iii_estimate"].as_f64().unwrap();
    assert!(
        (estimate - 0.4).abs() <= 0.004,
        "limit estimate should sit at 1/mu = 0.4, got {estimate}"
    );
    assert!(doc["suggested_mu"].as_f64().unwrap() > 0.0);
}

#[test]
fn checkschedule_rejects_exponential_growth_beyond_c() {
    let out = bin()
        .args([
            "checkschedule",
            "--set",
            "schedule.family=power_exp",
            "--set",
            "schedule.gamma=2",
            "--set",
            "schedule.r=1",
            "--set",
            "flow.c=1",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("json report");
    assert_eq!(doc["report"]["verdict"], false);
    assert!(doc["suggested_mu"].is_null(), "no rate is admissible");
}

#[test]
fn checkschedule_without_a_family_is_a_usage_error() {
    let out = bin()
        .args(["checkschedule", "--set", "flow.c=5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("schedule.family"));
}

#[test]
fn presets_list_names_every_preset() {
    let out = bin().args(["presets", "list"]).output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    for name in [
        "first_order_log",
        "first_order_exp",
        "min_norm",
        "zero_smoke",
        "figure1",
        "figure2",
    ] {
        assert!(text.contains(name), "missing {name} in:\n{text}");
    }
}

#[test]
fn unknown_subcommands_and_flags_exit_two() {
    let out = bin().args(["frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["run", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

fn zero_member(dir: &Path, name: &str, extra: &[(&str, &str)]) -> std::path::PathBuf {
    let mut text = String::from(
        "problem.name=zero\nproblem.dim=2\nflow.c=5\nschedule.family=power_log\nschedule.m=1\nrun.t_end=4.5\n",
    );
    for (k, v) in extra {
        text.push_str(&format!("{k}={v}\n"));
    }
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn comparing_a_system_against_itself_is_bitwise_deterministic() {
    let tmp = TempDir::new().unwrap();
    let member = zero_member(tmp.path(), "member.cfg", &[("run.label", "twin")]);
    let out_dir = tmp.path().join("out");
    let out = bin()
        .arg("compare")
        .arg("--config")
        .arg(&member)
        .arg("--config")
        .arg(&member)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let first = read(&out_dir.join("twin").join("run.csv"));
    let second = read(&out_dir.join("twin_2").join("run.csv"));
    assert_eq!(first, second, "identical members should produce identical tables");

    let combined = read(&out_dir.join("compare.csv"));
    let mut lines = combined.lines();
    assert_eq!(lines.next(), Some("system,t,beta,f_gap,grad_norm_sq,dist_center_sq,dist_minnorm_sq,energy"));
    assert!(combined.contains("\ntwin,"), "first label present");
    assert!(combined.contains("\ntwin_2,"), "disambiguated label present");
    for plot in ["f_gap", "dist_minnorm_sq", "grad_norm_sq"] {
        assert!(out_dir.join(format!("{plot}.svg")).exists(), "overlay {plot}.svg");
    }
}

#[test]
fn a_failing_member_is_isolated_and_the_rest_complete() {
    let tmp = TempDir::new().unwrap();
    let good = zero_member(tmp.path(), "good.cfg", &[("run.label", "good")]);
    let bad = zero_member(
        tmp.path(),
        "bad.cfg",
        &[("run.label", "bad"), ("integrator.max_steps", "5")],
    );
    let out_dir = tmp.path().join("out");
    let out = bin()
        .arg("compare")
        .arg("--config")
        .arg(&good)
        .arg("--config")
        .arg(&bad)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("1 failed"), "stdout: {}", stdout(&out));

    let good_manifest = manifest(&out_dir.join("good"));
    assert_eq!(good_manifest["status"], "ok");
    assert!(out_dir.join("good").join("run.csv").exists());

    let bad_manifest = manifest(&out_dir.join("bad"));
    assert_eq!(bad_manifest["status"], "failed");
    assert_eq!(bad_manifest["failed_phase"], "integrate");
    assert!(!out_dir.join("bad").join("run.csv").exists());

    let combined = read(&out_dir.join("compare.csv"));
    assert!(combined.contains("\ngood,"));
    assert!(!combined.contains("\nbad,"), "failed member stays out of the table");
}

#[test]
fn every_member_failing_is_a_runtime_error() {
    let tmp = TempDir::new().unwrap();
    let bad = zero_member(tmp.path(), "bad.cfg", &[("integrator.max_steps", "5")]);
    let out = bin()
        .arg("compare")
        .arg("--config")
        .arg(&bad)
        .arg("--config")
        .arg(&bad)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr(&out));
}

#[test]
fn compare_needs_at_least_two_members() {
    let tmp = TempDir::new().unwrap();
    let member = zero_member(tmp.path(), "member.cfg", &[]);
    let out = bin()
        .arg("compare")
        .arg("--config")
        .arg(&member)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
}

#[test]
fn compare_rejects_members_with_different_problems() {
    let tmp = TempDir::new().unwrap();
    let zero = zero_member(tmp.path(), "zero.cfg", &[]);
    let other = tmp.path().join("other.cfg");
    fs::write(
        &other,
        "problem.name=example1\nflow.c=5\nschedule.family=power_log\nschedule.m=1\nrun.t_end=4.5\n",
    )
    .unwrap();
    let out = bin()
        .arg("compare")
        .arg("--config")
        .arg(&zero)
        .arg("--config")
        .arg(&other)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("problem.name"), "stderr: {}", stderr(&out));
}

#[test]
fn the_default_output_dir_comes_from_the_environment() {
    let tmp = TempDir::new().unwrap();
    let env_dir = tmp.path().join("from_env");
    let out = bin()
        .args(["run", "--preset", "zero_smoke"])
        .env("TIKHOFLOW_OUT", &env_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(env_dir.join("run.csv").exists());

    // an explicit --out still wins over the environment
    let flag_dir = tmp.path().join("from_flag");
    let out = bin()
        .args(["run", "--preset", "zero_smoke", "--out"])
        .arg(&flag_dir)
        .env("TIKHOFLOW_OUT", tmp.path().join("ignored"))
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(flag_dir.join("run.csv").exists());
    assert!(!tmp.path().join("ignored").exists());
}
