//! End-to-end tests of the command-line binary: exit codes, output
//! formats, and the determinism contract.

use std::path::Path;
use std::process::{Command, Output};

fn jini_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_jini"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    jini_bin()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, contents: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path.to_string_lossy().into_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fit_logistic_mle_recovers_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", "y,x1\n0,1\n1,1\n0,1\n1,1\n");
    let out = run(
        &["fit", "--model", "logistic", "--method", "mle", "--data", &data, "--out", "fit.json"],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let json = read_json(&dir.path().join("fit.json"));
    let est = json["estimate"][0].as_f64().unwrap();
    assert!(est.abs() < 1e-9, "estimate {est}");
    assert_eq!(json["converged"], true);
}

#[test]
fn corrected_fit_is_byte_identical_across_runs_modulo_timing() {
    let dir = tempfile::tempdir().unwrap();
    // Small censored negative binomial dataset.
    let mut csv = String::from("#censor_at=8\ny,x1,x2\n");
    let ys = [3u64, 0, 2, 8, 1, 4, 2, 0, 5, 8, 1, 2, 3, 6, 0, 2, 4, 1, 8, 3];
    for (i, y) in ys.iter().enumerate() {
        csv.push_str(&format!("{y},1.0,{}\n", (i as f64 - 10.0) / 10.0));
    }
    let data = write(dir.path(), "d.csv", &csv);
    let args = [
        "fit",
        "--model",
        "negbin-censored",
        "--method",
        "jini",
        "--data",
        data.as_str(),
        "--H",
        "50",
        "--seed",
        "7",
        "--tol",
        "0.02",
    ];
    let mut a = args.to_vec();
    a.extend(["--out", "a.json"]);
    let mut b = args.to_vec();
    b.extend(["--out", "b.json"]);
    assert!(run(&a, dir.path()).status.success());
    assert!(run(&b, dir.path()).status.success());
    let mut ja = read_json(&dir.path().join("a.json"));
    let mut jb = read_json(&dir.path().join("b.json"));
    ja.as_object_mut().unwrap().remove("wall_secs");
    jb.as_object_mut().unwrap().remove("wall_secs");
    assert_eq!(ja, jb);
    assert_eq!(ja["method"], "jini");
    assert!(ja["trace"]["iterations"].as_u64().unwrap() >= 1);
}

#[test]
fn separated_data_fails_with_the_numeric_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", "y,x1\n1,1\n1,1\n1,1\n1,1\n");
    let out = run(
        &["fit", "--model", "logistic", "--method", "jini", "--data", &data, "--H", "4"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("initial estimator"), "stderr: {stderr}");
    assert!(!dir.path().join("jini-fit.json").exists(), "no partial output on failure");
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    // Unknown flag.
    let out = run(&["fit", "--nonsense"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    // Malformed CSV names the line.
    let data = write(dir.path(), "bad.csv", "y,x1\n1,0.5\nbroken,0.1\n");
    let out = run(
        &["fit", "--model", "poisson", "--method", "mle", "--data", &data],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    // Censored model without a threshold.
    let data = write(dir.path(), "nc.csv", "y,x1\n1,1\n2,1\n");
    let out = run(
        &["fit", "--model", "poisson-censored", "--method", "mle", "--data", &data],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    // Unknown experiment setting lists the presets.
    let out = run(&["experiment", "--setting", "negbin-t9"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("negbin-t2"));
}

#[test]
fn experiment_writes_csv_and_summary_with_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "experiment",
            "--setting",
            "synthetic",
            "--reps",
            "4",
            "--seed",
            "9",
            "--workers",
            "2",
            "--out-prefix",
            "syn",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("syn-estimates.csv")).unwrap();
    assert!(csv.starts_with("rep,method,param_index,estimate\n"));
    // 4 reps x 3 methods x 5 params.
    assert_eq!(csv.lines().count(), 1 + 60);
    let json = read_json(&dir.path().join("syn-summary.json"));
    assert_eq!(json["config"]["reps"], 4);
    assert_eq!(json["initial_fit_failures"], 0);
    assert!(json["config_sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn trace_emits_the_iterate_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("y,x1\n");
    for y in [2u64, 4, 1, 3, 2, 5, 0, 2, 3, 1] {
        csv.push_str(&format!("{y},1\n"));
    }
    let data = write(dir.path(), "d.csv", &csv);
    let out = run(
        &["trace", "--model", "poisson", "--data", &data, "--H", "20", "--seed", "3", "--out", "t.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("k,step_norm,residual"));
    let first = lines.next().unwrap();
    assert!(first.starts_with("0,,"), "first row {first}");

    // max-iter 0 leaves only the starting iterate.
    let out = run(
        &[
            "trace", "--model", "poisson", "--data", &data, "--H", "8", "--seed", "3",
            "--max-iter", "0", "--out", "t0.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let t0 = std::fs::read_to_string(dir.path().join("t0.csv")).unwrap();
    assert_eq!(t0.lines().count(), 2, "{t0}");
}

#[test]
fn bias_probe_writes_grid_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "bias-probe",
            "--setting",
            "synthetic",
            "--coord",
            "1",
            "--grid",
            "0.1:0.9:5",
            "--H",
            "16",
            "--seed",
            "5",
            "--out",
            "probe.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("probe.csv")).unwrap();
    assert!(csv.starts_with("theta_i,dstar_1"));
    assert_eq!(csv.lines().count(), 1 + 5);
    let sidecar = read_json(&dir.path().join("probe.json"));
    assert_eq!(sidecar["coord"], 1);
    assert_eq!(sidecar["h"], 16);
    assert!(sidecar["halfwidth"].as_f64().unwrap() >= 0.0);

    // A single-step grid probes exactly one point.
    let out = run(
        &[
            "bias-probe", "--setting", "synthetic", "--coord", "2", "--grid", "0.5:0.5:1",
            "--H", "4", "--out", "one.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let one = std::fs::read_to_string(dir.path().join("one.csv")).unwrap();
    assert_eq!(one.lines().count(), 2);

    // A grid outside the parameter box is a usage error.
    let out = run(
        &[
            "bias-probe", "--setting", "synthetic", "--coord", "1", "--grid", "-80:80:3",
            "--H", "4", "--out", "bad.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}
