use std::process::{Command, Output};

fn mcie(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcie"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn tmp(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("mcie-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn solve_zero_variance_case() {
    let o = mcie(&[
        "solve",
        "--case",
        "fred-lin-const",
        "--N",
        "10000",
        "--m",
        "8",
        "--seed",
        "7",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "point_index,coord_0,mc_value,det_value,halfwidth"
    );
    let expected = 2.0 - 0.5f64.powi(8);
    let mut rows = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[2].parse::<f64>().unwrap(), expected);
        assert_eq!(f[3].parse::<f64>().unwrap(), expected);
        assert_eq!(f[4].parse::<f64>().unwrap(), 0.0);
        rows += 1;
    }
    assert_eq!(rows, 11);
}

#[test]
fn outputs_are_byte_identical_across_invocations() {
    let args = [
        "band",
        "--case",
        "volt-smooth",
        "--N",
        "3000",
        "--m",
        "2",
        "--seed",
        "5",
        "--n-sim",
        "2000",
    ];
    let a = mcie(&args);
    let b = mcie(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let other = mcie(&[
        "band",
        "--case",
        "volt-smooth",
        "--N",
        "3000",
        "--m",
        "2",
        "--seed",
        "6",
        "--n-sim",
        "2000",
    ]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn band_summary_echoes_seed() {
    let summary = tmp("summary.json");
    let csv = tmp("band.csv");
    let o = mcie(&[
        "band",
        "--case",
        "fred-smooth",
        "--N",
        "6000",
        "--seed",
        "11",
        "--level",
        "0.9",
        "--out",
        csv.to_str().unwrap(),
        "--summary",
        summary.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(v["config"]["seed"], 11);
    assert_eq!(v["config"]["level"], 0.9);
    assert!(v["halfwidth"].as_f64().unwrap() > 0.0);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 17);
}

#[test]
fn rate_reports_slope() {
    let o = mcie(&[
        "rate",
        "--case",
        "fred-smooth",
        "--m",
        "3",
        "--N",
        "1000,4000,16000,64000",
        "--reps",
        "30",
        "--seed",
        "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let slope = v["slope"].as_f64().unwrap();
    assert!((-0.6..=-0.4).contains(&slope), "slope {slope}");
    assert_eq!(v["seed"], 1);
}

#[test]
fn coverage_of_zero_variance_case_is_one() {
    let o = mcie(&[
        "coverage",
        "--case",
        "fred-lin-const",
        "--N",
        "400",
        "--m",
        "4",
        "--reps",
        "100",
        "--n-sim",
        "1000",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["coverage"], 1.0);
    assert_eq!(v["result"]["reference_coverage"], 1.0);
}

#[test]
fn partition_paper_optimal() {
    let o = mcie(&[
        "partition",
        "--N",
        "1000000",
        "--m",
        "3",
        "--schedule",
        "paper-optimal",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["q"], serde_json::json!([5, 25, 968]));
    assert_eq!(v["sum"], 998);
    assert_eq!(v["budget"], 1_000_000);
    assert_eq!(v["warning"], "sum != budget");
}

#[test]
fn partition_uniform_uses_whole_budget() {
    let o = mcie(&["partition", "--N", "10", "--m", "3"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["q"], serde_json::json!([3, 3, 4]));
    assert_eq!(v.get("warning"), None);
}

#[test]
fn cases_lists_registry() {
    let o = mcie(&["cases"]);
    assert!(o.status.success());
    let ids: Vec<String> = stdout(&o)
        .lines()
        .map(|l| l.split('\t').next().unwrap().to_string())
        .collect();
    assert_eq!(ids, mcie_core::cases::CASE_IDS);
}

#[test]
fn config_file_and_flag_override() {
    let path = tmp("run.json");
    std::fs::write(
        &path,
        r#"{"case": "fred-lin-const", "N": 200, "m": 2, "seed": 3}"#,
    )
    .unwrap();
    let o = mcie(&["solve", "--config", path.to_str().unwrap(), "--m", "8"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let first = stdout(&o).lines().nth(1).unwrap().to_string();
    assert!(
        first.contains(&(2.0 - 0.5f64.powi(8)).to_string()),
        "{first}"
    );
}

#[test]
fn validation_errors_exit_one() {
    let path = tmp("bad.json");
    std::fs::write(&path, r#"{"case": "fred-smooth", "level": 1.5}"#).unwrap();
    let o = mcie(&["solve", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("level"));

    assert_eq!(mcie(&["solve", "--N", "100"]).status.code(), Some(1));
    assert_eq!(mcie(&["solve", "--case", "nope"]).status.code(), Some(1));
    assert_eq!(
        mcie(&["solve", "--case", "fred-smooth", "--bogus"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        mcie(&["rate", "--case", "fred-smooth", "--N", "100,200"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        mcie(&["solve", "--case", "volt-exp", "--grid", "5"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(mcie(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn unwritable_output_exits_two() {
    let o = mcie(&[
        "solve",
        "--case",
        "fred-lin-const",
        "--N",
        "100",
        "--out",
        "/nonexistent-dir/x.csv",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    assert_eq!(mcie(&["--help"]).status.code(), Some(0));
}

#[test]
fn parse_config_reads_files() {
    let path = tmp("minimal.json");
    std::fs::write(&path, r#"{"case": "volt-exp"}"#).unwrap();
    let c = mcie_cli::config::parse_config(&path).unwrap();
    assert_eq!((c.level, c.reps), (0.95, 1));
    let missing = tmp("missing-case.json");
    std::fs::write(&missing, r#"{"N": 1000}"#).unwrap();
    assert!(mcie_cli::config::parse_config(&missing).is_err());
    assert!(mcie_cli::config::parse_config(&tmp("does-not-exist.json")).is_err());
}
