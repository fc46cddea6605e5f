use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellfree-ris")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_default_prints_report() {
    let o = run(&["solve", "--config", "default", "--seed", "1", "--no-timing"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["method"], "pd_with_ris");
    assert!(report["final_rates"]["weighted_sum_rate"].as_f64().unwrap() > 0.0);
    assert_eq!(report["wall_time_s"], 0.0);
}

#[test]
fn solve_reruns_are_byte_identical() {
    let args = ["solve", "--seed", "3", "--method", "centralized_with_ris", "--no-timing", "--max-iters", "5"];
    assert_eq!(run(&args).stdout, run(&args).stdout);
}

#[test]
fn solve_reads_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.toml");
    std::fs::write(&path, "num_aps = 2\nantennas_per_ap = 2\nnum_users = 2\nris_elements = 6\n").unwrap();
    let out = dir.path().join("report.json");
    let o =
        run(&["solve", "--config", path.to_str().unwrap(), "--method", "zf_no_ris", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(report["final_rates"]["per_user_rate"].as_array().unwrap().len(), 2);
}

#[test]
fn overhead_prints_paper_count() {
    let o = run(&["overhead"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let row = text.lines().find(|l| l.trim_start().starts_with("10 ")).unwrap();
    let fields: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(fields[1], "3000");
    assert_eq!(fields[2], "35800");
}

#[test]
fn sweep_writes_seven_column_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = run(&[
        "sweep",
        "--kind",
        "power",
        "--seeds",
        "2",
        "--method",
        "mrt_no_ris",
        "--method",
        "zf_no_ris",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = cellfree_ris::parse_csv(std::fs::File::open(&out).unwrap()).unwrap();
    // 7 powers × 2 methods × 2 seeds, then mean and stderr per (power, method)
    assert_eq!(records.len(), 28 + 28);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().all(|l| l.split(',').count() == 7));
}

#[test]
fn sweep_reads_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    std::fs::write(
        &spec,
        "kind = \"ris_elements\"\nvalues = [4, 8]\nmethods = [\"pd_with_ris\"]\nnum_seeds = 1\n\n[base_config]\nnum_aps = 2\nantennas_per_ap = 2\nnum_users = 2\n",
    )
    .unwrap();
    let o = run(&["sweep", "--spec", spec.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 1 + 2 + 4);
}

#[test]
fn verify_passes() {
    let o = run(&["verify", "--seed", "2"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["solve", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["solve", "--method", "nope"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one() {
    let o = run(&["solve", "--config", "/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}
