//! Black-box tests of the binary: exit codes, flag surface, file outputs,
//! and byte-level determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use assert_cmd::prelude::*;
use predicates::prelude::*;
use predicates::str::contains;

fn orgsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_orgsim"))
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

/// Small fast scenario: two designers, three explicit contracts, 60 hours.
fn write_small_scenario(dir: &Path) -> PathBuf {
    let stereotype = |k: f64, m: f64| {
        serde_json::json!({
            "knowledge_planning": k, "knowledge_design": k, "knowledge_testing": k,
            "communication": m, "productivity": 0.7,
            "willingness_to_support": 0.8, "willingness_to_communicate": 0.6,
            "base_productivity": 0.7
        })
    };
    let contract = |arrival: f64| {
        serde_json::json!({
            "arrival_time": arrival, "deadline": arrival + 30.0, "teamwork": 0.4,
            "activities": [
                { "category": "design", "effort": 6.0, "required_knowledge": 0.4 },
                { "category": "testing", "effort": 4.0, "required_knowledge": 0.3 }
            ]
        })
    };
    let config = serde_json::json!({
        "horizon": 60.0,
        "department": {
            "stereotypes": { "lead": stereotype(0.6, 0.5), "dev": stereotype(0.8, 0.4) },
            "manager": "lead",
            "teams": [ { "supervisor": "lead",
                         "designers": [ { "stereotype": "dev" }, { "stereotype": "dev" } ] } ]
        },
        "contracts": { "explicit": [ contract(0.0), contract(5.0), contract(12.0) ] }
    });
    let path = dir.join("scenario.json");
    fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn run_writes_a_summary_and_nothing_to_stdout() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_small_scenario(tmp.path());
    let out = tmp.path().join("out");

    orgsim()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--seed", "42", "--replications", "3", "--out"])
        .arg(&out)
        .assert()
        .success()
        .stdout(predicate::str::is_empty());

    let summary = fs::read_to_string(out.join("run_summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(
        lines[0],
        "replication,seed,contracts_arrived,contracts_completed,on_time_fraction,\
         mean_tardiness_h,mean_team_productivity,total_cost,productivity_per_cost"
    );
    assert_eq!(lines.len(), 4, "header plus one row per replication");
    assert!(lines[1].starts_with("0,"));
    assert!(lines[3].starts_with("2,"));

    // Optional outputs stay off unless asked for.
    assert!(!out.join("agent_trace.csv").exists());
    assert!(!out.join("events.log").exists());
}

#[test]
fn repeat_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_small_scenario(tmp.path());
    let out = tmp.path().join("out");

    let run = || {
        orgsim()
            .args(["run", "--config"])
            .arg(&config)
            .args(["--seed", "42", "--replications", "2", "--events-log", "--trace", "--out"])
            .arg(&out)
            .assert()
            .success();
        (
            fs::read(out.join("run_summary.csv")).unwrap(),
            fs::read(out.join("events.log")).unwrap(),
            fs::read(out.join("agent_trace.csv")).unwrap(),
        )
    };
    let first = run();
    let second = run();
    assert_eq!(first.0, second.0);
    assert_eq!(first.1, second.1);
    assert_eq!(first.2, second.2);
    assert!(!first.1.is_empty(), "the event log must actually contain events");
}

#[test]
fn trace_rows_follow_the_long_format() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_small_scenario(tmp.path());
    let out = tmp.path().join("out");

    orgsim()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--trace", "--out"])
        .arg(&out)
        .assert()
        .success();

    let trace = fs::read_to_string(out.join("agent_trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("time,agent_id,attribute,value"));
    let first = lines.next().expect("at least one sample row");
    let cols: Vec<&str> = first.split(',').collect();
    assert_eq!(cols.len(), 4);
    assert_eq!(cols[0], "0.000000");
    assert!(cols[3].contains('.'), "values use fixed notation: {first}");
}

#[test]
fn the_out_dir_falls_back_to_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_small_scenario(tmp.path());
    let env_out = tmp.path().join("from_env");
    let explicit_out = tmp.path().join("explicit");

    orgsim()
        .env("ORGSIM_OUT", &env_out)
        .args(["run", "--config"])
        .arg(&config)
        .assert()
        .success();
    assert!(env_out.join("run_summary.csv").exists());

    // An explicit --out always wins over the environment.
    orgsim()
        .env("ORGSIM_OUT", &env_out)
        .args(["run", "--config"])
        .arg(&config)
        .args(["--out"])
        .arg(&explicit_out)
        .assert()
        .success();
    assert!(explicit_out.join("run_summary.csv").exists());
}

#[test]
fn compare_writes_one_row_per_metric() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_small_scenario(tmp.path());

    // Variant: same department, later deadlines.
    let text = fs::read_to_string(&config).unwrap().replace("30.0", "45.0");
    let config_b = tmp.path().join("scenario_b.json");
    fs::write(&config_b, text).unwrap();
    let out = tmp.path().join("out");

    orgsim()
        .args(["compare", "--config"])
        .arg(&config)
        .args(["--config-b"])
        .arg(&config_b)
        .args(["--replications", "4", "--seed", "9", "--alpha", "0.1", "--out"])
        .arg(&out)
        .assert()
        .success();

    let summary = fs::read_to_string(out.join("compare_summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "metric,n,mean_a,mean_b,diff_mean,diff_sd,diff_ci_low,diff_ci_high");
    assert_eq!(lines.len(), 8, "seven metrics behind the header");
    assert!(lines.iter().skip(1).all(|l| l.split(',').nth(1) == Some("4")));

    // Identical arrivals in both configs: the arrived column differs by zero.
    let arrived = lines.iter().find(|l| l.starts_with("contracts_arrived,")).unwrap();
    let diff_mean = arrived.split(',').nth(4).unwrap();
    assert_eq!(diff_mean, "0.000000");
}

#[test]
fn sweep_enumerates_the_grid_in_file_order() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_small_scenario(tmp.path());
    let sweep = tmp.path().join("sweep.json");
    fs::write(
        &sweep,
        serde_json::json!([
            { "path": "constants.eta_m", "values": [0.0, 0.1] },
            { "path": "contracts.explicit[0].teamwork", "values": [0.2, 0.8] }
        ])
        .to_string(),
    )
    .unwrap();
    let out = tmp.path().join("out");

    orgsim()
        .args(["sweep", "--config"])
        .arg(&config)
        .args(["--sweep"])
        .arg(&sweep)
        .args(["--replications", "2", "--out"])
        .arg(&out)
        .assert()
        .success();

    let summary = fs::read_to_string(out.join("sweep_summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert!(lines[0].starts_with("point,constants.eta_m,contracts.explicit[0].teamwork,replication,seed,"));
    assert_eq!(lines.len(), 1 + 4 * 2, "four grid points, two replications each");
    assert!(lines[1].starts_with("0,0.000000,0.200000,0,"));
    assert!(lines[2].starts_with("0,0.000000,0.200000,1,"));
    assert!(lines[3].starts_with("1,0.000000,0.800000,0,"), "last dimension varies fastest");
    assert!(lines[7].starts_with("3,0.100000,0.800000,0,"));
}

#[test]
fn sweep_rejects_a_path_that_is_not_in_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_small_scenario(tmp.path());
    let sweep = tmp.path().join("sweep.json");
    fs::write(&sweep, r#"[{ "path": "constants.nope", "values": [1.0] }]"#).unwrap();

    orgsim()
        .args(["sweep", "--config"])
        .arg(&config)
        .args(["--sweep"])
        .arg(&sweep)
        .args(["--out"])
        .arg(tmp.path().join("out"))
        .assert()
        .code(1)
        .stderr(contains("constants.nope"));
}

#[test]
fn calibrate_writes_a_ranked_report() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_small_scenario(tmp.path());
    let targets = tmp.path().join("targets.json");
    fs::write(
        &targets,
        serde_json::json!({
            "params": [ { "path": "constants.eta_m", "lo": 0.0, "hi": 0.3 } ],
            "targets": [ { "metric": "contracts_completed", "value": 3.0 } ],
            "top_k": 3
        })
        .to_string(),
    )
    .unwrap();
    let out = tmp.path().join("out");

    orgsim()
        .args(["calibrate", "--config"])
        .arg(&config)
        .args(["--targets"])
        .arg(&targets)
        .args(["--budget", "12", "--seed", "5", "--out"])
        .arg(&out)
        .assert()
        .success()
        .stderr(contains("best discrepancy"));

    let report = fs::read_to_string(out.join("calibration_report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert!(lines[0].starts_with("rank,discrepancy,constants.eta_m,"));
    assert!(lines.len() <= 4, "at most top_k rows behind the header");
    assert!(lines[1].starts_with("1,"));

    // Ranked ascending by discrepancy.
    let mut previous = -1.0f64;
    for line in &lines[1..] {
        let d: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(d >= previous);
        previous = d;
    }
}

#[test]
fn validate_reports_every_schema_defect() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(
        &bad,
        serde_json::json!({
            "horizon": -5.0,
            "department": {
                "stereotypes": {
                    "lead": {
                        "knowledge_planning": 0.5, "knowledge_design": 0.5, "knowledge_testing": 0.5,
                        "communication": 1.5, "productivity": 0.5,
                        "willingness_to_support": 0.5, "willingness_to_communicate": 0.5,
                        "base_productivity": 0.5
                    }
                },
                "manager": "lead",
                "teams": [ { "supervisor": "lead", "designers": [ { "stereotype": "lead" } ] } ]
            },
            "contracts": { "explicit": [ {
                "arrival_time": 10.0, "deadline": 4.0,
                "activities": [ { "category": "design", "effort": 1.0, "required_knowledge": 0.5 } ]
            } ] }
        })
        .to_string(),
    )
    .unwrap();

    orgsim()
        .args(["validate", "--config"])
        .arg(&bad)
        .assert()
        .code(1)
        .stderr(contains("horizon").and(contains("communication")).and(contains("deadline")));
}

#[test]
fn validate_accepts_the_shipped_scenarios() {
    for name in ["baseline_team.json", "added_communicator.json"] {
        orgsim()
            .args(["validate", "--config"])
            .arg(repo_root().join("scenarios").join(name))
            .assert()
            .success()
            .stderr(contains("is valid"));
    }
}

#[test]
fn usage_errors_exit_two() {
    orgsim().args(["run", "--config", "x.json", "--bogus"]).assert().code(2);
    orgsim().args(["run"]).assert().code(2);
    orgsim().assert().code(2);
    orgsim().args(["frobnicate"]).assert().code(2);
}

#[test]
fn missing_files_are_domain_errors() {
    let tmp = tempfile::tempdir().unwrap();
    orgsim()
        .args(["run", "--config", "no_such_file.json", "--out"])
        .arg(tmp.path())
        .assert()
        .code(1)
        .stderr(contains("no_such_file.json"));

    let config = write_small_scenario(tmp.path());
    orgsim()
        .args(["calibrate", "--config"])
        .arg(&config)
        .args(["--targets", "no_targets.json", "--budget", "4", "--out"])
        .arg(tmp.path())
        .assert()
        .code(1)
        .stderr(contains("no_targets.json"));
}

#[test]
fn every_documented_flag_appears_in_help() {
    let help_of = |sub: &str| {
        let output = orgsim().args([sub, "--help"]).output().unwrap();
        assert!(output.status.success());
        String::from_utf8(output.stdout).unwrap()
    };

    let run = help_of("run");
    for flag in ["--config", "--seed", "--replications", "--horizon", "--out", "--trace", "--events-log"] {
        assert!(run.contains(flag), "run help lacks {flag}");
    }
    assert!(help_of("sweep").contains("--sweep"));
    let compare = help_of("compare");
    assert!(compare.contains("--config-b") && compare.contains("--alpha"));
    let calibrate = help_of("calibrate");
    assert!(calibrate.contains("--targets") && calibrate.contains("--budget"));
    assert!(help_of("validate").contains("--config"));
}

#[test]
fn a_parsed_config_survives_a_write_back_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_small_scenario(tmp.path());
    let text = fs::read_to_string(path).unwrap();

    let once = orgsim_core::config::parse_str(&text).unwrap();
    let written = serde_json::to_string_pretty(&once).unwrap();
    let twice = orgsim_core::config::parse_str(&written).unwrap();
    assert_eq!(once, twice);
}
