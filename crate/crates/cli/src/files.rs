//! Output files. Everything lands atomically (temp sibling + rename) so a
//! crashed run never leaves a half-written CSV, and all real numbers use
//! 6-decimal fixed notation so repeat runs are byte-comparable.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use orgsim_core::calibration::CandidateResult;
use orgsim_core::experiment::{Comparison, RepRecord};

pub fn write_atomic(path: &Path, contents: &str) -> Result<PathBuf> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .with_context(|| format!("bad output file name {}", path.display()))?;
    let tmp = path.with_file_name(format!("{name}.tmp"));
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path)
        .with_context(|| format!("moving {} into place", path.display()))?;
    Ok(path.to_path_buf())
}

fn metric_columns(r: &RepRecord) -> String {
    let m = &r.output.metrics;
    format!(
        "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
        m.contracts_arrived,
        m.contracts_completed,
        m.on_time_fraction,
        m.mean_tardiness_h,
        m.mean_team_productivity,
        m.total_cost,
        m.productivity_per_cost
    )
}

const METRIC_HEADER: &str = "contracts_arrived,contracts_completed,on_time_fraction,\
mean_tardiness_h,mean_team_productivity,total_cost,productivity_per_cost";

pub fn run_summary(records: &[RepRecord]) -> String {
    let mut out = format!("replication,seed,{METRIC_HEADER}\n");
    for r in records {
        let _ = writeln!(out, "{},{},{}", r.replication, r.seed, metric_columns(r));
    }
    out
}

/// Long-format attribute samples of the first replication.
pub fn agent_trace(record: &RepRecord) -> String {
    let mut out = String::from("time,agent_id,attribute,value\n");
    for row in &record.output.trace {
        let _ = writeln!(out, "{:.6},{},{},{:.6}", row.time, row.agent, row.attribute, row.value);
    }
    out
}

/// Event lines of every replication, in replication order.
pub fn events_log(records: &[RepRecord]) -> String {
    let mut out = String::new();
    for record in records {
        for line in record.output.event_log.as_deref().unwrap_or_default() {
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

pub fn compare_summary(comparison: &Comparison) -> String {
    let mut out =
        String::from("metric,n,mean_a,mean_b,diff_mean,diff_sd,diff_ci_low,diff_ci_high\n");
    for (metric, mc) in &comparison.metrics {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            metric,
            mc.diff.n,
            mc.mean_a,
            mc.mean_b,
            mc.diff.mean,
            mc.diff.sd,
            mc.diff.ci_low,
            mc.diff.ci_high
        );
    }
    out
}

/// Ranked candidates: rank, discrepancy, the swept parameters in declaration
/// order, then every metric the evaluations produced.
pub fn calibration_report(param_order: &[String], candidates: &[CandidateResult]) -> String {
    let metric_names: Vec<&str> = candidates
        .first()
        .map(|c| c.metrics.keys().map(String::as_str).collect())
        .unwrap_or_default();

    let mut out = String::from("rank,discrepancy");
    for p in param_order {
        let _ = write!(out, ",{p}");
    }
    for m in &metric_names {
        let _ = write!(out, ",{m}");
    }
    out.push('\n');

    for (i, c) in candidates.iter().enumerate() {
        let _ = write!(out, "{},{:.6}", i + 1, c.discrepancy);
        for p in param_order {
            let _ = write!(out, ",{:.6}", c.params[p]);
        }
        for m in &metric_names {
            let _ = write!(out, ",{:.6}", c.metrics[*m]);
        }
        out.push('\n');
    }
    out
}

/// One row per replication of every grid point; the swept values prefix
/// each row so the file is self-describing.
pub fn sweep_summary(paths: &[String], points: &[(Vec<f64>, Vec<RepRecord>)]) -> String {
    let mut out = String::from("point");
    for p in paths {
        let _ = write!(out, ",{p}");
    }
    let _ = writeln!(out, ",replication,seed,{METRIC_HEADER}");

    for (index, (values, records)) in points.iter().enumerate() {
        for r in records {
            let _ = write!(out, "{index}");
            for v in values {
                let _ = write!(out, ",{v:.6}");
            }
            let _ = writeln!(out, ",{},{},{}", r.replication, r.seed, metric_columns(r));
        }
    }
    out
}
