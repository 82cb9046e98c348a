//! Replication harness: run a scenario n times under derived seeds, reduce
//! each metric to mean and Student-t confidence interval, and compare two
//! scenarios replication-by-replication with common random numbers.

use std::collections::BTreeMap;

use rayon::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::design_dept::{run_scenario, RunOptions, RunOutput};
use crate::engine::{replication_seed, replication_seed_tagged, EngineError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment setup: {0}")]
    InvalidPlan(String),
    #[error("no samples to summarize")]
    InsufficientSamples,
    #[error("replication {index} failed")]
    Replication { index: usize, source: EngineError },
}

/// How many replications to run and how their seeds are derived.
///
/// Replication `i` always runs under `replication_seed(base_seed, i)`.
/// `paired` controls the seeds of the second scenario in a comparison:
/// `true` reuses the first scenario's seeds (common random numbers),
/// `false` derives a separate "B" family.
#[derive(Debug, Clone, Copy)]
pub struct ReplicationPlan {
    pub n: usize,
    pub base_seed: u64,
    pub paired: bool,
}

impl ReplicationPlan {
    pub fn new(n: usize, base_seed: u64) -> ReplicationPlan {
        ReplicationPlan { n, base_seed, paired: true }
    }

    fn check(&self) -> Result<(), ExperimentError> {
        if self.n == 0 {
            return Err(ExperimentError::InvalidPlan("plan needs n >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RepRecord {
    pub replication: usize,
    pub seed: u64,
    pub output: RunOutput,
}

fn run_with_seeds(
    config: &ScenarioConfig,
    seeds: &[u64],
    options: RunOptions,
) -> Result<Vec<RepRecord>, ExperimentError> {
    seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            run_scenario(config, seed, options)
                .map(|output| RepRecord { replication: i, seed, output })
                .map_err(|source| ExperimentError::Replication { index: i, source })
        })
        .collect()
}

/// Run `plan.n` independent replications; records come back ordered by
/// replication index whatever the execution schedule was.
pub fn run_replications(
    config: &ScenarioConfig,
    plan: ReplicationPlan,
    options: RunOptions,
) -> Result<Vec<RepRecord>, ExperimentError> {
    plan.check()?;
    let seeds: Vec<u64> = (0..plan.n as u64)
        .map(|i| replication_seed(plan.base_seed, i))
        .collect();
    run_with_seeds(config, &seeds, options)
}

/// Sample statistics of one metric across replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 divisor); 0 for a single sample.
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub alpha: f64,
    /// True when n = 1 and the interval collapses to the point estimate.
    pub degenerate: bool,
}

/// Student-t quantile at probability `p` with `df` degrees of freedom.
///
/// statrs supplies the initial inverse, which Newton steps on the exact CDF
/// then polish to machine precision; the df = 1 and df = 2 closed forms are
/// pinned by unit tests.
pub fn t_quantile(p: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    let mut x = dist.inverse_cdf(p);
    for _ in 0..6 {
        let density = dist.pdf(x);
        if density <= f64::MIN_POSITIVE {
            break;
        }
        let step = (dist.cdf(x) - p) / density;
        x -= step;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Mean and two-sided Student-t interval at level `1 - alpha`.
pub fn summarize(samples: &[f64], alpha: f64) -> Result<SummaryStats, ExperimentError> {
    if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
        return Err(ExperimentError::InvalidPlan(format!(
            "alpha {alpha} outside (0, 1)"
        )));
    }
    let n = samples.len();
    if n == 0 {
        return Err(ExperimentError::InsufficientSamples);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(SummaryStats {
            n,
            mean,
            sd: 0.0,
            ci_low: mean,
            ci_high: mean,
            alpha,
            degenerate: true,
        });
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let half_width = t_quantile(1.0 - alpha / 2.0, (n - 1) as f64) * sd / (n as f64).sqrt();
    Ok(SummaryStats {
        n,
        mean,
        sd,
        ci_low: mean - half_width,
        ci_high: mean + half_width,
        alpha,
        degenerate: false,
    })
}

/// Per-metric summaries over a set of replication records.
pub fn summarize_metrics(
    records: &[RepRecord],
    alpha: f64,
) -> Result<BTreeMap<String, SummaryStats>, ExperimentError> {
    let mut out = BTreeMap::new();
    let maps: Vec<BTreeMap<String, f64>> =
        records.iter().map(|r| r.output.metrics.to_map()).collect();
    for name in maps.first().map(|m| m.keys().cloned().collect::<Vec<_>>()).unwrap_or_default() {
        let samples: Vec<f64> = maps.iter().map(|m| m[&name]).collect();
        out.insert(name, summarize(&samples, alpha)?);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct MetricComparison {
    pub mean_a: f64,
    pub mean_b: f64,
    /// Statistics of the per-replication differences, B minus A.
    pub diff: SummaryStats,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub a: Vec<RepRecord>,
    pub b: Vec<RepRecord>,
    pub metrics: BTreeMap<String, MetricComparison>,
}

/// Run both scenarios under the plan and summarize per-replication metric
/// differences (B - A). With `plan.paired` the two runs of replication `i`
/// share one seed, so the difference isolates the configuration change.
pub fn compare_paired(
    config_a: &ScenarioConfig,
    config_b: &ScenarioConfig,
    plan: ReplicationPlan,
    alpha: f64,
    options: RunOptions,
) -> Result<Comparison, ExperimentError> {
    plan.check()?;
    let seeds_a: Vec<u64> = (0..plan.n as u64)
        .map(|i| replication_seed(plan.base_seed, i))
        .collect();
    let seeds_b: Vec<u64> = if plan.paired {
        seeds_a.clone()
    } else {
        (0..plan.n as u64)
            .map(|i| replication_seed_tagged(plan.base_seed, i, "B"))
            .collect()
    };
    let a = run_with_seeds(config_a, &seeds_a, options)?;
    let b = run_with_seeds(config_b, &seeds_b, options)?;

    let mut metrics = BTreeMap::new();
    let maps_a: Vec<BTreeMap<String, f64>> = a.iter().map(|r| r.output.metrics.to_map()).collect();
    let maps_b: Vec<BTreeMap<String, f64>> = b.iter().map(|r| r.output.metrics.to_map()).collect();
    for name in maps_a[0].keys() {
        let diffs: Vec<f64> = maps_a
            .iter()
            .zip(&maps_b)
            .map(|(ma, mb)| mb[name] - ma[name])
            .collect();
        let mean_a = maps_a.iter().map(|m| m[name]).sum::<f64>() / plan.n as f64;
        let mean_b = maps_b.iter().map(|m| m[name]).sum::<f64>() / plan.n as f64;
        metrics.insert(
            name.clone(),
            MetricComparison { mean_a, mean_b, diff: summarize(&diffs, alpha)? },
        );
    }
    Ok(Comparison { a, b, metrics })
}
