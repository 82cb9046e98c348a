//! Inverse calibration: search a box of named config parameters so that
//! simulated metrics match reference values, and report the best handful of
//! candidates rather than a single winner, because different parameter
//! assignments can produce indistinguishable outputs.
//!
//! The search has two phases. Phase one covers the box with Latin-hypercube
//! samples drawn from the "calibration" stream, generated in fixed-size
//! doubling blocks (16, 32, 64, ...) so that a larger budget evaluates a
//! superset of a smaller one's points. Phase two spends the remaining budget
//! on a coordinate pattern search around the phase-one best. Every
//! evaluation averages metrics over the same derived replication seeds, so
//! candidates differ only by their parameters, never by luck of the draw.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{parse_str, ScenarioConfig};
use crate::design_dept::{run_scenario, RunOptions};
use crate::engine::{replication_seed_tagged, Distribution, EngineError, RngStreams};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("target {0:?} is not a reported metric")]
    MissingMetric(String),
    #[error("bad target weights: {0}")]
    BadWeights(String),
    #[error("bad budget: {0}")]
    BadBudget(String),
    #[error("bad parameter space: {path}: {reason}")]
    BadParamSpace { path: String, reason: String },
    #[error("candidate config rejected: {0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// One searchable parameter: a dotted config path and its inclusive range.
/// Paths address numbers in the scenario config, e.g. `constants.eta_m` or
/// `department.teams[0].designers[1].overrides.productivity`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamDef {
    pub path: String,
    pub lo: f64,
    pub hi: f64,
}

/// A reference output the search tries to reproduce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub metric: String,
    pub value: f64,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateResult {
    pub params: BTreeMap<String, f64>,
    pub discrepancy: f64,
    pub metrics: BTreeMap<String, f64>,
}

/// Weighted root-mean-square relative deviation of metrics from targets,
/// each term scaled by max(|target|, 1e-9).
pub fn discrepancy(
    metrics: &BTreeMap<String, f64>,
    targets: &[TargetSpec],
) -> Result<f64, CalibrationError> {
    check_targets(targets)?;
    let mut sum = 0.0;
    let mut total_weight = 0.0;
    for t in targets {
        let m = metrics
            .get(&t.metric)
            .ok_or_else(|| CalibrationError::MissingMetric(t.metric.clone()))?;
        let scale = t.value.abs().max(1e-9);
        sum += t.weight * ((m - t.value) / scale).powi(2);
        total_weight += t.weight;
    }
    Ok((sum / total_weight).sqrt())
}

fn check_targets(targets: &[TargetSpec]) -> Result<(), CalibrationError> {
    if targets.is_empty() {
        return Err(CalibrationError::BadWeights("no targets given".into()));
    }
    let mut total = 0.0;
    for t in targets {
        if !t.weight.is_finite() || t.weight < 0.0 {
            return Err(CalibrationError::BadWeights(format!(
                "weight {} for {} must be finite and >= 0",
                t.weight, t.metric
            )));
        }
        total += t.weight;
    }
    if total <= 0.0 {
        return Err(CalibrationError::BadWeights("all weights are zero".into()));
    }
    Ok(())
}

/// Translate `a.b[2].c` into the JSON pointer `/a/b/2/c`.
pub fn path_to_pointer(path: &str) -> String {
    let mut out = String::new();
    for part in path.split('.') {
        let mut rest = part;
        while let Some(open) = rest.find('[') {
            if !rest[..open].is_empty() {
                out.push('/');
                out.push_str(&rest[..open]);
            }
            let close = rest[open..].find(']').map(|c| open + c).unwrap_or(rest.len());
            out.push('/');
            out.push_str(&rest[open + 1..close]);
            rest = rest.get(close + 1..).unwrap_or("");
        }
        if !rest.is_empty() {
            out.push('/');
            out.push_str(rest);
        }
    }
    out
}

fn check_space(base: &serde_json::Value, space: &[ParamDef]) -> Result<(), CalibrationError> {
    if space.is_empty() {
        return Err(CalibrationError::BadParamSpace {
            path: "<space>".into(),
            reason: "no parameters to search".into(),
        });
    }
    for def in space {
        let bad = |reason: &str| CalibrationError::BadParamSpace {
            path: def.path.clone(),
            reason: reason.into(),
        };
        if !def.lo.is_finite() || !def.hi.is_finite() || def.lo > def.hi {
            return Err(bad("range must be finite with lo <= hi"));
        }
        match base.pointer(&path_to_pointer(&def.path)) {
            Some(v) if v.is_number() => {}
            Some(_) => return Err(bad("path does not address a number")),
            None => return Err(bad("path does not exist in the config")),
        }
    }
    Ok(())
}

/// Point in the unit cube, one coordinate per space dimension.
type UnitPoint = Vec<f64>;

fn scale_point(space: &[ParamDef], x: &UnitPoint) -> BTreeMap<String, f64> {
    space
        .iter()
        .zip(x)
        .map(|(def, u)| (def.path.clone(), def.lo + u * (def.hi - def.lo)))
        .collect()
}

fn evaluate(
    base_json: &serde_json::Value,
    space: &[ParamDef],
    x: &UnitPoint,
    targets: &[TargetSpec],
    replications: usize,
    seed: u64,
) -> Result<CandidateResult, CalibrationError> {
    let params = scale_point(space, x);
    let mut json = base_json.clone();
    for (path, value) in &params {
        let slot = json
            .pointer_mut(&path_to_pointer(path))
            .expect("space checked against the base config");
        *slot = serde_json::json!(value);
    }
    let config: ScenarioConfig =
        parse_str(&json.to_string()).map_err(|e| CalibrationError::Config(e.to_string()))?;

    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    for i in 0..replications as u64 {
        let out = run_scenario(
            &config,
            replication_seed_tagged(seed, i, "cal"),
            RunOptions::default(),
        )?;
        for (k, v) in out.metrics.to_map() {
            *sums.entry(k).or_insert(0.0) += v;
        }
    }
    let metrics: BTreeMap<String, f64> = sums
        .into_iter()
        .map(|(k, v)| (k, v / replications as f64))
        .collect();
    let d = discrepancy(&metrics, targets)?;
    Ok(CandidateResult { params, discrepancy: d, metrics })
}

/// Latin-hypercube points for one block: every dimension gets each of the
/// `n` strata exactly once, in an order shuffled from the stream, jittered
/// uniformly within the stratum.
fn lhs_block(streams: &mut RngStreams, dims: usize, n: usize) -> Vec<UnitPoint> {
    let unit = Distribution::Uniform { lo: 0.0, hi: 1.0 };
    let draw = |streams: &mut RngStreams| streams.draw("calibration", &unit).expect("unit");
    let mut perms: Vec<Vec<usize>> = Vec::with_capacity(dims);
    for _ in 0..dims {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let u = draw(streams);
            let k = ((u * (i + 1) as f64) as usize).min(i);
            perm.swap(i, k);
        }
        perms.push(perm);
    }
    (0..n)
        .map(|i| {
            (0..dims)
                .map(|j| {
                    let u = draw(streams);
                    (perms[j][i] as f64 + u) / n as f64
                })
                .collect()
        })
        .collect()
}

/// First `count` points of the nested sampling plan: doubling blocks so a
/// bigger budget extends, never replaces, a smaller one's sample.
fn lhs_points(seed: u64, dims: usize, count: usize) -> Vec<UnitPoint> {
    let mut streams = RngStreams::new(seed);
    let mut points = Vec::with_capacity(count);
    let mut block = 16;
    while points.len() < count {
        points.extend(lhs_block(&mut streams, dims, block));
        block *= 2;
    }
    points.truncate(count);
    points
}

fn point_key(x: &UnitPoint) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// Search the parameter box for assignments whose simulated metrics match
/// the targets; returns up to `top_k` candidates, best first. Deterministic
/// in (space, targets, budget, seed).
pub fn calibrate_search(
    base: &ScenarioConfig,
    space: &[ParamDef],
    targets: &[TargetSpec],
    budget: usize,
    replications_per_eval: usize,
    seed: u64,
    top_k: usize,
) -> Result<Vec<CandidateResult>, CalibrationError> {
    if budget == 0 {
        return Err(CalibrationError::BadBudget("budget must be >= 1".into()));
    }
    if replications_per_eval == 0 {
        return Err(CalibrationError::BadBudget(
            "replications_per_eval must be >= 1".into(),
        ));
    }
    check_targets(targets)?;
    let base_json = serde_json::to_value(base).map_err(|e| CalibrationError::Config(e.to_string()))?;
    check_space(&base_json, space)?;

    let dims = space.len();
    let phase1 = budget.min((0.7 * budget as f64).ceil() as usize);
    let points = lhs_points(seed, dims, phase1);

    let mut evaluated: Vec<(UnitPoint, CandidateResult)> = points
        .into_par_iter()
        .map(|x| {
            evaluate(&base_json, space, &x, targets, replications_per_eval, seed)
                .map(|c| (x, c))
        })
        .collect::<Result<_, _>>()?;

    let mut seen: HashSet<Vec<u64>> = evaluated.iter().map(|(x, _)| point_key(x)).collect();
    let mut spent = evaluated.len();

    // Phase two: coordinate pattern search from the best sample, halving the
    // step whenever a full sweep brings no improvement.
    let best_index = |evals: &[(UnitPoint, CandidateResult)]| {
        evals
            .iter()
            .enumerate()
            .min_by(|(_, (_, a)), (_, (_, b))| a.discrepancy.total_cmp(&b.discrepancy))
            .map(|(i, _)| i)
            .expect("at least one evaluation")
    };
    let mut current = evaluated[best_index(&evaluated)].0.clone();
    let mut step = 0.25;
    while spent < budget && step > 1e-9 {
        let mut improved = false;
        'sweep: for j in 0..dims {
            for dir in [1.0, -1.0] {
                if spent >= budget {
                    break 'sweep;
                }
                let mut x = current.clone();
                x[j] = (x[j] + dir * step).clamp(0.0, 1.0);
                if !seen.insert(point_key(&x)) {
                    continue;
                }
                let cand = evaluate(&base_json, space, &x, targets, replications_per_eval, seed)?;
                spent += 1;
                let best_d = evaluated[best_index(&evaluated)].1.discrepancy;
                if cand.discrepancy < best_d {
                    current = x.clone();
                    improved = true;
                }
                evaluated.push((x, cand));
            }
        }
        if !improved {
            step /= 2.0;
        }
    }

    let mut results: Vec<CandidateResult> = evaluated.into_iter().map(|(_, c)| c).collect();
    results.sort_by(|a, b| a.discrepancy.total_cmp(&b.discrepancy));
    results.dedup_by(|a, b| a.params == b.params);
    results.truncate(top_k);
    Ok(results)
}
