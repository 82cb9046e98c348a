//! Scenario file parsing and validation.
//!
//! The file format is JSON. Parsing fills documented defaults; validation
//! then walks the whole structure and reports every defect it finds, each
//! with the path of the offending field, rather than stopping at the first.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Category, Sample, StereotypeSpec};
use crate::engine::Distribution;

/// Scenario constants with their defaults. Time unit is hours throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Constants {
    /// Communication drift rate per hour.
    pub eta_m: f64,
    /// Productivity drift rate per hour.
    pub eta_p: f64,
    /// Knowledge uptake per completed support session.
    pub eta_k: f64,
    /// Communication drift multiplier while a meeting is running.
    pub kappa_meet: f64,
    /// Support session duration, hours.
    pub d_s: f64,
    /// How long a requester waits for support before working unsupported.
    pub t_w: f64,
    /// Meeting period: each team meets every `w_meeting` hours.
    pub w_meeting: f64,
    /// Meeting duration, hours.
    pub d_meet: f64,
    /// Knowledge gate while a support session is active.
    pub g_supported: f64,
    /// Knowledge gate with no support at all.
    pub g_unsupported: f64,
    /// Hourly cost floor per agent.
    pub cost_a: f64,
    /// Hourly cost per unit of mean skill.
    pub cost_b: f64,
    /// Contract teamwork requirement when a contract does not set one.
    pub default_teamwork: f64,
    /// Attribute sampling period for traces and drift stepping.
    pub sample_every: f64,
}

impl Default for Constants {
    fn default() -> Constants {
        Constants {
            eta_m: 0.05,
            eta_p: 0.05,
            eta_k: 0.3,
            kappa_meet: 4.0,
            d_s: 2.0,
            t_w: 1.0,
            w_meeting: 40.0,
            d_meet: 1.0,
            g_supported: 0.9,
            g_unsupported: 0.5,
            cost_a: 10.0,
            cost_b: 20.0,
            default_teamwork: 0.5,
            sample_every: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignerConfig {
    /// Name of a stereotype in `department.stereotypes`.
    pub stereotype: String,
    /// Per-designer replacements for individual stereotype fields.
    #[serde(default, skip_serializing_if = "is_empty_spec")]
    pub overrides: StereotypeSpec,
}

fn is_empty_spec(spec: &StereotypeSpec) -> bool {
    spec.fields().iter().all(|(_, v)| v.is_none())
}

impl DesignerConfig {
    /// Stereotype with this designer's overrides applied.
    pub fn resolve(&self, base: &StereotypeSpec) -> StereotypeSpec {
        let pick = |over: &Option<Sample>, base: &Option<Sample>| {
            over.clone().or_else(|| base.clone())
        };
        StereotypeSpec {
            knowledge_planning: pick(&self.overrides.knowledge_planning, &base.knowledge_planning),
            knowledge_design: pick(&self.overrides.knowledge_design, &base.knowledge_design),
            knowledge_testing: pick(&self.overrides.knowledge_testing, &base.knowledge_testing),
            communication: pick(&self.overrides.communication, &base.communication),
            productivity: pick(&self.overrides.productivity, &base.productivity),
            willingness_to_support: pick(
                &self.overrides.willingness_to_support,
                &base.willingness_to_support,
            ),
            willingness_to_communicate: pick(
                &self.overrides.willingness_to_communicate,
                &base.willingness_to_communicate,
            ),
            base_productivity: pick(&self.overrides.base_productivity, &base.base_productivity),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeamConfig {
    /// Stereotype name for the supervisor.
    pub supervisor: String,
    pub designers: Vec<DesignerConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepartmentConfig {
    pub stereotypes: BTreeMap<String, StereotypeSpec>,
    /// Stereotype name for the manager.
    pub manager: String,
    pub teams: Vec<TeamConfig>,
}

impl DepartmentConfig {
    pub fn stereotype(&self, name: &str) -> Option<&StereotypeSpec> {
        self.stereotypes.get(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivitySpec {
    pub category: Category,
    /// Person-hours of effort, > 0.
    pub effort: f64,
    /// Knowledge level the activity demands, in [0, 1].
    pub required_knowledge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractSpec {
    pub arrival_time: f64,
    pub deadline: f64,
    /// Teamwork requirement; `constants.default_teamwork` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teamwork: Option<f64>,
    pub activities: Vec<ActivitySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateSpec {
    /// Relative selection weight, >= 0; not all template weights may be zero.
    pub weight: f64,
    pub category: Category,
    pub effort: Sample,
    pub required_knowledge: Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonConfig {
    /// Mean arrivals per hour.
    pub rate: f64,
    /// Deadline is arrival time plus this many hours.
    pub deadline_offset: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teamwork: Option<f64>,
    pub activities_per_contract: u32,
    pub templates: Vec<TemplateSpec>,
}

/// Where contracts come from: a fixed list or a Poisson arrival process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractsConfig {
    Explicit(Vec<ContractSpec>),
    Poisson(PoissonConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Run length in hours.
    pub horizon: f64,
    #[serde(default)]
    pub constants: Constants,
    pub department: DepartmentConfig,
    pub contracts: ContractsConfig,
}

/// One validation finding, addressed by the path of the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaDefect {
    pub path: String,
    pub reason: String,
}

impl fmt::Display for SchemaDefect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.reason)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("config schema: {} defect(s)\n{}", .0.len(), format_defects(.0))]
    Schema(Vec<SchemaDefect>),
}

fn format_defects(defects: &[SchemaDefect]) -> String {
    defects.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}

/// Load, parse, and validate a scenario file.
pub fn load(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_str(&text)
}

/// Parse and validate scenario text.
pub fn parse_str(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let config: ScenarioConfig = serde_json::from_str(text).map_err(|e| {
        if e.classify() == serde_json::error::Category::Data {
            ConfigError::Schema(vec![SchemaDefect {
                path: format!("line {}, column {}", e.line(), e.column()),
                reason: e.to_string(),
            }])
        } else {
            ConfigError::Syntax(e.to_string())
        }
    })?;
    let defects = validate(&config);
    if defects.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError::Schema(defects))
    }
}

/// Serialize the parsed config with all defaults filled in.
pub fn to_normalized_json(config: &ScenarioConfig) -> String {
    let mut text = serde_json::to_string_pretty(config).expect("config serializes");
    text.push('\n');
    text
}

/// Every semantic problem in `config`, with field paths. Empty means usable.
pub fn validate(config: &ScenarioConfig) -> Vec<SchemaDefect> {
    let mut v = Validator::default();
    v.positive("horizon", config.horizon);

    validate_constants(&config.constants, &mut v);
    validate_department(&config.department, &mut v);
    match &config.contracts {
        ContractsConfig::Explicit(list) => validate_explicit(list, &mut v),
        ContractsConfig::Poisson(p) => validate_poisson(p, &mut v),
    }
    v.defects
}

#[derive(Default)]
struct Validator {
    defects: Vec<SchemaDefect>,
}

impl Validator {
    fn push(&mut self, path: impl Into<String>, reason: impl Into<String>) {
        self.defects.push(SchemaDefect { path: path.into(), reason: reason.into() });
    }

    fn positive(&mut self, path: &str, x: f64) {
        if !x.is_finite() || x <= 0.0 {
            self.push(path, format!("{x} must be a finite number > 0"));
        }
    }

    fn non_negative(&mut self, path: &str, x: f64) {
        if !x.is_finite() || x < 0.0 {
            self.push(path, format!("{x} must be a finite number >= 0"));
        }
    }

    fn unit_interval(&mut self, path: &str, x: f64) {
        if !x.is_finite() || !(0.0..=1.0).contains(&x) {
            self.push(path, format!("{x} is outside [0, 1]"));
        }
    }
}

fn validate_constants(c: &Constants, v: &mut Validator) {
    v.non_negative("constants.eta_m", c.eta_m);
    v.non_negative("constants.eta_p", c.eta_p);
    v.unit_interval("constants.eta_k", c.eta_k);
    v.positive("constants.kappa_meet", c.kappa_meet);
    v.positive("constants.d_s", c.d_s);
    v.positive("constants.t_w", c.t_w);
    v.positive("constants.w_meeting", c.w_meeting);
    v.positive("constants.d_meet", c.d_meet);
    if c.d_meet.is_finite() && c.w_meeting.is_finite() && c.d_meet > c.w_meeting {
        v.push("constants.d_meet", "meeting duration exceeds the meeting period");
    }
    v.unit_interval("constants.g_supported", c.g_supported);
    v.unit_interval("constants.g_unsupported", c.g_unsupported);
    v.non_negative("constants.cost_a", c.cost_a);
    v.non_negative("constants.cost_b", c.cost_b);
    v.unit_interval("constants.default_teamwork", c.default_teamwork);
    v.positive("constants.sample_every", c.sample_every);
}

fn validate_department(d: &DepartmentConfig, v: &mut Validator) {
    for (name, spec) in &d.stereotypes {
        let base = format!("department.stereotypes.{name}");
        for (field, sample) in spec.fields() {
            let path = format!("{base}.{field}");
            match sample {
                None => v.push(path, "missing"),
                Some(Sample::Value(x)) => v.unit_interval(&path, *x),
                Some(Sample::Draw(dist)) => {
                    if let Err(e) = dist.validate() {
                        v.push(path, e.to_string());
                    }
                }
            }
        }
    }

    let known = |v: &mut Validator, path: String, name: &str| {
        if !d.stereotypes.contains_key(name) {
            v.push(path, format!("unknown stereotype {name:?}"));
        }
    };
    known(v, "department.manager".into(), &d.manager);

    if d.teams.is_empty() {
        v.push("department.teams", "at least one team is required");
    }
    for (ti, team) in d.teams.iter().enumerate() {
        let base = format!("department.teams[{ti}]");
        known(v, format!("{base}.supervisor"), &team.supervisor);
        if team.designers.is_empty() {
            v.push(format!("{base}.designers"), "team needs at least one designer");
        }
        for (di, des) in team.designers.iter().enumerate() {
            let dbase = format!("{base}.designers[{di}]");
            known(v, format!("{dbase}.stereotype"), &des.stereotype);
            for (field, sample) in des.overrides.fields() {
                let path = format!("{dbase}.overrides.{field}");
                match sample {
                    None => {}
                    Some(Sample::Value(x)) => v.unit_interval(&path, *x),
                    Some(Sample::Draw(dist)) => {
                        if let Err(e) = dist.validate() {
                            v.push(path, e.to_string());
                        }
                    }
                }
            }
        }
    }
}

fn validate_explicit(list: &[ContractSpec], v: &mut Validator) {
    for (ci, c) in list.iter().enumerate() {
        let base = format!("contracts.explicit[{ci}]");
        v.non_negative(&format!("{base}.arrival_time"), c.arrival_time);
        if !c.deadline.is_finite() || c.deadline <= c.arrival_time {
            v.push(
                format!("{base}.deadline"),
                format!("deadline {} must exceed arrival_time {}", c.deadline, c.arrival_time),
            );
        }
        if let Some(tau) = c.teamwork {
            v.unit_interval(&format!("{base}.teamwork"), tau);
        }
        if c.activities.is_empty() {
            v.push(format!("{base}.activities"), "contract needs at least one activity");
        }
        for (ai, a) in c.activities.iter().enumerate() {
            let abase = format!("{base}.activities[{ai}]");
            v.positive(&format!("{abase}.effort"), a.effort);
            v.unit_interval(&format!("{abase}.required_knowledge"), a.required_knowledge);
        }
    }
}

fn validate_poisson(p: &PoissonConfig, v: &mut Validator) {
    v.positive("contracts.poisson.rate", p.rate);
    v.positive("contracts.poisson.deadline_offset", p.deadline_offset);
    if let Some(tau) = p.teamwork {
        v.unit_interval("contracts.poisson.teamwork", tau);
    }
    if p.activities_per_contract == 0 {
        v.push("contracts.poisson.activities_per_contract", "must be >= 1");
    }
    if p.templates.is_empty() {
        v.push("contracts.poisson.templates", "at least one template is required");
    }
    let mut weight_sum = 0.0;
    for (ti, t) in p.templates.iter().enumerate() {
        let base = format!("contracts.poisson.templates[{ti}]");
        v.non_negative(&format!("{base}.weight"), t.weight);
        if t.weight.is_finite() && t.weight >= 0.0 {
            weight_sum += t.weight;
        }
        validate_effort_sample(&t.effort, &format!("{base}.effort"), v);
        let rk = format!("{base}.required_knowledge");
        match &t.required_knowledge {
            Sample::Value(x) => v.unit_interval(&rk, *x),
            Sample::Draw(dist) => {
                if let Err(e) = dist.validate() {
                    v.push(rk, e.to_string());
                }
            }
        }
    }
    if !p.templates.is_empty() && weight_sum <= 0.0 {
        v.push("contracts.poisson.templates", "template weights sum to zero");
    }
}

/// Effort is in hours and must stay strictly positive, so only
/// positive-support samples are accepted.
fn validate_effort_sample(s: &Sample, path: &str, v: &mut Validator) {
    match s {
        Sample::Value(x) => v.positive(path, *x),
        Sample::Draw(dist) => {
            if let Err(e) = dist.validate() {
                v.push(path, e.to_string());
                return;
            }
            let ok = match *dist {
                Distribution::Constant { value } => value > 0.0,
                Distribution::Uniform { lo, .. } => lo > 0.0,
                Distribution::Exponential { .. } => true,
                Distribution::Triangular { lo, .. } => lo > 0.0,
                Distribution::Bernoulli { .. } => false,
            };
            if !ok {
                v.push(path, "effort distribution must have strictly positive support");
            }
        }
    }
}
