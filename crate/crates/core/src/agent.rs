//! Reactive agent core: identity, attribute vector, immutable stereotype
//! traits, and the stimulus-to-actions rule loop shared by every role.
//!
//! Rules are pure: they inspect the agent and the stimulus and return a list
//! of intended actions. All mutation, message delivery, and random decisions
//! happen when the hosting scenario applies those actions, so replaying a
//! stimulus against a cloned agent always yields the same list.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Distribution, Message, RngStreams, SimTime};
use crate::statechart::{ChartInstance, TriggerDef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Manager,
    Supervisor,
    Designer,
}

/// Stable identity of an agent within one model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId {
    pub role: Role,
    /// `None` only for the manager.
    pub team: Option<u32>,
    pub index: u32,
}

impl AgentId {
    pub fn manager() -> AgentId {
        AgentId { role: Role::Manager, team: None, index: 0 }
    }

    pub fn supervisor(team: u32) -> AgentId {
        AgentId { role: Role::Supervisor, team: Some(team), index: 0 }
    }

    pub fn designer(team: u32, index: u32) -> AgentId {
        AgentId { role: Role::Designer, team: Some(team), index }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.role {
            Role::Manager => write!(f, "manager"),
            Role::Supervisor => write!(f, "sup:{}", self.team.unwrap_or(0)),
            Role::Designer => write!(f, "des:{}:{}", self.team.unwrap_or(0), self.index),
        }
    }
}

/// Knowledge sub-categories; every activity belongs to exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Planning,
    Design,
    Testing,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Planning, Category::Design, Category::Testing];

    pub fn index(self) -> usize {
        match self {
            Category::Planning => 0,
            Category::Design => 1,
            Category::Testing => 2,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Category::Planning => "planning",
            Category::Design => "design",
            Category::Testing => "testing",
        };
        f.write_str(name)
    }
}

pub fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Mutable skill levels, all kept in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attributes {
    knowledge: [f64; 3],
    communication: f64,
    productivity: f64,
}

impl Attributes {
    pub fn new(knowledge: [f64; 3], communication: f64, productivity: f64) -> Attributes {
        Attributes {
            knowledge: knowledge.map(clamp01),
            communication: clamp01(communication),
            productivity: clamp01(productivity),
        }
    }

    pub fn knowledge(&self, cat: Category) -> f64 {
        self.knowledge[cat.index()]
    }

    pub fn communication(&self) -> f64 {
        self.communication
    }

    pub fn productivity(&self) -> f64 {
        self.productivity
    }

    pub fn set_knowledge(&mut self, cat: Category, value: f64) {
        self.knowledge[cat.index()] = clamp01(value);
    }

    pub fn set_communication(&mut self, value: f64) {
        self.communication = clamp01(value);
    }

    pub fn set_productivity(&mut self, value: f64) {
        self.productivity = clamp01(value);
    }

    /// Mean of the five levels; the cost model prices agents by this.
    pub fn mean_level(&self) -> f64 {
        (self.knowledge.iter().sum::<f64>() + self.communication + self.productivity) / 5.0
    }
}

/// Fixed stereotype parameters, immutable after initialisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Traits {
    pub willingness_to_support: f64,
    pub willingness_to_communicate: f64,
    pub base_productivity: f64,
}

/// A stereotype field: either a fixed level or a distribution to draw from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sample {
    Value(f64),
    Draw(Distribution),
}

/// Start-up values for every attribute and trait. Optional so that config
/// validation can report each missing field by name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StereotypeSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge_planning: Option<Sample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge_design: Option<Sample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge_testing: Option<Sample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub communication: Option<Sample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub productivity: Option<Sample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub willingness_to_support: Option<Sample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub willingness_to_communicate: Option<Sample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_productivity: Option<Sample>,
}

impl StereotypeSpec {
    pub fn fields(&self) -> [(&'static str, Option<&Sample>); 8] {
        [
            ("knowledge_planning", self.knowledge_planning.as_ref()),
            ("knowledge_design", self.knowledge_design.as_ref()),
            ("knowledge_testing", self.knowledge_testing.as_ref()),
            ("communication", self.communication.as_ref()),
            ("productivity", self.productivity.as_ref()),
            ("willingness_to_support", self.willingness_to_support.as_ref()),
            ("willingness_to_communicate", self.willingness_to_communicate.as_ref()),
            ("base_productivity", self.base_productivity.as_ref()),
        ]
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("bad stereotype field {field:?}: {reason}")]
    BadStereotype { field: String, reason: String },
}

/// Resolve the eight stereotype fields into attributes and traits.
///
/// Fields are drawn in declaration order from the agent's `init:<id>` stream,
/// so an agent's start-up values depend only on the base seed and its own
/// identity. Fixed values must already lie in [0, 1]; drawn values are
/// clamped into it.
pub fn init_from_stereotype(
    id: AgentId,
    spec: &StereotypeSpec,
    streams: &mut RngStreams,
) -> Result<(Attributes, Traits), AgentError> {
    let label = format!("init:{id}");
    let mut resolved = [0.0f64; 8];
    for (slot, (field, sample)) in resolved.iter_mut().zip(spec.fields()) {
        let sample = sample.ok_or_else(|| AgentError::BadStereotype {
            field: field.to_owned(),
            reason: "missing".to_owned(),
        })?;
        *slot = match sample {
            Sample::Value(v) => {
                if !v.is_finite() || !(0.0..=1.0).contains(v) {
                    return Err(AgentError::BadStereotype {
                        field: field.to_owned(),
                        reason: format!("{v} is outside [0, 1]"),
                    });
                }
                *v
            }
            Sample::Draw(dist) => {
                let drawn = streams.draw(&label, dist).map_err(|e| {
                    AgentError::BadStereotype { field: field.to_owned(), reason: e.to_string() }
                })?;
                clamp01(drawn)
            }
        };
    }
    let [kp, kd, kt, comm, prod, ws, wc, bp] = resolved;
    Ok((
        Attributes::new([kp, kd, kt], comm, prod),
        Traits {
            willingness_to_support: ws,
            willingness_to_communicate: wc,
            base_productivity: bp,
        },
    ))
}

/// Role-independent agent state: identity, levels, traits, chart position.
#[derive(Debug, Clone)]
pub struct AgentCore {
    pub id: AgentId,
    pub attributes: Attributes,
    pub traits: Traits,
    pub chart: ChartInstance,
}

impl AgentCore {
    pub fn new(id: AgentId, attributes: Attributes, traits: Traits, chart: ChartInstance) -> Self {
        AgentCore { id, attributes, traits, chart }
    }
}

/// Which attribute a `SetAttribute` action writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttributeField {
    Knowledge(Category),
    Communication,
    Productivity,
}

impl AgentCore {
    pub fn set_attribute(&mut self, field: AttributeField, value: f64) {
        match field {
            AttributeField::Knowledge(cat) => self.attributes.set_knowledge(cat, value),
            AttributeField::Communication => self.attributes.set_communication(value),
            AttributeField::Productivity => self.attributes.set_productivity(value),
        }
    }
}

/// What an agent can perceive.
#[derive(Debug, Clone)]
pub enum Stimulus<B, S> {
    Message(Message<B>),
    /// The duration of `state` elapsed. `epoch` is the chart epoch the
    /// timeout was armed in; a mismatch means the timeout is stale.
    StateTimeout { state: String, epoch: u64 },
    Scheduled(S),
}

/// What an agent can decide to do. Actions are intents; the scenario applies
/// them, which is where guards are resolved and randomness is consumed.
#[derive(Debug, Clone)]
pub enum Action<B, S> {
    Fire(TriggerDef),
    Send { to: AgentId, body: B },
    Schedule { delay: f64, payload: S },
    SetAttribute { field: AttributeField, value: f64 },
}

/// Per-role decision rules. `Ctx` exposes read-only scenario state a rule may
/// consult (queues, rosters, clock).
pub trait RuleTable {
    type MsgBody: Clone + fmt::Debug;
    type Sched: Clone + fmt::Debug;
    type Ctx<'c>
    where
        Self: 'c;

    /// `None` means the table has no rule for this stimulus.
    fn rules<'c>(
        &'c self,
        agent: &AgentCore,
        stimulus: &Stimulus<Self::MsgBody, Self::Sched>,
        now: SimTime,
        ctx: Self::Ctx<'c>,
    ) -> Option<Vec<Action<Self::MsgBody, Self::Sched>>>;
}

/// Run the rule table; an unhandled stimulus is a logged no-op, never an
/// error.
pub fn react<'c, T: RuleTable>(
    table: &'c T,
    agent: &AgentCore,
    stimulus: &Stimulus<T::MsgBody, T::Sched>,
    now: SimTime,
    ctx: T::Ctx<'c>,
) -> Vec<Action<T::MsgBody, T::Sched>> {
    match table.rules(agent, stimulus, now, ctx) {
        Some(actions) => actions,
        None => {
            log::debug!("agent {} has no rule for {:?} at {}", agent.id, stimulus, now);
            Vec::new()
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::statechart::{StateChart, StateDef};

    fn tiny_chart() -> Arc<StateChart> {
        Arc::new(StateChart {
            idle: "idle".into(),
            states: vec![StateDef {
                id: "idle".into(),
                priority: 0,
                interruptible: true,
                duration: None,
            }],
            triggers: vec![],
        })
    }

    fn full_spec() -> StereotypeSpec {
        StereotypeSpec {
            knowledge_planning: Some(Sample::Value(0.9)),
            knowledge_design: Some(Sample::Value(0.9)),
            knowledge_testing: Some(Sample::Value(0.9)),
            communication: Some(Sample::Value(0.1)),
            productivity: Some(Sample::Value(0.7)),
            willingness_to_support: Some(Sample::Value(1.0)),
            willingness_to_communicate: Some(Sample::Value(0.8)),
            base_productivity: Some(Sample::Value(0.5)),
        }
    }

    #[test]
    fn id_display_is_compact() {
        assert_eq!(AgentId::manager().to_string(), "manager");
        assert_eq!(AgentId::supervisor(0).to_string(), "sup:0");
        assert_eq!(AgentId::designer(1, 2).to_string(), "des:1:2");
    }

    #[test]
    fn ids_order_manager_supervisors_designers() {
        let mut ids = vec![
            AgentId::designer(0, 1),
            AgentId::supervisor(1),
            AgentId::manager(),
            AgentId::designer(0, 0),
        ];
        ids.sort();
        assert_eq!(
            ids,
            vec![
                AgentId::manager(),
                AgentId::supervisor(1),
                AgentId::designer(0, 0),
                AgentId::designer(0, 1),
            ]
        );
    }

    #[test]
    fn constant_stereotype_copies_values_exactly() {
        let mut streams = RngStreams::new(1);
        let (attrs, traits) =
            init_from_stereotype(AgentId::designer(0, 0), &full_spec(), &mut streams).unwrap();
        assert_eq!(attrs.knowledge(Category::Design), 0.9);
        assert_eq!(attrs.communication(), 0.1);
        assert_eq!(attrs.productivity(), 0.7);
        assert_eq!(traits.willingness_to_support, 1.0);
        assert_eq!(traits.base_productivity, 0.5);
    }

    #[test]
    fn drawn_stereotype_is_in_range_and_reproducible() {
        let spec = StereotypeSpec {
            communication: Some(Sample::Draw(Distribution::Uniform { lo: 0.4, hi: 0.6 })),
            ..full_spec()
        };
        let draw = |seed| {
            let mut streams = RngStreams::new(seed);
            init_from_stereotype(AgentId::designer(0, 0), &spec, &mut streams)
                .unwrap()
                .0
                .communication()
        };
        let a = draw(7);
        assert!((0.4..=0.6).contains(&a));
        assert_eq!(a, draw(7));
        assert_ne!(a, draw(8));
    }

    #[test]
    fn missing_field_is_rejected_by_name() {
        let spec = StereotypeSpec { willingness_to_support: None, ..full_spec() };
        let mut streams = RngStreams::new(1);
        let err = init_from_stereotype(AgentId::designer(0, 0), &spec, &mut streams).unwrap_err();
        let AgentError::BadStereotype { field, .. } = err;
        assert_eq!(field, "willingness_to_support");
    }

    #[test]
    fn out_of_range_constant_is_rejected() {
        let spec = StereotypeSpec { communication: Some(Sample::Value(1.5)), ..full_spec() };
        let mut streams = RngStreams::new(1);
        assert!(init_from_stereotype(AgentId::designer(0, 0), &spec, &mut streams).is_err());
    }

    #[test]
    fn distinct_agents_draw_from_distinct_streams() {
        let spec = StereotypeSpec {
            communication: Some(Sample::Draw(Distribution::Uniform { lo: 0.0, hi: 1.0 })),
            ..full_spec()
        };
        let mut streams = RngStreams::new(3);
        let a = init_from_stereotype(AgentId::designer(0, 0), &spec, &mut streams).unwrap();
        let b = init_from_stereotype(AgentId::designer(0, 1), &spec, &mut streams).unwrap();
        assert_ne!(a.0.communication(), b.0.communication());
    }

    #[test]
    fn attribute_writes_clamp() {
        let chart = tiny_chart();
        let mut agent = AgentCore::new(
            AgentId::designer(0, 0),
            Attributes::new([0.5; 3], 0.5, 0.5),
            Traits {
                willingness_to_support: 0.5,
                willingness_to_communicate: 0.5,
                base_productivity: 0.5,
            },
            ChartInstance::new(chart, SimTime::ZERO),
        );
        agent.set_attribute(AttributeField::Communication, 7.3);
        assert_eq!(agent.attributes.communication(), 1.0);
        agent.set_attribute(AttributeField::Knowledge(Category::Testing), -0.2);
        assert_eq!(agent.attributes.knowledge(Category::Testing), 0.0);
    }

    #[test]
    fn mean_level_averages_all_five_levels() {
        let attrs = Attributes::new([0.2, 0.4, 0.6], 0.8, 1.0);
        assert!((attrs.mean_level() - 0.6).abs() < 1e-12);
    }

    struct Mute;

    impl RuleTable for Mute {
        type MsgBody = ();
        type Sched = ();
        type Ctx<'c> = ();

        fn rules<'c>(
            &'c self,
            _agent: &AgentCore,
            _stimulus: &Stimulus<(), ()>,
            _now: SimTime,
            _ctx: (),
        ) -> Option<Vec<Action<(), ()>>> {
            None
        }
    }

    #[test]
    fn unhandled_stimulus_is_an_empty_action_list() {
        let agent = AgentCore::new(
            AgentId::manager(),
            Attributes::new([0.5; 3], 0.5, 0.5),
            Traits {
                willingness_to_support: 0.5,
                willingness_to_communicate: 0.5,
                base_productivity: 0.5,
            },
            ChartInstance::new(tiny_chart(), SimTime::ZERO),
        );
        let actions = react(&Mute, &agent, &Stimulus::Scheduled(()), SimTime::ZERO, ());
        assert!(actions.is_empty());
    }
}
