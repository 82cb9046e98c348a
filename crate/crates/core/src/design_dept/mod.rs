//! The department scenario: a manager assigns incoming contracts to teams,
//! supervisors hand activities to designers, designers work, seek and give
//! support, sit in meetings, and their attributes drift as they do.
//!
//! Event handling is split in two layers. Rule tables ([`DeptRules`]) are
//! pure: they map a stimulus to the trigger an agent intends to fire. The
//! model then applies the firing and carries out its consequences (queue
//! bookkeeping, messages, session management), which is also where guards
//! are resolved and randomness is consumed.
//!
//! Continuous dynamics (attribute drift, cost, the productivity integral)
//! advance in [`DeptModel::handle`] before each event is dispatched, so
//! every event boundary is also an integration boundary. Sampling ticks run
//! whether or not tracing is on, which keeps the event stream, and with it
//! every drawn random number, identical between traced and untraced runs.

pub mod charts;
pub mod dynamics;
mod types;

use std::collections::BTreeMap;

use crate::agent::{react, Action, AgentCore, AgentId, Category, RuleTable, Stimulus};

pub use types::{
    ActivityAudit, ActivityRef, ActivityRt, AgentRt, AgentSnapshot, ContractRt, ContractStatus,
    Metrics, RunOutput, SessionRt, TaskRt, TeamRt, TraceRow, WalkRt, WorkSegment,
};

use crate::config::{Constants, ContractsConfig, ScenarioConfig};
use crate::engine::{
    self, Distribution, EngineError, Event, EventTarget, Kernel, Message, Payload, SimTime,
};
use crate::statechart::{ChartInstance, FireOutcome, ResumeOutcome, TriggerDef, TriggerKind};

use charts::*;
use dynamics::*;

/// Message vocabulary of the scenario.
#[derive(Debug, Clone)]
pub enum MsgBody {
    ContractAssigned { contract: usize },
    TaskAssigned { activity: ActivityRef },
    ActivityDone { activity: ActivityRef },
    DesignerIdle,
    SupportRequest { activity: ActivityRef },
    SupportReply { activity: ActivityRef, accepted: bool },
}

impl MsgBody {
    fn kind(&self) -> &'static str {
        match self {
            MsgBody::ContractAssigned { .. } => MSG_CONTRACT_ASSIGNED,
            MsgBody::TaskAssigned { .. } => MSG_TASK_ASSIGNED,
            MsgBody::ActivityDone { .. } => MSG_ACTIVITY_DONE,
            MsgBody::DesignerIdle => MSG_DESIGNER_IDLE,
            MsgBody::SupportRequest { .. } => "support_request",
            MsgBody::SupportReply { .. } => "support_reply",
        }
    }
}

/// Scheduled stimuli delivered to a single agent through its rule table.
#[derive(Debug, Clone)]
pub enum SchedStim {
    ContractArrival { contract: usize },
}

/// Everything that can sit in the event queue.
#[derive(Debug, Clone)]
pub enum DeptEvent {
    Msg(Message<MsgBody>),
    Arrival { contract: usize },
    Timeout { state: String, epoch: u64 },
    Meeting { team: u32 },
    SampleTick,
}

impl Payload for DeptEvent {
    type MsgBody = MsgBody;

    fn from_message(message: Message<MsgBody>) -> DeptEvent {
        DeptEvent::Msg(message)
    }

    fn kind(&self) -> String {
        match self {
            DeptEvent::Msg(m) => format!("msg:{}", m.body.kind()),
            DeptEvent::Arrival { contract } => format!("arrival:{contract}"),
            DeptEvent::Timeout { state, .. } => format!("timeout:{state}"),
            DeptEvent::Meeting { team } => format!("meeting:{team}"),
            DeptEvent::SampleTick => "sample".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub trace: bool,
    pub events_log: bool,
}

/// What caused a trigger to fire; consequences sometimes need the payload.
enum Cause<'a> {
    Msg(&'a Message<MsgBody>),
    Timeout,
    Arrival { contract: usize },
    Meeting,
    Internal,
}

/// Read-only context handed to rule tables: the activity the stimulus talks
/// about, if any.
pub struct RuleCtx<'c> {
    pub activity: Option<&'c ActivityRt>,
}

/// The scenario's rule tables for all three roles. Rules only choose which
/// trigger to fire; outcomes and side effects are the model's job.
pub struct DeptRules;

impl DeptRules {
    fn find_trigger(core: &AgentCore, kind: &TriggerKind, to: &str) -> Option<TriggerDef> {
        core.chart
            .chart()
            .triggers
            .iter()
            .find(|t| t.kind == *kind && t.to == to)
            .cloned()
    }
}

impl RuleTable for DeptRules {
    type MsgBody = MsgBody;
    type Sched = SchedStim;
    type Ctx<'c> = RuleCtx<'c>;

    fn rules<'c>(
        &'c self,
        agent: &AgentCore,
        stimulus: &Stimulus<MsgBody, SchedStim>,
        _now: SimTime,
        ctx: RuleCtx<'c>,
    ) -> Option<Vec<Action<MsgBody, SchedStim>>> {
        use crate::agent::Role;

        let fire = |t: Option<TriggerDef>| t.map(|t| vec![Action::Fire(t)]);
        match stimulus {
            Stimulus::StateTimeout { state, .. } => {
                fire(agent.chart.chart().timeout_of(state).cloned())
            }
            Stimulus::Message(m) => match (&agent.id.role, &m.body) {
                (Role::Designer, MsgBody::TaskAssigned { .. }) => {
                    let activity = ctx.activity?;
                    let knows = agent.attributes.knowledge(activity.category)
                        >= activity.required_knowledge;
                    let kind = TriggerKind::Message(MSG_TASK_ASSIGNED.into());
                    let to = if knows { WORKING } else { SEEKING_SUPPORT };
                    fire(Self::find_trigger(agent, &kind, to))
                }
                (Role::Designer, MsgBody::SupportRequest { .. }) => {
                    let kind = TriggerKind::Message(MSG_SUPPORT_ACCEPTED.into());
                    fire(Self::find_trigger(agent, &kind, PROVIDING_SUPPORT))
                }
                (Role::Supervisor, body) => {
                    let kind = match body {
                        MsgBody::ContractAssigned { .. } => MSG_CONTRACT_ASSIGNED,
                        MsgBody::ActivityDone { .. } => MSG_ACTIVITY_DONE,
                        MsgBody::DesignerIdle => MSG_DESIGNER_IDLE,
                        _ => return None,
                    };
                    fire(Self::find_trigger(
                        agent,
                        &TriggerKind::Message(kind.into()),
                        ALLOCATING,
                    ))
                }
                _ => None,
            },
            Stimulus::Scheduled(SchedStim::ContractArrival { .. }) => fire(Self::find_trigger(
                agent,
                &TriggerKind::Scheduled(SCHED_CONTRACT_ARRIVAL.into()),
                ALLOCATING,
            )),
        }
    }
}

/// One replication of the department scenario.
pub struct DeptModel {
    config: ScenarioConfig,
    trace_on: bool,
    agents: BTreeMap<AgentId, AgentRt>,
    teams: Vec<TeamRt>,
    contracts: Vec<ContractRt>,
    sessions: Vec<SessionRt>,
    last_step: f64,
    work_integral: f64,
    cost_rate: f64,
    total_cost: f64,
    completed_effort: f64,
    on_time_count: u64,
    late_count: u64,
    tardiness_sum: f64,
    trace: Vec<TraceRow>,
    metrics: Option<Metrics>,
}

/// Floor for the frozen rate when deriving a finite working duration; the
/// true (possibly zero) rate is still what gets recorded and integrated.
const RATE_FLOOR: f64 = 1e-9;

impl DeptModel {
    pub fn new(config: ScenarioConfig, options: RunOptions) -> DeptModel {
        DeptModel {
            config,
            trace_on: options.trace,
            agents: BTreeMap::new(),
            teams: Vec::new(),
            contracts: Vec::new(),
            sessions: Vec::new(),
            last_step: 0.0,
            work_integral: 0.0,
            cost_rate: 0.0,
            total_cost: 0.0,
            completed_effort: 0.0,
            on_time_count: 0,
            late_count: 0,
            tardiness_sum: 0.0,
            trace: Vec::new(),
            metrics: None,
        }
    }

    pub fn constants(&self) -> &Constants {
        &self.config.constants
    }

    pub fn contracts(&self) -> &[ContractRt] {
        &self.contracts
    }

    pub fn sessions(&self) -> &[SessionRt] {
        &self.sessions
    }

    pub fn agents(&self) -> &BTreeMap<AgentId, AgentRt> {
        &self.agents
    }

    /// `(arrived, queued, in_progress, completed, failed)` at this moment.
    /// Contracts whose arrival event has not run yet count in neither side.
    pub fn conservation(&self) -> (u64, u64, u64, u64, u64) {
        let mut counts = [0u64; 5];
        for c in &self.contracts {
            match c.status {
                ContractStatus::Pending => {}
                ContractStatus::Queued => counts[1] += 1,
                ContractStatus::InProgress => counts[2] += 1,
                ContractStatus::Completed => counts[3] += 1,
                ContractStatus::Failed => counts[4] += 1,
            }
        }
        counts[0] = counts[1] + counts[2] + counts[3] + counts[4];
        let arrived = self
            .contracts
            .iter()
            .filter(|c| c.status != ContractStatus::Pending)
            .count() as u64;
        debug_assert_eq!(arrived, counts[0]);
        (arrived, counts[1], counts[2], counts[3], counts[4])
    }

    fn constants_clone(&self) -> Constants {
        self.config.constants.clone()
    }

    // ----- initialisation ---------------------------------------------

    fn build_agents(&mut self, kernel: &mut Kernel<DeptEvent>) -> Result<(), EngineError> {
        let c = self.constants_clone();
        let dept = self.config.department.clone();
        let manager_chart = charts::manager_chart();
        let supervisor_chart = charts::supervisor_chart(&c);
        let designer_chart = charts::designer_chart(&c);

        let add = |model: &mut DeptModel,
                       kernel: &mut Kernel<DeptEvent>,
                       id: AgentId,
                       spec: &crate::agent::StereotypeSpec,
                       chart: ChartInstance|
         -> Result<(), EngineError> {
            let (attributes, traits) =
                crate::agent::init_from_stereotype(id, spec, kernel.streams())
                    .map_err(|e| EngineError::Model(e.to_string()))?;
            kernel.register_agent(id);
            model
                .agents
                .insert(id, AgentRt::new(AgentCore::new(id, attributes, traits, chart)));
            Ok(())
        };

        let spec_of = |name: &str| {
            dept.stereotype(name)
                .cloned()
                .ok_or_else(|| EngineError::Model(format!("unknown stereotype {name:?}")))
        };

        add(
            self,
            kernel,
            AgentId::manager(),
            &spec_of(&dept.manager)?,
            ChartInstance::new(manager_chart, SimTime::ZERO),
        )?;
        for (ti, team) in dept.teams.iter().enumerate() {
            let t = ti as u32;
            let sup = AgentId::supervisor(t);
            add(
                self,
                kernel,
                sup,
                &spec_of(&team.supervisor)?,
                ChartInstance::new(supervisor_chart.clone(), SimTime::ZERO),
            )?;
            let mut designers = Vec::new();
            for (di, des) in team.designers.iter().enumerate() {
                let id = AgentId::designer(t, di as u32);
                let resolved = des.resolve(&spec_of(&des.stereotype)?);
                add(
                    self,
                    kernel,
                    id,
                    &resolved,
                    ChartInstance::new(designer_chart.clone(), SimTime::ZERO),
                )?;
                designers.push(id);
            }
            self.teams.push(TeamRt { supervisor: sup, designers, queue: Default::default() });
        }

        self.cost_rate = self
            .agents
            .values()
            .map(|a| c.cost_a + c.cost_b * a.skill_at_init)
            .sum();
        Ok(())
    }

    fn materialize_contracts(&mut self, kernel: &mut Kernel<DeptEvent>) -> Result<(), EngineError> {
        let horizon = self.config.horizon;
        let default_tau = self.config.constants.default_teamwork;
        match self.config.contracts.clone() {
            ContractsConfig::Explicit(list) => {
                for spec in &list {
                    self.contracts.push(ContractRt {
                        arrival: spec.arrival_time,
                        deadline: spec.deadline,
                        teamwork: spec.teamwork.unwrap_or(default_tau),
                        status: ContractStatus::Pending,
                        team: None,
                        completed_at: None,
                        activities: spec
                            .activities
                            .iter()
                            .map(|a| ActivityRt::new(a.category, a.effort, a.required_knowledge))
                            .collect(),
                    });
                }
            }
            ContractsConfig::Poisson(p) => {
                // All draws for the arrival process come from the single
                // "arrivals" stream, in a fixed order per contract: the gap,
                // then per activity the template pick, its effort, and its
                // required knowledge (fixed values consume no draw).
                let gap = Distribution::Exponential { mean: 1.0 / p.rate };
                let total_weight: f64 = p.templates.iter().map(|t| t.weight).sum();
                let mut t = 0.0;
                loop {
                    t += kernel.streams().draw("arrivals", &gap)?;
                    if t > horizon {
                        break;
                    }
                    let mut activities = Vec::new();
                    for _ in 0..p.activities_per_contract {
                        let pick = kernel.streams().draw(
                            "arrivals",
                            &Distribution::Uniform { lo: 0.0, hi: total_weight },
                        )?;
                        let mut acc = 0.0;
                        let mut chosen = p.templates.len() - 1;
                        for (i, tpl) in p.templates.iter().enumerate() {
                            acc += tpl.weight;
                            if pick < acc {
                                chosen = i;
                                break;
                            }
                        }
                        let tpl = &p.templates[chosen];
                        let effort = match &tpl.effort {
                            crate::agent::Sample::Value(v) => *v,
                            crate::agent::Sample::Draw(d) => kernel.streams().draw("arrivals", d)?,
                        };
                        let theta = match &tpl.required_knowledge {
                            crate::agent::Sample::Value(v) => *v,
                            crate::agent::Sample::Draw(d) => {
                                crate::agent::clamp01(kernel.streams().draw("arrivals", d)?)
                            }
                        };
                        activities.push(ActivityRt::new(tpl.category, effort, theta));
                    }
                    self.contracts.push(ContractRt {
                        arrival: t,
                        deadline: t + p.deadline_offset,
                        teamwork: p.teamwork.unwrap_or(default_tau),
                        status: ContractStatus::Pending,
                        team: None,
                        completed_at: None,
                        activities,
                    });
                }
            }
        }
        for (i, c) in self.contracts.iter().enumerate() {
            if c.arrival <= horizon {
                kernel.schedule_at(
                    SimTime::from_hours(c.arrival),
                    EventTarget::Agent(AgentId::manager()),
                    DeptEvent::Arrival { contract: i },
                )?;
            }
        }
        Ok(())
    }

    // ----- continuous dynamics ----------------------------------------

    /// Advance drift, cost, and the productivity integral to `now`.
    fn step_dynamics(&mut self, now: f64) {
        let dt = now - self.last_step;
        if dt <= 0.0 {
            return;
        }
        let c = &self.config.constants;
        self.total_cost += self.cost_rate * dt;

        for agent in self.agents.values() {
            if agent.core.chart.current() == WORKING {
                if let Some(task) = &agent.task {
                    self.work_integral += task.rate * dt;
                }
            }
        }

        // Synchronous update: every new value is computed from the levels
        // at the start of the step, then written back.
        let mut updates: Vec<(AgentId, f64, f64)> = Vec::new();
        for team in &self.teams {
            let levels: Vec<(AgentId, f64)> = team
                .designers
                .iter()
                .map(|id| (*id, self.agents[id].core.attributes.communication()))
                .collect();
            for &(id, m) in &levels {
                let agent = &self.agents[&id];
                let n = levels.len();
                let mean_diff = if n >= 2 {
                    levels
                        .iter()
                        .filter(|(other, _)| *other != id)
                        .map(|(_, mj)| mj - m)
                        .sum::<f64>()
                        / (n - 1) as f64
                } else {
                    0.0
                };
                let dt_eff = if agent.core.chart.current() == IN_MEETING {
                    dt * c.kappa_meet
                } else {
                    dt
                };
                let new_m = comm_step(
                    m,
                    agent.core.traits.willingness_to_communicate,
                    mean_diff,
                    c.eta_m,
                    dt_eff,
                );

                let working = agent.core.chart.current() == WORKING;
                let active_k = agent
                    .task
                    .filter(|_| working)
                    .map(|task| {
                        let (ci, ai) = task.activity;
                        self.agents[&id]
                            .core
                            .attributes
                            .knowledge(self.contracts[ci].activities[ai].category)
                    })
                    .unwrap_or(0.0);
                let target = productivity_target(
                    working,
                    active_k,
                    m,
                    agent.core.traits.base_productivity,
                );
                let new_p =
                    productivity_step(agent.core.attributes.productivity(), target, c.eta_p, dt);
                updates.push((id, new_m, new_p));
            }
        }
        for (id, m, p) in updates {
            let attrs = &mut self.agents.get_mut(&id).unwrap().core.attributes;
            attrs.set_communication(m);
            attrs.set_productivity(p);
        }
        self.last_step = now;
    }

    // ----- helpers -----------------------------------------------------

    fn team_of(&self, id: AgentId) -> &TeamRt {
        &self.teams[id.team.expect("team-scoped agent") as usize]
    }

    fn team_comm_mean(&self, team: u32) -> f64 {
        let members = &self.teams[team as usize].designers;
        let sum: f64 = members
            .iter()
            .map(|id| self.agents[id].core.attributes.communication())
            .sum();
        sum / members.len() as f64
    }

    fn session_active_for(&self, requester: AgentId, activity: ActivityRef, now: f64) -> bool {
        self.sessions
            .iter()
            .any(|s| s.requester == requester && s.activity == activity && s.active_at(now))
    }

    fn activity(&self, (c, a): ActivityRef) -> &ActivityRt {
        &self.contracts[c].activities[a]
    }

    fn activity_mut(&mut self, (c, a): ActivityRef) -> &mut ActivityRt {
        &mut self.contracts[c].activities[a]
    }

    /// When the agent's current state will time out; requeue target for
    /// deferred stimuli. Non-idle states always have a planned duration.
    fn busy_end(&self, id: AgentId) -> SimTime {
        let chart = &self.agents[&id].core.chart;
        chart.entered_at().offset(chart.planned_duration().unwrap_or(0.0))
    }

    fn schedule_state_timeout(
        &self,
        kernel: &mut Kernel<DeptEvent>,
        id: AgentId,
        delay: f64,
    ) -> Result<(), EngineError> {
        let chart = &self.agents[&id].core.chart;
        kernel.schedule_at(
            kernel.now().offset(delay),
            EventTarget::Agent(id),
            DeptEvent::Timeout { state: chart.current().to_owned(), epoch: chart.epoch() },
        )?;
        Ok(())
    }

    fn rate_for(&self, id: AgentId, aref: ActivityRef, now: f64) -> f64 {
        let c = &self.config.constants;
        let agent = &self.agents[&id];
        let act = self.activity(aref);
        let k = agent.core.attributes.knowledge(act.category);
        let gate = knowledge_gate(
            k,
            act.required_knowledge,
            self.session_active_for(id, aref, now),
            c.g_supported,
            c.g_unsupported,
        );
        let tau = self.contracts[aref.0].teamwork;
        effective_rate(
            agent.core.attributes.productivity(),
            gate,
            tau,
            self.team_comm_mean(id.team.expect("designer")),
        )
    }

    // ----- firing and consequences --------------------------------------

    fn apply_actions(
        &mut self,
        kernel: &mut Kernel<DeptEvent>,
        id: AgentId,
        actions: Vec<Action<MsgBody, SchedStim>>,
        cause: &Cause<'_>,
    ) -> Result<(), EngineError> {
        for action in actions {
            match action {
                Action::Fire(trigger) => self.apply_fire(kernel, id, &trigger, cause)?,
                Action::Send { to, body } => {
                    kernel.route(Message { from: id, to, body, sent_at: kernel.now() })?;
                }
                Action::Schedule { delay, payload } => {
                    let SchedStim::ContractArrival { contract } = payload;
                    kernel.schedule_in(
                        delay,
                        EventTarget::Agent(id),
                        DeptEvent::Arrival { contract },
                    )?;
                }
                Action::SetAttribute { field, value } => {
                    self.agents.get_mut(&id).unwrap().core.set_attribute(field, value);
                }
            }
        }
        Ok(())
    }

    fn apply_fire(
        &mut self,
        kernel: &mut Kernel<DeptEvent>,
        id: AgentId,
        trigger: &TriggerDef,
        cause: &Cause<'_>,
    ) -> Result<(), EngineError> {
        let now = kernel.now();
        let guard_value = match trigger.guard.as_deref() {
            None => true,
            Some(g) => self.eval_guard(kernel, id, g, cause)?,
        };
        let outcome = self
            .agents
            .get_mut(&id)
            .unwrap()
            .core
            .chart
            .fire(trigger, now, |_| guard_value)
            .map_err(|e| EngineError::Model(e.to_string()))?;

        match outcome {
            FireOutcome::Moved { to } => self.entered(kernel, id, &trigger.from, &to, cause),
            FireOutcome::Interrupted { to, suspended } => {
                self.record_interruption(id, &suspended.0, now.hours());
                self.entered(kernel, id, &trigger.from, &to, cause)
            }
            FireOutcome::Ignored => self.fire_ignored(kernel, id, trigger, cause),
            FireOutcome::Deferred => self.fire_deferred(kernel, id, trigger, cause),
        }
    }

    /// Resolve a named guard. The candidate's decision coin is drawn only
    /// after the free/qualified checks pass, so busy or unqualified
    /// candidates never consume randomness.
    fn eval_guard(
        &mut self,
        kernel: &mut Kernel<DeptEvent>,
        id: AgentId,
        guard: &str,
        cause: &Cause<'_>,
    ) -> Result<bool, EngineError> {
        let activity = match cause {
            Cause::Msg(m) => match &m.body {
                MsgBody::TaskAssigned { activity } | MsgBody::SupportRequest { activity } => {
                    Some(*activity)
                }
                _ => None,
            },
            _ => None,
        };
        let agent = &self.agents[&id];
        match guard {
            GUARD_KNOWS_ENOUGH | GUARD_NEEDS_SUPPORT => {
                let aref = activity.ok_or_else(|| {
                    EngineError::Model(format!("guard {guard} fired without an activity"))
                })?;
                let act = self.activity(aref);
                let knows =
                    agent.core.attributes.knowledge(act.category) >= act.required_knowledge;
                Ok(if guard == GUARD_KNOWS_ENOUGH { knows } else { !knows })
            }
            GUARD_ACCEPTS_SUPPORT => {
                let aref = activity.ok_or_else(|| {
                    EngineError::Model("support guard fired without an activity".into())
                })?;
                if !agent.core.chart.is_idle() {
                    return Ok(false);
                }
                let act = self.activity(aref);
                if agent.core.attributes.knowledge(act.category) < act.required_knowledge {
                    return Ok(false);
                }
                let coin = kernel.streams().draw(
                    &format!("decisions:{id}"),
                    &Distribution::Bernoulli { p: agent.core.traits.willingness_to_support },
                )?;
                Ok(coin == 1.0)
            }
            other => Err(EngineError::Model(format!("unknown guard {other:?}"))),
        }
    }

    /// Close the books on a state that was just preempted.
    fn record_interruption(&mut self, id: AgentId, suspended_state: &str, now: f64) {
        if suspended_state != WORKING {
            return;
        }
        let task = self.agents[&id].task.expect("working agent has a task");
        let act = self.activity_mut(task.activity);
        act.segments.push(WorkSegment { rate: task.rate, start: task.seg_start, end: now });
        act.remaining = work_progress(act.remaining, task.rate, now - task.seg_start);
    }

    /// State-entry mechanics, keyed by the edge just taken.
    fn entered(
        &mut self,
        kernel: &mut Kernel<DeptEvent>,
        id: AgentId,
        from: &str,
        to: &str,
        cause: &Cause<'_>,
    ) -> Result<(), EngineError> {
        let now = kernel.now().hours();
        let c = self.constants_clone();
        match (from, to) {
            (IDLE, WORKING) => {
                let Cause::Msg(m) = cause else {
                    return Err(EngineError::Model("working entry without a task".into()));
                };
                let MsgBody::TaskAssigned { activity } = m.body else {
                    return Err(EngineError::Model("working entry without a task".into()));
                };
                let agent = self.agents.get_mut(&id).unwrap();
                agent.pending_task = false;
                agent.task = Some(TaskRt { activity, rate: 0.0, seg_start: now });
                self.enter_working(kernel, id)
            }
            (IDLE, SEEKING_SUPPORT) => {
                let Cause::Msg(m) = cause else {
                    return Err(EngineError::Model("seeking entry without a task".into()));
                };
                let MsgBody::TaskAssigned { activity } = m.body else {
                    return Err(EngineError::Model("seeking entry without a task".into()));
                };
                let act = self.activity(activity);
                let theta = act.required_knowledge;
                let category = act.category;
                // Candidate list snapshot: qualified teammates by knowledge
                // descending, index ascending. Busy ones stay in the list
                // and simply decline when their turn comes.
                let team = self.team_of(id);
                let mut candidates: Vec<(f64, AgentId)> = team
                    .designers
                    .iter()
                    .filter(|d| **d != id)
                    .map(|d| (self.agents[d].core.attributes.knowledge(category), *d))
                    .filter(|(k, _)| *k >= theta)
                    .collect();
                candidates.sort_by(|a, b| {
                    b.0.partial_cmp(&a.0).unwrap().then(a.1.index.cmp(&b.1.index))
                });
                let candidates: Vec<AgentId> = candidates.into_iter().map(|(_, d)| d).collect();

                let agent = self.agents.get_mut(&id).unwrap();
                agent.pending_task = false;
                agent.task = Some(TaskRt { activity, rate: 0.0, seg_start: now });
                agent.walk = Some(WalkRt {
                    activity,
                    candidates,
                    next: 0,
                    epoch: agent.core.chart.epoch(),
                });
                agent.core.chart.set_planned_duration(Some(c.t_w));
                self.schedule_state_timeout(kernel, id, c.t_w)?;
                self.advance_support_walk(kernel, id)
            }
            (SEEKING_SUPPORT, WORKING) => {
                self.agents.get_mut(&id).unwrap().walk = None;
                self.enter_working(kernel, id)
            }
            (WORKING, IDLE) => {
                self.complete_activity(kernel, id)?;
                self.post_idle(kernel, id)
            }
            (IDLE, PROVIDING_SUPPORT) => {
                let Cause::Msg(m) = cause else {
                    return Err(EngineError::Model("support entry without a request".into()));
                };
                let MsgBody::SupportRequest { activity } = m.body else {
                    return Err(EngineError::Model("support entry without a request".into()));
                };
                let act = self.activity(activity);
                let session = SessionRt {
                    requester: m.from,
                    supporter: id,
                    activity,
                    starts: now,
                    duration: c.d_s,
                    supporter_knowledge_at_accept: self.agents[&id]
                        .core
                        .attributes
                        .knowledge(act.category),
                    required_knowledge: act.required_knowledge,
                };
                self.sessions.push(session);
                let idx = self.sessions.len() - 1;
                let agent = self.agents.get_mut(&id).unwrap();
                agent.providing = Some(idx);
                agent.core.chart.set_planned_duration(Some(c.d_s));
                self.schedule_state_timeout(kernel, id, c.d_s)?;
                kernel.route(Message {
                    from: id,
                    to: m.from,
                    body: MsgBody::SupportReply { activity, accepted: true },
                    sent_at: kernel.now(),
                })?;
                Ok(())
            }
            (PROVIDING_SUPPORT, IDLE) => {
                let idx = self.agents.get_mut(&id).unwrap().providing.take();
                if let Some(idx) = idx {
                    let (requester, aref, k_sup) = {
                        let s = &self.sessions[idx];
                        (s.requester, s.activity, self.agents[&id].core.attributes.knowledge(
                            self.activity(s.activity).category,
                        ))
                    };
                    let category = self.activity(aref).category;
                    let req = self.agents.get_mut(&requester).unwrap();
                    let k_req = req.core.attributes.knowledge(category);
                    req.core
                        .attributes
                        .set_knowledge(category, knowledge_transfer(k_req, k_sup, c.eta_k));
                }
                self.post_idle(kernel, id)
            }
            (_, IN_MEETING) => {
                self.agents
                    .get_mut(&id)
                    .unwrap()
                    .core
                    .chart
                    .set_planned_duration(Some(c.d_meet));
                self.schedule_state_timeout(kernel, id, c.d_meet)
            }
            (IN_MEETING, IDLE) => self.post_idle(kernel, id),
            (IDLE, ALLOCATING) => {
                self.agents
                    .get_mut(&id)
                    .unwrap()
                    .core
                    .chart
                    .set_planned_duration(Some(0.0));
                self.schedule_state_timeout(kernel, id, 0.0)?;
                match cause {
                    Cause::Arrival { contract } => self.assign_contract(kernel, *contract),
                    Cause::Msg(m) => {
                        if let MsgBody::ContractAssigned { contract } = m.body {
                            let team = id.team.expect("supervisor") as usize;
                            let n = self.contracts[contract].activities.len();
                            self.teams[team]
                                .queue
                                .extend((0..n).map(|a| (contract, a)));
                        }
                        self.allocate_team_queue(kernel, id.team.expect("supervisor"))
                    }
                    _ => Ok(()),
                }
            }
            (ALLOCATING, IDLE) => self.post_idle(kernel, id),
            (f, t) => Err(EngineError::Model(format!("unexpected transition {f} -> {t}"))),
        }
    }

    /// Guard said no, or a non-interruptible state absorbed the attempt.
    fn fire_ignored(
        &mut self,
        kernel: &mut Kernel<DeptEvent>,
        id: AgentId,
        trigger: &TriggerDef,
        cause: &Cause<'_>,
    ) -> Result<(), EngineError> {
        if trigger.kind == TriggerKind::Message(MSG_SUPPORT_ACCEPTED.into()) {
            if let Cause::Msg(m) = cause {
                if let MsgBody::SupportRequest { activity } = m.body {
                    kernel.route(Message {
                        from: id,
                        to: m.from,
                        body: MsgBody::SupportReply { activity, accepted: false },
                        sent_at: kernel.now(),
                    })?;
                }
            }
        }
        Ok(())
    }

    /// The target could not take over now. Messages for a busy supervisor or
    /// manager come back when the blocking state ends; a task bounced off a
    /// busy designer returns to the front of the team queue; meeting calls
    /// are simply missed.
    fn fire_deferred(
        &mut self,
        kernel: &mut Kernel<DeptEvent>,
        id: AgentId,
        _trigger: &TriggerDef,
        cause: &Cause<'_>,
    ) -> Result<(), EngineError> {
        match cause {
            Cause::Arrival { contract } => {
                kernel.schedule_at(
                    self.busy_end(id),
                    EventTarget::Agent(id),
                    DeptEvent::Arrival { contract: *contract },
                )?;
                Ok(())
            }
            Cause::Msg(m) => match m.body {
                MsgBody::TaskAssigned { activity } => {
                    let agent = self.agents.get_mut(&id).unwrap();
                    agent.pending_task = false;
                    self.activity_mut(activity).assignee = None;
                    let team = id.team.expect("designer") as usize;
                    self.teams[team].queue.push_front(activity);
                    Ok(())
                }
                MsgBody::ContractAssigned { .. }
                | MsgBody::ActivityDone { .. }
                | MsgBody::DesignerIdle => {
                    kernel.schedule_at(
                        self.busy_end(id),
                        EventTarget::Agent(id),
                        DeptEvent::Msg((*m).clone()),
                    )?;
                    Ok(())
                }
                _ => Ok(()),
            },
            Cause::Meeting | Cause::Timeout | Cause::Internal => Ok(()),
        }
    }

    /// Freeze the rate, derive the duration from remaining effort, arm the
    /// completion timeout. Used for first entries and resumptions alike.
    fn enter_working(
        &mut self,
        kernel: &mut Kernel<DeptEvent>,
        id: AgentId,
    ) -> Result<(), EngineError> {
        let now = kernel.now().hours();
        let aref = self.agents[&id].task.expect("working needs a task").activity;
        let rate = self.rate_for(id, aref, now);
        let remaining = self.activity(aref).remaining;
        let duration = remaining / rate.max(RATE_FLOOR);
        let agent = self.agents.get_mut(&id).unwrap();
        let task = agent.task.as_mut().unwrap();
        task.rate = rate;
        task.seg_start = now;
        agent.core.chart.set_planned_duration(Some(duration));
        self.schedule_state_timeout(kernel, id, duration)
    }

    /// Completion bookkeeping for the activity the designer just finished.
    fn complete_activity(
        &mut self,
        kernel: &mut Kernel<DeptEvent>,
        id: AgentId,
    ) -> Result<(), EngineError> {
        let now = kernel.now().hours();
        let task = self.agents.get_mut(&id).unwrap().task.take().expect("completed a task");
        let (ci, ai) = task.activity;
        {
            let act = self.activity_mut(task.activity);
            act.segments.push(WorkSegment { rate: task.rate, start: task.seg_start, end: now });
            act.remaining = 0.0;
            act.done = true;
        }
        self.completed_effort += self.activity(task.activity).effort;

        if self.contracts[ci].all_done() {
            let contract = &mut self.contracts[ci];
            contract.status = ContractStatus::Completed;
            contract.completed_at = Some(now);
            if now <= contract.deadline {
                self.on_time_count += 1;
            } else {
                self.late_count += 1;
                self.tardiness_sum += now - contract.deadline;
            }
        }

        let supervisor = self.team_of(id).supervisor;
        kernel.route(Message {
            from: id,
            to: supervisor,
            body: MsgBody::ActivityDone { activity: (ci, ai) },
            sent_at: kernel.now(),
        })?;
        Ok(())
    }

    /// The agent just landed in idle: restore a suspended state if there is
    /// one, otherwise (designers) tell the supervisor a pair of hands is
    /// free.
    fn post_idle(&mut self, kernel: &mut Kernel<DeptEvent>, id: AgentId) -> Result<(), EngineError> {
        let now = kernel.now();
        let resumed = self.agents.get_mut(&id).unwrap().core.chart.resume(now);
        match resumed {
            ResumeOutcome::Moved { state, remaining } => {
                if state == WORKING {
                    // The saved wall-clock remainder is stale: attributes
                    // have drifted, so the rate and duration are recomputed
                    // from the effort still owed.
                    self.enter_working(kernel, id)
                } else {
                    self.schedule_state_timeout(kernel, id, remaining)
                }
            }
            ResumeOutcome::NothingToResume => {
                use crate::agent::Role;
                if id.role == Role::Designer {
                    let supervisor = self.team_of(id).supervisor;
                    kernel.route(Message {
                        from: id,
                        to: supervisor,
                        body: MsgBody::DesignerIdle,
                        sent_at: now,
                    })?;
                }
                Ok(())
            }
        }
    }

    /// Send the next support request in the walk, or give up and start
    /// working unsupported.
    fn advance_support_walk(
        &mut self,
        kernel: &mut Kernel<DeptEvent>,
        id: AgentId,
    ) -> Result<(), EngineError> {
        let (target, activity) = {
            let agent = self.agents.get_mut(&id).unwrap();
            let walk = agent.walk.as_mut().expect("walk in progress");
            if walk.next < walk.candidates.len() {
                let target = walk.candidates[walk.next];
                walk.next += 1;
                (Some(target), walk.activity)
            } else {
                (None, walk.activity)
            }
        };
        match target {
            Some(to) => {
                kernel.route(Message {
                    from: id,
                    to,
                    body: MsgBody::SupportRequest { activity },
                    sent_at: kernel.now(),
                })?;
                Ok(())
            }
            None => self.resolve_unsupported(kernel, id),
        }
    }

    /// Nobody can help: leave SeekingSupport for Working at the unsupported
    /// gate.
    fn resolve_unsupported(
        &mut self,
        kernel: &mut Kernel<DeptEvent>,
        id: AgentId,
    ) -> Result<(), EngineError> {
        let trigger = self.agents[&id]
            .core
            .chart
            .chart()
            .trigger_from(
                SEEKING_SUPPORT,
                &TriggerKind::Message(MSG_SUPPORT_RESOLVED.into()),
            )
            .expect("designer chart resolves support")
            .clone();
        self.apply_fire(kernel, id, &trigger, &Cause::Internal)
    }

    /// Manager decision: the arriving contract goes to the team owing the
    /// least remaining effort; ties go to the lower team index.
    fn assign_contract(
        &mut self,
        kernel: &mut Kernel<DeptEvent>,
        contract: usize,
    ) -> Result<(), EngineError> {
        let mut best = (f64::INFINITY, 0usize);
        for t in 0..self.teams.len() {
            let load: f64 = self
                .contracts
                .iter()
                .filter(|c| c.team == Some(t as u32) && c.status == ContractStatus::InProgress)
                .flat_map(|c| c.activities.iter())
                .filter(|a| !a.done)
                .map(|a| a.remaining)
                .sum();
            if load < best.0 {
                best = (load, t);
            }
        }
        let team = best.1 as u32;
        let c = &mut self.contracts[contract];
        c.team = Some(team);
        c.status = ContractStatus::InProgress;
        kernel.route(Message {
            from: AgentId::manager(),
            to: self.teams[team as usize].supervisor,
            body: MsgBody::ContractAssigned { contract },
            sent_at: kernel.now(),
        })?;
        Ok(())
    }

    /// Hand queued activities to idle designers, best effective rate first,
    /// until the queue or the idle pool runs dry.
    fn allocate_team_queue(
        &mut self,
        kernel: &mut Kernel<DeptEvent>,
        team: u32,
    ) -> Result<(), EngineError> {
        let now = kernel.now().hours();
        loop {
            let Some(&aref) = self.teams[team as usize].queue.front() else {
                return Ok(());
            };
            let mut best: Option<(f64, AgentId)> = None;
            for &d in &self.teams[team as usize].designers {
                let agent = &self.agents[&d];
                if !agent.core.chart.is_idle() || agent.pending_task {
                    continue;
                }
                let rate = self.rate_for(d, aref, now);
                if best.map_or(true, |(r, _)| rate > r) {
                    best = Some((rate, d));
                }
            }
            let Some((_, d)) = best else {
                return Ok(());
            };
            self.teams[team as usize].queue.pop_front();
            self.activity_mut(aref).assignee = Some(d);
            self.agents.get_mut(&d).unwrap().pending_task = true;
            kernel.route(Message {
                from: self.teams[team as usize].supervisor,
                to: d,
                body: MsgBody::TaskAssigned { activity: aref },
                sent_at: kernel.now(),
            })?;
        }
    }

    // ----- event dispatch ------------------------------------------------

    fn on_arrival(
        &mut self,
        kernel: &mut Kernel<DeptEvent>,
        contract: usize,
    ) -> Result<(), EngineError> {
        if self.contracts[contract].status == ContractStatus::Pending {
            self.contracts[contract].status = ContractStatus::Queued;
        }
        let id = AgentId::manager();
        let stim = Stimulus::Scheduled(SchedStim::ContractArrival { contract });
        let actions = react(
            &DeptRules,
            &self.agents[&id].core,
            &stim,
            kernel.now(),
            RuleCtx { activity: None },
        );
        self.apply_actions(kernel, id, actions, &Cause::Arrival { contract })
    }

    fn on_message(
        &mut self,
        kernel: &mut Kernel<DeptEvent>,
        m: Message<MsgBody>,
    ) -> Result<(), EngineError> {
        // Support replies are protocol bookkeeping on the requester, not a
        // rule-table decision: stale ones are dropped, declines advance the
        // walk, and an acceptance resolves the wait.
        if let MsgBody::SupportReply { activity, accepted } = m.body {
            let id = m.to;
            let fresh = {
                let agent = &self.agents[&id];
                agent.core.chart.current() == SEEKING_SUPPORT
                    && agent.walk.as_ref().map_or(false, |w| {
                        w.activity == activity && w.epoch == agent.core.chart.epoch()
                    })
            };
            if !fresh {
                log::debug!("stale support reply for {id} dropped");
                return Ok(());
            }
            return if accepted {
                let trigger = self.agents[&id]
                    .core
                    .chart
                    .chart()
                    .trigger_from(
                        SEEKING_SUPPORT,
                        &TriggerKind::Message(MSG_SUPPORT_RESOLVED.into()),
                    )
                    .expect("designer chart resolves support")
                    .clone();
                self.apply_fire(kernel, id, &trigger, &Cause::Msg(&m))
            } else {
                self.advance_support_walk(kernel, id)
            };
        }

        let id = m.to;
        let activity = match &m.body {
            MsgBody::TaskAssigned { activity } | MsgBody::SupportRequest { activity } => {
                Some(self.activity(*activity))
            }
            _ => None,
        };
        let stim = Stimulus::Message(m.clone());
        let actions = react(
            &DeptRules,
            &self.agents[&id].core,
            &stim,
            kernel.now(),
            RuleCtx { activity },
        );
        self.apply_actions(kernel, id, actions, &Cause::Msg(&m))
    }

    fn on_timeout(
        &mut self,
        kernel: &mut Kernel<DeptEvent>,
        id: AgentId,
        state: String,
        epoch: u64,
    ) -> Result<(), EngineError> {
        {
            let chart = &self.agents[&id].core.chart;
            if chart.current() != state || chart.epoch() != epoch {
                return Ok(()); // stale timeout from an interrupted occupancy
            }
        }
        let stim = Stimulus::StateTimeout { state, epoch };
        let actions = react(
            &DeptRules,
            &self.agents[&id].core,
            &stim,
            kernel.now(),
            RuleCtx { activity: None },
        );
        self.apply_actions(kernel, id, actions, &Cause::Timeout)
    }

    fn on_meeting(&mut self, kernel: &mut Kernel<DeptEvent>, team: u32) -> Result<(), EngineError> {
        let members: Vec<AgentId> = {
            let t = &self.teams[team as usize];
            std::iter::once(t.supervisor).chain(t.designers.iter().copied()).collect()
        };
        for id in members {
            let trigger = self.agents[&id]
                .core
                .chart
                .chart()
                .trigger_from(IDLE, &TriggerKind::Scheduled(SCHED_MEETING.into()))
                .expect("team charts meet")
                .clone();
            self.apply_fire(kernel, id, &trigger, &Cause::Meeting)?;
        }
        kernel.schedule_in(
            self.config.constants.w_meeting,
            EventTarget::System,
            DeptEvent::Meeting { team },
        )?;
        Ok(())
    }

    fn on_sample(&mut self, kernel: &mut Kernel<DeptEvent>) -> Result<(), EngineError> {
        if self.trace_on {
            self.record_trace(kernel.now().hours());
        }
        kernel.schedule_in(
            self.config.constants.sample_every,
            EventTarget::System,
            DeptEvent::SampleTick,
        )?;
        Ok(())
    }

    fn record_trace(&mut self, time: f64) {
        for (id, agent) in &self.agents {
            let a = &agent.core.attributes;
            let rows = [
                ("knowledge_planning", a.knowledge(Category::Planning)),
                ("knowledge_design", a.knowledge(Category::Design)),
                ("knowledge_testing", a.knowledge(Category::Testing)),
                ("communication", a.communication()),
                ("productivity", a.productivity()),
            ];
            for (attribute, value) in rows {
                self.trace.push(TraceRow { time, agent: *id, attribute, value });
            }
        }
    }

    fn build_metrics(&mut self, horizon: f64) {
        let (arrived, _, _, completed, _) = self.conservation();
        let n_designers: usize = self.teams.iter().map(|t| t.designers.len()).sum();
        let on_time_fraction = if arrived > 0 {
            self.on_time_count as f64 / arrived as f64
        } else {
            0.0
        };
        let mean_tardiness_h = if self.late_count > 0 {
            self.tardiness_sum / self.late_count as f64
        } else {
            0.0
        };
        let mean_team_productivity = if n_designers > 0 && horizon > 0.0 {
            self.work_integral / (horizon * n_designers as f64)
        } else {
            0.0
        };
        let productivity_per_cost = if self.total_cost > 0.0 {
            self.completed_effort / self.total_cost
        } else {
            0.0
        };
        self.metrics = Some(Metrics {
            contracts_arrived: arrived,
            contracts_completed: completed,
            on_time_fraction,
            mean_tardiness_h,
            mean_team_productivity,
            total_cost: self.total_cost,
            productivity_per_cost,
        });
    }

    fn into_output(self, event_log: Option<Vec<String>>) -> RunOutput {
        let agents = self
            .agents
            .values()
            .map(|a| AgentSnapshot {
                id: a.core.id,
                knowledge: [
                    a.core.attributes.knowledge(Category::Planning),
                    a.core.attributes.knowledge(Category::Design),
                    a.core.attributes.knowledge(Category::Testing),
                ],
                communication: a.core.attributes.communication(),
                productivity: a.core.attributes.productivity(),
            })
            .collect();
        let activities = self
            .contracts
            .iter()
            .enumerate()
            .flat_map(|(ci, c)| {
                c.activities.iter().enumerate().map(move |(ai, a)| ActivityAudit {
                    activity: (ci, ai),
                    category: a.category,
                    effort: a.effort,
                    remaining: a.remaining,
                    done: a.done,
                    segments: a.segments.clone(),
                })
            })
            .collect();
        RunOutput {
            metrics: self.metrics.expect("finalized"),
            trace: self.trace,
            event_log,
            agents,
            activities,
            sessions: self.sessions,
        }
    }
}

impl engine::Model for DeptModel {
    type P = DeptEvent;

    fn init(&mut self, kernel: &mut Kernel<DeptEvent>) -> Result<(), EngineError> {
        self.build_agents(kernel)?;
        self.materialize_contracts(kernel)?;
        for t in 0..self.teams.len() as u32 {
            kernel.schedule_at(
                SimTime::from_hours(self.config.constants.w_meeting),
                EventTarget::System,
                DeptEvent::Meeting { team: t },
            )?;
        }
        kernel.schedule_at(SimTime::ZERO, EventTarget::System, DeptEvent::SampleTick)?;
        Ok(())
    }

    fn handle(&mut self, kernel: &mut Kernel<DeptEvent>, event: Event<DeptEvent>)
        -> Result<(), EngineError> {
        self.step_dynamics(event.time.hours());
        match event.payload {
            DeptEvent::Arrival { contract } => self.on_arrival(kernel, contract),
            DeptEvent::Msg(m) => self.on_message(kernel, m),
            DeptEvent::Timeout { state, epoch } => {
                let EventTarget::Agent(id) = event.target else {
                    return Err(EngineError::Model("timeout without an agent".into()));
                };
                self.on_timeout(kernel, id, state, epoch)
            }
            DeptEvent::Meeting { team } => self.on_meeting(kernel, team),
            DeptEvent::SampleTick => self.on_sample(kernel),
        }
    }

    fn finalize(&mut self, _kernel: &mut Kernel<DeptEvent>, horizon: SimTime)
        -> Result<(), EngineError> {
        let h = horizon.hours();
        self.step_dynamics(h);

        // Close the books on tasks still running when the run is cut off,
        // so the segment ledger accounts for every worked hour.
        let open: Vec<TaskRt> = self
            .agents
            .values()
            .filter(|a| a.core.chart.current() == WORKING)
            .filter_map(|a| a.task)
            .filter(|t| h > t.seg_start)
            .collect();
        for task in open {
            let act = self.activity_mut(task.activity);
            act.segments.push(WorkSegment { rate: task.rate, start: task.seg_start, end: h });
            act.remaining = work_progress(act.remaining, task.rate, h - task.seg_start);
        }

        for c in &mut self.contracts {
            if matches!(c.status, ContractStatus::Queued | ContractStatus::InProgress) {
                c.status = ContractStatus::Failed;
            }
        }
        if self.trace_on && self.trace.last().map(|r| r.time) != Some(h) {
            self.record_trace(h);
        }
        self.build_metrics(h);
        Ok(())
    }
}

/// Run one replication of `config` under `seed`.
pub fn run_scenario(
    config: &ScenarioConfig,
    seed: u64,
    options: RunOptions,
) -> Result<RunOutput, EngineError> {
    run_scenario_observed(config, seed, options, |_, _| {})
}

/// [`run_scenario`] with a per-event observer for invariant checks.
pub fn run_scenario_observed(
    config: &ScenarioConfig,
    seed: u64,
    options: RunOptions,
    observe: impl FnMut(&DeptModel, &Kernel<DeptEvent>),
) -> Result<RunOutput, EngineError> {
    let mut model = DeptModel::new(config.clone(), options);
    let mut kernel = Kernel::new(seed);
    if options.events_log {
        kernel.enable_event_log();
    }
    let horizon = SimTime::from_hours(config.horizon);
    engine::run_observed(&mut model, &mut kernel, horizon, observe)?;
    Ok(model.into_output(kernel.take_event_log()))
}
