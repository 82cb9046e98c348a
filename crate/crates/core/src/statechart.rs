//! State charts that drive agent behaviour: prioritised states with optional
//! durations, triggers that move agents between states, and instances that
//! track where an agent currently is.
//!
//! Semantics in brief: a trigger declared out of the current state is that
//! state's own exit and always moves (guard permitting). Any other trigger is
//! a preemption attempt: it interrupts an interruptible, unsuspended state
//! when the target has strictly higher priority, is absorbed (ignored) by a
//! non-interruptible state, and is deferred otherwise. Interruption saves at
//! most one state for later resumption; a second interruption defers.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::engine::{Distribution, SimTime};

/// How long a state lasts once entered.
#[derive(Debug, Clone, PartialEq)]
pub enum DurationSpec {
    Constant(f64),
    Dist(Distribution),
    /// The hosting scenario computes the duration when the state is entered
    /// (e.g. remaining effort divided by the current work rate).
    ComputedAtEntry,
}

#[derive(Debug, Clone)]
pub struct StateDef {
    pub id: String,
    pub priority: u32,
    pub interruptible: bool,
    /// `None` for states an agent can stay in indefinitely, such as idle.
    pub duration: Option<DurationSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TriggerKind {
    /// Fired by the scenario at a scheduled instant (e.g. a meeting), and may
    /// therefore land on an agent in any state.
    Scheduled(String),
    /// Fired when a message of the named kind is handled.
    Message(String),
    /// Fired when the current state's duration elapses.
    Timeout,
}

#[derive(Debug, Clone)]
pub struct TriggerDef {
    pub kind: TriggerKind,
    pub from: String,
    pub to: String,
    /// Named predicate resolved by the hosting scenario when the trigger
    /// fires; a failing guard makes the firing a no-op.
    pub guard: Option<String>,
}

#[derive(Debug, Clone)]
pub struct StateChart {
    pub idle: String,
    pub states: Vec<StateDef>,
    pub triggers: Vec<TriggerDef>,
}

/// Structural problems found by [`StateChart::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Defect {
    MissingIdle,
    DuplicateId(String),
    DanglingReference(String),
    UnreachableState(String),
    NoReturnToIdle(String),
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Defect::MissingIdle => write!(f, "chart has no idle state"),
            Defect::DuplicateId(id) => write!(f, "state id {id:?} is declared more than once"),
            Defect::DanglingReference(what) => write!(f, "dangling reference: {what}"),
            Defect::UnreachableState(id) => write!(f, "state {id:?} cannot be reached from idle"),
            Defect::NoReturnToIdle(id) => write!(f, "state {id:?} has no path back to idle"),
        }
    }
}

impl StateChart {
    pub fn state(&self, id: &str) -> Option<&StateDef> {
        self.states.iter().find(|s| s.id == id)
    }

    /// First trigger of `kind` declared out of `from`, if any.
    pub fn trigger_from(&self, from: &str, kind: &TriggerKind) -> Option<&TriggerDef> {
        self.triggers.iter().find(|t| t.from == from && t.kind == *kind)
    }

    pub fn timeout_of(&self, from: &str) -> Option<&TriggerDef> {
        self.trigger_from(from, &TriggerKind::Timeout)
    }

    /// Full structural check. An empty report means the chart is usable.
    pub fn validate(&self) -> Vec<Defect> {
        let mut defects = Vec::new();

        for (i, s) in self.states.iter().enumerate() {
            if self.states[..i].iter().any(|other| other.id == s.id) {
                defects.push(Defect::DuplicateId(s.id.clone()));
            }
        }

        let has_idle = self.states.iter().any(|s| s.id == self.idle);
        if !has_idle {
            defects.push(Defect::MissingIdle);
        }

        for t in &self.triggers {
            for end in [&t.from, &t.to] {
                if self.state(end).is_none() {
                    defects.push(Defect::DanglingReference(format!(
                        "trigger {:?} -> {:?} names undeclared state {:?}",
                        t.from, t.to, end
                    )));
                }
            }
            if t.kind == TriggerKind::Timeout {
                if let Some(from) = self.state(&t.from) {
                    if from.duration.is_none() {
                        defects.push(Defect::DanglingReference(format!(
                            "timeout trigger out of {:?} refers to a duration that state does not have",
                            t.from
                        )));
                    }
                }
            }
        }

        if has_idle {
            let forward = self.closure(&self.idle, true);
            for s in &self.states {
                if !forward.contains(&s.id.as_str()) {
                    defects.push(Defect::UnreachableState(s.id.clone()));
                }
            }
            let backward = self.closure(&self.idle, false);
            for s in &self.states {
                if s.id != self.idle && !backward.contains(&s.id.as_str()) {
                    defects.push(Defect::NoReturnToIdle(s.id.clone()));
                }
            }
        }

        defects
    }

    /// States reachable from `start` following trigger edges, forward
    /// (from -> to) or reversed. Scheduled triggers can preempt from any
    /// state, so in the forward direction their targets join the frontier as
    /// soon as any other state is reachable.
    fn closure<'a>(&'a self, start: &'a str, forward: bool) -> Vec<&'a str> {
        let mut seen: Vec<&str> = vec![start];
        let mut changed = true;
        while changed {
            changed = false;
            for t in &self.triggers {
                let (tail, head) = if forward { (&t.from, &t.to) } else { (&t.to, &t.from) };
                if self.state(head).is_none() || self.state(tail).is_none() {
                    continue;
                }
                let preempts = forward && matches!(t.kind, TriggerKind::Scheduled(_));
                let tail_ok = seen.contains(&tail.as_str())
                    || (preempts && seen.iter().any(|s| *s != head.as_str()));
                if tail_ok && !seen.contains(&head.as_str()) {
                    seen.push(head);
                    changed = true;
                }
            }
        }
        seen
    }
}

#[derive(Debug, Error)]
pub enum ChartError {
    #[error("trigger {from:?} -> {to:?} references a state absent from the chart")]
    InvalidTransition { from: String, to: String },
}

/// Result of firing a trigger against an instance.
#[derive(Debug, Clone, PartialEq)]
pub enum FireOutcome {
    /// The instance left `from` through one of its own declared exits.
    Moved { to: String },
    /// A higher-priority target preempted the current state, which was saved
    /// with its remaining duration for later resumption.
    Interrupted { to: String, suspended: (String, f64) },
    /// Guard failed, or a non-interruptible state absorbed the attempt.
    Ignored,
    /// The target could not take over now; the caller decides when to retry.
    Deferred,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResumeOutcome {
    Moved { state: String, remaining: f64 },
    NothingToResume,
}

/// One agent's position in a chart.
#[derive(Debug, Clone)]
pub struct ChartInstance {
    chart: Arc<StateChart>,
    current: String,
    entered_at: SimTime,
    planned_duration: Option<f64>,
    epoch: u64,
    suspended: Option<(String, f64)>,
}

impl ChartInstance {
    /// New instance resting in the chart's idle state.
    pub fn new(chart: Arc<StateChart>, now: SimTime) -> ChartInstance {
        let current = chart.idle.clone();
        ChartInstance {
            chart,
            current,
            entered_at: now,
            planned_duration: None,
            epoch: 0,
            suspended: None,
        }
    }

    pub fn chart(&self) -> &Arc<StateChart> {
        &self.chart
    }

    pub fn current(&self) -> &str {
        &self.current
    }

    pub fn is_idle(&self) -> bool {
        self.current == self.chart.idle
    }

    pub fn entered_at(&self) -> SimTime {
        self.entered_at
    }

    /// Monotone counter bumped on every state entry; schedulers stamp
    /// timeouts with it so stale timeouts can be recognised and dropped.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn planned_duration(&self) -> Option<f64> {
        self.planned_duration
    }

    /// Record how long the just-entered state is going to last.
    pub fn set_planned_duration(&mut self, hours: Option<f64>) {
        self.planned_duration = hours;
    }

    pub fn suspended(&self) -> Option<&(String, f64)> {
        self.suspended.as_ref()
    }

    /// Fire `trigger` at `now`. `guard` resolves named guard predicates.
    pub fn fire(
        &mut self,
        trigger: &TriggerDef,
        now: SimTime,
        guard: impl FnOnce(&str) -> bool,
    ) -> Result<FireOutcome, ChartError> {
        if self.chart.state(&trigger.from).is_none() || self.chart.state(&trigger.to).is_none() {
            return Err(ChartError::InvalidTransition {
                from: trigger.from.clone(),
                to: trigger.to.clone(),
            });
        }
        if !trigger.guard.as_deref().map_or(true, guard) {
            return Ok(FireOutcome::Ignored);
        }
        if self.current == trigger.from {
            let to = trigger.to.clone();
            self.enter(to.clone(), now);
            return Ok(FireOutcome::Moved { to });
        }

        let cur = self.chart.state(&self.current).expect("current state declared");
        let tgt = self.chart.state(&trigger.to).expect("target checked above");
        if tgt.priority <= cur.priority {
            return Ok(FireOutcome::Deferred);
        }
        if !cur.interruptible {
            return Ok(FireOutcome::Ignored);
        }
        if self.suspended.is_some() {
            // One suspension slot: a second interruption has to wait.
            return Ok(FireOutcome::Deferred);
        }
        let remaining = self
            .planned_duration
            .map(|d| (self.entered_at.hours() + d - now.hours()).max(0.0))
            .unwrap_or(0.0);
        let saved = (self.current.clone(), remaining);
        self.suspended = Some(saved.clone());
        let to = trigger.to.clone();
        self.enter(to.clone(), now);
        Ok(FireOutcome::Interrupted { to, suspended: saved })
    }

    /// Restore the suspended state, if any. Intended to be called when the
    /// current state has just completed back to idle.
    pub fn resume(&mut self, now: SimTime) -> ResumeOutcome {
        match self.suspended.take() {
            Some((state, remaining)) => {
                self.enter(state.clone(), now);
                self.planned_duration = Some(remaining);
                ResumeOutcome::Moved { state, remaining }
            }
            None => ResumeOutcome::NothingToResume,
        }
    }

    fn enter(&mut self, state: String, now: SimTime) {
        self.current = state;
        self.entered_at = now;
        self.planned_duration = None;
        self.epoch += 1;
    }
}
