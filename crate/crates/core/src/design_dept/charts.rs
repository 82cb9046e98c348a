//! The three role charts. State ids and trigger kinds are shared constants
//! so rules, mechanics, and tests all speak the same names.

use std::sync::Arc;

use crate::config::Constants;
use crate::statechart::{DurationSpec, StateChart, StateDef, TriggerDef, TriggerKind};

pub const IDLE: &str = "idle";
pub const WORKING: &str = "working";
pub const SEEKING_SUPPORT: &str = "seeking_support";
pub const PROVIDING_SUPPORT: &str = "providing_support";
pub const IN_MEETING: &str = "in_meeting";
pub const ALLOCATING: &str = "allocating";

pub const MSG_CONTRACT_ASSIGNED: &str = "contract_assigned";
pub const MSG_TASK_ASSIGNED: &str = "task_assigned";
pub const MSG_ACTIVITY_DONE: &str = "activity_done";
pub const MSG_DESIGNER_IDLE: &str = "designer_idle";
pub const MSG_SUPPORT_ACCEPTED: &str = "support_accepted";
pub const MSG_SUPPORT_RESOLVED: &str = "support_resolved";

pub const SCHED_MEETING: &str = "meeting";
pub const SCHED_CONTRACT_ARRIVAL: &str = "contract_arrival";

pub const GUARD_KNOWS_ENOUGH: &str = "knows_enough";
pub const GUARD_NEEDS_SUPPORT: &str = "needs_support";
pub const GUARD_ACCEPTS_SUPPORT: &str = "accepts_support";

fn state(id: &str, priority: u32, interruptible: bool, duration: Option<DurationSpec>) -> StateDef {
    StateDef { id: id.into(), priority, interruptible, duration }
}

fn message(kind: &str, from: &str, to: &str, guard: Option<&str>) -> TriggerDef {
    TriggerDef {
        kind: TriggerKind::Message(kind.into()),
        from: from.into(),
        to: to.into(),
        guard: guard.map(str::to_owned),
    }
}

fn timeout(from: &str, to: &str) -> TriggerDef {
    TriggerDef { kind: TriggerKind::Timeout, from: from.into(), to: to.into(), guard: None }
}

fn scheduled(kind: &str, from: &str, to: &str) -> TriggerDef {
    TriggerDef {
        kind: TriggerKind::Scheduled(kind.into()),
        from: from.into(),
        to: to.into(),
        guard: None,
    }
}

/// Designer: idle hub, working and support-seeking at equal priority,
/// support provision above them (and uninterruptible, so a promise to help
/// is kept), meetings on top preempting everything interruptible.
pub fn designer_chart(c: &Constants) -> Arc<StateChart> {
    Arc::new(StateChart {
        idle: IDLE.into(),
        states: vec![
            state(IDLE, 0, true, None),
            state(WORKING, 1, true, Some(DurationSpec::ComputedAtEntry)),
            state(SEEKING_SUPPORT, 1, true, Some(DurationSpec::Constant(c.t_w))),
            state(PROVIDING_SUPPORT, 2, false, Some(DurationSpec::Constant(c.d_s))),
            state(IN_MEETING, 3, false, Some(DurationSpec::Constant(c.d_meet))),
        ],
        triggers: vec![
            message(MSG_TASK_ASSIGNED, IDLE, WORKING, Some(GUARD_KNOWS_ENOUGH)),
            message(MSG_TASK_ASSIGNED, IDLE, SEEKING_SUPPORT, Some(GUARD_NEEDS_SUPPORT)),
            message(MSG_SUPPORT_RESOLVED, SEEKING_SUPPORT, WORKING, None),
            timeout(SEEKING_SUPPORT, WORKING),
            timeout(WORKING, IDLE),
            message(MSG_SUPPORT_ACCEPTED, IDLE, PROVIDING_SUPPORT, Some(GUARD_ACCEPTS_SUPPORT)),
            timeout(PROVIDING_SUPPORT, IDLE),
            scheduled(SCHED_MEETING, IDLE, IN_MEETING),
            timeout(IN_MEETING, IDLE),
        ],
    })
}

/// Supervisor: idle, a zero-length allocating state that serialises
/// allocation decisions, and meetings.
pub fn supervisor_chart(c: &Constants) -> Arc<StateChart> {
    Arc::new(StateChart {
        idle: IDLE.into(),
        states: vec![
            state(IDLE, 0, true, None),
            state(ALLOCATING, 1, true, Some(DurationSpec::Constant(0.0))),
            state(IN_MEETING, 3, false, Some(DurationSpec::Constant(c.d_meet))),
        ],
        triggers: vec![
            message(MSG_CONTRACT_ASSIGNED, IDLE, ALLOCATING, None),
            message(MSG_ACTIVITY_DONE, IDLE, ALLOCATING, None),
            message(MSG_DESIGNER_IDLE, IDLE, ALLOCATING, None),
            timeout(ALLOCATING, IDLE),
            scheduled(SCHED_MEETING, IDLE, IN_MEETING),
            timeout(IN_MEETING, IDLE),
        ],
    })
}

/// Manager: idle plus the same zero-length allocating state, entered on each
/// contract arrival. The manager attends no team meetings.
pub fn manager_chart() -> Arc<StateChart> {
    Arc::new(StateChart {
        idle: IDLE.into(),
        states: vec![
            state(IDLE, 0, true, None),
            state(ALLOCATING, 1, true, Some(DurationSpec::Constant(0.0))),
        ],
        triggers: vec![
            scheduled(SCHED_CONTRACT_ARRIVAL, IDLE, ALLOCATING),
            timeout(ALLOCATING, IDLE),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_three_charts_validate_cleanly() {
        let c = Constants::default();
        assert!(designer_chart(&c).validate().is_empty());
        assert!(supervisor_chart(&c).validate().is_empty());
        assert!(manager_chart().validate().is_empty());
    }

    #[test]
    fn meetings_outrank_support_which_outranks_work() {
        let c = Constants::default();
        let chart = designer_chart(&c);
        let p = |id: &str| chart.state(id).unwrap().priority;
        assert!(p(IN_MEETING) > p(PROVIDING_SUPPORT));
        assert!(p(PROVIDING_SUPPORT) > p(WORKING));
        assert_eq!(p(WORKING), p(SEEKING_SUPPORT));
        assert_eq!(p(IDLE), 0);
    }

    #[test]
    fn support_provision_cannot_be_interrupted() {
        let c = Constants::default();
        let chart = designer_chart(&c);
        assert!(!chart.state(PROVIDING_SUPPORT).unwrap().interruptible);
        assert!(!chart.state(IN_MEETING).unwrap().interruptible);
        assert!(chart.state(WORKING).unwrap().interruptible);
    }
}
