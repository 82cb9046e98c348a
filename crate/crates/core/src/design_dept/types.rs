//! Runtime state of one replication: contracts, activities, teams, support
//! sessions, and the metrics accumulated along the way.

use std::collections::{BTreeMap, VecDeque};

use crate::agent::{AgentCore, AgentId, Category};

/// `(contract index, activity index)` into the model's contract table.
pub type ActivityRef = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContractStatus {
    /// Materialised but its arrival event has not been processed yet.
    Pending,
    Queued,
    InProgress,
    Completed,
    Failed,
}

#[derive(Debug, Clone)]
pub struct ContractRt {
    pub arrival: f64,
    pub deadline: f64,
    pub teamwork: f64,
    pub status: ContractStatus,
    pub team: Option<u32>,
    pub completed_at: Option<f64>,
    pub activities: Vec<ActivityRt>,
}

impl ContractRt {
    pub fn all_done(&self) -> bool {
        self.activities.iter().all(|a| a.done)
    }
}

/// One recorded stretch of work at a frozen rate.
#[derive(Debug, Clone, Copy)]
pub struct WorkSegment {
    pub rate: f64,
    pub start: f64,
    pub end: f64,
}

impl WorkSegment {
    pub fn progress(&self) -> f64 {
        self.rate * (self.end - self.start)
    }
}

#[derive(Debug, Clone)]
pub struct ActivityRt {
    pub category: Category,
    pub effort: f64,
    pub required_knowledge: f64,
    pub remaining: f64,
    pub assignee: Option<AgentId>,
    pub done: bool,
    pub segments: Vec<WorkSegment>,
}

impl ActivityRt {
    pub fn new(category: Category, effort: f64, required_knowledge: f64) -> ActivityRt {
        ActivityRt {
            category,
            effort,
            required_knowledge,
            remaining: effort,
            assignee: None,
            done: false,
            segments: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TeamRt {
    pub supervisor: AgentId,
    pub designers: Vec<AgentId>,
    /// Activities waiting for an idle designer, oldest first.
    pub queue: VecDeque<ActivityRef>,
}

#[derive(Debug, Clone)]
pub struct SessionRt {
    pub requester: AgentId,
    pub supporter: AgentId,
    pub activity: ActivityRef,
    pub starts: f64,
    pub duration: f64,
    /// Supporter's category knowledge when it accepted; the session is only
    /// legal if this met the activity's requirement.
    pub supporter_knowledge_at_accept: f64,
    pub required_knowledge: f64,
}

impl SessionRt {
    pub fn active_at(&self, now: f64) -> bool {
        self.starts <= now && now < self.starts + self.duration
    }
}

/// The designer's current assignment: which activity, the rate frozen at the
/// latest Working (re)entry, and when that working stretch began.
#[derive(Debug, Clone, Copy)]
pub struct TaskRt {
    pub activity: ActivityRef,
    pub rate: f64,
    pub seg_start: f64,
}

/// A support-seeking walk down the candidate list. `epoch` pins the walk to
/// one SeekingSupport occupancy; replies from an older occupancy are stale.
#[derive(Debug, Clone)]
pub struct WalkRt {
    pub activity: ActivityRef,
    pub candidates: Vec<AgentId>,
    pub next: usize,
    pub epoch: u64,
}

/// Everything the model tracks per agent beyond the shared core.
#[derive(Debug, Clone)]
pub struct AgentRt {
    pub core: AgentCore,
    pub task: Option<TaskRt>,
    pub walk: Option<WalkRt>,
    /// Index into the sessions table while providing support.
    pub providing: Option<usize>,
    /// A TaskAssigned message is in flight; allocation skips this designer.
    pub pending_task: bool,
    /// Mean attribute level at replication start, frozen for the cost model.
    pub skill_at_init: f64,
}

impl AgentRt {
    pub fn new(core: AgentCore) -> AgentRt {
        let skill_at_init = core.attributes.mean_level();
        AgentRt {
            core,
            task: None,
            walk: None,
            providing: None,
            pending_task: false,
            skill_at_init,
        }
    }
}

/// End-of-run scalars, one row of `run_summary.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub contracts_arrived: u64,
    pub contracts_completed: u64,
    pub on_time_fraction: f64,
    pub mean_tardiness_h: f64,
    pub mean_team_productivity: f64,
    pub total_cost: f64,
    pub productivity_per_cost: f64,
}

impl Metrics {
    pub const NAMES: [&'static str; 7] = [
        "contracts_arrived",
        "contracts_completed",
        "on_time_fraction",
        "mean_tardiness_h",
        "mean_team_productivity",
        "total_cost",
        "productivity_per_cost",
    ];

    pub fn values(&self) -> [f64; 7] {
        [
            self.contracts_arrived as f64,
            self.contracts_completed as f64,
            self.on_time_fraction,
            self.mean_tardiness_h,
            self.mean_team_productivity,
            self.total_cost,
            self.productivity_per_cost,
        ]
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        Metrics::NAMES
            .iter()
            .zip(self.values())
            .map(|(n, v)| (n.to_string(), v))
            .collect()
    }
}

/// One `agent_trace.csv` row.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub time: f64,
    pub agent: AgentId,
    pub attribute: &'static str,
    pub value: f64,
}

/// Final attribute levels of one agent, for post-run inspection.
#[derive(Debug, Clone)]
pub struct AgentSnapshot {
    pub id: AgentId,
    pub knowledge: [f64; 3],
    pub communication: f64,
    pub productivity: f64,
}

/// Work history of one activity, for conservation checks.
#[derive(Debug, Clone)]
pub struct ActivityAudit {
    pub activity: ActivityRef,
    pub category: Category,
    pub effort: f64,
    pub remaining: f64,
    pub done: bool,
    pub segments: Vec<WorkSegment>,
}

/// Everything a single replication produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub trace: Vec<TraceRow>,
    pub event_log: Option<Vec<String>>,
    pub agents: Vec<AgentSnapshot>,
    pub activities: Vec<ActivityAudit>,
    pub sessions: Vec<SessionRt>,
}
