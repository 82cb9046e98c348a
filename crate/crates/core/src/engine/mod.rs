//! Discrete-event kernel: simulation clock, future-event queue, named
//! random-number streams and hierarchical message routing.
//!
//! The kernel is scenario-agnostic. A concrete model implements [`Model`]
//! and describes its event payloads via [`Payload`]; [`run`] then drains the
//! queue in deterministic order until it is empty or the horizon is passed.

mod queue;
mod routing;
mod streams;

pub use queue::EventQueue;
pub use routing::{hierarchy_allows, Message};
pub use streams::{derive_seed, replication_seed, replication_seed_tagged, Distribution, RngStreams};

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::agent::AgentId;

/// Simulation time in hours since the start of the run.
///
/// Always finite and non-negative, which makes the manual `Ord` sound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    pub fn from_hours(hours: f64) -> SimTime {
        debug_assert!(hours.is_finite() && hours >= 0.0, "bad sim time {hours}");
        SimTime(hours)
    }

    pub fn hours(self) -> f64 {
        self.0
    }

    /// Time `delta` hours later; negative deltas are clamped to this instant.
    pub fn offset(self, delta: f64) -> SimTime {
        SimTime::from_hours(self.0 + delta.max(0.0))
    }
}

impl Eq for SimTime {}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("cannot schedule an event at {event:.6}h, clock is already at {now:.6}h")]
    TimeTravel { event: f64, now: f64 },
    #[error("bad distribution parameters: {0}")]
    BadDistributionParams(String),
    #[error("message from {from} to {to} violates the reporting hierarchy")]
    HierarchyViolation { from: AgentId, to: AgentId },
    #[error("agent {0} is not registered with the kernel")]
    UnknownAgent(AgentId),
    #[error("model error: {0}")]
    Model(String),
}

/// What an event is aimed at, as shown in the `target` column of the log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventTarget {
    System,
    Agent(AgentId),
}

impl fmt::Display for EventTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventTarget::System => write!(f, "system"),
            EventTarget::Agent(id) => write!(f, "{id}"),
        }
    }
}

/// Scenario-defined event payload.
///
/// `kind` labels the event-log line; `from_message` lets the kernel wrap a
/// routed message into the scenario's payload type.
pub trait Payload: Clone + fmt::Debug {
    type MsgBody: Clone + fmt::Debug;

    fn from_message(message: Message<Self::MsgBody>) -> Self;
    fn kind(&self) -> String;
}

#[derive(Debug, Clone)]
pub struct Event<P> {
    pub time: SimTime,
    pub priority: i32,
    pub seq: u64,
    pub target: EventTarget,
    pub payload: P,
}

/// Everything a model needs while it runs: clock, queue, streams and the
/// registry of live agents.
pub struct Kernel<P: Payload> {
    queue: EventQueue<P>,
    streams: RngStreams,
    agents: BTreeSet<AgentId>,
    log: Option<Vec<String>>,
}

impl<P: Payload> Kernel<P> {
    pub fn new(base_seed: u64) -> Kernel<P> {
        Kernel {
            queue: EventQueue::new(),
            streams: RngStreams::new(base_seed),
            agents: BTreeSet::new(),
            log: None,
        }
    }

    /// Start collecting one log line per processed event.
    pub fn enable_event_log(&mut self) {
        self.log = Some(Vec::new());
    }

    pub fn take_event_log(&mut self) -> Option<Vec<String>> {
        self.log.take()
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn base_seed(&self) -> u64 {
        self.streams.base_seed()
    }

    pub fn streams(&mut self) -> &mut RngStreams {
        &mut self.streams
    }

    pub fn register_agent(&mut self, id: AgentId) {
        self.agents.insert(id);
    }

    pub fn is_registered(&self, id: AgentId) -> bool {
        self.agents.contains(&id)
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    /// Schedule `payload` at an absolute time with default priority 0.
    pub fn schedule_at(
        &mut self,
        time: SimTime,
        target: EventTarget,
        payload: P,
    ) -> Result<u64, EngineError> {
        self.queue.push(time, 0, target, payload)
    }

    /// Schedule `payload` `delay` hours from now (default priority 0).
    pub fn schedule_in(
        &mut self,
        delay: f64,
        target: EventTarget,
        payload: P,
    ) -> Result<u64, EngineError> {
        self.queue.push(self.now().offset(delay), 0, target, payload)
    }

    pub fn schedule_prioritized(
        &mut self,
        time: SimTime,
        priority: i32,
        target: EventTarget,
        payload: P,
    ) -> Result<u64, EngineError> {
        self.queue.push(time, priority, target, payload)
    }

    /// Deliver a message: both ends must be live and the pair must be allowed
    /// by the reporting hierarchy. Delivery is an event at the current time.
    pub fn route(&mut self, message: Message<P::MsgBody>) -> Result<u64, EngineError> {
        if !self.is_registered(message.from) {
            return Err(EngineError::UnknownAgent(message.from));
        }
        if !self.is_registered(message.to) {
            return Err(EngineError::UnknownAgent(message.to));
        }
        if !hierarchy_allows(message.from, message.to) {
            return Err(EngineError::HierarchyViolation {
                from: message.from,
                to: message.to,
            });
        }
        let to = message.to;
        let payload = P::from_message(message);
        self.queue.push(self.now(), 0, EventTarget::Agent(to), payload)
    }

    fn log_processed(&mut self, event: &Event<P>) {
        if let Some(lines) = self.log.as_mut() {
            lines.push(format!(
                "{:.6}\t{}\t{}\t{}",
                event.time.hours(),
                event.seq,
                event.payload.kind(),
                event.target
            ));
        }
    }
}

/// A scenario that can be driven by [`run`].
pub trait Model {
    type P: Payload;

    /// Register agents and schedule the initial events.
    fn init(&mut self, kernel: &mut Kernel<Self::P>) -> Result<(), EngineError>;

    /// Process one event. The kernel clock has already advanced to its time.
    fn handle(&mut self, kernel: &mut Kernel<Self::P>, event: Event<Self::P>)
        -> Result<(), EngineError>;

    /// Close the run at `horizon` (integrate tails, settle final statuses).
    fn finalize(&mut self, kernel: &mut Kernel<Self::P>, horizon: SimTime)
        -> Result<(), EngineError>;
}

#[derive(Debug, Clone, Copy)]
pub struct RunReport {
    pub processed: u64,
    pub end_time: SimTime,
}

/// Drain the queue in `(time, -priority, seq)` order until it is empty or the
/// next event lies beyond `horizon`. Events at exactly `horizon` still run.
pub fn run<M: Model>(
    model: &mut M,
    kernel: &mut Kernel<M::P>,
    horizon: SimTime,
) -> Result<RunReport, EngineError> {
    run_observed(model, kernel, horizon, |_, _| {})
}

/// [`run`] with a per-event observer, used by invariant-checking tests.
pub fn run_observed<M: Model>(
    model: &mut M,
    kernel: &mut Kernel<M::P>,
    horizon: SimTime,
    mut observe: impl FnMut(&M, &Kernel<M::P>),
) -> Result<RunReport, EngineError> {
    model.init(kernel)?;
    let mut processed = 0u64;
    while let Some(next) = kernel.queue.peek_time() {
        if next > horizon {
            break;
        }
        let event = kernel.queue.pop().expect("peeked event vanished");
        kernel.log_processed(&event);
        model.handle(kernel, event)?;
        processed += 1;
        observe(model, kernel);
    }
    model.finalize(kernel, horizon)?;
    Ok(RunReport {
        processed,
        end_time: kernel.now(),
    })
}
