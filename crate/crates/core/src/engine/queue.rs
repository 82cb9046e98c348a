//! Future-event queue with a total order: time ascending, then priority
//! descending, then insertion sequence ascending.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{EngineError, Event, EventTarget, SimTime};

pub struct EventQueue<P> {
    heap: BinaryHeap<Entry<P>>,
    now: SimTime,
    next_seq: u64,
}

struct Entry<P>(Event<P>);

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<P> Eq for Entry<P> {}

impl<P> Ord for Entry<P> {
    // BinaryHeap is a max-heap, so "greater" must mean "popped sooner".
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .time
            .cmp(&self.0.time)
            .then(self.0.priority.cmp(&other.0.priority))
            .then(other.0.seq.cmp(&self.0.seq))
    }
}

impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> EventQueue<P> {
        EventQueue {
            heap: BinaryHeap::new(),
            now: SimTime::ZERO,
            next_seq: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Enqueue an event. Scheduling into the past is refused; scheduling at
    /// the current instant is fine. Returns the assigned sequence number.
    pub fn push(
        &mut self,
        time: SimTime,
        priority: i32,
        target: EventTarget,
        payload: P,
    ) -> Result<u64, EngineError> {
        if time < self.now {
            return Err(EngineError::TimeTravel {
                event: time.hours(),
                now: self.now.hours(),
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry(Event {
            time,
            priority,
            seq,
            target,
            payload,
        }));
        Ok(seq)
    }

    /// Remove and return the first event in queue order, advancing the clock
    /// to its time. The clock never moves backwards.
    pub fn pop(&mut self) -> Option<Event<P>> {
        let event = self.heap.pop()?.0;
        self.now = event.time;
        Some(event)
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.0.time)
    }
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        EventQueue::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn push(q: &mut EventQueue<&'static str>, t: f64, prio: i32, tag: &'static str) -> u64 {
        q.push(SimTime::from_hours(t), prio, EventTarget::System, tag)
            .unwrap()
    }

    #[test]
    fn earlier_time_pops_first() {
        let mut q = EventQueue::new();
        push(&mut q, 2.0, 0, "late");
        push(&mut q, 1.0, 0, "early");
        assert_eq!(q.pop().unwrap().payload, "early");
        assert_eq!(q.now(), SimTime::from_hours(1.0));
        assert_eq!(q.pop().unwrap().payload, "late");
    }

    #[test]
    fn higher_priority_wins_at_equal_time() {
        let mut q = EventQueue::new();
        push(&mut q, 5.0, 1, "low");
        push(&mut q, 5.0, 7, "high");
        assert_eq!(q.pop().unwrap().payload, "high");
        assert_eq!(q.pop().unwrap().payload, "low");
    }

    #[test]
    fn insertion_order_breaks_full_ties() {
        let mut q = EventQueue::new();
        let a = push(&mut q, 3.0, 2, "first");
        let b = push(&mut q, 3.0, 2, "second");
        assert!(a < b);
        assert_eq!(q.pop().unwrap().payload, "first");
        assert_eq!(q.pop().unwrap().payload, "second");
    }

    #[test]
    fn scheduling_into_the_past_is_refused() {
        let mut q = EventQueue::new();
        push(&mut q, 4.0, 0, "now");
        q.pop();
        let err = q
            .push(SimTime::from_hours(3.0), 0, EventTarget::System, "stale")
            .unwrap_err();
        assert!(matches!(err, EngineError::TimeTravel { .. }));
        // Scheduling at the current instant is allowed.
        assert!(q
            .push(SimTime::from_hours(4.0), 0, EventTarget::System, "ok")
            .is_ok());
    }

    #[test]
    fn clock_starts_at_zero_and_is_monotone() {
        let mut q = EventQueue::new();
        assert_eq!(q.now(), SimTime::ZERO);
        push(&mut q, 1.0, 0, "a");
        push(&mut q, 1.0, 0, "b");
        push(&mut q, 0.5, 0, "c");
        let mut last = SimTime::ZERO;
        while let Some(e) = q.pop() {
            assert!(e.time >= last);
            last = e.time;
        }
    }
}
