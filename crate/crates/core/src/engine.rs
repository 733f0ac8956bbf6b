//! Deterministic discrete-event scheduler.
//!
//! Time is an integer count of microseconds. Events are dispatched in
//! `(time, seq)` order where `seq` is a monotone insertion counter, so two
//! events scheduled for the same instant fire in the order they were
//! scheduled. Cancellation marks the event dead in O(1); dead entries are
//! discarded when they reach the head of the heap.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::NodeId;

/// Simulated time in integer microseconds since the start of a run.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    pub const fn micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    /// Saturating difference in microseconds.
    pub fn since(self, earlier: SimTime) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl Add<u64> for SimTime {
    type Output = SimTime;

    fn add(self, us: u64) -> SimTime {
        SimTime(self.0 + us)
    }
}

impl Sub<SimTime> for SimTime {
    type Output = u64;

    fn sub(self, rhs: SimTime) -> u64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// A vehicle's CAM generation timer expired.
    CamTimerFire,
    /// The MAC finished AIFS/backoff and puts its queued frame on air.
    TxStart,
    /// A frame finished its airtime. Carries the slot of the on-air frame.
    TxEnd { slot: usize },
    /// End of a node's CBR monitoring window.
    CbrWindowClose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub kind: EventKind,
    pub node: Option<NodeId>,
}

impl Event {
    pub fn new(kind: EventKind, node: NodeId) -> Self {
        Event {
            kind,
            node: Some(node),
        }
    }
}

/// Opaque reference to a scheduled event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle {
    slot: usize,
    seq: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("cannot schedule at {at}: simulation clock is already at {now}")]
    InThePast { at: SimTime, now: SimTime },
}

#[derive(Debug, Default)]
pub struct EventQueue {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Reverse<(SimTime, u64, usize)>>,
    // Slab of pending events. A heap entry is live iff its slot still holds
    // the same seq and an event.
    slots: Vec<Slot>,
    free: Vec<usize>,
    live: usize,
}

#[derive(Debug)]
struct Slot {
    seq: u64,
    ev: Option<Event>,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of live (scheduled, not cancelled, not yet fired) events.
    pub fn len(&self) -> usize {
        self.live
    }

    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    pub fn schedule(&mut self, at: SimTime, ev: Event) -> Result<EventHandle, ScheduleError> {
        if at < self.now {
            return Err(ScheduleError::InThePast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        let slot = match self.free.pop() {
            Some(i) => {
                self.slots[i] = Slot { seq, ev: Some(ev) };
                i
            }
            None => {
                self.slots.push(Slot { seq, ev: Some(ev) });
                self.slots.len() - 1
            }
        };
        self.heap.push(Reverse((at, seq, slot)));
        self.live += 1;
        Ok(EventHandle { slot, seq })
    }

    /// Returns true iff the event was live and has now been removed.
    pub fn cancel(&mut self, h: EventHandle) -> bool {
        if !self.is_live(h) {
            return false;
        }
        self.slots[h.slot].ev = None;
        self.free.push(h.slot);
        self.live -= 1;
        true
    }

    pub fn is_live(&self, h: EventHandle) -> bool {
        self.slot_holds(h.slot, h.seq)
    }

    fn slot_holds(&self, slot: usize, seq: u64) -> bool {
        self.slots
            .get(slot)
            .is_some_and(|s| s.seq == seq && s.ev.is_some())
    }

    /// Time of the earliest live event, if any.
    pub fn peek_time(&mut self) -> Option<SimTime> {
        self.skip_dead();
        self.heap.peek().map(|Reverse((t, _, _))| *t)
    }

    /// Pops the next live event with time `<= t_end`, advancing the clock to it.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<(SimTime, Event)> {
        self.skip_dead();
        let Reverse((t, _, slot)) = *self.heap.peek()?;
        if t > t_end {
            return None;
        }
        self.heap.pop();
        let ev = self.slots[slot]
            .ev
            .take()
            .expect("head of heap is live after skip_dead");
        self.free.push(slot);
        self.live -= 1;
        self.now = t;
        Some((t, ev))
    }

    /// Dispatches every live event with time `<= t_end` in `(time, seq)`
    /// order, then sets the clock to `t_end`.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F)
    where
        F: FnMut(&mut EventQueue, SimTime, Event),
    {
        assert!(
            t_end >= self.now,
            "run_until({t_end}) before now ({})",
            self.now
        );
        while let Some((t, ev)) = self.pop_until(t_end) {
            handler(self, t, ev);
        }
        self.now = t_end;
    }

    /// Moves the clock forward to `t` without dispatching anything.
    pub fn advance_to(&mut self, t: SimTime) {
        assert!(t >= self.now, "clock cannot move backwards");
        self.now = t;
    }

    fn skip_dead(&mut self) {
        while let Some(&Reverse((_, seq, slot))) = self.heap.peek() {
            if self.slot_holds(slot, seq) {
                break;
            }
            self.heap.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(n: usize) -> Event {
        Event::new(EventKind::CamTimerFire, n)
    }

    fn drain(q: &mut EventQueue, until: SimTime) -> Vec<(u64, usize)> {
        let mut out = Vec::new();
        q.run_until(until, |_, t, e| out.push((t.micros(), e.node.unwrap())));
        out
    }

    #[test]
    fn equal_times_dispatch_fifo() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::ZERO, ev(1)).unwrap();
        q.schedule(SimTime::ZERO, ev(2)).unwrap();
        assert_eq!(drain(&mut q, SimTime::ZERO), vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn earlier_time_first() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_micros(5), ev(5)).unwrap();
        q.schedule(SimTime::from_micros(3), ev(3)).unwrap();
        assert_eq!(
            drain(&mut q, SimTime::from_micros(10)),
            vec![(3, 3), (5, 5)]
        );
    }

    #[test]
    fn scheduling_in_the_past_is_rejected() {
        let mut q = EventQueue::new();
        q.run_until(SimTime::from_micros(10), |_, _, _| {});
        let err = q.schedule(SimTime::from_micros(9), ev(0)).unwrap_err();
        assert_eq!(
            err,
            ScheduleError::InThePast {
                at: SimTime::from_micros(9),
                now: SimTime::from_micros(10)
            }
        );
        assert!(q.schedule(SimTime::from_micros(10), ev(0)).is_ok());
    }

    #[test]
    fn cancel_semantics() {
        let mut q = EventQueue::new();
        let a = q.schedule(SimTime::from_micros(1), ev(1)).unwrap();
        let b = q.schedule(SimTime::from_micros(2), ev(2)).unwrap();
        assert!(q.cancel(a));
        assert!(!q.cancel(a));
        assert_eq!(drain(&mut q, SimTime::from_micros(5)), vec![(2, 2)]);
        assert!(!q.cancel(b), "already fired");
    }

    #[test]
    fn run_until_on_empty_queue_advances_clock() {
        let mut q = EventQueue::new();
        assert!(drain(&mut q, SimTime::from_secs(10)).is_empty());
        assert_eq!(q.now(), SimTime::from_secs(10));
    }

    #[test]
    fn run_until_leaves_later_events_pending() {
        let mut q = EventQueue::new();
        for t in 1..=3 {
            q.schedule(SimTime::from_micros(t), ev(t as usize)).unwrap();
        }
        assert_eq!(drain(&mut q, SimTime::from_micros(2)), vec![(1, 1), (2, 2)]);
        assert_eq!(q.now(), SimTime::from_micros(2));
        assert_eq!(q.len(), 1);
        assert_eq!(drain(&mut q, SimTime::from_micros(3)), vec![(3, 3)]);
    }

    #[test]
    fn handler_may_schedule_at_now() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_micros(4), ev(0)).unwrap();
        let mut seen = Vec::new();
        q.run_until(SimTime::from_micros(4), |q, t, e| {
            seen.push(e.node.unwrap());
            if e.node == Some(0) {
                q.schedule(t, ev(1)).unwrap();
            }
        });
        assert_eq!(seen, vec![0, 1]);
    }
}
