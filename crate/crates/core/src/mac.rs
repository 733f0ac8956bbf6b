//! Broadcast CSMA/CA with a single-slot CAM queue.
//!
//! The backoff countdown is not simulated slot by slot. When the channel
//! goes idle the MAC schedules one `TxStart` at `idle + AIFS + remaining
//! slots`; if the channel turns busy first, the event is cancelled and the
//! number of fully idle slots is charged against the counter.

use serde::{Deserialize, Serialize};

use crate::engine::{Event, EventHandle, EventKind, EventQueue, SimTime};
use crate::phy::FrameId;
use crate::scenario::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacParams {
    pub slot_us: u64,
    pub sifs_us: u64,
    pub aifsn: u64,
    /// Fixed contention window; backoff is drawn from `0..=cw`.
    pub cw: u32,
}

impl Default for MacParams {
    fn default() -> Self {
        MacParams {
            slot_us: 13,
            sifs_us: 32,
            aifsn: 6,
            cw: 15,
        }
    }
}

impl MacParams {
    pub fn aifs_us(&self) -> u64 {
        self.sifs_us + self.aifsn * self.slot_us
    }
}

/// A generated CAM waiting for the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CamFrame {
    pub frame_id: FrameId,
    pub generated_at: SimTime,
}

/// Depth-one queue: a newer CAM replaces a stale one.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CamQueue {
    slot: Option<CamFrame>,
    pub drops_count: u64,
}

impl CamQueue {
    /// Returns the frame that was displaced, if any.
    pub fn enqueue(&mut self, frame: CamFrame) -> Option<CamFrame> {
        let stale = self.slot.replace(frame);
        if stale.is_some() {
            self.drops_count += 1;
        }
        stale
    }

    pub fn take(&mut self) -> Option<CamFrame> {
        self.slot.take()
    }

    pub fn peek(&self) -> Option<&CamFrame> {
        self.slot.as_ref()
    }

    pub fn is_empty(&self) -> bool {
        self.slot.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Access {
    Idle,
    /// Waiting for the channel to go idle. `backoff` is `None` until a draw
    /// has been made for the current frame.
    Deferring {
        backoff: Option<u32>,
    },
    /// Channel idle since `idle_from`; transmission scheduled at `tx_at`.
    CountingDown {
        idle_from: SimTime,
        backoff: Option<u32>,
        tx_at: SimTime,
        handle: EventHandle,
    },
    Transmitting,
}

#[derive(Debug, Clone)]
pub struct Mac {
    pub node: NodeId,
    params: MacParams,
    pub queue: CamQueue,
    state: Access,
}

impl Mac {
    pub fn new(node: NodeId, params: MacParams) -> Self {
        Mac {
            node,
            params,
            queue: CamQueue::default(),
            state: Access::Idle,
        }
    }

    pub fn params(&self) -> &MacParams {
        &self.params
    }

    pub fn is_transmitting(&self) -> bool {
        self.state == Access::Transmitting
    }

    /// Scheduled start of the next transmission, if the countdown is running.
    pub fn projected_tx_start(&self) -> Option<SimTime> {
        match self.state {
            Access::CountingDown { tx_at, .. } => Some(tx_at),
            _ => None,
        }
    }

    /// Queues a CAM and starts channel access if none is in progress.
    /// `busy` is the node's carrier-sense state at `now`. Returns the frame
    /// displaced from the queue.
    pub fn enqueue_cam(
        &mut self,
        frame: CamFrame,
        now: SimTime,
        busy: bool,
        q: &mut EventQueue,
        draw_backoff: impl FnOnce(u32) -> u32,
    ) -> Option<CamFrame> {
        let stale = self.queue.enqueue(frame);
        if self.state == Access::Idle {
            self.begin_access(now, busy, q, draw_backoff);
        }
        stale
    }

    fn begin_access(
        &mut self,
        now: SimTime,
        busy: bool,
        q: &mut EventQueue,
        draw_backoff: impl FnOnce(u32) -> u32,
    ) {
        if busy {
            self.state = Access::Deferring {
                backoff: Some(draw_backoff(self.params.cw)),
            };
        } else {
            self.start_countdown(now, None, q);
        }
    }

    fn start_countdown(&mut self, now: SimTime, backoff: Option<u32>, q: &mut EventQueue) {
        let slots = u64::from(backoff.unwrap_or(0));
        let tx_at = now + self.params.aifs_us() + slots * self.params.slot_us;
        let handle = q
            .schedule(tx_at, Event::new(EventKind::TxStart, self.node))
            .expect("countdown ends in the future");
        self.state = Access::CountingDown {
            idle_from: now,
            backoff,
            tx_at,
            handle,
        };
    }

    /// Carrier sense went busy at `now`.
    pub fn on_channel_busy(
        &mut self,
        now: SimTime,
        q: &mut EventQueue,
        draw_backoff: impl FnOnce(u32) -> u32,
    ) {
        let Access::CountingDown {
            idle_from,
            backoff,
            tx_at,
            handle,
        } = self.state
        else {
            return;
        };
        // A transmission due at this very instant cannot have sensed the
        // other one; both go on air.
        if tx_at == now {
            return;
        }
        q.cancel(handle);
        let backoff = match backoff {
            None => draw_backoff(self.params.cw),
            Some(b) => {
                let countdown_from = idle_from + self.params.aifs_us();
                let idle_slots = now.since(countdown_from) / self.params.slot_us;
                b - idle_slots.min(u64::from(b)) as u32
            }
        };
        self.state = Access::Deferring {
            backoff: Some(backoff),
        };
    }

    /// Carrier sense went idle at `now`.
    pub fn on_channel_idle(&mut self, now: SimTime, q: &mut EventQueue) {
        if let Access::Deferring { backoff } = self.state {
            self.start_countdown(now, backoff, q);
        }
    }

    /// The scheduled `TxStart` fired: hand the queued frame to the PHY.
    pub fn start_transmission(&mut self) -> CamFrame {
        assert!(
            matches!(self.state, Access::CountingDown { .. }),
            "TxStart outside countdown"
        );
        self.state = Access::Transmitting;
        self.queue.take().expect("countdown implies a queued frame")
    }

    /// Own transmission finished; contend again if a newer CAM is waiting.
    pub fn on_tx_end(
        &mut self,
        now: SimTime,
        busy: bool,
        q: &mut EventQueue,
        draw_backoff: impl FnOnce(u32) -> u32,
    ) {
        self.state = Access::Idle;
        if !self.queue.is_empty() {
            self.begin_access(now, busy, q, draw_backoff);
        }
    }
}
