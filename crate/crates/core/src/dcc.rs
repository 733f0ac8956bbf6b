//! Reactive decentralized congestion control for CAM generation.
//!
//! Each vehicle smooths its measured CBR into a channel load
//! `CL_n = (1 - alpha) * CL_{n-1} + alpha * CBR_n`, maps the load to a CAM
//! interval through a state table, and applies the new interval to its
//! generation timer according to two independent policies:
//!
//! * timer handling: Wait-and-Go lets the pending timer expire before the new
//!   interval takes effect; Cancel-and-Go cancels it and restarts from now.
//! * interval setting: Synchronized uses the table value as is;
//!   Unsynchronized draws the first interval after a change uniformly from
//!   `[0, new interval]` and uses the table value afterwards.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Event, EventHandle, EventKind, EventQueue, SimTime};
use crate::scenario::NodeId;

/// CAM interval without congestion control (10 Hz).
pub const DEFAULT_OFF_INTERVAL_MS: u64 = 100;

#[derive(Debug, Error, PartialEq)]
pub enum DccError {
    #[error("CBR sample {0} outside [0, 1]")]
    CbrOutOfRange(f64),
    #[error("alpha {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("DCC table needs exactly one more interval than thresholds ({thresholds} thresholds, {intervals} intervals)")]
    TableShape { thresholds: usize, intervals: usize },
    #[error("DCC table thresholds must be strictly increasing within (0, 1)")]
    TableThresholds,
    #[error("DCC table intervals must be positive and strictly increasing")]
    TableIntervals,
    #[error("unknown DCC variant {0:?} (expected off or reactive1..reactive4)")]
    UnknownVariant(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DccState {
    pub name: String,
    pub cl_lower: f64,
    /// Exclusive, except for the last row which closes at 1.
    pub cl_upper: f64,
    pub t_off_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DccTable {
    rows: Vec<DccState>,
}

pub const REACTIVE_THRESHOLDS: [f64; 6] = [0.19, 0.27, 0.35, 0.43, 0.51, 0.59];
pub const REACTIVE_INTERVALS_MS: [u64; 7] = [60, 100, 180, 260, 340, 420, 460];

impl Default for DccTable {
    fn default() -> Self {
        DccTable::new(&REACTIVE_THRESHOLDS, &REACTIVE_INTERVALS_MS)
            .expect("built-in table is valid")
    }
}

impl DccTable {
    /// Builds a table from the lower bounds of every row but the first and
    /// the interval of each row. Rows are named Relaxed, Active_1.. and
    /// Restricted.
    pub fn new(thresholds: &[f64], intervals_ms: &[u64]) -> Result<Self, DccError> {
        if intervals_ms.len() != thresholds.len() + 1 {
            return Err(DccError::TableShape {
                thresholds: thresholds.len(),
                intervals: intervals_ms.len(),
            });
        }
        let mut bounds = Vec::with_capacity(thresholds.len() + 2);
        bounds.push(0.0);
        bounds.extend_from_slice(thresholds);
        bounds.push(1.0);
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail
        if bounds.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(DccError::TableThresholds);
        }
        if intervals_ms[0] == 0 || intervals_ms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DccError::TableIntervals);
        }
        let last = intervals_ms.len() - 1;
        let rows = intervals_ms
            .iter()
            .enumerate()
            .map(|(i, &t_off_ms)| DccState {
                name: match i {
                    0 => "Relaxed".to_owned(),
                    i if i == last => "Restricted".to_owned(),
                    i => format!("Active_{i}"),
                },
                cl_lower: bounds[i],
                cl_upper: bounds[i + 1],
                t_off_ms,
            })
            .collect();
        Ok(DccTable { rows })
    }

    pub fn rows(&self) -> &[DccState] {
        &self.rows
    }

    /// Index of the row containing `cl`. Values outside `[0, 1]` clamp to
    /// the first or last row.
    pub fn state_index(&self, cl: f64) -> usize {
        // Rows are lower-inclusive: count the thresholds at or below cl.
        self.rows[1..]
            .iter()
            .take_while(|r| r.cl_lower <= cl)
            .count()
    }

    pub fn lookup(&self, cl: f64) -> &DccState {
        &self.rows[self.state_index(cl)]
    }

    pub fn lookup_interval_ms(&self, cl: f64) -> u64 {
        self.lookup(cl).t_off_ms
    }
}

/// Exponentially weighted channel load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelLoad {
    cl: f64,
    alpha: f64,
}

impl ChannelLoad {
    pub fn new(alpha: f64) -> Result<Self, DccError> {
        Self::with_initial(alpha, 0.0)
    }

    pub fn with_initial(alpha: f64, cl: f64) -> Result<Self, DccError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(DccError::AlphaOutOfRange(alpha));
        }
        Ok(ChannelLoad { cl, alpha })
    }

    pub fn value(&self) -> f64 {
        self.cl
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn update(&mut self, cbr: f64) -> Result<f64, DccError> {
        if !(0.0..=1.0).contains(&cbr) {
            return Err(DccError::CbrOutOfRange(cbr));
        }
        self.cl = (1.0 - self.alpha) * self.cl + self.alpha * cbr;
        Ok(self.cl)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TimerPolicy {
    WaitAndGo,
    CancelAndGo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntervalPolicy {
    Synchronized,
    Unsynchronized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DccVariant {
    Off,
    Reactive {
        timer: TimerPolicy,
        interval: IntervalPolicy,
    },
}

impl DccVariant {
    pub const ALL: [DccVariant; 5] = [
        DccVariant::Off,
        DccVariant::reactive(1),
        DccVariant::reactive(2),
        DccVariant::reactive(3),
        DccVariant::reactive(4),
    ];

    /// DccReactive-1..4: (Wait, Sync), (Cancel, Sync), (Wait, Unsync),
    /// (Cancel, Unsync).
    pub const fn reactive(n: u8) -> DccVariant {
        let (timer, interval) = match n {
            1 => (TimerPolicy::WaitAndGo, IntervalPolicy::Synchronized),
            2 => (TimerPolicy::CancelAndGo, IntervalPolicy::Synchronized),
            3 => (TimerPolicy::WaitAndGo, IntervalPolicy::Unsynchronized),
            4 => (TimerPolicy::CancelAndGo, IntervalPolicy::Unsynchronized),
            _ => panic!("reactive variants are numbered 1 to 4"),
        };
        DccVariant::Reactive { timer, interval }
    }

    pub fn name(self) -> &'static str {
        use IntervalPolicy::*;
        use TimerPolicy::*;
        match self {
            DccVariant::Off => "off",
            DccVariant::Reactive { timer, interval } => match (timer, interval) {
                (WaitAndGo, Synchronized) => "reactive1",
                (CancelAndGo, Synchronized) => "reactive2",
                (WaitAndGo, Unsynchronized) => "reactive3",
                (CancelAndGo, Unsynchronized) => "reactive4",
            },
        }
    }
}

impl fmt::Display for DccVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DccVariant {
    type Err = DccError;

    fn from_str(s: &str) -> Result<Self, DccError> {
        DccVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| DccError::UnknownVariant(s.to_owned()))
    }
}

impl Serialize for DccVariant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for DccVariant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// When a CBR notification triggers the timer/interval policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Retrigger {
    /// Only when the table interval changes.
    #[default]
    OnChange,
    /// On every notification, even if the interval is unchanged.
    EveryNotification,
}

/// One row of the controller decision trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub node: NodeId,
    pub t: SimTime,
    pub cbr: f64,
    pub cl: f64,
    pub state: String,
    pub setting_ms: f64,
    pub realized_gap_ms: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DccController {
    node: NodeId,
    variant: DccVariant,
    table: DccTable,
    load: ChannelLoad,
    retrigger: Retrigger,
    off_interval_us: u64,
    state_idx: usize,
    interval_us: u64,
    first_after_change: bool,
    pending: Option<(EventHandle, SimTime)>,
    last_generation: Option<SimTime>,
    last_gap_us: Option<u64>,
    last_cbr: f64,
}

impl DccController {
    /// A controller in the Relaxed state with `CL_0 = 0`.
    pub fn new(
        node: NodeId,
        variant: DccVariant,
        table: DccTable,
        alpha: f64,
        retrigger: Retrigger,
        off_interval_ms: u64,
    ) -> Result<Self, DccError> {
        let load = ChannelLoad::new(alpha)?;
        let state_idx = table.state_index(load.value());
        let interval_us = match variant {
            DccVariant::Off => off_interval_ms * 1_000,
            DccVariant::Reactive { .. } => table.rows()[state_idx].t_off_ms * 1_000,
        };
        Ok(DccController {
            node,
            variant,
            table,
            load,
            retrigger,
            off_interval_us: off_interval_ms * 1_000,
            state_idx,
            interval_us,
            first_after_change: false,
            pending: None,
            last_generation: None,
            last_gap_us: None,
            last_cbr: 0.0,
        })
    }

    pub fn variant(&self) -> DccVariant {
        self.variant
    }

    pub fn channel_load(&self) -> f64 {
        self.load.value()
    }

    /// The interval the table currently prescribes.
    pub fn setting_interval_us(&self) -> u64 {
        self.interval_us
    }

    pub fn state_name(&self) -> &str {
        match self.variant {
            DccVariant::Off => "Off",
            DccVariant::Reactive { .. } => &self.table.rows()[self.state_idx].name,
        }
    }

    pub fn pending_fire_time(&self) -> Option<SimTime> {
        self.pending.map(|(_, t)| t)
    }

    pub fn pending_handle(&self) -> Option<EventHandle> {
        self.pending.map(|(h, _)| h)
    }

    /// Arms the first generation timer.
    pub fn start(&mut self, first_fire: SimTime, q: &mut EventQueue) {
        self.arm(first_fire, q);
    }

    fn arm(&mut self, at: SimTime, q: &mut EventQueue) {
        let h = q
            .schedule(at, Event::new(EventKind::CamTimerFire, self.node))
            .expect("CAM timer set in the future");
        self.pending = Some((h, at));
    }

    /// Length of the next generation interval in microseconds.
    pub fn draw_interval<R: Rng + ?Sized>(&mut self, rng: &mut R) -> u64 {
        match self.variant {
            DccVariant::Off => self.off_interval_us,
            DccVariant::Reactive {
                interval: IntervalPolicy::Synchronized,
                ..
            } => self.interval_us,
            DccVariant::Reactive {
                interval: IntervalPolicy::Unsynchronized,
                ..
            } => {
                if self.first_after_change {
                    self.first_after_change = false;
                    rng.random_range(0..=self.interval_us)
                } else {
                    self.interval_us
                }
            }
        }
    }

    /// Feeds a freshly measured CBR. Returns a trace row when the setting
    /// interval changed.
    pub fn on_cbr_notification<R: Rng + ?Sized>(
        &mut self,
        cbr: f64,
        now: SimTime,
        q: &mut EventQueue,
        rng: &mut R,
    ) -> Result<Option<TraceRow>, DccError> {
        let cl = self.load.update(cbr)?;
        self.last_cbr = cbr;
        let DccVariant::Reactive { timer, interval } = self.variant else {
            return Ok(None);
        };
        let new_idx = self.table.state_index(cl);
        let changed = new_idx != self.state_idx;
        if !changed && self.retrigger == Retrigger::OnChange {
            return Ok(None);
        }
        self.state_idx = new_idx;
        self.interval_us = self.table.rows()[new_idx].t_off_ms * 1_000;
        if interval == IntervalPolicy::Unsynchronized {
            self.first_after_change = true;
        }
        if timer == TimerPolicy::CancelAndGo {
            if let Some((h, _)) = self.pending.take() {
                q.cancel(h);
            }
            let next = now + self.draw_interval(rng);
            self.arm(next, q);
        }
        Ok(changed.then(|| self.trace_row(now)))
    }

    /// The generation timer fired: the caller generates a CAM. Schedules the
    /// next fire and returns a trace row when the realized gap changed.
    pub fn on_timer_fire<R: Rng + ?Sized>(
        &mut self,
        now: SimTime,
        q: &mut EventQueue,
        rng: &mut R,
    ) -> Option<TraceRow> {
        self.pending = None;
        let gap = self.last_generation.map(|prev| now - prev);
        self.last_generation = Some(now);
        let next = now + self.draw_interval(rng);
        self.arm(next, q);
        let gap = gap?;
        let changed = self.last_gap_us != Some(gap);
        self.last_gap_us = Some(gap);
        changed.then(|| self.trace_row(now))
    }

    fn trace_row(&self, now: SimTime) -> TraceRow {
        TraceRow {
            node: self.node,
            t: now,
            cbr: self.last_cbr,
            cl: self.load.value(),
            state: self.state_name().to_owned(),
            setting_ms: self.interval_us as f64 / 1_000.0,
            realized_gap_ms: self.last_gap_us.map(|g| g as f64 / 1_000.0),
        }
    }
}
