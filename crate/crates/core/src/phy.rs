//! Radio propagation, frame airtime, reception outcomes and the per-node
//! channel busy ratio monitor.
//!
//! The free functions operating on a `&[Transmission]` trace are the
//! reference definitions of the busy predicate and the reception outcome.
//! The simulator tracks the same quantities incrementally; tests check the
//! two against each other.

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::scenario::{pair_distance, NodeId, NodeSpec};

const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;
pub const ITS_G5_CARRIER_HZ: f64 = 5.9e9;

// OFDM framing: 16 SERVICE bits and 6 tail bits around the PSDU.
const SERVICE_BITS: u64 = 16;
const TAIL_BITS: u64 = 6;

/// Free-space (Friis) loss at 1 m for the given carrier.
pub fn free_space_ref_loss_db(carrier_hz: f64) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI * carrier_hz / SPEED_OF_LIGHT_M_S).log10()
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Which thresholds the per-node sensitivity offset shifts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetMode {
    /// Carrier sense (and therefore CBR) and decoding.
    #[default]
    Both,
    /// Carrier sense only; decoding uses the nominal threshold.
    SenseOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    pub tx_power_dbm: f64,
    pub antenna_gain_dbi: f64,
    pub ed_threshold_dbm: f64,
    pub pathloss_exponent: f64,
    pub ref_loss_db_at_1m: f64,
    pub noise_floor_dbm: f64,
    pub sinr_threshold_db: f64,
    pub preamble_us: u64,
    pub symbol_us: u64,
    pub bits_per_symbol: u64,
    pub frame_overhead_bytes: u64,
    pub offset_mode: OffsetMode,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams {
            tx_power_dbm: 23.0,
            antenna_gain_dbi: 1.0,
            ed_threshold_dbm: -95.0,
            pathloss_exponent: 2.0,
            ref_loss_db_at_1m: free_space_ref_loss_db(ITS_G5_CARRIER_HZ),
            noise_floor_dbm: -99.0,
            sinr_threshold_db: 8.0,
            preamble_us: 40,
            symbol_us: 8,
            bits_per_symbol: 48,
            frame_overhead_bytes: 68,
            offset_mode: OffsetMode::Both,
        }
    }
}

impl RadioParams {
    /// Log-distance loss; distances under 1 m are clamped to 1 m.
    pub fn path_loss_db(&self, d_m: f64) -> f64 {
        self.ref_loss_db_at_1m + 10.0 * self.pathloss_exponent * d_m.max(1.0).log10()
    }

    pub fn rx_power_at_dbm(&self, d_m: f64) -> f64 {
        self.tx_power_dbm + 2.0 * self.antenna_gain_dbi - self.path_loss_db(d_m)
    }

    pub fn rx_power_dbm(&self, tx: &NodeSpec, rx: &NodeSpec) -> f64 {
        self.rx_power_at_dbm(pair_distance(tx, rx))
    }

    /// On-air duration of an MPDU of the given size, in microseconds.
    pub fn airtime_us(&self, mpdu_bytes: u64) -> u64 {
        let bits = SERVICE_BITS + 8 * mpdu_bytes + TAIL_BITS;
        self.preamble_us + bits.div_ceil(self.bits_per_symbol) * self.symbol_us
    }

    pub fn data_rate_bps(&self) -> u64 {
        self.bits_per_symbol * 1_000_000 / self.symbol_us
    }

    /// Energy level above which `node` considers the channel busy.
    pub fn sense_threshold_dbm(&self, node: &NodeSpec) -> f64 {
        self.ed_threshold_dbm + node.sensitivity_offset_db
    }

    /// Minimum signal level `node` can decode.
    pub fn decode_threshold_dbm(&self, node: &NodeSpec) -> f64 {
        match self.offset_mode {
            OffsetMode::Both => self.ed_threshold_dbm + node.sensitivity_offset_db,
            OffsetMode::SenseOnly => self.ed_threshold_dbm,
        }
    }
}

pub type FrameId = u64;

/// A frame on air.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transmission {
    pub frame_id: FrameId,
    pub tx_node: NodeId,
    pub start: SimTime,
    pub end: SimTime,
    pub tx_power_dbm: f64,
    pub payload_bytes: u64,
}

impl Transmission {
    /// Half-open `[start, end)` activity test.
    pub fn active_at(&self, t: SimTime) -> bool {
        self.start <= t && t < self.end
    }

    pub fn overlaps(&self, other: &Transmission) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Received,
    LostBelowSensitivity,
    LostCollision,
    LostHalfDuplex,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [
        Outcome::Received,
        Outcome::LostBelowSensitivity,
        Outcome::LostCollision,
        Outcome::LostHalfDuplex,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

fn power_from(params: &RadioParams, txm: &Transmission, nodes: &[NodeSpec], rx: &NodeSpec) -> f64 {
    let from = &nodes[txm.tx_node];
    txm.tx_power_dbm + 2.0 * params.antenna_gain_dbi - params.path_loss_db(pair_distance(from, rx))
}

/// Busy predicate evaluated directly on a transmission trace: the node is
/// transmitting, or the linear sum of foreign signals reaching it meets its
/// sensing threshold.
pub fn channel_busy(
    node: &NodeSpec,
    t: SimTime,
    trace: &[Transmission],
    nodes: &[NodeSpec],
    params: &RadioParams,
) -> bool {
    let mut foreign_mw = 0.0;
    for txm in trace.iter().filter(|x| x.active_at(t)) {
        if txm.tx_node == node.id {
            return true;
        }
        foreign_mw += dbm_to_mw(power_from(params, txm, nodes, node));
    }
    foreign_mw > 0.0 && mw_to_dbm(foreign_mw) >= params.sense_threshold_dbm(node)
}

/// Busy microseconds for `node` within `[from, to)` on a fixed trace.
pub fn busy_time_in(
    node: &NodeSpec,
    from: SimTime,
    to: SimTime,
    trace: &[Transmission],
    nodes: &[NodeSpec],
    params: &RadioParams,
) -> u64 {
    let mut cuts: Vec<SimTime> = vec![from, to];
    for txm in trace {
        for t in [txm.start, txm.end] {
            if from < t && t < to {
                cuts.push(t);
            }
        }
    }
    cuts.sort_unstable();
    cuts.dedup();
    cuts.windows(2)
        .filter(|w| channel_busy(node, w[0], trace, nodes, params))
        .map(|w| w[1] - w[0])
        .sum()
}

/// Reference reception outcome of `txm` at `rx` given everything else on the
/// trace. Half-duplex takes precedence over sensitivity, which takes
/// precedence over collision.
pub fn reception_outcome(
    txm: &Transmission,
    rx: &NodeSpec,
    trace: &[Transmission],
    nodes: &[NodeSpec],
    params: &RadioParams,
) -> Outcome {
    let others = || trace.iter().filter(|o| o.frame_id != txm.frame_id);
    if others().any(|o| o.tx_node == rx.id && o.overlaps(txm)) {
        return Outcome::LostHalfDuplex;
    }
    let signal_dbm = power_from(params, txm, nodes, rx);
    if signal_dbm < params.decode_threshold_dbm(rx) {
        return Outcome::LostBelowSensitivity;
    }
    // Interference only grows at frame starts, so the SINR minimum over the
    // frame is attained at txm.start or at some other frame's start.
    let mut instants = vec![txm.start];
    instants.extend(
        others()
            .map(|o| o.start)
            .filter(|&s| txm.start < s && s < txm.end),
    );
    let signal_mw = dbm_to_mw(signal_dbm);
    let noise_mw = dbm_to_mw(params.noise_floor_dbm);
    for t in instants {
        let interference_mw: f64 = others()
            .filter(|o| o.active_at(t))
            .map(|o| dbm_to_mw(power_from(params, o, nodes, rx)))
            .sum();
        let sinr_db = mw_to_dbm(signal_mw / (noise_mw + interference_mw));
        if sinr_db < params.sinr_threshold_db {
            return Outcome::LostCollision;
        }
    }
    Outcome::Received
}

/// Channel busy ratio over fixed windows of `window_us`, starting at the
/// node's private phase offset.
#[derive(Debug, Clone, PartialEq)]
pub struct CbrMonitor {
    pub node: NodeId,
    pub window_us: u64,
    pub phase_us: u64,
    window_start: SimTime,
    // Sorted, disjoint busy intervals within the current window.
    busy: Vec<(SimTime, SimTime)>,
    last_cbr: f64,
}

impl CbrMonitor {
    pub fn new(node: NodeId, window_us: u64, phase_us: u64) -> Self {
        assert!(window_us > 0);
        CbrMonitor {
            node,
            window_us,
            phase_us,
            window_start: SimTime::from_micros(phase_us),
            busy: Vec::new(),
            last_cbr: 0.0,
        }
    }

    pub fn window_start(&self) -> SimTime {
        self.window_start
    }

    pub fn next_close(&self) -> SimTime {
        self.window_start + self.window_us
    }

    pub fn last_cbr(&self) -> f64 {
        self.last_cbr
    }

    /// Adds `[start, end)` to the busy set, clipped to the current window.
    pub fn record_busy(&mut self, start: SimTime, end: SimTime) {
        let start = start.max(self.window_start);
        let end = end.min(self.next_close());
        if start >= end {
            return;
        }
        let mut merged = (start, end);
        let mut kept = Vec::with_capacity(self.busy.len() + 1);
        for &(s, e) in &self.busy {
            if e < merged.0 || s > merged.1 {
                kept.push((s, e));
            } else {
                merged = (merged.0.min(s), merged.1.max(e));
            }
        }
        let pos = kept.partition_point(|&(s, _)| s < merged.0);
        kept.insert(pos, merged);
        self.busy = kept;
    }

    /// Measure of the union of busy intervals in the current window.
    pub fn busy_us(&self) -> u64 {
        self.busy.iter().map(|&(s, e)| e - s).sum()
    }

    /// Closes the window ending at `at`, returning its CBR and opening the next.
    pub fn close(&mut self, at: SimTime) -> f64 {
        assert_eq!(at, self.next_close(), "CBR window closed off-boundary");
        let cbr = (self.busy_us() as f64 / self.window_us as f64).clamp(0.0, 1.0);
        self.busy.clear();
        self.window_start = at;
        self.last_cbr = cbr;
        cbr
    }
}
