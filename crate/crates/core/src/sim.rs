//! One simulation run: a static scenario, the shared broadcast channel and
//! a CSMA/CA MAC plus DCC controller on every vehicle.
//!
//! Received power is precomputed for every (vehicle, node) pair. Each node
//! tracks the linear sum of foreign power currently reaching it, which gives
//! the carrier-sense state in O(1) per update. A receiver can be locked on at
//! most one frame whose SINR has stayed above threshold so far (two frames
//! cannot both clear a positive-dB threshold), so interference checks at a
//! frame start only touch that one frame per receiver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dcc::{DccController, DccError, DccTable, DccVariant, Retrigger};
use crate::engine::{Event, EventHandle, EventKind, EventQueue, SimTime};
use crate::mac::{CamFrame, Mac, MacParams};
use crate::metrics::{Disposition, MetricsConfig, MetricsStore};
use crate::phy::{dbm_to_mw, CbrMonitor, FrameId, Outcome, RadioParams, Transmission};
use crate::scenario::{pair_distance, NodeId, Scenario};

const SETUP_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub radio: RadioParams,
    pub mac: MacParams,
    pub variant: DccVariant,
    pub alpha: f64,
    pub table: DccTable,
    pub retrigger: Retrigger,
    pub off_interval_ms: u64,
    pub payload_bytes: u64,
    pub cbr_window_us: u64,
    pub metrics: MetricsConfig,
    /// Keep every (frame, receiver) disposition and every transmission.
    pub record_ledger: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            radio: RadioParams::default(),
            mac: MacParams::default(),
            variant: DccVariant::Off,
            alpha: 1.0,
            table: DccTable::default(),
            retrigger: Retrigger::OnChange,
            off_interval_ms: crate::dcc::DEFAULT_OFF_INTERVAL_MS,
            payload_bytes: 400,
            cbr_window_us: 100_000,
            metrics: MetricsConfig::default(),
            record_ledger: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SimStats {
    pub events: u64,
    pub generated: u64,
    pub transmissions: u64,
    pub queue_drops: u64,
}

/// One closed CBR window of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbrSample {
    pub node: NodeId,
    pub window_start: SimTime,
    pub window_end: SimTime,
    pub cbr: f64,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub metrics: MetricsStore,
    pub stats: SimStats,
    /// Every transmission, when the ledger was requested.
    pub transmissions: Option<Vec<Transmission>>,
    /// Every closed CBR window, when the ledger was requested.
    pub cbr_log: Option<Vec<CbrSample>>,
    /// Mean CBR reported by RSU monitors after warm-up (diagnostic only).
    pub rsu_mean_cbr: Option<f64>,
}

#[derive(Debug, Clone, Default)]
struct RadioState {
    incident_mw: f64,
    foreign_active: u32,
    transmitting: bool,
    busy: bool,
    foreign_busy: bool,
    busy_since: SimTime,
    cur_tx: Option<(SimTime, SimTime)>,
    last_tx: Option<(SimTime, SimTime)>,
    locked: Option<usize>,
}

impl RadioState {
    fn transmitted_during(&self, start: SimTime, end: SimTime) -> bool {
        [self.cur_tx, self.last_tx]
            .into_iter()
            .flatten()
            .any(|(s, e)| s < end && start < e)
    }
}

#[derive(Debug, Clone)]
struct OnAir {
    txm: Transmission,
    generated_at: SimTime,
    end_event: EventHandle,
}

pub struct Simulation {
    scenario: Scenario,
    params: SimParams,
    q: EventQueue,
    n_nodes: usize,
    n_vehicles: usize,
    airtime_us: u64,
    // Row-major [tx vehicle][rx node].
    rx_mw: Vec<f64>,
    distance_m: Vec<f64>,
    sense_mw: Vec<f64>,
    decode_mw: Vec<f64>,
    noise_mw: f64,
    sinr_lin: f64,
    radios: Vec<RadioState>,
    monitors: Vec<CbrMonitor>,
    macs: Vec<Mac>,
    controllers: Vec<DccController>,
    rngs: Vec<ChaCha8Rng>,
    on_air: Vec<Option<OnAir>>,
    free_slots: Vec<usize>,
    next_frame: FrameId,
    metrics: MetricsStore,
    stats: SimStats,
    tx_log: Option<Vec<Transmission>>,
    cbr_log: Option<Vec<CbrSample>>,
    rsu_cbr: (f64, u64),
}

impl Simulation {
    pub fn new(scenario: Scenario, params: SimParams) -> Result<Self, DccError> {
        assert!(
            params.radio.sinr_threshold_db > 0.0,
            "single-lock reception requires a positive SINR threshold"
        );
        let nodes = &scenario.nodes;
        let n_nodes = nodes.len();
        let n_vehicles = scenario.vehicle_count();
        let radio = &params.radio;

        let mut rx_mw = vec![0.0; n_vehicles * n_nodes];
        let mut distance_m = vec![0.0; n_vehicles * n_nodes];
        for (i, tx) in nodes[..n_vehicles].iter().enumerate() {
            for (j, rx) in nodes.iter().enumerate() {
                if i != j {
                    rx_mw[i * n_nodes + j] = dbm_to_mw(radio.rx_power_dbm(tx, rx));
                    distance_m[i * n_nodes + j] = pair_distance(tx, rx);
                }
            }
        }
        let sense_mw = nodes
            .iter()
            .map(|n| dbm_to_mw(radio.sense_threshold_dbm(n)))
            .collect();
        let decode_mw = nodes
            .iter()
            .map(|n| dbm_to_mw(radio.decode_threshold_dbm(n)))
            .collect();

        let mut q = EventQueue::new();
        let mut setup = ChaCha8Rng::seed_from_u64(scenario.seed);
        setup.set_stream(SETUP_STREAM);

        let mut monitors = Vec::with_capacity(n_nodes);
        let mut controllers = Vec::with_capacity(n_vehicles);
        for node in nodes {
            let phase = setup.random_range(0..params.cbr_window_us);
            let m = CbrMonitor::new(node.id, params.cbr_window_us, phase);
            q.schedule(
                m.next_close(),
                Event::new(EventKind::CbrWindowClose, node.id),
            )
            .expect("setup schedules in the future");
            monitors.push(m);
            if node.is_vehicle() {
                let mut c = DccController::new(
                    node.id,
                    params.variant,
                    params.table.clone(),
                    params.alpha,
                    params.retrigger,
                    params.off_interval_ms,
                )?;
                let jitter = setup.random_range(0..c.setting_interval_us());
                c.start(SimTime::from_micros(jitter), &mut q);
                controllers.push(c);
            }
        }
        let macs = (0..n_vehicles)
            .map(|v| Mac::new(v, params.mac.clone()))
            .collect();
        let rngs = (0..n_vehicles)
            .map(|v| {
                let mut r = ChaCha8Rng::seed_from_u64(scenario.seed);
                r.set_stream(v as u64 + 1);
                r
            })
            .collect();

        let mut metrics = MetricsStore::new(&scenario, params.metrics.clone());
        if params.record_ledger {
            metrics.keep_dispositions();
        }
        Ok(Simulation {
            airtime_us: radio.airtime_us(params.payload_bytes + radio.frame_overhead_bytes),
            noise_mw: dbm_to_mw(radio.noise_floor_dbm),
            sinr_lin: dbm_to_mw(radio.sinr_threshold_db),
            tx_log: params.record_ledger.then(Vec::new),
            cbr_log: params.record_ledger.then(Vec::new),
            radios: vec![RadioState::default(); n_nodes],
            on_air: Vec::new(),
            free_slots: Vec::new(),
            next_frame: 0,
            stats: SimStats::default(),
            rsu_cbr: (0.0, 0),
            n_nodes,
            n_vehicles,
            rx_mw,
            distance_m,
            sense_mw,
            decode_mw,
            monitors,
            macs,
            controllers,
            rngs,
            metrics,
            q,
            scenario,
            params,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn now(&self) -> SimTime {
        self.q.now()
    }

    pub fn airtime_us(&self) -> u64 {
        self.airtime_us
    }

    /// Runs to the configured end time and returns the collected metrics.
    pub fn run(mut self) -> SimOutput {
        let end = self.params.metrics.end;
        self.run_until(end);
        self.metrics.finish();
        let rsu_mean_cbr = (self.rsu_cbr.1 > 0).then(|| self.rsu_cbr.0 / self.rsu_cbr.1 as f64);
        SimOutput {
            metrics: self.metrics,
            stats: self.stats,
            transmissions: self.tx_log,
            cbr_log: self.cbr_log,
            rsu_mean_cbr,
        }
    }

    pub fn run_until(&mut self, t_end: SimTime) {
        while let Some((t, ev)) = self.q.pop_until(t_end) {
            self.stats.events += 1;
            let node = ev.node.expect("all simulation events are per node");
            match ev.kind {
                EventKind::CamTimerFire => self.on_cam_timer(node, t),
                EventKind::TxStart => self.on_tx_start(node, t),
                EventKind::TxEnd { slot } => self.on_tx_end(slot, t),
                EventKind::CbrWindowClose => self.on_cbr_close(node, t),
            }
        }
        self.q.advance_to(t_end);
    }

    fn on_cam_timer(&mut self, v: NodeId, t: SimTime) {
        let rng = &mut self.rngs[v];
        if let Some(row) = self.controllers[v].on_timer_fire(t, &mut self.q, rng) {
            self.metrics.record_trace(row);
        }
        let frame = CamFrame {
            frame_id: self.next_frame,
            generated_at: t,
        };
        self.next_frame += 1;
        self.stats.generated += 1;
        let busy = self.radios[v].foreign_busy;
        let stale =
            self.macs[v].enqueue_cam(frame, t, busy, &mut self.q, |cw| rng.random_range(0..=cw));
        if let Some(stale) = stale {
            self.stats.queue_drops += 1;
            self.metrics.record_frame_settled(v, stale.generated_at);
        }
    }

    fn on_tx_start(&mut self, v: NodeId, t: SimTime) {
        // Frames ending at this instant finish first: intervals are half-open.
        let ending: Vec<usize> = self
            .on_air
            .iter()
            .enumerate()
            .filter_map(|(slot, a)| a.as_ref().filter(|a| a.txm.end == t).map(|_| slot))
            .collect();
        for slot in ending {
            let handle = self.on_air[slot].as_ref().unwrap().end_event;
            self.q.cancel(handle);
            self.on_tx_end(slot, t);
        }

        let frame = self.macs[v].start_transmission();
        let end = t + self.airtime_us;
        let txm = Transmission {
            frame_id: frame.frame_id,
            tx_node: v,
            start: t,
            end,
            tx_power_dbm: self.params.radio.tx_power_dbm,
            payload_bytes: self.params.payload_bytes,
        };
        let slot = self.free_slots.pop().unwrap_or_else(|| {
            self.on_air.push(None);
            self.on_air.len() - 1
        });
        let end_event = self
            .q
            .schedule(end, Event::new(EventKind::TxEnd { slot }, v))
            .expect("frame ends in the future");
        self.on_air[slot] = Some(OnAir {
            txm,
            generated_at: frame.generated_at,
            end_event,
        });
        if let Some(log) = self.tx_log.as_mut() {
            log.push(txm);
        }
        self.stats.transmissions += 1;
        self.metrics.record_tx_start(v, t);

        let r = &mut self.radios[v];
        r.transmitting = true;
        r.cur_tx = Some((t, end));
        r.locked = None;
        self.refresh(v, t);

        let row = v * self.n_nodes;
        for j in 0..self.n_nodes {
            if j == v {
                continue;
            }
            let p = self.rx_mw[row + j];
            let r = &mut self.radios[j];
            r.incident_mw += p;
            r.foreign_active += 1;
            if let Some(g) = r.locked {
                let g_tx = self.on_air[g].as_ref().unwrap().txm.tx_node;
                let s = self.rx_mw[g_tx * self.n_nodes + j];
                if s < self.sinr_lin * (self.noise_mw + r.incident_mw - s) {
                    r.locked = None;
                }
            }
            if r.locked.is_none()
                && !r.transmitting
                && p >= self.decode_mw[j]
                && p >= self.sinr_lin * (self.noise_mw + r.incident_mw - p)
            {
                r.locked = Some(slot);
            }
            self.refresh(j, t);
        }
    }

    fn on_tx_end(&mut self, slot: usize, t: SimTime) {
        let air = self.on_air[slot].take().expect("TxEnd for a live frame");
        self.free_slots.push(slot);
        let txm = air.txm;
        let v = txm.tx_node;

        let r = &mut self.radios[v];
        r.transmitting = false;
        r.last_tx = r.cur_tx.take();
        self.refresh(v, t);

        let row = v * self.n_nodes;
        for j in 0..self.n_nodes {
            if j == v {
                continue;
            }
            let p = self.rx_mw[row + j];
            let r = &mut self.radios[j];
            r.foreign_active -= 1;
            if r.foreign_active == 0 {
                r.incident_mw = 0.0;
            } else {
                r.incident_mw -= p;
            }
            let outcome = if r.locked == Some(slot) {
                r.locked = None;
                Outcome::Received
            } else if r.transmitted_during(txm.start, txm.end) {
                Outcome::LostHalfDuplex
            } else if p < self.decode_mw[j] {
                Outcome::LostBelowSensitivity
            } else {
                Outcome::LostCollision
            };
            self.metrics.record_disposition(
                Disposition {
                    frame_id: txm.frame_id,
                    tx_node: v,
                    rx_node: j,
                    distance_m: self.distance_m[row + j],
                    outcome,
                },
                air.generated_at,
                t,
            );
            self.refresh(j, t);
        }

        self.metrics.record_frame_settled(v, air.generated_at);
        let busy = self.radios[v].foreign_busy;
        let rng = &mut self.rngs[v];
        self.macs[v].on_tx_end(t, busy, &mut self.q, |cw| rng.random_range(0..=cw));
    }

    fn on_cbr_close(&mut self, node: NodeId, t: SimTime) {
        let r = &mut self.radios[node];
        let m = &mut self.monitors[node];
        if r.busy {
            m.record_busy(r.busy_since, t);
            r.busy_since = t;
        }
        let window_start = m.window_start();
        let cbr = m.close(t);
        if let Some(log) = self.cbr_log.as_mut() {
            log.push(CbrSample {
                node,
                window_start,
                window_end: t,
                cbr,
            });
        }
        self.q
            .schedule(m.next_close(), Event::new(EventKind::CbrWindowClose, node))
            .expect("next window closes in the future");
        if node >= self.n_vehicles {
            if t > self.params.metrics.warmup {
                self.rsu_cbr.0 += cbr;
                self.rsu_cbr.1 += 1;
            }
            return;
        }
        self.metrics.record_cbr(node, t, cbr);
        let rng = &mut self.rngs[node];
        let row = self.controllers[node]
            .on_cbr_notification(cbr, t, &mut self.q, rng)
            .expect("monitor CBR lies in [0, 1]");
        if let Some(row) = row {
            self.metrics.record_trace(row);
        }
    }

    /// Re-evaluates the busy predicates of `j` after its radio state changed.
    fn refresh(&mut self, j: NodeId, t: SimTime) {
        let r = &mut self.radios[j];
        let foreign_busy = r.foreign_active > 0 && r.incident_mw >= self.sense_mw[j];
        let busy = r.transmitting || foreign_busy;
        if busy != r.busy {
            if busy {
                r.busy_since = t;
            } else {
                self.monitors[j].record_busy(r.busy_since, t);
            }
            r.busy = busy;
        }
        if foreign_busy != r.foreign_busy {
            r.foreign_busy = foreign_busy;
            if j < self.n_vehicles {
                if foreign_busy {
                    let rng = &mut self.rngs[j];
                    self.macs[j].on_channel_busy(t, &mut self.q, |cw| rng.random_range(0..=cw));
                } else {
                    self.macs[j].on_channel_idle(t, &mut self.q);
                }
            }
        }
    }
}

/// Builds and runs a simulation in one call.
pub fn simulate(scenario: Scenario, params: SimParams) -> Result<SimOutput, DccError> {
    Ok(Simulation::new(scenario, params)?.run())
}
