//! Run metrics: PDR and PIR by distance, 20 ms transmission/CBR bins and
//! Jain's fairness index over per-vehicle transmission counts.
//!
//! Only activity after the warm-up period counts. A frame enters the PDR
//! denominator when its fate is settled (transmission finished or displaced
//! from the queue) and it was generated after warm-up.

use serde::{Deserialize, Serialize};

use crate::dcc::TraceRow;
use crate::engine::SimTime;
use crate::phy::{FrameId, Outcome};
use crate::scenario::{pair_distance, NodeId, Role, Scenario};

const NO_RECEPTION: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub warmup: SimTime,
    pub end: SimTime,
    pub bin_us: u64,
    pub dist_bin_m: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            warmup: SimTime::from_secs(2),
            end: SimTime::from_secs(10),
            bin_us: 20_000,
            dist_bin_m: 40.0,
        }
    }
}

impl MetricsConfig {
    /// Bin `k` covers `[k*w - w/2, k*w + w/2)`.
    pub fn distance_bin(&self, d_m: f64) -> usize {
        ((d_m + self.dist_bin_m / 2.0) / self.dist_bin_m).floor() as usize
    }

    pub fn bin_center_m(&self, bin: usize) -> f64 {
        bin as f64 * self.dist_bin_m
    }

    fn time_bins(&self) -> usize {
        (self.end.since(self.warmup)).div_ceil(self.bin_us) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disposition {
    pub frame_id: FrameId,
    pub tx_node: NodeId,
    pub rx_node: NodeId,
    pub distance_m: f64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdrBin {
    pub bin_center_m: f64,
    pub generated: u64,
    pub received: u64,
    pub pdr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PirBin {
    pub bin_center_m: f64,
    pub samples: u64,
    pub mean_pir_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeBin {
    pub bin_start: SimTime,
    pub tx_count: u64,
    pub mean_cbr: f64,
}

/// `(sum x)^2 / (n * sum x^2)`; `None` when the input is empty or all zero.
pub fn jain_index(counts: &[f64]) -> Option<f64> {
    let sum: f64 = counts.iter().sum();
    let sum_sq: f64 = counts.iter().map(|x| x * x).sum();
    if counts.is_empty() || sum_sq == 0.0 {
        return None;
    }
    Some(sum * sum / (counts.len() as f64 * sum_sq))
}

fn role_index(role: Role) -> usize {
    match role {
        Role::Vehicle => 0,
        Role::Rsu => 1,
    }
}

#[derive(Debug, Clone)]
pub struct MetricsStore {
    cfg: MetricsConfig,
    n_vehicles: usize,
    n_nodes: usize,
    roles: Vec<Role>,
    // Row-major [tx vehicle][rx node] distance bin; usize::MAX on the diagonal.
    pair_bin: Vec<usize>,
    dist_bins: usize,
    // [tx vehicle][bin][rx role] receiver counts.
    receivers_in_bin: Vec<[u64; 2]>,

    generated: Vec<u64>,
    received: Vec<[u64; 2]>,

    last_rx: Vec<u64>,
    pir_sum_us: Vec<u128>,
    pir_samples: Vec<u64>,

    tx_bins: Vec<u64>,
    tx_per_vehicle: Vec<u64>,

    latest_cbr: Vec<f64>,
    cbr_sum: f64,
    cbr_since: SimTime,
    cbr_integral: Vec<f64>,

    outcome_counts: [u64; 4],
    dispositions: Option<Vec<Disposition>>,
    trace: Vec<TraceRow>,
    finished: bool,
}

impl MetricsStore {
    pub fn new(scenario: &Scenario, cfg: MetricsConfig) -> Self {
        let nodes = &scenario.nodes;
        let n_nodes = nodes.len();
        let n_vehicles = scenario.vehicle_count();
        debug_assert!(nodes[..n_vehicles].iter().all(|n| n.is_vehicle()));

        let mut pair_bin = vec![usize::MAX; n_vehicles * n_nodes];
        let mut dist_bins = 0;
        for (i, tx) in nodes[..n_vehicles].iter().enumerate() {
            for (j, rx) in nodes.iter().enumerate() {
                if i != j {
                    let b = cfg.distance_bin(pair_distance(tx, rx));
                    pair_bin[i * n_nodes + j] = b;
                    dist_bins = dist_bins.max(b + 1);
                }
            }
        }
        let mut receivers_in_bin = vec![[0u64; 2]; n_vehicles * dist_bins];
        for i in 0..n_vehicles {
            for (j, rx) in nodes.iter().enumerate() {
                let b = pair_bin[i * n_nodes + j];
                if b != usize::MAX {
                    receivers_in_bin[i * dist_bins + b][role_index(rx.role)] += 1;
                }
            }
        }
        let time_bins = cfg.time_bins();
        MetricsStore {
            n_vehicles,
            n_nodes,
            roles: nodes.iter().map(|n| n.role).collect(),
            pair_bin,
            dist_bins,
            receivers_in_bin,
            generated: vec![0; n_vehicles],
            received: vec![[0; 2]; dist_bins],
            last_rx: vec![NO_RECEPTION; n_vehicles * n_nodes],
            pir_sum_us: vec![0; dist_bins],
            pir_samples: vec![0; dist_bins],
            tx_bins: vec![0; time_bins],
            tx_per_vehicle: vec![0; n_vehicles],
            latest_cbr: vec![0.0; n_vehicles],
            cbr_sum: 0.0,
            cbr_since: SimTime::ZERO,
            cbr_integral: vec![0.0; time_bins],
            outcome_counts: [0; 4],
            dispositions: None,
            trace: Vec::new(),
            finished: false,
            cfg,
        }
    }

    pub fn config(&self) -> &MetricsConfig {
        &self.cfg
    }

    /// Keeps every individual disposition (memory grows with frames x nodes).
    pub fn keep_dispositions(&mut self) {
        self.dispositions.get_or_insert_with(Vec::new);
    }

    fn counts(&self, t: SimTime) -> bool {
        t >= self.cfg.warmup && t < self.cfg.end
    }

    /// A frame's fate is settled: it finished transmission or was displaced.
    pub fn record_frame_settled(&mut self, tx: NodeId, generated_at: SimTime) {
        if self.counts(generated_at) {
            self.generated[tx] += 1;
        }
    }

    pub fn record_tx_start(&mut self, tx: NodeId, t: SimTime) {
        if self.counts(t) {
            self.tx_bins[(t.since(self.cfg.warmup) / self.cfg.bin_us) as usize] += 1;
            self.tx_per_vehicle[tx] += 1;
        }
    }

    pub fn record_disposition(
        &mut self,
        d: Disposition,
        generated_at: SimTime,
        received_at: SimTime,
    ) {
        self.outcome_counts[d.outcome.index()] += 1;
        if let Some(all) = self.dispositions.as_mut() {
            all.push(d);
        }
        if d.outcome != Outcome::Received {
            return;
        }
        let pair = d.tx_node * self.n_nodes + d.rx_node;
        let bin = self.pair_bin[pair];
        if self.counts(generated_at) {
            self.received[bin][role_index(self.roles[d.rx_node])] += 1;
        }
        if self.counts(received_at) {
            let prev = self.last_rx[pair];
            if prev != NO_RECEPTION && prev >= self.cfg.warmup.micros() {
                self.pir_sum_us[bin] += u128::from(received_at.micros() - prev);
                self.pir_samples[bin] += 1;
            }
        }
        self.last_rx[pair] = received_at.micros();
    }

    /// A vehicle's CBR monitor produced a new value at `t`.
    pub fn record_cbr(&mut self, vehicle: NodeId, t: SimTime, cbr: f64) {
        if vehicle >= self.n_vehicles {
            return;
        }
        self.integrate_cbr_to(t);
        self.cbr_sum += cbr - self.latest_cbr[vehicle];
        self.latest_cbr[vehicle] = cbr;
    }

    pub fn record_trace(&mut self, row: TraceRow) {
        self.trace.push(row);
    }

    fn integrate_cbr_to(&mut self, t: SimTime) {
        let from = self.cbr_since.max(self.cfg.warmup);
        let to = t.min(self.cfg.end);
        let mut cursor = from;
        while cursor < to {
            let k = (cursor.since(self.cfg.warmup) / self.cfg.bin_us) as usize;
            let bin_end = self.cfg.warmup + (k as u64 + 1) * self.cfg.bin_us;
            let seg_end = bin_end.min(to);
            self.cbr_integral[k] += self.cbr_sum * (seg_end - cursor) as f64;
            cursor = seg_end;
        }
        self.cbr_since = self.cbr_since.max(t);
    }

    /// Closes the CBR integral at the end of the run.
    pub fn finish(&mut self) {
        if !self.finished {
            self.integrate_cbr_to(self.cfg.end);
            self.finished = true;
        }
    }

    pub fn outcome_counts(&self) -> [u64; 4] {
        self.outcome_counts
    }

    pub fn dispositions(&self) -> Option<&[Disposition]> {
        self.dispositions.as_deref()
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn tx_per_vehicle(&self) -> &[u64] {
        &self.tx_per_vehicle
    }

    pub fn total_generated(&self) -> u64 {
        self.generated.iter().sum()
    }

    fn generated_toward(&self, bin: usize, role: Option<usize>) -> u64 {
        (0..self.n_vehicles)
            .map(|i| {
                let counts = self.receivers_in_bin[i * self.dist_bins + bin];
                let receivers = match role {
                    Some(r) => counts[r],
                    None => counts[0] + counts[1],
                };
                self.generated[i] * receivers
            })
            .sum()
    }

    fn pdr_rows(&self, role: Option<usize>) -> Vec<PdrBin> {
        (0..self.dist_bins)
            .filter_map(|b| {
                let generated = self.generated_toward(b, role);
                let received = match role {
                    Some(r) => self.received[b][r],
                    None => self.received[b][0] + self.received[b][1],
                };
                (generated > 0).then(|| PdrBin {
                    bin_center_m: self.cfg.bin_center_m(b),
                    generated,
                    received,
                    pdr: received as f64 / generated as f64,
                })
            })
            .collect()
    }

    /// Received over generated, pooled over vehicle and RSU receivers.
    pub fn pdr_by_distance(&self) -> Vec<PdrBin> {
        self.pdr_rows(None)
    }

    pub fn pdr_by_distance_for(&self, role: Role) -> Vec<PdrBin> {
        self.pdr_rows(Some(role_index(role)))
    }

    /// Mean gap between consecutive receptions of a tx-rx pair, by distance.
    pub fn pir_stats(&self) -> Vec<PirBin> {
        (0..self.dist_bins)
            .filter(|&b| self.pir_samples[b] > 0)
            .map(|b| PirBin {
                bin_center_m: self.cfg.bin_center_m(b),
                samples: self.pir_samples[b],
                mean_pir_s: self.pir_sum_us[b] as f64 / self.pir_samples[b] as f64 / 1e6,
            })
            .collect()
    }

    pub fn tx_and_cbr_bins(&self) -> Vec<TimeBin> {
        let n = self.n_vehicles.max(1) as f64;
        (0..self.tx_bins.len())
            .map(|k| {
                let start = self.cfg.warmup + k as u64 * self.cfg.bin_us;
                let len = (start + self.cfg.bin_us).min(self.cfg.end) - start;
                TimeBin {
                    bin_start: start,
                    tx_count: self.tx_bins[k],
                    mean_cbr: self.cbr_integral[k] / (len as f64 * n),
                }
            })
            .collect()
    }

    /// Jain's index over post-warm-up transmission counts of every vehicle.
    pub fn fairness(&self) -> (usize, Option<f64>) {
        let counts: Vec<f64> = self.tx_per_vehicle.iter().map(|&c| c as f64).collect();
        (self.n_vehicles, jain_index(&counts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::NodeSpec;
    use crate::RoadConfig;
    use approx::assert_abs_diff_eq;

    fn at(id: NodeId, role: Role, x: f64) -> NodeSpec {
        NodeSpec {
            id,
            role,
            x_m: x,
            y_m: 0.0,
            sensitivity_offset_db: 0.0,
        }
    }

    fn world(nodes: Vec<NodeSpec>) -> Scenario {
        Scenario {
            road: RoadConfig::default(),
            density: crate::DensityClass::Sparse,
            seed: 0,
            nodes,
        }
    }

    fn cfg() -> MetricsConfig {
        MetricsConfig {
            warmup: SimTime::ZERO,
            end: SimTime::from_secs(2),
            ..MetricsConfig::default()
        }
    }

    fn pair_store() -> MetricsStore {
        MetricsStore::new(
            &world(vec![at(0, Role::Vehicle, 0.0), at(1, Role::Vehicle, 50.0)]),
            cfg(),
        )
    }

    fn rx(s: &mut MetricsStore, frame: FrameId, t_ms: u64, outcome: Outcome) {
        let t = SimTime::from_millis(t_ms);
        s.record_frame_settled(0, t);
        s.record_disposition(
            Disposition {
                frame_id: frame,
                tx_node: 0,
                rx_node: 1,
                distance_m: 50.0,
                outcome,
            },
            t,
            t,
        );
    }

    #[test]
    fn distance_bins() {
        let c = MetricsConfig::default();
        assert_eq!(c.distance_bin(0.0), 0);
        assert_eq!(c.distance_bin(19.9), 0);
        assert_eq!(c.distance_bin(20.0), 1);
        assert_eq!(c.distance_bin(100.0), 3);
        assert_eq!(c.bin_center_m(5), 200.0);
    }

    #[test]
    fn lossless_pair_pdr_is_one() {
        let mut s = pair_store();
        for k in 0..10 {
            rx(&mut s, k, 100 * k, Outcome::Received);
        }
        let p = s.pdr_by_distance();
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].bin_center_m, p[0].pdr), (40.0, 1.0));
    }

    #[test]
    fn out_of_range_pdr_is_zero() {
        let mut s = pair_store();
        for k in 0..10 {
            rx(&mut s, k, 100 * k, Outcome::LostBelowSensitivity);
        }
        assert_eq!(s.pdr_by_distance()[0].pdr, 0.0);
        assert!(s.pir_stats().is_empty());
    }

    #[test]
    fn queue_drops_count_in_denominator() {
        let mut s = pair_store();
        for k in 0..7 {
            rx(&mut s, k, 100 * k, Outcome::Received);
        }
        for k in 7..10 {
            s.record_frame_settled(0, SimTime::from_millis(100 * k));
        }
        let p = &s.pdr_by_distance()[0];
        assert_eq!((p.generated, p.received), (10, 7));
        assert_abs_diff_eq!(p.pdr, 0.7);
    }

    #[test]
    fn pir_examples() {
        let mut s = pair_store();
        rx(&mut s, 0, 100, Outcome::Received);
        rx(&mut s, 1, 300, Outcome::Received);
        let p = s.pir_stats();
        assert_eq!(p[0].samples, 1);
        assert_abs_diff_eq!(p[0].mean_pir_s, 0.2);

        let mut s = pair_store();
        for k in 0..20 {
            rx(&mut s, k, 100 * k, Outcome::Received);
        }
        assert_abs_diff_eq!(s.pir_stats()[0].mean_pir_s, 0.1, epsilon = 1e-12);

        let mut s = pair_store();
        for k in 0..20 {
            let o = if k % 2 == 0 {
                Outcome::Received
            } else {
                Outcome::LostCollision
            };
            rx(&mut s, k, 100 * k, o);
        }
        assert_abs_diff_eq!(s.pir_stats()[0].mean_pir_s, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn pdr_split_by_receiver_role() {
        let mut s = MetricsStore::new(
            &world(vec![at(0, Role::Vehicle, 0.0), at(1, Role::Rsu, 10.0)]),
            cfg(),
        );
        let t = SimTime::from_millis(5);
        s.record_frame_settled(0, t);
        s.record_disposition(
            Disposition {
                frame_id: 0,
                tx_node: 0,
                rx_node: 1,
                distance_m: 10.0,
                outcome: Outcome::Received,
            },
            t,
            t,
        );
        assert_eq!(s.pdr_by_distance_for(Role::Rsu)[0].pdr, 1.0);
        assert!(s.pdr_by_distance_for(Role::Vehicle).is_empty());
    }

    #[test]
    fn silent_network_bins() {
        let mut s = pair_store();
        s.finish();
        let bins = s.tx_and_cbr_bins();
        assert_eq!(bins.len(), 100);
        assert!(bins.iter().all(|b| b.tx_count == 0 && b.mean_cbr == 0.0));
    }

    #[test]
    fn one_node_at_half_cbr() {
        let nodes = (0..4)
            .map(|i| at(i, Role::Vehicle, i as f64 * 10.0))
            .collect();
        let mut s = MetricsStore::new(&world(nodes), cfg());
        s.record_cbr(2, SimTime::ZERO, 0.5);
        s.finish();
        for b in s.tx_and_cbr_bins() {
            assert_abs_diff_eq!(b.mean_cbr, 0.5 / 4.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn cbr_is_time_weighted_within_a_bin() {
        let mut s = pair_store();
        s.record_cbr(0, SimTime::from_millis(10), 1.0);
        s.finish();
        let bins = s.tx_and_cbr_bins();
        assert_abs_diff_eq!(bins[0].mean_cbr, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(bins[1].mean_cbr, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn warmup_excluded() {
        let mut s = MetricsStore::new(
            &world(vec![at(0, Role::Vehicle, 0.0), at(1, Role::Vehicle, 50.0)]),
            MetricsConfig {
                warmup: SimTime::from_secs(1),
                end: SimTime::from_secs(2),
                ..MetricsConfig::default()
            },
        );
        s.record_tx_start(0, SimTime::from_millis(999));
        s.record_tx_start(0, SimTime::from_millis(1000));
        s.record_tx_start(0, SimTime::from_millis(1999));
        assert_eq!(s.tx_per_vehicle(), &[2, 0]);
        let bins = s.tx_and_cbr_bins();
        assert_eq!(bins.len(), 50);
        assert_eq!(bins[0].bin_start, SimTime::from_secs(1));
        assert_eq!(bins.iter().map(|b| b.tx_count).sum::<u64>(), 2);
    }

    #[test]
    fn jain_examples() {
        assert_eq!(jain_index(&[5.0, 5.0, 5.0]), Some(1.0));
        assert_eq!(jain_index(&[1.0, 0.0]), Some(0.5));
        assert_eq!(jain_index(&[0.0, 0.0]), None);
        assert_eq!(jain_index(&[]), None);
    }
}
