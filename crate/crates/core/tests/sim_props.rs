//! The event-driven channel model against the brute-force reference
//! functions, on small random worlds with heavy contention and hidden nodes.

use std::collections::HashMap;

use dcc_core::engine::SimTime;
use dcc_core::metrics::MetricsConfig;
use dcc_core::phy::{busy_time_in, reception_outcome};
use dcc_core::{
    simulate, DccVariant, DensityClass, NodeSpec, OffsetMode, RoadConfig, Role, Scenario, SimParams,
};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct World {
    scenario: Scenario,
    params: SimParams,
}

fn world() -> impl Strategy<Value = World> {
    (
        prop::collection::vec((0.0f64..2_500.0, 0.0f64..20.0, -6.0f64..6.0), 2..7),
        prop::collection::vec((0.0f64..2_500.0, -6.0f64..6.0), 0..3),
        prop_oneof![Just(2.0), Just(3.0), Just(3.5)],
        1u64..15,
        0usize..5,
        any::<u64>(),
        any::<bool>(),
    )
        .prop_map(
            |(vehicles, rsus, exponent, off_ms, variant, seed, sense_only)| {
                let mut nodes: Vec<NodeSpec> = vehicles
                    .into_iter()
                    .map(|(x, y, off)| (Role::Vehicle, x, y, off))
                    .chain(rsus.into_iter().map(|(x, off)| (Role::Rsu, x, 9.0, off)))
                    .enumerate()
                    .map(|(id, (role, x_m, y_m, sensitivity_offset_db))| NodeSpec {
                        id,
                        role,
                        x_m,
                        y_m,
                        sensitivity_offset_db,
                    })
                    .collect();
                nodes.sort_by_key(|n| n.role != Role::Vehicle);
                for (id, n) in nodes.iter_mut().enumerate() {
                    n.id = id;
                }
                let mut params = SimParams {
                    variant: DccVariant::ALL[variant],
                    off_interval_ms: off_ms,
                    cbr_window_us: 10_000,
                    record_ledger: true,
                    metrics: MetricsConfig {
                        warmup: SimTime::ZERO,
                        end: SimTime::from_millis(250),
                        ..MetricsConfig::default()
                    },
                    ..SimParams::default()
                };
                params.radio.pathloss_exponent = exponent;
                if sense_only {
                    params.radio.offset_mode = OffsetMode::SenseOnly;
                }
                World {
                    scenario: Scenario {
                        road: RoadConfig::default(),
                        density: DensityClass::Sparse,
                        seed,
                        nodes,
                    },
                    params,
                }
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dispositions_match_reference_and_are_conserved(w in world()) {
        let nodes = w.scenario.nodes.clone();
        let radio = w.params.radio.clone();
        let end = w.params.metrics.end;
        let out = simulate(w.scenario, w.params).unwrap();
        let trace = out.transmissions.unwrap();
        let disp = out.metrics.dispositions().unwrap();

        let mut seen: HashMap<(u64, usize), usize> = HashMap::new();
        for d in disp {
            *seen.entry((d.frame_id, d.rx_node)).or_default() += 1;
            let txm = trace.iter().find(|t| t.frame_id == d.frame_id).unwrap();
            let expected = reception_outcome(txm, &nodes[d.rx_node], &trace, &nodes, &radio);
            prop_assert_eq!(d.outcome, expected, "frame {} -> node {}", d.frame_id, d.rx_node);
        }
        for txm in &trace {
            for rx in &nodes {
                let n = seen.get(&(txm.frame_id, rx.id)).copied().unwrap_or(0);
                let want = usize::from(rx.id != txm.tx_node && txm.end <= end);
                prop_assert_eq!(n, want, "frame {} at node {}", txm.frame_id, rx.id);
            }
        }
        let total: u64 = out.metrics.outcome_counts().iter().sum();
        prop_assert_eq!(total as usize, disp.len());
        for b in out.metrics.pdr_by_distance() {
            prop_assert!((0.0..=1.0).contains(&b.pdr));
        }
    }

    #[test]
    fn cbr_windows_match_reference_busy_time(w in world()) {
        let nodes = w.scenario.nodes.clone();
        let radio = w.params.radio.clone();
        let window = w.params.cbr_window_us;
        let out = simulate(w.scenario, w.params).unwrap();
        let trace = out.transmissions.unwrap();
        let log = out.cbr_log.unwrap();
        prop_assert!(!log.is_empty());
        for s in log {
            prop_assert!((0.0..=1.0).contains(&s.cbr));
            let busy = busy_time_in(&nodes[s.node], s.window_start, s.window_end, &trace, &nodes, &radio);
            let expected = busy as f64 / window as f64;
            prop_assert!((s.cbr - expected).abs() < 1e-12, "node {} window {}: {} vs {}", s.node, s.window_start, s.cbr, expected);
        }
    }

    #[test]
    fn runs_are_deterministic(w in world()) {
        let a = simulate(w.scenario.clone(), w.params.clone()).unwrap();
        let b = simulate(w.scenario, w.params).unwrap();
        prop_assert_eq!(a.transmissions, b.transmissions);
        prop_assert_eq!(a.metrics.dispositions(), b.metrics.dispositions());
        prop_assert_eq!(a.stats, b.stats);
    }
}

/// A fixed crowded world with hidden nodes exercises every outcome kind.
#[test]
fn crowded_world_hits_every_outcome() {
    let xs = [0.0, 5.0, 60.0, 110.0, 170.0, 230.0, 400.0, 900.0];
    let nodes: Vec<NodeSpec> = xs
        .iter()
        .enumerate()
        .map(|(id, &x_m)| NodeSpec {
            id,
            role: Role::Vehicle,
            x_m,
            y_m: 0.0,
            sensitivity_offset_db: 0.0,
        })
        .collect();
    let mut params = SimParams {
        off_interval_ms: 2,
        record_ledger: true,
        metrics: MetricsConfig {
            warmup: SimTime::ZERO,
            end: SimTime::from_millis(500),
            ..MetricsConfig::default()
        },
        ..SimParams::default()
    };
    params.radio.pathloss_exponent = 3.5;
    let radio = params.radio.clone();
    let scenario = Scenario {
        road: RoadConfig::default(),
        density: DensityClass::Sparse,
        seed: 3,
        nodes: nodes.clone(),
    };
    let out = simulate(scenario, params).unwrap();
    let counts = out.metrics.outcome_counts();
    assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
    let trace = out.transmissions.unwrap();
    for d in out.metrics.dispositions().unwrap() {
        let txm = trace.iter().find(|t| t.frame_id == d.frame_id).unwrap();
        assert_eq!(
            d.outcome,
            reception_outcome(txm, &nodes[d.rx_node], &trace, &nodes, &radio)
        );
    }
}
