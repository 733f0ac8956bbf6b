use dcc_core::dcc::{ChannelLoad, DccController, DccTable, DccVariant, Retrigger};
use dcc_core::engine::{EventQueue, SimTime};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LOWER: [f64; 7] = [0.0, 0.19, 0.27, 0.35, 0.43, 0.51, 0.59];
const T_OFF: [u64; 7] = [60, 100, 180, 260, 340, 420, 460];

fn oracle_interval(cl: f64) -> u64 {
    let mut t = T_OFF[0];
    for (lo, off) in LOWER.iter().zip(T_OFF) {
        if cl >= *lo {
            t = off;
        }
    }
    t
}

struct Drive {
    q: EventQueue,
    ctrl: DccController,
    rng: ChaCha8Rng,
    fires: Vec<SimTime>,
}

impl Drive {
    fn new(variant: DccVariant, alpha: f64, retrigger: Retrigger, seed: u64) -> Self {
        let mut q = EventQueue::new();
        let mut ctrl =
            DccController::new(0, variant, DccTable::default(), alpha, retrigger, 100).unwrap();
        ctrl.start(SimTime::from_millis(7), &mut q);
        Drive {
            q,
            ctrl,
            rng: ChaCha8Rng::seed_from_u64(seed),
            fires: Vec::new(),
        }
    }

    fn run_to(&mut self, t: SimTime) {
        while let Some((now, _)) = self.q.pop_until(t) {
            self.fires.push(now);
            self.ctrl.on_timer_fire(now, &mut self.q, &mut self.rng);
        }
        self.q.advance_to(t);
    }

    fn gaps_us(&self) -> Vec<u64> {
        self.fires.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

fn cbr_seq() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![0.0f64..=1.0, Just(0.0), Just(1.0), Just(0.59)],
        1..60,
    )
}

proptest! {
    #[test]
    fn wait_and_go_never_moves_a_pending_timer(
        cbrs in cbr_seq(),
        alpha in 0.0f64..=1.0,
        sync in any::<bool>(),
        every in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let variant = DccVariant::reactive(if sync { 1 } else { 3 });
        let retrigger = if every { Retrigger::EveryNotification } else { Retrigger::OnChange };
        let mut d = Drive::new(variant, alpha, retrigger, seed);
        for (k, cbr) in cbrs.into_iter().enumerate() {
            let t = SimTime::from_millis(100 * k as u64 + 33);
            d.run_to(t);
            let before = (d.ctrl.pending_handle(), d.ctrl.pending_fire_time());
            d.ctrl.on_cbr_notification(cbr, t, &mut d.q, &mut d.rng).unwrap();
            prop_assert_eq!((d.ctrl.pending_handle(), d.ctrl.pending_fire_time()), before);
            prop_assert!(d.q.is_live(before.0.unwrap()));
        }
    }

    #[test]
    fn cancel_and_go_leaves_exactly_one_timer(
        cbrs in cbr_seq(),
        alpha in 0.0f64..=1.0,
        sync in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let variant = DccVariant::reactive(if sync { 2 } else { 4 });
        let mut d = Drive::new(variant, alpha, Retrigger::OnChange, seed);
        for (k, cbr) in cbrs.into_iter().enumerate() {
            let t = SimTime::from_millis(100 * k as u64 + 33);
            d.run_to(t);
            let old = d.ctrl.pending_handle().unwrap();
            let setting = d.ctrl.setting_interval_us();
            d.ctrl.on_cbr_notification(cbr, t, &mut d.q, &mut d.rng).unwrap();
            if d.ctrl.setting_interval_us() != setting {
                prop_assert!(!d.q.is_live(old));
                prop_assert!(d.q.is_live(d.ctrl.pending_handle().unwrap()));
            } else {
                prop_assert_eq!(d.ctrl.pending_handle(), Some(old));
            }
            prop_assert_eq!(d.q.len(), 1);
        }
    }

    /// Wait-and-Go & Unsynchronized: every realized gap is a draw from some
    /// [0, T_off] or a table value, hence at most 460 ms.
    #[test]
    fn unsynchronized_gaps_stay_within_the_largest_interval(
        cbrs in cbr_seq(),
        alpha in 0.0f64..=1.0,
        every in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let retrigger = if every { Retrigger::EveryNotification } else { Retrigger::OnChange };
        let mut d = Drive::new(DccVariant::reactive(3), alpha, retrigger, seed);
        let n = cbrs.len() as u64;
        for (k, cbr) in cbrs.into_iter().enumerate() {
            let t = SimTime::from_millis(100 * k as u64 + 33);
            d.run_to(t);
            d.ctrl.on_cbr_notification(cbr, t, &mut d.q, &mut d.rng).unwrap();
        }
        d.run_to(SimTime::from_millis(100 * n + 1_000));
        prop_assert!(d.gaps_us().iter().all(|&g| g <= 460_000), "{:?}", d.gaps_us());
    }

    /// Wait-and-Go & Synchronized gaps are always table values.
    #[test]
    fn synchronized_wait_gaps_are_table_values(cbrs in cbr_seq(), alpha in 0.0f64..=1.0) {
        let mut d = Drive::new(DccVariant::reactive(1), alpha, Retrigger::OnChange, 0);
        for (k, cbr) in cbrs.into_iter().enumerate() {
            let t = SimTime::from_millis(100 * k as u64 + 33);
            d.run_to(t);
            d.ctrl.on_cbr_notification(cbr, t, &mut d.q, &mut d.rng).unwrap();
        }
        for g in d.gaps_us() {
            prop_assert!(T_OFF.iter().any(|&t| t * 1_000 == g), "gap {}", g);
        }
    }

    #[test]
    fn channel_load_converges_geometrically(
        alpha in 0.0f64..=1.0,
        cl0 in 0.0f64..=1.0,
        c in 0.0f64..=1.0,
        n in 1usize..80,
    ) {
        let mut load = ChannelLoad::with_initial(alpha, cl0).unwrap();
        for k in 1..=n {
            let cl = load.update(c).unwrap();
            let bound = (1.0 - alpha).powi(k as i32) * (cl0 - c).abs();
            prop_assert!((cl - c).abs() <= bound + 1e-12);
            prop_assert!((0.0..=1.0).contains(&cl));
        }
    }

    #[test]
    fn alpha_one_tracks_cbr_exactly(cbrs in prop::collection::vec(0.0f64..=1.0, 1..50)) {
        let mut load = ChannelLoad::new(1.0).unwrap();
        for c in cbrs {
            prop_assert_eq!(load.update(c).unwrap(), c);
        }
    }
}

#[test]
fn table_partitions_the_unit_interval() {
    let table = DccTable::default();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..1_000_000 {
        let cl: f64 = rng.random_range(0.0..=1.0);
        assert_eq!(
            table.lookup_interval_ms(cl),
            oracle_interval(cl),
            "cl = {cl}"
        );
    }
    for (i, lo) in LOWER.iter().enumerate() {
        assert_eq!(table.lookup_interval_ms(*lo), T_OFF[i]);
        if i > 0 {
            assert_eq!(table.lookup_interval_ms(lo - 1e-9), T_OFF[i - 1]);
        }
    }
    assert_eq!(table.lookup_interval_ms(1.0), 460);
}

#[test]
fn cancel_and_go_can_stretch_a_gap_beyond_the_setting() {
    // Reactive-2: generation at 7 ms, next due at 67 ms. A notification at
    // 50 ms moves the setting to 460 ms and reschedules to 510 ms, so the
    // realized gap (503 ms) exceeds the new setting.
    let mut d = Drive::new(DccVariant::reactive(2), 1.0, Retrigger::OnChange, 0);
    d.run_to(SimTime::from_millis(50));
    d.ctrl
        .on_cbr_notification(0.9, SimTime::from_millis(50), &mut d.q, &mut d.rng)
        .unwrap();
    d.run_to(SimTime::from_millis(600));
    let gaps = d.gaps_us();
    assert_eq!(gaps, vec![503_000]);
    assert!(gaps[0] > d.ctrl.setting_interval_us());
}
