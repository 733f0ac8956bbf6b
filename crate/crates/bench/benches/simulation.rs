use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use dcc_bench::short_run;
use dcc_core::experiment;
use dcc_core::{DccVariant, DensityClass, Event, EventKind, EventQueue, SimTime};

fn event_queue(c: &mut Criterion) {
    let n = 100_000u64;
    let mut g = c.benchmark_group("event_queue");
    g.throughput(Throughput::Elements(n));
    g.bench_function("schedule_cancel_pop", |b| {
        b.iter(|| {
            let mut q = EventQueue::new();
            let mut handles = Vec::with_capacity(n as usize);
            for k in 0..n {
                let at = SimTime::from_micros(k.wrapping_mul(2_654_435_761) % 1_000_000);
                handles.push(
                    q.schedule(at, Event::new(EventKind::CamTimerFire, k as usize))
                        .unwrap(),
                );
            }
            for h in handles.iter().step_by(3) {
                q.cancel(*h);
            }
            let mut popped = 0;
            while q.pop_until(SimTime::from_micros(u64::MAX)).is_some() {
                popped += 1;
            }
            black_box(popped)
        })
    });
    g.finish();
}

fn full_runs(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate_3s");
    g.sample_size(10);
    for density in [DensityClass::Sparse, DensityClass::Dense] {
        for variant in [DccVariant::Off, DccVariant::reactive(4)] {
            let cfg = short_run(variant, density, 3.0);
            g.bench_with_input(
                BenchmarkId::new(variant.to_string(), density),
                &cfg,
                |b, cfg| b.iter(|| experiment::execute(black_box(cfg)).unwrap().stats),
            );
        }
    }
    g.finish();
}

criterion_group!(benches, event_queue, full_runs);
criterion_main!(benches);
