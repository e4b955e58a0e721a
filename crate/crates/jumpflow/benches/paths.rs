//! Parallel batch core against a plain sequential loop over the same paths.
//!
//! Both sides compute `max_i max_t ‖J K − I‖` on the sine system; the
//! sequential side is what the build without the `parallel` feature runs.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use jumpflow::coeffs::families::sine;
use jumpflow::flow::{max_inverse_defect, DefectObserver, SimConfig, Simulator};
use jumpflow::levy::LevyModel;
use jumpflow::Vector;
use std::hint::black_box;

fn sequential(sim: &Simulator<'_, 1>, x0: &Vector<1>, n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let mut obs = DefectObserver::default();
        sim.path(x0, i as u64, &mut obs).unwrap();
        worst = worst.max(obs.max_defect);
    }
    worst
}

fn batch(c: &mut Criterion) {
    let sys = sine(0.4, 0.5);
    let m = LevyModel::<1>::smooth(1.0, 1.0).unwrap().with_trunc_low(0.02).unwrap();
    let x0 = Vector::<1>::new(0.8);
    let mut group = c.benchmark_group("inverse_defect_batch");
    group.sample_size(10);
    for n in [256usize, 2048] {
        let cfg = SimConfig::new(1.0, n, 1);
        let sim = Simulator::new(&sys, &m, &cfg).unwrap();
        assert_eq!(max_inverse_defect(&sys, &m, &cfg, &x0).unwrap(), sequential(&sim, &x0, n));
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, _| {
            b.iter(|| black_box(max_inverse_defect(&sys, &m, &cfg, &x0).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, _| {
            b.iter(|| black_box(sequential(&sim, &x0, n)))
        });
    }
    group.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
