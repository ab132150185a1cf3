use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use defect_bands::{exec, full_spectrum, membership, models, SweepGrids};

fn modes() -> [(&'static str, bool); 2] {
    [("sequential", false), ("parallel", true)]
}

fn spectrum_sweep(c: &mut Criterion) {
    let spec = models::square_with_line_defect(1.0);
    let grids = SweepGrids {
        k_points: 32,
        ..SweepGrids::default()
    };
    let mut group = c.benchmark_group("full_spectrum/square_line_defect");
    group.sample_size(10);
    for (name, parallel) in modes() {
        group.bench_function(name, |b| {
            exec::set_parallel(parallel);
            b.iter(|| full_spectrum(black_box(&spec), &grids).unwrap())
        });
    }
    group.finish();
}

fn membership_sweep(c: &mut Criterion) {
    let spec = models::chain_with_point_defect(1.0);
    let grids = SweepGrids::default();
    let probes: Vec<f64> = (0..40)
        .map(|i| -4.0 + 8.0 * (i as f64 + 0.5) / 40.0)
        .collect();
    let mut group = c.benchmark_group("membership/chain_point_defect");
    for (name, parallel) in modes() {
        group.bench_function(name, |b| {
            exec::set_parallel(parallel);
            b.iter(|| {
                probes
                    .iter()
                    .map(|&l| membership(black_box(&spec), l, &grids).unwrap().in_spectrum)
                    .filter(|x| *x)
                    .count()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, spectrum_sweep, membership_sweep);
criterion_main!(benches);
