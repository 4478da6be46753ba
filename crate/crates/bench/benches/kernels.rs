use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use logsig_core::density::{kde_density, mc_logsig_samples, Bandwidth, SampleSpec};
use logsig_core::fbm::sample_fbm_circulant;
use logsig_core::signature::{log_sig_pl_path, sig_pl_path};
use logsig_core::{GroupElement, HallBasis, PLPath};

fn zigzag(dim: usize, segments: usize) -> PLPath {
    let inc: Vec<Vec<f64>> = (0..segments)
        .map(|i| {
            (0..dim)
                .map(|c| ((i * (c + 3)) as f64 * 0.37).sin())
                .collect()
        })
        .collect();
    PLPath::from_increments(&inc).unwrap()
}

fn signatures(c: &mut Criterion) {
    let mut g = c.benchmark_group("signature");
    for (d, n) in [(2, 2), (2, 4), (3, 3)] {
        let path = zigzag(d, 256);
        g.bench_with_input(
            BenchmarkId::new("sig_256_segments", format!("d{d}_N{n}")),
            &path,
            |b, p| b.iter(|| sig_pl_path(black_box(p), n)),
        );
        let basis = HallBasis::shared(d, n).unwrap();
        g.bench_with_input(
            BenchmarkId::new("logsig_256_segments", format!("d{d}_N{n}")),
            &path,
            |b, p| b.iter(|| log_sig_pl_path(black_box(p), &basis).unwrap()),
        );
    }
    g.finish();
}

fn group_mul(c: &mut Criterion) {
    let basis = HallBasis::shared(3, 3).unwrap();
    let x = GroupElement::new(
        basis.clone(),
        (0..basis.len()).map(|i| (i as f64).cos()).collect(),
    )
    .unwrap();
    let y = GroupElement::new(
        basis.clone(),
        (0..basis.len()).map(|i| (i as f64).sin()).collect(),
    )
    .unwrap();
    c.bench_function("group_mul_d3_N3", |b| {
        b.iter(|| black_box(&x).mul(black_box(&y)).unwrap())
    });
}

fn fbm(c: &mut Criterion) {
    let mut g = c.benchmark_group("fbm_circulant_1000_paths");
    for h in [0.3, 0.5, 0.75] {
        g.bench_function(format!("H{h}"), |b| {
            b.iter(|| sample_fbm_circulant(256, 1.0, h, 2, 1000, 1).unwrap())
        });
    }
    g.finish();
}

fn density(c: &mut Criterion) {
    let spec = SampleSpec::new(0.5, 1.0, 2, 2, 20_000, 5);
    c.bench_function("mc_logsig_20000", |b| {
        b.iter(|| mc_logsig_samples(&spec).unwrap())
    });
    let set = mc_logsig_samples(&spec).unwrap();
    c.bench_function("kde_20000_at_origin", |b| {
        b.iter(|| kde_density(&set, black_box(&[0.0, 0.0, 0.0]), &Bandwidth::Auto).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = signatures, group_mul, fbm, density
}
criterion_main!(benches);
