use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use hrgsdp::cluster::{dissimilarity, ward_cluster};
use hrgsdp::glcm::{build_glcm, quantile_bins, GlcmOptions, GrayImage};
use hrgsdp::pipeline::{cohort_from_matrices, RunConfig};
use hrgsdp::sampler::Sampler;
use hrgsdp::sim::generate_cohort;
use nalgebra::DMatrix;

fn sweep(c: &mut Criterion) {
    let cfg = RunConfig::default();
    let mut sim = cfg.sim.clone();
    sim.subjects_per_class = 10;
    let cohort = generate_cohort(&sim).unwrap();
    let ids = (0..cohort.matrices.len()).map(|t| t.to_string()).collect();
    let loaded = cohort_from_matrices(ids, cohort.matrices, None, None, cfg.lattice, cfg.intercept).unwrap();
    let hp = cfg.hyperparams(loaded.subjects[0].x.len());
    c.bench_function("gibbs_sweep_t50_n256", |b| {
        b.iter_batched(
            || Sampler::new(&loaded.subjects, &loaded.graph, &hp).unwrap(),
            |mut s| s.sweep().unwrap(),
            BatchSize::LargeInput,
        )
    });
}

fn ward(c: &mut Criterion) {
    let (t, n) = (100, 256);
    let x = DMatrix::from_fn(t, n, |i, j| ((i * 31 + j * 17) % 97) as f64 / 97.0 + (i % 5) as f64);
    c.bench_function("ward_t100_n256", |b| b.iter(|| ward_cluster(&dissimilarity(&x).unwrap()).unwrap()));
}

fn glcm(c: &mut Criterion) {
    let side = 256;
    let pixels: Vec<f64> = (0..side * side).map(|i| ((i * 7919) % 4096) as f64).collect();
    let image = GrayImage::new(side, side, pixels).unwrap();
    let bins = quantile_bins(&image.roi_values(), 16, 0.01, 0.99).unwrap();
    c.bench_function("glcm_256x256_k16", |b| b.iter(|| build_glcm(&image, &bins, GlcmOptions::default()).unwrap()));
}

criterion_group!(benches, sweep, ward, glcm);
criterion_main!(benches);
