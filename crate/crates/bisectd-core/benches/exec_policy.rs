//! Sequential vs rayon execution of the read-only scans on one refined mesh.

use bisectd_core::analysis::lemmas::scan_lemmas;
use bisectd_core::analysis::{level_jump_stats, regularized_mesh_size, verify_level_estimate, LevelEstimateMode};
use bisectd_core::forest::is_conforming;
use bisectd_core::{kuhn_cube, ExecPolicy, Forest, Refiner, Triangulation};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mesh(d: usize, leaves: usize) -> (Forest, Triangulation) {
    let (mut f, t0) = Forest::new(&kuhn_cube(d).unwrap()).unwrap();
    let mut r = Refiner::new(&mut f, &t0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    while r.num_leaves() < leaves {
        r.random_refine(&mut rng, 256).unwrap();
    }
    let t = r.into_triangulation();
    (f, t)
}

fn scans(c: &mut Criterion) {
    let (f, t) = mesh(3, 50_000);
    let mut g = c.benchmark_group("exec_policy");
    g.sample_size(10);
    for (name, exec) in [("sequential", ExecPolicy::Sequential), ("parallel", ExecPolicy::Parallel)] {
        g.bench_with_input(BenchmarkId::new("is_conforming", name), &exec, |b, &e| {
            b.iter(|| is_conforming(&f, &t, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("scan_lemmas", name), &exec, |b, &e| {
            b.iter(|| scan_lemmas(&f, &t, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("regularized_mesh_size", name), &exec, |b, &e| {
            b.iter(|| regularized_mesh_size(&f, &t, 3, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("level_jump_stats", name), &exec, |b, &e| {
            b.iter(|| level_jump_stats(&f, &t, None, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("level_estimate_sampled", name), &exec, |b, &e| {
            b.iter(|| verify_level_estimate(&f, &t, 3, LevelEstimateMode::Sampled(16), e).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, scans);
criterion_main!(benches);
