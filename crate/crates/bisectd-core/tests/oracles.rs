mod common;

use bisectd_core::analysis::{
    bfs_distances, regularized_exponents, regularized_mesh_size, verify_level_estimate, LevelEstimateMode,
};
use bisectd_core::forest::MeshIndex;
use bisectd_core::{kuhn_cube, ExecPolicy, Forest, Refiner, Triangulation};
use common::floyd_warshall;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_mesh(d: usize, k: usize, seed: u64) -> (Forest, Triangulation) {
    let (mut f, t0) = Forest::new(&kuhn_cube(d).unwrap()).unwrap();
    let mut r = Refiner::new(&mut f, &t0).unwrap();
    r.random_refine(&mut ChaCha8Rng::seed_from_u64(seed), k).unwrap();
    let t = r.into_triangulation();
    (f, t)
}

#[test]
fn bfs_matches_floyd_warshall() {
    for (d, k, seed) in [(2, 60, 1), (3, 25, 2)] {
        let (f, t) = random_mesh(d, k, seed);
        let idx = MeshIndex::new(&f, &t).unwrap();
        let fw = floyd_warshall(&f, &idx);
        for (s, row) in fw.iter().enumerate() {
            assert_eq!(bfs_distances(&f, &idx, &[s]), *row, "source {s}");
        }
    }
}

#[test]
fn regularized_exponent_matches_brute_force() {
    for (d, k, seed) in [(2, 150, 3), (3, 40, 4), (2, 250, 5)] {
        let (f, t) = random_mesh(d, k, seed);
        let idx = MeshIndex::new(&f, &t).unwrap();
        assert!(idx.len() <= 1000, "{} leaves", idx.len());
        let fw = floyd_warshall(&f, &idx);
        let levels: Vec<i64> = idx.leaves.iter().map(|&n| f.level(n)).collect();
        let brute: Vec<i64> = (0..idx.len())
            .map(|i| (0..idx.len()).map(|j| levels[j] - fw[i][j] as i64).max().unwrap())
            .collect();
        let (s, src) = regularized_exponents(&f, &idx);
        assert_eq!(s, brute);
        for i in 0..idx.len() {
            let j = src[i] as usize;
            assert_eq!(levels[j] - fw[i][j] as i64, s[i], "source of leaf {i} attains the maximum");
        }
        // h(T) ≤ 2 h(T′) whenever T and T′ intersect.
        for i in 0..idx.len() {
            for j in 0..idx.len() {
                if fw[i][j] == 1 {
                    assert!(s[j] - s[i] <= 1);
                }
            }
        }
    }
}

#[test]
fn level_estimate_modes_agree() {
    let (f, t) = random_mesh(2, 200, 6);
    for gamma in [0, 1, 2] {
        let exact = verify_level_estimate(&f, &t, gamma, LevelEstimateMode::Exact, ExecPolicy::Sequential)
            .unwrap()
            .is_some();
        let all = verify_level_estimate(&f, &t, gamma, LevelEstimateMode::AllPairs, ExecPolicy::Parallel)
            .unwrap()
            .is_some();
        assert_eq!(exact, all, "gamma = {gamma}");
    }
    let rep = regularized_mesh_size(&f, &t, 1, ExecPolicy::Parallel).unwrap();
    assert!(rep.level_estimate_ok);
    assert!(rep.gamma <= 2.0);
}
