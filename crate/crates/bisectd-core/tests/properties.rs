use bisectd_core::analysis::lemmas::scan_lemmas;
use bisectd_core::analysis::{c_of_seed, level_jump_stats, regularized_mesh_size, verify_level_estimate, LevelEstimateMode};
use bisectd_core::forest::{is_conforming, is_refinement, join, meet};
use bisectd_core::io::{load_mesh_str, MeshDocument};
use bisectd_core::{kuhn_cube, level_of, simplex_volume, type_of, DyadicPoint, ExecPolicy, Forest, Refiner, Triangulation};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn refine(f: &mut Forest, t: &Triangulation, k: usize, seed: u64) -> Triangulation {
    let mut r = Refiner::new(f, t).unwrap();
    r.random_refine(&mut ChaCha8Rng::seed_from_u64(seed), k).unwrap();
    r.into_triangulation()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn level_and_type_decompose_generation(gen in -50i64..2000, d in 1usize..8) {
        let (l, t) = (level_of(gen, d), type_of(gen, d));
        prop_assert!((1..=d).contains(&t));
        prop_assert_eq!(gen, d as i64 * (l - 1) + t as i64);
    }

    #[test]
    fn midpoints_are_canonical(a in prop::collection::vec(-40i64..40, 3), b in prop::collection::vec(-40i64..40, 3)) {
        let (p, q) = (DyadicPoint::from_ints(&a), DyadicPoint::from_ints(&b));
        let m = p.midpoint(&q);
        prop_assert_eq!(&m, &q.midpoint(&p));
        prop_assert_eq!(p.midpoint(&p), p.clone());
        let sum: Vec<i64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let twice = DyadicPoint::new(sum.iter().map(|&x| BigInt::from(x)).collect(), 1);
        prop_assert_eq!(m, twice);
    }

    #[test]
    fn random_meshes_keep_invariants(d in 2usize..=3, k in 0usize..60, seed in any::<u64>()) {
        let seed_tria = kuhn_cube(d).unwrap();
        let consts = c_of_seed(&seed_tria).unwrap();
        let (mut f, t0) = Forest::new(&seed_tria).unwrap();
        let t = refine(&mut f, &t0, k, seed);
        prop_assert!(is_conforming(&f, &t, ExecPolicy::Parallel).unwrap().conforming);

        // |T| = 2^{-gen(T)} |T0| and the volumes tile the cube.
        let mut total = BigRational::zero();
        for n in t.leaves() {
            let vol = simplex_volume(&f.simplex_points(n)).unwrap();
            let root = simplex_volume(&f.simplex_points(f.root_of(n))).unwrap();
            let scale = BigRational::new(BigInt::from(1), BigInt::from(1) << f.generation(n) as usize);
            prop_assert_eq!(&vol, &(root * scale));
            total += vol;
        }
        prop_assert_eq!(total, BigRational::from_integer(1.into()));

        let lem = scan_lemmas(&f, &t, ExecPolicy::Parallel).unwrap();
        prop_assert!(lem.is_clean(), "{:?}", lem.violations.first());
        let jumps = level_jump_stats(&f, &t, Some(&consts.j), ExecPolicy::Parallel).unwrap();
        prop_assert!(jumps.violations.is_empty(), "{:?}", jumps.violations.first());
        let rep = regularized_mesh_size(&f, &t, consts.big_gamma, ExecPolicy::Parallel).unwrap();
        prop_assert!(rep.gamma_exponent <= 1);
        prop_assert!(rep.level_estimate_ok);
        prop_assert!(verify_level_estimate(&f, &t, consts.big_gamma, LevelEstimateMode::Exact, ExecPolicy::Parallel)
            .unwrap()
            .is_none());
    }

    #[test]
    fn join_and_meet_are_bounds(k1 in 0usize..40, k2 in 0usize..40, s1 in any::<u64>(), s2 in any::<u64>()) {
        let (mut f, t0) = Forest::new(&kuhn_cube(2).unwrap()).unwrap();
        let a = refine(&mut f, &t0, k1, s1);
        let b = refine(&mut f, &t0, k2, s2);
        let j = join(&f, &a, &b).unwrap();
        let m = meet(&f, &a, &b).unwrap();
        for x in [&a, &b] {
            prop_assert!(is_refinement(&f, x, &j).unwrap());
            prop_assert!(is_refinement(&f, &m, x).unwrap());
        }
        prop_assert!(is_conforming(&f, &j, ExecPolicy::Sequential).unwrap().conforming);
        prop_assert!(is_conforming(&f, &m, ExecPolicy::Sequential).unwrap().conforming);
        prop_assert_eq!(join(&f, &a, &a).unwrap(), a.clone());
    }

    #[test]
    fn native_format_round_trips(d in 2usize..=3, k in 0usize..50, seed in any::<u64>()) {
        let (mut f, t0) = Forest::new(&kuhn_cube(d).unwrap()).unwrap();
        let t = refine(&mut f, &t0, k, seed);
        let text = MeshDocument::from_forest(&f, &t, None).to_json();
        let back = load_mesh_str(&text).unwrap();
        prop_assert_eq!(back.forest.num_vertices(), f.num_vertices());
        prop_assert_eq!(MeshDocument::from_forest(&back.forest, &back.tria, None).to_json(), text);
    }

    #[test]
    fn parallel_and_sequential_reports_agree(k in 0usize..80, seed in any::<u64>()) {
        let (mut f, t0) = Forest::new(&kuhn_cube(3).unwrap()).unwrap();
        let t = refine(&mut f, &t0, k, seed);
        let a = regularized_mesh_size(&f, &t, 3, ExecPolicy::Sequential).unwrap();
        let b = regularized_mesh_size(&f, &t, 3, ExecPolicy::Parallel).unwrap();
        prop_assert_eq!(a, b);
    }
}
