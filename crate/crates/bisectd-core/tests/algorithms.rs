mod common;

use bisectd_core::bisect::subsimplex_bisection;
use common::random_descents;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn three_rules_agree_on_random_descents() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for d in 2..=5 {
        let (n, e, c) = random_descents(d, 600, 40, &mut rng, |_| {});
        assert_eq!((n, e, c), (600, 0, 0), "d = {d}");
    }
}

#[test]
fn subsimplex_rule_matches_full_bisection() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for d in 2..=4 {
        let mut checked = 0;
        random_descents(d, 300, 30, &mut rng, |t| {
            let gens = &t.sorted.gens;
            let (i, j) = bisectd_core::bisect::generation_bse(gens);
            let others: Vec<usize> = (0..=d).filter(|&p| p != i && p != j).collect();
            for mask in 0..1u32 << others.len() {
                let mut pos: Vec<usize> = vec![i, j];
                pos.extend(others.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &p)| p));
                pos.sort_unstable();
                let sub: Vec<i64> = pos.iter().map(|&p| gens[p]).collect();
                let (a, b, g) = subsimplex_bisection(&sub, d);
                assert_eq!((pos[a], pos[b]), (i, j));
                assert_eq!(g, gens[0] + 1);
                checked += 1;
            }
        });
        assert!(checked >= 300);
    }
}
