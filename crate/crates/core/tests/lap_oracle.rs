use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgbdtrack::lap::{solve, CostMatrix};

/// Minimum over every partial one-to-one matching, summing in row order.
fn brute_partial(c: &CostMatrix, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
    if row == c.rows() {
        *best = best.min(acc);
        return;
    }
    brute_partial(c, row + 1, used, acc, best);
    for j in 0..c.cols() {
        if let (false, Some(v)) = (used[j], c.get(row, j)) {
            used[j] = true;
            brute_partial(c, row + 1, used, acc + v, best);
            used[j] = false;
        }
    }
}

fn brute_min(c: &CostMatrix) -> f64 {
    let mut best = 0.0;
    brute_partial(c, 0, &mut vec![false; c.cols()], 0.0, &mut best);
    best
}

/// Dyadic values keep every summation order exact.
fn dyadic(rng: &mut ChaCha8Rng, lo: i32, hi: i32) -> f64 {
    f64::from(rng.random_range(lo..=hi)) / 64.0
}

#[test]
fn matches_brute_force_on_mixed_sign_and_forbidden_entries() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..2000 {
        let (r, c) = (rng.random_range(0..=6), rng.random_range(0..=6));
        let m = CostMatrix::from_fn(r, c, |_, _| {
            if rng.random::<f64>() < 0.25 {
                None
            } else {
                Some(dyadic(&mut rng, -128, 32))
            }
        });
        let a = solve(&m);
        assert_eq!(a.total_cost(&m), brute_min(&m), "{m:?}");
        assert_eq!(a.matches.len() + a.unmatched_rows.len(), r);
        assert_eq!(a.matches.len() + a.unmatched_cols.len(), c);
        for &(i, j) in &a.matches {
            assert!(m.get(i, j).is_some_and(|v| v <= 0.0));
        }
    }
}

#[test]
fn ties_are_broken_the_same_way_every_time() {
    let m = CostMatrix::from_fn(4, 4, |_, _| Some(-1.0));
    let a = solve(&m);
    assert_eq!(a.matches, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
    assert_eq!(solve(&m), a);
}

proptest! {
    #[test]
    fn column_permutation_permutes_matches(
        vals in proptest::collection::vec(-1.0f64..-0.01, 36),
        r in 1usize..=6,
        c in 1usize..=6,
        seed in any::<u64>(),
    ) {
        let m = CostMatrix::from_fn(r, c, |i, j| Some(vals[i * 6 + j]));
        let mut perm: Vec<usize> = (0..c).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for k in (1..c).rev() {
            perm.swap(k, rng.random_range(0..=k));
        }
        let permuted = CostMatrix::from_fn(r, c, |i, j| m.get(i, perm[j]));
        let a = solve(&m);
        let b = solve(&permuted);
        let mut mapped: Vec<(usize, usize)> = b.matches.iter().map(|&(i, j)| (i, perm[j])).collect();
        mapped.sort_unstable();
        prop_assert_eq!(mapped, a.matches);
    }
}
