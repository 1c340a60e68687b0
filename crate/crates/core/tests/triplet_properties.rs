mod common;

use std::collections::{BTreeSet, HashSet};

use proptest::prelude::*;
use rckl::triplets::{
    adversarial_order, detect_conflicts, error_rate, inferred_triplets, satisfied,
    total_triplet_count, transitive_closure, ComparisonGraph,
};
use rckl::{KernelMatrix, Triplet, TripletSet};

fn as_set(s: &TripletSet) -> BTreeSet<Triplet> {
    s.iter().copied().collect()
}

fn question(t: &Triplet) -> (usize, usize, usize) {
    (t.head, t.near.min(t.far), t.near.max(t.far))
}

/// Triplets answered by points on a line, so the set is always consistent.
fn consistent_set(n: usize, seed: u64, count: usize) -> (TripletSet, KernelMatrix) {
    let mut rng = common::rng(seed);
    let k = common::random_psd(n, 2, 1.0, &mut rng);
    let raw = common::random_triplets(n, count, &mut rng);
    let mut set = TripletSet::new(n);
    for t in &raw {
        let fixed = if satisfied(t, &k) { *t } else { t.reversed() };
        if satisfied(&fixed, &k) && !set.contains(&fixed.reversed()) {
            set.insert(fixed).unwrap();
        }
    }
    (set, k)
}

#[test]
fn count_formula_matches_enumeration() {
    for (n, expected) in [(3, 3), (4, 12), (5, 30), (6, 60), (7, 105)] {
        let questions: HashSet<_> = common::all_triplets(n).iter().map(question).collect();
        assert_eq!(questions.len() as u64, expected);
        assert_eq!(total_triplet_count(n).unwrap(), expected);
    }
    assert_eq!(total_triplet_count(100).unwrap(), 485_100);
    assert!(total_triplet_count(2).is_err());
}

#[test]
fn adversarial_prefixes_reveal_nothing() {
    for n in 3..=6 {
        for seed in [0, 1, 2] {
            let order = adversarial_order(n, seed).unwrap();
            assert_eq!(order.len() as u64, total_triplet_count(n).unwrap());
            let questions: HashSet<_> = order.iter().map(question).collect();
            assert_eq!(questions.len(), order.len(), "n={n} seed={seed}");
            let mut prefix = TripletSet::new(n);
            for t in &order {
                prefix.insert(*t).unwrap();
                assert!(
                    inferred_triplets(&prefix).is_empty(),
                    "n={n} seed={seed} at {t}"
                );
            }
            assert!(ComparisonGraph::from_triplets(&prefix).is_acyclic());
        }
    }
}

#[test]
fn adversarial_order_is_seed_deterministic() {
    assert_eq!(
        adversarial_order(6, 5).unwrap(),
        adversarial_order(6, 5).unwrap()
    );
}

#[test]
fn closure_of_chain_example() {
    // d(b,a) < d(b,c) follows from d(a,b) < d(a,c) < d(b,c).
    let (a, b, c) = (0, 1, 2);
    let set = TripletSet::from_triplets(
        3,
        [
            Triplet::new(a, b, c).unwrap(),
            Triplet::new(c, a, b).unwrap(),
        ],
    )
    .unwrap();
    let inferred = inferred_triplets(&set);
    assert_eq!(
        as_set(&inferred),
        [Triplet::new(b, a, c).unwrap()].into_iter().collect()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closure_is_idempotent(seed in any::<u64>(), n in 3usize..8, count in 1usize..25) {
        let (set, _) = consistent_set(n, seed, count);
        let once = transitive_closure(&set);
        let twice = transitive_closure(&once);
        prop_assert_eq!(as_set(&once), as_set(&twice));
        prop_assert!(as_set(&set).is_subset(&as_set(&once)));
    }

    #[test]
    fn closure_is_monotone(seed in any::<u64>(), n in 3usize..8, count in 2usize..25, cut in 0.0f64..1.0) {
        let (set, _) = consistent_set(n, seed, count);
        let keep = (set.len() as f64 * cut) as usize;
        let sub = TripletSet::from_triplets(n, set.iter().take(keep).copied()).unwrap();
        prop_assert!(as_set(&transitive_closure(&sub)).is_subset(&as_set(&transitive_closure(&set))));
    }

    #[test]
    fn closure_is_sound_for_the_generating_kernel(seed in any::<u64>(), n in 3usize..8, count in 1usize..25) {
        let (set, k) = consistent_set(n, seed, count);
        for t in &transitive_closure(&set) {
            prop_assert!(satisfied(t, &k), "{}", t);
        }
        prop_assert!(detect_conflicts(&set).is_empty());
    }

    #[test]
    fn conflicts_iff_cycle(seed in any::<u64>(), n in 3usize..6, count in 1usize..20) {
        let mut rng = common::rng(seed);
        let set = common::random_triplets(n, count, &mut rng);
        let cyclic = !ComparisonGraph::from_triplets(&set).is_acyclic();
        prop_assert_eq!(cyclic, !detect_conflicts(&set).is_empty());
    }

    #[test]
    fn reversing_every_answer_flips_the_error(seed in any::<u64>(), n in 3usize..9, count in 1usize..30) {
        let mut rng = common::rng(seed);
        let k = common::random_psd(n, n, 1.0, &mut rng);
        let set = common::random_triplets(n, count, &mut rng);
        let flipped = TripletSet::from_triplets(n, set.iter().map(|t| t.reversed())).unwrap();
        let total = error_rate(&set, &k).unwrap() + error_rate(&flipped, &k).unwrap();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}
