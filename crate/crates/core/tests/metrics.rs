mod common;

use coglasso::metrics::{confusion, f1, kld, mcc};
use coglasso::Adjacency;
use common::{random_spd, rng};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #[test]
    fn confusion_partitions_pairs(seed in any::<u64>(), dim in 2usize..15) {
        let mut r = rng(seed);
        let truth = Adjacency::from_pairs(dim, |_, _| r.gen_bool(0.3));
        let est = Adjacency::from_pairs(dim, |_, _| r.gen_bool(0.3));
        let c = confusion(&truth, &est).unwrap();
        prop_assert_eq!(c.total() as usize, dim * (dim - 1) / 2);
        prop_assert_eq!(c.tp + c.fn_, truth.edges().count() as u64);
        prop_assert_eq!(c.tp + c.fp, est.edges().count() as u64);
        prop_assert!((0.0..=1.0).contains(&f1(&c)));
        prop_assert!((-1.0..=1.0).contains(&mcc(&c)));
    }

    #[test]
    fn kld_is_at_least_half_p(seed in any::<u64>(), p in 1usize..10) {
        // tr(AB^-1) + tr(BA^-1) >= 2p, with equality only at A = B
        let mut r = rng(seed);
        let a = random_spd(p, &mut r);
        let b = random_spd(p, &mut r);
        prop_assert!(kld(&a, &b).unwrap() >= p as f64 / 2.0 - 1e-9);
        prop_assert!((kld(&a, &a).unwrap() - p as f64 / 2.0).abs() < 1e-9);
    }
}

#[test]
fn perfect_recovery_scores_one() {
    let g = Adjacency::from_pairs(6, |i, j| j == i + 1);
    let c = confusion(&g, &g).unwrap();
    assert_eq!((f1(&c), mcc(&c)), (1.0, 1.0));
    let flipped = Adjacency::from_pairs(6, |i, j| j != i + 1);
    let c = confusion(&g, &flipped).unwrap();
    assert_eq!((f1(&c), mcc(&c)), (0.0, -1.0));
}

#[test]
fn kld_scales_with_a_multiple() {
    // kld(T, aT) = p/2 (a + 1/a - 1)
    let t = random_spd(5, &mut rng(3));
    let got = kld(&t, &(&t * 3.0)).unwrap();
    assert!((got - 2.5 * (3.0 + 1.0 / 3.0 - 1.0)).abs() < 1e-10);
}

#[test]
fn mismatched_sizes_are_rejected() {
    assert!(confusion(&Adjacency::empty(3), &Adjacency::empty(4)).is_err());
    assert!(kld(&random_spd(3, &mut rng(1)), &random_spd(4, &mut rng(1))).is_err());
}
