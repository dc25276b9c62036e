use proptest::collection::vec;
use proptest::prelude::*;

use sos_core::bounds::{canonical_path, certify_alpha, closed_form_scale, congestion_bound, good_set_bound};
use sos_core::exact::{ExactChain, DEFAULT_STATE_CAP};
use sos_core::{BoundaryCondition, HeightField, Lattice, ModelParams, SosSystem};

fn chain_with(p: ModelParams, xi: BoundaryCondition) -> ExactChain {
    ExactChain::enumerate(&SosSystem::new(p, xi).unwrap(), DEFAULT_STATE_CAP).unwrap()
}

#[test]
fn congestion_is_sound_and_within_the_closed_form_shape() {
    // the closed form carries a free constant; fit it on the grid and check
    // it is bounded across the grid rather than growing with the size
    let mut ratios = Vec::new();
    for (l, n) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
        for beta in [0.5, 1.0] {
            let c = chain_with(ModelParams::new(l, beta, n), BoundaryCondition::constant(0));
            let t_rel = c.exact_gap().unwrap().t_rel;
            let bound = congestion_bound(&c).unwrap().bound;
            // the single site is exact: bound and t_rel agree up to rounding
            assert!(bound >= t_rel * (1.0 - 1e-12), "l={l} n={n} beta={beta}");
            ratios.push(bound / closed_form_scale(l, l, beta, n));
        }
    }
    let fitted = ratios.iter().cloned().fold(0.0, f64::max);
    assert!(fitted <= 1.0, "{ratios:?}");
}

#[test]
fn good_set_near_equilibrium_height_is_sound() {
    let p = ModelParams::new(2, 1.0, 2);
    let h = sos_core::equilibrium_height(&p).0;
    let c = chain_with(p, BoundaryCondition::constant(0));
    let good = move |s: &[i32]| s.iter().all(|&x| (x - h).abs() <= 1);
    let alpha = certify_alpha(&c, good, 8);
    let r = good_set_bound(&c, good, 8, alpha).unwrap();
    assert!(r.alpha_valid);
    assert!(r.bound >= c.exact_gap().unwrap().t_rel);
    // an over-optimistic alpha is reported, not accepted
    let r = good_set_bound(&c, good, 8, (alpha * 1.5).min(1.0)).unwrap();
    assert!(!r.alpha_valid || alpha * 1.5 > 1.0);
}

#[test]
fn shrinking_the_good_set_can_beat_plain_congestion() {
    let p = ModelParams::new(2, 3.0, 3);
    let xi = BoundaryCondition::from_fn(Lattice::new(2, 2), |x, _| if x < 1 { 3 } else { 0 });
    let c = chain_with(p, xi);
    let good = |s: &[i32]| s.iter().all(|&x| x <= 2);
    let alpha = certify_alpha(&c, good, 10);
    let r = good_set_bound(&c, good, 10, alpha).unwrap();
    let plain = congestion_bound(&c).unwrap().bound;
    let t_rel = c.exact_gap().unwrap().t_rel;
    assert!(r.alpha_valid && r.bound >= t_rel);
    assert!(r.bound < plain, "good-set {} vs congestion {plain}", r.bound);
}

proptest! {
    #[test]
    fn path_length_is_the_l1_distance(a in vec(0i32..=4, 12), b in vec(0i32..=4, 12)) {
        let (x, y) = (HeightField::from_vec(4, 3, a.clone()).unwrap(), HeightField::from_vec(4, 3, b.clone()).unwrap());
        let path = canonical_path(&x, &y).unwrap();
        let l1: i32 = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).sum();
        prop_assert_eq!(path.length(), l1 as usize);
        prop_assert!(path.length() <= 12 * 4);
        prop_assert_eq!(path.states.first().unwrap(), &a);
        prop_assert_eq!(path.states.last().unwrap(), &b);
        for (s, t) in path.edges() {
            let diff: i32 = s.iter().zip(t).map(|(p, q)| (p - q).abs()).sum();
            prop_assert_eq!(diff, 1);
        }
    }
}
