//! One-shot against recursive on random systems.

mod common;

use common::*;
use nnreach::reach::{compare_tightness, one_shot_reach, recursive_reach, Method, Propagator, Template};
use nnreach::relax::AlphaRule;
use proptest::prelude::*;

fn min_gap(p: &Propagator, c: &Case, t: &Template) -> f64 {
    let rec = recursive_reach(p, &c.graph, &c.x0, c.w.as_ref(), c.horizon, t).unwrap();
    let one = one_shot_reach(p, &c.graph, &c.x0, c.w.as_ref(), c.horizon, t).unwrap();
    compare_tightness(&one, &rec).unwrap().iter().map(|s| s.min_gap()).fold(f64::INFINITY, f64::min)
}

fn backward(alpha: AlphaRule) -> Propagator {
    let mut p = Propagator::new(Method::BackwardLin);
    p.alpha = alpha;
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lp_one_shot_never_looser(seed in 1000u64..100_000) {
        let c = random_case(seed, 3, 8, 3);
        let n = c.x0.dim();
        for t in [Template::boxed(n), Template::octagon(n)] {
            let g = min_gap(&Propagator::new(Method::Lp), &c, &t);
            prop_assert!(g >= -ORDER_TOL, "gap {g}");
        }
    }

    #[test]
    fn fixed_alpha_backward_one_shot_never_looser(seed in 1000u64..100_000, one in any::<bool>()) {
        let c = random_case(seed, 3, 8, 3);
        let alpha = if one { AlphaRule::One } else { AlphaRule::Zero };
        let g = min_gap(&backward(alpha), &c, &Template::boxed(c.x0.dim()));
        prop_assert!(g >= -ORDER_TOL, "gap {g}");
    }

    #[test]
    fn bnb_one_shot_never_looser(seed in 1000u64..100_000) {
        let c = random_case(seed, 2, 6, 2);
        let g = min_gap(&Propagator::new(Method::Bnb), &c, &Template::boxed(c.x0.dim()));
        prop_assert!(g >= -ORDER_TOL, "gap {g}");
    }

    #[test]
    fn single_step_frameworks_agree_exactly(seed in 0u64..100_000) {
        let mut c = random_case(seed, 3, 8, 1);
        c.horizon = 1;
        let n = c.x0.dim();
        for m in [Method::Interval, Method::BackwardLin, Method::Lp] {
            let p = Propagator::new(m);
            let t = Template::octagon(n);
            let rec = recursive_reach(&p, &c.graph, &c.x0, c.w.as_ref(), 1, &t).unwrap();
            let one = one_shot_reach(&p, &c.graph, &c.x0, c.w.as_ref(), 1, &t).unwrap();
            for (a, b) in rec.steps.iter().zip(&one.steps) {
                prop_assert_eq!(&a.polytope.support, &b.polytope.support, "{:?}", m);
            }
        }
    }
}

/// Adaptive lower slopes pick their line from the preactivation box, so a
/// looser box can choose a better line. This instance shows it.
#[test]
fn adaptive_alpha_can_break_ordering() {
    let c = random_case(59, 4, 16, 4);
    let t = Template::boxed(c.x0.dim());
    assert!(min_gap(&backward(AlphaRule::Adaptive), &c, &t) < -ORDER_TOL);
    assert!(min_gap(&backward(AlphaRule::Zero), &c, &t) >= -ORDER_TOL);
}
