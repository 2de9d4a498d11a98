mod common;

use biviso::monotone::{minimizing_indices, minmax_representations, restrict_fit};
use biviso::{
    antitonic_mean_fit, minmax_fit, pooled_fit, pooled_mean_fit, Bound, ChainSample, Direction, FunctionalSpec,
};
use common::*;
use proptest::prelude::*;

fn exact_instance() -> impl Strategy<Value = (ChainSample, Vec<f64>)> {
    prop::collection::vec((-20i32..20).prop_map(|v| v as f64 / 4.0), 1..=12).prop_flat_map(|y| {
        let s = ChainSample::from_responses(&y).unwrap();
        let n = s.len();
        (Just(s), prop::collection::vec((1u8..=4).prop_map(f64::from), n))
    })
}

fn exact_spec() -> impl Strategy<Value = FunctionalSpec> {
    prop_oneof![
        Just(FunctionalSpec::Mean),
        prop::sample::select(vec![0.25, 0.5, 0.75]).prop_map(|a| FunctionalSpec::quantile(a).unwrap()),
    ]
}

proptest! {
    #![proptest_config(cases(500))]

    #[test]
    fn minmax_equals_maxmin((s, w) in grouped_instance(12), spec in spec_strategy()) {
        for bound in [Bound::Lower, Bound::Upper] {
            let (a, b) = minmax_representations(&s, &w, &spec, Direction::Increasing, bound).unwrap();
            let (na, nb) = naive_minmax(&s, &w, &spec, bound);
            prop_assert!(all_close(&a, &b, 1e-9));
            prop_assert!(all_close(&a, &na, 1e-9), "{:?} vs naive {:?}", a, na);
            prop_assert!(all_close(&b, &nb, 1e-9));
            prop_assert!(all_close(&na, &nb, 1e-9));
        }
    }

    #[test]
    fn pooled_mean_matches_minmax((s, w) in grouped_instance(12)) {
        for dir in [Direction::Increasing, Direction::Decreasing] {
            let a = minmax_fit(&s, &w, &FunctionalSpec::Mean, dir, Bound::Lower).unwrap();
            let b = pooled_fit(&s, &w, &FunctionalSpec::Mean, dir, Bound::Lower).unwrap();
            prop_assert!(all_close(a.values(), b.values(), 1e-9));
        }
        let means: Vec<f64> = s.groups().iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
        let mw: Vec<f64> = w.iter().zip(s.groups()).map(|(w, g)| w * g.len() as f64).collect();
        let a = minmax_fit(&s, &w, &FunctionalSpec::Mean, Direction::Increasing, Bound::Lower).unwrap();
        let b = pooled_mean_fit(&means, &mw, Direction::Increasing).unwrap();
        prop_assert!(all_close(a.values(), b.values(), 1e-9));
        let c = antitonic_mean_fit(&means, &mw).unwrap();
        let d = pooled_mean_fit(&means, &mw, Direction::Decreasing).unwrap();
        prop_assert!(all_close(c.values(), d.values(), 1e-12));
    }

    #[test]
    fn pooled_quantile_matches_minmax((s, w) in grouped_instance(12), alpha in 0.05f64..0.95) {
        let spec = FunctionalSpec::quantile(alpha).unwrap();
        for dir in [Direction::Increasing, Direction::Decreasing] {
            for bound in [Bound::Lower, Bound::Upper] {
                let a = minmax_fit(&s, &w, &spec, dir, bound).unwrap();
                let b = pooled_fit(&s, &w, &spec, dir, bound).unwrap();
                prop_assert_eq!(a.values(), b.values());
            }
        }
    }

    #[test]
    fn lower_upper_sandwich((s, w) in grouped_instance(12), spec in spec_strategy()) {
        for dir in [Direction::Increasing, Direction::Decreasing] {
            let lo = minmax_fit(&s, &w, &spec, dir, Bound::Lower).unwrap();
            let hi = minmax_fit(&s, &w, &spec, dir, Bound::Upper).unwrap();
            prop_assert!(is_monotone(lo.values(), dir == Direction::Increasing));
            prop_assert!(is_monotone(hi.values(), dir == Direction::Increasing));
            prop_assert!(lo.values().iter().zip(hi.values()).all(|(a, b)| a <= b));
            if spec == FunctionalSpec::Mean {
                prop_assert!(all_close(lo.values(), hi.values(), 1e-12));
            }
        }
    }

    #[test]
    fn prefix_and_suffix_domination((s, w) in grouped_instance(12), spec in spec_strategy()) {
        let full = minmax_fit(&s, &w, &spec, Direction::Increasing, Bound::Lower).unwrap();
        let n = s.len();
        for m in 1..=n {
            let head = s.slice(0..m).unwrap();
            let own = minmax_fit(&head, &w[..m], &spec, Direction::Increasing, Bound::Lower).unwrap();
            let restricted = restrict_fit(&full, 0..m).unwrap();
            for (r, o) in restricted.values().iter().zip(own.values()) {
                prop_assert!(*r <= o + 1e-9 * o.abs().max(1.0));
            }
        }
        for m in 0..n {
            let tail = s.slice(m..n).unwrap();
            let own = minmax_fit(&tail, &w[m..], &spec, Direction::Increasing, Bound::Lower).unwrap();
            for (r, o) in full.values()[m..].iter().zip(own.values()) {
                prop_assert!(*r >= o - 1e-9 * o.abs().max(1.0));
            }
        }
    }

    #[test]
    fn minimizing_indices_nest((s, w) in exact_instance(), spec in exact_spec(), eta8 in -48i32..48) {
        let eta = eta8 as f64 / 8.0;
        let full = minimizing_indices(eta, &s, &w, &spec).unwrap();
        prop_assert!(!full.indices.is_empty());
        for m in 1..=s.len() {
            let head = s.slice(0..m).unwrap();
            let part = minimizing_indices(eta, &head, &w[..m], &spec).unwrap();
            for &l in full.indices.iter().filter(|&&l| l <= m) {
                prop_assert!(part.contains(l), "m={} l={} full={:?} part={:?}", m, l, full.indices, part.indices);
            }
        }
    }

    #[test]
    fn largest_minimizer_starts_superlevel_set((s, w) in exact_instance(), spec in exact_spec(), eta8 in -48i32..48) {
        let eta = eta8 as f64 / 8.0 + 1.0 / 64.0;
        let fit = minmax_fit(&s, &w, &spec, Direction::Increasing, Bound::Lower).unwrap();
        prop_assume!(fit.values().iter().all(|&v| v != eta));
        let set = minimizing_indices(eta, &s, &w, &spec).unwrap();
        let start = fit.values().iter().position(|&v| v >= eta).unwrap_or(s.len());
        prop_assert_eq!(set.largest(), start);
    }
}

proptest! {
    #![proptest_config(cases(300))]

    #[test]
    fn grid_search_never_beats_minmax((s, w) in grouped_instance(6), spec in spec_strategy()) {
        let grid = candidate_grid(&s, &w, &spec);
        for dir in [Direction::Increasing, Direction::Decreasing] {
            let inc = dir == Direction::Increasing;
            let best = grid_optimum(&s, &w, &spec, &grid, inc);
            for bound in [Bound::Lower, Bound::Upper] {
                let fit = minmax_fit(&s, &w, &spec, dir, bound).unwrap();
                let loss = weighted_loss(&s, &w, &spec, fit.values());
                prop_assert!(loss <= best + 1e-10, "{:?} {:?}: fit {} grid {}", dir, bound, loss, best);
            }
        }
    }

    #[test]
    fn increasing_data_is_fitted_pointwise(y in prop::collection::btree_set(-100i32..100, 1..10)) {
        let y: Vec<f64> = y.into_iter().map(f64::from).collect();
        let s = ChainSample::from_responses(&y).unwrap();
        let w = vec![1.0; y.len()];
        for spec in [FunctionalSpec::Mean, FunctionalSpec::quantile(0.4).unwrap()] {
            let fit = minmax_fit(&s, &w, &spec, Direction::Increasing, Bound::Lower).unwrap();
            prop_assert_eq!(fit.values(), &y[..]);
        }
    }

    #[test]
    fn weight_rescaling_leaves_fit_unchanged((s, w) in grouped_instance(10), spec in spec_strategy(), k in 0.01f64..100.0) {
        let scaled: Vec<f64> = w.iter().map(|v| v * k).collect();
        let a = minmax_fit(&s, &w, &spec, Direction::Increasing, Bound::Lower).unwrap();
        let b = minmax_fit(&s, &scaled, &spec, Direction::Increasing, Bound::Lower).unwrap();
        prop_assert!(all_close(a.values(), b.values(), 1e-9));
    }
}

#[test]
fn worked_examples() {
    let s = ChainSample::from_responses(&[3.0, 1.0, 2.0]).unwrap();
    let w = [1.0; 3];
    let mean = minmax_fit(&s, &w, &FunctionalSpec::Mean, Direction::Increasing, Bound::Lower).unwrap();
    assert_eq!(mean.values(), &[2.0, 2.0, 2.0]);
    let med = FunctionalSpec::quantile(0.5).unwrap();
    let q = minmax_fit(&s, &w, &med, Direction::Increasing, Bound::Lower).unwrap();
    assert_eq!(q.values(), &[1.0, 1.0, 2.0]);
    let a = antitonic_mean_fit(&[0.5, 0.2, 0.9], &w).unwrap();
    assert!(a.values().iter().all(|v| (v - 1.6 / 3.0).abs() < 1e-12));
    let set = minimizing_indices(2.0, &s, &w, &FunctionalSpec::Mean).unwrap();
    assert_eq!(set.indices, vec![0, 2, 3]);
}
