mod common;

use biviso::audit::{
    audit_canonical, find_counterexample, fit_curve, refit_competitor, Region, TriggerMode, DEFAULT_AUDIT_TOLERANCE,
};
use biviso::{
    canonical_pair, check_simultaneous, check_simultaneous_with, dominance, murphy_curves, AuditOptions, ChainSample,
    Comparison, Dominance, Error, EtaGrid, PairKind,
};
use common::*;
use proptest::prelude::*;

fn pair_strategy() -> impl Strategy<Value = PairKind> {
    prop_oneof![
        Just(PairKind::MeanVariance),
        prop::sample::select(vec![0.1, 0.3, 0.5, 0.7, 0.9]).prop_map(|a| PairKind::quantile_es(a).unwrap()),
    ]
}

fn opts(comparison: Comparison, mode: TriggerMode, stop: bool) -> AuditOptions {
    AuditOptions {
        tolerance: DEFAULT_AUDIT_TOLERANCE,
        mode,
        comparison,
        stop_at_first_failure: stop,
    }
}

/// Breakpoints of both score curves: data, fitted `g1`, `-g2` and zero.
fn breakpoints(sample: &ChainSample, fit: &biviso::BivariateFit) -> Vec<f64> {
    let mut b: Vec<f64> = sample.pairs().map(|p| p.1).collect();
    b.extend_from_slice(fit.g1.values());
    b.extend(fit.g2.values().iter().map(|v| -v));
    b.push(0.0);
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

proptest! {
    #![proptest_config(cases(300))]

    #[test]
    fn value_agreement_implies_loss_agreement(y in responses(14), pair in pair_strategy()) {
        let s = ChainSample::from_responses(&y).unwrap();
        let by_values = check_simultaneous_with(&s, pair, &opts(Comparison::Values, TriggerMode::Proposition, false)).unwrap();
        let by_loss = check_simultaneous_with(&s, pair, &opts(Comparison::Loss, TriggerMode::Proposition, false)).unwrap();
        prop_assert_eq!(by_values.checked_breakpoints.len(), by_loss.checked_breakpoints.len());
        for (v, l) in by_values.checked_breakpoints.iter().zip(&by_loss.checked_breakpoints) {
            prop_assert!(!v.passed || l.passed);
            prop_assert!(l.refit_loss <= l.restricted_loss + 1e-9 * l.refit_loss.abs().max(1.0));
        }
        if pair == PairKind::MeanVariance {
            prop_assert_eq!(by_values.simultaneous, by_loss.simultaneous);
        }
    }

    #[test]
    fn early_stop_gives_the_same_verdict(y in responses(14), pair in pair_strategy()) {
        let s = ChainSample::from_responses(&y).unwrap();
        for comparison in [Comparison::Values, Comparison::Loss] {
            let full = check_simultaneous_with(&s, pair, &opts(comparison, TriggerMode::Proposition, false)).unwrap();
            let fast = check_simultaneous_with(&s, pair, &opts(comparison, TriggerMode::Proposition, true)).unwrap();
            prop_assert_eq!(full.simultaneous, fast.simultaneous);
        }
    }

    #[test]
    fn prose_mode_checks_a_superset(y in responses(14), pair in pair_strategy()) {
        let s = ChainSample::from_responses(&y).unwrap();
        let prop = check_simultaneous_with(&s, pair, &opts(Comparison::Values, TriggerMode::Proposition, false)).unwrap();
        let prose = check_simultaneous_with(&s, pair, &opts(Comparison::Values, TriggerMode::Prose, false)).unwrap();
        let ms: Vec<usize> = prose.checked_breakpoints.iter().map(|b| b.m).collect();
        prop_assert!(prop.checked_breakpoints.iter().all(|b| ms.contains(&b.m)));
    }

    #[test]
    fn regions_follow_the_pair(y in responses(14), pair in pair_strategy()) {
        let s = ChainSample::from_responses(&y).unwrap();
        let r = check_simultaneous(&s, pair, DEFAULT_AUDIT_TOLERANCE).unwrap();
        for b in &r.checked_breakpoints {
            match pair {
                PairKind::MeanVariance => prop_assert!(b.region == Region::Prefix && b.range == (0..b.m)),
                _ => prop_assert!(b.region == Region::Suffix && b.range == (b.m..s.len())),
            }
        }
    }

    #[test]
    fn murphy_curves_are_piecewise_linear(y in responses(10), pair in pair_strategy()) {
        let s = ChainSample::from_responses(&y).unwrap();
        let fit = canonical_pair(&s, pair).unwrap();
        let b = breakpoints(&s, &fit);
        let mut points = Vec::new();
        for w in b.windows(2).filter(|w| w[1] - w[0] > 1e-9) {
            for t in [0.25, 0.5, 0.75] {
                points.push(w[0] + t * (w[1] - w[0]));
            }
        }
        prop_assume!(points.len() >= 3);
        let grid = EtaGrid::explicit(points).unwrap();
        let c = fit_curve("canonical", &fit, &s, &grid).unwrap();
        for k in (0..c.eta.len()).step_by(3) {
            for curve in [&c.s1_means, &c.s2_means] {
                let mid = curve[k + 1];
                let avg = 0.5 * (curve[k] + curve[k + 2]);
                prop_assert!(close(mid, avg, 1e-9), "eta {} curve not linear: {} vs {}", c.eta[k + 1], mid, avg);
            }
        }
    }

    #[test]
    fn dominance_is_antisymmetric(y in responses(10), pair in pair_strategy()) {
        let s = ChainSample::from_responses(&y).unwrap();
        let canonical = canonical_pair(&s, pair).unwrap();
        let r = check_simultaneous_with(&s, pair, &opts(Comparison::Values, TriggerMode::Prose, false)).unwrap();
        let curves = biviso::audit::default_audit_grid(&s, &[&canonical]).unwrap();
        let a = fit_curve("a", &canonical, &s, &curves).unwrap();
        prop_assert_eq!(dominance(&a, &a).unwrap(), Dominance::Equal);
        for bp in &r.checked_breakpoints {
            let comp = refit_competitor(&s, &canonical, bp).unwrap();
            prop_assert!(is_monotone(comp.g1.values(), true));
            let b = fit_curve("b", &comp, &s, &curves).unwrap();
            let ab = dominance(&a, &b).unwrap();
            let ba = dominance(&b, &a).unwrap();
            let mirrored = match ab {
                Dominance::ADominates => Dominance::BDominates,
                Dominance::BDominates => Dominance::ADominates,
                other => other,
            };
            prop_assert_eq!(ba, mirrored);
        }
    }
}

#[test]
fn two_points_are_always_simultaneous() {
    for y in [[1.0, 0.0], [0.0, 1.0], [2.0, 2.0], [5.0, -3.0]] {
        let s = ChainSample::from_responses(&y).unwrap();
        for pair in [
            PairKind::MeanVariance,
            PairKind::quantile_es(0.5).unwrap(),
            PairKind::quantile_es(0.1).unwrap(),
        ] {
            assert!(
                check_simultaneous(&s, pair, DEFAULT_AUDIT_TOLERANCE)
                    .unwrap()
                    .simultaneous
            );
        }
    }
}

#[test]
fn increasing_data_is_simultaneous() {
    let s = ChainSample::from_responses(&[0.5, 1.0, 3.0, 3.5, 8.0, 9.0]).unwrap();
    for pair in [PairKind::MeanVariance, PairKind::quantile_es(0.3).unwrap()] {
        let r = check_simultaneous(&s, pair, DEFAULT_AUDIT_TOLERANCE).unwrap();
        assert!(r.simultaneous);
        assert_eq!(r.failures().count(), 0);
    }
}

#[test]
fn counterexample_has_crossing_murphy_curves() {
    let pair = PairKind::quantile_es(0.5).unwrap();
    let ce = find_counterexample(pair, 10, 11, 5000)
        .unwrap()
        .expect("a counterexample within the budget");
    assert!(ce.sample.len() <= 10);
    assert!(!ce.report.simultaneous);
    assert_eq!(ce.dominance, Dominance::Crossing);
    let again = audit_canonical(&ce.sample, &ce.canonical, &AuditOptions::default()).unwrap();
    assert!(!again.simultaneous);
    let grid = biviso::audit::default_audit_grid(&ce.sample, &[&ce.canonical, &ce.competitor]).unwrap();
    let curves = murphy_curves(
        &[("canonical", &ce.canonical), ("competitor", &ce.competitor)],
        &ce.sample,
        &grid,
    )
    .unwrap();
    assert_eq!(
        dominance(&curves.curves[0], &curves.curves[1]).unwrap(),
        Dominance::Crossing
    );
    let csv = curves.to_csv();
    assert!(csv.starts_with("eta,fit_id,s1_mean,s2_mean\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * grid.len());
}

#[test]
fn dominance_rejects_mismatched_grids() {
    let s = ChainSample::from_responses(&[1.0, 3.0, 2.0]).unwrap();
    let fit = canonical_pair(&s, PairKind::MeanVariance).unwrap();
    let a = fit_curve("a", &fit, &s, &EtaGrid::explicit(vec![0.0, 1.0]).unwrap()).unwrap();
    let b = fit_curve("b", &fit, &s, &EtaGrid::explicit(vec![0.0, 2.0]).unwrap()).unwrap();
    assert!(matches!(dominance(&a, &b), Err(Error::GridMismatch)));
}

#[test]
fn negative_tolerance_is_rejected() {
    let s = ChainSample::from_responses(&[1.0, 3.0, 2.0]).unwrap();
    assert!(check_simultaneous(&s, PairKind::MeanVariance, -1.0).is_err());
}
