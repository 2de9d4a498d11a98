//! Naive reference implementations used as test oracles.
#![allow(dead_code)]

use biviso::{Bound, ChainSample, FunctionalSpec};
use proptest::prelude::*;

const EPS: f64 = 1e-12;

/// `T-` and `T+` of the weighted observations read straight off the
/// identification function: `T- = max{v : V(v, P) < 0}` over observed `v`,
/// `T+ = min{v : V(v+, P) > 0}`.
pub fn interval_bounds(spec: &FunctionalSpec, obs: &[(f64, f64)]) -> (f64, f64) {
    let total: f64 = obs.iter().map(|o| o.1).sum();
    match *spec {
        FunctionalSpec::Mean => {
            let m = obs.iter().map(|(y, w)| y * w).sum::<f64>() / total;
            (m, m)
        }
        FunctionalSpec::Quantile { alpha } => {
            let below = |v: f64| obs.iter().filter(|o| o.0 < v).map(|o| o.1).sum::<f64>();
            let at_or_below = |v: f64| obs.iter().filter(|o| o.0 <= v).map(|o| o.1).sum::<f64>();
            let lo = obs
                .iter()
                .map(|o| o.0)
                .filter(|&v| below(v) - alpha * total < -EPS * total)
                .fold(f64::NEG_INFINITY, f64::max);
            let hi = obs
                .iter()
                .map(|o| o.0)
                .filter(|&v| at_or_below(v) - alpha * total > EPS * total)
                .fold(f64::INFINITY, f64::min);
            (lo, hi)
        }
    }
}

fn interval_obs(sample: &ChainSample, weights: &[f64], i: usize, j: usize) -> Vec<(f64, f64)> {
    (i..=j)
        .flat_map(|k| sample.groups()[k].iter().map(move |&y| (y, weights[k])))
        .collect()
}

/// `T(P^w_{i:j})` for every `i <= j`.
pub fn interval_table(sample: &ChainSample, weights: &[f64], spec: &FunctionalSpec, bound: Bound) -> Vec<Vec<f64>> {
    let n = sample.len();
    let mut t = vec![vec![f64::NAN; n]; n];
    for i in 0..n {
        for j in i..n {
            let (lo, hi) = interval_bounds(spec, &interval_obs(sample, weights, i, j));
            t[i][j] = if bound == Bound::Lower { lo } else { hi };
        }
    }
    t
}

/// Increasing fit by `min_{j >= l} max_{i <= l} T(i:j)` and
/// `max_{i <= l} min_{j >= l} T(i:j)`, evaluated in `O(n^3)`.
pub fn naive_minmax(
    sample: &ChainSample,
    weights: &[f64],
    spec: &FunctionalSpec,
    bound: Bound,
) -> (Vec<f64>, Vec<f64>) {
    let n = sample.len();
    let t = interval_table(sample, weights, spec, bound);
    let min_max = (0..n)
        .map(|l| {
            (l..n)
                .map(|j| (0..=l).map(|i| t[i][j]).fold(f64::NEG_INFINITY, f64::max))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let max_min = (0..n)
        .map(|l| {
            (0..=l)
                .map(|i| (l..n).map(|j| t[i][j]).fold(f64::INFINITY, f64::min))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    (min_max, max_min)
}

/// Weighted base loss `sum_i w_i sum_k L(g_i, y_ik)`.
pub fn weighted_loss(sample: &ChainSample, weights: &[f64], spec: &FunctionalSpec, g: &[f64]) -> f64 {
    sample
        .groups()
        .iter()
        .zip(weights)
        .zip(g)
        .map(|((grp, w), &x)| w * grp.iter().map(|&y| spec.base_loss(x, y)).sum::<f64>())
        .sum()
}

/// Exact minimum of the weighted base loss over monotone vectors taking
/// values in `grid` (dynamic program over the last value).
pub fn grid_optimum(
    sample: &ChainSample,
    weights: &[f64],
    spec: &FunctionalSpec,
    grid: &[f64],
    increasing: bool,
) -> f64 {
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if !increasing {
        grid.reverse();
    }
    let cost = |i: usize, x: f64| weights[i] * sample.groups()[i].iter().map(|&y| spec.base_loss(x, y)).sum::<f64>();
    let mut best: Vec<f64> = grid.iter().map(|&x| cost(0, x)).collect();
    for i in 1..sample.len() {
        let mut running = f64::INFINITY;
        best = grid
            .iter()
            .zip(&best)
            .map(|(&x, &b)| {
                running = running.min(b);
                running + cost(i, x)
            })
            .collect();
    }
    best.into_iter().fold(f64::INFINITY, f64::min)
}

/// Every interval `T-` and `T+` of the sample.
pub fn candidate_grid(sample: &ChainSample, weights: &[f64], spec: &FunctionalSpec) -> Vec<f64> {
    let mut out = Vec::new();
    for bound in [Bound::Lower, Bound::Upper] {
        for row in interval_table(sample, weights, spec, bound) {
            out.extend(row.into_iter().filter(|v| v.is_finite()));
        }
    }
    out
}

pub fn is_monotone(v: &[f64], increasing: bool) -> bool {
    v.windows(2)
        .all(|w| if increasing { w[0] <= w[1] } else { w[0] >= w[1] })
}

/// Property-test settings without on-disk regression files.
pub fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

pub fn all_close(a: &[f64], b: &[f64], rel: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| close(*x, *y, rel))
}

/// Responses rounded to one decimal so that ties occur.
pub fn responses(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-50i32..50).prop_map(|v| v as f64 / 10.0), 1..=max_len)
}

/// Covariates with repeats, responses and positive point weights.
pub fn grouped_instance(max_len: usize) -> impl Strategy<Value = (ChainSample, Vec<f64>)> {
    prop::collection::vec((0u8..8, (-30i32..30).prop_map(|v| v as f64 / 4.0)), 1..=max_len).prop_flat_map(|pairs| {
        let z: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let sample = ChainSample::from_pairs(&z, &y).unwrap();
        let n = sample.len();
        (Just(sample), prop::collection::vec(0.2f64..5.0, n))
    })
}

pub fn spec_strategy() -> impl Strategy<Value = FunctionalSpec> {
    prop_oneof![
        Just(FunctionalSpec::Mean),
        prop::sample::select(vec![0.1, 0.25, 0.3, 0.5, 0.7, 0.9]).prop_map(|a| FunctionalSpec::quantile(a).unwrap()),
    ]
}
