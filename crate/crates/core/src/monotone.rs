//! One-dimensional weighted monotone regression for a functional `T`.
//!
//! The reference solution is the min-max formula over interval functionals,
//! `g(z_l) = min_{j >= l} max_{i <= j} T(P_{i:j}) = max_{i <= l} min_{j >= i} T(P_{i:j})`,
//! evaluated by [`minmax_fit`] in `O(n^2 log n)`. Pooling fast paths
//! ([`pooled_mean_fit`], [`pooled_fit`]) compute the same fit and are what the
//! joint solver uses.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{
    cmp_f64, lower_quantile_sorted, upper_quantile_sorted, Bound, FunctionalSpec, QUANTILE_REL_EPS,
};
use crate::sample::ChainSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
}

impl Direction {
    pub fn flip(self) -> Direction {
        match self {
            Direction::Increasing => Direction::Decreasing,
            Direction::Decreasing => Direction::Increasing,
        }
    }

    fn ordered(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Increasing => a <= b,
            Direction::Decreasing => a >= b,
        }
    }
}

/// Fitted values at each covariate point with their maximal constant runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneFit {
    values: Vec<f64>,
    blocks: Vec<Range<usize>>,
    direction: Direction,
    bound: Bound,
}

impl MonotoneFit {
    pub fn new(values: Vec<f64>, direction: Direction, bound: Bound) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("fitted values must be finite".into()));
        }
        if let Some(i) = values.windows(2).position(|w| !direction.ordered(w[0], w[1])) {
            return Err(Error::InvalidParameter(format!(
                "values are not {direction:?} at index {i}"
            )));
        }
        Ok(Self::from_monotone(values, direction, bound))
    }

    pub(crate) fn from_monotone(values: Vec<f64>, direction: Direction, bound: Bound) -> Self {
        let blocks = constant_runs(&values);
        MonotoneFit {
            values,
            blocks,
            direction,
            bound,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn bound(&self) -> Bound {
        self.bound
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn constant_runs(values: &[f64]) -> Vec<Range<usize>> {
    let mut blocks = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] != values[start] {
            blocks.push(start..i);
            start = i;
        }
    }
    blocks
}

/// Slice of a fit; the block structure is recomputed for the slice.
pub fn restrict_fit(fit: &MonotoneFit, range: Range<usize>) -> Result<MonotoneFit> {
    if range.start >= range.end || range.end > fit.len() {
        return Err(Error::Range {
            start: range.start,
            end: range.end,
            len: fit.len(),
        });
    }
    Ok(MonotoneFit::from_monotone(
        fit.values[range].to_vec(),
        fit.direction,
        fit.bound,
    ))
}

fn check_weights(sample: &ChainSample, weights: &[f64]) -> Result<()> {
    if sample.is_empty() {
        return Err(Error::EmptyInput);
    }
    if weights.len() != sample.len() {
        return Err(Error::DimensionMismatch {
            expected: sample.len(),
            actual: weights.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "weights must be positive and finite, got {w}"
        )));
    }
    Ok(())
}

/// Fenwick tree over observation ranks, used for incremental weighted quantiles.
struct Fenwick {
    tree: Vec<f64>,
    top: usize,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        let top = if n == 0 {
            0
        } else {
            1 << (usize::BITS - 1 - n.leading_zeros())
        };
        Fenwick {
            tree: vec![0.0; n + 1],
            top,
        }
    }

    fn clear(&mut self) {
        self.tree.iter_mut().for_each(|t| *t = 0.0);
    }

    fn add(&mut self, rank: usize, w: f64) {
        let mut i = rank + 1;
        while i < self.tree.len() {
            self.tree[i] += w;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of ranks whose prefix sum satisfies `pred`, given `pred` is
    /// monotone (true then false) along the prefix sums.
    fn count_prefix(&self, pred: impl Fn(f64) -> bool) -> usize {
        let mut pos = 0;
        let mut acc = 0.0;
        let mut step = self.top;
        while step > 0 {
            let next = pos + step;
            if next < self.tree.len() && pred(acc + self.tree[next]) {
                pos = next;
                acc += self.tree[next];
            }
            step >>= 1;
        }
        pos
    }
}

/// Column maxima `max_{i <= j} T(i:j)` and row minima `min_{j >= i} T(i:j)`
/// over all intervals of covariate points.
fn interval_extrema(groups: &[Vec<f64>], weights: &[f64], spec: &FunctionalSpec, bound: Bound) -> (Vec<f64>, Vec<f64>) {
    let n = groups.len();
    let mut colmax = vec![f64::NEG_INFINITY; n];
    let mut rowmin = vec![f64::INFINITY; n];
    let mut record = |i: usize, j: usize, t: f64| {
        if t > colmax[j] {
            colmax[j] = t;
        }
        if t < rowmin[i] {
            rowmin[i] = t;
        }
    };
    match *spec {
        FunctionalSpec::Mean => {
            let sums: Vec<f64> = groups.iter().map(|g| g.iter().sum()).collect();
            for i in 0..n {
                let (mut s, mut w) = (0.0, 0.0);
                for j in i..n {
                    s += weights[j] * sums[j];
                    w += weights[j] * groups[j].len() as f64;
                    record(i, j, s / w);
                }
            }
        }
        FunctionalSpec::Quantile { alpha } => {
            let mut obs: Vec<(f64, usize)> = groups
                .iter()
                .enumerate()
                .flat_map(|(i, g)| g.iter().map(move |&y| (y, i)))
                .collect();
            obs.sort_by(|a, b| cmp_f64(&a.0, &b.0));
            let sorted_values: Vec<f64> = obs.iter().map(|o| o.0).collect();
            let mut ranks: Vec<Vec<usize>> = vec![Vec::new(); n];
            for (r, &(_, i)) in obs.iter().enumerate() {
                ranks[i].push(r);
            }
            let mut fenwick = Fenwick::new(obs.len());
            for i in 0..n {
                fenwick.clear();
                let mut total = 0.0;
                for j in i..n {
                    for &r in &ranks[j] {
                        fenwick.add(r, weights[j]);
                    }
                    total += weights[j] * groups[j].len() as f64;
                    let k = match bound {
                        Bound::Lower => {
                            let target = alpha * total - QUANTILE_REL_EPS * total;
                            fenwick.count_prefix(|p| p < target)
                        }
                        Bound::Upper => {
                            let target = alpha * total + QUANTILE_REL_EPS * total;
                            fenwick.count_prefix(|p| p <= target)
                        }
                    };
                    record(i, j, sorted_values[k.min(obs.len() - 1)]);
                }
            }
        }
    }
    (colmax, rowmin)
}

/// Both min-max representations of the increasing fit:
/// `(min_{j >= l} max_{i <= j} T, max_{i <= l} min_{j >= i} T)`.
fn increasing_minmax(
    groups: &[Vec<f64>],
    weights: &[f64],
    spec: &FunctionalSpec,
    bound: Bound,
) -> (Vec<f64>, Vec<f64>) {
    let n = groups.len();
    let (colmax, rowmin) = interval_extrema(groups, weights, spec, bound);
    let mut min_max = colmax;
    for l in (0..n.saturating_sub(1)).rev() {
        min_max[l] = min_max[l].min(min_max[l + 1]);
    }
    let mut max_min = rowmin;
    for l in 1..n {
        max_min[l] = max_min[l].max(max_min[l - 1]);
    }
    (min_max, max_min)
}

/// Both min-max representations of the monotone fit in `direction`.
/// Decreasing fits are increasing fits on the index-reversed sample.
pub fn minmax_representations(
    sample: &ChainSample,
    weights: &[f64],
    spec: &FunctionalSpec,
    direction: Direction,
    bound: Bound,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_weights(sample, weights)?;
    match direction {
        Direction::Increasing => Ok(increasing_minmax(sample.groups(), weights, spec, bound)),
        Direction::Decreasing => {
            let groups: Vec<Vec<f64>> = sample.groups().iter().rev().cloned().collect();
            let w: Vec<f64> = weights.iter().rev().copied().collect();
            let (mut a, mut b) = increasing_minmax(&groups, &w, spec, bound);
            a.reverse();
            b.reverse();
            Ok((a, b))
        }
    }
}

/// Weighted monotone regression via the min-max formula.
///
/// `weights[i]` applies to every observation at covariate point `i`.
pub fn minmax_fit(
    sample: &ChainSample,
    weights: &[f64],
    spec: &FunctionalSpec,
    direction: Direction,
    bound: Bound,
) -> Result<MonotoneFit> {
    let (a, b) = minmax_representations(sample, weights, spec, direction, bound)?;
    debug_assert!(
        a.iter()
            .zip(&b)
            .all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0)),
        "min-max and max-min representations disagree"
    );
    Ok(MonotoneFit::from_monotone(a, direction, bound))
}

/// Pool-adjacent-violators for weighted means; `O(n)`.
pub fn pooled_mean_fit(values: &[f64], weights: &[f64], direction: Direction) -> Result<MonotoneFit> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if values.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: values.len(),
            actual: weights.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "weights must be positive and finite, got {w}"
        )));
    }
    let sign = match direction {
        Direction::Increasing => 1.0,
        Direction::Decreasing => -1.0,
    };
    // (weighted sum, weight, count) per block, on sign-adjusted values.
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((sign * v * w, w, 1));
        while blocks.len() > 1 {
            let (s1, w1, _) = blocks[blocks.len() - 1];
            let (s0, w0, _) = blocks[blocks.len() - 2];
            if s0 / w0 > s1 / w1 {
                let (s, w, c) = blocks.pop().unwrap();
                let last = blocks.last_mut().unwrap();
                last.0 += s;
                last.1 += w;
                last.2 += c;
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (s, w, c) in blocks {
        out.extend(std::iter::repeat_n(sign * (s / w), c));
    }
    Ok(MonotoneFit::from_monotone(out, direction, Bound::Lower))
}

/// Optimal antitonic least-squares fit, i.e. the decreasing mean fit.
pub fn antitonic_mean_fit(values: &[f64], weights: &[f64]) -> Result<MonotoneFit> {
    pooled_mean_fit(values, weights, Direction::Decreasing)
}

/// A block of pooled covariate points, carrying its sorted weighted observations.
struct QuantileBlock {
    sorted: Vec<(f64, f64)>,
    total: f64,
    value: f64,
    count: usize,
}

fn merge_sorted(a: Vec<(f64, f64)>, b: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i].0 <= b[j].0 {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

fn pooled_quantile_increasing(groups: &[Vec<f64>], weights: &[f64], alpha: f64, bound: Bound) -> Vec<f64> {
    let eval = |sorted: &[(f64, f64)], total: f64| match bound {
        Bound::Lower => lower_quantile_sorted(sorted, total, alpha),
        Bound::Upper => upper_quantile_sorted(sorted, total, alpha),
    };
    let mut blocks: Vec<QuantileBlock> = Vec::with_capacity(groups.len());
    for (g, &w) in groups.iter().zip(weights) {
        let mut sorted: Vec<(f64, f64)> = g.iter().map(|&y| (y, w)).collect();
        sorted.sort_by(|a, b| cmp_f64(&a.0, &b.0));
        let total = w * g.len() as f64;
        let value = eval(&sorted, total);
        blocks.push(QuantileBlock {
            sorted,
            total,
            value,
            count: 1,
        });
        while blocks.len() > 1 && blocks[blocks.len() - 2].value > blocks[blocks.len() - 1].value {
            let last = blocks.pop().unwrap();
            let prev = blocks.pop().unwrap();
            let sorted = merge_sorted(prev.sorted, last.sorted);
            let total = prev.total + last.total;
            let value = eval(&sorted, total);
            blocks.push(QuantileBlock {
                sorted,
                total,
                value,
                count: prev.count + last.count,
            });
        }
    }
    let mut out = Vec::with_capacity(groups.len());
    for b in blocks {
        out.extend(std::iter::repeat_n(b.value, b.count));
    }
    out
}

/// Pooling fast path for any supported functional. Produces the same fit as
/// [`minmax_fit`]: for the mean both bounds coincide, and for quantiles each
/// pooled block takes the requested bound of its weighted distribution.
pub fn pooled_fit(
    sample: &ChainSample,
    weights: &[f64],
    spec: &FunctionalSpec,
    direction: Direction,
    bound: Bound,
) -> Result<MonotoneFit> {
    check_weights(sample, weights)?;
    match *spec {
        FunctionalSpec::Mean => {
            let means: Vec<f64> = sample
                .groups()
                .iter()
                .map(|g| g.iter().sum::<f64>() / g.len() as f64)
                .collect();
            let w: Vec<f64> = weights
                .iter()
                .zip(sample.groups())
                .map(|(w, g)| w * g.len() as f64)
                .collect();
            let fit = pooled_mean_fit(&means, &w, direction)?;
            Ok(MonotoneFit::from_monotone(fit.into_values(), direction, bound))
        }
        FunctionalSpec::Quantile { alpha } => {
            let values = match direction {
                Direction::Increasing => pooled_quantile_increasing(sample.groups(), weights, alpha, bound),
                Direction::Decreasing => {
                    let groups: Vec<Vec<f64>> = sample.groups().iter().rev().cloned().collect();
                    let w: Vec<f64> = weights.iter().rev().copied().collect();
                    let mut v = pooled_quantile_increasing(&groups, &w, alpha, bound);
                    v.reverse();
                    v
                }
            };
            Ok(MonotoneFit::from_monotone(values, direction, bound))
        }
    }
}

/// Minimizers of the tail sums `sum_{i >= l} V(eta, P^w_{i:i})` over
/// `l in 0..=n` (0-based; `l = n` is the empty tail).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizingIndexSet {
    pub eta: f64,
    pub indices: Vec<usize>,
}

impl MinimizingIndexSet {
    pub fn smallest(&self) -> usize {
        self.indices[0]
    }

    /// The start of the superlevel set `{g >= eta}` of the lower fit when
    /// `eta` is not itself a fitted value.
    pub fn largest(&self) -> usize {
        *self.indices.last().unwrap()
    }

    pub fn contains(&self, l: usize) -> bool {
        self.indices.binary_search(&l).is_ok()
    }
}

/// Tail sums `t(l) = sum_{i >= l} w_i sum_k V(eta, y_ik)` for `l in 0..=n`.
pub fn tail_sums(eta: f64, sample: &ChainSample, weights: &[f64], spec: &FunctionalSpec) -> Result<Vec<f64>> {
    check_weights(sample, weights)?;
    let n = sample.len();
    let mut t = vec![0.0; n + 1];
    for i in (0..n).rev() {
        let v: f64 = sample.groups()[i].iter().map(|&y| spec.identification(eta, y)).sum();
        t[i] = t[i + 1] + weights[i] * v;
    }
    Ok(t)
}

pub fn minimizing_indices(
    eta: f64,
    sample: &ChainSample,
    weights: &[f64],
    spec: &FunctionalSpec,
) -> Result<MinimizingIndexSet> {
    let t = tail_sums(eta, sample, weights, spec)?;
    let scale: f64 = t.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let min = t.iter().copied().fold(f64::INFINITY, f64::min);
    let indices = t
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= min + 1e-12 * scale)
        .map(|(l, _)| l)
        .collect();
    Ok(MinimizingIndexSet { eta, indices })
}

/// Total base loss `sum_{i in range} sum_k L(values[i - range.start], y_ik)`.
pub fn base_loss_total(sample: &ChainSample, values: &[f64], spec: &FunctionalSpec, range: Range<usize>) -> f64 {
    sample.groups()[range]
        .iter()
        .zip(values)
        .map(|(g, &x)| g.iter().map(|&y| spec.base_loss(x, y)).sum::<f64>())
        .sum()
}
