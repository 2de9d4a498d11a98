//! Identification functions, base losses, elementary scores and the weight
//! functions that parameterize the joint loss
//! `H(x2) + h(x2) * (L(x1, y) - x2)`.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used when comparing a cumulative weight against `alpha * total`.
///
/// Interval weights are sums of floats, so `F(y) >= alpha` must tolerate a few
/// ulps of rounding; otherwise the lower quantile of e.g. ten unit-weight points
/// at `alpha = 0.3` would depend on how `0.3 * 10.0` happens to round.
pub(crate) const QUANTILE_REL_EPS: f64 = 1e-12;

/// Which functional `T` is being fitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionalSpec {
    /// The `alpha`-quantile with loss `(1/alpha) 1{y <= x} (x - y) - x`.
    Quantile { alpha: f64 },
    /// The mean with squared error loss.
    Mean,
}

/// Lower or upper end of the interval `[T-, T+]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Lower,
    Upper,
}

impl FunctionalSpec {
    pub fn quantile(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "quantile level must lie in (0, 1), got {alpha}"
            )));
        }
        Ok(FunctionalSpec::Quantile { alpha })
    }

    pub fn mean() -> Self {
        FunctionalSpec::Mean
    }

    /// Identification function `V(x, y)`, nondecreasing and left-continuous in `x`.
    pub fn identification(&self, x: f64, y: f64) -> f64 {
        match *self {
            FunctionalSpec::Quantile { alpha } => indicator(y < x) - alpha,
            FunctionalSpec::Mean => x - y,
        }
    }

    /// The factor `1{eta > y} - alpha` used in the textbook quantile
    /// elementary score. Identical to [`identification`](Self::identification);
    /// kept separate so the two forms can be checked against each other.
    pub fn identification_elementary_form(&self, eta: f64, y: f64) -> f64 {
        match *self {
            FunctionalSpec::Quantile { alpha } => indicator(eta > y) - alpha,
            FunctionalSpec::Mean => eta - y,
        }
    }

    /// Strictly consistent base loss `L(x, y)`.
    pub fn base_loss(&self, x: f64, y: f64) -> f64 {
        match *self {
            FunctionalSpec::Quantile { alpha } => indicator(y <= x) * (x - y) / alpha - x,
            FunctionalSpec::Mean => (x - y) * (x - y),
        }
    }

    pub fn is_singleton_valued(&self) -> bool {
        matches!(self, FunctionalSpec::Mean)
    }

    /// `V(x, P) = sum_i w_i V(x, y_i) / sum_i w_i`.
    pub fn eval_identification(&self, x: f64, dist: &WeightedSample) -> f64 {
        let total: f64 = dist.weights.iter().sum();
        dist.values
            .iter()
            .zip(&dist.weights)
            .map(|(&y, &w)| w * self.identification(x, y))
            .sum::<f64>()
            / total
    }

    /// `(T-(P), T+(P))` for a weighted empirical distribution.
    pub fn bounds(&self, dist: &WeightedSample) -> (f64, f64) {
        match *self {
            FunctionalSpec::Mean => {
                let m = weighted_mean(&dist.values, &dist.weights);
                (m, m)
            }
            FunctionalSpec::Quantile { alpha } => {
                let sorted = dist.sorted_pairs();
                let total: f64 = dist.weights.iter().sum();
                (
                    lower_quantile_sorted(&sorted, total, alpha),
                    upper_quantile_sorted(&sorted, total, alpha),
                )
            }
        }
    }

    pub fn bound(&self, dist: &WeightedSample, bound: Bound) -> f64 {
        let (lo, hi) = self.bounds(dist);
        match bound {
            Bound::Lower => lo,
            Bound::Upper => hi,
        }
    }
}

impl fmt::Display for FunctionalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionalSpec::Quantile { alpha } => write!(f, "quantile({alpha})"),
            FunctionalSpec::Mean => write!(f, "mean"),
        }
    }
}

#[inline]
pub(crate) fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub(crate) fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let (s, w) = values
        .iter()
        .zip(weights)
        .fold((0.0, 0.0), |(s, tw), (&y, &w)| (s + w * y, tw + w));
    s / w
}

pub(crate) fn cmp_f64(a: &f64, b: &f64) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// Smallest `y` with `F(y) >= alpha`, i.e. `sup{x : V(x, P) < 0}`.
/// `sorted` holds `(value, weight)` pairs in ascending value order.
pub(crate) fn lower_quantile_sorted(sorted: &[(f64, f64)], total: f64, alpha: f64) -> f64 {
    let target = alpha * total - QUANTILE_REL_EPS * total;
    let mut cum = 0.0;
    for &(y, w) in sorted {
        cum += w;
        if cum >= target {
            return y;
        }
    }
    sorted.last().map(|p| p.0).unwrap_or(f64::NAN)
}

/// Smallest `y` with `F(y) > alpha`, i.e. `inf{x : V(x, P) > 0}`.
pub(crate) fn upper_quantile_sorted(sorted: &[(f64, f64)], total: f64, alpha: f64) -> f64 {
    let target = alpha * total + QUANTILE_REL_EPS * total;
    let mut cum = 0.0;
    for &(y, w) in sorted {
        cum += w;
        if cum > target {
            return y;
        }
    }
    sorted.last().map(|p| p.0).unwrap_or(f64::NAN)
}

/// Finite weighted empirical distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSample {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedSample {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
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
        if values.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidParameter("values must be finite".into()));
        }
        Ok(WeightedSample { values, weights })
    }

    pub fn unweighted(values: Vec<f64>) -> Result<Self> {
        let weights = vec![1.0; values.len()];
        Self::new(values, weights)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Multiply every weight by `factor > 0`.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.values.clone(), self.weights.iter().map(|w| w * factor).collect())
    }

    pub(crate) fn sorted_pairs(&self) -> Vec<(f64, f64)> {
        let mut pairs: Vec<(f64, f64)> = self.values.iter().copied().zip(self.weights.iter().copied()).collect();
        pairs.sort_by(|a, b| cmp_f64(&a.0, &b.0));
        pairs
    }
}

/// Named weight functions `h` for the joint loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightFnName {
    /// `h(x) = 1 / (2 sqrt(x))`, the 1/2-homogeneous choice for (quantile, ES).
    H1Es,
    /// `h(x) = exp(-x)`.
    H2Es,
    /// `h(x) = 1 / (x + 0.1)`.
    H1Var,
    /// `h(x) = exp(-x / 50 + 0.1)`.
    H2Var,
    /// `h(x) = 1`; the joint loss collapses to the base loss.
    Constant,
}

impl WeightFnName {
    pub const ALL: [WeightFnName; 5] = [
        WeightFnName::H1Es,
        WeightFnName::H2Es,
        WeightFnName::H1Var,
        WeightFnName::H2Var,
        WeightFnName::Constant,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            WeightFnName::H1Es => "h1_es",
            WeightFnName::H2Es => "h2_es",
            WeightFnName::H1Var => "h1_var",
            WeightFnName::H2Var => "h2_var",
            WeightFnName::Constant => "constant",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|w| w.as_str() == s)
    }
}

impl fmt::Display for WeightFnName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Default clamp threshold for `h1_es`, which is undefined for `x <= 0`.
pub const H1_ES_FLOOR: f64 = 1e-3;

/// A positive nonincreasing weight function together with its primitive
/// `H(r) = int_0^r h`. Arguments below `floor` are evaluated at `floor`, and the
/// primitive is that of the clamped function, so `H` stays consistent with `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    name: WeightFnName,
    floor: f64,
}

impl WeightFunction {
    pub fn new(name: WeightFnName) -> Self {
        let floor = match name {
            WeightFnName::H1Es => H1_ES_FLOOR,
            WeightFnName::H1Var => -0.1 + 1e-3,
            WeightFnName::H2Es | WeightFnName::H2Var | WeightFnName::Constant => f64::NEG_INFINITY,
        };
        WeightFunction { name, floor }
    }

    pub fn with_floor(name: WeightFnName, floor: f64) -> Self {
        WeightFunction { name, floor }
    }

    pub fn name(&self) -> WeightFnName {
        self.name
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    fn raw_h(&self, x: f64) -> f64 {
        match self.name {
            WeightFnName::H1Es => 0.5 / x.sqrt(),
            WeightFnName::H2Es => (-x).exp(),
            WeightFnName::H1Var => 1.0 / (x + 0.1),
            WeightFnName::H2Var => (-x / 50.0 + 0.1).exp(),
            WeightFnName::Constant => 1.0,
        }
    }

    /// Symbolic primitive of the unclamped `h`, normalized so that it vanishes at 0
    /// whenever 0 is inside the natural domain.
    fn raw_primitive(&self, r: f64) -> f64 {
        match self.name {
            WeightFnName::H1Es => r.sqrt(),
            WeightFnName::H2Es => -(-r).exp_m1(),
            WeightFnName::H1Var => (r + 0.1).ln() - 0.1f64.ln(),
            WeightFnName::H2Var => 50.0 * 0.1f64.exp() * -(-r / 50.0).exp_m1(),
            WeightFnName::Constant => r,
        }
    }

    fn raw_ln_h(&self, x: f64) -> f64 {
        match self.name {
            WeightFnName::H1Es => 0.5f64.ln() - 0.5 * x.ln(),
            WeightFnName::H2Es => -x,
            WeightFnName::H1Var => -(x + 0.1).ln(),
            WeightFnName::H2Var => -x / 50.0 + 0.1,
            WeightFnName::Constant => 0.0,
        }
    }

    /// `h(x)` after clamping; the flag reports whether the clamp was active.
    /// Values too small for `f64` underflow to zero.
    pub fn weight(&self, x: f64) -> Result<(f64, bool)> {
        let (_, clamped) = self.ln_weight(x)?;
        let h = self.raw_h(if clamped { self.floor } else { x });
        Ok((h, clamped))
    }

    /// `ln h(x)` after clamping, with the clamp flag.
    pub fn ln_weight(&self, x: f64) -> Result<(f64, bool)> {
        if !x.is_finite() {
            return Err(Error::Domain {
                name: self.name.as_str(),
                x,
            });
        }
        let clamped = x < self.floor;
        let ln_h = self.raw_ln_h(if clamped { self.floor } else { x });
        if !ln_h.is_finite() {
            return Err(Error::Domain {
                name: self.name.as_str(),
                x,
            });
        }
        Ok((ln_h, clamped))
    }

    /// `h(x)`, discarding the clamp flag.
    pub fn h(&self, x: f64) -> Result<f64> {
        self.weight(x).map(|(h, _)| h)
    }

    /// `H(r) = int_0^r h(max(x, floor)) dx`.
    pub fn primitive(&self, r: f64) -> Result<f64> {
        if !r.is_finite() {
            return Err(Error::Domain {
                name: self.name.as_str(),
                x: r,
            });
        }
        let f = self.floor;
        let value = if f <= 0.0 {
            if r >= f {
                self.raw_primitive(r)
            } else {
                self.raw_primitive(f) + (r - f) * self.raw_h(f)
            }
        } else if r >= f {
            f * self.raw_h(f) + self.raw_primitive(r) - self.raw_primitive(f)
        } else {
            r * self.raw_h(f)
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::Domain {
                name: self.name.as_str(),
                x: r,
            })
        }
    }
}

/// `H(x2) + h(x2) * (L(x1, y) - x2)`.
pub fn joint_loss(spec: &FunctionalSpec, w: &WeightFunction, x1: f64, x2: f64, y: f64) -> Result<f64> {
    let h = w.h(x2)?;
    Ok(w.primitive(x2)? + h * (spec.base_loss(x1, y) - x2))
}

/// `(1{eta <= x1} - 1{eta <= y}) V(eta, y)`.
pub fn elementary_score_1(spec: &FunctionalSpec, eta: f64, x1: f64, y: f64) -> f64 {
    (indicator(eta <= x1) - indicator(eta <= y)) * spec.identification(eta, y)
}

/// `1{eta <= -x2} (L(x1, y) + eta) - 1{eta <= 0} eta`.
pub fn elementary_score_2(spec: &FunctionalSpec, eta: f64, x1: f64, x2: f64, y: f64) -> f64 {
    indicator(eta <= -x2) * (spec.base_loss(x1, y) + eta) - indicator(eta <= 0.0) * eta
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridConstruction {
    /// Uniform points over the padded data range plus every distinct value.
    FromData {
        resolution: usize,
    },
    Explicit,
}

/// Strictly increasing set of thresholds `eta` for elementary scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaGrid {
    points: Vec<f64>,
    construction: GridConstruction,
}

/// Default number of uniform points in a data-driven grid.
pub const DEFAULT_GRID_RESOLUTION: usize = 401;

impl EtaGrid {
    pub fn explicit(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        if points.iter().any(|p| !p.is_finite()) || points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "grid points must be finite and strictly increasing".into(),
            ));
        }
        Ok(EtaGrid {
            points,
            construction: GridConstruction::Explicit,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn construction(&self) -> GridConstruction {
        self.construction
    }
}

/// Grid spanning the data range padded by 10% on each side, with `resolution`
/// uniform points plus every distinct input value (the breakpoints of
/// piecewise-linear Murphy curves).
pub fn make_eta_grid(sample_values: &[f64], resolution: usize) -> Result<EtaGrid> {
    let finite: Vec<f64> = sample_values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() || resolution == 0 {
        return Err(Error::EmptyInput);
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let margin = if span > 0.0 {
        0.1 * span
    } else {
        0.1 * lo.abs().max(1.0)
    };
    let (a, b) = (lo - margin, hi + margin);
    let mut points = finite;
    if resolution == 1 {
        points.push(0.5 * (a + b));
    } else {
        let step = (b - a) / (resolution - 1) as f64;
        points.extend((0..resolution).map(|k| a + step * k as f64));
    }
    points.sort_by(cmp_f64);
    points.dedup();
    Ok(EtaGrid {
        points,
        construction: GridConstruction::FromData { resolution },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ws(v: &[f64]) -> WeightedSample {
        WeightedSample::unweighted(v.to_vec()).unwrap()
    }

    #[test]
    fn identification_examples() {
        assert_eq!(FunctionalSpec::Mean.eval_identification(2.0, &ws(&[1.0, 3.0])), 0.0);
        let q5 = FunctionalSpec::quantile(0.5).unwrap();
        assert_eq!(q5.eval_identification(10.0, &ws(&[1.0, 2.0, 3.0])), 0.5);
        let q3 = FunctionalSpec::quantile(0.3).unwrap();
        assert_relative_eq!(
            q3.eval_identification(2.0, &ws(&[1.0, 2.0, 3.0])),
            1.0 / 3.0 - 0.3,
            epsilon = 1e-15
        );
    }

    #[test]
    fn bounds_examples() {
        assert_eq!(FunctionalSpec::Mean.bounds(&ws(&[3.0, 1.0, 2.0])), (2.0, 2.0));
        let q = FunctionalSpec::quantile(0.5).unwrap();
        assert_eq!(q.bounds(&ws(&[1.0, 2.0])), (1.0, 2.0));
        assert_eq!(q.bounds(&ws(&[1.0, 2.0, 3.0])), (2.0, 2.0));
    }

    #[test]
    fn quantile_bounds_are_sign_changes_of_identification() {
        // Brute force: scan x over a fine grid, locate sup{V<0} and inf{V>0}.
        let data = ws(&[0.3, -1.2, 4.0, 4.0, 2.5, 0.3, 7.1]);
        for alpha in [0.1, 0.25, 0.5, 0.7, 0.9] {
            let spec = FunctionalSpec::quantile(alpha).unwrap();
            let (lo, hi) = spec.bounds(&data);
            let mut candidates: Vec<f64> = data.values().to_vec();
            candidates.sort_by(cmp_f64);
            // V(x,P) only changes just above data points.
            let sup_neg = candidates
                .iter()
                .copied()
                .filter(|&y| spec.eval_identification(y, &data) < 0.0)
                .fold(f64::NEG_INFINITY, f64::max);
            let inf_pos = candidates
                .iter()
                .copied()
                .filter(|&y| spec.eval_identification(y + 1e-9, &data) > 0.0)
                .fold(f64::INFINITY, f64::min);
            assert_eq!(lo, sup_neg, "alpha {alpha}");
            assert_eq!(hi, inf_pos, "alpha {alpha}");
        }
    }

    #[test]
    fn bounds_invariant_under_weight_rescaling() {
        let d = WeightedSample::new(vec![1.0, 5.0, 2.0, 2.0], vec![0.3, 1.7, 0.2, 2.2]).unwrap();
        for spec in [FunctionalSpec::Mean, FunctionalSpec::quantile(0.37).unwrap()] {
            let (a, b) = spec.bounds(&d);
            for lambda in [1e-3, 0.5, 7.0, 1e4] {
                let (c, e) = spec.bounds(&d.rescaled(lambda).unwrap());
                assert_relative_eq!(a, c, max_relative = 1e-12);
                assert_relative_eq!(b, e, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn weighted_sample_rejects_bad_input() {
        assert_eq!(WeightedSample::unweighted(vec![]), Err(Error::EmptyInput));
        assert!(WeightedSample::new(vec![1.0], vec![0.0]).is_err());
        assert!(WeightedSample::new(vec![1.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn elementary_score_examples() {
        let mean = FunctionalSpec::Mean;
        let q5 = FunctionalSpec::quantile(0.5).unwrap();
        assert_eq!(elementary_score_1(&mean, 5.0, 1.0, 2.0), 0.0);
        assert_eq!(elementary_score_1(&q5, 5.0, 1.0, 2.0), 0.0);
        assert_eq!(elementary_score_1(&mean, 1.5, 2.0, 1.0), 0.5);
        assert_eq!(elementary_score_1(&q5, 1.5, 2.0, 1.0), 0.5);

        assert_eq!(elementary_score_2(&mean, 0.0, 3.0, 1.0, -2.0), 0.0);
        assert_eq!(elementary_score_2(&mean, 0.0, 1.0, -1.0, 0.0), 1.0);
        assert_eq!(elementary_score_2(&q5, -3.0, 1.0, 2.0, 0.0), 1.0);
    }

    #[test]
    fn quantile_identification_forms_agree() {
        let spec = FunctionalSpec::quantile(0.3).unwrap();
        for &(x, y) in &[(1.0, 1.0), (0.5, 1.0), (2.0, 1.0), (-3.0, -3.0)] {
            assert_eq!(spec.identification(x, y), spec.identification_elementary_form(x, y));
        }
    }

    #[test]
    fn identification_is_nondecreasing_and_left_continuous() {
        let ys = [-1.0, 0.0, 0.5, 2.0];
        for spec in [FunctionalSpec::Mean, FunctionalSpec::quantile(0.4).unwrap()] {
            for &y in &ys {
                let xs: Vec<f64> = (-40..=40).map(|k| k as f64 * 0.1).collect();
                for w in xs.windows(2) {
                    assert!(spec.identification(w[0], y) <= spec.identification(w[1], y));
                }
                let left = spec.identification(y - 1e-12, y);
                assert!((spec.identification(y, y) - left).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn joint_loss_examples() {
        let mean = FunctionalSpec::Mean;
        let h2 = WeightFunction::new(WeightFnName::H2Es);
        assert_eq!(joint_loss(&mean, &h2, 1.0, 0.0, 0.0).unwrap(), 1.0);

        let c = WeightFunction::new(WeightFnName::Constant);
        let q = FunctionalSpec::quantile(0.2).unwrap();
        for &(x1, x2, y) in &[(1.0, 3.0, 0.0), (-2.0, -7.5, 4.0)] {
            assert_relative_eq!(
                joint_loss(&q, &c, x1, x2, y).unwrap(),
                q.base_loss(x1, y),
                epsilon = 1e-12
            );
        }

        let h1 = WeightFunction::new(WeightFnName::H1Var);
        let v = joint_loss(&mean, &h1, 0.0, 0.9, 1.0).unwrap();
        assert_relative_eq!(v, 10f64.ln() + 0.1, epsilon = 1e-12);
        assert_relative_eq!(v, 2.4026, epsilon = 1e-4);
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            let x = a + h * k as f64;
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn primitives_match_quadrature() {
        for name in WeightFnName::ALL {
            let w = WeightFunction::new(name);
            let points: &[f64] = match name {
                WeightFnName::H1Es => &[0.0005, 0.3, 2.0, 9.0, -1.5],
                WeightFnName::H1Var => &[-0.05, 0.9, 3.0, 40.0],
                _ => &[-3.0, 0.5, 2.0, 60.0],
            };
            for &r in points {
                // Split at the clamp floor so Simpson sees a smooth integrand.
                let h = |x: f64| w.h(x).unwrap();
                let quad = if w.floor() > 0.0 && r > w.floor() {
                    simpson(h, 0.0, w.floor(), 2000) + simpson(h, w.floor(), r, 200_000)
                } else {
                    simpson(h, 0.0, r, 200_000)
                };
                assert_relative_eq!(w.primitive(r).unwrap(), quad, max_relative = 1e-7, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn primitive_derivative_is_weight() {
        let delta = 1e-5;
        for name in WeightFnName::ALL {
            let w = WeightFunction::new(name);
            for &r in &[0.2, 1.0, 5.0, 30.0] {
                let diff = w.primitive(r + delta).unwrap() - w.primitive(r).unwrap();
                assert!((diff - delta * w.h(r).unwrap()).abs() < 1e-8, "{name} at {r}");
            }
        }
    }

    #[test]
    fn weights_positive_and_nonincreasing() {
        for name in WeightFnName::ALL {
            let w = WeightFunction::new(name);
            let xs: Vec<f64> = (-50..=200).map(|k| k as f64 * 0.5).collect();
            for pair in xs.windows(2) {
                let a = w.h(pair[0]).unwrap();
                let b = w.h(pair[1]).unwrap();
                assert!(a > 0.0 && b > 0.0);
                assert!(b <= a, "{name} increases between {} and {}", pair[0], pair[1]);
            }
        }
    }

    #[test]
    fn h1_es_clamps_nonpositive_arguments() {
        let w = WeightFunction::new(WeightFnName::H1Es);
        let (h, clamped) = w.weight(-4.0).unwrap();
        assert!(clamped);
        assert_relative_eq!(h, 0.5 / H1_ES_FLOOR.sqrt());
        assert!(!w.weight(4.0).unwrap().1);
        assert!(w.weight(f64::NAN).is_err());
        assert!(w.weight(f64::INFINITY).is_err());
    }

    #[test]
    fn eta_grid_contract() {
        let g = make_eta_grid(&[1.0, 2.0], 2).unwrap();
        assert!(g.points().contains(&1.0) && g.points().contains(&2.0));

        let g = make_eta_grid(&[0.0, 0.0, 0.0], 5).unwrap();
        assert!(g.points().first().unwrap() < &0.0 && g.points().last().unwrap() > &0.0);
        assert!(g.points().windows(2).all(|w| w[0] < w[1]));

        assert_eq!(make_eta_grid(&[], 10), Err(Error::EmptyInput));
        assert!(EtaGrid::explicit(vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn pinball_consistency_on_value_grid() {
        // Average base loss is minimized on [T-, T+] and strictly larger outside.
        let d = ws(&[0.0, 1.0, 1.0, 3.0, 8.0, -2.0]);
        for spec in [
            FunctionalSpec::Mean,
            FunctionalSpec::quantile(0.5).unwrap(),
            FunctionalSpec::quantile(0.2).unwrap(),
        ] {
            let (lo, hi) = spec.bounds(&d);
            let avg = |x: f64| d.values().iter().map(|&y| spec.base_loss(x, y)).sum::<f64>();
            let best = avg(0.5 * (lo + hi));
            for k in -100..=200 {
                let x = k as f64 * 0.05;
                let v = avg(x);
                if x < lo - 1e-12 || x > hi + 1e-12 {
                    assert!(v > best + 1e-12, "{spec}: x={x}");
                } else {
                    assert!((v - best).abs() < 1e-9);
                }
            }
        }
    }
}
