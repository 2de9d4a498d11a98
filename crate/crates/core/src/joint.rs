//! The bivariate problem: fit `g1` for `T` and `g2` for its Bayes risk under
//! the joint loss `H(g2) + h(g2) (L(g1, y) - g2)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{Bound, FunctionalSpec, WeightFnName, WeightFunction};
use crate::monotone::{pooled_fit, pooled_mean_fit, Direction, MonotoneFit};
use crate::sample::ChainSample;

/// The two supported (functional, Bayes risk) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pair", rename_all = "snake_case")]
pub enum PairKind {
    /// (alpha-quantile, expected shortfall): `g1` increasing, `g2` decreasing.
    QuantileEs { alpha: f64 },
    /// (mean, variance): both increasing.
    MeanVariance,
}

impl PairKind {
    pub fn quantile_es(alpha: f64) -> Result<Self> {
        FunctionalSpec::quantile(alpha)?;
        Ok(PairKind::QuantileEs { alpha })
    }

    pub fn spec(&self) -> FunctionalSpec {
        match *self {
            PairKind::QuantileEs { alpha } => FunctionalSpec::Quantile { alpha },
            PairKind::MeanVariance => FunctionalSpec::Mean,
        }
    }

    pub fn g2_direction(&self) -> Direction {
        match self {
            PairKind::QuantileEs { .. } => Direction::Decreasing,
            PairKind::MeanVariance => Direction::Increasing,
        }
    }
}

impl fmt::Display for PairKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairKind::QuantileEs { alpha } => write!(f, "qes(alpha={alpha})"),
            PairKind::MeanVariance => write!(f, "meanvar"),
        }
    }
}

/// How a [`BivariateFit`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitOrigin {
    /// The unweighted lower fit and its induced Bayes-risk fit.
    UnweightedCanonical,
    Weighted(WeightFnName),
    /// A refit on part of the sample, used as a Murphy-diagram competitor.
    Competitor,
}

impl fmt::Display for FitOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitOrigin::UnweightedCanonical => f.write_str("unweighted-canonical"),
            FitOrigin::Weighted(w) => write!(f, "{w}"),
            FitOrigin::Competitor => f.write_str("competitor"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateFit {
    pub g1: MonotoneFit,
    pub g2: MonotoneFit,
    pub pair: PairKind,
    pub origin: FitOrigin,
    /// Completed improvement cycles; the canonical pair is iteration 0.
    pub iterations: usize,
    pub converged: bool,
    /// Number of weight evaluations that hit the weight function's floor.
    pub clamp_warnings: usize,
    /// Joint loss after each accepted cycle, starting with the canonical pair.
    pub loss_history: Vec<f64>,
    /// Uncounted cycles run after the stopping rule to reach a fixed point.
    #[serde(default)]
    pub polish_steps: usize,
}

impl BivariateFit {
    pub fn len(&self) -> usize {
        self.g1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g1.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    /// Stop once a full cycle improves the joint loss by less than this.
    pub loss_tolerance: f64,
    pub max_iterations: usize,
}

impl ConvergenceConfig {
    /// Smallest improvement counted as progress: the absolute tolerance, raised to
    /// the rounding noise of an `n`-term sum when the loss is large.
    pub fn improvement_threshold(&self, loss: f64, n: usize) -> f64 {
        self.loss_tolerance.max(n as f64 * f64::EPSILON * loss.abs())
    }
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            loss_tolerance: 1e-10,
            max_iterations: 200,
        }
    }
}

fn check_len(sample: &ChainSample, len: usize) -> Result<()> {
    if sample.len() != len {
        return Err(Error::DimensionMismatch {
            expected: sample.len(),
            actual: len,
        });
    }
    Ok(())
}

/// `sum_i sum_k [H(g2_i) + h(g2_i) (L(g1_i, y_ik) - g2_i)]`.
pub fn total_joint_loss_values(
    sample: &ChainSample,
    spec: &FunctionalSpec,
    w: &WeightFunction,
    g1: &[f64],
    g2: &[f64],
) -> Result<f64> {
    check_len(sample, g1.len())?;
    check_len(sample, g2.len())?;
    let mut total = 0.0;
    for ((group, &x1), &x2) in sample.groups().iter().zip(g1).zip(g2) {
        let h = w.h(x2)?;
        let big_h = w.primitive(x2)?;
        for &y in group {
            total += big_h + h * (spec.base_loss(x1, y) - x2);
        }
    }
    Ok(total)
}

pub fn total_joint_loss(fit: &BivariateFit, sample: &ChainSample, w: &WeightFunction) -> Result<f64> {
    total_joint_loss_values(sample, &fit.pair.spec(), w, fit.g1.values(), fit.g2.values())
}

/// Per-point means of the transformed responses `L(g1(z_i), y_ik)`.
pub fn transformed_losses(sample: &ChainSample, spec: &FunctionalSpec, g1: &[f64]) -> Result<Vec<f64>> {
    check_len(sample, g1.len())?;
    Ok(sample
        .groups()
        .iter()
        .zip(g1)
        .map(|(g, &x)| g.iter().map(|&y| spec.base_loss(x, y)).sum::<f64>() / g.len() as f64)
        .collect())
}

/// Optimal `g2` for fixed `g1`: the monotone mean fit of the transformed losses.
pub fn fit_g2_given_g1(
    sample: &ChainSample,
    g1: &MonotoneFit,
    spec: &FunctionalSpec,
    g2_direction: Direction,
) -> Result<MonotoneFit> {
    let losses = transformed_losses(sample, spec, g1.values())?;
    let mult: Vec<f64> = sample.groups().iter().map(|g| g.len() as f64).collect();
    pooled_mean_fit(&losses, &mult, g2_direction)
}

/// Weights proportional to `h(g2_i)`, computed from `ln h` relative to the
/// largest weight and floored at the smallest positive `f64`, then rescaled so
/// that `sum_i mult_i w_i = sum_i mult_i`. Returns the weights and the number
/// of clamped evaluations.
pub(crate) fn relative_weights(g2: &[f64], mult: &[usize], w: &WeightFunction) -> Result<(Vec<f64>, usize)> {
    let mut clamps = 0;
    let mut logs = Vec::with_capacity(g2.len());
    for &x in g2 {
        let (ln_h, clamped) = w.ln_weight(x)?;
        clamps += clamped as usize;
        logs.push(ln_h);
    }
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = logs.iter().map(|l| (l - top).exp().max(f64::MIN_POSITIVE)).collect();
    let mass: f64 = weights.iter().zip(mult).map(|(w, &m)| w * m as f64).sum();
    let scale = mult.iter().sum::<usize>() as f64 / mass;
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Domain {
            name: w.name().as_str(),
            x: mass,
        });
    }
    weights
        .iter_mut()
        .for_each(|v| *v = (*v * scale).max(f64::MIN_POSITIVE));
    Ok((weights, clamps))
}

/// Point weights `h(g2_i)` rescaled so that observation weights sum to the
/// number of observations. Returns the weights and the number of clamped points.
pub fn weights_from_g2(sample: &ChainSample, g2: &[f64], w: &WeightFunction) -> Result<(Vec<f64>, usize)> {
    check_len(sample, g2.len())?;
    relative_weights(g2, &sample.multiplicities(), w)
}

/// Lower min-max fit of `g1` with weights proportional to `h(g2)`.
/// Returns the fit and the number of clamped weight evaluations.
pub fn fit_g1_given_g2(
    sample: &ChainSample,
    g2: &MonotoneFit,
    spec: &FunctionalSpec,
    w: &WeightFunction,
) -> Result<(MonotoneFit, usize)> {
    let (weights, clamps) = weights_from_g2(sample, g2.values(), w)?;
    let fit = pooled_fit(sample, &weights, spec, Direction::Increasing, Bound::Lower)?;
    Ok((fit, clamps))
}

/// The unweighted lower fit `g1` and the induced Bayes-risk fit `g2`.
pub fn canonical_pair(sample: &ChainSample, pair: PairKind) -> Result<BivariateFit> {
    let spec = pair.spec();
    let g1 = pooled_fit(
        sample,
        &vec![1.0; sample.len()],
        &spec,
        Direction::Increasing,
        Bound::Lower,
    )?;
    let g2 = fit_g2_given_g1(sample, &g1, &spec, pair.g2_direction())?;
    Ok(BivariateFit {
        g1,
        g2,
        pair,
        origin: FitOrigin::UnweightedCanonical,
        iterations: 0,
        converged: true,
        clamp_warnings: 0,
        loss_history: Vec::new(),
        polish_steps: 0,
    })
}

/// Relative tolerance under which successive `g1`/`g2` values count as repeated.
pub const FIXED_POINT_TOLERANCE: f64 = 1e-13;

pub(crate) fn same_values(a: &[f64], b: &[f64]) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= FIXED_POINT_TOLERANCE * x.abs().max(y.abs()).max(1.0))
}

/// Uncounted cycles after the stopping rule, run until both components
/// reproduce themselves. A cycle raising the loss beyond rounding is rejected
/// and marks the fit as not converged.
fn polish(
    sample: &ChainSample,
    pair: PairKind,
    w: &WeightFunction,
    cfg: &ConvergenceConfig,
    fit: &mut BivariateFit,
    mut loss: f64,
) -> Result<()> {
    let spec = pair.spec();
    for _ in 0..cfg.max_iterations {
        let (g1, clamps) = fit_g1_given_g2(sample, &fit.g2, &spec, w)?;
        fit.clamp_warnings += clamps;
        let g2 = fit_g2_given_g1(sample, &g1, &spec, pair.g2_direction())?;
        if same_values(g1.values(), fit.g1.values()) && same_values(g2.values(), fit.g2.values()) {
            return Ok(());
        }
        let new_loss = total_joint_loss_values(sample, &spec, w, g1.values(), g2.values())?;
        if new_loss - loss > cfg.improvement_threshold(loss, sample.len()) {
            break;
        }
        fit.g1 = g1;
        fit.g2 = g2;
        fit.polish_steps += 1;
        loss = loss.min(new_loss);
    }
    fit.converged = false;
    Ok(())
}

/// Alternating minimization starting from the canonical pair.
///
/// Each cycle refits `g1` with weights `h(g2)` and then `g2` given the new
/// `g1`. A cycle is accepted (and counted) only when it lowers the joint loss
/// by at least [`ConvergenceConfig::improvement_threshold`]; the first cycle that does not, or that
/// reproduces `g1` exactly, ends the run with `converged = true`. Hitting
/// `cfg.max_iterations` returns the current fit with `converged = false`.
/// A converged run is then polished to a mutual fixed point of the two refits.
pub fn alternating_solve(
    sample: &ChainSample,
    pair: PairKind,
    w: &WeightFunction,
    cfg: &ConvergenceConfig,
) -> Result<BivariateFit> {
    let spec = pair.spec();
    let mut fit = canonical_pair(sample, pair)?;
    fit.origin = FitOrigin::Weighted(w.name());
    fit.converged = false;
    let mut loss = total_joint_loss(&fit, sample, w)?;
    fit.loss_history.push(loss);
    if sample.len() == 1 {
        fit.converged = true;
        return Ok(fit);
    }
    for _ in 0..cfg.max_iterations {
        let (g1, clamps) = fit_g1_given_g2(sample, &fit.g2, &spec, w)?;
        fit.clamp_warnings += clamps;
        if g1.values() == fit.g1.values() {
            fit.converged = true;
            break;
        }
        let g2 = fit_g2_given_g1(sample, &g1, &spec, pair.g2_direction())?;
        let new_loss = total_joint_loss_values(sample, &spec, w, g1.values(), g2.values())?;
        if !(loss - new_loss >= cfg.improvement_threshold(loss, sample.len())) {
            fit.converged = true;
            break;
        }
        fit.g1 = g1;
        fit.g2 = g2;
        fit.iterations += 1;
        loss = new_loss;
        fit.loss_history.push(loss);
    }
    if fit.converged {
        polish(sample, pair, w, cfg, &mut fit, loss)?;
    }
    Ok(fit)
}
