//! Simultaneous optimality of the canonical pair and Murphy-diagram data.

use std::fmt;
use std::fmt::Write as _;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::format_sig;
use crate::functional::{
    elementary_score_1, elementary_score_2, make_eta_grid, Bound, EtaGrid, FunctionalSpec, DEFAULT_GRID_RESOLUTION,
};
use crate::joint::{canonical_pair, fit_g2_given_g1, transformed_losses, BivariateFit, FitOrigin, PairKind};
use crate::monotone::{base_loss_total, pooled_fit, Direction, MonotoneFit};
use crate::sample::ChainSample;

/// Default absolute tolerance (scaled by `max(1, |refit loss|)`).
pub const DEFAULT_AUDIT_TOLERANCE: f64 = 1e-9;

/// Part of the sample on which a breakpoint is checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// Points `m..n`; used when `g2` is decreasing.
    Suffix,
    /// Points `0..m`; used when `g2` is increasing.
    Prefix,
}

/// Which breakpoints are checked.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerMode {
    /// A strict `g2` jump between `m - 1` and `m` inside a constant run of `g1`.
    #[default]
    Proposition,
    /// Every strict `g2` jump, regardless of `g1`.
    Prose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditOptions {
    pub tolerance: f64,
    pub mode: TriggerMode,
    pub comparison: Comparison,
    /// Check breakpoints from the largest `m` down and stop at the first failure.
    pub stop_at_first_failure: bool,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions {
            tolerance: DEFAULT_AUDIT_TOLERANCE,
            mode: TriggerMode::Proposition,
            comparison: Comparison::Values,
            stop_at_first_failure: false,
        }
    }
}

/// How the restricted canonical `g1` is compared with the lower refit on a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// The restriction must coincide with the lower refit pointwise.
    #[default]
    Values,
    /// The restriction must attain the refit's base loss; any optimal fit passes.
    Loss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    /// 0-based index of the first point after the `g2` jump.
    pub m: usize,
    /// `g2(z_{m-1}) - g2(z_m)`.
    pub g2_jump: f64,
    pub region: Region,
    pub range: Range<usize>,
    /// Base loss of the canonical `g1` restricted to `range`.
    pub restricted_loss: f64,
    /// Base loss of the lower fit computed on `range` alone.
    pub refit_loss: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimultaneityReport {
    pub simultaneous: bool,
    pub checked_breakpoints: Vec<Breakpoint>,
    pub tolerance: f64,
    pub mode: TriggerMode,
    pub comparison: Comparison,
}

impl SimultaneityReport {
    pub fn failures(&self) -> impl Iterator<Item = &Breakpoint> {
        self.checked_breakpoints.iter().filter(|b| !b.passed)
    }
}

fn unweighted_lower(sample: &ChainSample, spec: &FunctionalSpec) -> Result<MonotoneFit> {
    pooled_fit(
        sample,
        &vec![1.0; sample.len()],
        spec,
        Direction::Increasing,
        Bound::Lower,
    )
}

/// Breakpoint indices `m` in ascending order.
fn triggers(fit: &BivariateFit, mode: TriggerMode) -> Vec<usize> {
    let g1 = fit.g1.values();
    let g2 = fit.g2.values();
    let scale = g2.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let eps = 1e-12 * scale;
    (1..g2.len())
        .filter(|&m| {
            let jump = match fit.pair.g2_direction() {
                Direction::Decreasing => g2[m - 1] - g2[m],
                Direction::Increasing => g2[m] - g2[m - 1],
            };
            jump > eps && (mode == TriggerMode::Prose || g1[m - 1] == g1[m])
        })
        .collect()
}

fn region_for(pair: PairKind, m: usize, n: usize) -> (Region, Range<usize>) {
    match pair.g2_direction() {
        Direction::Decreasing => (Region::Suffix, m..n),
        Direction::Increasing => (Region::Prefix, 0..m),
    }
}

/// Audit an already computed canonical pair.
pub fn audit_canonical(
    sample: &ChainSample,
    canonical: &BivariateFit,
    opts: &AuditOptions,
) -> Result<SimultaneityReport> {
    if !(opts.tolerance >= 0.0) {
        return Err(Error::InvalidParameter("tolerance must be nonnegative".into()));
    }
    if canonical.len() != sample.len() {
        return Err(Error::DimensionMismatch {
            expected: sample.len(),
            actual: canonical.len(),
        });
    }
    let spec = canonical.pair.spec();
    let n = sample.len();
    let mut ms = triggers(canonical, opts.mode);
    if opts.stop_at_first_failure {
        ms.reverse();
    }
    let mut checked = Vec::with_capacity(ms.len());
    for m in ms {
        let (region, range) = region_for(canonical.pair, m, n);
        let sub = sample.slice(range.clone())?;
        let refit = unweighted_lower(&sub, &spec)?;
        let restricted_loss = base_loss_total(sample, &canonical.g1.values()[range.clone()], &spec, range.clone());
        let refit_loss = base_loss_total(&sub, refit.values(), &spec, 0..sub.len());
        let passed = match opts.comparison {
            Comparison::Values => canonical.g1.values()[range.clone()]
                .iter()
                .zip(refit.values())
                .all(|(a, b)| (a - b).abs() <= opts.tolerance * a.abs().max(b.abs()).max(1.0)),
            Comparison::Loss => (restricted_loss - refit_loss).abs() <= opts.tolerance * refit_loss.abs().max(1.0),
        };
        let g2 = canonical.g2.values();
        checked.push(Breakpoint {
            m,
            g2_jump: g2[m - 1] - g2[m],
            region,
            range,
            restricted_loss,
            refit_loss,
            passed,
        });
        if !passed && opts.stop_at_first_failure {
            break;
        }
    }
    if opts.stop_at_first_failure {
        checked.reverse();
    }
    Ok(SimultaneityReport {
        simultaneous: checked.iter().all(|b| b.passed),
        checked_breakpoints: checked,
        tolerance: opts.tolerance,
        mode: opts.mode,
        comparison: opts.comparison,
    })
}

/// Decide whether the canonical pair is optimal for every consistent loss.
pub fn check_simultaneous(sample: &ChainSample, pair: PairKind, tol: f64) -> Result<SimultaneityReport> {
    check_simultaneous_with(
        sample,
        pair,
        &AuditOptions {
            tolerance: tol,
            ..AuditOptions::default()
        },
    )
}

pub fn check_simultaneous_with(
    sample: &ChainSample,
    pair: PairKind,
    opts: &AuditOptions,
) -> Result<SimultaneityReport> {
    let canonical = canonical_pair(sample, pair)?;
    audit_canonical(sample, &canonical, opts)
}

/// The canonical pair with `g1` replaced by the lower refit on the
/// breakpoint's region, extended monotonically, and `g2` refit to it.
pub fn refit_competitor(sample: &ChainSample, canonical: &BivariateFit, bp: &Breakpoint) -> Result<BivariateFit> {
    let spec = canonical.pair.spec();
    let sub = sample.slice(bp.range.clone())?;
    let refit = unweighted_lower(&sub, &spec)?;
    let r = refit.values();
    let mut g1 = canonical.g1.values().to_vec();
    match bp.region {
        Region::Suffix => {
            let first = r[0];
            for v in &mut g1[..bp.range.start] {
                *v = v.min(first);
            }
            g1[bp.range.clone()].copy_from_slice(r);
        }
        Region::Prefix => {
            let last = r[r.len() - 1];
            for v in &mut g1[bp.range.end..] {
                *v = v.max(last);
            }
            g1[bp.range.clone()].copy_from_slice(r);
        }
    }
    let g1 = MonotoneFit::new(g1, Direction::Increasing, Bound::Lower)?;
    let g2 = fit_g2_given_g1(sample, &g1, &spec, canonical.pair.g2_direction())?;
    Ok(BivariateFit {
        g1,
        g2,
        pair: canonical.pair,
        origin: FitOrigin::Competitor,
        iterations: 0,
        converged: true,
        clamp_warnings: 0,
        loss_history: Vec::new(),
        polish_steps: 0,
    })
}

/// Mean elementary scores of one fit over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitCurve {
    pub fit_id: String,
    pub eta: Vec<f64>,
    pub s1_means: Vec<f64>,
    pub s2_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MurphyCurves {
    pub grid: EtaGrid,
    pub curves: Vec<FitCurve>,
}

impl MurphyCurves {
    /// Long-format CSV with header `eta,fit_id,s1_mean,s2_mean`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eta,fit_id,s1_mean,s2_mean\n");
        for c in &self.curves {
            for ((eta, s1), s2) in c.eta.iter().zip(&c.s1_means).zip(&c.s2_means) {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    format_sig(*eta),
                    c.fit_id,
                    format_sig(*s1),
                    format_sig(*s2)
                );
            }
        }
        out
    }
}

/// Grid over `y`, every fitted `g1`, every `-g2` and the transformed losses.
pub fn audit_grid(sample: &ChainSample, fits: &[&BivariateFit], resolution: usize) -> Result<EtaGrid> {
    let mut values: Vec<f64> = sample.pairs().map(|(_, y)| y).collect();
    for fit in fits {
        values.extend_from_slice(fit.g1.values());
        values.extend(fit.g2.values().iter().map(|v| -v));
        values.extend(transformed_losses(sample, &fit.pair.spec(), fit.g1.values())?);
    }
    make_eta_grid(&values, resolution)
}

pub fn default_audit_grid(sample: &ChainSample, fits: &[&BivariateFit]) -> Result<EtaGrid> {
    audit_grid(sample, fits, DEFAULT_GRID_RESOLUTION)
}

/// Mean elementary scores `S_{eta,1}` and `S_{eta,2}` for one fit.
pub fn fit_curve(fit_id: &str, fit: &BivariateFit, sample: &ChainSample, grid: &EtaGrid) -> Result<FitCurve> {
    if fit.len() != sample.len() {
        return Err(Error::DimensionMismatch {
            expected: sample.len(),
            actual: fit.len(),
        });
    }
    let spec = fit.pair.spec();
    let n_obs = sample.n_obs() as f64;
    let points = grid.points();
    let mut s1 = vec![0.0; points.len()];
    let mut s2 = vec![0.0; points.len()];
    for ((group, &x1), &x2) in sample.groups().iter().zip(fit.g1.values()).zip(fit.g2.values()) {
        for &y in group {
            for (k, &eta) in points.iter().enumerate() {
                s1[k] += elementary_score_1(&spec, eta, x1, y);
                s2[k] += elementary_score_2(&spec, eta, x1, x2, y);
            }
        }
    }
    s1.iter_mut().chain(s2.iter_mut()).for_each(|v| *v /= n_obs);
    Ok(FitCurve {
        fit_id: fit_id.to_string(),
        eta: points.to_vec(),
        s1_means: s1,
        s2_means: s2,
    })
}

pub fn murphy_curves(fits: &[(&str, &BivariateFit)], sample: &ChainSample, grid: &EtaGrid) -> Result<MurphyCurves> {
    let curves = fits
        .iter()
        .map(|(id, fit)| fit_curve(id, fit, sample, grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(MurphyCurves {
        grid: grid.clone(),
        curves,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dominance {
    Equal,
    ADominates,
    BDominates,
    Crossing,
}

impl fmt::Display for Dominance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dominance::Equal => "equal",
            Dominance::ADominates => "a_dominates",
            Dominance::BDominates => "b_dominates",
            Dominance::Crossing => "crossing",
        })
    }
}

pub const DOMINANCE_TOLERANCE: f64 = 1e-12;

/// Pointwise comparison of both score curves; lower is better.
pub fn dominance(a: &FitCurve, b: &FitCurve) -> Result<Dominance> {
    if a.eta != b.eta || a.s1_means.len() != b.s1_means.len() || a.s2_means.len() != b.s2_means.len() {
        return Err(Error::GridMismatch);
    }
    let (mut a_wins, mut b_wins) = (false, false);
    let pairs = a
        .s1_means
        .iter()
        .zip(&b.s1_means)
        .chain(a.s2_means.iter().zip(&b.s2_means));
    for (x, y) in pairs {
        if *x < y - DOMINANCE_TOLERANCE {
            a_wins = true;
        } else if *y < x - DOMINANCE_TOLERANCE {
            b_wins = true;
        }
    }
    Ok(match (a_wins, b_wins) {
        (false, false) => Dominance::Equal,
        (true, false) => Dominance::ADominates,
        (false, true) => Dominance::BDominates,
        (true, true) => Dominance::Crossing,
    })
}

/// A small dataset without a simultaneously optimal monotone pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub sample: ChainSample,
    pub report: SimultaneityReport,
    pub canonical: BivariateFit,
    pub competitor: BivariateFit,
    pub dominance: Dominance,
    pub attempts: usize,
}

/// Seeded random search for a dataset of at most `max_points` points on which
/// the audit fails and the canonical pair and the failing refit cross.
pub fn find_counterexample(
    pair: PairKind,
    max_points: usize,
    seed: u64,
    max_attempts: usize,
) -> Result<Option<Counterexample>> {
    if max_points < 3 {
        return Err(Error::InvalidParameter("need at least 3 points".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 3.0).expect("valid normal");
    for attempt in 1..=max_attempts {
        let n = rng.random_range(3..=max_points);
        let y: Vec<f64> = (0..n)
            .map(|i| ((i as f64 + noise.sample(&mut rng)) * 10.0).round() / 10.0)
            .collect();
        let sample = ChainSample::from_responses(&y)?;
        let canonical = canonical_pair(&sample, pair)?;
        let report = audit_canonical(&sample, &canonical, &AuditOptions::default())?;
        let Some(bp) = report.failures().next().cloned() else {
            continue;
        };
        let competitor = refit_competitor(&sample, &canonical, &bp)?;
        let grid = default_audit_grid(&sample, &[&canonical, &competitor])?;
        let a = fit_curve("canonical", &canonical, &sample, &grid)?;
        let b = fit_curve("competitor", &competitor, &sample, &grid)?;
        let dom = dominance(&a, &b)?;
        if dom == Dominance::Crossing {
            return Ok(Some(Counterexample {
                sample,
                report,
                canonical,
                competitor,
                dominance: dom,
                attempts: attempt,
            }));
        }
    }
    Ok(None)
}
