//! Seeded Monte Carlo studies: how often the canonical pair is simultaneously
//! optimal, and how many alternating iterations weighted losses need.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::audit::{audit_canonical, AuditOptions, DEFAULT_AUDIT_TOLERANCE};
use crate::error::{Error, Result};
use crate::format::format_sig;
use crate::functional::{WeightFnName, WeightFunction};
use crate::joint::{alternating_solve, canonical_pair, ConvergenceConfig, PairKind};
use crate::parallel::{map_indexed, Execution};
use crate::sample::ChainSample;

/// Covariates are drawn uniformly from `[0, COVARIATE_RANGE]`.
pub const COVARIATE_RANGE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairFamily {
    Qes,
    Meanvar,
}

impl PairFamily {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "qes" => Some(PairFamily::Qes),
            "meanvar" => Some(PairFamily::Meanvar),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PairFamily::Qes => "qes",
            PairFamily::Meanvar => "meanvar",
        }
    }

    pub fn noise_name(self) -> &'static str {
        match self {
            PairFamily::Qes => "sigma",
            PairFamily::Meanvar => "c",
        }
    }

    /// The weight function behind the short names `h1` and `h2`.
    pub fn weight_alias(self, index: u8) -> Option<WeightFnName> {
        match (self, index) {
            (PairFamily::Qes, 1) => Some(WeightFnName::H1Es),
            (PairFamily::Qes, 2) => Some(WeightFnName::H2Es),
            (PairFamily::Meanvar, 1) => Some(WeightFnName::H1Var),
            (PairFamily::Meanvar, 2) => Some(WeightFnName::H2Var),
            _ => None,
        }
    }

    /// Resolve `h1`, `h2` or a full weight function name.
    pub fn resolve_weight(self, name: &str) -> Option<WeightFnName> {
        match name {
            "h1" => self.weight_alias(1),
            "h2" => self.weight_alias(2),
            other => WeightFnName::parse(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Simultaneity,
    Iterations,
}

/// How the second parameter of `N(0, c l / sqrt(n))` is read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseReading {
    Variance,
    #[default]
    StdDev,
}

/// `n` uniform covariates on `[0, 100]` with `y = z + N(0, sigma^2)`.
pub fn gen_qes_data<R: Rng + ?Sized>(n: usize, sigma: f64, rng: &mut R) -> Result<ChainSample> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let z: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=COVARIATE_RANGE)).collect();
    let y: Vec<f64> = z.iter().map(|&z| z + noise.sample(rng)).collect();
    ChainSample::from_pairs(&z, &y)
}

/// `n` sorted uniform covariates with noise at sorted position `l` (1-based)
/// of variance (or standard deviation) `c l / sqrt(n)`.
pub fn gen_meanvar_data<R: Rng + ?Sized>(n: usize, c: f64, reading: NoiseReading, rng: &mut R) -> Result<ChainSample> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("c must be positive, got {c}")));
    }
    let mut z: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=COVARIATE_RANGE)).collect();
    z.sort_by(|a, b| a.total_cmp(b));
    let root_n = (n as f64).sqrt();
    let y: Vec<f64> = z
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let scale = c * (i + 1) as f64 / root_n;
            let sd = match reading {
                NoiseReading::Variance => scale.sqrt(),
                NoiseReading::StdDev => scale,
            };
            z + sd * rng.sample::<f64, _>(rand_distr::StandardNormal)
        })
        .collect();
    ChainSample::from_pairs(&z, &y)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for one task, depending only on the study seed and the task's own
/// coordinates so that cells reproduce independently of the grid.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |h, &p| splitmix64(h ^ splitmix64(p)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study: StudyKind,
    pub pair: PairFamily,
    pub n_values: Vec<usize>,
    /// `sigma` for quantile/ES, `c` for mean/variance.
    pub noise_values: Vec<f64>,
    /// Quantile levels; quantile/ES only.
    pub alpha_values: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    /// Iteration study only.
    pub weight_fns: Vec<WeightFnName>,
    pub noise_reading: NoiseReading,
    pub convergence: ConvergenceConfig,
    pub audit_tolerance: f64,
}

const CONFIG_KEYS: [&str; 11] = [
    "study",
    "pair",
    "n_values",
    "noise_values",
    "alpha_values",
    "replications",
    "seed",
    "weight_fns",
    "noise_reading",
    "loss_tolerance",
    "max_iterations",
];

#[derive(Deserialize)]
struct RawConfig {
    study: StudyKind,
    pair: String,
    n_values: Vec<usize>,
    noise_values: Vec<f64>,
    #[serde(default)]
    alpha_values: Vec<f64>,
    replications: usize,
    seed: Option<u64>,
    #[serde(default)]
    weight_fns: Vec<String>,
    #[serde(default)]
    noise_reading: NoiseReading,
    loss_tolerance: Option<f64>,
    max_iterations: Option<usize>,
}

impl StudyConfig {
    /// Parse a flat JSON object. Unknown keys are rejected, all of them listed.
    /// `seed_override` replaces the file's seed and makes it optional.
    pub fn from_json_str(text: &str, seed_override: Option<u64>) -> Result<Self> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("config is not valid JSON: {e}")))?;
        let Value::Object(map) = &value else {
            return Err(Error::InvalidParameter("config must be a JSON object".into()));
        };
        let unknown: Vec<&str> = map
            .keys()
            .map(String::as_str)
            .filter(|k| !CONFIG_KEYS.contains(k))
            .collect();
        if !unknown.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "unknown config keys: {}",
                unknown.join(", ")
            )));
        }
        let raw: RawConfig =
            serde_json::from_value(value).map_err(|e| Error::InvalidParameter(format!("invalid config: {e}")))?;
        let pair = PairFamily::parse(&raw.pair)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown pair {:?}; expected qes or meanvar", raw.pair)))?;
        let weight_fns = raw
            .weight_fns
            .iter()
            .map(|w| {
                pair.resolve_weight(w)
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown weight function {w:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let seed = seed_override
            .or(raw.seed)
            .ok_or_else(|| Error::InvalidParameter("config needs a seed".into()))?;
        let defaults = ConvergenceConfig::default();
        let cfg = StudyConfig {
            study: raw.study,
            pair,
            n_values: raw.n_values,
            noise_values: raw.noise_values,
            alpha_values: raw.alpha_values,
            replications: raw.replications,
            seed,
            weight_fns,
            noise_reading: raw.noise_reading,
            convergence: ConvergenceConfig {
                loss_tolerance: raw.loss_tolerance.unwrap_or(defaults.loss_tolerance),
                max_iterations: raw.max_iterations.unwrap_or(defaults.max_iterations),
            },
            audit_tolerance: DEFAULT_AUDIT_TOLERANCE,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return bad("n_values must be nonempty and positive".into());
        }
        if self.noise_values.is_empty() || self.noise_values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("noise_values must be nonempty and positive".into());
        }
        if self.replications == 0 {
            return bad("replications must be positive".into());
        }
        match self.pair {
            PairFamily::Qes => {
                if self.alpha_values.is_empty() || self.alpha_values.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
                    return bad("alpha_values must be nonempty and inside (0, 1)".into());
                }
            }
            PairFamily::Meanvar => {
                if !self.alpha_values.is_empty() {
                    return bad("alpha_values only apply to pair qes".into());
                }
            }
        }
        match self.study {
            StudyKind::Iterations if self.weight_fns.is_empty() => bad("an iteration study needs weight_fns".into()),
            StudyKind::Simultaneity if !self.weight_fns.is_empty() => {
                bad("weight_fns only apply to iteration studies".into())
            }
            _ if !(self.convergence.loss_tolerance > 0.0) || self.convergence.max_iterations == 0 => {
                bad("loss_tolerance and max_iterations must be positive".into())
            }
            _ => Ok(()),
        }
    }

    /// The pairs analysed on every data set, in cell order.
    fn pairs(&self) -> Vec<Option<PairKind>> {
        match self.pair {
            PairFamily::Qes => self
                .alpha_values
                .iter()
                .map(|&a| Some(PairKind::QuantileEs { alpha: a }))
                .collect(),
            PairFamily::Meanvar => vec![None],
        }
    }

    fn weights(&self) -> Vec<Option<WeightFnName>> {
        match self.study {
            StudyKind::Simultaneity => vec![None],
            StudyKind::Iterations => self.weight_fns.iter().map(|&w| Some(w)).collect(),
        }
    }

    pub fn cell_count(&self) -> usize {
        self.n_values.len() * self.noise_values.len() * self.pairs().len() * self.weights().len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub noise: f64,
    pub alpha: Option<f64>,
    pub weight_fn: Option<WeightFnName>,
    /// Fraction simultaneous, or mean iteration count, over successful replications.
    pub value: f64,
    /// Standard error of `value` over successful replications; zero below two.
    pub std_error: f64,
    /// Replications attempted.
    pub replications: usize,
    /// Replications that raised an error.
    pub failures: usize,
    /// Replications in which a weight hit its floor.
    pub clamped: usize,
    /// Replications that hit the iteration limit.
    pub nonconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub study: StudyKind,
    pub pair: PairFamily,
    pub seed: u64,
    pub replications: usize,
    pub noise_reading: NoiseReading,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Outcome {
    value: f64,
    clamped: bool,
    nonconverged: bool,
}

fn run_replication(
    cfg: &StudyConfig,
    n: usize,
    noise: f64,
    rep: usize,
    pairs: &[Option<PairKind>],
    weights: &[Option<WeightFnName>],
) -> Vec<Result<Outcome>> {
    let seed = derive_seed(cfg.seed, &[n as u64, noise.to_bits(), rep as u64]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = match cfg.pair {
        PairFamily::Qes => gen_qes_data(n, noise, &mut rng),
        PairFamily::Meanvar => gen_meanvar_data(n, noise, cfg.noise_reading, &mut rng),
    };
    let mut out = Vec::with_capacity(pairs.len() * weights.len());
    for pair in pairs {
        let pair = pair.unwrap_or(PairKind::MeanVariance);
        for weight in weights {
            let outcome = data.clone().and_then(|sample| match weight {
                None => {
                    let canonical = canonical_pair(&sample, pair)?;
                    let opts = AuditOptions {
                        tolerance: cfg.audit_tolerance,
                        stop_at_first_failure: true,
                        ..AuditOptions::default()
                    };
                    let report = audit_canonical(&sample, &canonical, &opts)?;
                    Ok(Outcome {
                        value: if report.simultaneous { 1.0 } else { 0.0 },
                        ..Outcome::default()
                    })
                }
                Some(w) => {
                    let fit = alternating_solve(&sample, pair, &WeightFunction::new(*w), &cfg.convergence)?;
                    Ok(Outcome {
                        value: fit.iterations as f64,
                        clamped: fit.clamp_warnings > 0,
                        nonconverged: !fit.converged,
                    })
                }
            });
            out.push(outcome);
        }
    }
    out
}

/// Run the configured study. Replications are independent tasks seeded from
/// `(seed, n, noise, replication)`, so results do not depend on `exec`.
/// Every quantile level and weight function is evaluated on the same data sets.
pub fn run_study(cfg: &StudyConfig, exec: Execution) -> Result<StudyResult> {
    cfg.validate()?;
    let pairs = cfg.pairs();
    let weights = cfg.weights();
    let data_cells: Vec<(usize, f64)> = cfg
        .n_values
        .iter()
        .flat_map(|&n| cfg.noise_values.iter().map(move |&s| (n, s)))
        .collect();
    let m = cfg.replications;
    let results = map_indexed(exec, data_cells.len() * m, |task| {
        let (n, noise) = data_cells[task / m];
        run_replication(cfg, n, noise, task % m, &pairs, &weights)
    });
    let per_data = pairs.len() * weights.len();
    let mut cells = Vec::with_capacity(data_cells.len() * per_data);
    for (d, &(n, noise)) in data_cells.iter().enumerate() {
        let reps = &results[d * m..(d + 1) * m];
        for (p, pair) in pairs.iter().enumerate() {
            for (w, weight) in weights.iter().enumerate() {
                let k = p * weights.len() + w;
                let (mut sum, mut sum_sq, mut ok, mut failures, mut clamped, mut nonconverged) =
                    (0.0, 0.0, 0usize, 0, 0, 0);
                for rep in reps {
                    match &rep[k] {
                        Ok(o) => {
                            sum += o.value;
                            sum_sq += o.value * o.value;
                            ok += 1;
                            clamped += o.clamped as usize;
                            nonconverged += o.nonconverged as usize;
                        }
                        Err(_) => failures += 1,
                    }
                }
                cells.push(Cell {
                    n,
                    noise,
                    alpha: match pair {
                        Some(PairKind::QuantileEs { alpha }) => Some(*alpha),
                        _ => None,
                    },
                    weight_fn: *weight,
                    value: if ok > 0 { sum / ok as f64 } else { f64::NAN },
                    std_error: standard_error(sum, sum_sq, ok),
                    replications: m,
                    failures,
                    clamped,
                    nonconverged,
                });
            }
        }
    }
    Ok(StudyResult {
        study: cfg.study,
        pair: cfg.pair,
        seed: cfg.seed,
        replications: m,
        noise_reading: cfg.noise_reading,
        cells,
    })
}

fn standard_error(sum: f64, sum_sq: f64, count: usize) -> f64 {
    if count < 2 {
        return 0.0;
    }
    let k = count as f64;
    let var = ((sum_sq - sum * sum / k) / (k - 1.0)).max(0.0);
    (var / k).sqrt()
}

/// Fraction of replications in which the canonical pair is simultaneously optimal.
pub fn run_simultaneity_study(cfg: &StudyConfig, exec: Execution) -> Result<StudyResult> {
    if cfg.study != StudyKind::Simultaneity {
        return Err(Error::InvalidParameter("config is not a simultaneity study".into()));
    }
    run_study(cfg, exec)
}

/// Mean number of alternating iterations per weight function.
pub fn run_iteration_study(cfg: &StudyConfig, exec: Execution) -> Result<StudyResult> {
    if cfg.study != StudyKind::Iterations {
        return Err(Error::InvalidParameter("config is not an iteration study".into()));
    }
    run_study(cfg, exec)
}

impl StudyResult {
    pub fn cell(&self, n: usize, noise: f64, alpha: Option<f64>, weight_fn: Option<WeightFnName>) -> Option<&Cell> {
        self.cells.iter().find(|c| {
            c.n == n
                && c.noise == noise
                && c.weight_fn == weight_fn
                && match (c.alpha, alpha) {
                    (Some(a), Some(b)) => a == b,
                    (None, None) => true,
                    _ => false,
                }
        })
    }

    /// CSV with the cell dimensions, then `value,se,M,failures,clamped,nonconverged`.
    pub fn to_csv(&self) -> String {
        let has_alpha = self.pair == PairFamily::Qes;
        let has_weight = self.study == StudyKind::Iterations;
        let mut out = format!("n,{}", self.pair.noise_name());
        if has_alpha {
            out.push_str(",alpha");
        }
        if has_weight {
            out.push_str(",weight_fn");
        }
        out.push_str(",value,se,M,failures,clamped,nonconverged\n");
        for c in &self.cells {
            let _ = write!(out, "{},{}", c.n, format_sig(c.noise));
            if has_alpha {
                let _ = write!(out, ",{}", format_sig(c.alpha.unwrap_or(f64::NAN)));
            }
            if has_weight {
                let _ = write!(out, ",{}", c.weight_fn.map(|w| w.as_str()).unwrap_or(""));
            }
            let _ = writeln!(
                out,
                ",{},{},{},{},{},{}",
                format_sig(c.value),
                format_sig(c.std_error),
                c.replications,
                c.failures,
                c.clamped,
                c.nonconverged
            );
        }
        out
    }

    /// Aligned text table: one row per remaining dimension, one column per
    /// quantile level (quantile/ES) or noise constant (mean/variance).
    pub fn to_table(&self) -> String {
        let by_alpha = self.pair == PairFamily::Qes;
        let mut columns: Vec<f64> = Vec::new();
        for c in &self.cells {
            let key = if by_alpha { c.alpha.unwrap_or(f64::NAN) } else { c.noise };
            if !columns.contains(&key) {
                columns.push(key);
            }
        }
        let col_label = if by_alpha { "alpha" } else { self.pair.noise_name() };
        let mut rows: Vec<(String, Vec<String>)> = Vec::new();
        let mut row_keys: Vec<(usize, u64, Option<WeightFnName>)> = Vec::new();
        for c in &self.cells {
            let row_noise = if by_alpha { c.noise.to_bits() } else { 0 };
            let key = (c.n, row_noise, c.weight_fn);
            let idx = match row_keys.iter().position(|k| *k == key) {
                Some(i) => i,
                None => {
                    row_keys.push(key);
                    let mut label = format!("n={}", c.n);
                    if by_alpha {
                        let _ = write!(label, "  sigma={}", format_sig(c.noise));
                    }
                    if let Some(w) = c.weight_fn {
                        let _ = write!(label, "  {w}");
                    }
                    rows.push((label, vec![String::new(); columns.len()]));
                    rows.len() - 1
                }
            };
            let col_key = if by_alpha { c.alpha.unwrap_or(f64::NAN) } else { c.noise };
            let col = columns.iter().position(|k| *k == col_key).expect("column exists");
            rows[idx].1[col] = format!("{:.2}", c.value);
        }
        let headers: Vec<String> = columns
            .iter()
            .map(|k| format!("{col_label}={}", format_sig(*k)))
            .collect();
        let label_width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let widths: Vec<usize> = headers
            .iter()
            .enumerate()
            .map(|(j, h)| rows.iter().map(|r| r.1[j].len()).fold(h.len(), usize::max))
            .collect();
        let title = match self.study {
            StudyKind::Simultaneity => "fraction of replications with a simultaneously optimal pair",
            StudyKind::Iterations => "mean number of alternating iterations",
        };
        let mut out = format!(
            "{} ({}, M={}, seed={})\n",
            title,
            self.pair.as_str(),
            self.replications,
            self.seed
        );
        let _ = write!(out, "{:label_width$} |", "");
        for (h, w) in headers.iter().zip(&widths) {
            let _ = write!(out, " {h:>w$}");
        }
        out.push('\n');
        let total = label_width + 2 + widths.iter().map(|w| w + 1).sum::<usize>();
        out.push_str(&"-".repeat(total));
        out.push('\n');
        for (label, vals) in rows {
            let _ = write!(out, "{label:label_width$} |");
            for (v, w) in vals.iter().zip(&widths) {
                let _ = write!(out, " {v:>w$}");
            }
            out.push('\n');
        }
        out
    }
}
