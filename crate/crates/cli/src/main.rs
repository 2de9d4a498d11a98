//! `biviso` command-line tool: fits, audits, Monte Carlo studies and poset fits.
//!
//! Exit codes: 0 success, 1 I/O or internal error, 2 invalid input or
//! configuration, 3 non-convergence (outputs still written), 4 poset too large.

mod input;
mod manifest;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use biviso::audit::{audit_grid, default_audit_grid, refit_competitor};
use biviso::experiments::{run_study, PairFamily};
use biviso::format::format_sig;
use biviso::poset::{poset_alternating_solve, poset_canonical_pair, poset_check_simultaneous, PosetFit};
use biviso::{
    alternating_solve, canonical_pair, check_simultaneous, dominance, murphy_curves, BivariateFit, ChainSample,
    ConvergenceConfig, Execution, PairKind, PosetSample, StudyConfig, WeightFunction,
};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use manifest::{digest, RunManifest};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] biviso::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                biviso::Error::TooLarge { .. } => 4,
                biviso::Error::Cycle(_)
                | biviso::Error::UnknownNode(_)
                | biviso::Error::InvalidParameter(_)
                | biviso::Error::EmptyInput
                | biviso::Error::DimensionMismatch { .. } => 2,
                _ => 1,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PairArg {
    Qes,
    Meanvar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WeightArg {
    H1,
    H2,
    Canonical,
}

impl WeightArg {
    fn as_str(self) -> &'static str {
        match self {
            WeightArg::H1 => "h1",
            WeightArg::H2 => "h2",
            WeightArg::Canonical => "canonical",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "biviso",
    version,
    about = "Monotone regression for (functional, Bayes risk) pairs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Pair to fit: quantile/expected shortfall or mean/variance.
    #[arg(long, global = true, value_enum, default_value = "meanvar")]
    pair: PairArg,
    /// Quantile level; required for `--pair qes`.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Joint-loss weight function; `canonical` skips the alternating solver.
    #[arg(long, global = true, value_enum, default_value = "canonical")]
    weight: WeightArg,
    /// Seed for studies; overrides `BIVISO_SEED` and the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Resolution of the Murphy-diagram grid.
    #[arg(long = "eta-points", global = true, default_value_t = biviso::DEFAULT_GRID_RESOLUTION)]
    eta_points: usize,
    /// Iteration limit of the alternating solver.
    #[arg(long = "max-iterations", global = true, default_value_t = ConvergenceConfig::default().max_iterations)]
    max_iterations: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit g1 and g2 to a `z,y` CSV; writes fit.csv.
    Fit { input: PathBuf },
    /// Check simultaneous optimality; writes audit.json and murphy.csv.
    Audit { input: PathBuf },
    /// Run a Monte Carlo study from a JSON config; writes table.csv and table.txt.
    Simulate { config: PathBuf },
    /// Fit and audit on a partial order; writes poset_fit.csv and poset_audit.json.
    PosetFit { edges: PathBuf, observations: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NonConverged) => {
            eprintln!("warning: alternating solver hit the iteration limit; outputs are the last iterate");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

enum Outcome {
    Done,
    NonConverged,
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let started = Instant::now();
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::Io(format!("{}: {e}", cli.out.display())))?;
    match &cli.command {
        Command::Fit { input } => cmd_fit(cli, input, started),
        Command::Audit { input } => cmd_audit(cli, input, started),
        Command::Simulate { config } => cmd_simulate(cli, config, started),
        Command::PosetFit { edges, observations } => cmd_poset_fit(cli, edges, observations, started),
    }
}

fn pair_kind(cli: &Cli) -> Result<PairKind, CliError> {
    match (cli.pair, cli.alpha) {
        (PairArg::Qes, Some(alpha)) => Ok(PairKind::quantile_es(alpha)?),
        (PairArg::Qes, None) => Err(CliError::Input("--alpha is required for --pair qes".into())),
        (PairArg::Meanvar, None) => Ok(PairKind::MeanVariance),
        (PairArg::Meanvar, Some(_)) => Err(CliError::Input("--alpha only applies to --pair qes".into())),
    }
}

fn weight_function(cli: &Cli) -> Option<WeightFunction> {
    let family = match cli.pair {
        PairArg::Qes => PairFamily::Qes,
        PairArg::Meanvar => PairFamily::Meanvar,
    };
    match cli.weight {
        WeightArg::Canonical => None,
        WeightArg::H1 => family.weight_alias(1).map(WeightFunction::new),
        WeightArg::H2 => family.weight_alias(2).map(WeightFunction::new),
    }
}

fn fit_config(cli: &Cli, inputs: &[&Path]) -> serde_json::Value {
    json!({
        "inputs": inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "pair": format!("{:?}", cli.pair).to_lowercase(),
        "alpha": cli.alpha,
        "weight": cli.weight.as_str(),
        "out": cli.out.display().to_string(),
        "eta_points": cli.eta_points,
        "loss_tolerance": convergence(cli).loss_tolerance,
        "max_iterations": cli.max_iterations,
    })
}

fn convergence(cli: &Cli) -> ConvergenceConfig {
    ConvergenceConfig {
        max_iterations: cli.max_iterations,
        ..ConvergenceConfig::default()
    }
}

fn read_sample(path: &Path) -> Result<ChainSample, CliError> {
    let (z, y) = input::read_zy(path)?;
    Ok(ChainSample::from_pairs(&z, &y)?)
}

fn fit_csv(sample: &ChainSample, fit: &BivariateFit) -> String {
    let mut out = String::from("z,g1,g2\n");
    for ((z, g1), g2) in sample.z().iter().zip(fit.g1.values()).zip(fit.g2.values()) {
        let _ = writeln!(out, "{},{},{}", format_sig(*z), format_sig(*g1), format_sig(*g2));
    }
    out
}

fn cmd_fit(cli: &Cli, input: &Path, started: Instant) -> Result<Outcome, CliError> {
    let pair = pair_kind(cli)?;
    let sample = read_sample(input)?;
    let fit = match weight_function(cli) {
        None => canonical_pair(&sample, pair)?,
        Some(w) => alternating_solve(&sample, pair, &w, &convergence(cli))?,
    };
    write_file(&cli.out.join("fit.csv"), &fit_csv(&sample, &fit))?;
    let mut manifest = RunManifest::new("fit", fit_config(cli, &[input]), cli.seed, vec![digest(input)?]);
    manifest.nonconverged = !fit.converged;
    manifest.write(&cli.out, started)?;
    Ok(if fit.converged {
        Outcome::Done
    } else {
        Outcome::NonConverged
    })
}

fn cmd_audit(cli: &Cli, input: &Path, started: Instant) -> Result<Outcome, CliError> {
    let pair = pair_kind(cli)?;
    if cli.eta_points < 2 {
        return Err(CliError::Input("--eta-points must be at least 2".into()));
    }
    let sample = read_sample(input)?;
    let canonical = canonical_pair(&sample, pair)?;
    let report = check_simultaneous(&sample, pair, biviso::audit::DEFAULT_AUDIT_TOLERANCE)?;
    let competitors = report
        .failures()
        .map(|bp| {
            Ok((
                format!("refit_m{}", bp.m),
                bp.m,
                refit_competitor(&sample, &canonical, bp)?,
            ))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut fits: Vec<&BivariateFit> = vec![&canonical];
    fits.extend(competitors.iter().map(|c| &c.2));
    let grid = if cli.eta_points == biviso::DEFAULT_GRID_RESOLUTION {
        default_audit_grid(&sample, &fits)?
    } else {
        audit_grid(&sample, &fits, cli.eta_points)?
    };
    let mut named: Vec<(&str, &BivariateFit)> = vec![("canonical", &canonical)];
    named.extend(competitors.iter().map(|c| (c.0.as_str(), &c.2)));
    let curves = murphy_curves(&named, &sample, &grid)?;
    let comparisons = competitors
        .iter()
        .enumerate()
        .map(|(k, (id, m, _))| {
            Ok(json!({
                "fit_id": id,
                "m": m,
                "dominance": dominance(&curves.curves[0], &curves.curves[k + 1])?,
            }))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut audit = serde_json::to_value(&report).expect("report serializes");
    audit["murphy_comparisons"] = json!(comparisons);
    audit["canonical"] = json!({ "g1": canonical.g1.values(), "g2": canonical.g2.values() });
    write_file(
        &cli.out.join("audit.json"),
        &(serde_json::to_string_pretty(&audit).expect("audit serializes") + "\n"),
    )?;
    write_file(&cli.out.join("murphy.csv"), &curves.to_csv())?;
    RunManifest::new("audit", fit_config(cli, &[input]), cli.seed, vec![digest(input)?]).write(&cli.out, started)?;
    Ok(Outcome::Done)
}

fn resolve_seed(cli: &Cli) -> Result<Option<u64>, CliError> {
    if cli.seed.is_some() {
        return Ok(cli.seed);
    }
    match std::env::var("BIVISO_SEED") {
        Ok(text) => text
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Input(format!("BIVISO_SEED is not an unsigned 64-bit integer: {text:?}"))),
        Err(_) => Ok(None),
    }
}

fn cmd_simulate(cli: &Cli, config: &Path, started: Instant) -> Result<Outcome, CliError> {
    let text = std::fs::read_to_string(config).map_err(|e| CliError::Io(format!("{}: {e}", config.display())))?;
    let seed = resolve_seed(cli)?;
    let cfg =
        StudyConfig::from_json_str(&text, seed).map_err(|e| CliError::Input(format!("{}: {e}", config.display())))?;
    let result = run_study(&cfg, Execution::Parallel)?;
    write_file(&cli.out.join("table.csv"), &result.to_csv())?;
    write_file(&cli.out.join("table.txt"), &result.to_table())?;
    let resolved = serde_json::to_value(&cfg).expect("config serializes");
    let mut manifest = RunManifest::new("simulate", resolved, Some(cfg.seed), vec![digest(config)?]);
    manifest.nonconverged = result.cells.iter().any(|c| c.nonconverged > 0);
    manifest.write(&cli.out, started)?;
    Ok(Outcome::Done)
}

fn poset_fit_csv(fit: &PosetFit) -> String {
    let mut out = String::from("node,g1,g2\n");
    for ((node, g1), g2) in fit.nodes.iter().zip(&fit.g1).zip(&fit.g2) {
        let _ = writeln!(out, "{node},{},{}", format_sig(*g1), format_sig(*g2));
    }
    out
}

fn cmd_poset_fit(cli: &Cli, edges: &Path, observations: &Path, started: Instant) -> Result<Outcome, CliError> {
    let pair = pair_kind(cli)?;
    let relations = input::read_edges(edges)?;
    let (nodes, groups) = input::read_node_observations(observations)?;
    let poset = PosetSample::new(nodes, &relations, groups)?;
    let fit = match weight_function(cli) {
        None => poset_canonical_pair(&poset, pair)?,
        Some(w) => poset_alternating_solve(&poset, pair, &w, &convergence(cli))?,
    };
    let report = poset_check_simultaneous(&poset, pair, biviso::audit::DEFAULT_AUDIT_TOLERANCE)?;
    write_file(&cli.out.join("poset_fit.csv"), &poset_fit_csv(&fit))?;
    write_file(
        &cli.out.join("poset_audit.json"),
        &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"),
    )?;
    let mut manifest = RunManifest::new(
        "poset-fit",
        fit_config(cli, &[edges, observations]),
        cli.seed,
        vec![digest(edges)?, digest(observations)?],
    );
    manifest.nonconverged = !fit.converged;
    manifest.write(&cli.out, started)?;
    Ok(if fit.converged {
        Outcome::Done
    } else {
        Outcome::NonConverged
    })
}
