//! Monotone regression for bivariate (functional, Bayes risk) pairs.
//!
//! The crate fits an increasing function `g1` for a functional `T` (a quantile
//! or the mean) together with a monotone function `g2` for its Bayes risk
//! (expected shortfall or variance), decides when a single pair is optimal for
//! every consistent loss at once, extends both to partially ordered
//! covariates, and runs seeded Monte Carlo studies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod error;
pub mod experiments;
pub mod format;
pub mod functional;
pub mod joint;
pub mod monotone;
pub mod parallel;
pub mod poset;
pub mod sample;

pub use audit::{
    check_simultaneous, check_simultaneous_with, dominance, murphy_curves, AuditOptions, Comparison, Dominance,
    FitCurve, MurphyCurves, SimultaneityReport,
};
pub use error::{Error, Result};
pub use experiments::{run_iteration_study, run_simultaneity_study, StudyConfig, StudyResult};
pub use functional::{
    elementary_score_1, elementary_score_2, joint_loss, make_eta_grid, Bound, EtaGrid, FunctionalSpec,
    GridConstruction, WeightFnName, WeightFunction, WeightedSample, DEFAULT_GRID_RESOLUTION,
};
pub use joint::{
    alternating_solve, canonical_pair, fit_g1_given_g2, fit_g2_given_g1, total_joint_loss, BivariateFit,
    ConvergenceConfig, FitOrigin, PairKind,
};
pub use monotone::{
    antitonic_mean_fit, minimizing_indices, minmax_fit, pooled_fit, pooled_mean_fit, restrict_fit, Direction,
    MinimizingIndexSet, MonotoneFit,
};
pub use parallel::Execution;
pub use poset::{PosetFit, PosetSample, UpperSetFamily};
pub use sample::ChainSample;
