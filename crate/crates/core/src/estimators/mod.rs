//! Pooled OLS on program dummies, two-way fixed effects with binary or
//! continuous treatment shares, cross-fitted DML for the partially linear
//! model, and the nested switching logits.

mod dml;
mod pols;
mod switching_logit;
mod twfe;

use thiserror::Error;

use crate::panel::PanelError;
use crate::stats::StatsError;

pub use dml::{
    dml_plr, dml_plr_fit, dml_plr_with_folds, first_difference_data, orthogonality_probe, DmlData, DmlFit, DmlSpec,
    NuisanceLearner, ProbeResult,
};
pub use pols::{pols_fit, pure_program_rows, PolsResult, ProgramRow};
pub use switching_logit::{switching_logit, LogitPath, LogitStep};
pub(crate) use twfe::twfe_within;
pub use twfe::{twfe_first_difference, twfe_fit, TreatmentMode, TwfeResult, TwfeSpec};

/// Coefficient names used across estimators.
pub const TAU_12: &str = "S2";
pub const TAU_12C: &str = "S2c";
pub const TREND: &str = "T";
pub const CONTRAST: &str = "S2c-S2";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error("no switchers on either margin; treatment effects undefined")]
    NoSwitchers,
    #[error("first differences need every HCP in both periods: {0}")]
    UnbalancedPanelForFD(String),
    #[error("{k}-fold cross-fitting needs at least {needed} rows, got {n}")]
    FoldTooSmall { n: usize, k: usize, needed: usize },
    #[error("nuisance fit failed in fold {fold}: {source}")]
    NuisanceFitFailure { fold: usize, source: StatsError },
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
}
