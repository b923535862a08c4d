use std::fmt;
use std::path::PathBuf;

use subsidy_core::diagnostics::DiagnosticsError;
use subsidy_core::estimators::EstimatorError;
use subsidy_core::panel::PanelError;
use subsidy_core::sim::SimError;
use subsidy_core::stats::StatsError;
use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config parse error{}: {message}", Location(field, line))]
    ConfigParse { field: Option<String>, line: Option<usize>, message: String },
    #[error("i/o failure on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation{}: {message}", Cell(row, column))]
    SchemaViolation { row: Option<usize>, column: Option<String>, message: String },
    #[error("unknown scenario {name:?}; registered: {}", known.join(", "))]
    UnknownScenario { name: String, known: Vec<&'static str> },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Sim(SimError),
    #[error(transparent)]
    Estimator(EstimatorError),
    #[error(transparent)]
    Diagnostics(DiagnosticsError),
    #[error("serialization failed: {0}")]
    Serialize(String),
}

struct Location<'a>(&'a Option<String>, &'a Option<usize>);

impl fmt::Display for Location<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(field) = self.0 {
            write!(f, " in field {field}")?;
        }
        if let Some(line) = self.1 {
            write!(f, " at line {line}")?;
        }
        Ok(())
    }
}

struct Cell<'a>(&'a Option<usize>, &'a Option<String>);

impl fmt::Display for Cell<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(row) = self.0 {
            write!(f, " at row {row}")?;
        }
        if let Some(col) = self.1 {
            write!(f, " column {col}")?;
        }
        Ok(())
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn schema(row: Option<usize>, column: Option<&str>, message: impl Into<String>) -> Self {
        CliError::SchemaViolation { row, column: column.map(String::from), message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigParse { .. }
            | CliError::Io { .. }
            | CliError::SchemaViolation { .. }
            | CliError::UnknownScenario { .. }
            | CliError::Usage(_) => EXIT_USAGE,
            CliError::Serialize(_) => EXIT_NUMERIC,
            CliError::Sim(e) => match e {
                SimError::InvalidConfig { .. } => EXIT_USAGE,
                _ => EXIT_NUMERIC,
            },
            CliError::Estimator(e) => estimator_code(e),
            CliError::Diagnostics(e) => match e {
                DiagnosticsError::Estimator(e) => estimator_code(e),
                DiagnosticsError::Stats(e) => stats_code(e),
                DiagnosticsError::DegenerateDenominator => EXIT_NUMERIC,
                DiagnosticsError::NoControlGroup(_)
                | DiagnosticsError::EmptyAfterRestriction
                | DiagnosticsError::NonpositiveValues { .. }
                | DiagnosticsError::InvalidInput(_) => EXIT_USAGE,
            },
        }
    }
}

fn estimator_code(e: &EstimatorError) -> i32 {
    match e {
        EstimatorError::Stats(s) => stats_code(s),
        EstimatorError::NuisanceFitFailure { .. } => EXIT_NUMERIC,
        EstimatorError::Panel(_)
        | EstimatorError::NoSwitchers
        | EstimatorError::UnbalancedPanelForFD(_)
        | EstimatorError::FoldTooSmall { .. }
        | EstimatorError::InvalidSpec(_) => EXIT_USAGE,
    }
}

fn stats_code(e: &StatsError) -> i32 {
    match e {
        StatsError::TooFewObservations { .. }
        | StatsError::SingleCluster
        | StatsError::DimensionMismatch { .. }
        | StatsError::InvalidArgument { .. }
        | StatsError::NonpositiveP { .. } => EXIT_USAGE,
        StatsError::RankDeficient { .. }
        | StatsError::NonFinite { .. }
        | StatsError::NoVariation
        | StatsError::Separation { .. }
        | StatsError::NoConvergence { .. }
        | StatsError::SpanTooSmall { .. } => EXIT_NUMERIC,
    }
}

fn unknown_column(e: &EstimatorError) -> Option<&str> {
    match e {
        EstimatorError::Panel(PanelError::UnknownColumn(c)) => Some(c),
        _ => None,
    }
}

impl From<EstimatorError> for CliError {
    fn from(e: EstimatorError) -> Self {
        match unknown_column(&e) {
            Some(c) => CliError::schema(None, Some(c), format!("unknown column {c}")),
            None => CliError::Estimator(e),
        }
    }
}

impl From<DiagnosticsError> for CliError {
    fn from(e: DiagnosticsError) -> Self {
        match e {
            DiagnosticsError::Estimator(e) => e.into(),
            other => CliError::Diagnostics(other),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig { field, reason } => {
                CliError::ConfigParse { field: Some(field.to_string()), line: None, message: reason }
            }
            other => CliError::Sim(other),
        }
    }
}

impl From<PanelError> for CliError {
    fn from(e: PanelError) -> Self {
        match e {
            PanelError::UnknownColumn(c) => CliError::schema(None, Some(&c), format!("unknown column {c}")),
            PanelError::Invalid { row, reason } => CliError::schema(Some(row), None, reason),
            PanelError::Unbalanced(id) => {
                CliError::schema(None, Some("hcp_id"), format!("HCP {id} is not observed in both periods"))
            }
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Serialize(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
