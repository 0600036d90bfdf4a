use phonoprobe::corpus::CorpusError;
use phonoprobe::model::ModelError;
use phonoprobe::numerics::NumericsError;
use phonoprobe::phonology::PhonologyError;
use phonoprobe::probing::ProbeError;
use thiserror::Error;

/// Every failure maps to one process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or input data.
    #[error("{0}")]
    Input(String),
    /// On-disk state disagrees with what the command expects.
    #[error("{0}")]
    State(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::State(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<PhonologyError> for CliError {
    fn from(e: PhonologyError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<NumericsError> for CliError {
    fn from(e: NumericsError) -> Self {
        match e {
            NumericsError::NonFinite(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Divergence { .. } => CliError::Numerical(e.to_string()),
            ModelError::Numerics(n) => n.into(),
            ModelError::Checkpoint(_) => CliError::State(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<ProbeError> for CliError {
    fn from(e: ProbeError) -> Self {
        match e {
            ProbeError::Divergence { .. } => CliError::Numerical(e.to_string()),
            ProbeError::Missing(_) => CliError::State(e.to_string()),
            ProbeError::Numerics(n) => n.into(),
            ProbeError::Model(m) => m.into(),
            _ => CliError::Input(e.to_string()),
        }
    }
}

pub fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}
