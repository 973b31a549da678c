use stcast_core::baselines::BaselineError;
use stcast_core::eval::EvalError;
use stcast_core::grid::GridError;
use stcast_core::ingest::IngestError;
use stcast_core::nnet::NnetError;
use stcast_core::pipeline::PipelineError;
use stcast_core::signal::SignalError;
use thiserror::Error;

/// Failure of one invocation, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<NnetError> for CliError {
    fn from(e: NnetError) -> Self {
        match e {
            NnetError::NonFinite(_) => CliError::Numeric(e.to_string()),
            NnetError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::NotConverged { .. } => CliError::Numeric(e.to_string()),
            BaselineError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Nnet(e) => e.into(),
            PipelineError::Baseline(e) => e.into(),
            PipelineError::Signal(e) => e.into(),
            PipelineError::Setup(m) => CliError::Usage(m),
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_error!(GridError, IngestError, EvalError, SignalError);
