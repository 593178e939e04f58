use fpp_core::montecarlo::MonteCarloError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn missing(key: &str) -> Self {
        CliError::Config(format!("missing required key `{key}`"))
    }

    pub fn invalid(key: &str, why: impl std::fmt::Display) -> Self {
        CliError::Config(format!("invalid value for `{key}`: {why}"))
    }
}

impl From<MonteCarloError> for CliError {
    fn from(e: MonteCarloError) -> Self {
        match e {
            MonteCarloError::Plan(_) | MonteCarloError::Graph(_) | MonteCarloError::Weights(_) | MonteCarloError::EmptyGrid => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}
