use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("containment violated at step {step}, node {node}: the true state left the estimated set")]
    Containment { step: usize, node: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Runtime(_) => 2,
            Self::Containment { .. } => 3,
        }
    }
}

impl From<zonodiff::Error> for CliError {
    fn from(e: zonodiff::Error) -> Self {
        match e {
            zonodiff::Error::ContainmentViolation { step, node } => Self::Containment { step, node },
            other => Self::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}
