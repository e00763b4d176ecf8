use std::fmt;

/// A failed run: bad flags or inputs (exit 2) or a failed computation (exit 1).
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Compute(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Compute(_) => 1,
        }
    }
}

pub fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Compute(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<joint_shapley::Error> for CliError {
    fn from(e: joint_shapley::Error) -> Self {
        use joint_shapley::Error::*;
        match e {
            InvalidOrder { .. }
            | CoalitionTooLarge { .. }
            | AgentOutOfRange { .. }
            | ExactGuard { .. }
            | UnsupportedAgentCount { .. }
            | Unknown { .. }
            | InvalidParameter(_)
            | InvalidConfig(_)
            | ParseNumber(_) => CliError::Usage(e.to_string()),
            other => CliError::Compute(other.into()),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Compute(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Compute(e.into())
    }
}
