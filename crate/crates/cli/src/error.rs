use epic_core::analysis::AnalysisError;
use epic_core::keymgmt::KeyError;
use epic_core::protocol::ProtocolError;
use epic_netsim::NetsimError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("state error: {0}")]
    State(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::State(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    pub fn io(context: &str, e: std::io::Error) -> CliError {
        CliError::Internal(format!("{context}: {e}"))
    }
}

impl From<NetsimError> for CliError {
    fn from(e: NetsimError) -> Self {
        match e {
            NetsimError::Config(_) | NetsimError::Topology(_) | NetsimError::Attack(_) => CliError::Usage(e.to_string()),
            NetsimError::Protocol(p) => p.into(),
            NetsimError::Stalled | NetsimError::Export(_) => CliError::Internal(e.to_string()),
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Key(KeyError::InsufficientCandidates { .. } | KeyError::Parameter(_))
            | ProtocolError::Topology(_) => CliError::Usage(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Export(_) | AnalysisError::MaskReuse => CliError::Internal(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}
