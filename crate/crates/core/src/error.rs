use thiserror::Error;

use crate::ir::Diagnostic;

#[derive(Debug, Error)]
pub enum SsamError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A configuration needs more of a hardware resource than a warp has,
    /// e.g. a register cache wider than the per-lane register cap.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("invalid plan: {}", format_diagnostics(.0))]
    InvalidPlan(Vec<Diagnostic>),

    /// A simulated output cell was written twice or never written.
    #[error("ownership violation: {0}")]
    Ownership(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = SsamError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> SsamError {
    SsamError::InvalidArgument(msg.into())
}
