use alloc::string::String;
use core::fmt;

/// Coarse classification of backend failures, used by callers to decide
/// between retrying, degrading, and reporting the backend as unavailable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BackendErrorKind {
    /// The backend could not be reached (dead process, missing weights).
    Unavailable,
    /// The backend answered with something that violates its contract.
    Protocol,
    /// The backend ran and reported a failure.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendError {
    pub backend: String,
    pub kind: BackendErrorKind,
    pub message: String,
}

impl BackendError {
    pub fn new(
        backend: impl Into<String>,
        kind: BackendErrorKind,
        message: impl Into<String>,
    ) -> Self {
        Self {
            backend: backend.into(),
            kind,
            message: message.into(),
        }
    }

    pub fn unavailable(backend: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(backend, BackendErrorKind::Unavailable, message)
    }

    pub fn protocol(backend: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(backend, BackendErrorKind::Protocol, message)
    }

    pub fn failed(backend: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(backend, BackendErrorKind::Failed, message)
    }
}

impl fmt::Display for BackendError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            BackendErrorKind::Unavailable => "unavailable",
            BackendErrorKind::Protocol => "protocol error",
            BackendErrorKind::Failed => "failed",
        };
        write!(f, "{} backend {}: {}", self.backend, kind, self.message)
    }
}

impl core::error::Error for BackendError {}
