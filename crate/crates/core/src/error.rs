use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Why a jump kernel was refused by [`crate::kernel::validate_kernel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    NotProbability,
    RangeExceeded,
    Degenerate,
    NotStronglyAperiodic,
    ZeroVariance,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::NotProbability => "not-probability",
            RejectReason::RangeExceeded => "range-exceeded",
            RejectReason::Degenerate => "degenerate",
            RejectReason::NotStronglyAperiodic => "not-strongly-aperiodic",
            RejectReason::ZeroVariance => "zero-variance",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("rejected kernel ({reason}): {detail}")]
    RejectedKernel { reason: RejectReason, detail: String },

    #[error("resource limit: {requested} cells requested, cap is {cap}")]
    ResourceLimit { requested: usize, cap: usize },

    #[error("{op} is not supported in dimension {dim}")]
    DimensionUnsupported { op: &'static str, dim: usize },

    #[error("window too small: {0}")]
    WindowTooSmall(String),

    #[error("unsupported moment order {0} (expected an even order in 2..=12)")]
    UnsupportedOrder(u32),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl HarnessError {
    /// Short machine-readable tag, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::RejectedKernel { .. } => "rejected-kernel",
            HarnessError::ResourceLimit { .. } => "resource-limit",
            HarnessError::DimensionUnsupported { .. } => "dimension-unsupported",
            HarnessError::WindowTooSmall(_) => "window-too-small",
            HarnessError::UnsupportedOrder(_) => "unsupported-order",
            HarnessError::InvalidConfig(_) => "invalid-config",
        }
    }

    pub(crate) fn reject(reason: RejectReason, detail: impl Into<String>) -> Self {
        HarnessError::RejectedKernel {
            reason,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
