//! Wire types shared with the external solver runner, and structural
//! validation of the matrices it returns.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{AgentSetting, InteractionLog, OutcomeSpace};

/// Row sums may be off by this much before renormalisation.
pub const ROW_SUM_TOL: f64 = 1e-6;

/// One interaction log as seen by a candidate solver. The key names are part
/// of the prompts and of generated code, so they are fixed byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    #[serde(rename = "Contract")]
    pub contract: Vec<f64>,
    #[serde(rename = "Principal Utility")]
    pub principal_utility: f64,
    #[serde(rename = "Agent Action")]
    pub agent_action: i8,
}

impl From<&InteractionLog> for LogRecord {
    fn from(log: &InteractionLog) -> Self {
        Self {
            contract: log.contract.payments().to_vec(),
            principal_utility: log.principal_utility,
            agent_action: log.acceptance.indicator(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandboxRequest {
    /// Principal valuation per outcome.
    pub v: Vec<f64>,
    pub content: Vec<LogRecord>,
}

impl SandboxRequest {
    pub fn new(outcomes: &OutcomeSpace, logs: &[InteractionLog]) -> Self {
        Self {
            v: outcomes.valuations().to_vec(),
            content: logs.iter().map(LogRecord::from).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    Crash,
    Timeout,
    Malformed,
    Budget,
    /// Matrix is well formed but not a valid setting (e.g. negative cost).
    InvalidSetting,
    NoAcceptedLogs,
    /// No code block could be extracted from the completion.
    Extraction,
    /// Neither a sandbox nor a native stand-in can run the source.
    Unavailable,
    /// The contract-design step failed on the inferred setting.
    Design,
}

impl FailureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureKind::Crash => "crash",
            FailureKind::Timeout => "timeout",
            FailureKind::Malformed => "malformed",
            FailureKind::Budget => "budget",
            FailureKind::InvalidSetting => "invalid-setting",
            FailureKind::NoAcceptedLogs => "no-accepted-logs",
            FailureKind::Extraction => "extraction",
            FailureKind::Unavailable => "unavailable",
            FailureKind::Design => "design",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunFailure {
    pub kind: FailureKind,
    pub detail: String,
}

impl RunFailure {
    pub fn new(kind: FailureKind, detail: impl Into<String>) -> Self {
        Self {
            kind,
            detail: detail.into(),
        }
    }
}

impl core::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}: {}", self.kind.as_str(), self.detail)
    }
}

/// Error kinds the runner itself may report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SandboxErrorKind {
    Crash,
    Timeout,
    Malformed,
    Budget,
}

impl From<SandboxErrorKind> for FailureKind {
    fn from(kind: SandboxErrorKind) -> Self {
        match kind {
            SandboxErrorKind::Crash => FailureKind::Crash,
            SandboxErrorKind::Timeout => FailureKind::Timeout,
            SandboxErrorKind::Malformed => FailureKind::Malformed,
            SandboxErrorKind::Budget => FailureKind::Budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandboxErrorBody {
    pub kind: SandboxErrorKind,
    pub detail: String,
}

/// Either `{"setting": [[...]]}` or `{"error": {"kind": ..., "detail": ...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SandboxResponse {
    Setting(Vec<Vec<f64>>),
    Error(SandboxErrorBody),
}

impl SandboxResponse {
    pub fn into_result(self) -> Result<Vec<Vec<f64>>, RunFailure> {
        match self {
            SandboxResponse::Setting(m) => Ok(m),
            SandboxResponse::Error(e) => Err(RunFailure::new(e.kind.into(), e.detail)),
        }
    }
}

/// Checks an `n x (M + 1)` matrix (probabilities then cost per row) and
/// turns it into a setting, renormalising rows that are within
/// [`ROW_SUM_TOL`] of stochastic.
pub fn setting_from_matrix(matrix: &[Vec<f64>], m_count: usize) -> Result<AgentSetting, RunFailure> {
    if matrix.is_empty() {
        return Err(RunFailure::new(FailureKind::Malformed, "empty matrix"));
    }
    let mut probs = Vec::with_capacity(matrix.len());
    let mut costs = Vec::with_capacity(matrix.len());
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != m_count + 1 {
            return Err(RunFailure::new(
                FailureKind::Malformed,
                format!("row {i} has width {}, expected {}", row.len(), m_count + 1),
            ));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(RunFailure::new(FailureKind::Malformed, format!("row {i} has a non-finite entry")));
        }
        let cost = row[m_count];
        if cost < 0.0 {
            return Err(RunFailure::new(FailureKind::InvalidSetting, format!("row {i} has negative cost {cost}")));
        }
        let p = &row[..m_count];
        if let Some(v) = p.iter().find(|v| **v < -ROW_SUM_TOL) {
            return Err(RunFailure::new(
                FailureKind::InvalidSetting,
                format!("row {i} has negative probability {v}"),
            ));
        }
        let clipped: Vec<f64> = p.iter().map(|v| v.max(0.0)).collect();
        let sum: f64 = clipped.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(RunFailure::new(
                FailureKind::InvalidSetting,
                format!("row {i} sums to {sum}"),
            ));
        }
        probs.push(clipped.into_iter().map(|v| v / sum).collect());
        costs.push(cost);
    }
    AgentSetting::new(probs, costs).map_err(|e| RunFailure::new(FailureKind::InvalidSetting, format!("{e}")))
}
