use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::timefmt::{self, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunState {
    Succeeded,
    Failed,
    Timeout,
    SubmitError,
}

impl RunState {
    pub const ALL: [RunState; 4] = [
        RunState::Succeeded,
        RunState::Failed,
        RunState::Timeout,
        RunState::SubmitError,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RunState::Succeeded => "succeeded",
            RunState::Failed => "failed",
            RunState::Timeout => "timeout",
            RunState::SubmitError => "submit-error",
        }
    }
}

impl fmt::Display for RunState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RunState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RunState::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown run state `{s}`"))
    }
}

/// One archived execution of a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub run_id: String,
    pub spec_name: String,
    pub params: BTreeMap<String, String>,
    #[serde(with = "timefmt")]
    pub started_at: Timestamp,
    #[serde(with = "timefmt")]
    pub finished_at: Timestamp,
    pub elapsed_seconds: f64,
    pub state: RunState,
    pub exit_status: Option<i32>,
    pub metrics: BTreeMap<String, f64>,
    pub artifact_dir: PathBuf,
    pub machine_label: String,
}

/// Rounds to six fractional digits.
pub fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

impl RunRecord {
    /// Checks the state/exit-status contract and timestamp ordering.
    pub fn validate(&self) -> Result<(), String> {
        match (self.state, self.exit_status) {
            (RunState::Succeeded, Some(0)) => {}
            (RunState::Succeeded, s) => {
                return Err(format!("succeeded record with exit status {s:?}"));
            }
            // A zero exit can still be a failure when metric extraction broke.
            (RunState::Failed, Some(_)) => {}
            (RunState::Failed, None) => return Err("failed record without exit status".into()),
            (RunState::Timeout | RunState::SubmitError, None) => {}
            (st, Some(s)) => return Err(format!("{st} record with exit status {s}")),
        }
        if self.finished_at < self.started_at {
            return Err("finished_at precedes started_at".into());
        }
        if !(self.elapsed_seconds >= 0.0 && self.elapsed_seconds.is_finite()) {
            return Err(format!("invalid elapsed_seconds {}", self.elapsed_seconds));
        }
        if self.metrics.values().any(|v| !v.is_finite()) {
            return Err("non-finite metric value".into());
        }
        Ok(())
    }

    pub fn succeeded(&self) -> bool {
        self.state == RunState::Succeeded
    }

    /// Looks up a metric, falling back to the record's own wall clock for
    /// the name `elapsed_seconds`.
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied().or_else(|| {
            (name == "elapsed_seconds").then_some(self.elapsed_seconds)
        })
    }
}
