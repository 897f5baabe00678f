//! Scaling tables, regression and anomaly findings, report artifacts.
//!
//! Aggregation uses medians throughout. Findings are plain data with a
//! `kind`, a `severity` ratio and detector-specific `evidence`, and serialize
//! to one JSON object each.

mod detect;
mod report;
mod scaling;
pub mod stats;
mod telemetry;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use detect::{
    detect_auto, detect_step, find_change_point, MetricSeries, Side, CHANGE_POINT_MARGIN,
    DEFAULT_DELTA, DEFAULT_MIN_SAMPLES,
};
pub use report::{render_report, ReportOptions, CSV_HEADER};
pub(crate) use scaling::node_count;
pub use scaling::{scaling_table, ScalingRow};
pub use telemetry::{
    detect_idle_tail, detect_initial_memory, IdleTailParams, JobTelemetry, NodeTelemetry,
    DEFAULT_MEMORY_THRESHOLD, DEFAULT_MEMORY_WINDOW,
};

use crate::timefmt::Timestamp;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("run {run_id} has no metric `{metric}`")]
    MissingMetric { run_id: String, metric: String },
    #[error("run {run_id} has no parameter `{param}`")]
    MissingParam { run_id: String, param: String },
    #[error("run {run_id}: node count `{value}` is not a positive integer")]
    BadNodeCount { run_id: String, value: String },
    #[error("run {0} did not succeed")]
    NotSucceeded(String),
    #[error("reference node count {0} has no runs")]
    MissingReference(u64),
    #[error("insufficient samples {side} the event: have {have}, need {need}")]
    InsufficientSamples { side: Side, have: usize, need: usize },
    #[error("too few points: have {have}, need {need}")]
    TooFewPoints { have: usize, need: usize },
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("malformed telemetry: {0}")]
    MalformedTelemetry(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no records to report")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FindingKind {
    Regression,
    Improvement,
    IdleTail,
    HighInitialMemory,
    None,
}

/// Numbers backing a finding, one variant per detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "detector", rename_all = "kebab-case")]
pub enum Evidence {
    Step {
        #[serde(with = "opt_timestamp")]
        event_time: Option<Timestamp>,
        change_point_index: Option<usize>,
        m_before: f64,
        m_after: f64,
        n_before: usize,
        n_after: usize,
        delta: f64,
    },
    IdleTail {
        t_star_seconds: Option<f64>,
        #[serde(with = "opt_timestamp")]
        t_star_at: Option<Timestamp>,
        idle_nodes: Vec<String>,
        busy_nodes: Vec<String>,
        u_idle: f64,
        u_busy: f64,
        idle_fraction: f64,
        tail_fraction_max: f64,
    },
    InitialMemory {
        flagged_nodes: Vec<String>,
        initial_fractions: BTreeMap<String, f64>,
        threshold_fraction: f64,
        window_samples: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub evidence: Evidence,
    pub severity: f64,
}

mod opt_timestamp {
    use crate::timefmt::{self, Timestamp};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Timestamp>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(t) => s.serialize_str(&timefmt::format(t)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Timestamp>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|raw| timefmt::parse(&raw).map_err(serde::de::Error::custom))
            .transpose()
    }
}
