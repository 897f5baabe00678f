//! Level shifts in metric histories.

use serde::{Deserialize, Serialize};

use super::stats::{median, sse};
use super::{AnalysisError, Evidence, Finding, FindingKind};
use crate::timefmt::{self, Timestamp};

pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_MIN_SAMPLES: usize = 3;
/// Relative SSE reduction a two-segment split needs to count as a change.
pub const CHANGE_POINT_MARGIN: f64 = 0.2;

/// Time-ordered values of one metric for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    points: Vec<(Timestamp, f64)>,
}

impl MetricSeries {
    /// Requires at least one point, strictly increasing timestamps and
    /// finite values.
    pub fn new(points: Vec<(Timestamp, f64)>) -> Result<Self, AnalysisError> {
        if points.is_empty() {
            return Err(AnalysisError::InvalidSeries("series is empty".into()));
        }
        for (i, (t, v)) in points.iter().enumerate() {
            if !v.is_finite() {
                return Err(AnalysisError::InvalidSeries(format!(
                    "value {v} at position {i} is not finite"
                )));
            }
            if i > 0 && points[i - 1].0 >= *t {
                return Err(AnalysisError::InvalidSeries(format!(
                    "timestamps not strictly increasing at position {i} ({})",
                    timefmt::format(t)
                )));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(Timestamp, f64)] {
        &self.points
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|(_, v)| *v).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Which side of a split lacks samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Before,
    After,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Before => "before",
            Side::After => "after",
        })
    }
}

/// Compares the medians before and strictly-before / at-or-after
/// `event_time`. Higher values are worse: a rise beyond `1 + delta` is a
/// regression, a drop below `1 - delta` an improvement.
pub fn detect_step(
    series: &MetricSeries,
    event_time: Timestamp,
    delta: f64,
    min_samples_per_side: usize,
) -> Result<Finding, AnalysisError> {
    let split = series.points.partition_point(|(t, _)| *t < event_time);
    let (before, after) = series.points.split_at(split);
    step_finding(
        before,
        after,
        event_time,
        delta,
        min_samples_per_side.max(1),
        None,
    )
}

/// Locates the best split with [`find_change_point`] and classifies the
/// step there. Returns kind `none` when there is no convincing split.
pub fn detect_auto(series: &MetricSeries, delta: f64) -> Result<Finding, AnalysisError> {
    let values = series.values();
    match find_change_point(&values)? {
        Some(k) => {
            let (before, after) = series.points.split_at(k);
            step_finding(before, after, after[0].0, delta, 1, Some(k))
        }
        None => {
            let m = median(&values).expect("series has >= 4 points");
            Ok(Finding {
                kind: FindingKind::None,
                severity: 1.0,
                evidence: Evidence::Step {
                    event_time: None,
                    change_point_index: None,
                    m_before: m,
                    m_after: m,
                    n_before: values.len(),
                    n_after: 0,
                    delta,
                },
            })
        }
    }
}

fn step_finding(
    before: &[(Timestamp, f64)],
    after: &[(Timestamp, f64)],
    event_time: Timestamp,
    delta: f64,
    min_samples: usize,
    change_point_index: Option<usize>,
) -> Result<Finding, AnalysisError> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(AnalysisError::InvalidParameter(format!("delta {delta}")));
    }
    for (side, pts) in [(Side::Before, before), (Side::After, after)] {
        if pts.len() < min_samples {
            return Err(AnalysisError::InsufficientSamples {
                side,
                have: pts.len(),
                need: min_samples,
            });
        }
    }
    let vals = |pts: &[(Timestamp, f64)]| pts.iter().map(|(_, v)| *v).collect::<Vec<_>>();
    let m_before = median(&vals(before)).expect("non-empty");
    let m_after = median(&vals(after)).expect("non-empty");
    if m_before <= 0.0 {
        return Err(AnalysisError::InvalidSeries(format!(
            "baseline median {m_before} must be positive"
        )));
    }
    let kind = if m_after > m_before * (1.0 + delta) {
        FindingKind::Regression
    } else if m_after < m_before * (1.0 - delta) {
        FindingKind::Improvement
    } else {
        FindingKind::None
    };
    Ok(Finding {
        kind,
        severity: m_after / m_before,
        evidence: Evidence::Step {
            event_time: Some(event_time),
            change_point_index,
            m_before,
            m_after,
            n_before: before.len(),
            n_after: after.len(),
            delta,
        },
    })
}

/// Best two-segment split of `values`.
///
/// Returns the prefix length `k` in `[2, n-2]` minimising
/// `SSE(values[..k]) + SSE(values[k..])`, the smallest such `k` on ties, or
/// `None` if that split does not reduce the single-segment SSE by at least
/// [`CHANGE_POINT_MARGIN`] (relative).
pub fn find_change_point(values: &[f64]) -> Result<Option<usize>, AnalysisError> {
    let n = values.len();
    if n < 4 {
        return Err(AnalysisError::TooFewPoints { have: n, need: 4 });
    }
    let total = sse(values);
    let mut best: Option<(usize, f64)> = None;
    for k in 2..=n - 2 {
        let cost = sse(&values[..k]) + sse(&values[k..]);
        if best.is_none_or(|(_, c)| cost < c) {
            best = Some((k, cost));
        }
    }
    let (k, cost) = best.expect("n >= 4 gives at least one split");
    if total > 0.0 && (total - cost) / total >= CHANGE_POINT_MARGIN {
        Ok(Some(k))
    } else {
        Ok(None)
    }
}
