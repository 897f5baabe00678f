//! Per-node job telemetry and the two node-level anomaly detectors.

use std::collections::{BTreeMap, HashSet};

use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::stats::mean;
use super::{AnalysisError, Evidence, Finding, FindingKind};
use crate::timefmt::{self, Timestamp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeTelemetry {
    pub node_id: String,
    /// GPU utilization per sample, in `[0, 1]`.
    pub gpu_util: Vec<f64>,
    pub mem_bytes: Vec<f64>,
    pub node_mem_capacity_bytes: f64,
}

/// Job report shape: evenly sampled series for every node of one job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobTelemetry {
    pub duration_seconds: f64,
    pub sample_period_seconds: f64,
    /// Wall-clock start of the job, when known.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_ts")]
    pub started_at: Option<Timestamp>,
    pub nodes: Vec<NodeTelemetry>,
}

mod opt_ts {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Timestamp>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(t) => timefmt::serialize(t, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Timestamp>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|raw| timefmt::parse(&raw).map_err(serde::de::Error::custom))
            .transpose()
    }
}

impl JobTelemetry {
    /// Number of samples every series must have.
    pub fn expected_samples(&self) -> usize {
        // Tolerate representation error in e.g. 7200 / 60.
        (self.duration_seconds / self.sample_period_seconds + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        let bad = |m: String| Err(AnalysisError::MalformedTelemetry(m));
        if !(self.duration_seconds > 0.0 && self.duration_seconds.is_finite()) {
            return bad(format!("duration_seconds {} must be positive", self.duration_seconds));
        }
        if !(self.sample_period_seconds > 0.0 && self.sample_period_seconds.is_finite()) {
            return bad(format!(
                "sample_period_seconds {} must be positive",
                self.sample_period_seconds
            ));
        }
        let len = self.expected_samples();
        let mut ids = HashSet::new();
        for node in &self.nodes {
            let id = &node.node_id;
            if !ids.insert(id) {
                return bad(format!("duplicate node id {id}"));
            }
            if node.gpu_util.len() != len || node.mem_bytes.len() != len {
                return bad(format!(
                    "node {id}: expected {len} samples, got gpu_util={} mem_bytes={}",
                    node.gpu_util.len(),
                    node.mem_bytes.len()
                ));
            }
            if let Some(u) = node.gpu_util.iter().find(|u| !(0.0..=1.0).contains(*u)) {
                return bad(format!("node {id}: utilization {u} outside [0, 1]"));
            }
            if let Some(m) = node.mem_bytes.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
                return bad(format!("node {id}: memory sample {m} is negative or not finite"));
            }
            if !(node.node_mem_capacity_bytes > 0.0 && node.node_mem_capacity_bytes.is_finite()) {
                return bad(format!("node {id}: capacity must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdleTailParams {
    pub u_idle: f64,
    pub u_busy: f64,
    pub idle_fraction: f64,
    pub tail_fraction_max: f64,
}

impl Default for IdleTailParams {
    fn default() -> Self {
        Self {
            u_idle: 0.05,
            u_busy: 0.5,
            idle_fraction: 0.75,
            tail_fraction_max: 0.9,
        }
    }
}

/// Most nodes go idle while at least one straggler keeps working.
///
/// A node is idle from sample `s` if its utilization stays below `u_idle`
/// from `s` to the end. `t*` is the earliest sample at which at least
/// `idle_fraction` of the nodes are idle-from-`t*` and some node averages at
/// least `u_busy` over `[t*, end]`. The pattern is reported when
/// `t* / duration <= tail_fraction_max`.
pub fn detect_idle_tail(t: &JobTelemetry, params: IdleTailParams) -> Result<Finding, AnalysisError> {
    t.validate()?;
    if t.nodes.len() < 2 {
        return Err(AnalysisError::MalformedTelemetry(format!(
            "idle-tail detection needs at least 2 nodes, got {}",
            t.nodes.len()
        )));
    }
    let len = t.expected_samples();
    let n_nodes = t.nodes.len();
    // First sample from which each node stays idle (len when it never does).
    let idle_from: Vec<usize> = t
        .nodes
        .iter()
        .map(|n| {
            n.gpu_util
                .iter()
                .rposition(|&u| u >= params.u_idle)
                .map_or(0, |last_busy| last_busy + 1)
        })
        .collect();

    let found = (0..len).find_map(|s| {
        let idle: Vec<usize> = (0..n_nodes).filter(|&i| idle_from[i] <= s).collect();
        if (idle.len() as f64) < params.idle_fraction * n_nodes as f64 {
            return None;
        }
        let busy: Vec<usize> = (0..n_nodes)
            .filter(|&i| mean(&t.nodes[i].gpu_util[s..]).is_some_and(|m| m >= params.u_busy))
            .collect();
        (!busy.is_empty()).then_some((s, idle, busy))
    });

    let ids = |idx: &[usize]| idx.iter().map(|&i| t.nodes[i].node_id.clone()).collect::<Vec<_>>();
    let (kind, t_star, idle, busy) = match found {
        Some((s, idle, busy)) => {
            let t_star = s as f64 * t.sample_period_seconds;
            let kind = if t_star / t.duration_seconds <= params.tail_fraction_max {
                FindingKind::IdleTail
            } else {
                FindingKind::None
            };
            (kind, Some(t_star), ids(&idle), ids(&busy))
        }
        None => (FindingKind::None, None, Vec::new(), Vec::new()),
    };
    Ok(Finding {
        kind,
        // Fraction of the job spent in the idle tail.
        severity: t_star.map_or(0.0, |ts| 1.0 - ts / t.duration_seconds),
        evidence: Evidence::IdleTail {
            t_star_seconds: t_star,
            t_star_at: match (t.started_at, t_star) {
                (Some(start), Some(ts)) => Some(start + Duration::microseconds((ts * 1e6).round() as i64)),
                _ => None,
            },
            idle_nodes: idle,
            busy_nodes: busy,
            u_idle: params.u_idle,
            u_busy: params.u_busy,
            idle_fraction: params.idle_fraction,
            tail_fraction_max: params.tail_fraction_max,
        },
    })
}

pub const DEFAULT_MEMORY_THRESHOLD: f64 = 0.25;
pub const DEFAULT_MEMORY_WINDOW: usize = 3;

/// Flags nodes whose mean memory use over the first `window_samples`
/// samples exceeds `threshold_fraction` of their capacity.
pub fn detect_initial_memory(
    t: &JobTelemetry,
    threshold_fraction: f64,
    window_samples: usize,
) -> Result<Finding, AnalysisError> {
    t.validate()?;
    if window_samples == 0 {
        return Err(AnalysisError::InvalidParameter("window_samples must be >= 1".into()));
    }
    if !(threshold_fraction.is_finite() && threshold_fraction >= 0.0) {
        return Err(AnalysisError::InvalidParameter(format!(
            "threshold_fraction {threshold_fraction}"
        )));
    }
    let mut fractions = BTreeMap::new();
    let mut flagged = Vec::new();
    for node in &t.nodes {
        let window = &node.mem_bytes[..window_samples.min(node.mem_bytes.len())];
        let Some(start) = mean(window) else { continue };
        let fraction = start / node.node_mem_capacity_bytes;
        fractions.insert(node.node_id.clone(), fraction);
        if start > threshold_fraction * node.node_mem_capacity_bytes {
            flagged.push(node.node_id.clone());
        }
    }
    let severity = flagged
        .iter()
        .map(|id| fractions[id])
        .fold(0.0, f64::max);
    Ok(Finding {
        kind: if flagged.is_empty() {
            FindingKind::None
        } else {
            FindingKind::HighInitialMemory
        },
        severity,
        evidence: Evidence::InitialMemory {
            flagged_nodes: flagged,
            initial_fractions: fractions,
            threshold_fraction,
            window_samples,
        },
    })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub const GIB: f64 = 1024.0 * 1024.0 * 1024.0;

    /// `n_nodes` nodes sampled once a minute for `minutes`; every node but
    /// the last drops from 0.9 to 0.0 utilization at `idle_from_minute`.
    pub fn straggler_job(n_nodes: usize, minutes: usize, idle_from_minute: usize) -> JobTelemetry {
        JobTelemetry {
            duration_seconds: minutes as f64 * 60.0,
            sample_period_seconds: 60.0,
            started_at: None,
            nodes: (0..n_nodes)
                .map(|i| NodeTelemetry {
                    node_id: format!("jwb{:04}", i + 1),
                    gpu_util: (0..minutes)
                        .map(|m| if i + 1 < n_nodes && m >= idle_from_minute { 0.0 } else { 0.9 })
                        .collect(),
                    mem_bytes: vec![4.0 * GIB; minutes],
                    node_mem_capacity_bytes: 512.0 * GIB,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn t_star(f: &Finding) -> Option<f64> {
        match &f.evidence {
            Evidence::IdleTail { t_star_seconds, .. } => *t_star_seconds,
            other => panic!("unexpected evidence {other:?}"),
        }
    }

    #[test]
    fn straggler_pattern_at_75_minutes() {
        let job = straggler_job(8, 120, 75);
        let f = detect_idle_tail(&job, IdleTailParams::default()).unwrap();
        assert_eq!(f.kind, FindingKind::IdleTail);
        assert!((t_star(&f).unwrap() - 75.0 * 60.0).abs() <= 60.0);
        match &f.evidence {
            Evidence::IdleTail { idle_nodes, busy_nodes, .. } => {
                assert_eq!(idle_nodes.len(), 7);
                assert_eq!(busy_nodes, &vec!["jwb0008".to_string()]);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn all_busy_or_all_idle_is_not_flagged() {
        let busy = straggler_job(8, 120, 120);
        assert_eq!(detect_idle_tail(&busy, IdleTailParams::default()).unwrap().kind, FindingKind::None);

        let mut idle = straggler_job(8, 120, 0);
        for n in &mut idle.nodes {
            n.gpu_util.iter_mut().for_each(|u| *u = 0.0);
        }
        let f = detect_idle_tail(&idle, IdleTailParams::default()).unwrap();
        assert_eq!(f.kind, FindingKind::None);
        assert_eq!(t_star(&f), None);
    }

    #[test]
    fn late_idling_beyond_tail_limit() {
        // Idle only for the last 6 of 120 minutes: t*/duration = 0.95 > 0.9.
        let job = straggler_job(8, 120, 114);
        let f = detect_idle_tail(&job, IdleTailParams::default()).unwrap();
        assert_eq!(f.kind, FindingKind::None);
        assert_eq!(t_star(&f), Some(114.0 * 60.0));
    }

    #[test]
    fn malformed_telemetry() {
        let mut job = straggler_job(4, 10, 5);
        job.nodes[2].gpu_util.pop();
        assert!(matches!(
            detect_idle_tail(&job, IdleTailParams::default()),
            Err(AnalysisError::MalformedTelemetry(_))
        ));
        let mut job = straggler_job(4, 10, 5);
        job.nodes[0].gpu_util[0] = 1.5;
        assert!(detect_initial_memory(&job, 0.25, 3).is_err());
        let job = straggler_job(1, 10, 5);
        assert!(detect_idle_tail(&job, IdleTailParams::default()).is_err());
        assert!(detect_initial_memory(&job, 0.25, 3).is_ok());
    }

    #[test]
    fn high_initial_memory() {
        let mut job = straggler_job(8, 120, 75);
        for n in &mut job.nodes {
            n.mem_bytes.iter_mut().for_each(|m| *m = 0.0);
        }
        assert_eq!(detect_initial_memory(&job, 0.25, 3).unwrap().kind, FindingKind::None);

        job.nodes[3].mem_bytes[..3].iter_mut().for_each(|m| *m = 256.0 * GIB);
        let f = detect_initial_memory(&job, 0.25, 3).unwrap();
        assert_eq!(f.kind, FindingKind::HighInitialMemory);
        assert_eq!(f.severity, 0.5);
        match &f.evidence {
            Evidence::InitialMemory { flagged_nodes, .. } => assert_eq!(flagged_nodes, &vec!["jwb0004".to_string()]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn zero_threshold_flags_any_nonzero_start() {
        let mut job = straggler_job(3, 10, 5);
        job.nodes[0].mem_bytes.iter_mut().for_each(|m| *m = 0.0);
        job.nodes[1].mem_bytes[0] = 1.0;
        job.nodes[1].mem_bytes[1..].iter_mut().for_each(|m| *m = 0.0);
        let f = detect_initial_memory(&job, 0.0, 3).unwrap();
        match &f.evidence {
            Evidence::InitialMemory { flagged_nodes, .. } => {
                assert_eq!(flagged_nodes, &vec!["jwb0002".to_string(), "jwb0003".to_string()]);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn t_star_invariant_under_time_shift() {
        let mut job = straggler_job(8, 120, 75);
        let base = detect_idle_tail(&job, IdleTailParams::default()).unwrap();
        for shift_h in [0i64, 1, 13, 1000] {
            let start = timefmt::parse("2024-09-01T20:00:00Z").unwrap() + Duration::hours(shift_h);
            job.started_at = Some(start);
            let f = detect_idle_tail(&job, IdleTailParams::default()).unwrap();
            assert_eq!(t_star(&f), t_star(&base));
            match f.evidence {
                Evidence::IdleTail { t_star_at, .. } => {
                    assert_eq!(t_star_at, Some(start + Duration::minutes(75)))
                }
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn telemetry_json_shape() {
        let job = straggler_job(2, 3, 1);
        let v = serde_json::to_value(&job).unwrap();
        assert!(v.get("started_at").is_none());
        let back: JobTelemetry = serde_json::from_value(v).unwrap();
        assert_eq!(back, job);
        let text = r#"{"duration_seconds":120,"sample_period_seconds":60,"started_at":"2024-09-01T20:00:00Z",
            "nodes":[{"node_id":"a","gpu_util":[0.5,0.5],"mem_bytes":[0,0],"node_mem_capacity_bytes":10}]}"#;
        let parsed: JobTelemetry = serde_json::from_str(text).unwrap();
        parsed.validate().unwrap();
    }
}
