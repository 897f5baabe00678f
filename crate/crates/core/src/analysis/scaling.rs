use std::collections::BTreeMap;

use serde::Serialize;

use super::{stats::median, AnalysisError};
use crate::orchestrator::RunRecord;

/// One row of a strong-scaling table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub p: u64,
    pub n_runs: usize,
    pub median_elapsed_seconds: f64,
    pub median_energy_joules: Option<f64>,
    pub speedup: f64,
    pub efficiency: f64,
}

pub(crate) fn node_count(record: &RunRecord, node_param: &str) -> Result<u64, AnalysisError> {
    let raw = record
        .params
        .get(node_param)
        .ok_or_else(|| AnalysisError::MissingParam {
            run_id: record.run_id.clone(),
            param: node_param.to_string(),
        })?;
    raw.parse::<u64>()
        .ok()
        .filter(|&p| p > 0)
        .ok_or_else(|| AnalysisError::BadNodeCount {
            run_id: record.run_id.clone(),
            value: raw.clone(),
        })
}

/// Median-based strong-scaling table, one row per node count in ascending
/// order. `speedup(p) = T(p_ref) / T(p)` and
/// `efficiency(p) = speedup(p) * p_ref / p`.
///
/// `energy_metric`, when given, fills `median_energy_joules` from the runs
/// that report it.
pub fn scaling_table(
    records: &[RunRecord],
    metric: &str,
    node_param: &str,
    p_ref: u64,
    energy_metric: Option<&str>,
) -> Result<Vec<ScalingRow>, AnalysisError> {
    let mut groups: BTreeMap<u64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        if !r.succeeded() {
            return Err(AnalysisError::NotSucceeded(r.run_id.clone()));
        }
        let p = node_count(r, node_param)?;
        let t = r.metric(metric).ok_or_else(|| AnalysisError::MissingMetric {
            run_id: r.run_id.clone(),
            metric: metric.to_string(),
        })?;
        let entry = groups.entry(p).or_default();
        entry.0.push(t);
        if let Some(e) = energy_metric.and_then(|m| r.metric(m)) {
            entry.1.push(e);
        }
    }
    let t_ref = groups
        .get(&p_ref)
        .and_then(|(t, _)| median(t))
        .ok_or(AnalysisError::MissingReference(p_ref))?;

    Ok(groups
        .into_iter()
        .map(|(p, (times, energies))| {
            let t = median(&times).expect("groups are non-empty");
            let speedup = t_ref / t;
            ScalingRow {
                p,
                n_runs: times.len(),
                median_elapsed_seconds: t,
                median_energy_joules: median(&energies),
                speedup,
                efficiency: speedup * p_ref as f64 / p as f64,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::RunState;
    use crate::timefmt;

    fn rec(id: &str, p: &str, t: f64, energy: Option<f64>) -> RunRecord {
        let ts = timefmt::parse("2025-09-01T00:00:00Z").unwrap();
        let mut metrics = BTreeMap::from([("wall".to_string(), t)]);
        if let Some(e) = energy {
            metrics.insert("energy_joules".into(), e);
        }
        RunRecord {
            run_id: id.into(),
            spec_name: "s".into(),
            params: BTreeMap::from([("nodes".into(), p.into())]),
            started_at: ts,
            finished_at: ts,
            elapsed_seconds: t,
            state: RunState::Succeeded,
            exit_status: Some(0),
            metrics,
            artifact_dir: "x".into(),
            machine_label: "m".into(),
        }
    }

    #[test]
    fn two_point_table() {
        let rows = scaling_table(
            &[rec("a", "1", 100.0, None), rec("b", "2", 55.0, Some(7.0))],
            "wall",
            "nodes",
            1,
            Some("energy_joules"),
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].speedup, 1.0);
        assert_eq!(rows[0].efficiency, 1.0);
        assert_eq!(rows[0].median_energy_joules, None);
        assert!((rows[1].speedup - 100.0 / 55.0).abs() < 1e-12);
        assert!((rows[1].speedup - 1.818_181_818_18).abs() < 1e-9);
        assert!((rows[1].efficiency - 0.909_090_909_09).abs() < 1e-9);
        assert_eq!(rows[1].median_energy_joules, Some(7.0));
    }

    #[test]
    fn single_reference_row_and_median_of_three() {
        let rows = scaling_table(
            &[rec("a", "1", 98.0, None), rec("b", "1", 102.0, None), rec("c", "1", 100.0, None)],
            "wall",
            "nodes",
            1,
            None,
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].n_runs, 3);
        assert_eq!(rows[0].median_elapsed_seconds, 100.0);
        assert_eq!((rows[0].speedup, rows[0].efficiency), (1.0, 1.0));
    }

    #[test]
    fn reference_at_larger_p_is_exactly_one() {
        // Values chosen so that t/t is the only way to get exactly 1.
        let rows = scaling_table(
            &[rec("a", "3", 0.1 + 0.2, None), rec("b", "6", 0.17, None)],
            "wall",
            "nodes",
            3,
            None,
        )
        .unwrap();
        assert_eq!(rows[0].speedup, 1.0);
        assert_eq!(rows[0].efficiency, 1.0);
    }

    #[test]
    fn errors() {
        let ok = rec("a", "1", 1.0, None);
        assert!(matches!(
            scaling_table(&[ok.clone()], "missing", "nodes", 1, None),
            Err(AnalysisError::MissingMetric { .. })
        ));
        assert!(matches!(
            scaling_table(&[ok.clone()], "wall", "nodes", 2, None),
            Err(AnalysisError::MissingReference(2))
        ));
        assert!(matches!(
            scaling_table(&[rec("z", "zero", 1.0, None)], "wall", "nodes", 1, None),
            Err(AnalysisError::BadNodeCount { .. })
        ));
        let mut failed = ok;
        failed.state = RunState::Failed;
        failed.exit_status = Some(1);
        assert!(matches!(
            scaling_table(&[failed], "wall", "nodes", 1, None),
            Err(AnalysisError::NotSucceeded(_))
        ));
    }
}
