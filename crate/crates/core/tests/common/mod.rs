//! Shared helpers for the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use benchkeep::analysis::{JobTelemetry, NodeTelemetry};
use benchkeep::orchestrator::{RunRecord, RunState};
use benchkeep::store::Store;
use benchkeep::timefmt::{self, Timestamp};
use benchkeep::workload::ComplexMatrix;
use num_complex::Complex64;
use sha2::{Digest, Sha256};

pub const BK: &str = env!("CARGO_BIN_EXE_bk");
pub const BK_WORKLOAD: &str = env!("CARGO_BIN_EXE_bk-workload");

pub const GIB: f64 = 1024.0 * 1024.0 * 1024.0;

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

fn finish(out: Output) -> Run {
    Run {
        code: out.status.code().expect("exited normally"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

/// Runs the `bk` binary with `BK_STORE` cleared.
pub fn bk(args: &[&str]) -> Run {
    finish(
        Command::new(BK)
            .args(args)
            .env_remove("BK_STORE")
            .env_remove("BK_MACHINE")
            .output()
            .expect("spawn bk"),
    )
}

pub fn bk_workload(args: &[&str], cwd: &Path) -> Run {
    finish(
        Command::new(BK_WORKLOAD)
            .args(args)
            .current_dir(cwd)
            .output()
            .expect("spawn bk-workload"),
    )
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Writes `benchmark "<name>"` plus `body` to `<dir>/<name>.bk`, with
/// runs going to `<dir>/runs`.
pub fn write_spec(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(format!("{name}.bk"));
    fs::write(
        &path,
        format!("benchmark \"{name}\"\nworkdir_root = {}\n{body}", s(&dir.join("runs"))),
    )
    .unwrap();
    path
}

pub fn ts(s: &str) -> Timestamp {
    timefmt::parse(s).unwrap()
}

/// A succeeded record with the given metric values, as the orchestrator
/// would have produced it.
pub fn record(
    spec_name: &str,
    params: &[(&str, &str)],
    started_at: Timestamp,
    elapsed: f64,
    metrics: &[(&str, f64)],
    state: RunState,
) -> RunRecord {
    let params: BTreeMap<String, String> =
        params.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    let key = format!("{spec_name}|{params:?}|{}", timefmt::format(&started_at));
    let run_id = hex::encode(&Sha256::digest(key.as_bytes())[..8]);
    RunRecord {
        run_id,
        spec_name: spec_name.to_string(),
        params,
        started_at,
        finished_at: started_at + chrono::Duration::milliseconds((elapsed * 1000.0) as i64),
        elapsed_seconds: elapsed,
        state,
        exit_status: match state {
            RunState::Succeeded => Some(0),
            RunState::Failed => Some(1),
            _ => None,
        },
        metrics: metrics.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        artifact_dir: PathBuf::from("/nonexistent"),
        machine_label: "jwb".into(),
    }
}

/// Appends `values` as a daily series starting at `start` for one
/// configuration.
pub fn append_series(store: &Store, spec: &str, params: &[(&str, &str)], start: &str, values: &[f64]) {
    let t0 = ts(start);
    for (i, v) in values.iter().enumerate() {
        let r = record(
            spec,
            params,
            t0 + chrono::Duration::days(i as i64),
            *v,
            &[],
            RunState::Succeeded,
        );
        store.append(&r).unwrap();
    }
}

/// Step store: `n_before` runs around 100 s, then `n_after` runs around
/// 110 s from the event day on. Returns the event timestamp.
pub fn step_store(store: &Store, spec: &str, n_before: usize, n_after: usize) -> String {
    let jitter = [0.0, 0.4, -0.3, 0.2, -0.1, 0.3, -0.2, 0.1];
    let mut values = Vec::new();
    for i in 0..n_before {
        values.push(100.0 + jitter[i % jitter.len()]);
    }
    for i in 0..n_after {
        values.push(110.0 + jitter[(i + 3) % jitter.len()]);
    }
    append_series(store, spec, &[("nodes", "4")], "2025-09-01T06:00:00Z", &values);
    let event = ts("2025-09-01T00:00:00Z") + chrono::Duration::days(n_before as i64);
    timefmt::format(&event)
}

/// Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>() + off;
        if off <= 1e-30 * scale.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - sn * akq;
                    a[k][q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - sn * aqk;
                    a[q][k] = sn * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Eigenvalues of a Hermitian matrix through the real embedding
/// `[[Re, -Im], [Im, Re]]`, whose spectrum is each eigenvalue twice.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Vec<f64> {
    let n = m.n();
    let mut a = vec![vec![0.0; 2 * n]; 2 * n];
    for i in 0..n {
        for j in 0..n {
            let z = m[(i, j)];
            a[i][j] = z.re;
            a[i + n][j + n] = z.re;
            a[i][j + n] = -z.im;
            a[i + n][j] = z.im;
        }
    }
    let ev = jacobi_eigenvalues(a);
    ev.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect()
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `n_nodes` nodes sampled once a minute for `minutes`; all but the last
/// node drop from 0.9 to 0.0 GPU utilization at `idle_from_minute`.
pub fn straggler_job(n_nodes: usize, minutes: usize, idle_from_minute: usize) -> JobTelemetry {
    JobTelemetry {
        duration_seconds: minutes as f64 * 60.0,
        sample_period_seconds: 60.0,
        started_at: Some(ts("2025-09-10T08:00:00Z")),
        nodes: (0..n_nodes)
            .map(|i| NodeTelemetry {
                node_id: format!("jwb{:04}", i + 1),
                gpu_util: (0..minutes)
                    .map(|m| if i + 1 < n_nodes && m >= idle_from_minute { 0.01 } else { 0.92 })
                    .collect(),
                mem_bytes: vec![40.0 * GIB; minutes],
                node_mem_capacity_bytes: 512.0 * GIB,
            })
            .collect(),
    }
}

pub fn count(haystack: &str, needle: &str) -> usize {
    haystack.matches(needle).count()
}
