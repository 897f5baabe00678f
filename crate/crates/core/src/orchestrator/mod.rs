//! Planning and executing runs.
//!
//! [`plan`] turns configurations into [`RunPlan`]s, each with a fresh
//! directory under the spec's `workdir_root` holding `command.txt` and a copy
//! of the spec (`spec.bk`). [`execute`] submits a plan to an [`Executor`],
//! polls it to completion while enforcing the timeout, extracts metrics,
//! writes `record.json` next to the captured `stdout.log` / `stderr.log`, and
//! appends the record to the [`Store`].
//!
//! Only exit status 0 counts as success. Callers must still inspect the
//! returned [`RunRecord::state`].

mod executor;
mod record;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use executor::{
    exit_code, load_scenario, Executor, ExecutorError, ExecutorScenario, JobHandle, JobStatus,
    LocalExecutor, ScenarioOutcome, ScenarioStep, SimulatedExecutor, StopMode, SubmitError,
    STDERR_LOG, STDOUT_LOG,
};
pub use record::{round6, RunRecord, RunState};

use crate::specmatrix::{render_command, BenchmarkSpec, Configuration, MetricKind};
use crate::store::{Store, StoreError};
use crate::timefmt::{self, Timestamp};

pub const COMMAND_FILE: &str = "command.txt";
pub const SPEC_COPY_FILE: &str = "spec.bk";
pub const RECORD_FILE: &str = "record.json";
pub const HARNESS_ERROR_FILE: &str = "harness-error.txt";

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("workdir root {path} is not writable: {source}")]
    WorkdirNotWritable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("executor: {0}")]
    Executor(#[from] ExecutorError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunPlan {
    /// 16 lowercase hex digits.
    pub run_id: String,
    pub spec_name: String,
    pub configuration: Configuration,
    pub command: String,
    pub run_dir: PathBuf,
    pub timeout_seconds: u64,
    pub machine_label: String,
}

#[derive(Serialize)]
struct RunIdInput<'a> {
    spec_name: &'a str,
    assignment: BTreeMap<String, String>,
    submitted_at: String,
    seq: usize,
}

fn run_id(spec_name: &str, config: &Configuration, submitted_at: &Timestamp, seq: usize) -> String {
    let canonical = serde_json::to_string(&RunIdInput {
        spec_name,
        assignment: config.to_map(),
        submitted_at: timefmt::format(submitted_at),
        seq,
    })
    .expect("plain strings serialize");
    let digest = Sha256::digest(canonical.as_bytes());
    hex::encode(&digest[..8])
}

/// Highest sequence number already used under `root` for `stamp`.
fn last_seq(root: &Path, stamp: &str) -> Result<Option<usize>, io::Error> {
    let prefix = format!("{stamp}-");
    let mut max = None;
    for entry in fs::read_dir(root)? {
        let name = entry?.file_name();
        let Some(rest) = name.to_str().and_then(|n| n.strip_prefix(&prefix)) else {
            continue;
        };
        if let Some(seq) = rest.split('-').next().and_then(|s| s.parse::<usize>().ok()) {
            max = max.max(Some(seq));
        }
    }
    Ok(max)
}

/// Creates one fresh run directory per configuration.
///
/// Directories are named `<yyyymmddThhmmssZ>-<seq>-<run_id[..8]>`. Sequence
/// numbers continue past any directory already carrying the same timestamp,
/// so repeated planning within one second never reuses a directory.
pub fn plan(
    spec: &BenchmarkSpec,
    configs: &[Configuration],
    machine_label: &str,
) -> Result<Vec<RunPlan>, OrchestratorError> {
    if configs.is_empty() {
        return Ok(Vec::new());
    }
    let root = &spec.workdir_root;
    let not_writable = |source| OrchestratorError::WorkdirNotWritable {
        path: root.clone(),
        source,
    };
    fs::create_dir_all(root).map_err(not_writable)?;
    let submitted_at = timefmt::now();
    let stamp = submitted_at.format("%Y%m%dT%H%M%SZ").to_string();
    let mut seq = last_seq(root, &stamp)
        .map_err(not_writable)?
        .map_or(0, |s| s + 1);
    let spec_text = spec.to_spec_text();
    let timeout_seconds = spec.timeout_seconds();

    let mut plans = Vec::with_capacity(configs.len());
    for config in configs {
        let (id, run_dir) = loop {
            let id = run_id(&spec.name, config, &submitted_at, seq);
            let dir = root.join(format!("{stamp}-{seq:04}-{}", &id[..8]));
            match fs::create_dir(&dir) {
                Ok(()) => break (id, dir),
                // Another planner got there first.
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => seq += 1,
                Err(e) => return Err(not_writable(e)),
            }
        };
        seq += 1;
        let command = render_command(spec, config);
        let write = |name: &str, contents: &str| {
            let path = run_dir.join(name);
            fs::write(&path, contents).map_err(|source| OrchestratorError::Io { path, source })
        };
        write(COMMAND_FILE, &format!("{command}\n"))?;
        write(SPEC_COPY_FILE, &spec_text)?;
        plans.push(RunPlan {
            run_id: id,
            spec_name: spec.name.clone(),
            configuration: config.clone(),
            command,
            run_dir,
            timeout_seconds,
            machine_label: machine_label.to_string(),
        });
    }
    Ok(plans)
}

#[derive(Debug, Clone)]
pub struct ExecuteOptions {
    pub max_parallel: usize,
    /// Time between polite termination and a forced kill.
    pub grace: Duration,
    pub poll_interval: Duration,
}

impl Default for ExecuteOptions {
    fn default() -> Self {
        Self {
            max_parallel: 1,
            grace: Duration::from_secs(5),
            poll_interval: Duration::from_millis(10),
        }
    }
}

/// A submitted (or refused) job awaiting completion.
struct Submitted {
    handle: Result<JobHandle, SubmitError>,
    submitted: Timestamp,
}

fn submit(plan: &RunPlan, executor: &dyn Executor) -> Submitted {
    let submitted = timefmt::now();
    Submitted {
        handle: executor.submit(plan),
        submitted,
    }
}

/// Runs one plan to completion and persists its record.
pub fn execute(
    plan: &RunPlan,
    spec: &BenchmarkSpec,
    executor: &dyn Executor,
    store: &Store,
    opts: &ExecuteOptions,
) -> Result<RunRecord, OrchestratorError> {
    let job = submit(plan, executor);
    finish(plan, spec, executor, store, opts, job)
}

/// Executes plans with at most `opts.max_parallel` jobs in flight.
/// Submissions happen in plan order; records come back in plan order.
pub fn execute_all(
    plans: &[RunPlan],
    spec: &BenchmarkSpec,
    executor: &dyn Executor,
    store: &Store,
    opts: &ExecuteOptions,
) -> Result<Vec<RunRecord>, OrchestratorError> {
    let workers = opts.max_parallel.max(1).min(plans.len());
    let next = Mutex::new(0usize);
    let results: Mutex<Vec<Option<Result<RunRecord, OrchestratorError>>>> =
        Mutex::new((0..plans.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let (idx, job) = {
                    let mut n = next.lock().unwrap();
                    if *n >= plans.len() {
                        return;
                    }
                    let idx = *n;
                    *n += 1;
                    (idx, submit(&plans[idx], executor))
                };
                let out = finish(&plans[idx], spec, executor, store, opts, job);
                results.lock().unwrap()[idx] = Some(out);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every plan executed"))
        .collect()
}

enum Outcome {
    Exited(i32),
    TimedOut,
    Refused(String),
}

fn finish(
    plan: &RunPlan,
    spec: &BenchmarkSpec,
    executor: &dyn Executor,
    store: &Store,
    opts: &ExecuteOptions,
    job: Submitted,
) -> Result<RunRecord, OrchestratorError> {
    let timeout = Duration::from_secs(plan.timeout_seconds);
    let mut started: Option<(Timestamp, Instant)> = None;
    let mut terminated_at: Option<Instant> = None;
    let mut killed = false;

    let (outcome, handle) = match job.handle {
        Err(e) => (Outcome::Refused(e.to_string()), None),
        Ok(handle) => loop {
            let status = match executor.poll(handle) {
                Ok(s) => s,
                Err(e) => {
                    let _ = executor.cancel(handle, StopMode::Kill);
                    return Err(e.into());
                }
            };
            if status != JobStatus::Queued && started.is_none() {
                started = Some((timefmt::now(), Instant::now()));
            }
            match status {
                JobStatus::Finished(code) => {
                    let outcome = if terminated_at.is_some() {
                        Outcome::TimedOut
                    } else {
                        Outcome::Exited(code)
                    };
                    break (outcome, Some(handle));
                }
                JobStatus::Running => {
                    let (_, t0) = started.expect("set above");
                    match terminated_at {
                        None if t0.elapsed() >= timeout => {
                            executor.cancel(handle, StopMode::Terminate)?;
                            terminated_at = Some(Instant::now());
                        }
                        Some(t) if !killed && t.elapsed() >= opts.grace => {
                            executor.cancel(handle, StopMode::Kill)?;
                            killed = true;
                        }
                        _ => {}
                    }
                }
                JobStatus::Queued => {}
            }
            std::thread::sleep(opts.poll_interval);
        },
    };

    let finished_at = timefmt::now();
    let (started_at, measured) = match started {
        Some((ts, t0)) => (ts, t0.elapsed().as_secs_f64()),
        None => (finished_at.min(job.submitted), 0.0),
    };
    let elapsed = handle
        .and_then(|h| executor.reported_elapsed(h))
        .unwrap_or(measured);

    let run_dir = &plan.run_dir;
    for log in [STDOUT_LOG, STDERR_LOG] {
        let path = run_dir.join(log);
        if !path.exists() {
            fs::write(&path, "").map_err(|source| OrchestratorError::Io { path, source })?;
        }
    }

    let mut metrics = BTreeMap::new();
    let (state, exit_status) = match outcome {
        Outcome::Refused(msg) => {
            write_harness_error(run_dir, &msg)?;
            (RunState::SubmitError, None)
        }
        Outcome::TimedOut => (RunState::Timeout, None),
        Outcome::Exited(0) => match extract_metrics(spec, run_dir, elapsed) {
            Ok(m) => {
                metrics = m;
                (RunState::Succeeded, Some(0))
            }
            Err(msg) => {
                write_harness_error(run_dir, &msg)?;
                (RunState::Failed, Some(0))
            }
        },
        Outcome::Exited(code) => (RunState::Failed, Some(code)),
    };

    let record = RunRecord {
        run_id: plan.run_id.clone(),
        spec_name: plan.spec_name.clone(),
        params: plan.configuration.to_map(),
        started_at,
        finished_at,
        elapsed_seconds: round6(elapsed),
        state,
        exit_status,
        metrics,
        artifact_dir: run_dir.clone(),
        machine_label: plan.machine_label.clone(),
    };
    let path = run_dir.join(RECORD_FILE);
    let json = serde_json::to_string_pretty(&record).expect("record serializes");
    fs::write(&path, json + "\n").map_err(|source| OrchestratorError::Io { path, source })?;
    store.append(&record)?;
    Ok(record)
}

fn write_harness_error(run_dir: &Path, msg: &str) -> Result<(), OrchestratorError> {
    let path = run_dir.join(HARNESS_ERROR_FILE);
    fs::write(&path, format!("{msg}\n")).map_err(|source| OrchestratorError::Io { path, source })
}

/// Collects every declared metric of a successful run.
fn extract_metrics(
    spec: &BenchmarkSpec,
    run_dir: &Path,
    elapsed: f64,
) -> Result<BTreeMap<String, f64>, String> {
    let mut out = BTreeMap::new();
    for m in &spec.metrics {
        let value = match &m.kind {
            MetricKind::Elapsed => round6(elapsed),
            MetricKind::ExitStatus => 0.0,
            MetricKind::File { path, key_path } => {
                let file = run_dir.join(path);
                let text = fs::read_to_string(&file)
                    .map_err(|e| format!("metric {}: cannot read {}: {e}", m.name, file.display()))?;
                let doc: serde_json::Value = serde_json::from_str(&text)
                    .map_err(|e| format!("metric {}: {} is not JSON: {e}", m.name, file.display()))?;
                lookup(&doc, key_path).ok_or_else(|| {
                    format!(
                        "metric {}: no finite number at `{}` in {}",
                        m.name,
                        key_path.join("."),
                        file.display()
                    )
                })?
            }
        };
        out.insert(m.name.clone(), value);
    }
    Ok(out)
}

fn lookup(doc: &serde_json::Value, key_path: &[String]) -> Option<f64> {
    let mut cur = doc;
    for key in key_path {
        cur = match cur {
            serde_json::Value::Object(map) => map.get(key)?,
            serde_json::Value::Array(items) => items.get(key.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    cur.as_f64().filter(|v| v.is_finite())
}
