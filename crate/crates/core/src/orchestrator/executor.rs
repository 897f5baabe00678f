//! Job execution backends.
//!
//! The orchestrator only talks to an [`Executor`]: submit a plan, poll the
//! returned handle until it reports [`JobStatus::Finished`], and cancel it
//! when the timeout policy says so. [`LocalExecutor`] spawns a shell process
//! per run; [`SimulatedExecutor`] replays an [`ExecutorScenario`] and stands
//! in for a batch scheduler in tests.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::RunPlan;

pub const STDOUT_LOG: &str = "stdout.log";
pub const STDERR_LOG: &str = "stderr.log";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct JobHandle(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobStatus {
    Queued,
    Running,
    Finished(i32),
}

/// How hard [`Executor::cancel`] should stop a job.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopMode {
    /// Ask politely (SIGTERM for local processes).
    Terminate,
    /// Force it (SIGKILL).
    Kill,
}

#[derive(Debug, Error)]
pub enum SubmitError {
    #[error("submission refused: {0}")]
    Refused(String),
    #[error("submission failed: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum ExecutorError {
    #[error("unknown job handle {0:?}")]
    UnknownHandle(JobHandle),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub trait Executor: Send + Sync {
    fn submit(&self, plan: &RunPlan) -> Result<JobHandle, SubmitError>;
    fn poll(&self, handle: JobHandle) -> Result<JobStatus, ExecutorError>;
    fn cancel(&self, handle: JobHandle, mode: StopMode) -> Result<(), ExecutorError>;

    /// Elapsed time reported by the backend itself, overriding the
    /// orchestrator's wall-clock measurement.
    fn reported_elapsed(&self, _handle: JobHandle) -> Option<f64> {
        None
    }
}

/// Exit status as a shell would report it: the code, or 128 + signal.
pub fn exit_code(status: ExitStatus) -> i32 {
    status
        .code()
        .or_else(|| status.signal().map(|s| 128 + s))
        .unwrap_or(-1)
}

enum LocalJob {
    Running(Child),
    Done(i32),
}

/// Runs each plan as `sh -c <command>` inside its run directory, in its own
/// process group so that cancellation reaches grandchildren too.
#[derive(Default)]
pub struct LocalExecutor {
    next: AtomicU64,
    jobs: Mutex<HashMap<u64, LocalJob>>,
}

impl LocalExecutor {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of spawned processes not yet reaped.
    pub fn alive(&self) -> usize {
        self.jobs
            .lock()
            .unwrap()
            .values()
            .filter(|j| matches!(j, LocalJob::Running(_)))
            .count()
    }
}

fn log_file(dir: &Path, name: &str) -> io::Result<File> {
    File::create(dir.join(name))
}

impl Executor for LocalExecutor {
    fn submit(&self, plan: &RunPlan) -> Result<JobHandle, SubmitError> {
        let child = Command::new("sh")
            .arg("-c")
            .arg(&plan.command)
            .current_dir(&plan.run_dir)
            .stdin(Stdio::null())
            .stdout(log_file(&plan.run_dir, STDOUT_LOG)?)
            .stderr(log_file(&plan.run_dir, STDERR_LOG)?)
            .process_group(0)
            .spawn()?;
        let id = self.next.fetch_add(1, Ordering::Relaxed);
        self.jobs.lock().unwrap().insert(id, LocalJob::Running(child));
        Ok(JobHandle(id))
    }

    fn poll(&self, handle: JobHandle) -> Result<JobStatus, ExecutorError> {
        let mut jobs = self.jobs.lock().unwrap();
        let job = jobs
            .get_mut(&handle.0)
            .ok_or(ExecutorError::UnknownHandle(handle))?;
        match job {
            LocalJob::Done(code) => Ok(JobStatus::Finished(*code)),
            LocalJob::Running(child) => match child.try_wait()? {
                Some(status) => {
                    let code = exit_code(status);
                    *job = LocalJob::Done(code);
                    Ok(JobStatus::Finished(code))
                }
                None => Ok(JobStatus::Running),
            },
        }
    }

    fn cancel(&self, handle: JobHandle, mode: StopMode) -> Result<(), ExecutorError> {
        let jobs = self.jobs.lock().unwrap();
        let job = jobs.get(&handle.0).ok_or(ExecutorError::UnknownHandle(handle))?;
        if let LocalJob::Running(child) = job {
            let signal = match mode {
                StopMode::Terminate => libc::SIGTERM,
                StopMode::Kill => libc::SIGKILL,
            };
            // The child leads its own process group.
            let pgid = child.id() as libc::pid_t;
            // SAFETY: plain syscall on a pid we spawned.
            let rc = unsafe { libc::kill(-pgid, signal) };
            if rc != 0 {
                let err = io::Error::last_os_error();
                if err.raw_os_error() != Some(libc::ESRCH) {
                    return Err(err.into());
                }
            }
        }
        Ok(())
    }
}

/// What a simulated submission does once it leaves the queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioOutcome {
    /// Run the command locally.
    RunNormally,
    /// Stay running until cancelled.
    HangForever,
    /// Reject the submission outright.
    RefuseSubmission,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioStep {
    #[serde(default)]
    pub queue_delay_seconds: u64,
    pub outcome: ScenarioOutcome,
    #[serde(default)]
    pub elapsed_override_seconds: Option<f64>,
}

impl ScenarioStep {
    pub fn run_normally() -> Self {
        Self {
            queue_delay_seconds: 0,
            outcome: ScenarioOutcome::RunNormally,
            elapsed_override_seconds: None,
        }
    }

    pub fn with_outcome(outcome: ScenarioOutcome) -> Self {
        Self {
            outcome,
            ..Self::run_normally()
        }
    }
}

/// Scripted behaviours, one per submission in submission order. The last
/// step repeats once the list is exhausted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutorScenario {
    pub steps: Vec<ScenarioStep>,
}

impl ExecutorScenario {
    pub fn new(steps: Vec<ScenarioStep>) -> Result<Self, String> {
        let s = Self { steps };
        s.validate()?;
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let s: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), String> {
        if self.steps.is_empty() {
            return Err("scenario needs at least one step".into());
        }
        for (i, st) in self.steps.iter().enumerate() {
            if let Some(e) = st.elapsed_override_seconds {
                if !(e.is_finite() && e >= 0.0) {
                    return Err(format!("step {i}: elapsed override must be >= 0"));
                }
            }
        }
        Ok(())
    }

    pub fn step(&self, submission: usize) -> &ScenarioStep {
        &self.steps[submission.min(self.steps.len() - 1)]
    }
}

enum SimPhase {
    /// Still queued; holds the plan needed to start it.
    Queued(Box<RunPlan>),
    Local(JobHandle),
    Hanging,
    Done(i32),
}

struct SimJob {
    step: ScenarioStep,
    polls: u64,
    phase: SimPhase,
}

/// Deterministic stand-in for a batch scheduler.
///
/// Queue delays run on a virtual clock: the n-th poll of a job observes n
/// simulated seconds since submission, and the job stays queued while that
/// is below its `queue_delay_seconds`.
pub struct SimulatedExecutor {
    scenario: ExecutorScenario,
    submissions: Mutex<usize>,
    jobs: Mutex<HashMap<u64, SimJob>>,
    local: LocalExecutor,
}

impl SimulatedExecutor {
    pub fn new(scenario: ExecutorScenario) -> Self {
        Self {
            scenario,
            submissions: Mutex::new(0),
            jobs: Mutex::new(HashMap::new()),
            local: LocalExecutor::new(),
        }
    }

    pub fn submissions(&self) -> usize {
        *self.submissions.lock().unwrap()
    }
}

impl Executor for SimulatedExecutor {
    fn submit(&self, plan: &RunPlan) -> Result<JobHandle, SubmitError> {
        let id = {
            let mut n = self.submissions.lock().unwrap();
            let id = *n as u64;
            *n += 1;
            id
        };
        let step = self.scenario.step(id as usize).clone();
        if step.outcome == ScenarioOutcome::RefuseSubmission {
            return Err(SubmitError::Refused(format!(
                "simulated scheduler refused submission {id}"
            )));
        }
        self.jobs.lock().unwrap().insert(
            id,
            SimJob {
                step,
                polls: 0,
                phase: SimPhase::Queued(Box::new(plan.clone())),
            },
        );
        Ok(JobHandle(id))
    }

    fn poll(&self, handle: JobHandle) -> Result<JobStatus, ExecutorError> {
        let mut jobs = self.jobs.lock().unwrap();
        let job = jobs
            .get_mut(&handle.0)
            .ok_or(ExecutorError::UnknownHandle(handle))?;
        job.polls += 1;
        if let SimPhase::Queued(plan) = &job.phase {
            if job.polls < job.step.queue_delay_seconds {
                return Ok(JobStatus::Queued);
            }
            job.phase = match job.step.outcome {
                ScenarioOutcome::RunNormally => SimPhase::Local(
                    self.local
                        .submit(plan)
                        .map_err(|e| io::Error::other(e.to_string()))?,
                ),
                _ => {
                    log_file(&plan.run_dir, STDOUT_LOG)?;
                    log_file(&plan.run_dir, STDERR_LOG)?;
                    SimPhase::Hanging
                }
            };
        }
        match &job.phase {
            SimPhase::Local(h) => {
                let st = self.local.poll(*h)?;
                if let JobStatus::Finished(code) = st {
                    job.phase = SimPhase::Done(code);
                }
                Ok(st)
            }
            SimPhase::Hanging => Ok(JobStatus::Running),
            SimPhase::Done(code) => Ok(JobStatus::Finished(*code)),
            SimPhase::Queued(_) => unreachable!("queued phase handled above"),
        }
    }

    fn cancel(&self, handle: JobHandle, mode: StopMode) -> Result<(), ExecutorError> {
        let mut jobs = self.jobs.lock().unwrap();
        let job = jobs
            .get_mut(&handle.0)
            .ok_or(ExecutorError::UnknownHandle(handle))?;
        let signal = match mode {
            StopMode::Terminate => libc::SIGTERM,
            StopMode::Kill => libc::SIGKILL,
        };
        match &job.phase {
            SimPhase::Local(h) => self.local.cancel(*h, mode)?,
            SimPhase::Queued(_) | SimPhase::Hanging => job.phase = SimPhase::Done(128 + signal),
            SimPhase::Done(_) => {}
        }
        Ok(())
    }

    fn reported_elapsed(&self, handle: JobHandle) -> Option<f64> {
        self.jobs
            .lock()
            .unwrap()
            .get(&handle.0)
            .and_then(|j| j.step.elapsed_override_seconds)
    }
}

/// Loads a scenario file.
pub fn load_scenario(path: &Path) -> Result<ExecutorScenario, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    ExecutorScenario::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
}
