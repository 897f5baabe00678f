//! Append-only JSON Lines store for run records and machine events.
//!
//! Layout of a store root:
//!
//! ```text
//! <root>/records.jsonl   one RunRecord per line
//! <root>/events.jsonl    one EventRecord per line
//! <root>/lock            advisory lock taken by writers
//! ```
//!
//! Lines are never rewritten. A line that fails to parse is reported as an
//! error with its line number rather than skipped.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::os::unix::io::AsRawFd;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::{RunRecord, RunState};
use crate::timefmt::{self, Timestamp};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const LOCK_FILE: &str = "lock";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store root {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{file}:{line}: corrupt line: {message}")]
    Corrupt {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error("run_id {0} is already present in the store")]
    DuplicateRunId(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A machine-side event such as a maintenance window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    #[serde(with = "timefmt")]
    pub timestamp: Timestamp,
    pub label: String,
    pub machine_label: String,
}

/// Record filters. Absent fields match everything.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Query {
    pub spec_name: Option<String>,
    pub machine_label: Option<String>,
    pub params: BTreeMap<String, String>,
    /// Inclusive lower bound on `started_at`.
    pub from: Option<Timestamp>,
    /// Exclusive upper bound on `started_at`.
    pub to: Option<Timestamp>,
    pub states: Option<BTreeSet<RunState>>,
}

impl Query {
    pub fn all() -> Self {
        Self::default()
    }

    fn check(&self) -> Result<(), StoreError> {
        check_range(self.from, self.to)
    }

    pub fn matches(&self, r: &RunRecord) -> bool {
        self.spec_name.as_ref().is_none_or(|n| *n == r.spec_name)
            && self.machine_label.as_ref().is_none_or(|m| *m == r.machine_label)
            && self
                .params
                .iter()
                .all(|(k, v)| r.params.get(k) == Some(v))
            && in_range(&r.started_at, self.from, self.to)
            && self.states.as_ref().is_none_or(|s| s.contains(&r.state))
    }
}

/// Filters for [`Store::list_events`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventQuery {
    pub from: Option<Timestamp>,
    pub to: Option<Timestamp>,
    pub machine_label: Option<String>,
}

fn check_range(from: Option<Timestamp>, to: Option<Timestamp>) -> Result<(), StoreError> {
    match (from, to) {
        (Some(f), Some(t)) if f > t => Err(StoreError::InvalidQuery(format!(
            "time range [{}, {}) is reversed",
            timefmt::format(&f),
            timefmt::format(&t)
        ))),
        _ => Ok(()),
    }
}

fn in_range(t: &Timestamp, from: Option<Timestamp>, to: Option<Timestamp>) -> bool {
    from.is_none_or(|f| *t >= f) && to.is_none_or(|e| *t < e)
}

/// Handle on a store root directory.
#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

/// Exclusive `flock` held for the lifetime of the guard.
struct LockGuard {
    file: File,
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        // SAFETY: the descriptor is owned by `self.file` and still open.
        unsafe {
            libc::flock(self.file.as_raw_fd(), libc::LOCK_UN);
        }
    }
}

impl Store {
    /// Opens (creating if needed) a store root and verifies it is writable.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        let store = Store { root };
        // Creating the lock file doubles as the writability probe.
        drop(store.lock()?);
        Ok(store)
    }

    /// Opens an existing store root for reading only.
    pub fn open_read_only(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        if !root.is_dir() {
            return Err(StoreError::Io {
                path: root,
                source: io::Error::new(io::ErrorKind::NotFound, "store root does not exist"),
            });
        }
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn records_path(&self) -> PathBuf {
        self.root.join(RECORDS_FILE)
    }

    pub fn events_path(&self) -> PathBuf {
        self.root.join(EVENTS_FILE)
    }

    fn lock(&self) -> Result<LockGuard, StoreError> {
        let path = self.root.join(LOCK_FILE);
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(io_err(&path))?;
        // SAFETY: valid open descriptor.
        let rc = unsafe { libc::flock(file.as_raw_fd(), libc::LOCK_EX) };
        if rc != 0 {
            return Err(StoreError::Io {
                path,
                source: io::Error::last_os_error(),
            });
        }
        Ok(LockGuard { file })
    }

    /// Appends one record as a single fsync'd line. Fails without touching
    /// the file if the run id is already stored.
    pub fn append(&self, record: &RunRecord) -> Result<(), StoreError> {
        record.validate().map_err(StoreError::InvalidRecord)?;
        let _guard = self.lock()?;
        let path = self.records_path();
        #[derive(Deserialize)]
        struct IdOnly {
            run_id: String,
        }
        let existing: Vec<IdOnly> = read_lines(&path)?;
        if existing.iter().any(|r| r.run_id == record.run_id) {
            return Err(StoreError::DuplicateRunId(record.run_id.clone()));
        }
        append_line(&path, record)
    }

    /// Records matching every present filter, ordered by `started_at` then
    /// `run_id`.
    pub fn query(&self, q: &Query) -> Result<Vec<RunRecord>, StoreError> {
        q.check()?;
        let mut out: Vec<RunRecord> = read_lines::<RunRecord>(&self.records_path())?
            .into_iter()
            .filter(|r| q.matches(r))
            .collect();
        out.sort_by(|a, b| {
            a.started_at
                .cmp(&b.started_at)
                .then_with(|| a.run_id.cmp(&b.run_id))
        });
        Ok(out)
    }

    pub fn append_event(&self, event: &EventRecord) -> Result<(), StoreError> {
        if event.label.trim().is_empty() {
            return Err(StoreError::InvalidRecord("event label is empty".into()));
        }
        let _guard = self.lock()?;
        append_line(&self.events_path(), event)
    }

    /// Events in `[from, to)`, ascending by timestamp (stable for ties).
    pub fn list_events(&self, q: &EventQuery) -> Result<Vec<EventRecord>, StoreError> {
        check_range(q.from, q.to)?;
        let mut out: Vec<EventRecord> = read_lines::<EventRecord>(&self.events_path())?
            .into_iter()
            .filter(|e| {
                in_range(&e.timestamp, q.from, q.to)
                    && q.machine_label.as_ref().is_none_or(|m| *m == e.machine_label)
            })
            .collect();
        out.sort_by_key(|e| e.timestamp);
        Ok(out)
    }
}

fn append_line<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let mut line = serde_json::to_string(value)
        .map_err(|e| StoreError::InvalidRecord(e.to_string()))?;
    line.push('\n');
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    file.write_all(line.as_bytes()).map_err(io_err(path))?;
    file.sync_all().map_err(io_err(path))
}

fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut out = Vec::new();
    let mut seen_ids = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let corrupt = |message: String| StoreError::Corrupt {
            file: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        if let Some(id) = value.get("run_id").and_then(|v| v.as_str()) {
            if !seen_ids.insert(id.to_string()) {
                return Err(corrupt(format!("duplicate run_id {id}")));
            }
        }
        out.push(serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?);
    }
    Ok(out)
}
