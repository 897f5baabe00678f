//! The `bk` command line.
//!
//! Exit statuses are uniform across subcommands: 0 for success (or no
//! regression), 1 for an operational failure or a detected regression, 2 for
//! usage and validation errors. Validation happens before any side effect.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{
    detect_auto, detect_step, render_report, scaling_table, AnalysisError, Finding, FindingKind,
    MetricSeries, ReportOptions, DEFAULT_DELTA, DEFAULT_MIN_SAMPLES,
};
use crate::orchestrator::{
    execute_all, load_scenario, plan, ExecuteOptions, Executor, LocalExecutor, RunRecord,
    RunState, SimulatedExecutor,
};
use crate::specmatrix::{expand, parse_spec, BenchmarkSpec};
use crate::store::{EventQuery, EventRecord, Query, Store};
use crate::timefmt::{self, Timestamp};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_SVG: &str = "report.svg";

#[derive(Debug, Parser)]
#[command(name = "bk", version, about = "Continuous-benchmarking harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the configurations a spec expands to.
    Expand {
        spec: PathBuf,
    },
    /// Plan, execute and record every configuration of a spec.
    Run(RunArgs),
    /// Write report.csv and report.svg and print the scaling table.
    Report(ReportArgs),
    /// Look for step changes in a metric, one finding per configuration.
    Detect(DetectArgs),
    /// Record or list machine events.
    Events {
        #[command(subcommand)]
        action: EventsAction,
    },
}

#[derive(Debug, Args)]
struct StoreArg {
    /// Store root directory
    #[arg(long, env = "BK_STORE")]
    store: PathBuf,
}

#[derive(Debug, Clone)]
enum ExecutorChoice {
    Local,
    Simulated(PathBuf),
}

impl FromStr for ExecutorChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "local" => Ok(ExecutorChoice::Local),
            _ => match s.strip_prefix("simulated:") {
                Some(p) if !p.is_empty() => Ok(ExecutorChoice::Simulated(p.into())),
                _ => Err(format!("expected `local` or `simulated:<scenario>`, got `{s}`")),
            },
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    spec: PathBuf,
    #[command(flatten)]
    store: StoreArg,
    /// Machine label stored with every record
    #[arg(long, env = "BK_MACHINE", default_value = "local")]
    machine: String,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    max_parallel: u32,
    /// `local` or `simulated:<scenario.json>`
    #[arg(long, default_value = "local")]
    executor: ExecutorChoice,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    store: StoreArg,
    #[arg(long)]
    spec_name: String,
    /// Elapsed-time metric
    #[arg(long, default_value = "elapsed_seconds")]
    metric: String,
    /// Energy metric drawn as circles
    #[arg(long)]
    energy_metric: Option<String>,
    /// Parameter holding the node count
    #[arg(long, default_value = "nodes")]
    node_param: String,
    /// Reference node count for speedup (default: smallest)
    #[arg(long)]
    p_ref: Option<u64>,
    /// Restrict to one machine
    #[arg(long)]
    machine: Option<String>,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[group(id = "split", required = true, multiple = false, args = ["event", "auto"])]
struct DetectArgs {
    #[command(flatten)]
    store: StoreArg,
    #[arg(long)]
    spec_name: String,
    #[arg(long, default_value = "elapsed_seconds")]
    metric: String,
    /// Split the history at this timestamp
    #[arg(long, value_parser = parse_timestamp)]
    event: Option<Timestamp>,
    /// Locate the split by change-point search
    #[arg(long)]
    auto: bool,
    /// Relative threshold on the median ratio
    #[arg(long, default_value_t = DEFAULT_DELTA, value_parser = parse_delta)]
    delta: f64,
    /// Minimum samples on each side of an event
    #[arg(long, default_value_t = DEFAULT_MIN_SAMPLES, value_parser = parse_min_samples)]
    min_samples: usize,
    #[arg(long)]
    machine: Option<String>,
}

#[derive(Debug, Subcommand)]
enum EventsAction {
    Add {
        #[command(flatten)]
        store: StoreArg,
        /// Default: now
        #[arg(long, value_parser = parse_timestamp)]
        timestamp: Option<Timestamp>,
        #[arg(long)]
        label: String,
        #[arg(long, env = "BK_MACHINE", default_value = "local")]
        machine: String,
    },
    List {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long, value_parser = parse_timestamp)]
        from: Option<Timestamp>,
        #[arg(long, value_parser = parse_timestamp)]
        to: Option<Timestamp>,
        #[arg(long)]
        machine: Option<String>,
    },
}

fn parse_timestamp(s: &str) -> Result<Timestamp, String> {
    timefmt::parse(s).map_err(|e| format!("`{s}` is not an RFC 3339 timestamp: {e}"))
}

fn parse_min_samples(s: &str) -> Result<usize, String> {
    s.parse::<usize>()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| format!("min-samples `{s}` must be an integer >= 1"))
}

fn parse_delta(s: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .ok()
        .filter(|d| d.is_finite() && *d >= 0.0)
        .ok_or_else(|| format!("delta `{s}` must be a finite number >= 0"))
}

/// Streams for one invocation.
struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Io<'_> {
    fn fail(&mut self, code: i32, msg: impl std::fmt::Display) -> i32 {
        let _ = writeln!(self.err, "bk: {msg}");
        code
    }
}

/// Runs `bk` on the process's standard streams.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

/// Runs `bk` with explicit output streams.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut io = Io { out, err };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(io.err, "{rendered}");
                EXIT_USAGE
            } else {
                let _ = write!(io.out, "{rendered}");
                EXIT_OK
            };
        }
    };
    let code = match cli.command {
        Command::Expand { spec } => cmd_expand(&spec, &mut io),
        Command::Run(a) => cmd_run(a, &mut io),
        Command::Report(a) => cmd_report(a, &mut io),
        Command::Detect(a) => cmd_detect(a, &mut io),
        Command::Events { action } => cmd_events(action, &mut io),
    };
    let _ = io.out.flush();
    code
}

fn load_spec(path: &Path) -> Result<BenchmarkSpec, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_spec(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_expand(path: &Path, io: &mut Io) -> i32 {
    let spec = match load_spec(path) {
        Ok(s) => s,
        Err(m) => return io.fail(EXIT_USAGE, m),
    };
    let mut table = String::new();
    for c in expand(&spec) {
        let _ = writeln!(table, "{}\t{}", c.index, c);
    }
    let _ = io.out.write_all(table.as_bytes());
    EXIT_OK
}

fn cmd_run(a: RunArgs, io: &mut Io) -> i32 {
    let spec = match load_spec(&a.spec) {
        Ok(s) => s,
        Err(m) => return io.fail(EXIT_USAGE, m),
    };
    let executor: Box<dyn Executor> = match &a.executor {
        ExecutorChoice::Local => Box::new(LocalExecutor::new()),
        ExecutorChoice::Simulated(path) => match load_scenario(path) {
            Ok(s) => Box::new(SimulatedExecutor::new(s)),
            Err(m) => return io.fail(EXIT_USAGE, format!("{}: {m}", path.display())),
        },
    };
    let store = match Store::open(&a.store.store) {
        Ok(s) => s,
        Err(e) => return io.fail(EXIT_USAGE, e),
    };
    let plans = match plan(&spec, &expand(&spec), &a.machine) {
        Ok(p) => p,
        Err(e) => return io.fail(EXIT_USAGE, e),
    };
    let opts = ExecuteOptions {
        max_parallel: a.max_parallel as usize,
        ..ExecuteOptions::default()
    };
    let records = match execute_all(&plans, &spec, executor.as_ref(), &store, &opts) {
        Ok(r) => r,
        Err(e) => return io.fail(EXIT_FAILURE, e),
    };
    let mut failed = 0;
    for (p, r) in plans.iter().zip(&records) {
        let status = r.exit_status.map_or("-".to_string(), |s| s.to_string());
        let _ = writeln!(
            io.err,
            "{}\t{}\texit={}\t{:.3}s\t{}",
            r.run_id,
            r.state,
            status,
            r.elapsed_seconds,
            p.configuration
        );
        if !r.succeeded() {
            failed += 1;
        }
    }
    if failed > 0 {
        io.fail(EXIT_FAILURE, format!("{failed} of {} runs did not succeed", records.len()))
    } else {
        EXIT_OK
    }
}

fn matching(spec_name: &str, machine: &Option<String>, states: Option<&[RunState]>) -> Query {
    Query {
        spec_name: Some(spec_name.to_string()),
        machine_label: machine.clone(),
        states: states.map(|s| s.iter().copied().collect::<BTreeSet<_>>()),
        ..Query::default()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.6}"))
}

fn cmd_report(a: ReportArgs, io: &mut Io) -> i32 {
    let store = match Store::open_read_only(&a.store.store) {
        Ok(s) => s,
        Err(e) => return io.fail(EXIT_FAILURE, e),
    };
    let records = match store.query(&matching(&a.spec_name, &a.machine, None)) {
        Ok(r) => r,
        Err(e) => return io.fail(EXIT_FAILURE, e),
    };
    let succeeded: Vec<RunRecord> = records.iter().filter(|r| r.succeeded()).cloned().collect();
    if succeeded.is_empty() {
        return io.fail(
            EXIT_FAILURE,
            format!("no succeeded runs of `{}` in {}", a.spec_name, store.root().display()),
        );
    }
    let events = match store.list_events(&EventQuery {
        machine_label: a.machine.clone(),
        ..EventQuery::default()
    }) {
        Ok(e) => e,
        Err(e) => return io.fail(EXIT_FAILURE, e),
    };

    let nodes: Result<Vec<u64>, AnalysisError> = succeeded
        .iter()
        .map(|r| crate::analysis::node_count(r, &a.node_param))
        .collect();
    let p_ref = match (a.p_ref, nodes) {
        (Some(p), _) => p,
        (None, Ok(ps)) => ps.into_iter().min().expect("non-empty"),
        (None, Err(e)) => return io.fail(EXIT_USAGE, e),
    };
    let table = match scaling_table(&succeeded, &a.metric, &a.node_param, p_ref, a.energy_metric.as_deref()) {
        Ok(t) => t,
        Err(e @ (AnalysisError::MissingReference(_) | AnalysisError::MissingParam { .. } | AnalysisError::BadNodeCount { .. } | AnalysisError::MissingMetric { .. })) => {
            return io.fail(EXIT_USAGE, e)
        }
        Err(e) => return io.fail(EXIT_FAILURE, e),
    };
    let opts = ReportOptions {
        elapsed_metric: a.metric.clone(),
        energy_metric: a.energy_metric.clone(),
        node_param: a.node_param.clone(),
    };
    let (csv, svg) = match render_report(&records, &events, &opts) {
        Ok(x) => x,
        Err(e) => return io.fail(EXIT_USAGE, e),
    };
    let written = fs::create_dir_all(&a.out)
        .and_then(|()| fs::write(a.out.join(REPORT_CSV), csv))
        .and_then(|()| fs::write(a.out.join(REPORT_SVG), svg));
    if let Err(e) = written {
        return io.fail(EXIT_FAILURE, format!("cannot write report to {}: {e}", a.out.display()));
    }

    let mut text = String::from("p\tn_runs\tmedian_elapsed_seconds\tmedian_energy_joules\tspeedup\tefficiency\n");
    for row in &table {
        let _ = writeln!(
            text,
            "{}\t{}\t{:.6}\t{}\t{:.6}\t{:.6}",
            row.p,
            row.n_runs,
            row.median_elapsed_seconds,
            fmt_opt(row.median_energy_joules),
            row.speedup,
            row.efficiency
        );
    }
    let _ = io.out.write_all(text.as_bytes());
    EXIT_OK
}

#[derive(Serialize)]
struct DetectLine<'a> {
    configuration: String,
    params: &'a BTreeMap<String, String>,
    finding: Finding,
}

fn config_label(params: &BTreeMap<String, String>) -> String {
    params
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn usage_like(e: &AnalysisError) -> bool {
    matches!(
        e,
        AnalysisError::InsufficientSamples { .. }
            | AnalysisError::TooFewPoints { .. }
            | AnalysisError::InvalidSeries(_)
            | AnalysisError::InvalidParameter(_)
            | AnalysisError::MissingMetric { .. }
            | AnalysisError::EmptyInput
    )
}

fn cmd_detect(a: DetectArgs, io: &mut Io) -> i32 {
    let store = match Store::open_read_only(&a.store.store) {
        Ok(s) => s,
        Err(e) => return io.fail(EXIT_FAILURE, e),
    };
    let records = match store.query(&matching(&a.spec_name, &a.machine, Some(&[RunState::Succeeded]))) {
        Ok(r) => r,
        Err(e) => return io.fail(EXIT_FAILURE, e),
    };
    if records.is_empty() {
        return io.fail(
            EXIT_USAGE,
            format!("insufficient data: no succeeded runs of `{}`", a.spec_name),
        );
    }
    let mut groups: BTreeMap<&BTreeMap<String, String>, Vec<&RunRecord>> = BTreeMap::new();
    for r in &records {
        groups.entry(&r.params).or_default().push(r);
    }

    let mut lines = Vec::with_capacity(groups.len());
    for (params, runs) in groups {
        let label = config_label(params);
        let finding = runs
            .iter()
            .map(|r| {
                r.metric(&a.metric)
                    .map(|v| (r.started_at, v))
                    .ok_or_else(|| AnalysisError::MissingMetric {
                        run_id: r.run_id.clone(),
                        metric: a.metric.clone(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()
            .and_then(MetricSeries::new)
            .and_then(|series| match a.event {
                Some(t) => detect_step(&series, t, a.delta, a.min_samples),
                None => detect_auto(&series, a.delta),
            });
        match finding {
            Ok(finding) => lines.push(DetectLine {
                configuration: label,
                params,
                finding,
            }),
            Err(e) if usage_like(&e) => {
                return io.fail(EXIT_USAGE, format!("insufficient data for configuration `{label}`: {e}"))
            }
            Err(e) => return io.fail(EXIT_FAILURE, format!("configuration `{label}`: {e}")),
        }
    }

    let mut text = String::new();
    for l in &lines {
        text.push_str(&serde_json::to_string(l).expect("finding serializes"));
        text.push('\n');
    }
    let _ = io.out.write_all(text.as_bytes());
    if lines.iter().any(|l| l.finding.kind == FindingKind::Regression) {
        EXIT_FAILURE
    } else {
        EXIT_OK
    }
}

fn cmd_events(action: EventsAction, io: &mut Io) -> i32 {
    match action {
        EventsAction::Add {
            store,
            timestamp,
            label,
            machine,
        } => {
            if label.trim().is_empty() {
                return io.fail(EXIT_USAGE, "event label must not be empty");
            }
            let store = match Store::open(&store.store) {
                Ok(s) => s,
                Err(e) => return io.fail(EXIT_USAGE, e),
            };
            let event = EventRecord {
                timestamp: timestamp.unwrap_or_else(timefmt::now),
                label,
                machine_label: machine,
            };
            match store.append_event(&event) {
                Ok(()) => EXIT_OK,
                Err(e) => io.fail(EXIT_FAILURE, e),
            }
        }
        EventsAction::List {
            store,
            from,
            to,
            machine,
        } => {
            if let (Some(f), Some(t)) = (from, to) {
                if f > t {
                    return io.fail(EXIT_USAGE, "--from is after --to");
                }
            }
            let store = match Store::open_read_only(&store.store) {
                Ok(s) => s,
                Err(e) => return io.fail(EXIT_FAILURE, e),
            };
            let events = match store.list_events(&EventQuery {
                from,
                to,
                machine_label: machine,
            }) {
                Ok(e) => e,
                Err(e) => return io.fail(EXIT_FAILURE, e),
            };
            let mut text = String::new();
            for e in &events {
                text.push_str(&serde_json::to_string(e).expect("event serializes"));
                text.push('\n');
            }
            let _ = io.out.write_all(text.as_bytes());
            EXIT_OK
        }
    }
}
