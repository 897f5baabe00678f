//! Continuous-benchmarking harness.
//!
//! - [`specmatrix`]: benchmark spec files and their parameter matrix.
//! - [`orchestrator`]: archived, timeout-bounded runs on an [`orchestrator::Executor`].
//! - [`store`]: append-only run and event history.
//! - [`analysis`]: scaling tables, step detection, telemetry anomaly detectors, reports.
//! - [`workload`]: a numerical benchmark with a checked convergence precondition.
//! - [`cli`]: the `bk` command line.

pub mod analysis;
pub mod cli;
pub mod orchestrator;
pub mod specmatrix;
pub mod store;
pub mod timefmt;
pub mod workload;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/run-matrix.md")]
    mod run_matrix {}
    #[doc = include_str!("../../../book/src/runs.md")]
    mod runs {}
    #[doc = include_str!("../../../book/src/store.md")]
    mod store {}
    #[doc = include_str!("../../../book/src/regression.md")]
    mod regression {}
    #[doc = include_str!("../../../book/src/anomalies.md")]
    mod anomalies {}
    #[doc = include_str!("../../../book/src/workload.md")]
    mod workload {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
