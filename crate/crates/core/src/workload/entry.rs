use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Parser};
use serde::Serialize;

use super::{
    build_a, check_convergence_precondition, fixed_point_defect, fixed_point_solve,
    generate_inputs, GenerateMode, PreconditionVerdict, WorkloadInput,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;
pub const EXIT_NONCONVERGENCE: i32 = 4;

pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Parser)]
#[command(
    name = "bk-workload",
    about = "Boundary-condition fixed-point workload with an HPD convergence precondition",
    group(ArgGroup::new("source").required(true).args(["generate", "input"]))
)]
struct Args {
    /// Generate inputs: <seed> <n> <random|guaranteed-convergent>
    #[arg(long, num_args = 3, value_names = ["SEED", "N", "MODE"])]
    generate: Option<Vec<String>>,
    /// Read inputs from a JSON document
    #[arg(long)]
    input: Option<PathBuf>,
    /// Relative update tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// Maximum number of fixed-point iterations
    #[arg(long)]
    max_iter: Option<usize>,
    /// Number of unit-circle samples for the precondition check
    #[arg(long)]
    hpd_samples: Option<usize>,
}

#[derive(Serialize)]
struct Metrics {
    iterations: usize,
    residual: f64,
    elapsed_seconds: f64,
    n: usize,
}

fn load(args: &Args) -> Result<WorkloadInput, String> {
    let mut input = match (&args.generate, &args.input) {
        (Some(g), None) => {
            let seed: u64 = g[0]
                .parse()
                .map_err(|_| format!("invalid seed `{}`", g[0]))?;
            let n: usize = g[1]
                .parse()
                .ok()
                .filter(|&n| n >= 1)
                .ok_or_else(|| format!("invalid dimension `{}`", g[1]))?;
            let mode: GenerateMode = g[2].parse()?;
            generate_inputs(seed, n, mode)
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        _ => return Err("exactly one of --generate or --input is required".into()),
    };
    if let Some(tol) = args.tol {
        input.tol = tol;
    }
    if let Some(m) = args.max_iter {
        input.max_iter = m;
    }
    if let Some(s) = args.hpd_samples {
        input.hpd_samples = s;
    }
    input.validate().map_err(|e| e.to_string())?;
    Ok(input)
}

/// Runs the workload, writing `metrics.json` into `out_dir` on success and
/// one diagnostic line to `stderr` on failure. Returns the exit status.
pub fn workload_main<I, T>(args: I, out_dir: &Path, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let rendered = e.render().to_string();
            if !e.use_stderr() {
                // --help / --version
                let _ = write!(std::io::stdout(), "{rendered}");
                return EXIT_OK;
            }
            // Keep the single `error: ...` line; drop clap's usage block.
            let first = rendered.lines().find(|l| !l.trim().is_empty()).unwrap_or("usage error");
            let _ = writeln!(stderr, "bk-workload: {}", first.trim_start_matches("error: "));
            return EXIT_USAGE;
        }
    };
    let mut fail = |code: i32, msg: String| {
        let _ = writeln!(stderr, "bk-workload: {msg}");
        code
    };
    let input = match load(&args) {
        Ok(i) => i,
        Err(msg) => return fail(EXIT_USAGE, msg),
    };

    let (a1, a2) = match (
        build_a(input.alpha1, &input.s1, &input.h1),
        build_a(input.alpha2, &input.s2, &input.h2),
    ) {
        (Ok(a1), Ok(a2)) => (a1, a2),
        (Err(e), _) | (_, Err(e)) => return fail(EXIT_USAGE, e.to_string()),
    };

    match check_convergence_precondition(&input.s1, &input.s2, input.hpd_samples) {
        Ok(PreconditionVerdict::HoldsOnSamples { .. }) => {}
        Ok(PreconditionVerdict::Violated {
            sample,
            theta,
            evidence,
        }) => {
            return fail(
                EXIT_PRECONDITION,
                format!(
                    "convergence precondition violated at theta = {theta:.6} (sample {sample} of {}): {evidence}",
                    input.hpd_samples
                ),
            );
        }
        Err(e) => return fail(EXIT_USAGE, e.to_string()),
    }

    let result = match fixed_point_solve(&a1, &a2, input.tol, input.max_iter) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_RUNTIME, e.to_string()),
    };
    if !result.converged {
        return fail(
            EXIT_NONCONVERGENCE,
            format!(
                "no convergence after {} iterations (residual {:.3e} > tol {:.3e})",
                result.iterations, result.residual, input.tol
            ),
        );
    }
    match fixed_point_defect(&a1, &a2, &result.solution) {
        Ok(d) if d <= 2.0 * input.tol => {}
        Ok(d) => {
            return fail(
                EXIT_RUNTIME,
                format!("converged iterate fails the residual check: {d:.3e} > {:.3e}", 2.0 * input.tol),
            );
        }
        Err(e) => return fail(EXIT_RUNTIME, e.to_string()),
    }

    let metrics = Metrics {
        iterations: result.iterations,
        residual: result.residual,
        elapsed_seconds: result.elapsed_seconds,
        n: input.s1.n(),
    };
    let path = out_dir.join(METRICS_FILE);
    let json = serde_json::to_string_pretty(&metrics).expect("plain numbers serialize");
    if let Err(e) = fs::write(&path, json + "\n") {
        return fail(EXIT_RUNTIME, format!("cannot write {}: {e}", path.display()));
    }
    EXIT_OK
}
