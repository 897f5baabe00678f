//! CSV and SVG report artifacts.
//!
//! Output is a pure function of the inputs: rows and glyphs are ordered by
//! `(started_at, run_id)`, numbers use fixed six-digit formatting, and no
//! generation timestamp is embedded.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::scaling::node_count;
use super::AnalysisError;
use crate::orchestrator::RunRecord;
use crate::store::EventRecord;
use crate::timefmt::{self, Timestamp};

pub const CSV_HEADER: [&str; 5] = ["p", "started_at", "elapsed_seconds", "energy_joules", "state"];

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 720.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 430.0;
const BAND_PAD: f64 = 12.0;

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub elapsed_metric: String,
    pub energy_metric: Option<String>,
    pub node_param: String,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            elapsed_metric: "elapsed_seconds".into(),
            energy_metric: Some("energy_joules".into()),
            node_param: "nodes".into(),
        }
    }
}

struct Point<'a> {
    record: &'a RunRecord,
    p: u64,
    elapsed: f64,
    energy: Option<f64>,
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Renders `(csv, svg)` for a non-empty set of runs.
///
/// Every run becomes one CSV row and one cross (elapsed, left axis); runs
/// carrying the energy metric also get a circle (right axis). Runs are
/// grouped along the x axis by node count and placed by start time inside
/// each group; colour lightness encodes recency. Each event is drawn as one
/// dashed vertical line at its time in every group.
pub fn render_report(
    records: &[RunRecord],
    events: &[EventRecord],
    opts: &ReportOptions,
) -> Result<(String, String), AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.started_at.cmp(&b.started_at).then_with(|| a.run_id.cmp(&b.run_id)));
    let points = sorted
        .into_iter()
        .map(|r| {
            Ok(Point {
                record: r,
                p: node_count(r, &opts.node_param)?,
                elapsed: r.metric(&opts.elapsed_metric).unwrap_or(r.elapsed_seconds),
                energy: opts.energy_metric.as_deref().and_then(|m| r.metric(m)),
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    let mut events: Vec<&EventRecord> = events.iter().collect();
    events.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.label.cmp(&b.label))
            .then_with(|| a.machine_label.cmp(&b.machine_label))
    });
    Ok((render_csv(&points), render_svg(&points, &events)))
}

fn render_csv(points: &[Point]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for pt in points {
        w.write_record([
            pt.p.to_string(),
            timefmt::format(&pt.record.started_at),
            num(pt.elapsed),
            pt.energy.map(num).unwrap_or_default(),
            pt.record.state.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Upper end of an axis: max value plus 10% headroom, or 1 for all-zero data.
fn axis_max(values: impl Iterator<Item = f64>) -> f64 {
    let m = values.fold(0.0, f64::max);
    if m > 0.0 {
        m * 1.1
    } else {
        1.0
    }
}

fn render_svg(points: &[Point], events: &[&EventRecord]) -> String {
    let groups: Vec<u64> = points.iter().map(|p| p.p).collect::<BTreeSet<_>>().into_iter().collect();
    let band = (RIGHT - LEFT) / groups.len() as f64;
    let times: Vec<Timestamp> = points
        .iter()
        .map(|p| p.record.started_at)
        .chain(events.iter().map(|e| e.timestamp))
        .collect();
    let t_min = *times.iter().min().expect("non-empty");
    let t_max = *times.iter().max().expect("non-empty");
    let span = (t_max - t_min).num_microseconds().unwrap_or(i64::MAX) as f64;
    let x_at = |p: u64, t: Timestamp| {
        let g = groups.binary_search(&p).expect("group exists") as f64;
        let frac = if span > 0.0 {
            (t - t_min).num_microseconds().unwrap_or(0) as f64 / span
        } else {
            0.5
        };
        LEFT + g * band + BAND_PAD + frac * (band - 2.0 * BAND_PAD)
    };
    let y_max_left = axis_max(points.iter().map(|p| p.elapsed));
    let has_energy = points.iter().any(|p| p.energy.is_some());
    let y_max_right = axis_max(points.iter().filter_map(|p| p.energy));
    let y_at = |v: f64, max: f64| BOTTOM - v / max * (BOTTOM - TOP);
    let n = points.len();
    let lightness = |rank: usize| {
        if n > 1 {
            25.0 + 50.0 * rank as f64 / (n - 1) as f64
        } else {
            50.0
        }
    };

    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">",
        w = WIDTH,
        h = HEIGHT
    );
    s.push_str("<rect x=\"0\" y=\"0\" width=\"800\" height=\"500\" fill=\"white\"/>\n");

    // Frame and axes.
    let _ = writeln!(
        s,
        "<path class=\"axis\" d=\"M {l} {t} L {l} {b} L {r} {b}{right}\" fill=\"none\" stroke=\"black\"/>",
        l = num(LEFT),
        t = num(TOP),
        b = num(BOTTOM),
        r = num(RIGHT),
        right = if has_energy { format!(" L {} {}", num(RIGHT), num(TOP)) } else { String::new() }
    );
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let y = BOTTOM - frac * (BOTTOM - TOP);
        let _ = writeln!(
            s,
            "<text class=\"tick-left\" x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            num(LEFT - 6.0),
            num(y + 4.0),
            num(frac * y_max_left)
        );
        if has_energy {
            let _ = writeln!(
                s,
                "<text class=\"tick-right\" x=\"{}\" y=\"{}\" text-anchor=\"start\">{}</text>",
                num(RIGHT + 6.0),
                num(y + 4.0),
                num(frac * y_max_right)
            );
        }
    }
    for (g, p) in groups.iter().enumerate() {
        let _ = writeln!(
            s,
            "<text class=\"group\" x=\"{}\" y=\"{}\" text-anchor=\"middle\">{p}</text>",
            num(LEFT + (g as f64 + 0.5) * band),
            num(BOTTOM + 18.0)
        );
    }
    let _ = writeln!(
        s,
        "<text class=\"label\" x=\"{}\" y=\"{}\" text-anchor=\"middle\">nodes</text>",
        num((LEFT + RIGHT) / 2.0),
        num(BOTTOM + 40.0)
    );
    let _ = writeln!(
        s,
        "<text class=\"label\" x=\"20\" y=\"{y}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {y})\">elapsed time [s] (crosses)</text>",
        y = num((TOP + BOTTOM) / 2.0)
    );
    if has_energy {
        let _ = writeln!(
            s,
            "<text class=\"label\" x=\"780\" y=\"{y}\" text-anchor=\"middle\" transform=\"rotate(90 780 {y})\">energy [J] (circles)</text>",
            y = num((TOP + BOTTOM) / 2.0)
        );
    }

    for ev in events {
        let mut d = String::new();
        for &p in &groups {
            let x = num(x_at(p, ev.timestamp));
            let _ = write!(d, "{}M {x} {} L {x} {}", if d.is_empty() { "" } else { " " }, num(TOP), num(BOTTOM));
        }
        let _ = writeln!(
            s,
            "<path class=\"event\" d=\"{d}\" fill=\"none\" stroke=\"gray\" stroke-dasharray=\"6,4\"><title>{} {} {}</title></path>",
            xml_escape(&timefmt::format(&ev.timestamp)),
            xml_escape(&ev.machine_label),
            xml_escape(&ev.label)
        );
    }

    for (rank, pt) in points.iter().enumerate() {
        let x = x_at(pt.p, pt.record.started_at);
        let y = y_at(pt.elapsed, y_max_left);
        let l = num(lightness(rank));
        let _ = writeln!(
            s,
            "<path class=\"cross\" d=\"M {} {} L {} {} M {} {} L {} {}\" stroke=\"hsl(210,80%,{l}%)\" stroke-width=\"2\"/>",
            num(x - 4.0),
            num(y - 4.0),
            num(x + 4.0),
            num(y + 4.0),
            num(x - 4.0),
            num(y + 4.0),
            num(x + 4.0),
            num(y - 4.0)
        );
        if let Some(e) = pt.energy {
            let _ = writeln!(
                s,
                "<circle class=\"energy\" cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"none\" stroke=\"hsl(20,80%,{l}%)\" stroke-width=\"2\"/>",
                num(x),
                num(y_at(e, y_max_right))
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
