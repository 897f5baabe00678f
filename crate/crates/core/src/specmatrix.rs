//! Benchmark specification files and run-matrix expansion.
//!
//! A spec file is line oriented. `#` starts a comment and blank lines are
//! ignored:
//!
//! ```text
//! benchmark "negf-scaling"
//! param distro = rocky9, debian12
//! param mpi = mpich, openmpi
//! param device = cpu, gpu
//! exclude device=gpu && distro=rocky9
//! command = "run --device {device}"
//! metric wall from elapsed
//! metric iters from file:metrics.json:iterations
//! estimate_seconds = 600
//! timeout_factor = 1.5
//! workdir_root = ./bk-runs
//! ```
//!
//! `{name}` in the command is replaced by the parameter's value; `{{` and
//! `}}` stand for literal braces.
//!
//! [`expand`] takes the Cartesian product of all parameter values in
//! declaration order (last parameter varies fastest) and drops every
//! combination matched by an exclusion rule.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

/// Default directory under which run directories are created.
pub const DEFAULT_WORKDIR_ROOT: &str = "./bk-runs";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpecError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: undeclared parameter `{name}`")]
    UndeclaredParam { line: usize, name: String },
    #[error("line {line}: parameter `{name}` has no value `{value}` (in `{name}={value}`)")]
    UndeclaredValue {
        line: usize,
        name: String,
        value: String,
    },
    #[error("line {line}: duplicate parameter `{name}`")]
    DuplicateParam { line: usize, name: String },
    #[error("line {line}: parameter `{name}` has an empty value list")]
    EmptyValues { line: usize, name: String },
    #[error("missing required entry `{0}`")]
    Missing(&'static str),
}

impl SpecError {
    fn syntax(line: usize, message: impl Into<String>) -> Self {
        SpecError::Syntax {
            line,
            message: message.into(),
        }
    }
}

/// A positive rational multiplier stored as `numerator / denominator`.
///
/// Parsed from a decimal literal so that `ceil(estimate * factor)` is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeoutFactor {
    numer: u64,
    denom: u64,
}

impl TimeoutFactor {
    pub fn new(numer: u64, denom: u64) -> Option<Self> {
        if denom == 0 || numer <= denom {
            return None;
        }
        let g = gcd(numer, denom);
        Some(Self {
            numer: numer / g,
            denom: denom / g,
        })
    }

    pub fn numer(&self) -> u64 {
        self.numer
    }

    pub fn denom(&self) -> u64 {
        self.denom
    }

    /// `ceil(seconds * factor)`.
    pub fn apply(&self, seconds: u64) -> u64 {
        let num = seconds as u128 * self.numer as u128;
        let den = self.denom as u128;
        num.div_ceil(den) as u64
    }
}

impl Default for TimeoutFactor {
    fn default() -> Self {
        Self { numer: 3, denom: 2 }
    }
}

impl FromStr for TimeoutFactor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("invalid decimal `{s}`");
        let (int, frac) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int.is_empty() && frac.is_empty()
            || !int.chars().all(|c| c.is_ascii_digit())
            || !frac.chars().all(|c| c.is_ascii_digit())
            || frac.len() > 9
        {
            return Err(bad());
        }
        let denom = 10u64.pow(frac.len() as u32);
        let int: u64 = if int.is_empty() {
            0
        } else {
            int.parse().map_err(|_| bad())?
        };
        let frac_v: u64 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| bad())?
        };
        let numer = int
            .checked_mul(denom)
            .and_then(|v| v.checked_add(frac_v))
            .ok_or_else(bad)?;
        TimeoutFactor::new(numer, denom).ok_or_else(|| format!("timeout_factor must be > 1, got `{s}`"))
    }
}

impl fmt::Display for TimeoutFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Reduced denominators of decimal literals only contain factors 2 and 5.
        let mut scale = 1u64;
        let mut digits = 0usize;
        while scale % self.denom != 0 {
            scale *= 10;
            digits += 1;
        }
        let scaled = self.numer * (scale / self.denom);
        let int = scaled / scale;
        if digits == 0 {
            write!(f, "{int}.0")
        } else {
            write!(f, "{int}.{:0width$}", scaled % scale, width = digits)
        }
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Where a metric value comes from once a run has finished.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetricKind {
    /// Wall-clock seconds measured by the harness.
    Elapsed,
    /// The process exit status.
    ExitStatus,
    /// A number inside a JSON document written by the run, addressed by a
    /// dot-separated key path.
    File { path: String, key_path: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricSource {
    pub name: String,
    pub kind: MetricKind,
}

/// A conjunction of `param=value` equalities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExclusionRule {
    pub conjuncts: Vec<(String, String)>,
}

impl ExclusionRule {
    pub fn matches(&self, config: &Configuration) -> bool {
        self.conjuncts
            .iter()
            .all(|(name, value)| config.get(name) == Some(value.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchmarkSpec {
    pub name: String,
    pub params: Vec<(String, Vec<String>)>,
    pub excludes: Vec<ExclusionRule>,
    pub command_template: String,
    pub metrics: Vec<MetricSource>,
    pub estimate_seconds: u64,
    pub timeout_factor: TimeoutFactor,
    pub workdir_root: PathBuf,
}

impl BenchmarkSpec {
    /// Timeout in whole seconds, `ceil(estimate_seconds * timeout_factor)`.
    pub fn timeout_seconds(&self) -> u64 {
        self.timeout_factor.apply(self.estimate_seconds)
    }

    pub fn param_values(&self, name: &str) -> Option<&[String]> {
        self.params
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// Writes the spec back out in the file format accepted by [`parse_spec`].
    pub fn to_spec_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("benchmark \"{}\"\n", self.name));
        for (name, values) in &self.params {
            out.push_str(&format!("param {name} = {}\n", values.join(", ")));
        }
        for rule in &self.excludes {
            let terms: Vec<String> = rule
                .conjuncts
                .iter()
                .map(|(n, v)| format!("{n}={v}"))
                .collect();
            out.push_str(&format!("exclude {}\n", terms.join(" && ")));
        }
        out.push_str(&format!(
            "command = \"{}\"\n",
            escape_quoted(&self.command_template)
        ));
        for m in &self.metrics {
            let src = match &m.kind {
                MetricKind::Elapsed => "elapsed".to_string(),
                MetricKind::ExitStatus => "exitstatus".to_string(),
                MetricKind::File { path, key_path } => {
                    format!("file:{path}:{}", key_path.join("."))
                }
            };
            out.push_str(&format!("metric {} from {src}\n", m.name));
        }
        out.push_str(&format!("estimate_seconds = {}\n", self.estimate_seconds));
        out.push_str(&format!("timeout_factor = {}\n", self.timeout_factor));
        out.push_str(&format!("workdir_root = {}\n", self.workdir_root.display()));
        out
    }
}

/// One concrete point of the run matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    /// Position in the expansion order, assigned after filtering.
    pub index: usize,
    /// `(param, value)` pairs in parameter declaration order.
    pub assignment: Vec<(String, String)>,
}

impl Configuration {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.assignment
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    /// The assignment keyed by parameter name.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        self.assignment.iter().cloned().collect()
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (n, v) in &self.assignment {
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            write!(f, "{n}={v}")?;
        }
        Ok(())
    }
}

pub(crate) fn is_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub(crate) fn is_value(s: &str) -> bool {
    !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

fn escape_quoted(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Parses a `"..."` literal that must make up the whole of `s`.
fn parse_quoted(s: &str, line: usize) -> Result<String, SpecError> {
    let inner = s
        .strip_prefix('"')
        .ok_or_else(|| SpecError::syntax(line, "expected a quoted string"))?;
    let mut out = String::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some(e @ ('\\' | '"')) => out.push(e),
                Some(e) => {
                    return Err(SpecError::syntax(line, format!("unknown escape `\\{e}`")));
                }
                None => return Err(SpecError::syntax(line, "unterminated string")),
            },
            '"' => {
                let rest: String = chars.collect();
                if !rest.trim().is_empty() {
                    return Err(SpecError::syntax(
                        line,
                        format!("unexpected text after string: `{}`", rest.trim()),
                    ));
                }
                return Ok(out);
            }
            c => out.push(c),
        }
    }
    Err(SpecError::syntax(line, "unterminated string"))
}

/// Strips a trailing `#` comment that is not inside a quoted string.
fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
        } else if c == '"' {
            in_str = true;
        } else if c == '#' {
            return &line[..i];
        }
    }
    line
}

/// Returns the placeholder names of a command template in order of
/// appearance. `{{` and `}}` are literal braces. Unbalanced braces are
/// reported as `Err(message)`.
fn placeholders(template: &str) -> Result<Vec<&str>, String> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find(['{', '}']) {
        let brace = rest.as_bytes()[open];
        if rest.as_bytes().get(open + 1) == Some(&brace) {
            rest = &rest[open + 2..];
            continue;
        }
        if brace == b'}' {
            return Err("unmatched `}` in command template (write `}}` for a literal brace)".into());
        }
        let after = &rest[open + 1..];
        let close = after
            .find(['{', '}'])
            .filter(|&i| after.as_bytes()[i] == b'}')
            .ok_or_else(|| "unmatched `{` in command template (write `{{` for a literal brace)".to_string())?;
        out.push(&after[..close]);
        rest = &after[close + 1..];
    }
    Ok(out)
}

fn keyed_value<'a>(rest: &'a str, key: &str, line: usize) -> Result<&'a str, SpecError> {
    let value = rest
        .trim_start()
        .strip_prefix('=')
        .ok_or_else(|| SpecError::syntax(line, format!("expected `{key} = <value>`")))?
        .trim();
    if value.is_empty() {
        return Err(SpecError::syntax(line, format!("`{key}` needs a value")));
    }
    Ok(value)
}

/// Parses and validates a spec file.
pub fn parse_spec(text: &str) -> Result<BenchmarkSpec, SpecError> {
    let mut name: Option<String> = None;
    let mut params: Vec<(String, Vec<String>)> = Vec::new();
    // Exclusion terms are validated once all params are known.
    let mut raw_excludes: Vec<(usize, Vec<(String, String)>)> = Vec::new();
    let mut command: Option<(usize, String)> = None;
    let mut metrics: Vec<MetricSource> = Vec::new();
    let mut estimate: Option<u64> = None;
    let mut factor: Option<TimeoutFactor> = None;
    let mut workdir: Option<PathBuf> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = strip_comment(raw).trim();
        if content.is_empty() {
            continue;
        }
        let (keyword, rest) = match content.find(|c: char| c.is_whitespace() || c == '=') {
            Some(pos) => (&content[..pos], &content[pos..]),
            None => (content, ""),
        };
        let once = |seen: bool, key: &str| {
            if seen {
                Err(SpecError::syntax(line, format!("duplicate `{key}` entry")))
            } else {
                Ok(())
            }
        };
        match keyword {
            "benchmark" => {
                once(name.is_some(), "benchmark")?;
                let n = parse_quoted(rest.trim(), line)?;
                if !is_value(&n) {
                    return Err(SpecError::syntax(
                        line,
                        format!("benchmark name `{n}` must match [A-Za-z0-9._-]+"),
                    ));
                }
                name = Some(n);
            }
            "param" => {
                let (pname, values) = rest.split_once('=').ok_or_else(|| {
                    SpecError::syntax(line, "expected `param <name> = <v1>, <v2>, ...`")
                })?;
                let pname = pname.trim();
                if !is_name(pname) {
                    return Err(SpecError::syntax(
                        line,
                        format!("invalid parameter name `{pname}`"),
                    ));
                }
                if params.iter().any(|(n, _)| n == pname) {
                    return Err(SpecError::DuplicateParam {
                        line,
                        name: pname.to_string(),
                    });
                }
                let values = values.trim();
                if values.is_empty() {
                    return Err(SpecError::EmptyValues {
                        line,
                        name: pname.to_string(),
                    });
                }
                let mut seen = HashSet::new();
                let mut list = Vec::new();
                for v in values.split(',') {
                    let v = v.trim();
                    if !is_value(v) {
                        return Err(SpecError::syntax(
                            line,
                            format!("invalid value `{v}` for parameter `{pname}`"),
                        ));
                    }
                    if !seen.insert(v) {
                        return Err(SpecError::syntax(
                            line,
                            format!("duplicate value `{v}` for parameter `{pname}`"),
                        ));
                    }
                    list.push(v.to_string());
                }
                params.push((pname.to_string(), list));
            }
            "exclude" => {
                let mut terms = Vec::new();
                for term in rest.split("&&") {
                    let term = term.trim();
                    let (n, v) = term.split_once('=').ok_or_else(|| {
                        SpecError::syntax(line, format!("expected `<name>=<value>`, got `{term}`"))
                    })?;
                    let (n, v) = (n.trim(), v.trim());
                    if !is_name(n) || !is_value(v) {
                        return Err(SpecError::syntax(line, format!("malformed term `{term}`")));
                    }
                    terms.push((n.to_string(), v.to_string()));
                }
                raw_excludes.push((line, terms));
            }
            "command" => {
                once(command.is_some(), "command")?;
                let value = keyed_value(rest, "command", line)?;
                command = Some((line, parse_quoted(value, line)?));
            }
            "metric" => {
                let mut words = rest.split_whitespace();
                let (Some(mname), Some("from"), Some(src), None) =
                    (words.next(), words.next(), words.next(), words.next())
                else {
                    return Err(SpecError::syntax(
                        line,
                        "expected `metric <name> from elapsed | exitstatus | file:<path>:<key.path>`",
                    ));
                };
                if !is_name(mname) {
                    return Err(SpecError::syntax(line, format!("invalid metric name `{mname}`")));
                }
                if metrics.iter().any(|m| m.name == mname) {
                    return Err(SpecError::syntax(line, format!("duplicate metric `{mname}`")));
                }
                let kind = match src {
                    "elapsed" => MetricKind::Elapsed,
                    "exitstatus" => MetricKind::ExitStatus,
                    other => {
                        let spec = other.strip_prefix("file:").ok_or_else(|| {
                            SpecError::syntax(line, format!("unknown metric source `{other}`"))
                        })?;
                        let (path, keys) = spec.rsplit_once(':').ok_or_else(|| {
                            SpecError::syntax(line, "expected `file:<relpath>:<dot.path>`")
                        })?;
                        let key_path: Vec<String> = keys.split('.').map(str::to_string).collect();
                        if path.is_empty()
                            || path.starts_with('/')
                            || key_path.iter().any(|k| k.is_empty())
                        {
                            return Err(SpecError::syntax(
                                line,
                                format!("malformed file metric source `{other}`"),
                            ));
                        }
                        MetricKind::File {
                            path: path.to_string(),
                            key_path,
                        }
                    }
                };
                metrics.push(MetricSource {
                    name: mname.to_string(),
                    kind,
                });
            }
            "estimate_seconds" => {
                once(estimate.is_some(), "estimate_seconds")?;
                let value = keyed_value(rest, "estimate_seconds", line)?;
                let v: u64 = value.parse().map_err(|_| {
                    SpecError::syntax(line, format!("estimate_seconds must be a positive integer, got `{value}`"))
                })?;
                if v == 0 {
                    return Err(SpecError::syntax(line, "estimate_seconds must be positive"));
                }
                estimate = Some(v);
            }
            "timeout_factor" => {
                once(factor.is_some(), "timeout_factor")?;
                let value = keyed_value(rest, "timeout_factor", line)?;
                factor = Some(value.parse().map_err(|e| SpecError::syntax(line, e))?);
            }
            "workdir_root" => {
                once(workdir.is_some(), "workdir_root")?;
                let value = keyed_value(rest, "workdir_root", line)?;
                workdir = Some(PathBuf::from(value));
            }
            other => {
                return Err(SpecError::syntax(line, format!("unknown key `{other}`")));
            }
        }
    }

    let name = name.ok_or(SpecError::Missing("benchmark"))?;
    let (command_line, command_template) = command.ok_or(SpecError::Missing("command"))?;
    let estimate_seconds = estimate.ok_or(SpecError::Missing("estimate_seconds"))?;

    let mut excludes = Vec::with_capacity(raw_excludes.len());
    for (line, terms) in raw_excludes {
        for (n, v) in &terms {
            let values = params
                .iter()
                .find(|(pn, _)| pn == n)
                .map(|(_, vs)| vs)
                .ok_or_else(|| SpecError::UndeclaredParam {
                    line,
                    name: n.clone(),
                })?;
            if !values.contains(v) {
                return Err(SpecError::UndeclaredValue {
                    line,
                    name: n.clone(),
                    value: v.clone(),
                });
            }
        }
        excludes.push(ExclusionRule { conjuncts: terms });
    }

    let holes = placeholders(&command_template).map_err(|m| SpecError::syntax(command_line, m))?;
    for hole in holes {
        if !params.iter().any(|(n, _)| n == hole) {
            return Err(SpecError::UndeclaredParam {
                line: command_line,
                name: hole.to_string(),
            });
        }
    }

    Ok(BenchmarkSpec {
        name,
        params,
        excludes,
        command_template,
        metrics,
        estimate_seconds,
        timeout_factor: factor.unwrap_or_default(),
        workdir_root: workdir.unwrap_or_else(|| PathBuf::from(DEFAULT_WORKDIR_ROOT)),
    })
}

/// Expands the run matrix: Cartesian product in declaration order with the
/// last parameter varying fastest, minus excluded combinations.
pub fn expand(spec: &BenchmarkSpec) -> Vec<Configuration> {
    if spec.params.iter().any(|(_, v)| v.is_empty()) {
        return Vec::new();
    }
    let mut out = Vec::new();
    // Odometer over value indices.
    let mut digits = vec![0usize; spec.params.len()];
    loop {
        let config = Configuration {
            index: out.len(),
            assignment: spec
                .params
                .iter()
                .zip(&digits)
                .map(|((n, vs), &d)| (n.clone(), vs[d].clone()))
                .collect(),
        };
        if !spec.excludes.iter().any(|r| r.matches(&config)) {
            out.push(config);
        }
        let mut pos = digits.len();
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < spec.params[pos].1.len() {
                break;
            }
            digits[pos] = 0;
        }
    }
}

/// Substitutes every `{param}` placeholder with the configuration's value
/// and unescapes `{{` / `}}`.
pub fn render_command(spec: &BenchmarkSpec, config: &Configuration) -> String {
    let t = spec.command_template.as_str();
    let mut out = String::with_capacity(t.len());
    let mut rest = t;
    while let Some(open) = rest.find(['{', '}']) {
        out.push_str(&rest[..open]);
        let brace = rest.as_bytes()[open];
        if rest.as_bytes().get(open + 1) == Some(&brace) {
            out.push(brace as char);
            rest = &rest[open + 2..];
            continue;
        }
        let after = &rest[open + 1..];
        match (brace, after.find('}')) {
            (b'{', Some(close)) => {
                let key = &after[..close];
                match config.get(key) {
                    Some(v) => out.push_str(v),
                    None => {
                        out.push('{');
                        out.push_str(key);
                        out.push('}');
                    }
                }
                rest = &after[close + 1..];
            }
            _ => {
                out.push(brace as char);
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE1: &str = r#"
# build matrix
benchmark "libnegf-ci"
param distro = rocky9, debian12
param mpi = mpich, openmpi
param device = cpu, gpu
exclude device=gpu && distro=rocky9
command = "run --device {device} --mpi {mpi}"
estimate_seconds = 600
"#;

    fn minimal(extra: &str) -> String {
        format!("benchmark \"b\"\ncommand = \"true\"\nestimate_seconds = 10\n{extra}")
    }

    fn minimal_with_command(lines: &str) -> String {
        format!("benchmark \"b\"\nestimate_seconds = 10\n{lines}")
    }

    #[test]
    fn parses_reference_layout_spec() {
        let spec = parse_spec(TABLE1).unwrap();
        assert_eq!(spec.params.len(), 3);
        assert_eq!(spec.excludes.len(), 1);
        assert_eq!(spec.timeout_factor, TimeoutFactor::default());
        assert_eq!(spec.timeout_seconds(), 900);
        assert_eq!(spec.workdir_root, PathBuf::from(DEFAULT_WORKDIR_ROOT));
    }

    #[test]
    fn reference_layout_expands_to_six() {
        let spec = parse_spec(TABLE1).unwrap();
        let configs = expand(&spec);
        assert_eq!(configs.len(), 6);
        assert!(configs
            .iter()
            .all(|c| !(c.get("device") == Some("gpu") && c.get("distro") == Some("rocky9"))));
        assert_eq!(
            configs.iter().map(|c| c.index).collect::<Vec<_>>(),
            (0..6).collect::<Vec<_>>()
        );
        // last param varies fastest
        assert_eq!(configs[0].to_string(), "distro=rocky9 mpi=mpich device=cpu");
        assert_eq!(configs[1].to_string(), "distro=rocky9 mpi=openmpi device=cpu");
        assert_eq!(configs[2].to_string(), "distro=debian12 mpi=mpich device=cpu");
        assert_eq!(configs[3].to_string(), "distro=debian12 mpi=mpich device=gpu");
    }

    #[test]
    fn zero_params_is_valid_and_expands_to_singleton() {
        let spec = parse_spec(&minimal("")).unwrap();
        assert!(spec.params.is_empty());
        let configs = expand(&spec);
        assert_eq!(configs.len(), 1);
        assert!(configs[0].assignment.is_empty());
    }

    #[test]
    fn exclude_with_undeclared_value_names_term() {
        let err = parse_spec(&minimal("param device = cpu, gpu\nexclude device=tpu\n")).unwrap_err();
        assert!(err.to_string().contains("device=tpu"), "{err}");
        assert!(matches!(err, SpecError::UndeclaredValue { line: 5, .. }));
    }

    #[test]
    fn exclude_with_undeclared_param() {
        let err = parse_spec(&minimal("exclude os=linux\n")).unwrap_err();
        assert!(matches!(err, SpecError::UndeclaredParam { ref name, .. } if name == "os"));
    }

    #[test]
    fn template_with_undeclared_placeholder() {
        let err = parse_spec("benchmark \"b\"\ncommand = \"run {n}\"\nestimate_seconds = 1\n")
            .unwrap_err();
        assert_eq!(
            err,
            SpecError::UndeclaredParam {
                line: 2,
                name: "n".into()
            }
        );
    }

    #[test]
    fn duplicate_param_and_empty_values() {
        let err = parse_spec(&minimal("param a = x\nparam a = y\n")).unwrap_err();
        assert!(matches!(err, SpecError::DuplicateParam { line: 5, .. }));
        let err = parse_spec(&minimal("param a =\n")).unwrap_err();
        assert!(matches!(err, SpecError::EmptyValues { line: 4, .. }));
        let err = parse_spec(&minimal("param a = x, x\n")).unwrap_err();
        assert!(matches!(err, SpecError::Syntax { line: 4, .. }));
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = parse_spec(&minimal("retries = 3\n")).unwrap_err();
        assert!(matches!(err, SpecError::Syntax { line: 4, ref message } if message.contains("retries")));
    }

    #[test]
    fn missing_required_entries() {
        assert_eq!(
            parse_spec("command = \"x\"\nestimate_seconds = 1").unwrap_err(),
            SpecError::Missing("benchmark")
        );
        assert_eq!(
            parse_spec("benchmark \"b\"\nestimate_seconds = 1").unwrap_err(),
            SpecError::Missing("command")
        );
    }

    #[test]
    fn timeout_factor_parsing() {
        let f: TimeoutFactor = "1.5".parse().unwrap();
        assert_eq!((f.numer(), f.denom()), (3, 2));
        assert_eq!(f.apply(7), 11);
        assert_eq!(f.to_string(), "1.5");
        let f: TimeoutFactor = "2".parse().unwrap();
        assert_eq!(f.to_string(), "2.0");
        let f: TimeoutFactor = "1.125".parse().unwrap();
        assert_eq!(f.apply(3), 4);
        assert_eq!(f.to_string(), "1.125");
        assert!("1".parse::<TimeoutFactor>().is_err());
        assert!("0.9".parse::<TimeoutFactor>().is_err());
        assert!("abc".parse::<TimeoutFactor>().is_err());
        assert!("1.5e3".parse::<TimeoutFactor>().is_err());
    }

    #[test]
    fn metric_sources() {
        let spec = parse_spec(&minimal(
            "metric wall from elapsed\nmetric rc from exitstatus\nmetric it from file:out/metrics.json:solver.iterations\n",
        ))
        .unwrap();
        assert_eq!(spec.metrics[0].kind, MetricKind::Elapsed);
        assert_eq!(spec.metrics[1].kind, MetricKind::ExitStatus);
        assert_eq!(
            spec.metrics[2].kind,
            MetricKind::File {
                path: "out/metrics.json".into(),
                key_path: vec!["solver".into(), "iterations".into()]
            }
        );
        assert!(parse_spec(&minimal("metric a from elapsed\nmetric a from exitstatus\n")).is_err());
        assert!(parse_spec(&minimal("metric a from stdout\n")).is_err());
    }

    #[test]
    fn doubled_braces_are_literal() {
        let spec = parse_spec(&minimal_with_command("param n = 4\ncommand = \"echo '{{\\\"n\\\": {n}}}' }}{{\"\n")).unwrap();
        let c = &expand(&spec)[0];
        assert_eq!(render_command(&spec, c), "echo '{\"n\": 4}' }{");
        assert!(parse_spec(&minimal_with_command("command = \"echo {{x}\"\n")).is_err());
        assert!(parse_spec(&minimal_with_command("command = \"echo {x{\"\n")).is_err());
    }

    #[test]
    fn comments_inside_quotes_are_kept() {
        let spec = parse_spec("benchmark \"b\" # name\ncommand = \"echo '#1' \\\"q\\\"\"\nestimate_seconds = 1\n").unwrap();
        assert_eq!(spec.command_template, "echo '#1' \"q\"");
    }

    #[test]
    fn render_substitutes_placeholders() {
        let spec = parse_spec(&format!(
            "benchmark \"b\"\nparam device = cpu\nparam a = x\ncommand = \"run --device {{device}}\"\nestimate_seconds = 1\n"
        ))
        .unwrap();
        let c = &expand(&spec)[0];
        assert_eq!(render_command(&spec, c), "run --device cpu");

        let mut s2 = spec.clone();
        s2.command_template = "no placeholders here".into();
        assert_eq!(render_command(&s2, c), "no placeholders here");

        s2.command_template = "{a}-{a}".into();
        assert_eq!(render_command(&s2, c), "x-x");
    }

    #[test]
    fn serialized_spec_round_trips() {
        let spec = parse_spec(TABLE1).unwrap();
        assert_eq!(parse_spec(&spec.to_spec_text()).unwrap(), spec);
    }
}
