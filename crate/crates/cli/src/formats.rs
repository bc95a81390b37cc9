//! On-disk formats.
//!
//! | file               | layout                                               |
//! |--------------------|------------------------------------------------------|
//! | `series.csv`       | `t,avg_packets`                                      |
//! | `dfa.csv`          | `m,F`                                                |
//! | `dfa.json`         | alpha, alpha_stderr, crossover, fit_range, n_points  |
//! | `alpha_vs_beta.csv`| `beta,alpha,alpha_stderr,growth_slope,phase`         |
//! | `phase_report.json`| strategy, beta_c, beta_1, grid, ensemble             |
//! | `network.txt`      | `# nodes=N seed=S` then one `i j` edge per line      |
//!
//! Reals are written in plain decimal notation with 17 significant digits,
//! which round-trips every `f64`.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use traffic_dfa_core::dfa::DfaResult;
use traffic_dfa_core::graph::Network;
use traffic_dfa_core::phase::{AlphaCurve, AlphaEntry, Phase, PhaseReport};
use traffic_dfa_core::traffic::{Strategy, TimeSeries};

use crate::CliError;

pub const SERIES_HEADER: &str = "t,avg_packets";
pub const DFA_HEADER: &str = "m,F";
pub const CURVE_HEADER: &str = "beta,alpha,alpha_stderr,growth_slope,phase";

/// Plain decimal with 17 significant digits; `NaN` for non-finite values.
pub fn fmt_decimal(v: f64) -> String {
    if !v.is_finite() {
        return "NaN".to_string();
    }
    if v == 0.0 {
        return "0.0".to_string();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (16 - magnitude).clamp(1, 340) as usize;
    format!("{v:.decimals$}")
}

/// Creates `path` for writing, refusing to replace an existing file.
pub fn create_new(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    match OpenOptions::new().write(true).create_new(true).open(path) {
        Ok(f) => Ok(BufWriter::new(f)),
        Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(CliError::Exists(path.into())),
        Err(e) => Err(CliError::io(path, e)),
    }
}

/// Writes `contents` to a new file.
pub fn write_new(path: &Path, contents: &str) -> Result<(), CliError> {
    let mut w = create_new(path)?;
    w.write_all(contents.as_bytes())
        .and_then(|()| w.flush())
        .map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_new(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.into(),
        line: e.line(),
        reason: e.to_string(),
    })
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.into(),
        line,
        reason: reason.into(),
    }
}

/// Data rows of a CSV file whose first line must equal `header`. Blank lines
/// are skipped.
fn csv_rows(path: &Path, header: &str) -> Result<Vec<(usize, Vec<String>)>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rows = Vec::new();
    let mut lines = BufReader::new(file).lines().enumerate();
    match lines.next() {
        Some((_, Ok(first))) if first.trim() == header => {}
        Some((_, Ok(first))) => {
            return Err(parse_err(
                path,
                1,
                format!("expected header `{header}`, found `{}`", first.trim()),
            ))
        }
        Some((_, Err(e))) => return Err(CliError::io(path, e)),
        None => return Err(parse_err(path, 1, "empty file")),
    }
    let width = header.split(',').count();
    for (i, line) in lines {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
        if fields.len() != width {
            return Err(parse_err(
                path,
                i + 1,
                format!("expected {width} fields, found {}", fields.len()),
            ));
        }
        rows.push((i + 1, fields));
    }
    Ok(rows)
}

fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64, CliError> {
    field
        .parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("`{field}` is not a number")))
}

pub fn write_series_csv(path: &Path, series: &TimeSeries) -> Result<(), CliError> {
    let mut w = create_new(path)?;
    let result = (|| -> io::Result<()> {
        writeln!(w, "{SERIES_HEADER}")?;
        for (i, v) in series.values.iter().enumerate() {
            writeln!(w, "{},{}", series.start + i as u64, fmt_decimal(*v))?;
        }
        w.flush()
    })();
    result.map_err(|e| CliError::io(path, e))
}

/// The `avg_packets` column of a series file.
pub fn read_series_csv(path: &Path) -> Result<Vec<f64>, CliError> {
    csv_rows(path, SERIES_HEADER)?
        .into_iter()
        .map(|(line, f)| {
            let v = parse_f64(path, line, &f[1])?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(path, line, "non-finite value"))
            }
        })
        .collect()
}

pub fn write_dfa_csv(path: &Path, result: &DfaResult) -> Result<(), CliError> {
    let mut text = format!("{DFA_HEADER}\n");
    for p in &result.points {
        text.push_str(&format!("{},{}\n", p.m, fmt_decimal(p.f)));
    }
    write_new(path, &text)
}

/// Sidecar written next to `dfa.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfaSummary {
    pub alpha: Option<f64>,
    pub alpha_stderr: Option<f64>,
    pub crossover: Option<usize>,
    pub fit_range: Option<(usize, usize)>,
    pub n_points: usize,
    pub degenerate: bool,
}

impl From<&DfaResult> for DfaSummary {
    fn from(r: &DfaResult) -> Self {
        Self {
            alpha: r.fit.map(|f| f.alpha),
            alpha_stderr: r.fit.map(|f| f.alpha_stderr),
            crossover: r.crossover,
            fit_range: r.fit.map(|f| f.fit_range),
            n_points: r.points.len(),
            degenerate: r.degenerate,
        }
    }
}

/// Writes a curve with one phase label per row (empty when unknown).
pub fn write_curve_csv(
    path: &Path,
    curve: &AlphaCurve,
    report: Option<&PhaseReport>,
) -> Result<(), CliError> {
    let mut text = format!("{CURVE_HEADER}\n");
    for (i, e) in curve.entries.iter().enumerate() {
        let phase = report.map_or("", |r| r.labels[i].1.name());
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_decimal(e.beta),
            fmt_decimal(e.alpha),
            fmt_decimal(e.alpha_stderr),
            fmt_decimal(e.growth_slope),
            phase
        ));
    }
    write_new(path, &text)
}

/// Reads a curve file. Rows with a `NaN` alpha are kept as failed entries.
/// Returns the curve plus the phase labels found in the file, if any.
pub fn read_curve_csv(
    path: &Path,
    strategy: Strategy,
    ensemble: usize,
) -> Result<(AlphaCurve, Vec<Option<Phase>>), CliError> {
    let mut entries = Vec::new();
    let mut phases = Vec::new();
    for (line, f) in csv_rows(path, CURVE_HEADER)? {
        let beta = parse_f64(path, line, &f[0])?;
        let alpha = parse_f64(path, line, &f[1])?;
        let ok = alpha.is_finite();
        entries.push(AlphaEntry {
            beta,
            alpha,
            alpha_stderr: parse_f64(path, line, &f[2])?,
            growth_slope: parse_f64(path, line, &f[3])?,
            growth_stderr: f64::NAN,
            runs_ok: usize::from(ok),
            runs_failed: usize::from(!ok),
        });
        phases.push(if f[4].is_empty() {
            None
        } else {
            Some(
                f[4].parse()
                    .map_err(|_| parse_err(path, line, "unknown phase"))?,
            )
        });
    }
    if entries.windows(2).any(|w| w[0].beta >= w[1].beta) {
        return Err(parse_err(path, 2, "beta column must be strictly ascending"));
    }
    Ok((
        AlphaCurve {
            strategy,
            entries,
            ensemble_size: ensemble,
        },
        phases,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseLabel {
    pub beta: f64,
    pub phase: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReportFile {
    pub strategy: String,
    pub beta_c: f64,
    pub beta_1: f64,
    pub grid: Vec<f64>,
    pub ensemble: Option<usize>,
    pub labels: Vec<PhaseLabel>,
}

impl PhaseReportFile {
    pub fn new(report: &PhaseReport, ensemble: Option<usize>) -> Self {
        Self {
            strategy: report.strategy.name().to_string(),
            beta_c: report.beta_c,
            beta_1: report.beta_1,
            grid: report.labels.iter().map(|(b, _)| *b).collect(),
            ensemble,
            labels: report
                .labels
                .iter()
                .map(|(beta, p)| PhaseLabel {
                    beta: *beta,
                    phase: p.name().to_string(),
                })
                .collect(),
        }
    }
}

pub fn write_edge_list(path: &Path, net: &Network) -> Result<(), CliError> {
    let seed = net
        .seed()
        .map_or_else(|| "none".to_string(), |s| s.to_string());
    let mut text = format!("# nodes={} seed={}\n", net.node_count(), seed);
    for (i, j) in net.edges() {
        text.push_str(&format!("{i} {j}\n"));
    }
    write_new(path, &text)
}

pub fn read_edge_list(path: &Path) -> Result<Network, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .map(|(_, l)| l.trim())
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let mut nodes = None;
    let mut seed = None;
    for token in header.trim_start_matches('#').split_whitespace() {
        match token.split_once('=') {
            Some(("nodes", v)) => nodes = v.parse::<usize>().ok(),
            Some(("seed", v)) => seed = v.parse::<u64>().ok(),
            _ => {}
        }
    }
    let nodes = nodes
        .filter(|_| header.starts_with('#'))
        .ok_or_else(|| parse_err(path, 1, "expected header `# nodes=N seed=S`"))?;
    let mut edges = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace().map(str::parse::<usize>);
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(a)), Some(Ok(b)), None) => edges.push((a, b)),
            _ => return Err(parse_err(path, i + 1, "expected `i j`")),
        }
    }
    Network::from_edges(nodes, &edges, seed).map_err(|e| parse_err(path, 1, e.to_string()))
}

/// Provenance record written next to every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub artifacts: Vec<String>,
}

impl Manifest {
    pub fn new(
        command: &str,
        config: serde_json::Value,
        seed: Option<u64>,
        artifacts: &[&str],
    ) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seed,
            artifacts: artifacts.iter().map(|s| s.to_string()).collect(),
        }
    }
}
