//! Parallel, resumable beta sweeps.
//!
//! Each strategy gets a directory `<out>/<strategy>/` holding a cell journal
//! `cells.csv` and, once every cell is in, `alpha_vs_beta.csv`. Workers only
//! compute; a single writer thread appends finished cells to the journal, so
//! a killed sweep loses at most the cells in flight. Re-running skips every
//! cell already journalled. Cell seeds depend only on the base seed and the
//! cell coordinates, so the final curve is the same for any worker count and
//! any interruption pattern.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;

use rayon::prelude::*;
use traffic_dfa_core::graph::Network;
use traffic_dfa_core::phase::{
    assemble_curve, phase_report, plan_cells, run_cell, AlphaCurve, Cell, CellResult,
    PipelineOptions, SlopeEstimate,
};
use traffic_dfa_core::traffic::{SimConfig, Strategy};
use traffic_dfa_core::Error;

use crate::formats::{fmt_decimal, write_curve_csv};
use crate::CliError;

pub const JOURNAL_NAME: &str = "cells.csv";
pub const CURVE_NAME: &str = "alpha_vs_beta.csv";
const JOURNAL_HEADER: &str =
    "beta_index,run_index,beta,seed,status,alpha,alpha_stderr,growth_slope,growth_stderr,mean_load";

type Outcome = (Cell, Result<CellResult, Error>);

/// One strategy's sweep.
#[derive(Debug, Clone)]
pub struct SweepJob<'a> {
    pub net: &'a Network,
    /// `beta` is ignored; `seed` is the base seed for the cells.
    pub template: SimConfig,
    pub betas: Vec<f64>,
    pub ensemble: usize,
    pub opts: PipelineOptions,
    pub workers: usize,
    /// Stop after computing this many new cells.
    pub max_cells: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepStatus {
    pub strategy: Strategy,
    pub cells_ok: usize,
    pub cells_failed: usize,
    pub cells_total: usize,
    /// Written this run or found from an earlier run.
    pub curve_path: Option<PathBuf>,
}

impl SweepStatus {
    pub fn complete(&self) -> bool {
        self.cells_ok + self.cells_failed == self.cells_total
    }
}

fn journal_line(cell: &Cell, result: &Result<CellResult, Error>) -> String {
    let head = format!(
        "{},{},{},{}",
        cell.beta_index,
        cell.run_index,
        fmt_decimal(cell.beta),
        cell.seed
    );
    match result {
        Ok(r) => format!(
            "{head},ok,{},{},{},{},{}",
            fmt_decimal(r.alpha),
            fmt_decimal(r.alpha_stderr),
            fmt_decimal(r.growth.slope),
            fmt_decimal(r.growth.stderr),
            fmt_decimal(r.mean_load)
        ),
        Err(_) => format!("{head},failed,NaN,NaN,NaN,NaN,NaN"),
    }
}

/// Journalled outcomes keyed by `(beta_index, run_index)`. A torn final
/// line from an interrupted writer is ignored; any other malformed line, or
/// a cell whose beta or seed disagrees with `plan`, is an error.
fn read_journal(path: &Path, plan: &[Cell]) -> Result<BTreeMap<(usize, usize), Outcome>, CliError> {
    let mut done = BTreeMap::new();
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(done),
        Err(e) => return Err(CliError::io(path, e)),
    };
    let planned: BTreeMap<(usize, usize), &Cell> = plan
        .iter()
        .map(|c| ((c.beta_index, c.run_index), c))
        .collect();
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::io(path, e))?;
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        if i == 0 {
            if line != JOURNAL_HEADER {
                return Err(CliError::Parse {
                    path: path.into(),
                    line: 1,
                    reason: "not a sweep journal".into(),
                });
            }
            continue;
        }
        match parse_journal_line(line, &planned) {
            Ok(Some(o)) => {
                done.insert((o.0.beta_index, o.0.run_index), o);
            }
            Ok(None) => {}
            Err(_) if i == last => {}
            Err(reason) => {
                return Err(CliError::Parse {
                    path: path.into(),
                    line: i + 1,
                    reason,
                })
            }
        }
    }
    Ok(done)
}

fn parse_journal_line(
    line: &str,
    planned: &BTreeMap<(usize, usize), &Cell>,
) -> Result<Option<Outcome>, String> {
    if line.trim().is_empty() {
        return Ok(None);
    }
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != 10 {
        return Err("wrong field count".into());
    }
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| format!("`{s}` is not a number"))
    };
    let bi: usize = f[0].parse().map_err(|_| "bad beta_index")?;
    let ri: usize = f[1].parse().map_err(|_| "bad run_index")?;
    let seed: u64 = f[3].parse().map_err(|_| "bad seed")?;
    let cell = **planned
        .get(&(bi, ri))
        .ok_or("cell is not part of this sweep; was the grid changed?")?;
    if cell.seed != seed || cell.beta != num(f[2])? {
        return Err("cell does not match this sweep; was the seed or grid changed?".into());
    }
    let result = match f[4] {
        "ok" => Ok(CellResult {
            alpha: num(f[5])?,
            alpha_stderr: num(f[6])?,
            growth: SlopeEstimate {
                slope: num(f[7])?,
                stderr: num(f[8])?,
            },
            mean_load: num(f[9])?,
        }),
        "failed" => Err(Error::Degenerate),
        other => return Err(format!("unknown status `{other}`")),
    };
    Ok(Some((cell, result)))
}

/// Runs the cells of `job` not yet in `dir`'s journal, then writes the curve
/// if the sweep is complete. A directory whose curve already exists is left
/// untouched.
pub fn run_sweep(job: &SweepJob<'_>, dir: &Path) -> Result<SweepStatus, CliError> {
    let strategy = job.template.strategy;
    let plan = plan_cells(&job.betas, job.ensemble, job.template.seed);
    let curve_path = dir.join(CURVE_NAME);
    let journal_path = dir.join(JOURNAL_NAME);
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;

    let mut done = read_journal(&journal_path, &plan)?;
    if curve_path.exists() {
        return Ok(status(strategy, &done, plan.len(), Some(curve_path)));
    }

    let pending: Vec<Cell> = plan
        .iter()
        .filter(|c| !done.contains_key(&(c.beta_index, c.run_index)))
        .take(job.max_cells.unwrap_or(usize::MAX))
        .copied()
        .collect();

    if !pending.is_empty() {
        for (cell, result) in compute(job, &pending, &journal_path)? {
            done.insert((cell.beta_index, cell.run_index), (cell, result));
        }
    }

    let mut st = status(strategy, &done, plan.len(), None);
    if st.complete() && st.cells_ok > 0 {
        let outcomes: Vec<Outcome> = done.into_values().collect();
        let curve = assemble_curve(strategy, &job.betas, job.ensemble, &outcomes);
        write_curve(&curve_path, &curve)?;
        st.curve_path = Some(curve_path);
    }
    Ok(st)
}

fn status(
    strategy: Strategy,
    done: &BTreeMap<(usize, usize), Outcome>,
    total: usize,
    curve_path: Option<PathBuf>,
) -> SweepStatus {
    let ok = done.values().filter(|(_, r)| r.is_ok()).count();
    SweepStatus {
        strategy,
        cells_ok: ok,
        cells_failed: done.len() - ok,
        cells_total: total,
        curve_path,
    }
}

/// Phase labels are attached when the curve supports a phase report.
fn write_curve(path: &Path, curve: &AlphaCurve) -> Result<(), CliError> {
    let report = phase_report(curve, None).ok();
    write_curve_csv(path, curve, report.as_ref())
}

fn compute(job: &SweepJob<'_>, pending: &[Cell], journal: &Path) -> Result<Vec<Outcome>, CliError> {
    let fresh = !journal.exists();
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(journal)
        .map_err(|e| CliError::io(journal, e))?;
    if fresh {
        writeln!(file, "{JOURNAL_HEADER}").map_err(|e| CliError::io(journal, e))?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(job.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", job.workers)))?;
    let (tx, rx) = mpsc::channel::<Outcome>();
    let writer = thread::spawn(move || -> std::io::Result<Vec<Outcome>> {
        let mut got = Vec::new();
        for (cell, result) in rx {
            writeln!(file, "{}", journal_line(&cell, &result))?;
            file.flush()?;
            got.push((cell, result));
        }
        Ok(got)
    });
    pool.install(|| {
        pending.par_iter().for_each_with(tx, |tx, cell| {
            let result = run_cell(job.net, &job.template, cell, &job.opts);
            // The writer only hangs up after an IO error, which is reported below.
            let _ = tx.send((*cell, result));
        })
    });
    writer
        .join()
        .expect("journal writer panicked")
        .map_err(|e| CliError::io(journal, e))
}
