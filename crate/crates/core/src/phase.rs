//! Alpha-versus-beta sweeps and free/buffer/congestion classification.
//!
//! A sweep runs `ensemble` simulations per delivery parameter `beta` on one
//! shared network. Each run is globally detrended and analyzed with DFA; the
//! raw series also yields a late-window growth slope, which is what separates
//! congested runs (queues growing linearly) from stationary ones.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::dfa::{analyze, DfaOptions};
use crate::graph::Network;
use crate::seed;
use crate::stats::{mean, ols, sample_std};
use crate::traffic::{run_on, SimConfig, Strategy};
use crate::{Error, Result};

/// A run counts as congested when its growth slope exceeds this many
/// standard errors.
pub const CONGESTION_SIGMAS: f64 = 5.0;
/// Growth slope (mean packets per node per step) above which a curve entry
/// counts as congested when no standard error is available.
pub const CURVE_CONGESTION_SLOPE: f64 = 1e-4;
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.5;
/// Smallest DFA box used on traffic series. Shorter boxes sit inside the
/// packet transit time and show its smoothing rather than long-range scaling.
pub const TRAFFIC_MIN_BOX: usize = 64;
pub const DEFAULT_ENSEMBLE: usize = 10;
pub const DEFAULT_GRID: (f64, f64, usize) = (0.02, 0.2, 25);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeEstimate {
    pub slope: f64,
    pub stderr: f64,
}

impl SlopeEstimate {
    pub fn is_congested(&self) -> bool {
        self.slope > CONGESTION_SIGMAS * self.stderr
    }
}

/// Least-squares slope per step over the trailing `window_fraction` of the
/// series.
pub fn growth_slope(series: &[f64], window_fraction: f64) -> Result<SlopeEstimate> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "window_fraction",
            reason: "must lie in (0, 1]",
        });
    }
    if series.len() < 100 {
        return Err(Error::TooFewPoints {
            needed: 100,
            got: series.len(),
        });
    }
    let len = libm::ceil(series.len() as f64 * window_fraction) as usize;
    let window = &series[series.len() - len.max(2)..];
    let xs: Vec<f64> = (0..window.len()).map(|t| t as f64).collect();
    let fit = ols(&xs, window)?;
    Ok(SlopeEstimate {
        slope: fit.slope,
        stderr: fit.slope_stderr,
    })
}

/// Analysis settings shared by every run of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub dfa: DfaOptions,
    pub window_fraction: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            dfa: DfaOptions {
                min_box: TRAFFIC_MIN_BOX,
                ..DfaOptions::default()
            },
            window_fraction: DEFAULT_WINDOW_FRACTION,
        }
    }
}

/// One `(beta, run)` cell of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub beta_index: usize,
    pub run_index: usize,
    pub beta: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellResult {
    pub alpha: f64,
    pub alpha_stderr: f64,
    pub growth: SlopeEstimate,
    pub mean_load: f64,
}

/// Every cell of a sweep, seeds derived from `base_seed`.
pub fn plan_cells(betas: &[f64], ensemble: usize, base_seed: u64) -> Vec<Cell> {
    let mut cells = Vec::with_capacity(betas.len() * ensemble);
    for (beta_index, &beta) in betas.iter().enumerate() {
        for run_index in 0..ensemble {
            cells.push(Cell {
                beta_index,
                run_index,
                beta,
                seed: seed::derive(base_seed, beta_index as u64, run_index as u64),
            });
        }
    }
    cells
}

/// Simulates one cell and runs the detrend/DFA/fit pipeline on it.
pub fn run_cell(
    net: &Network,
    template: &SimConfig,
    cell: &Cell,
    opts: &PipelineOptions,
) -> Result<CellResult> {
    let cfg = SimConfig {
        beta: cell.beta,
        seed: cell.seed,
        ..template.clone()
    };
    let out = run_on(net, &cfg)?;
    let values = &out.series.values;
    let growth = growth_slope(values, opts.window_fraction)?;
    let dfa = analyze(values, &opts.dfa)?;
    let fit = dfa.fit.ok_or(Error::Degenerate)?;
    Ok(CellResult {
        alpha: fit.alpha,
        alpha_stderr: fit.alpha_stderr,
        growth,
        mean_load: mean(values),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaEntry {
    pub beta: f64,
    /// Ensemble mean of alpha; `NaN` when every run failed.
    pub alpha: f64,
    /// Standard error of the ensemble mean (the regression error for a
    /// single run).
    pub alpha_stderr: f64,
    pub growth_slope: f64,
    pub growth_stderr: f64,
    pub runs_ok: usize,
    pub runs_failed: usize,
}

impl AlphaEntry {
    pub fn failed(&self) -> bool {
        self.runs_ok == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaCurve {
    pub strategy: Strategy,
    pub entries: Vec<AlphaEntry>,
    pub ensemble_size: usize,
}

/// Reduces per-cell outcomes into a curve. Outcomes may arrive in any order;
/// they are grouped by `beta_index` and reduced in `run_index` order.
pub fn assemble_curve(
    strategy: Strategy,
    betas: &[f64],
    ensemble: usize,
    outcomes: &[(Cell, Result<CellResult>)],
) -> AlphaCurve {
    let mut sorted: Vec<&(Cell, Result<CellResult>)> = outcomes.iter().collect();
    sorted.sort_by_key(|(c, _)| (c.beta_index, c.run_index));
    let entries = betas
        .iter()
        .enumerate()
        .map(|(bi, &beta)| {
            let runs: Vec<&CellResult> = sorted
                .iter()
                .filter(|(c, _)| c.beta_index == bi)
                .filter_map(|(_, r)| r.as_ref().ok())
                .collect();
            let total = sorted.iter().filter(|(c, _)| c.beta_index == bi).count();
            let alphas: Vec<f64> = runs.iter().map(|r| r.alpha).collect();
            let slopes: Vec<f64> = runs.iter().map(|r| r.growth.slope).collect();
            let (alpha_stderr, growth_stderr) = match runs.len() {
                0 => (f64::NAN, f64::NAN),
                1 => (runs[0].alpha_stderr, runs[0].growth.stderr),
                n => {
                    let root = libm::sqrt(n as f64);
                    (sample_std(&alphas) / root, sample_std(&slopes) / root)
                }
            };
            AlphaEntry {
                beta,
                alpha: mean(&alphas),
                alpha_stderr,
                growth_slope: mean(&slopes),
                growth_stderr,
                runs_ok: runs.len(),
                runs_failed: total - runs.len(),
            }
        })
        .collect();
    AlphaCurve {
        strategy,
        entries,
        ensemble_size: ensemble,
    }
}

fn check_betas(betas: &[f64]) -> Result<()> {
    if betas.windows(2).any(|w| w[0] >= w[1]) || betas.iter().any(|b| !(*b >= 0.0)) {
        return Err(Error::InvalidParameter {
            name: "betas",
            reason: "must be non-negative and strictly ascending",
        });
    }
    Ok(())
}

/// Sequential sweep over `betas` with `ensemble` runs each. Seeds derive from
/// `template.seed`; the network is shared by every cell.
pub fn sweep_alpha(
    net: &Network,
    template: &SimConfig,
    betas: &[f64],
    ensemble: usize,
    opts: &PipelineOptions,
) -> Result<AlphaCurve> {
    check_betas(betas)?;
    if ensemble == 0 {
        return Err(Error::InvalidParameter {
            name: "ensemble",
            reason: "must be at least 1",
        });
    }
    let outcomes: Vec<_> = plan_cells(betas, ensemble, template.seed)
        .into_iter()
        .map(|cell| (cell, run_cell(net, template, &cell, opts)))
        .collect();
    Ok(assemble_curve(
        template.strategy,
        betas,
        ensemble,
        &outcomes,
    ))
}

/// `count` log-spaced values in `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => {
            let (a, b) = (libm::log(lo), libm::log(hi));
            (0..count)
                .map(|i| match i {
                    0 => lo,
                    i if i == count - 1 => hi,
                    i => libm::exp(a + (b - a) * i as f64 / (count - 1) as f64),
                })
                .collect()
        }
    }
}

/// `count` evenly spaced values in `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Result of the congestion-threshold search.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaCEstimate {
    pub beta_c: f64,
    /// Final bracket `(congested, free)`.
    pub bracket: (f64, f64),
    /// Every `(beta, congested)` evaluation, in call order.
    pub evaluations: Vec<(f64, bool)>,
    /// `(r - 1) / k_hub` from the hub's measured arrival rate `r` in a run at
    /// the upper bracket end.
    pub hub_estimate: Option<f64>,
}

/// Locates the switch of a decreasing predicate (true below, false above).
///
/// The bracket is first probed at `coarse` evenly spaced interior points; a
/// true value above a false one is reported as non-monotone. Bisection then
/// narrows the bracketing interval to width `tol` and returns its midpoint.
pub fn bisect_threshold<P>(
    mut predicate: P,
    lo: f64,
    hi: f64,
    tol: f64,
    coarse: usize,
) -> Result<(f64, (f64, f64), Vec<(f64, bool)>)>
where
    P: FnMut(f64) -> Result<bool>,
{
    if !(lo < hi) || !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "bracket",
            reason: "need lo < hi and tol > 0",
        });
    }
    let mut evals = Vec::new();
    let mut eval = |b: f64, evals: &mut Vec<(f64, bool)>| -> Result<bool> {
        let v = predicate(b)?;
        evals.push((b, v));
        Ok(v)
    };
    if !eval(lo, &mut evals)? {
        return Err(Error::NoCongestionInBracket(lo));
    }
    if eval(hi, &mut evals)? {
        return Err(Error::CongestedAtUpperBound(hi));
    }
    let (mut a, mut b) = (lo, hi);
    let mut seen_false: Option<f64> = None;
    for beta in linear_grid(lo, hi, coarse + 2)
        .into_iter()
        .skip(1)
        .take(coarse)
    {
        let v = eval(beta, &mut evals)?;
        match (v, seen_false) {
            (true, Some(_)) => return Err(Error::NonMonotonePredicate(beta)),
            (true, None) => a = beta,
            (false, None) => {
                seen_false = Some(beta);
                b = beta;
            }
            (false, Some(_)) => {}
        }
    }
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if eval(mid, &mut evals)? {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok((0.5 * (a + b), (a, b), evals))
}

/// Bisection for the congestion threshold: a run is congested when its
/// growth slope exceeds [`CONGESTION_SIGMAS`] standard errors. Every
/// evaluation reuses `template.seed`, so neighbouring betas see the same
/// random traffic.
pub fn estimate_beta_c(
    net: &Network,
    template: &SimConfig,
    lo: f64,
    hi: f64,
    tol: f64,
    opts: &PipelineOptions,
) -> Result<BetaCEstimate> {
    let congested = |beta: f64| -> Result<bool> {
        let cfg = SimConfig {
            beta,
            ..template.clone()
        };
        let out = run_on(net, &cfg)?;
        Ok(growth_slope(&out.series.values, opts.window_fraction)?.is_congested())
    };
    let (beta_c, bracket, evaluations) = bisect_threshold(congested, lo, hi, tol, 3)?;
    let free = run_on(
        net,
        &SimConfig {
            beta: hi,
            ..template.clone()
        },
    )?;
    let k_hub = net.degree(net.hub_index()) as f64;
    Ok(BetaCEstimate {
        beta_c,
        bracket,
        evaluations,
        hub_estimate: Some((free.hub_arrival_rate - 1.0) / k_hub),
    })
}

/// Congestion threshold read off a sweep: midway between the largest
/// congested grid point and the next grid point above it. Zero when no entry
/// is congested; the top grid value when all are.
///
/// An entry is congested when its growth slope exceeds
/// [`CURVE_CONGESTION_SLOPE`].
pub fn beta_c_from_curve(curve: &AlphaCurve) -> f64 {
    let entries: Vec<&AlphaEntry> = curve.entries.iter().filter(|e| !e.failed()).collect();
    let Some(last) = entries
        .iter()
        .rposition(|e| e.growth_slope > CURVE_CONGESTION_SLOPE)
    else {
        return 0.0;
    };
    match entries.get(last + 1) {
        Some(next) => 0.5 * (entries[last].beta + next.beta),
        None => entries[last].beta,
    }
}

/// Upper edge of the buffer phase.
///
/// The plateau is the top quartile of the beta grid. Scanning down from the
/// largest beta above `beta_c`, the first beta whose alpha exceeds the
/// plateau mean by more than two plateau standard deviations is returned;
/// `beta_c` when there is none.
pub fn detect_beta1(curve: &AlphaCurve, beta_c: f64) -> Result<f64> {
    let entries: Vec<&AlphaEntry> = curve.entries.iter().filter(|e| !e.failed()).collect();
    let above: Vec<&&AlphaEntry> = entries.iter().filter(|e| e.beta > beta_c).collect();
    if above.len() < 5 {
        return Err(Error::TooFewPoints {
            needed: 5,
            got: above.len(),
        });
    }
    let quartile = entries.len().div_ceil(4).max(2);
    let plateau: Vec<f64> = entries[entries.len() - quartile..]
        .iter()
        .map(|e| e.alpha)
        .collect();
    let cutoff = mean(&plateau) + 2.0 * sample_std(&plateau);
    Ok(above
        .iter()
        .rev()
        .find(|e| e.alpha > cutoff)
        .map_or(beta_c, |e| e.beta.max(beta_c)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Free,
    Buffer,
    Congestion,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Free => "free",
            Phase::Buffer => "buffer",
            Phase::Congestion => "congestion",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "free" => Ok(Phase::Free),
            "buffer" => Ok(Phase::Buffer),
            "congestion" => Ok(Phase::Congestion),
            _ => Err(Error::InvalidParameter {
                name: "phase",
                reason: "expected free, buffer or congestion",
            }),
        }
    }
}

/// Congestion for `beta <= beta_c`, buffer for `beta_c < beta <= beta_1`,
/// free above.
pub fn classify(beta: f64, beta_c: f64, beta_1: f64) -> Result<Phase> {
    if beta_c > beta_1 {
        return Err(Error::InvalidParameter {
            name: "beta_c",
            reason: "must not exceed beta_1",
        });
    }
    Ok(if beta <= beta_c {
        Phase::Congestion
    } else if beta <= beta_1 {
        Phase::Buffer
    } else {
        Phase::Free
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseReport {
    pub strategy: Strategy,
    pub beta_c: f64,
    pub beta_1: f64,
    pub labels: Vec<(f64, Phase)>,
}

/// Thresholds and per-entry labels for a curve. `beta_c` defaults to
/// [`beta_c_from_curve`].
pub fn phase_report(curve: &AlphaCurve, beta_c: Option<f64>) -> Result<PhaseReport> {
    let beta_c = beta_c.unwrap_or_else(|| beta_c_from_curve(curve));
    let beta_1 = detect_beta1(curve, beta_c)?;
    let labels = curve
        .entries
        .iter()
        .map(|e| classify(e.beta, beta_c, beta_1).map(|p| (e.beta, p)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseReport {
        strategy: curve.strategy,
        beta_c,
        beta_1,
        labels,
    })
}
