//! Built-in calibration suite behind `traffic-dfa validate`.
//!
//! The DFA checks route every fluctuation evaluation through
//! [`Hooks::fluctuation`] so that a deliberately broken estimator can be
//! swapped in and shown to fail the suite.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use traffic_dfa_core::dfa::{
    default_box_sizes, detect_crossover, fit_scaling, fluctuation, integrate_profile,
    remove_global_trend, FluctuationPoint, DEFAULT_GRID_POINTS,
};
use traffic_dfa_core::graph::{generate_scale_free, Network};
use traffic_dfa_core::phase::PipelineOptions;
use traffic_dfa_core::stats::mean;
use traffic_dfa_core::traffic::{
    route_echenique, route_zhang, run_on, SimConfig, SimState, Strategy,
};
use traffic_dfa_core::Result as CoreResult;

use crate::sweep::{run_sweep, SweepJob, CURVE_NAME};
use crate::ExitCode;

pub type FluctuationFn = fn(&[f64], usize) -> CoreResult<f64>;

#[derive(Debug, Clone, Copy)]
pub struct Hooks {
    pub fluctuation: FluctuationFn,
}

impl Default for Hooks {
    fn default() -> Self {
        Self { fluctuation }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub measured: String,
    pub expected: &'static str,
    pub pass: bool,
}

fn check(
    name: &'static str,
    expected: &'static str,
    outcome: Result<(String, bool), String>,
) -> Check {
    let (measured, pass) = outcome.unwrap_or_else(|e| (format!("error: {e}"), false));
    Check {
        name,
        measured,
        expected,
        pass,
    }
}

/// Runs every check.
pub fn run(hooks: &Hooks) -> Vec<Check> {
    vec![
        check(
            "dfa.white_noise",
            "mean alpha in [0.47, 0.53]",
            white_noise(hooks),
        ),
        check(
            "dfa.brownian",
            "mean alpha in [1.40, 1.60]",
            brownian(hooks),
        ),
        check(
            "dfa.reference",
            "rel. diff <= 1e-9",
            reference_agreement(hooks),
        ),
        check(
            "dfa.scale_equivariance",
            "rel. diff <= 1e-12",
            scale_equivariance(hooks),
        ),
        check(
            "traffic.conservation",
            "created = delivered + queued",
            conservation(),
        ),
        check("traffic.fifo", "queues keep arrival order", fifo()),
        check("routing.echenique_h1", "shortest-path hop", echenique_h1()),
        check("routing.zhang_empty", "distance decreases", zhang_empty()),
        check("repro.simulate", "bit-identical", simulate_repro()),
        check("repro.sweep", "byte-identical curves", sweep_repro()),
    ]
}

pub fn exit_code(checks: &[Check]) -> ExitCode {
    if checks.iter().all(|c| c.pass) {
        ExitCode::Success
    } else {
        ExitCode::ChecksFailed
    }
}

pub fn render_table(checks: &[Check]) -> String {
    let w_name = checks
        .iter()
        .map(|c| c.name.len())
        .max()
        .unwrap_or(0)
        .max(5);
    let w_meas = checks
        .iter()
        .map(|c| c.measured.len())
        .max()
        .unwrap_or(0)
        .max(8);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<w_name$}  {:<4}  {:<w_meas$}  expected",
        "check", "", "measured"
    );
    for c in checks {
        let verdict = if c.pass { "PASS" } else { "FAIL" };
        let _ = writeln!(
            out,
            "{:<w_name$}  {verdict}  {:<w_meas$}  {}",
            c.name, c.measured, c.expected
        );
    }
    let passed = checks.iter().filter(|c| c.pass).count();
    let _ = writeln!(out, "{passed}/{} checks passed", checks.len());
    out
}

/// Detrend, integrate, `F(m)` through the hook, crossover and fit.
fn hooked_points(hooks: &Hooks, values: &[f64]) -> CoreResult<Vec<FluctuationPoint>> {
    let profile = integrate_profile(&remove_global_trend(values)?);
    default_box_sizes(values.len(), DEFAULT_GRID_POINTS)
        .into_iter()
        .map(|m| (hooks.fluctuation)(&profile, m).map(|f| FluctuationPoint { m, f }))
        .collect()
}

fn hooked_alpha(hooks: &Hooks, values: &[f64]) -> CoreResult<f64> {
    let points = hooked_points(hooks, values)?;
    let upper = detect_crossover(&points)?.unwrap_or(points[points.len() - 1].m);
    Ok(fit_scaling(&points, (points[0].m, upper))?.alpha)
}

fn gaussian(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn mean_alpha(
    hooks: &Hooks,
    count: usize,
    seed: u64,
    make: impl Fn(&mut ChaCha8Rng) -> Vec<f64>,
) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alphas = (0..count)
        .map(|_| hooked_alpha(hooks, &make(&mut rng)))
        .collect::<CoreResult<Vec<f64>>>()
        .map_err(|e| e.to_string())?;
    Ok(mean(&alphas))
}

fn white_noise(hooks: &Hooks) -> Result<(String, bool), String> {
    let a = mean_alpha(hooks, 50, 1001, |rng| gaussian(1 << 14, rng))?;
    Ok((format!("{a:.4}"), (0.47..=0.53).contains(&a)))
}

fn brownian(hooks: &Hooks) -> Result<(String, bool), String> {
    let a = mean_alpha(hooks, 20, 1002, |rng| {
        gaussian(1 << 16, rng)
            .into_iter()
            .scan(0.0, |acc, v| {
                *acc += v;
                Some(*acc)
            })
            .collect()
    })?;
    Ok((format!("{a:.4}"), (1.40..=1.60).contains(&a)))
}

/// Straightforward DFA-1: explicit profile, normal-equation line per box,
/// boxes from both ends.
fn reference_fluctuation(signal: &[f64], m: usize) -> f64 {
    let n = signal.len();
    let avg = signal.iter().sum::<f64>() / n as f64;
    let profile: Vec<f64> = signal
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s - avg;
            Some(*acc)
        })
        .collect();
    let boxes = n / m;
    let starts = (0..boxes)
        .map(|b| b * m)
        .chain((0..boxes).map(|b| n - (b + 1) * m));
    let mut ss = 0.0;
    for start in starts {
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..m {
            let (x, y) = (i as f64, profile[start + i]);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let mf = m as f64;
        let b = (mf * sxy - sx * sy) / (mf * sxx - sx * sx);
        let a = (sy - b * sx) / mf;
        for i in 0..m {
            let r = profile[start + i] - (a + b * i as f64);
            ss += r * r;
        }
    }
    (ss / (2 * boxes * m) as f64).sqrt()
}

fn reference_agreement(hooks: &Hooks) -> Result<(String, bool), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let mut worst: f64 = 0.0;
    for n in [1000, 4099, 777] {
        let sig = gaussian(n, &mut rng);
        let detrended = remove_global_trend(&sig).map_err(|e| e.to_string())?;
        for p in hooked_points(hooks, &sig).map_err(|e| e.to_string())? {
            let r = reference_fluctuation(&detrended, p.m);
            worst = worst.max((p.f - r).abs() / r);
        }
    }
    Ok((format!("{worst:.2e}"), worst <= 1e-9))
}

fn scale_equivariance(hooks: &Hooks) -> Result<(String, bool), String> {
    let base: Vec<f64> = (0..4096)
        .map(|j| {
            let t = j as f64;
            (t * 0.013).sin() + 0.5 * (t * 0.0021).cos() + 0.25 * (t * 0.17).sin()
        })
        .collect();
    let mut worst: f64 = 0.0;
    for c in [3.7, 0.01, 250.0] {
        let scaled: Vec<f64> = base.iter().map(|v| c * v).collect();
        let p0 = hooked_points(hooks, &base).map_err(|e| e.to_string())?;
        let p1 = hooked_points(hooks, &scaled).map_err(|e| e.to_string())?;
        for (a, b) in p0.iter().zip(&p1) {
            worst = worst.max((b.f - c * a.f).abs() / (c * a.f));
        }
        let a0 = hooked_alpha(hooks, &base).map_err(|e| e.to_string())?;
        let a1 = hooked_alpha(hooks, &scaled).map_err(|e| e.to_string())?;
        worst = worst.max((a1 - a0).abs() / a0.abs());
    }
    Ok((format!("{worst:.2e}"), worst <= 1e-12))
}

fn small_config(strategy: Strategy, n: usize, seed: u64) -> SimConfig {
    SimConfig {
        strategy,
        lambda: 0.05,
        beta: 0.05,
        n_nodes: n,
        links_per_new_node: 2,
        seed,
        ..SimConfig::default()
    }
}

fn conservation() -> Result<(String, bool), String> {
    let mut steps = 0;
    for (i, strategy) in Strategy::ALL.into_iter().enumerate() {
        let net = generate_scale_free(100, 2, 2000 + i as u64).map_err(|e| e.to_string())?;
        let cfg = small_config(strategy, 100, 2100 + i as u64);
        let mut state = SimState::new(100, cfg.seed);
        for _ in 0..10_000 {
            let stats = state.step(&net, &cfg);
            steps += 1;
            if stats.queued != state.total_queued()
                || state.created_total() != state.delivered_total() + state.total_queued()
            {
                return Ok((format!("violated at step {}", state.clock()), false));
            }
        }
    }
    Ok((format!("{steps} steps"), true))
}

fn fifo() -> Result<(String, bool), String> {
    let mut steps = 0;
    for (i, strategy) in Strategy::ALL.into_iter().enumerate() {
        let net = generate_scale_free(60, 2, 3000 + i as u64).map_err(|e| e.to_string())?;
        let cfg = small_config(strategy, 60, 3100 + i as u64);
        let mut state = SimState::new(60, cfg.seed);
        for _ in 0..2000 {
            let before: Vec<Vec<_>> = (0..60)
                .map(|v| state.queue(v).iter().copied().collect())
                .collect();
            state.step(&net, &cfg);
            steps += 1;
            for (v, old) in before.iter().enumerate() {
                let now: Vec<_> = state.queue(v).iter().copied().collect();
                let kept = (1..=old.len())
                    .any(|s| now.len() >= old.len() - s && now[..old.len() - s] == old[s..]);
                if !old.is_empty() && !kept {
                    return Ok((format!("node {v} at step {}", state.clock()), false));
                }
            }
        }
    }
    Ok((format!("{steps} steps"), true))
}

fn random_fixture(net: &Network, rng: &mut ChaCha8Rng) -> (Vec<u32>, usize, usize) {
    let n = net.node_count();
    let loads = (0..n).map(|_| rng.random_range(0..50)).collect();
    let at = rng.random_range(0..n);
    let dest = (at + rng.random_range(1..n)) % n;
    (loads, at, dest)
}

fn echenique_h1() -> Result<(String, bool), String> {
    let net = generate_scale_free(200, 3, 4000).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4001);
    for i in 0..1000 {
        let (loads, at, dest) = random_fixture(&net, &mut rng);
        let hop = route_echenique(&net, &loads, at, dest, 0.1, 1.0, &mut rng);
        if !net.shortest_next_hops(at, dest).any(|v| v == hop) {
            return Ok((format!("fixture {i} left the shortest paths"), false));
        }
    }
    Ok(("1000 fixtures".into(), true))
}

fn zhang_empty() -> Result<(String, bool), String> {
    let net = generate_scale_free(200, 3, 5000).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5001);
    let loads = vec![0; 200];
    for i in 0..1000 {
        let (_, at, dest) = random_fixture(&net, &mut rng);
        let hop = route_zhang(&net, &loads, at, dest, 0.1, &mut rng);
        if net.distance(hop, dest) + 1 != net.distance(at, dest) {
            return Ok((format!("fixture {i} moved away"), false));
        }
    }
    Ok(("1000 fixtures".into(), true))
}

fn simulate_repro() -> Result<(String, bool), String> {
    let cfg = SimConfig {
        steps: 2000,
        warmup: 200,
        ..small_config(Strategy::Echenique, 200, 6000)
    };
    let net = cfg.build_network().map_err(|e| e.to_string())?;
    let bits = |cfg: &SimConfig| -> Result<Vec<u64>, String> {
        let out = run_on(&net, cfg).map_err(|e| e.to_string())?;
        Ok(out.series.values.iter().map(|v| v.to_bits()).collect())
    };
    let reference = bits(&cfg)?;
    // The same run on a separate thread, concurrently with another one.
    let (a, b) = std::thread::scope(|s| {
        let a = s.spawn(|| bits(&cfg));
        let b = s.spawn(|| bits(&cfg));
        (
            a.join().expect("run panicked"),
            b.join().expect("run panicked"),
        )
    });
    let same = a? == reference && b? == reference;
    Ok((format!("{} values x3", reference.len()), same))
}

struct ScratchDir(PathBuf);

impl ScratchDir {
    fn new() -> std::io::Result<Self> {
        let nanos = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_nanos());
        let dir = std::env::temp_dir().join(format!(
            "traffic-dfa-validate-{}-{nanos}",
            std::process::id()
        ));
        std::fs::create_dir_all(&dir)?;
        Ok(Self(dir))
    }
}

impl Drop for ScratchDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn sweep_repro() -> Result<(String, bool), String> {
    let template = SimConfig {
        steps: 1500,
        warmup: 100,
        ..small_config(Strategy::Zhang, 150, 7000)
    };
    let net = template.build_network().map_err(|e| e.to_string())?;
    let scratch = ScratchDir::new().map_err(|e| e.to_string())?;
    let job = |workers, max_cells| SweepJob {
        net: &net,
        template: template.clone(),
        betas: vec![0.02, 0.1, 0.3],
        ensemble: 2,
        opts: PipelineOptions::default(),
        workers,
        max_cells,
    };
    let curve = |name: &str, runs: &[(usize, Option<usize>)]| -> Result<Vec<u8>, String> {
        let dir = scratch.0.join(name);
        for &(workers, max_cells) in runs {
            run_sweep(&job(workers, max_cells), &dir).map_err(|e| e.to_string())?;
        }
        std::fs::read(dir.join(CURVE_NAME)).map_err(|e| e.to_string())
    };
    let one = curve("w1", &[(1, None)])?;
    let three = curve("w3", &[(3, None)])?;
    let resumed = curve("resumed", &[(2, Some(2)), (3, Some(1)), (1, None)])?;
    Ok((
        "workers 1/3, resumed".into(),
        one == three && one == resumed,
    ))
}
