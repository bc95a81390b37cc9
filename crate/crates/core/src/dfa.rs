//! Detrended fluctuation analysis (order-1).
//!
//! The pipeline is: subtract the full-series least-squares line, integrate
//! the mean-subtracted signal into a profile, split the profile into boxes of
//! size `m` from both ends, remove a least-squares line from every box, and
//! take the rms of what is left. The scaling exponent `alpha` is the log-log
//! slope of `F(m)` below an optional crossover.

use alloc::vec::Vec;

use crate::stats::{ols, ols_indexed};
use crate::{Error, Result};

pub const MIN_SIGNAL_LEN: usize = 16;
pub const MIN_BOX: usize = 4;
pub const DEFAULT_GRID_POINTS: usize = 20;
/// A breakpoint must cut the single-line residual by at least this fraction.
pub const CROSSOVER_MIN_REDUCTION: f64 = 0.2;
/// A breakpoint must also change the log-log slope by at least this much.
/// The small-box bias of order-1 detrending bends white-noise curves by less.
pub const CROSSOVER_MIN_SLOPE_CHANGE: f64 = 0.3;
/// Below this every fluctuation is treated as zero.
pub const DEGENERATE_F: f64 = 1e-9;

/// A sampled signal of at least [`MIN_SIGNAL_LEN`] finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal(Vec<f64>);

impl Signal {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < MIN_SIGNAL_LEN {
            return Err(Error::SignalTooShort {
                len: values.len(),
                min: MIN_SIGNAL_LEN,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "signal",
                reason: "contains non-finite values",
            });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn detrended(&self) -> Self {
        // Length >= 16 so the fit cannot fail.
        Self(remove_global_trend(&self.0).expect("signal long enough"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluctuationPoint {
    pub m: usize,
    pub f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub alpha: f64,
    pub alpha_stderr: f64,
    pub fit_range: (usize, usize),
    pub points_used: usize,
    /// Points inside the range dropped because `F <= 0`.
    pub points_excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DfaResult {
    /// Ascending in `m`.
    pub points: Vec<FluctuationPoint>,
    pub fit: Option<ScalingFit>,
    pub crossover: Option<usize>,
    /// Set when every `F(m)` is below [`DEGENERATE_F`].
    pub degenerate: bool,
}

impl DfaResult {
    pub fn alpha(&self) -> Option<f64> {
        self.fit.map(|f| f.alpha)
    }
}

/// `s(j) - (a + b j)` for the least-squares line `(a, b)` of the whole series.
pub fn remove_global_trend(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::SignalTooShort {
            len: values.len(),
            min: 2,
        });
    }
    let line = ols_indexed(values)?;
    Ok(values
        .iter()
        .enumerate()
        .map(|(j, v)| v - line.at(j as f64))
        .collect())
}

/// Cumulative sum of the mean-subtracted signal. The last entry is zero up to
/// rounding.
pub fn integrate_profile(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v - mean;
            Some(*acc)
        })
        .collect()
}

/// Sum of squared residuals after removing the least-squares line from `seg`.
fn box_residual_ss(seg: &[f64]) -> f64 {
    let m = seg.len() as f64;
    let x_mean = (m - 1.0) / 2.0;
    let sxx = m * (m * m - 1.0) / 12.0;
    let y_mean = seg.iter().sum::<f64>() / m;
    let sxy: f64 = seg
        .iter()
        .enumerate()
        .map(|(x, y)| (x as f64 - x_mean) * (y - y_mean))
        .sum();
    let slope = sxy / sxx;
    seg.iter()
        .enumerate()
        .map(|(x, y)| {
            let r = (y - y_mean) - slope * (x as f64 - x_mean);
            r * r
        })
        .sum()
}

/// Largest admissible box size for a profile of length `len`.
pub fn max_box(len: usize) -> usize {
    len / 4
}

/// Rms fluctuation of the profile around box-wise linear trends.
///
/// `floor(N / m)` boxes are laid from the left and the same number from the
/// right, so a tail remainder is still covered; the rms is over all
/// `2 * floor(N / m) * m` boxed samples.
pub fn fluctuation(profile: &[f64], m: usize) -> Result<f64> {
    let n = profile.len();
    if m < MIN_BOX || m > max_box(n) {
        return Err(Error::BoxSizeOutOfRange {
            m,
            min: MIN_BOX,
            max: max_box(n),
        });
    }
    let boxes = n / m;
    let mut ss = 0.0;
    for b in 0..boxes {
        ss += box_residual_ss(&profile[b * m..(b + 1) * m]);
    }
    for b in 0..boxes {
        let end = n - b * m;
        ss += box_residual_ss(&profile[end - m..end]);
    }
    Ok(libm::sqrt(ss / (2 * boxes * m) as f64))
}

/// About `count` log-spaced box sizes in `[4, len / 4]`, rounded and
/// deduplicated.
pub fn default_box_sizes(len: usize, count: usize) -> Vec<usize> {
    log_box_sizes(MIN_BOX, max_box(len), count)
}

/// About `count` log-spaced integers in `[lo, hi]`, rounded and deduplicated.
/// Empty when `hi < lo`.
pub fn log_box_sizes(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    if hi < lo || lo == 0 {
        return Vec::new();
    }
    if hi == lo || count < 2 {
        return alloc::vec![lo];
    }
    let (lo_log, hi_log) = (libm::log(lo as f64), libm::log(hi as f64));
    let mut sizes: Vec<usize> = (0..count)
        .map(|i| {
            let t = i as f64 / (count - 1) as f64;
            let m = libm::round(libm::exp(lo_log + t * (hi_log - lo_log))) as usize;
            m.clamp(lo, hi)
        })
        .collect();
    sizes.dedup();
    sizes
}

/// `F(m)` for every requested box size. The signal is integrated as given;
/// global trend removal is the caller's choice (see [`analyze`]).
pub fn dfa(sig: &Signal, box_sizes: &[usize]) -> Result<DfaResult> {
    if box_sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::BoxSizesNotAscending);
    }
    let profile = integrate_profile(sig.values());
    let points = box_sizes
        .iter()
        .map(|&m| fluctuation(&profile, m).map(|f| FluctuationPoint { m, f }))
        .collect::<Result<Vec<_>>>()?;
    let degenerate = points.iter().all(|p| p.f < DEGENERATE_F);
    Ok(DfaResult {
        points,
        fit: None,
        crossover: None,
        degenerate,
    })
}

/// Least-squares slope of `log10 F` on `log10 m` over points with
/// `m_min <= m <= m_max`. Points with `F <= 0` are skipped and counted.
pub fn fit_scaling(points: &[FluctuationPoint], fit_range: (usize, usize)) -> Result<ScalingFit> {
    let (lo, hi) = fit_range;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded = 0;
    for p in points.iter().filter(|p| p.m >= lo && p.m <= hi) {
        if p.f > 0.0 && p.f.is_finite() {
            xs.push(libm::log10(p.m as f64));
            ys.push(libm::log10(p.f));
        } else {
            excluded += 1;
        }
    }
    if xs.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: xs.len(),
        });
    }
    let line = ols(&xs, &ys)?;
    Ok(ScalingFit {
        alpha: line.slope,
        alpha_stderr: line.slope_stderr,
        fit_range,
        points_used: xs.len(),
        points_excluded: excluded,
    })
}

/// Continuous two-segment least-squares fit in log-log coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hinge {
    /// Box size at the kink.
    pub m: usize,
    pub left_slope: f64,
    pub right_slope: f64,
    pub ssr: f64,
    /// Residual sum of squares of a single line through the same points.
    pub single_ssr: f64,
}

/// Fits a kink at `xs[k]`; returns `(ssr, left slope, right slope)`.
fn hinge_fit(xs: &[f64], ys: &[f64], k: usize) -> (f64, f64, f64) {
    let xk = xs[k];
    // Normal equations for y = c + a * min(x - xk, 0) + b * max(x - xk, 0).
    let mut ata = [[0.0f64; 3]; 3];
    let mut aty = [0.0f64; 3];
    for (x, y) in xs.iter().zip(ys) {
        let row = [1.0, (x - xk).min(0.0), (x - xk).max(0.0)];
        for i in 0..3 {
            aty[i] += row[i] * y;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let Some(coef) = solve3(ata, aty) else {
        return (f64::INFINITY, f64::NAN, f64::NAN);
    };
    let ssr = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let fit = coef[0] + coef[1] * (x - xk).min(0.0) + coef[2] * (x - xk).max(0.0);
            (y - fit) * (y - fit)
        })
        .sum();
    (ssr, coef[1], coef[2])
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = ((row + 1)..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Best continuous two-segment fit over candidate kinks at observed `m`
/// values leaving at least three points on each side (the kink counts for
/// both). Points with `F <= 0` are ignored.
pub fn best_hinge(points: &[FluctuationPoint]) -> Result<Hinge> {
    let usable: Vec<&FluctuationPoint> = points.iter().filter(|p| p.f > 0.0).collect();
    if usable.len() < 6 {
        return Err(Error::TooFewPoints {
            needed: 6,
            got: usable.len(),
        });
    }
    let xs: Vec<f64> = usable.iter().map(|p| libm::log10(p.m as f64)).collect();
    let ys: Vec<f64> = usable.iter().map(|p| libm::log10(p.f)).collect();
    let single_ssr = ols(&xs, &ys)?.ssr;
    let n = xs.len();
    let (k, (ssr, left_slope, right_slope)) = (2..n - 2)
        .map(|k| (k, hinge_fit(&xs, &ys, k)))
        .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .expect("at least two candidate kinks");
    Ok(Hinge {
        m: usable[k].m,
        left_slope,
        right_slope,
        ssr,
        single_ssr,
    })
}

/// Box size at which `log F` vs `log m` bends, if any.
///
/// The best [`Hinge`] is accepted when it cuts the single-line residual by at
/// least [`CROSSOVER_MIN_REDUCTION`] and the two slopes differ by at least
/// [`CROSSOVER_MIN_SLOPE_CHANGE`].
pub fn detect_crossover(points: &[FluctuationPoint]) -> Result<Option<usize>> {
    let hinge = best_hinge(points)?;
    if hinge.single_ssr <= 1e-20 {
        return Ok(None);
    }
    let reduces = hinge.ssr <= (1.0 - CROSSOVER_MIN_REDUCTION) * hinge.single_ssr;
    let bends = (hinge.left_slope - hinge.right_slope).abs() >= CROSSOVER_MIN_SLOPE_CHANGE;
    Ok((reduces && bends).then_some(hinge.m))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DfaOptions {
    /// Subtract the full-series least-squares line before integrating.
    pub remove_global_trend: bool,
    /// Explicit box sizes; `None` uses a log-spaced grid from `min_box` to
    /// `len / 4`.
    pub box_sizes: Option<Vec<usize>>,
    pub min_box: usize,
    pub grid_points: usize,
    /// Fit only below a detected crossover.
    pub detect_crossover: bool,
}

impl Default for DfaOptions {
    fn default() -> Self {
        Self {
            remove_global_trend: true,
            box_sizes: None,
            min_box: MIN_BOX,
            grid_points: DEFAULT_GRID_POINTS,
            detect_crossover: true,
        }
    }
}

/// Full pipeline: optional global detrending, `F(m)` on the box grid,
/// crossover detection and the scaling fit on `[m_min, m*]` (or the whole
/// range without a crossover). Degenerate inputs come back with `fit: None`.
pub fn analyze(values: &[f64], opts: &DfaOptions) -> Result<DfaResult> {
    let mut sig = Signal::new(values.to_vec())?;
    if opts.remove_global_trend {
        sig = sig.detrended();
    }
    let sizes = match &opts.box_sizes {
        Some(s) => s.clone(),
        None => log_box_sizes(
            opts.min_box.max(MIN_BOX),
            max_box(sig.len()),
            opts.grid_points,
        ),
    };
    let mut result = dfa(&sig, &sizes)?;
    if result.degenerate {
        return Ok(result);
    }
    let (Some(first), Some(last)) = (result.points.first(), result.points.last()) else {
        return Err(Error::TooFewPoints { needed: 3, got: 0 });
    };
    let (m_min, m_max) = (first.m, last.m);
    result.crossover = if opts.detect_crossover && result.points.len() >= 6 {
        detect_crossover(&result.points)?
    } else {
        None
    };
    let upper = result.crossover.unwrap_or(m_max);
    result.fit = Some(fit_scaling(&result.points, (m_min, upper))?);
    Ok(result)
}
