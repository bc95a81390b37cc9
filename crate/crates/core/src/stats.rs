//! Small-sample statistics shared by the DFA and phase code.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    /// Standard error of the slope; zero for an exact fit or two points.
    pub slope_stderr: f64,
    /// Residual sum of squares.
    pub ssr: f64,
}

impl LineFit {
    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator). Zero for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mu = mean(values);
    let ss: f64 = values.iter().map(|v| (v - mu) * (v - mu)).sum();
    libm::sqrt(ss / (values.len() - 1) as f64)
}

/// Least-squares line through `(xs[i], ys[i])`, centred for numerical stability.
pub fn ols(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    let n = xs.len();
    if n != ys.len() {
        return Err(Error::InvalidParameter {
            name: "ys",
            reason: "length differs from xs",
        });
    }
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        sxx += dx * dx;
        sxy += dx * (y - my);
    }
    if sxx <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "xs",
            reason: "all abscissae equal",
        });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let slope_stderr = if n > 2 {
        libm::sqrt(ssr / (n - 2) as f64 / sxx)
    } else {
        0.0
    };
    Ok(LineFit {
        intercept,
        slope,
        slope_stderr,
        ssr,
    })
}

/// Least-squares line against the implicit abscissa `0, 1, ..., n-1`.
pub fn ols_indexed(ys: &[f64]) -> Result<LineFit> {
    let xs: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
    ols(&xs, ys)
}

/// Ranks with ties resolved to their average rank (1-based).
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = alloc::vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation. `NaN` when either side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let mx = mean(&rx);
    let my = mean(&ry);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / libm::sqrt(sxx * syy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_recovers_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 + 2.0 * x).collect();
        let fit = ols(&xs, &ys).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-14);
        assert!((fit.intercept - 3.0).abs() < 1e-14);
        assert!(fit.slope_stderr < 1e-14);
    }

    #[test]
    fn ols_stderr_matches_textbook() {
        // y = [1, 3, 2, 5], x = [0..4): slope 1.1, ssr 2.7, sxx 5.
        let fit = ols_indexed(&[1.0, 3.0, 2.0, 5.0]).unwrap();
        assert!((fit.slope - 1.1).abs() < 1e-12);
        assert!((fit.ssr - 2.7).abs() < 1e-12);
        assert!((fit.slope_stderr - libm::sqrt(2.7 / 2.0 / 5.0)).abs() < 1e-12);
    }

    #[test]
    fn ols_rejects_degenerate_input() {
        assert!(ols(&[1.0], &[1.0]).is_err());
        assert!(ols(&[2.0, 2.0], &[1.0, 3.0]).is_err());
    }

    #[test]
    fn spearman_handles_ties_and_direction() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[9.0, 5.0, 1.0]) + 1.0).abs() < 1e-12);
        let rho = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0, 2.0, 3.0]);
        assert!(rho > 0.9 && rho < 1.0);
        assert!(spearman(&[1.0, 2.0], &[4.0, 4.0]).is_nan());
    }

    #[test]
    fn sample_std_small_inputs() {
        assert_eq!(sample_std(&[3.0]), 0.0);
        assert!((sample_std(&[1.0, 3.0]) - libm::sqrt(2.0)).abs() < 1e-15);
    }
}
