//! Flat `key = value` configuration files and command-line overrides.
//!
//! ```text
//! # liu sweep
//! strategy = liu
//! lambda = 0.01
//! betas = 0.02:0.2:25:lin
//! ensemble = 10
//! ```
//!
//! Keys: `strategy lambda beta h nodes links steps warmup seed betas ensemble
//! workers min_box detrend`. Unknown keys and ill-typed values are errors.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde_json::json;
use traffic_dfa_core::phase::{linear_grid, log_grid, DEFAULT_ENSEMBLE, DEFAULT_GRID};
use traffic_dfa_core::traffic::{SimConfig, Strategy};

use crate::CliError;

/// `lo:hi:count[:log|:lin]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaGrid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub log: bool,
}

impl Default for BetaGrid {
    fn default() -> Self {
        let (lo, hi, count) = DEFAULT_GRID;
        Self {
            lo,
            hi,
            count,
            log: false,
        }
    }
}

impl BetaGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.log {
            log_grid(self.lo, self.hi, self.count)
        } else {
            linear_grid(self.lo, self.hi, self.count)
        }
    }
}

impl FromStr for BetaGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.trim().split(':').map(str::trim).collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(format!("`{s}`: expected lo:hi:count[:log|:lin]"));
        }
        let lo: f64 = parts[0]
            .parse()
            .map_err(|_| format!("`{}` is not a number", parts[0]))?;
        let hi: f64 = parts[1]
            .parse()
            .map_err(|_| format!("`{}` is not a number", parts[1]))?;
        let count: usize = parts[2]
            .parse()
            .map_err(|_| format!("`{}` is not a count", parts[2]))?;
        let log = match parts.get(3) {
            None | Some(&"lin") => false,
            Some(&"log") => true,
            Some(other) => return Err(format!("`{other}`: expected log or lin")),
        };
        if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || count == 0 {
            return Err(format!("`{s}`: need finite lo >= 0 and count >= 1"));
        }
        if count > 1 && lo >= hi {
            return Err(format!("`{s}`: lo must be below hi"));
        }
        if log && lo <= 0.0 {
            return Err(format!("`{s}`: a log grid needs lo > 0"));
        }
        Ok(Self { lo, hi, count, log })
    }
}

impl fmt::Display for BetaGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = if self.log { "log" } else { "lin" };
        write!(f, "{}:{}:{}:{}", self.lo, self.hi, self.count, kind)
    }
}

/// Partially specified settings, from a file or from flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub strategy: Option<Strategy>,
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub h: Option<f64>,
    pub nodes: Option<usize>,
    pub links: Option<usize>,
    pub steps: Option<u64>,
    pub warmup: Option<u64>,
    pub seed: Option<u64>,
    pub betas: Option<BetaGrid>,
    pub ensemble: Option<usize>,
    pub workers: Option<usize>,
    pub min_box: Option<usize>,
    pub detrend: Option<bool>,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("`{key}`: cannot parse `{value}`"))
}

impl Settings {
    /// Sets one key. Errors name the key and the offending value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "strategy" => self.strategy = Some(parse_value(key, value)?),
            "lambda" => self.lambda = Some(parse_value(key, value)?),
            "beta" => self.beta = Some(parse_value(key, value)?),
            "h" => self.h = Some(parse_value(key, value)?),
            "nodes" => self.nodes = Some(parse_value(key, value)?),
            "links" => self.links = Some(parse_value(key, value)?),
            "steps" => self.steps = Some(parse_value(key, value)?),
            "warmup" => self.warmup = Some(parse_value(key, value)?),
            "seed" => self.seed = Some(parse_value(key, value)?),
            "betas" => self.betas = Some(value.parse()?),
            "ensemble" => self.ensemble = Some(parse_value(key, value)?),
            "workers" => self.workers = Some(parse_value(key, value)?),
            "min_box" => self.min_box = Some(parse_value(key, value)?),
            "detrend" => self.detrend = Some(parse_value(key, value)?),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        let mut out = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fail = |reason: String| CliError::Parse {
                path: path.into(),
                line: i + 1,
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| fail("expected `key = value`".into()))?;
            out.set(key.trim(), value.trim()).map_err(fail)?;
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Fields set in `over` win.
    pub fn overlay(self, over: Settings) -> Settings {
        Settings {
            strategy: over.strategy.or(self.strategy),
            lambda: over.lambda.or(self.lambda),
            beta: over.beta.or(self.beta),
            h: over.h.or(self.h),
            nodes: over.nodes.or(self.nodes),
            links: over.links.or(self.links),
            steps: over.steps.or(self.steps),
            warmup: over.warmup.or(self.warmup),
            seed: over.seed.or(self.seed),
            betas: over.betas.or(self.betas),
            ensemble: over.ensemble.or(self.ensemble),
            workers: over.workers.or(self.workers),
            min_box: over.min_box.or(self.min_box),
            detrend: over.detrend.or(self.detrend),
        }
    }

    /// Fills defaults and validates.
    pub fn resolve(self) -> Result<Resolved, CliError> {
        let d = SimConfig::default();
        let sim = SimConfig {
            strategy: self.strategy.unwrap_or(d.strategy),
            lambda: self.lambda.unwrap_or(d.lambda),
            beta: self.beta.unwrap_or(d.beta),
            h: self.h.unwrap_or(d.h),
            steps: self.steps.unwrap_or(d.steps),
            warmup: self.warmup.unwrap_or(d.warmup),
            seed: self.seed.unwrap_or(d.seed),
            n_nodes: self.nodes.unwrap_or(d.n_nodes),
            links_per_new_node: self.links.unwrap_or(d.links_per_new_node),
        };
        sim.validate()?;
        let resolved = Resolved {
            sim,
            betas: self.betas.unwrap_or_default(),
            ensemble: self.ensemble.unwrap_or(DEFAULT_ENSEMBLE),
            workers: self.workers.unwrap_or(1),
            min_box: self.min_box,
            detrend: self.detrend.unwrap_or(true),
        };
        if resolved.ensemble == 0 {
            return Err(CliError::Usage("`ensemble` must be at least 1".into()));
        }
        if resolved.workers == 0 {
            return Err(CliError::Usage("`workers` must be at least 1".into()));
        }
        if resolved.min_box.is_some_and(|m| m < 2) {
            return Err(CliError::Usage("`min_box` must be at least 2".into()));
        }
        Ok(resolved)
    }
}

/// Fully specified settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub sim: SimConfig,
    pub betas: BetaGrid,
    pub ensemble: usize,
    pub workers: usize,
    /// Smallest DFA box; each command has its own default.
    pub min_box: Option<usize>,
    pub detrend: bool,
}

impl Resolved {
    /// Every key, in config-file form. Feeding this back through
    /// [`Settings::parse`] reproduces `self`. `workers` is left out because
    /// it never changes a result.
    pub fn to_config_text(&self) -> String {
        let s = &self.sim;
        let mut text = format!(
            "strategy = {}\nlambda = {}\nbeta = {}\nh = {}\nnodes = {}\nlinks = {}\n\
             steps = {}\nwarmup = {}\nseed = {}\nbetas = {}\nensemble = {}\n\
             detrend = {}\n",
            s.strategy,
            s.lambda,
            s.beta,
            s.h,
            s.n_nodes,
            s.links_per_new_node,
            s.steps,
            s.warmup,
            s.seed,
            self.betas,
            self.ensemble,
            self.detrend
        );
        if let Some(m) = self.min_box {
            text.push_str(&format!("min_box = {m}\n"));
        }
        text
    }

    pub fn to_json(&self) -> serde_json::Value {
        let s = &self.sim;
        json!({
            "strategy": s.strategy.name(),
            "lambda": s.lambda,
            "beta": s.beta,
            "h": s.h,
            "nodes": s.n_nodes,
            "links": s.links_per_new_node,
            "steps": s.steps,
            "warmup": s.warmup,
            "seed": s.seed,
            "betas": self.betas.to_string(),
            "ensemble": self.ensemble,
            "min_box": self.min_box,
            "detrend": self.detrend,
            "config_text": self.to_config_text(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_are_overridden_by_flags() {
        let file = Settings::parse(
            "# comment\nstrategy = zhang\nbeta=0.05  # trailing\n\nseed = 9\n",
            Path::new("x.conf"),
        )
        .unwrap();
        let flags = Settings {
            beta: Some(0.07),
            ..Settings::default()
        };
        let r = file.overlay(flags).resolve().unwrap();
        assert_eq!(r.sim.strategy, Strategy::Zhang);
        assert_eq!(r.sim.beta, 0.07);
        assert_eq!(r.sim.seed, 9);
        assert_eq!(r.sim.lambda, 0.01);
    }

    #[test]
    fn unknown_keys_and_bad_types_are_rejected() {
        let p = Path::new("x.conf");
        for text in [
            "bogus = 1",
            "nodes = 1.5",
            "strategy = fastest",
            "detrend = maybe",
            "beta",
        ] {
            let err = Settings::parse(text, p).unwrap_err();
            assert!(
                matches!(err, CliError::Parse { line: 1, .. }),
                "{text}: {err}"
            );
        }
        let err = Settings::parse("beta = -1", p)
            .unwrap()
            .resolve()
            .unwrap_err();
        assert_eq!(err.exit_code(), crate::ExitCode::Usage);
    }

    #[test]
    fn grid_syntax() {
        let g: BetaGrid = "0.02:0.2:25".parse().unwrap();
        assert_eq!(g, BetaGrid::default());
        assert_eq!(g.values().len(), 25);
        let g: BetaGrid = "0.01:0.1:3:log".parse().unwrap();
        assert!((g.values()[1] - 0.0316227766).abs() < 1e-9);
        for bad in [
            "0.2:0.02:5",
            "0:1:3:log",
            "a:b:c",
            "0.1:0.2:0",
            "0.1:0.2:3:cubic",
        ] {
            assert!(bad.parse::<BetaGrid>().is_err(), "{bad}");
        }
    }

    #[test]
    fn config_text_round_trips() {
        let r = Settings {
            strategy: Some(Strategy::Echenique),
            lambda: Some(0.1 + 0.2),
            min_box: Some(32),
            betas: Some("0.01:0.1:4:log".parse().unwrap()),
            ..Settings::default()
        }
        .resolve()
        .unwrap();
        let back = Settings::parse(&r.to_config_text(), Path::new("m"))
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(back, r);
    }
}
