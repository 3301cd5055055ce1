//! Run configuration and its flat `key = value` file format.
//!
//! ```text
//! # lines starting with '#' are comments
//! mode = simulate            # simulate | ingest
//! theta = 30, 32.5, 35       # degrees, comma separated
//! trials = 500
//! counting_mode = multinomial
//! infinite_sample = false
//! depolarizing_p = 0.99
//! offset_a0 = 0              # per-setting analyzer offsets, degrees
//! xi = 0                     # common analyzer rotation, degrees
//! seed = 7
//! tol = 1e-7
//! eps_grid = 0, 0.05, 0.1
//! epsilon_constraint = at-least
//! nqa2_localizing = false
//! aggregate_min_theta = 35
//! input = counts/            # ingest mode only
//! out = results/
//! ```

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::bell::CountingMode;
use crate::certify::{CertifyOptions, EpsilonConstraint, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::quantum::NoiseModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Simulate,
    Ingest,
}

impl FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simulate" => Ok(RunMode::Simulate),
            "ingest" => Ok(RunMode::Ingest),
            _ => Err(Error::Parse(format!(
                "unknown mode {s:?} (expected simulate or ingest)"
            ))),
        }
    }
}

/// Source noise, with angles in degrees as written in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub depolarizing_p: f64,
    pub offsets_a_deg: [f64; 2],
    pub offsets_b_deg: [f64; 2],
    pub xi_deg: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            depolarizing_p: 1.0,
            offsets_a_deg: [0.0; 2],
            offsets_b_deg: [0.0; 2],
            xi_deg: 0.0,
        }
    }
}

impl NoiseConfig {
    pub fn model(&self) -> NoiseModel {
        NoiseModel {
            depolarizing_p: self.depolarizing_p,
            offsets_a: self.offsets_a_deg.map(f64::to_radians),
            offsets_b: self.offsets_b_deg.map(f64::to_radians),
            xi: self.xi_deg.to_radians(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: RunMode,
    pub theta_deg: Vec<f64>,
    pub trials_per_setting: u64,
    pub counting_mode: CountingMode,
    /// Feed exact Born probabilities instead of sampled counts.
    pub infinite_sample: bool,
    pub noise: NoiseConfig,
    pub seed: u64,
    pub tol: f64,
    pub eps_grid: Vec<f64>,
    pub epsilon_constraint: EpsilonConstraint,
    pub nqa2_localizing: bool,
    /// Rows with `theta_deg >= aggregate_min_theta` enter the mean ratio.
    pub aggregate_min_theta: f64,
    pub input_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: RunMode::Simulate,
            theta_deg: vec![30.0, 32.5, 35.0, 37.5, 40.0, 42.5, 45.0],
            trials_per_setting: 500,
            counting_mode: CountingMode::Multinomial,
            infinite_sample: false,
            noise: NoiseConfig::default(),
            seed: 0,
            tol: DEFAULT_TOL,
            eps_grid: Vec::new(),
            epsilon_constraint: EpsilonConstraint::AtLeast,
            nqa2_localizing: false,
            aggregate_min_theta: 35.0,
            input_dir: None,
            out_dir: PathBuf::from("results"),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Parse(format!("{key}: cannot parse {v:?} as a number")))
}

pub fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Parse(format!("{key}: expected true or false, got {v:?}"))),
    }
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "mode" => self.mode = v.parse()?,
            "theta" => self.theta_deg = parse_list(key, v)?,
            "trials" => self.trials_per_setting = parse_num(key, v)?,
            "counting_mode" => self.counting_mode = v.parse()?,
            "infinite_sample" => self.infinite_sample = parse_bool(key, v)?,
            "depolarizing_p" => self.noise.depolarizing_p = parse_num(key, v)?,
            "offset_a0" => self.noise.offsets_a_deg[0] = parse_num(key, v)?,
            "offset_a1" => self.noise.offsets_a_deg[1] = parse_num(key, v)?,
            "offset_b0" => self.noise.offsets_b_deg[0] = parse_num(key, v)?,
            "offset_b1" => self.noise.offsets_b_deg[1] = parse_num(key, v)?,
            "xi" => self.noise.xi_deg = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "tol" => self.tol = parse_num(key, v)?,
            "eps_grid" => self.eps_grid = parse_list(key, v)?,
            "epsilon_constraint" => {
                self.epsilon_constraint = match v {
                    "at-least" => EpsilonConstraint::AtLeast,
                    "exactly" => EpsilonConstraint::Exactly,
                    _ => return Err(Error::Parse(format!("{key}: expected at-least or exactly, got {v:?}"))),
                }
            }
            "nqa2_localizing" => self.nqa2_localizing = parse_bool(key, v)?,
            "aggregate_min_theta" => self.aggregate_min_theta = parse_num(key, v)?,
            "input" => self.input_dir = Some(PathBuf::from(v)),
            "out" => self.out_dir = PathBuf::from(v),
            _ => return Err(Error::Parse(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(key.trim(), value)
                .map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta_deg.is_empty() {
            return Err(Error::validation("theta list is empty"));
        }
        if let Some(t) = self.theta_deg.iter().find(|t| !(**t > 0.0 && **t <= 45.0)) {
            return Err(Error::validation(format!("theta {t} deg outside (0, 45]")));
        }
        if self.trials_per_setting == 0 {
            return Err(Error::validation("trials must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::validation(format!("tolerance {} must be positive", self.tol)));
        }
        if let Some(e) = self.eps_grid.iter().find(|e| !(**e >= 0.0)) {
            return Err(Error::validation(format!("epsilon {e} must be nonnegative")));
        }
        if self.mode == RunMode::Ingest && self.infinite_sample {
            return Err(Error::validation("infinite_sample applies to simulate mode only"));
        }
        self.noise.model().validate()
    }

    pub fn certify_options(&self) -> CertifyOptions {
        CertifyOptions {
            tol: self.tol,
            nqa2_localizing: self.nqa2_localizing,
            epsilon_constraint: self.epsilon_constraint,
        }
    }

    /// Directory holding counts files in ingest mode.
    pub fn input_dir(&self) -> &Path {
        self.input_dir.as_deref().unwrap_or(&self.out_dir)
    }

    /// Seed of the sampled counts at one angle; distinct angles get distinct streams.
    pub fn seed_for(&self, theta_deg: f64) -> u64 {
        self.seed.wrapping_add((theta_deg * 1000.0).round() as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let text = "# demo\nmode = simulate\ntheta = 30, 32.5 ,45\ntrials = 100 # inline\n\
                    infinite_sample = yes\nxi = 1.5\neps_grid = 0,0.1\nepsilon_constraint = exactly\nout = /tmp/x\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.theta_deg, vec![30.0, 32.5, 45.0]);
        assert_eq!(cfg.trials_per_setting, 100);
        assert!(cfg.infinite_sample);
        assert_eq!(cfg.noise.xi_deg, 1.5);
        assert_eq!(cfg.eps_grid, vec![0.0, 0.1]);
        assert_eq!(cfg.epsilon_constraint, EpsilonConstraint::Exactly);
        assert_eq!(cfg.out_dir, PathBuf::from("/tmp/x"));
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(RunConfig::parse("theta 30").is_err());
        assert!(RunConfig::parse("colour = red").is_err());
        assert!(RunConfig::parse("trials = many").is_err());
        let err = RunConfig::parse("\n\nseed = -1").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn validation_rules() {
        let mut cfg = RunConfig::default();
        cfg.validate().unwrap();
        cfg.theta_deg = vec![50.0];
        assert!(cfg.validate().is_err());
        cfg.theta_deg = vec![45.0];
        cfg.trials_per_setting = 0;
        assert!(cfg.validate().is_err());
        cfg.trials_per_setting = 1;
        cfg.tol = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn per_angle_seeds_differ() {
        let cfg = RunConfig::default();
        assert_ne!(cfg.seed_for(30.0), cfg.seed_for(32.5));
    }
}
