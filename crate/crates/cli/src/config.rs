//! Flat key/value run configuration shared by every subcommand.
//!
//! Values are layered: built-in defaults, then the `--config` file, then the
//! `MONODRIFT_SEED` environment variable, then command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};

use monodrift::{builtin_model, BandwidthPair, EstimatorConfig, EstimatorMode, Kernel};
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "MONODRIFT_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub kernel: Kernel,
    pub l0: f64,
    pub r0: f64,
    pub eps: f64,
    pub t0: f64,
    pub m_threshold: f64,
    pub z_grid_points: usize,
    pub eval_points: usize,
    pub theory_strict: bool,
    pub model: String,
    pub n_paths: usize,
    pub n_steps: usize,
    pub horizon: f64,
    pub repetitions: usize,
    pub eta_grid: String,
    pub lh_grid: String,
    pub mode: EstimatorMode,
    pub seed: u64,
    pub figure_curves: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_ell: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_h: Option<f64>,
    pub out_dir: PathBuf,
    pub verbosity: u8,
}

impl Default for RunConfig {
    fn default() -> Self {
        let est = EstimatorConfig::<f64>::default();
        RunConfig {
            kernel: est.kernel,
            l0: est.l0,
            r0: est.r0,
            eps: est.eps,
            t0: est.t0,
            m_threshold: est.m_threshold,
            z_grid_points: est.z_grid_points,
            eval_points: est.eval_points,
            theory_strict: est.theory_strict,
            model: "A".into(),
            n_paths: 100,
            n_steps: 50,
            horizon: 5.0,
            repetitions: 100,
            eta_grid: "0.05x35".into(),
            lh_grid: "0.05x35".into(),
            mode: EstimatorMode::Oracle,
            seed: 1,
            figure_curves: 5,
            fixed_eta: None,
            fixed_ell: None,
            fixed_h: None,
            out_dir: PathBuf::from("out"),
            verbosity: 0,
        }
    }
}

/// A configuration problem attributable to one key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error in `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Parses `"<step>x<count>"` (the multiples `step·1, …, step·count`) or a
/// comma-separated list of positive values.
pub fn parse_grid_spec(spec: &str) -> Result<Vec<f64>, String> {
    let spec = spec.trim();
    let values = if let Some((step, count)) = spec.split_once('x') {
        let step: f64 = step.trim().parse().map_err(|_| format!("bad step in `{spec}`"))?;
        let count: usize = count.trim().parse().map_err(|_| format!("bad count in `{spec}`"))?;
        if count == 0 {
            return Err(format!("empty grid `{spec}`"));
        }
        monodrift::experiment::multiples(step, count)
    } else {
        spec.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad value `{v}` in `{spec}`")))
            .collect::<Result<Vec<_>, _>>()?
    };
    if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(format!("grid `{spec}` must hold positive finite values"));
    }
    Ok(values)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let from_span = || {
                let start = e.span()?.start;
                let line_start = text[..start].rfind('\n').map_or(0, |i| i + 1);
                let line = text[line_start..].lines().next()?;
                let key = line.split('=').next()?.trim();
                (!key.is_empty()).then(|| key.to_string())
            };
            let key = if msg.starts_with("unknown field") {
                msg.split('`').nth(1).map(str::to_string)
            } else {
                from_span()
            }
            .unwrap_or_else(|| "<file>".into());
            ConfigError::new(key, msg)
        })
    }

    /// Reads the files in order, later keys overriding earlier ones.
    pub fn load_layered(paths: &[&Path]) -> Result<Self, ConfigError> {
        let mut merged = toml::Table::new();
        for path in paths {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError::new("<file>", format!("cannot read {}: {e}", path.display())))?;
            // surface unknown keys and type errors against the file they came from
            Self::from_toml(&text)?;
            let table: toml::Table = text
                .parse()
                .map_err(|e: toml::de::Error| ConfigError::new("<file>", format!("{}: {}", path.display(), e.message())))?;
            merged.extend(table);
        }
        Self::from_toml(&merged.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `MONODRIFT_SEED` if set.
    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| ConfigError::new(SEED_ENV, format!("expected an unsigned integer, got `{v}`")))?;
        }
        Ok(())
    }

    pub fn estimator(&self) -> EstimatorConfig<f64> {
        EstimatorConfig {
            l0: self.l0,
            r0: self.r0,
            eps: self.eps,
            t0: self.t0,
            m_threshold: self.m_threshold,
            kernel: self.kernel,
            z_grid_points: self.z_grid_points,
            eval_points: self.eval_points,
            theory_strict: self.theory_strict,
        }
    }

    pub fn eta_values(&self) -> Result<Vec<f64>, ConfigError> {
        parse_grid_spec(&self.eta_grid).map_err(|m| ConfigError::new("eta_grid", m))
    }

    pub fn lh_pairs(&self) -> Result<Vec<BandwidthPair<f64>>, ConfigError> {
        let v = parse_grid_spec(&self.lh_grid).map_err(|m| ConfigError::new("lh_grid", m))?;
        Ok(BandwidthPair::square_grid(&v))
    }

    /// Checks every key; the first offending key is reported.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::new(key, format!("must be positive and finite, got {v}")))
            }
        };
        if !(self.l0.is_finite() && self.r0.is_finite() && self.l0 < self.r0) {
            return Err(ConfigError::new("l0", format!("need l0 < r0, got l0 = {}, r0 = {}", self.l0, self.r0)));
        }
        positive("eps", self.eps)?;
        if !(self.t0.is_finite() && self.t0 >= 0.0) {
            return Err(ConfigError::new("t0", format!("must be non-negative, got {}", self.t0)));
        }
        positive("m_threshold", self.m_threshold)?;
        positive("horizon", self.horizon)?;
        if self.t0 >= self.horizon {
            return Err(ConfigError::new("t0", format!("must be below horizon = {}", self.horizon)));
        }
        for (key, v, min) in [
            ("z_grid_points", self.z_grid_points, 2),
            ("eval_points", self.eval_points, 2),
            ("n_paths", self.n_paths, 1),
            ("n_steps", self.n_steps, 1),
            ("repetitions", self.repetitions, 1),
        ] {
            if v < min {
                return Err(ConfigError::new(key, format!("must be at least {min}, got {v}")));
            }
        }
        builtin_model::<f64>(&self.model).map_err(|e| ConfigError::new("model", e.to_string()))?;
        self.eta_values()?;
        self.lh_pairs()?;
        if self.figure_curves > self.repetitions {
            return Err(ConfigError::new(
                "figure_curves",
                format!("cannot exceed repetitions = {}", self.repetitions),
            ));
        }
        for (key, v) in [("fixed_eta", self.fixed_eta), ("fixed_ell", self.fixed_ell), ("fixed_h", self.fixed_h)] {
            if let Some(v) = v {
                positive(key, v)?;
            }
        }
        let fixed = [self.fixed_eta, self.fixed_ell, self.fixed_h];
        if fixed.iter().any(Option::is_some) && !fixed.iter().all(Option::is_some) {
            return Err(ConfigError::new(
                "fixed_eta",
                "fixed_eta, fixed_ell and fixed_h must be given together",
            ));
        }
        Ok(())
    }
}
