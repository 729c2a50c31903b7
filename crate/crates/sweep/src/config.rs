//! Sweep configuration files.
//!
//! A config is a flat TOML table:
//!
//! ```toml
//! fixed_rail = "max_trade_fraction"
//! fixed_value = 0.1
//! grid_a = { from = 0.02, to = 0.2, n = 20 }
//! grid_b = { from = 1e-5, to = 1e-2, n = 20, spacing = "log" }
//! n_tokens = 3
//! gamma = 0.997
//! n_restarts = 256
//! master_seed = 42
//! output_path = "fig1a.csv"
//! ```
//!
//! `grid_a` and `grid_b` cover the two rails that are not fixed, in the
//! order trade cap, min weight, weight-change cap. A grid is either an
//! explicit ascending list or a `{from, to, n}` range.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tfmm_guard::bounds::Guardrails;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rail {
    MaxTradeFraction,
    MinWeight,
    MaxWeightChange,
}

impl Rail {
    pub const ALL: [Rail; 3] = [Rail::MaxTradeFraction, Rail::MinWeight, Rail::MaxWeightChange];

    pub fn name(self) -> &'static str {
        match self {
            Rail::MaxTradeFraction => "max_trade_fraction",
            Rail::MinWeight => "min_weight",
            Rail::MaxWeightChange => "max_weight_change",
        }
    }

    /// Whether a larger value protects the pool more.
    pub fn larger_is_stricter(self) -> bool {
        matches!(self, Rail::MinWeight)
    }

    /// The two rails that vary when `self` is fixed, in column order.
    pub fn varying(self) -> [Rail; 2] {
        match self {
            Rail::MaxTradeFraction => [Rail::MinWeight, Rail::MaxWeightChange],
            Rail::MinWeight => [Rail::MaxTradeFraction, Rail::MaxWeightChange],
            Rail::MaxWeightChange => [Rail::MaxTradeFraction, Rail::MinWeight],
        }
    }
}

impl fmt::Display for Rail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Values(Vec<f64>),
    Range {
        from: f64,
        to: f64,
        n: usize,
        #[serde(default)]
        spacing: Spacing,
    },
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            GridSpec::Values(ref v) => v.clone(),
            GridSpec::Range { from, to, n, spacing } => {
                if n == 1 {
                    return vec![from];
                }
                let last = (n - 1) as f64;
                (0..n)
                    .map(|k| {
                        let t = k as f64 / last;
                        if k == 0 {
                            from
                        } else if k == n - 1 {
                            to
                        } else {
                            match spacing {
                                Spacing::Linear => from + (to - from) * t,
                                Spacing::Log => (from.ln() + (to.ln() - from.ln()) * t).exp(),
                            }
                        }
                    })
                    .collect()
            }
        }
    }
}

fn default_max_iters() -> usize {
    300
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub fixed_rail: Rail,
    pub fixed_value: f64,
    pub grid_a: GridSpec,
    pub grid_b: GridSpec,
    pub n_tokens: usize,
    pub gamma: f64,
    pub n_restarts: usize,
    pub master_seed: u64,
    pub output_path: PathBuf,
    /// Worker count; `TFMM_GUARD_THREADS` takes precedence.
    #[serde(default)]
    pub parallelism: Option<usize>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Write measured cell times to the CSV. Off by default so reruns are
    /// byte-identical; times always go to the sidecar.
    #[serde(default)]
    pub record_wall_time: bool,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("field `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

fn check_grid(field: &'static str, rail: Rail, values: &[f64]) -> Result<(), ConfigError> {
    if values.is_empty() {
        return Err(invalid(field, "grid is empty"));
    }
    if let Some(w) = values.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(invalid(
            field,
            format!("grid must be strictly ascending, found {} then {}", w[0], w[1]),
        ));
    }
    for &v in values {
        check_rail_value(field, rail, v)?;
    }
    Ok(())
}

fn check_rail_value(field: &'static str, rail: Rail, v: f64) -> Result<(), ConfigError> {
    let ok = match rail {
        Rail::MaxTradeFraction | Rail::MinWeight => v > 0.0 && v < 1.0,
        Rail::MaxWeightChange => (0.0..1.0).contains(&v),
    };
    if ok {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} is out of range for {rail}")))
    }
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: SweepConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ConfigError::Parse(msg) => ConfigError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        check_rail_value("fixed_value", self.fixed_rail, self.fixed_value)?;
        let [ra, rb] = self.fixed_rail.varying();
        check_grid("grid_a", ra, &self.grid_a.values())?;
        check_grid("grid_b", rb, &self.grid_b.values())?;
        if self.n_tokens < 2 {
            return Err(invalid("n_tokens", "need at least 2 tokens"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(invalid("gamma", format!("{} is not in (0, 1]", self.gamma)));
        }
        if self.n_restarts == 0 {
            return Err(invalid("n_restarts", "must be at least 1"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters", "must be at least 1"));
        }
        if self.parallelism == Some(0) {
            return Err(invalid("parallelism", "must be at least 1"));
        }
        for cell in self.cells() {
            if cell.min_weight * self.n_tokens as f64 >= 1.0 {
                return Err(invalid(
                    "n_tokens",
                    format!("min_weight {} leaves no room for {} tokens", cell.min_weight, self.n_tokens),
                ));
            }
        }
        Ok(())
    }

    /// Guardrail settings in row-major order over `(grid_a, grid_b)`.
    pub fn cells(&self) -> Vec<Guardrails> {
        let [ra, rb] = self.fixed_rail.varying();
        let (ga, gb) = (self.grid_a.values(), self.grid_b.values());
        let mut out = Vec::with_capacity(ga.len() * gb.len());
        for &a in &ga {
            for &b in &gb {
                let mut g = Guardrails {
                    max_trade_fraction: 0.0,
                    min_weight: 0.0,
                    max_weight_change: 0.0,
                };
                for (rail, v) in [(self.fixed_rail, self.fixed_value), (ra, a), (rb, b)] {
                    *rail_mut(&mut g, rail) = v;
                }
                out.push(g);
            }
        }
        out
    }

    /// Path of the JSON metadata written next to the CSV.
    pub fn sidecar_path(&self) -> PathBuf {
        self.output_path.with_extension("json")
    }
}

pub fn rail_value(g: &Guardrails, rail: Rail) -> f64 {
    match rail {
        Rail::MaxTradeFraction => g.max_trade_fraction,
        Rail::MinWeight => g.min_weight,
        Rail::MaxWeightChange => g.max_weight_change,
    }
}

fn rail_mut(g: &mut Guardrails, rail: Rail) -> &mut f64 {
    match rail {
        Rail::MaxTradeFraction => &mut g.max_trade_fraction,
        Rail::MinWeight => &mut g.min_weight,
        Rail::MaxWeightChange => &mut g.max_weight_change,
    }
}
