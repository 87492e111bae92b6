//! TOML experiment configuration and its validation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{Event, EventError, EventKind, RegionMask};
use crate::grid::{GridError, GridMap};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Event(#[from] EventError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
    pub cell_size_m: f64,
    pub origin_lat: f64,
    pub origin_lon: f64,
}

impl GridConfig {
    pub fn build(&self) -> Result<GridMap, ConfigError> {
        Ok(GridMap::new(
            self.rows,
            self.cols,
            self.cell_size_m,
            self.origin_lat,
            self.origin_lon,
        )?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ModelConfig {
    /// Gaussian-kernel synthetic transition matrix.
    Synth { sigma: f64 },
    /// Maximum-likelihood training from a trajectory CSV.
    Csv {
        path: String,
        #[serde(default)]
        resample_seconds: Option<f64>,
        #[serde(default = "default_smoothing")]
        smoothing: f64,
    },
}

fn default_smoothing() -> f64 {
    0.5
}

/// Event block: masks either as 0/1 bit rows (`regions`) or as cell-index
/// lists (`cells`), whichever reads better in the config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventConfig {
    pub kind: EventKind,
    #[serde(default)]
    pub regions: Option<Vec<Vec<u8>>>,
    #[serde(default)]
    pub cells: Option<Vec<Vec<usize>>>,
    pub start: usize,
    pub end: usize,
}

impl EventConfig {
    pub fn build(&self, m: usize) -> Result<Event, ConfigError> {
        let masks: Vec<RegionMask> = match (&self.regions, &self.cells) {
            (Some(rows), None) => rows
                .iter()
                .map(|bits| {
                    if bits.len() != m {
                        return Err(ConfigError::Invalid(format!(
                            "region mask length {} does not match m = {m}",
                            bits.len()
                        )));
                    }
                    RegionMask::try_from(bits.clone()).map_err(ConfigError::Invalid)
                })
                .collect::<Result<_, _>>()?,
            (None, Some(lists)) => lists
                .iter()
                .map(|cells| {
                    if let Some(&bad) = cells.iter().find(|&&c| c >= m) {
                        return Err(ConfigError::Invalid(format!("cell {bad} out of range for m = {m}")));
                    }
                    Ok(RegionMask::from_cells(m, cells))
                })
                .collect::<Result<_, _>>()?,
            _ => {
                return Err(ConfigError::Invalid(
                    "event needs exactly one of `regions` or `cells`".into(),
                ))
            }
        };
        Ok(match self.kind {
            EventKind::Presence => {
                let mask = masks
                    .into_iter()
                    .next()
                    .ok_or_else(|| ConfigError::Invalid("presence event needs one mask".into()))?;
                Event::presence(mask, self.start, self.end)?
            }
            EventKind::Pattern => Event::pattern(masks, self.start, self.end)?,
        })
    }
}

/// Mechanism block, matching the on-disk interface
/// `{mechanism: "plm" | "plm_deltaset" | "uniform", alpha, delta, subsamples}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MechanismConfig {
    pub mechanism: String,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_subsamples")]
    pub subsamples: usize,
}

fn default_alpha() -> f64 {
    0.2
}

fn default_subsamples() -> usize {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct SweepConfig {
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default)]
    pub check_budget_ms: Option<f64>,
    #[serde(default = "default_max_halvings")]
    pub max_halvings: u32,
}

fn default_repetitions() -> usize {
    100
}

fn default_horizon() -> usize {
    50
}

fn default_decay() -> f64 {
    0.5
}

fn default_max_halvings() -> u32 {
    40
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            repetitions: default_repetitions(),
            horizon: default_horizon(),
            seed: 0,
            decay: default_decay(),
            check_budget_ms: None,
            max_halvings: default_max_halvings(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub model: ModelConfig,
    pub events: Vec<EventConfig>,
    pub mechanism: MechanismConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub run: RunConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.events.is_empty() {
            return Err(ConfigError::Invalid("at least one event is required".into()));
        }
        if self.run.repetitions == 0 {
            return Err(ConfigError::Invalid("repetitions must be at least 1".into()));
        }
        if self.run.horizon == 0 {
            return Err(ConfigError::Invalid("horizon must be at least 1".into()));
        }
        if !(self.run.decay > 0.0 && self.run.decay < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "decay must lie in (0, 1), got {}",
                self.run.decay
            )));
        }
        match self.mechanism.mechanism.as_str() {
            "plm" | "plm_deltaset" | "uniform" => {}
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown mechanism `{other}` (expected plm, plm_deltaset or uniform)"
                )))
            }
        }
        if self.mechanism.mechanism == "plm_deltaset" {
            let delta = self.effective_deltas()[0];
            if !(0.0..1.0).contains(&delta) {
                return Err(ConfigError::Invalid(format!("delta must lie in [0, 1), got {delta}")));
            }
        }
        for e in &self.events {
            if e.start < 1 || e.end < e.start || e.end > self.run.horizon {
                return Err(ConfigError::Invalid(format!(
                    "event window [{}, {}] does not fit horizon {}",
                    e.start, e.end, self.run.horizon
                )));
            }
        }
        Ok(())
    }

    /// ε values to run: the sweep grid, defaulting to a single 0.5.
    pub fn effective_epsilons(&self) -> Vec<f64> {
        if self.sweep.epsilons.is_empty() {
            vec![0.5]
        } else {
            self.sweep.epsilons.clone()
        }
    }

    /// α values to run: the sweep grid, defaulting to the mechanism alpha.
    pub fn effective_alphas(&self) -> Vec<f64> {
        if self.sweep.alphas.is_empty() {
            vec![self.mechanism.alpha]
        } else {
            self.sweep.alphas.clone()
        }
    }

    /// δ values to run (δ-location-set mechanism only).
    pub fn effective_deltas(&self) -> Vec<f64> {
        if self.mechanism.mechanism != "plm_deltaset" {
            return vec![f64::NAN];
        }
        if self.sweep.deltas.is_empty() {
            vec![self.mechanism.delta.unwrap_or(0.05)]
        } else {
            self.sweep.deltas.clone()
        }
    }
}
