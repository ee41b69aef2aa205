//! Experiment configuration: flat key-value config files with CLI-style
//! overrides (overrides win), plus the hyperparameter grid specification.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HogsError, Result};
use crate::gcn::TrainConfig;

/// Pipeline variants: the full method, its ablations, and the clean baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Collection, topology reconstruction, and feature reconstruction.
    Hogs,
    /// Topology replaced by the OR-symmetrized raw noisy adjacency.
    NoTr,
    /// Features passed through as raw noisy bits.
    NoFr,
    /// Reconstructed topology with 1-hop unweighted feature propagation.
    KpropK1,
    /// Reconstructed topology with 2-hop unweighted feature propagation.
    KpropK2,
    /// No perturbation at all: true graph, true features.
    Nonprivate,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hogs" => Ok(Self::Hogs),
            "no_tr" => Ok(Self::NoTr),
            "no_fr" => Ok(Self::NoFr),
            "kprop_k1" => Ok(Self::KpropK1),
            "kprop_k2" => Ok(Self::KpropK2),
            "nonprivate" => Ok(Self::Nonprivate),
            other => Err(HogsError::Config(format!(
                "unknown variant '{other}' (expected hogs, no_tr, no_fr, kprop_k1, kprop_k2 or nonprivate)"
            ))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Hogs => "hogs",
            Self::NoTr => "no_tr",
            Self::NoFr => "no_fr",
            Self::KpropK1 => "kprop_k1",
            Self::KpropK2 => "kprop_k2",
            Self::Nonprivate => "nonprivate",
        };
        f.write_str(s)
    }
}

/// Everything one end-to-end experiment needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub feature_path: PathBuf,
    pub edge_path: PathBuf,
    pub label_path: PathBuf,
    pub epsilon: f64,
    pub delta: f64,
    pub tau: f64,
    pub l: usize,
    pub variant: Variant,
    /// Treat features as public: the whole budget goes to adjacency bits and
    /// the curator sees raw features. Requires binary features.
    pub public_features: bool,
    /// Explicit feature range; inferred from data when absent.
    pub feature_range: Option<(f64, f64)>,
    pub split_ratios: (f64, f64, f64),
    pub block_rows: usize,
    pub gnn: TrainConfig,
    pub repeats: usize,
    pub master_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            feature_path: PathBuf::new(),
            edge_path: PathBuf::new(),
            label_path: PathBuf::new(),
            epsilon: 4.0,
            delta: 0.5,
            tau: 0.5,
            l: 1,
            variant: Variant::Hogs,
            public_features: false,
            feature_range: None,
            split_ratios: (0.5, 0.25, 0.25),
            block_rows: crate::topology::DEFAULT_BLOCK_ROWS,
            gnn: TrainConfig::default(),
            repeats: 10,
            master_seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.variant != Variant::Nonprivate && !(self.epsilon > 0.0) {
            return Err(HogsError::Config(format!(
                "epsilon must be positive for private variants, got {}",
                self.epsilon
            )));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(HogsError::Config(format!("delta must lie in [0, 1], got {}", self.delta)));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(HogsError::Config(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        if self.repeats == 0 {
            return Err(HogsError::Config("repeats must be >= 1".into()));
        }
        if self.block_rows == 0 {
            return Err(HogsError::Config("block_rows must be >= 1".into()));
        }
        self.gnn.validate()
    }

    /// Apply one `key = value` assignment.
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str, e: &dyn fmt::Display| {
            HogsError::Config(format!("bad value '{value}' for {what}: {e}"))
        };
        match key {
            "features" => self.feature_path = PathBuf::from(value),
            "edges" => self.edge_path = PathBuf::from(value),
            "labels" => self.label_path = PathBuf::from(value),
            "epsilon" => self.epsilon = value.parse().map_err(|e| bad(key, &e))?,
            "delta" => self.delta = value.parse().map_err(|e| bad(key, &e))?,
            "tau" => self.tau = value.parse().map_err(|e| bad(key, &e))?,
            "l" => self.l = value.parse().map_err(|e| bad(key, &e))?,
            "variant" => self.variant = Variant::parse(value)?,
            "public_features" => {
                self.public_features = value.parse().map_err(|e| bad(key, &e))?
            }
            "feature_lo" => {
                let lo: f64 = value.parse().map_err(|e| bad(key, &e))?;
                let hi = self.feature_range.map(|r| r.1).unwrap_or(lo + 1.0);
                self.feature_range = Some((lo, hi));
            }
            "feature_hi" => {
                let hi: f64 = value.parse().map_err(|e| bad(key, &e))?;
                let lo = self.feature_range.map(|r| r.0).unwrap_or(hi - 1.0);
                self.feature_range = Some((lo, hi));
            }
            "train_ratio" => self.split_ratios.0 = value.parse().map_err(|e| bad(key, &e))?,
            "val_ratio" => self.split_ratios.1 = value.parse().map_err(|e| bad(key, &e))?,
            "test_ratio" => self.split_ratios.2 = value.parse().map_err(|e| bad(key, &e))?,
            "block_rows" => self.block_rows = value.parse().map_err(|e| bad(key, &e))?,
            "lr" => self.gnn.learning_rate = value.parse().map_err(|e| bad(key, &e))?,
            "weight_decay" => self.gnn.weight_decay = value.parse().map_err(|e| bad(key, &e))?,
            "dropout" => self.gnn.dropout = value.parse().map_err(|e| bad(key, &e))?,
            "hidden" => self.gnn.hidden_dim = value.parse().map_err(|e| bad(key, &e))?,
            "max_epochs" => self.gnn.max_epochs = value.parse().map_err(|e| bad(key, &e))?,
            "patience" => self.gnn.patience = value.parse().map_err(|e| bad(key, &e))?,
            "repeats" => self.repeats = value.parse().map_err(|e| bad(key, &e))?,
            "seed" => self.master_seed = value.parse().map_err(|e| bad(key, &e))?,
            other => {
                return Err(HogsError::Config(format!("unknown config key '{other}'")));
            }
        }
        Ok(())
    }
}

/// Value lists swept by a grid search. Empty lists fall back to the
/// base configuration's single value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GridSpec {
    pub delta: Vec<f64>,
    pub tau: Vec<f64>,
    pub l: Vec<usize>,
    pub lr: Vec<f64>,
    pub weight_decay: Vec<f64>,
    pub dropout: Vec<f64>,
    /// Independent runs per grid cell.
    pub repeats_per_cell: Option<usize>,
}

impl GridSpec {
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<()> {
        fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
        where
            T::Err: fmt::Display,
        {
            value
                .split(',')
                .map(|v| {
                    v.trim().parse().map_err(|e| {
                        HogsError::Config(format!("bad value '{v}' in {key}: {e}"))
                    })
                })
                .collect()
        }
        match key {
            "grid_delta" => self.delta = list(key, value)?,
            "grid_tau" => self.tau = list(key, value)?,
            "grid_l" => self.l = list(key, value)?,
            "grid_lr" => self.lr = list(key, value)?,
            "grid_weight_decay" => self.weight_decay = list(key, value)?,
            "grid_dropout" => self.dropout = list(key, value)?,
            "grid_repeats" => {
                self.repeats_per_cell = Some(value.parse().map_err(|e| {
                    HogsError::Config(format!("bad value '{value}' for grid_repeats: {e}"))
                })?)
            }
            other => {
                return Err(HogsError::Config(format!("unknown grid key '{other}'")));
            }
        }
        Ok(())
    }
}

/// Parse a flat `key = value` config file ('#' starts a comment). Grid keys
/// (`grid_*`) accumulate into the returned [`GridSpec`].
pub fn parse_config_file(path: &Path) -> Result<(ExperimentConfig, GridSpec)> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = ExperimentConfig::default();
    let mut grid = GridSpec::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(HogsError::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: "expected 'key = value'".into(),
            });
        };
        let key = key.trim();
        let value = value.trim();
        if key.starts_with("grid_") {
            grid.set_key(key, value)?;
        } else {
            cfg.set_key(key, value)?;
        }
    }
    Ok((cfg, grid))
}
