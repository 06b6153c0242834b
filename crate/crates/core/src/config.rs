//! JSON run configuration: everything a training run needs, with defaults
//! for every field so config files only state what they change.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoding::PopulationCodeSpec;
use crate::error::{Error, Result};
use crate::srm::FilterParams;
use crate::train::TrainRule;

/// Which task/data source a run trains on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    /// Clustered 1D regression (generated on the fly).
    OneDim,
    /// Two-moons 2D classification (generated on the fly).
    TwoMoons,
    /// Event-camera recordings from an encoded dataset container file.
    Dvs,
}

/// Data source and encoding settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub kind: DataKind,
    /// Dataset container path; required when kind = dvs, ignored otherwise.
    pub path: Option<PathBuf>,
    /// Two-moons points per class.
    pub n_per_class: usize,
    /// Two-moons noise standard deviation.
    pub noise_std: f64,
    /// Encoded sequence length (generated tasks).
    pub t_steps: usize,
    /// Population-code units per input dimension (generated tasks).
    pub n_units: usize,
    /// Population-code range; None picks a task-appropriate default.
    pub input_range: Option<(f64, f64)>,
    /// Fraction of examples held out for testing, in [0, 1).
    pub holdout_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            kind: DataKind::TwoMoons,
            path: None,
            n_per_class: 200,
            noise_std: 0.1,
            t_steps: 100,
            n_units: 20,
            input_range: None,
            holdout_fraction: 0.25,
        }
    }
}

impl DataConfig {
    /// The population-code range actually used: the configured one, or a
    /// default wide enough for the generated task.
    pub fn resolved_range(&self) -> (f64, f64) {
        self.input_range.unwrap_or(match self.kind {
            DataKind::OneDim => (-1.2, 1.2),
            DataKind::TwoMoons => (-1.5, 2.5),
            DataKind::Dvs => (0.0, 1.0),
        })
    }

    /// Population-code spec for the generated tasks.
    pub fn population_spec(&self) -> Result<PopulationCodeSpec> {
        PopulationCodeSpec::new(self.n_units, self.resolved_range(), self.t_steps)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config(format!(
                "holdout_fraction must lie in [0, 1), got {}",
                self.holdout_fraction
            )));
        }
        match self.kind {
            DataKind::Dvs => {
                if self.path.is_none() {
                    return Err(Error::Config("dvs data needs a dataset path".into()));
                }
            }
            DataKind::TwoMoons => {
                if self.n_per_class == 0 {
                    return Err(Error::Config("two moons needs n_per_class >= 1".into()));
                }
                self.population_spec()?;
            }
            DataKind::OneDim => {
                self.population_spec()?;
            }
        }
        Ok(())
    }
}

/// Independent seeds for every random stream a run touches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    /// Weight / logit initialization.
    pub weights: u64,
    /// Data generation, encoding, splitting, epoch shuffling.
    pub data: u64,
    /// Relaxed-sample noise during variational training.
    pub gumbel: u64,
    /// Frozen readout matrices.
    pub readout: u64,
    /// Hard weight samples of the ensemble predictor.
    pub ensemble: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            weights: 1,
            data: 2,
            gumbel: 3,
            readout: 4,
            ensemble: 5,
        }
    }
}

/// Full description of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub rule: TrainRule,
    pub data: DataConfig,
    /// Spiking layer sizes after the input; the last one feeds the
    /// prediction readout.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    /// Learning rate (both rules).
    pub eta: f64,
    /// KL temperature of the variational rule.
    pub rho: f64,
    /// Relaxation temperature of the variational rule.
    pub tau_gs: f64,
    /// Relaxed samples per batch.
    pub gs_samples: usize,
    /// Members of the ensemble predictor.
    pub ensemble_size: usize,
    /// Clamp latent straight-through weights into [-1, 1] after each step.
    pub clip_real: bool,
    /// Prior sign-probability logit (0 = uniform prior over {-1, +1}).
    pub prior_logit: f64,
    pub filter: FilterParams,
    pub seeds: Seeds,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            rule: TrainRule::St,
            data: DataConfig::default(),
            hidden: vec![128],
            epochs: 40,
            batch_size: 16,
            eta: 0.05,
            rho: 1e-4,
            tau_gs: 1.0,
            gs_samples: 1,
            ensemble_size: 10,
            clip_real: false,
            prior_logit: 0.0,
            filter: FilterParams::default(),
            seeds: Seeds::default(),
        }
    }
}

impl TrainRunConfig {
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.filter.validate()?;
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("need at least one nonempty spiking layer".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if self.rule == TrainRule::Bayes {
            crate::train::bayes::BayesHyperparams {
                rho: self.rho,
                tau_gs: self.tau_gs,
                eta: self.eta,
                ensemble_size: self.ensemble_size,
                gs_samples: self.gs_samples,
            }
            .validate()?;
            if !self.prior_logit.is_finite() {
                return Err(Error::Config("prior logit must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Load a config from a JSON file and validate it.
pub fn load_config(path: &Path) -> Result<TrainRunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("reading config {}: {e}", path.display())))?;
    let cfg: TrainRunConfig =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Write a config as pretty JSON.
pub fn save_config(path: &Path, cfg: &TrainRunConfig) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(cfg)?)?;
    Ok(())
}
