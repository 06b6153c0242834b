//! Versioned JSON checkpoints: the full trained state of a run.
//!
//! JSON floats are written in shortest round-trip form, so reloading a
//! checkpoint reproduces every weight bit-for-bit.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::TrainRunConfig;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::train::{bayes, st, TrainRule};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to rebuild a trained model: architecture (including
/// the frozen readout matrices), trained parameters, and the config echo.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub rule: TrainRule,
    pub network: Network,
    /// Trained per-layer parameters: latent real weights for the
    /// straight-through rule, sign-probability logits for the variational
    /// rule, plain weights for the full-precision baseline.
    pub params: Vec<Array2<f64>>,
    /// Prior logits of the variational rule (None for the others).
    pub prior_logits: Option<Vec<Array2<f64>>>,
    pub config: TrainRunConfig,
    /// Label names in index order, when the dataset provides them.
    pub label_names: Option<Vec<String>>,
    pub epochs_trained: usize,
}

impl Checkpoint {
    pub fn validate(&self) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedHeader(format!(
                "checkpoint version {} (supported: {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        self.network.check_weight_shapes(&self.params)?;
        if let Some(prior) = &self.prior_logits {
            self.network.check_weight_shapes(prior)?;
        }
        if self.rule == TrainRule::Bayes && self.prior_logits.is_none() {
            return Err(Error::Incompatible(
                "variational checkpoint is missing its prior logits".into(),
            ));
        }
        Ok(())
    }

    /// The weights a deterministic (point-estimate) prediction uses:
    /// sign-binarized for the straight-through rule, the most probable
    /// signs for the variational rule, the stored reals for the baseline.
    pub fn inference_weights(&self) -> Vec<Array2<f64>> {
        match self.rule {
            TrainRule::St => st::binarize(&self.params),
            TrainRule::Bayes => bayes::map_weights(&self.params),
            TrainRule::Full => self.params.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        ckpt.validate()?;
        Ok(ckpt)
    }
}
