//! Straight-through training over binary weights: latent real-valued weights
//! are quantized to {+1,-1} for every forward pass, gradients are taken at
//! the binary point, and plain SGD updates the latent weights.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Example, Network};
use crate::rng::{keyed_uniform, stream};
use crate::train::{apply_sgd_update, batch_gradients};

/// Hyperparameters of the straight-through rule.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StConfig {
    /// SGD learning rate.
    pub eta: f64,
    /// Clip latent weights to [-1, 1] after each update (off by default; the
    /// plain rule leaves them unbounded).
    pub clip_real: bool,
}

impl StConfig {
    pub fn new(eta: f64, clip_real: bool) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidParam(format!("learning rate must be positive, got {eta}")));
        }
        Ok(Self { eta, clip_real })
    }
}

/// Elementwise sign with sign(0) = +1. Idempotent on {+1,-1} matrices.
pub fn binarize(real: &[Array2<f64>]) -> Vec<Array2<f64>> {
    real.iter()
        .map(|w| w.mapv(|v| if v >= 0.0 { 1.0 } else { -1.0 }))
        .collect()
}

/// Latent weights drawn uniformly from [-0.1, 0.1], addressed by layer and
/// position so the draw is independent of evaluation order.
pub fn init_real_weights(net: &Network, seed: u64) -> Vec<Array2<f64>> {
    net.specs
        .iter()
        .enumerate()
        .map(|(l, spec)| {
            Array2::from_shape_fn((spec.n_out, spec.n_in), |(i, j)| {
                let u = keyed_uniform(seed, &[stream::WEIGHT_INIT, l as u64, i as u64, j as u64]);
                0.2 * u - 0.1
            })
        })
        .collect()
}

/// One straight-through step: binarize, take the batch gradient at the
/// binary weights, and apply SGD to the latent weights. The binary weights
/// are regenerated from scratch each step, so quantization error never
/// accumulates. Returns the mean final-layer loss of the batch.
pub fn st_step(
    net: &Network,
    w_real: &mut Vec<Array2<f64>>,
    batch: &[&Example],
    cfg: &StConfig,
) -> Result<f64> {
    let w_bin = binarize(w_real);
    let stats = batch_gradients(net, &w_bin, batch)?;
    apply_sgd_update(w_real, &stats.mean_gradients, cfg.eta)?;
    if cfg.clip_real {
        for w in w_real.iter_mut() {
            w.mapv_inplace(|v| v.clamp(-1.0, 1.0));
        }
    }
    Ok(stats.mean_output_loss)
}
