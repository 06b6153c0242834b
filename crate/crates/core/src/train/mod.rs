//! Shared mini-batch machinery for the training rules: parallel per-example
//! gradient evaluation with a deterministic, index-ordered reduction, plus
//! the plain SGD update used by the straight-through rule and the
//! full-precision baseline.

pub mod bayes;
pub mod st;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Example, Network};

/// Which learning rule a run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainRule {
    /// Straight-through estimator over sign-binarized latent weights.
    St,
    /// Natural-gradient variational learning of per-weight sign
    /// probabilities with a relaxed reparameterization.
    Bayes,
    /// Real-valued weights, plain SGD (reference baseline).
    Full,
}

/// Mean gradients and loss over one mini-batch.
#[derive(Clone, Debug)]
pub struct BatchStats {
    /// Per-layer gradients averaged over the batch.
    pub mean_gradients: Vec<Array2<f64>>,
    /// Final-layer sequence loss averaged over the batch.
    pub mean_output_loss: f64,
    pub examples: usize,
}

/// Evaluate per-example local gradients at the given weights and average
/// them. Examples run in parallel; the reduction walks the collected results
/// in batch order, so the sums are bit-identical regardless of how many
/// worker threads rayon uses.
pub fn batch_gradients(net: &Network, weights: &[Array2<f64>], batch: &[&Example]) -> Result<BatchStats> {
    if batch.is_empty() {
        return Err(Error::InvalidParam("mini-batch must be nonempty".into()));
    }
    let per_example: Vec<(Vec<Array2<f64>>, f64)> = batch
        .par_iter()
        .map(|ex| {
            let (grads, losses, _) = net.example_gradients(weights, &ex.spikes, &ex.target)?;
            Ok((grads, losses.output_total()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut mean_gradients: Vec<Array2<f64>> = net
        .specs
        .iter()
        .map(|s| Array2::zeros((s.n_out, s.n_in)))
        .collect();
    let mut loss_sum = 0.0;
    for (grads, loss) in &per_example {
        for (acc, g) in mean_gradients.iter_mut().zip(grads) {
            *acc += g;
        }
        loss_sum += loss;
    }
    let n = batch.len() as f64;
    for acc in &mut mean_gradients {
        acc.mapv_inplace(|v| v / n);
    }
    Ok(BatchStats {
        mean_gradients,
        mean_output_loss: loss_sum / n,
        examples: batch.len(),
    })
}

/// In-place SGD step: w <- w - eta * g. Rejects non-finite results.
pub fn apply_sgd_update(weights: &mut [Array2<f64>], grads: &[Array2<f64>], eta: f64) -> Result<()> {
    if weights.len() != grads.len() {
        return Err(Error::DimMismatch("update and weights differ in layer count".into()));
    }
    for (w, g) in weights.iter_mut().zip(grads) {
        if w.dim() != g.dim() {
            return Err(Error::DimMismatch("update and weights differ in shape".into()));
        }
        *w -= &(eta * g);
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weights after SGD update".into()));
        }
    }
    Ok(())
}

/// One step of the full-precision baseline: the same local surrogate
/// gradients, evaluated at the real-valued weights themselves.
pub fn full_precision_step(
    net: &Network,
    weights: &mut Vec<Array2<f64>>,
    batch: &[&Example],
    eta: f64,
) -> Result<f64> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidParam(format!("learning rate must be positive, got {eta}")));
    }
    let stats = batch_gradients(net, weights, batch)?;
    apply_sgd_update(weights, &stats.mean_gradients, eta)?;
    Ok(stats.mean_output_loss)
}
