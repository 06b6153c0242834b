//! Predictors and evaluation metrics: deterministic (point-estimate) and
//! ensemble prediction, accuracy, negative log-likelihood, calibration
//! error, and dense 2D uncertainty grids.

use ndarray::Array2;
use rayon::prelude::*;

use crate::encoding::{population_encode, PopulationCodeSpec};
use crate::error::{Error, Result};
use crate::math::softmax;
use crate::network::{Example, Network, ReadoutKind, Target};
use crate::rng::{keyed_u64, stream};
use crate::spikes::SpikeTensor;
use crate::train::bayes::sample_hard_weights;

/// Probability floor applied inside log-likelihoods.
pub const NLL_FLOOR: f64 = 1e-12;
/// Default number of equal-width confidence bins for calibration error.
pub const DEFAULT_ECE_BINS: usize = 15;

/// A predictive distribution for one example.
#[derive(Clone, Debug, PartialEq)]
pub enum Prediction {
    /// Class probabilities (sum to 1).
    Classification { probs: Vec<f64> },
    /// Per-dimension predictive mean and spread across ensemble members
    /// (zero spread for deterministic predictors).
    Regression { mean: Vec<f64>, std: Vec<f64> },
}

/// A prediction paired with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRecord {
    pub prediction: Prediction,
    pub target: Target,
}

impl PredictionRecord {
    /// Argmax class (first maximum wins). None for regression.
    pub fn predicted_label(&self) -> Option<usize> {
        match &self.prediction {
            Prediction::Classification { probs } => {
                let mut best = 0;
                for (i, &p) in probs.iter().enumerate() {
                    if p > probs[best] {
                        best = i;
                    }
                }
                Some(best)
            }
            Prediction::Regression { .. } => None,
        }
    }

    /// Probability assigned to the predicted class.
    pub fn confidence(&self) -> Option<f64> {
        match &self.prediction {
            Prediction::Classification { probs } => {
                probs.iter().copied().reduce(f64::max)
            }
            Prediction::Regression { .. } => None,
        }
    }

    pub fn correct(&self) -> Option<bool> {
        match (&self.target, self.predicted_label()) {
            (Target::Label(l), Some(pred)) => Some(pred == *l),
            _ => None,
        }
    }
}

/// How to turn a trained state into predictions.
#[derive(Clone, Debug)]
pub enum Predictor<'a> {
    /// One fixed weight assignment (point estimate or real-valued weights).
    Deterministic(&'a [Array2<f64>]),
    /// Average over `k` hard binary weight samples drawn from the
    /// distribution encoded by `logits`; member `m` is a pure function of
    /// (logits, seed, m), so every example sees the same members.
    Ensemble {
        logits: &'a [Array2<f64>],
        k: usize,
        seed: u64,
    },
}

impl Predictor<'_> {
    /// Materialize the weight assignments this predictor averages over.
    fn member_weights(&self) -> Result<Vec<Vec<Array2<f64>>>> {
        match self {
            Predictor::Deterministic(w) => Ok(vec![w.to_vec()]),
            Predictor::Ensemble { logits, k, seed } => {
                if *k == 0 {
                    return Err(Error::InvalidParam("ensemble needs at least one member".into()));
                }
                Ok((0..*k as u64)
                    .map(|m| sample_hard_weights(logits, *seed, m))
                    .collect())
            }
        }
    }
}

/// Readout outputs of the last layer, one vector per time step.
fn output_sequence(net: &Network, weights: &[Array2<f64>], spikes: &SpikeTensor) -> Result<Vec<Vec<f64>>> {
    let traj = net.forward_sequence(weights, spikes)?;
    let head = net.heads.last().expect("network has layers");
    let out = traj.output_spikes();
    (0..out.t_steps())
        .map(|t| {
            let activity: Vec<f64> = out.row(t).iter().map(|&s| s as f64).collect();
            head.outputs(&activity)
        })
        .collect()
}

/// Prediction of a single fixed weight assignment: classification takes the
/// time-averaged softmax of the readout outputs; regression takes the
/// time-averaged readout output.
fn predict_single(net: &Network, weights: &[Array2<f64>], spikes: &SpikeTensor) -> Result<Prediction> {
    let outputs = output_sequence(net, weights, spikes)?;
    let t_steps = outputs.len();
    if t_steps == 0 {
        return Err(Error::InvalidParam("cannot predict from an empty sequence".into()));
    }
    let dim = outputs[0].len();
    let kind = net.heads.last().expect("network has layers").kind;
    match kind {
        ReadoutKind::Classification => {
            let mut probs = vec![0.0; dim];
            for y in &outputs {
                for (acc, p) in probs.iter_mut().zip(softmax(y)) {
                    *acc += p;
                }
            }
            for p in &mut probs {
                *p /= t_steps as f64;
            }
            Ok(Prediction::Classification { probs })
        }
        ReadoutKind::Regression => {
            let mut mean = vec![0.0; dim];
            for y in &outputs {
                for (acc, &v) in mean.iter_mut().zip(y) {
                    *acc += v;
                }
            }
            for m in &mut mean {
                *m /= t_steps as f64;
            }
            let std = vec![0.0; dim];
            Ok(Prediction::Regression { mean, std })
        }
    }
}

fn merge_members(members: Vec<Prediction>) -> Result<Prediction> {
    let k = members.len();
    match &members[0] {
        Prediction::Classification { probs } => {
            let mut avg = vec![0.0; probs.len()];
            for m in &members {
                let Prediction::Classification { probs } = m else {
                    return Err(Error::Incompatible("mixed prediction kinds in ensemble".into()));
                };
                for (a, &p) in avg.iter_mut().zip(probs) {
                    *a += p;
                }
            }
            for a in &mut avg {
                *a /= k as f64;
            }
            Ok(Prediction::Classification { probs: avg })
        }
        Prediction::Regression { mean, .. } => {
            let dim = mean.len();
            let mut avg = vec![0.0; dim];
            let mut sq = vec![0.0; dim];
            for m in &members {
                let Prediction::Regression { mean, .. } = m else {
                    return Err(Error::Incompatible("mixed prediction kinds in ensemble".into()));
                };
                for d in 0..dim {
                    avg[d] += mean[d];
                    sq[d] += mean[d] * mean[d];
                }
            }
            let mut std = vec![0.0; dim];
            for d in 0..dim {
                avg[d] /= k as f64;
                // population variance across members
                std[d] = (sq[d] / k as f64 - avg[d] * avg[d]).max(0.0).sqrt();
            }
            Ok(Prediction::Regression { mean: avg, std })
        }
    }
}

/// Predict one input under the given predictor.
pub fn predict(net: &Network, predictor: &Predictor, spikes: &SpikeTensor) -> Result<Prediction> {
    let members = predictor.member_weights()?;
    let predictions = members
        .iter()
        .map(|w| predict_single(net, w, spikes))
        .collect::<Result<Vec<_>>>()?;
    merge_members(predictions)
}

/// Predict a batch, pairing each prediction with its target. Ensemble
/// members are sampled once and shared across all examples; examples are
/// processed in parallel with ordered results.
pub fn predict_batch(net: &Network, predictor: &Predictor, examples: &[Example]) -> Result<Vec<PredictionRecord>> {
    let members = predictor.member_weights()?;
    examples
        .par_iter()
        .map(|ex| {
            let predictions = members
                .iter()
                .map(|w| predict_single(net, w, &ex.spikes))
                .collect::<Result<Vec<_>>>()?;
            Ok(PredictionRecord {
                prediction: merge_members(predictions)?,
                target: ex.target.clone(),
            })
        })
        .collect()
}

/// Fraction of classification records whose argmax matches the label.
pub fn accuracy(records: &[PredictionRecord]) -> Result<f64> {
    let outcomes: Vec<bool> = records.iter().filter_map(|r| r.correct()).collect();
    if outcomes.is_empty() {
        return Err(Error::InvalidParam("no classification records to score".into()));
    }
    Ok(outcomes.iter().filter(|&&c| c).count() as f64 / outcomes.len() as f64)
}

/// Mean negative log-likelihood of the true class, with probabilities
/// floored at NLL_FLOOR.
pub fn nll(records: &[PredictionRecord]) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for r in records {
        if let (Prediction::Classification { probs }, Target::Label(l)) = (&r.prediction, &r.target) {
            let p = probs.get(*l).copied().ok_or_else(|| {
                Error::DimMismatch(format!("label {l} outside {}-class prediction", probs.len()))
            })?;
            total -= p.max(NLL_FLOOR).ln();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidParam("no classification records to score".into()));
    }
    Ok(total / n as f64)
}

/// Mean squared error of regression records (averaged over dimensions).
pub fn mse(records: &[PredictionRecord]) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for r in records {
        if let (Prediction::Regression { mean, .. }, Target::Vector(truth)) = (&r.prediction, &r.target) {
            if mean.len() != truth.len() {
                return Err(Error::DimMismatch(format!(
                    "prediction dim {} vs target dim {}",
                    mean.len(),
                    truth.len()
                )));
            }
            total += mean
                .iter()
                .zip(truth)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / truth.len() as f64;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidParam("no regression records to score".into()));
    }
    Ok(total / n as f64)
}

/// Expected calibration error over equal-width confidence bins on [0, 1]:
/// sum_b (|bin_b|/N) * |accuracy(bin_b) - mean confidence(bin_b)|. Empty
/// bins contribute nothing.
pub fn expected_calibration_error(records: &[PredictionRecord], n_bins: usize) -> Result<f64> {
    if n_bins == 0 {
        return Err(Error::InvalidParam("calibration needs at least one bin".into()));
    }
    let scored: Vec<(f64, bool)> = records
        .iter()
        .filter_map(|r| Some((r.confidence()?, r.correct()?)))
        .collect();
    if scored.is_empty() {
        return Err(Error::InvalidParam("no classification records to calibrate".into()));
    }
    let mut count = vec![0usize; n_bins];
    let mut conf_sum = vec![0.0; n_bins];
    let mut hit_sum = vec![0usize; n_bins];
    for &(conf, correct) in &scored {
        let bin = ((conf * n_bins as f64) as usize).min(n_bins - 1);
        count[bin] += 1;
        conf_sum[bin] += conf;
        hit_sum[bin] += correct as usize;
    }
    let n = scored.len() as f64;
    let mut ece = 0.0;
    for b in 0..n_bins {
        if count[b] == 0 {
            continue;
        }
        let acc = hit_sum[b] as f64 / count[b] as f64;
        let conf = conf_sum[b] / count[b] as f64;
        ece += (count[b] as f64 / n) * (acc - conf).abs();
    }
    Ok(ece)
}

/// One cell of a dense prediction surface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridCell {
    pub x: f64,
    pub y: f64,
    /// Predicted probability of class 1.
    pub p: f64,
}

/// Evaluate a 2-class predictor over a `resolution` x `resolution` grid
/// spanning `bbox` = (x_min, y_min, x_max, y_max). Cells come out row-major
/// (row r varies y, column c varies x); each point is population-encoded
/// with a seed derived from (encode_seed, r, c).
pub fn uncertainty_grid(
    net: &Network,
    predictor: &Predictor,
    spec: &PopulationCodeSpec,
    bbox: (f64, f64, f64, f64),
    resolution: usize,
    encode_seed: u64,
) -> Result<Vec<GridCell>> {
    if resolution == 0 {
        return Err(Error::InvalidParam("grid resolution must be positive".into()));
    }
    let (x0, y0, x1, y1) = bbox;
    if !(x0 < x1 && y0 < y1) {
        return Err(Error::InvalidParam(format!("degenerate bounding box {bbox:?}")));
    }
    let coord = |lo: f64, hi: f64, i: usize| {
        if resolution == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (resolution - 1) as f64
        }
    };
    let members = predictor.member_weights()?;
    let cells: Vec<(usize, usize)> = (0..resolution)
        .flat_map(|r| (0..resolution).map(move |c| (r, c)))
        .collect();
    cells
        .par_iter()
        .map(|&(r, c)| {
            let x = coord(x0, x1, c);
            let y = coord(y0, y1, r);
            let seed = keyed_u64(encode_seed, &[stream::GRID, r as u64, c as u64]);
            let spikes = population_encode(&[x, y], spec, seed)?;
            let predictions = members
                .iter()
                .map(|w| predict_single(net, w, &spikes))
                .collect::<Result<Vec<_>>>()?;
            match merge_members(predictions)? {
                Prediction::Classification { probs } if probs.len() == 2 => {
                    Ok(GridCell { x, y, p: probs[1] })
                }
                Prediction::Classification { probs } => Err(Error::Incompatible(format!(
                    "uncertainty grid needs a 2-class head, found {} classes",
                    probs.len()
                ))),
                Prediction::Regression { .. } => {
                    Err(Error::Incompatible("uncertainty grid needs a classifier".into()))
                }
            }
        })
        .collect()
}
