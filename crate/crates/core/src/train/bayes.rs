//! Variational training over binary weights: a mean-field Bernoulli
//! posterior parameterized by per-weight logits, updated by a natural
//! gradient step on the free energy (expected loss plus a temperature-scaled
//! KL to a Bernoulli prior). Gradients flow through one relaxed weight sample
//! per batch drawn with the Gumbel-Softmax trick; hard binary weights are
//! recovered for inference by taking the logit signs (MAP) or by sampling.
//!
//! Parameter views: logits x (natural parameters), mean mu = tanh(x),
//! probability of +1 p = sigmoid(2x).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{sigmoid, softplus};
use crate::network::{Example, Network};
use crate::rng::{keyed_uniform, stream};
use crate::train::{batch_gradients, st::binarize};

/// Uniform draws are clamped into [EPS_CLAMP, 1 - EPS_CLAMP] before the
/// logistic transform so the perturbation stays finite.
pub const EPS_CLAMP: f64 = 1e-7;

/// |logit| cap inside the gradient-scale denominator; beyond this the
/// denominator underflows while the true update is saturated anyway.
pub const LOGIT_CAP: f64 = 15.0;

/// Hyperparameters of the variational rule.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BayesHyperparams {
    /// Temperature weighting the KL term (0 allowed: pure loss descent).
    pub rho: f64,
    /// Relaxation temperature of the Gumbel-Softmax sample.
    pub tau_gs: f64,
    /// Natural-gradient learning rate, in (0, 1).
    pub eta: f64,
    /// Number of hard weight samples averaged at prediction time.
    pub ensemble_size: usize,
    /// Relaxed samples averaged per batch (the rule prescribes 1).
    pub gs_samples: usize,
}

impl BayesHyperparams {
    pub fn new(rho: f64, tau_gs: f64, eta: f64) -> Result<Self> {
        let hp = Self {
            rho,
            tau_gs,
            eta,
            ensemble_size: 10,
            gs_samples: 1,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(Error::InvalidParam(format!("temperature must be nonnegative, got {}", self.rho)));
        }
        if !(self.tau_gs.is_finite() && self.tau_gs > 0.0) {
            return Err(Error::InvalidParam(format!(
                "relaxation temperature must be positive, got {}",
                self.tau_gs
            )));
        }
        if !(self.eta.is_finite() && self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidParam(format!(
                "learning rate must lie strictly between 0 and 1, got {}",
                self.eta
            )));
        }
        if self.ensemble_size == 0 || self.gs_samples == 0 {
            return Err(Error::InvalidParam("sample counts must be positive".into()));
        }
        Ok(())
    }
}

/// Probability that a weight is +1: p = sigmoid(2x).
pub fn probability_from_logit(logit: f64) -> f64 {
    sigmoid(2.0 * logit)
}

/// Inverse view: x = (1/2) log(p / (1-p)).
pub fn logit_from_probability(p: f64) -> f64 {
    0.5 * (p / (1.0 - p)).ln()
}

/// Mean view: mu = tanh(x).
pub fn mean_from_logit(logit: f64) -> f64 {
    logit.tanh()
}

/// Logistic perturbation delta = (1/2) log(eps / (1-eps)), with eps clamped
/// away from {0, 1}.
pub fn gumbel_delta(eps: f64) -> f64 {
    let e = eps.clamp(EPS_CLAMP, 1.0 - EPS_CLAMP);
    0.5 * (e / (1.0 - e)).ln()
}

/// Relaxed weight sample w = tanh((x + delta) / tau). For every tau,
/// sign(w) = +1 with probability exactly sigmoid(2x).
pub fn gs_transform(logit: f64, delta: f64, tau: f64) -> f64 {
    ((logit + delta) / tau).tanh()
}

/// Chain factor of the relaxed sample: (1 - w^2) / (tau * sech^2(x)), with
/// |x| capped inside the denominator only.
pub fn gs_gradient_scale(logit: f64, w: f64, tau: f64) -> f64 {
    let capped = logit.clamp(-LOGIT_CAP, LOGIT_CAP);
    let sech = 1.0 / capped.cosh();
    (1.0 - w * w) / (tau * sech * sech)
}

/// Draw one relaxed weight configuration. Uniform draws are addressed by
/// (draw index, layer, row, column), so the sample is reproducible
/// independent of scheduling.
pub fn gs_sample_layers(logits: &[Array2<f64>], tau: f64, seed: u64, draw: u64) -> Vec<Array2<f64>> {
    logits
        .iter()
        .enumerate()
        .map(|(l, x)| {
            Array2::from_shape_fn(x.dim(), |(i, j)| {
                let eps = keyed_uniform(seed, &[stream::GUMBEL, draw, l as u64, i as u64, j as u64]);
                gs_transform(x[[i, j]], gumbel_delta(eps), tau)
            })
        })
        .collect()
}

/// Elementwise gradient scales for a relaxed configuration.
pub fn gs_scale_layers(logits: &[Array2<f64>], relaxed: &[Array2<f64>], tau: f64) -> Vec<Array2<f64>> {
    logits
        .iter()
        .zip(relaxed)
        .map(|(x, w)| {
            Array2::from_shape_fn(x.dim(), |(i, j)| gs_gradient_scale(x[[i, j]], w[[i, j]], tau))
        })
        .collect()
}

/// Natural-gradient update on the logits:
/// x <- (1 - eta * rho) * x - eta * (g_mu - rho * x_prior).
pub fn apply_natural_gradient_update(
    logits: &mut [Array2<f64>],
    mu_grads: &[Array2<f64>],
    prior: &[Array2<f64>],
    eta: f64,
    rho: f64,
) -> Result<()> {
    if logits.len() != mu_grads.len() || logits.len() != prior.len() {
        return Err(Error::DimMismatch("update layers do not match logits".into()));
    }
    for ((x, g), x0) in logits.iter_mut().zip(mu_grads).zip(prior) {
        if x.dim() != g.dim() || x.dim() != x0.dim() {
            return Err(Error::DimMismatch("update shapes do not match logits".into()));
        }
        ndarray::Zip::from(x.view_mut())
            .and(g)
            .and(x0)
            .for_each(|x, &g, &x0| {
                *x = (1.0 - eta * rho) * *x - eta * (g - rho * x0);
            });
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("logits after natural-gradient update".into()));
        }
    }
    Ok(())
}

/// Diagnostics from one variational step.
#[derive(Clone, Copy, Debug)]
pub struct BayesStepInfo {
    /// Final-layer batch loss at the sampled relaxed weights, averaged over
    /// relaxed samples.
    pub mean_loss: f64,
}

/// One variational step: sample relaxed weights, evaluate the batch gradient
/// there, scale it into mean space, and apply the natural-gradient update.
/// `step_index` must be unique per step so every draw is fresh.
pub fn bayes_step(
    net: &Network,
    logits: &mut Vec<Array2<f64>>,
    prior: &[Array2<f64>],
    batch: &[&Example],
    hp: &BayesHyperparams,
    gumbel_seed: u64,
    step_index: u64,
) -> Result<BayesStepInfo> {
    hp.validate()?;
    let mut mu_grads: Vec<Array2<f64>> = logits.iter().map(|x| Array2::zeros(x.dim())).collect();
    let mut loss_sum = 0.0;
    for s in 0..hp.gs_samples {
        let draw = step_index
            .wrapping_mul(hp.gs_samples as u64)
            .wrapping_add(s as u64);
        let relaxed = gs_sample_layers(logits, hp.tau_gs, gumbel_seed, draw);
        let stats = batch_gradients(net, &relaxed, batch)?;
        let scales = gs_scale_layers(logits, &relaxed, hp.tau_gs);
        for ((acc, g), sc) in mu_grads.iter_mut().zip(&stats.mean_gradients).zip(&scales) {
            *acc += &(g * sc);
        }
        loss_sum += stats.mean_output_loss;
    }
    let k = hp.gs_samples as f64;
    for acc in &mut mu_grads {
        acc.mapv_inplace(|v| v / k);
    }
    apply_natural_gradient_update(logits, &mu_grads, prior, hp.eta, hp.rho)?;
    Ok(BayesStepInfo {
        mean_loss: loss_sum / k,
    })
}

/// KL divergence between single-weight Bernoulli factors given by logits:
/// KL(p || pi) with p = sigmoid(2x), pi = sigmoid(2x0). Evaluated via
/// softplus identities (log p = -softplus(-2x), log(1-p) = -softplus(2x)),
/// which stay finite for extreme logits.
pub fn bernoulli_kl(logit: f64, prior_logit: f64) -> f64 {
    let p = sigmoid(2.0 * logit);
    let kl = p * (softplus(-2.0 * prior_logit) - softplus(-2.0 * logit))
        + (1.0 - p) * (softplus(2.0 * prior_logit) - softplus(2.0 * logit));
    kl.max(0.0)
}

/// Total KL from the posterior factors to the prior factors.
pub fn kl_to_prior(logits: &[Array2<f64>], prior: &[Array2<f64>]) -> f64 {
    logits
        .iter()
        .zip(prior)
        .flat_map(|(x, x0)| x.iter().zip(x0.iter()))
        .map(|(&x, &x0)| bernoulli_kl(x, x0))
        .sum()
}

/// Monitored objective: expected-loss estimate plus rho times the KL term.
pub fn free_energy(mean_loss_estimate: f64, logits: &[Array2<f64>], prior: &[Array2<f64>], rho: f64) -> f64 {
    mean_loss_estimate + rho * kl_to_prior(logits, prior)
}

/// Most probable binary weights: elementwise sign of the logits
/// (equivalently sign(2 * sigmoid(2x) - 1), since that equals tanh(x)).
pub fn map_weights(logits: &[Array2<f64>]) -> Vec<Array2<f64>> {
    binarize(logits)
}

/// Draw one hard binary configuration: each weight is +1 with probability
/// sigmoid(2x), addressed by (draw index, layer, row, column).
pub fn sample_hard_weights(logits: &[Array2<f64>], seed: u64, draw: u64) -> Vec<Array2<f64>> {
    logits
        .iter()
        .enumerate()
        .map(|(l, x)| {
            Array2::from_shape_fn(x.dim(), |(i, j)| {
                let u = keyed_uniform(seed, &[stream::ENSEMBLE, draw, l as u64, i as u64, j as u64]);
                if u < probability_from_logit(x[[i, j]]) {
                    1.0
                } else {
                    -1.0
                }
            })
        })
        .collect()
}

/// Chi-square statistic (1 degree of freedom) of the relaxed-sample sign law
/// against P(w > 0) = sigmoid(2 * logit), over n draws.
pub fn sign_law_chi_square(logit: f64, tau: f64, n: usize, seed: u64) -> f64 {
    let mut positive = 0usize;
    for i in 0..n {
        let eps = keyed_uniform(seed, &[stream::GUMBEL, i as u64]);
        if gs_transform(logit, gumbel_delta(eps), tau) > 0.0 {
            positive += 1;
        }
    }
    let expect_pos = n as f64 * probability_from_logit(logit);
    let expect_neg = n as f64 - expect_pos;
    let obs_pos = positive as f64;
    let obs_neg = (n - positive) as f64;
    (obs_pos - expect_pos).powi(2) / expect_pos + (obs_neg - expect_neg).powi(2) / expect_neg
}

/// Monte Carlo check of the relaxed gradient estimator against exhaustive
/// enumeration of the expected-loss gradient in mean space.
#[derive(Clone, Debug)]
pub struct EstimatorCheck {
    pub exact: Vec<f64>,
    pub mc_mean: Vec<f64>,
    pub mc_stderr: Vec<f64>,
}

impl EstimatorCheck {
    /// Largest |mc_mean - exact| in units of the Monte Carlo standard error.
    pub fn max_abs_z(&self) -> f64 {
        self.exact
            .iter()
            .zip(&self.mc_mean)
            .zip(&self.mc_stderr)
            .map(|((&e, &m), &se)| {
                let diff = (m - e).abs();
                if se == 0.0 {
                    if diff == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    diff / se
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Run the estimator on a differentiable toy loss over a few weights:
/// per sample, draw relaxed weights, evaluate the analytic loss gradient
/// there, and scale it into mean space; compare the running mean against the
/// enumeration oracle. `loss` is evaluated by the oracle at hard signs;
/// `loss_grad` is the analytic gradient of the same expression at relaxed
/// points.
pub fn estimator_mc_check<L, G>(
    logits: &[f64],
    loss: L,
    loss_grad: G,
    tau: f64,
    n_samples: usize,
    seed: u64,
) -> Result<EstimatorCheck>
where
    L: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    if n_samples < 2 {
        return Err(Error::InvalidParam("estimator check needs at least 2 samples".into()));
    }
    let m = logits.len();
    let exact = crate::oracle::exact_mean_gradient(logits, &loss)?;
    let mut mean = vec![0.0; m];
    let mut m2 = vec![0.0; m];
    let mut w = vec![0.0; m];
    for s in 0..n_samples {
        for (k, wk) in w.iter_mut().enumerate() {
            let eps = keyed_uniform(seed, &[stream::GUMBEL, s as u64, k as u64]);
            *wk = gs_transform(logits[k], gumbel_delta(eps), tau);
        }
        let g = loss_grad(&w);
        let count = (s + 1) as f64;
        for k in 0..m {
            let est = g[k] * gs_gradient_scale(logits[k], w[k], tau);
            let delta = est - mean[k];
            mean[k] += delta / count;
            m2[k] += delta * (est - mean[k]);
        }
    }
    let n = n_samples as f64;
    let mc_stderr = m2.iter().map(|&v| (v / ((n - 1.0) * n)).sqrt()).collect();
    Ok(EstimatorCheck {
        exact,
        mc_mean: mean,
        mc_stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ReadoutKind, Target};
    use crate::rng::keyed_uniform;
    use crate::spikes::SpikeTensor;
    use crate::srm::FilterParams;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn hyperparam_validation() {
        assert!(BayesHyperparams::new(0.0, 1.0, 0.5).is_ok());
        assert!(BayesHyperparams::new(-0.1, 1.0, 0.5).is_err());
        assert!(BayesHyperparams::new(0.1, 0.0, 0.5).is_err());
        assert!(BayesHyperparams::new(0.1, 1.0, 1.0).is_err());
        assert!(BayesHyperparams::new(0.1, 1.0, 0.0).is_err());
    }

    #[test]
    fn relaxed_sample_examples() {
        assert_eq!(gumbel_delta(0.5), 0.0);
        assert_eq!(gs_transform(0.0, 0.0, 1.0), 0.0);
        assert_relative_eq!(gs_transform(1.0, 0.0, 0.5), 0.9640275800758169, epsilon = 1e-15);
        assert!(gumbel_delta(0.0).is_finite() && gumbel_delta(1.0).is_finite());
        assert!(gumbel_delta(0.0) < -7.0 && gumbel_delta(1.0) > 7.0);
    }

    #[test]
    fn gradient_scale_examples() {
        assert_relative_eq!(gs_gradient_scale(0.0, 0.0, 1.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(gs_gradient_scale(0.0, 0.0, 0.5), 2.0, epsilon = 1e-15);
        let w = gs_transform(1.0, 0.0, 1.0);
        assert_relative_eq!(gs_gradient_scale(1.0, w, 1.0), 1.0, epsilon = 1e-12);
        // the capped denominator keeps extreme logits finite
        assert!(gs_gradient_scale(40.0, 0.3, 1.0).is_finite());
        assert!(gs_gradient_scale(-40.0, 0.3, 1.0).is_finite());
    }

    #[test]
    fn parameter_views_round_trip() {
        for i in 0..1000 {
            let p = 1e-6 + (1.0 - 2e-6) * keyed_uniform(5, &[i]);
            let x = logit_from_probability(p);
            assert_relative_eq!(probability_from_logit(x), p, epsilon = 1e-9);
        }
        // mean/logit round trip: exact to ~1e-9 through |x| ~ 9; the tanh
        // rounding itself costs a few 1e-9 by |x| = 10
        for i in 0..1000 {
            let x = 18.0 * keyed_uniform(6, &[i]) - 9.0;
            assert_relative_eq!(mean_from_logit(x).atanh(), x, epsilon = 1e-9, max_relative = 1e-9);
        }
        let x = 10.0;
        assert!((mean_from_logit(x).atanh() - x).abs() < 1e-8);
    }

    #[test]
    fn sign_law_chi_square_passes() {
        for (i, &tau) in [0.05, 0.5, 1.0].iter().enumerate() {
            let chi2 = sign_law_chi_square(0.5, tau, 100_000, 1000 + i as u64);
            assert!(chi2 < 6.635, "tau={tau}: chi2={chi2}");
        }
    }

    #[test]
    fn prior_fixed_point_contraction() {
        // dyadic eta and rho make the contraction factor exact: eta*rho =
        // 0.125, decay 0.875
        let eta = 0.5;
        let rho = 0.25;
        // zero prior: the deviation shrinks by exactly the decay factor
        let mut logits = vec![array![[0.8, -0.3], [0.1, 1.6]]];
        let prior = vec![Array2::zeros((2, 2))];
        let zero = vec![Array2::zeros((2, 2))];
        let mut tracker = logits[0].clone();
        for _ in 0..60 {
            apply_natural_gradient_update(&mut logits, &zero, &prior, eta, rho).unwrap();
            tracker.mapv_inplace(|v| 0.875 * v);
            assert_eq!(logits[0], tracker);
        }
        // general prior: geometric convergence to the prior within rounding
        let mut logits: Vec<Array2<f64>> = vec![array![[2.0, -1.0]]];
        let prior: Vec<Array2<f64>> = vec![array![[0.4, 0.6]]];
        let zero = vec![Array2::zeros((1, 2))];
        let d0: f64 = logits[0]
            .iter()
            .zip(prior[0].iter())
            .map(|(&x, &x0)| (x - x0).abs())
            .fold(0.0, f64::max);
        for k in 1..=50 {
            apply_natural_gradient_update(&mut logits, &zero, &prior, eta, rho).unwrap();
            let d: f64 = logits[0]
                .iter()
                .zip(prior[0].iter())
                .map(|(&x, &x0)| (x - x0).abs())
                .fold(0.0, f64::max);
            let bound = 0.875f64.powi(k) * d0;
            assert!((d - bound).abs() <= 1e-12 * d0, "step {k}: {d} vs {bound}");
        }
    }

    #[test]
    fn kl_values() {
        assert_eq!(bernoulli_kl(0.7, 0.7), 0.0);
        assert_relative_eq!(bernoulli_kl(0.5, 0.0), 0.11094407167172735, epsilon = 1e-14);
        // stable form agrees with the direct expression at moderate logits
        for i in 0..200 {
            let x = 6.0 * keyed_uniform(7, &[i]) - 3.0;
            let x0 = 6.0 * keyed_uniform(8, &[i]) - 3.0;
            let p = probability_from_logit(x);
            let q = probability_from_logit(x0);
            let direct = p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
            assert_relative_eq!(bernoulli_kl(x, x0), direct, epsilon = 1e-12, max_relative = 1e-9);
        }
        // extreme logits stay finite and nonnegative
        assert!(bernoulli_kl(40.0, -40.0).is_finite());
        assert!(bernoulli_kl(-300.0, 300.0) >= 0.0);
    }

    #[test]
    fn free_energy_composition() {
        let logits = vec![array![[0.5]]];
        let prior = vec![array![[0.0]]];
        assert_eq!(free_energy(1.25, &logits, &prior, 0.0), 1.25);
        assert_relative_eq!(
            free_energy(1.25, &logits, &prior, 2.0),
            1.25 + 2.0 * 0.11094407167172735,
            epsilon = 1e-12
        );
    }

    #[test]
    fn map_weights_match_direct_expression() {
        let logits = vec![array![[0.0, -2.0, 0.3]]];
        let map = map_weights(&logits);
        assert_eq!(map[0], array![[1.0, -1.0, 1.0]]);
        for i in 0..10_000 {
            let x = 40.0 * keyed_uniform(9, &[i]) - 20.0;
            let direct = if 2.0 * sigmoid(2.0 * x) - 1.0 >= 0.0 { 1.0 } else { -1.0 };
            let m = map_weights(&[array![[x]]])[0][[0, 0]];
            assert_eq!(m, direct);
        }
    }

    #[test]
    fn hard_samples_follow_the_probability() {
        let logits = vec![array![[0.6]]];
        let p = probability_from_logit(0.6);
        let n = 20_000;
        let mut hits = 0usize;
        for draw in 0..n {
            let w = sample_hard_weights(&logits, 11, draw as u64);
            let v = w[0][[0, 0]];
            assert!(v == 1.0 || v == -1.0);
            if v == 1.0 {
                hits += 1;
            }
        }
        let rate = hits as f64 / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((rate - p).abs() < 3.0 * sigma, "rate {rate} vs p {p}");
    }

    #[test]
    fn update_rules_share_structure_on_common_inputs() {
        // the two rules evaluated on the same scalar inputs, against
        // independently hand-written arithmetic
        let wr = 0.7;
        let g = 0.3;
        let eta = 0.25;
        let rho = 0.5;
        let prior = 0.2;
        let delta = 0.1;
        let tau = 0.8;

        // straight-through row: forward at sign(wr), then wr - eta * g
        let hard = binarize(&[array![[wr]]]);
        assert_eq!(hard[0][[0, 0]], 1.0);
        let mut st_w = vec![array![[wr]]];
        crate::train::apply_sgd_update(&mut st_w, &[array![[g]]], eta).unwrap();
        assert_relative_eq!(st_w[0][[0, 0]], wr - eta * g, epsilon = 1e-15);

        // variational row: forward at tanh((wr + delta) / tau), gradient
        // rescaled by (1 - w^2) / (tau * sech^2(wr)), then the natural step
        let w = gs_transform(wr, delta, tau);
        assert_relative_eq!(w, ((wr + delta) / tau).tanh(), epsilon = 1e-15);
        let scale = gs_gradient_scale(wr, w, tau);
        let expected_scale = (1.0 - w * w) / (tau * (1.0 - wr.tanh().powi(2)));
        assert_relative_eq!(scale, expected_scale, max_relative = 1e-12);
        let mut logits = vec![array![[wr]]];
        apply_natural_gradient_update(
            &mut logits,
            &[array![[g * scale]]],
            &[array![[prior]]],
            eta,
            rho,
        )
        .unwrap();
        let expected = (1.0 - eta * rho) * wr - eta * (g * scale - rho * prior);
        assert_relative_eq!(logits[0][[0, 0]], expected, epsilon = 1e-15);
    }

    #[test]
    fn silent_batch_reduces_to_prior_decay() {
        let net = Network::with_random_heads(
            &[3, 4, 2],
            2,
            ReadoutKind::Classification,
            FilterParams::default(),
            13,
        )
        .unwrap();
        let mut logits: Vec<Array2<f64>> = net
            .specs
            .iter()
            .map(|s| Array2::from_elem((s.n_out, s.n_in), 0.8))
            .collect();
        let prior: Vec<Array2<f64>> = net
            .specs
            .iter()
            .map(|s| Array2::from_elem((s.n_out, s.n_in), 0.2))
            .collect();
        let hp = BayesHyperparams::new(0.5, 1.0, 0.25).unwrap();
        let ex = Example {
            spikes: SpikeTensor::zeros(10, 3),
            target: Target::Label(0),
        };
        bayes_step(&net, &mut logits, &prior, &[&ex], &hp, 21, 0).unwrap();
        let expected = (1.0 - 0.25 * 0.5) * 0.8 - 0.25 * (0.0 - 0.5 * 0.2);
        for x in &logits {
            for &v in x.iter() {
                assert_relative_eq!(v, expected, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn estimator_matches_enumeration_on_toy_loss() {
        let logits = [0.4, -0.6, 0.2];
        let loss = |w: &[f64]| 0.9 * w[0] - 0.5 * w[1] + 0.3 * w[0] * w[2] + 0.1 * w[1] * w[2];
        let grad = |w: &[f64]| {
            vec![
                0.9 + 0.3 * w[2],
                -0.5 + 0.1 * w[2],
                0.3 * w[0] + 0.1 * w[1],
            ]
        };
        let check = estimator_mc_check(&logits, loss, grad, 0.05, 20_000, 77).unwrap();
        assert!(check.max_abs_z() <= 4.0, "z = {}", check.max_abs_z());
    }
}
