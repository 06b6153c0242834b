//! Independent reference computations used to cross-check the production
//! code: direct convolution sums, central finite differences, exhaustive
//! enumeration over binary weight assignments, and the frozen-trajectory
//! gradient check. Nothing here is used on a training path; the `gradcheck`
//! command and the test suites compare production results against these.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::network::{local_loss_and_errors, Network, ReadoutKind, Target};
use crate::rng::{keyed_u64, keyed_uniform};
use crate::spikes::SpikeTensor;
use crate::srm::FilterParams;

/// Largest number of binary weights the enumeration oracles accept (2^n
/// assignments are visited).
pub const MAX_ENUM_WEIGHTS: usize = 16;

/// Step size for central finite differences in the gradient checks.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for relative gradient errors. Entries whose analytic
/// and finite-difference values both sit below this magnitude are compared
/// absolutely at floor * rtol, which stays an order of magnitude above the
/// expected finite-difference round-off for these loss scales.
pub const GRAD_CHECK_FLOOR: f64 = 2e-5;

/// Presynaptic trace by direct convolution: p_t = sum_{d > 0} a_d s_{t-d}
/// with a_d = exp(-d/tau_mem) - exp(-d/tau_syn). Output index t is the trace
/// seen *before* the spike at t is absorbed.
pub fn direct_alpha_trace(train: &[u8], tau_mem: f64, tau_syn: f64) -> Vec<f64> {
    (0..train.len())
        .map(|t| {
            (1..=t)
                .map(|d| {
                    let df = d as f64;
                    ((-df / tau_mem).exp() - (-df / tau_syn).exp()) * train[t - d] as f64
                })
                .sum()
        })
        .collect()
}

/// Refractory trace by direct convolution: r_t = sum_{d > 0} exp(-d/tau_ref) s_{t-d}.
pub fn direct_beta_trace(train: &[u8], tau_ref: f64) -> Vec<f64> {
    (0..train.len())
        .map(|t| {
            (1..=t)
                .map(|d| (-(d as f64) / tau_ref).exp() * train[t - d] as f64)
                .sum()
        })
        .collect()
}

/// Central finite differences of `f` with respect to every coordinate.
pub fn finite_difference<F: FnMut(&[f64]) -> f64>(point: &[f64], h: f64, mut f: F) -> Vec<f64> {
    let mut x = point.to_vec();
    let mut grad = vec![0.0; point.len()];
    for k in 0..point.len() {
        let orig = x[k];
        x[k] = orig + h;
        let plus = f(&x);
        x[k] = orig - h;
        let minus = f(&x);
        x[k] = orig;
        grad[k] = (plus - minus) / (2.0 * h);
    }
    grad
}

fn check_enum_size(n: usize) -> Result<()> {
    if n > MAX_ENUM_WEIGHTS {
        return Err(Error::InvalidParam(format!(
            "enumeration over {n} weights exceeds the {MAX_ENUM_WEIGHTS}-weight limit"
        )));
    }
    Ok(())
}

/// Write the sign assignment for enumeration index `index` into `out`:
/// bit k of the index set means w_k = +1, clear means w_k = -1.
pub fn signs_for_index(index: usize, out: &mut [f64]) {
    for (k, w) in out.iter_mut().enumerate() {
        *w = if (index >> k) & 1 == 1 { 1.0 } else { -1.0 };
    }
}

/// Probability of a full sign assignment under independent factors with
/// P(w_k = +1) = sigmoid(2 * logits_k), i.e. P(w_k) = sigmoid(2 * logits_k * w_k).
pub fn assignment_probability(logits: &[f64], signs: &[f64]) -> f64 {
    logits
        .iter()
        .zip(signs)
        .map(|(&x, &w)| sigmoid(2.0 * x * w))
        .product()
}

/// Exact gradient of the expected loss with respect to the mean parameters
/// mu_k = tanh(logits_k), by exhaustive enumeration:
/// d/dmu_k = 1/2 * sum over the other weights' assignments of
/// q(others) * [L(w_k = +1, others) - L(w_k = -1, others)].
pub fn exact_mean_gradient<F: Fn(&[f64]) -> f64>(logits: &[f64], loss: F) -> Result<Vec<f64>> {
    let n = logits.len();
    check_enum_size(n)?;
    let mut grad = vec![0.0; n];
    let mut signs = vec![0.0; n];
    for (k, g) in grad.iter_mut().enumerate() {
        let others: Vec<usize> = (0..n).filter(|&j| j != k).collect();
        for idx in 0..(1usize << others.len()) {
            let mut q = 1.0;
            for (bit, &j) in others.iter().enumerate() {
                signs[j] = if (idx >> bit) & 1 == 1 { 1.0 } else { -1.0 };
                q *= sigmoid(2.0 * logits[j] * signs[j]);
            }
            signs[k] = 1.0;
            let plus = loss(&signs);
            signs[k] = -1.0;
            let minus = loss(&signs);
            *g += 0.5 * q * (plus - minus);
        }
    }
    Ok(grad)
}

/// Normalized probability table over all 2^n sign assignments, proportional
/// to prior(w) * exp(-loss(w) / rho). Indexed by the `signs_for_index`
/// convention. Computed in log space.
pub fn gibbs_posterior<F: Fn(&[f64]) -> f64>(prior_logits: &[f64], rho: f64, loss: F) -> Result<Vec<f64>> {
    let n = prior_logits.len();
    check_enum_size(n)?;
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::InvalidParam(format!("temperature must be positive, got {rho}")));
    }
    let count = 1usize << n;
    let mut logs = vec![0.0; count];
    let mut signs = vec![0.0; n];
    for (idx, lg) in logs.iter_mut().enumerate() {
        signs_for_index(idx, &mut signs);
        let log_prior: f64 = prior_logits
            .iter()
            .zip(&signs)
            .map(|(&x, &w)| sigmoid(2.0 * x * w).ln())
            .sum();
        *lg = log_prior - loss(&signs) / rho;
    }
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut table: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = table.iter().sum();
    for p in &mut table {
        *p /= z;
    }
    Ok(table)
}

/// Probability-weighted average of a vector-valued function over all sign
/// assignments, under P(w_k = +1) = sigmoid(2 * logits_k).
pub fn enumerate_expectation<F: Fn(&[f64]) -> Vec<f64>>(logits: &[f64], f: F) -> Result<Vec<f64>> {
    let n = logits.len();
    check_enum_size(n)?;
    let mut signs = vec![0.0; n];
    let mut acc: Option<Vec<f64>> = None;
    for idx in 0..(1usize << n) {
        signs_for_index(idx, &mut signs);
        let q = assignment_probability(logits, &signs);
        let v = f(&signs);
        match &mut acc {
            None => acc = Some(v.iter().map(|&x| q * x).collect()),
            Some(a) => {
                for (s, &x) in a.iter_mut().zip(&v) {
                    *s += q * x;
                }
            }
        }
    }
    Ok(acc.unwrap_or_default())
}

/// Loss of one layer under the frozen-trajectory smoothing: presynaptic and
/// refractory traces stay at their recorded values while the weights vary,
/// and spikes are replaced by sigmoid(steepness * (u - threshold)).
fn smoothed_layer_loss(
    net: &Network,
    layer: usize,
    w_flat: &[f64],
    presyn: &Array2<f64>,
    refractory: &Array2<f64>,
    target: &Target,
) -> f64 {
    let spec = &net.specs[layer];
    let steep = net.params.surrogate_steepness;
    let thr = net.params.threshold;
    let t_steps = presyn.nrows();
    let mut smoothed = vec![0.0; spec.n_out];
    let mut total = 0.0;
    for t in 0..t_steps {
        let p = presyn.row(t);
        let p = p.as_slice().expect("presyn row-major");
        let r = refractory.row(t);
        let r = r.as_slice().expect("refractory row-major");
        for i in 0..spec.n_out {
            let row = &w_flat[i * spec.n_in..(i + 1) * spec.n_in];
            let u = spec.scale * row.iter().zip(p).map(|(&w, &pj)| w * pj).sum::<f64>() - r[i];
            smoothed[i] = sigmoid(steep * (u - thr));
        }
        total += local_loss_and_errors(&net.heads[layer], &smoothed, target)
            .expect("smoothed loss evaluates")
            .value;
    }
    total
}

/// Frozen-trajectory gradient check. Records a forward pass, forms the
/// smoothed per-layer losses with traces held fixed, and compares the
/// production gradient kernel (with error signals evaluated on the smoothed
/// outputs) against central finite differences over every weight. Returns
/// the maximum relative error, with near-zero entries compared against
/// `GRAD_CHECK_FLOOR`. The identity holds at surrogate steepness 1.
pub fn frozen_trajectory_max_rel_err(
    net: &Network,
    weights: &[Array2<f64>],
    inputs: &SpikeTensor,
    target: &Target,
) -> Result<f64> {
    let traj = net.forward_sequence(weights, inputs)?;
    let steep = net.params.surrogate_steepness;
    let thr = net.params.threshold;

    let mut smoothed_errors = Vec::with_capacity(net.n_layers());
    for (l, record) in traj.layers.iter().enumerate() {
        let n_out = net.specs[l].n_out;
        let t_steps = record.potentials.nrows();
        let mut errs = Array2::zeros((t_steps, n_out));
        for t in 0..t_steps {
            let smoothed: Vec<f64> = record
                .potentials
                .row(t)
                .iter()
                .map(|&u| sigmoid(steep * (u - thr)))
                .collect();
            let step = local_loss_and_errors(&net.heads[l], &smoothed, target)?;
            errs.row_mut(t)
                .into_slice()
                .expect("error row is contiguous")
                .copy_from_slice(&step.error_signals);
        }
        smoothed_errors.push(errs);
    }
    let analytic = net.local_gradient(&traj, &smoothed_errors)?;

    let mut worst = 0.0f64;
    for (l, record) in traj.layers.iter().enumerate() {
        let flat: Vec<f64> = weights[l].iter().cloned().collect();
        let fd = finite_difference(&flat, FD_STEP, |wf| {
            smoothed_layer_loss(net, l, wf, &record.presyn, &record.refractory, target)
        });
        for (&a, &b) in analytic[l].iter().zip(&fd) {
            let denom = a.abs().max(b.abs()).max(GRAD_CHECK_FLOOR);
            worst = worst.max((a - b).abs() / denom);
        }
    }
    Ok(worst)
}

/// One randomized configuration for the gradient-check suite.
pub struct CheckCase {
    pub net: Network,
    pub weights: Vec<Array2<f64>>,
    pub inputs: SpikeTensor,
    pub target: Target,
    pub description: String,
}

/// Deterministically derive a random two-layer check case from a seed:
/// layer widths up to 16, up to 20 time steps, both loss kinds, and both
/// continuous and hard-sign weight values.
pub fn random_check_case(seed: u64) -> CheckCase {
    let pick = |tag: u64, lo: u64, hi: u64| lo + keyed_u64(seed, &[tag]) % (hi - lo + 1);
    let n_in = pick(1, 2, 16) as usize;
    let n_hidden = pick(2, 2, 16) as usize;
    let n_last = pick(3, 2, 16) as usize;
    let t_steps = pick(4, 5, 20) as usize;
    let classification = keyed_u64(seed, &[5]).is_multiple_of(2);
    let kind = if classification {
        ReadoutKind::Classification
    } else {
        ReadoutKind::Regression
    };
    let readout_dim = if classification {
        pick(6, 2, 4) as usize
    } else {
        pick(6, 1, 3) as usize
    };
    let hard_signs = keyed_u64(seed, &[7]).is_multiple_of(2);
    let net = Network::with_random_heads(
        &[n_in, n_hidden, n_last],
        readout_dim,
        kind,
        FilterParams::default(),
        keyed_u64(seed, &[8]),
    )
    .expect("valid check-case network");
    let weights: Vec<Array2<f64>> = net
        .specs
        .iter()
        .enumerate()
        .map(|(l, spec)| {
            Array2::from_shape_fn((spec.n_out, spec.n_in), |(i, j)| {
                let v = 2.0 * keyed_uniform(seed, &[9, l as u64, i as u64, j as u64]) - 1.0;
                if hard_signs {
                    if v >= 0.0 {
                        1.0
                    } else {
                        -1.0
                    }
                } else {
                    v
                }
            })
        })
        .collect();
    let inputs = SpikeTensor::from_fn(t_steps, n_in, |t, j| {
        keyed_uniform(seed, &[10, t as u64, j as u64]) < 0.35
    });
    let target = if classification {
        Target::Label((keyed_u64(seed, &[11]) % readout_dim as u64) as usize)
    } else {
        Target::Vector(
            (0..readout_dim)
                .map(|k| keyed_uniform(seed, &[12, k as u64]) - 0.5)
                .collect(),
        )
    };
    let description = format!(
        "{}x{}x{} T={} {} {} weights",
        n_in,
        n_hidden,
        n_last,
        t_steps,
        if classification { "classification" } else { "regression" },
        if hard_signs { "sign" } else { "real" },
    );
    CheckCase {
        net,
        weights,
        inputs,
        target,
        description,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn finite_difference_on_polynomial() {
        let grad = finite_difference(&[2.0, -1.0], 1e-6, |x| x[0] * x[0] + 3.0 * x[1]);
        assert_relative_eq!(grad[0], 4.0, epsilon = 1e-8);
        assert_relative_eq!(grad[1], 3.0, epsilon = 1e-8);
    }

    #[test]
    fn sign_indexing_convention() {
        let mut signs = vec![0.0; 3];
        signs_for_index(0b101, &mut signs);
        assert_eq!(signs, vec![1.0, -1.0, 1.0]);
    }

    #[test]
    fn assignment_probabilities_sum_to_one() {
        let logits = [0.3, -1.2, 0.7];
        let mut signs = vec![0.0; 3];
        let total: f64 = (0..8)
            .map(|idx| {
                signs_for_index(idx, &mut signs);
                assignment_probability(&logits, &signs)
            })
            .sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mean_gradient_trivial_cases() {
        let zero = exact_mean_gradient(&[0.4, -0.2], |_| 2.5).unwrap();
        assert!(zero.iter().all(|&g| g.abs() < 1e-15));
        // single weight, L(+1) = 1, L(-1) = 0
        let g = exact_mean_gradient(&[0.9], |w| if w[0] > 0.0 { 1.0 } else { 0.0 }).unwrap();
        assert_relative_eq!(g[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn mean_gradient_matches_product_rule_enumeration() {
        // quadratic loss with cross terms; independent path differentiates
        // the full product-form expectation term by term
        let logits = [0.5, -0.3, 0.8];
        let loss = |w: &[f64]| 0.7 * w[0] + 0.2 * w[1] * w[2] - 0.4 * w[0] * w[2] + 0.1 * w[1];
        let fast = exact_mean_gradient(&logits, loss).unwrap();
        let n = logits.len();
        let mut signs = vec![0.0; n];
        let mut direct = vec![0.0; n];
        for k in 0..n {
            for idx in 0..(1usize << n) {
                signs_for_index(idx, &mut signs);
                // d/dmu_k of prod_j (1 + mu_j w_j)/2 = (w_k/2) prod_{j!=k} (...)
                let mut factor = signs[k] / 2.0;
                for j in 0..n {
                    if j != k {
                        factor *= sigmoid(2.0 * logits[j] * signs[j]);
                    }
                }
                direct[k] += factor * loss(&signs);
            }
        }
        for (a, b) in fast.iter().zip(&direct) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn gibbs_posterior_cases() {
        // constant loss: posterior equals the prior
        let prior = [0.4, -0.7];
        let table = gibbs_posterior(&prior, 1.0, |_| 3.0).unwrap();
        let mut signs = vec![0.0; 2];
        for (idx, &p) in table.iter().enumerate() {
            signs_for_index(idx, &mut signs);
            assert_relative_eq!(p, assignment_probability(&prior, &signs), epsilon = 1e-12);
        }
        assert_relative_eq!(table.iter().sum::<f64>(), 1.0, epsilon = 1e-12);

        // two weights, loss = indicator(w_0 = +1), rho = 1, uniform prior:
        // P(w_0 = +1) = e^{-1} / (e^{-1} + 1)
        let table = gibbs_posterior(&[0.0, 0.0], 1.0, |w| if w[0] > 0.0 { 1.0 } else { 0.0 }).unwrap();
        let p_plus: f64 = (0..4).filter(|i| i & 1 == 1).map(|i| table[i]).sum();
        assert_relative_eq!(p_plus, 0.2689414213699951, epsilon = 1e-12);

        // enormous temperature: posterior approaches the prior
        let table = gibbs_posterior(&prior, 1e12, |w| if w[0] > 0.0 { 1.0 } else { 0.0 }).unwrap();
        for (idx, &p) in table.iter().enumerate() {
            signs_for_index(idx, &mut signs);
            assert_relative_eq!(p, assignment_probability(&prior, &signs), epsilon = 1e-9);
        }

        assert!(gibbs_posterior(&prior, 0.0, |_| 0.0).is_err());
        assert!(gibbs_posterior(&[0.0; 17], 1.0, |_| 0.0).is_err());
    }

    #[test]
    fn expectation_of_identity_is_tanh() {
        let logits = [0.25, -1.5, 2.0, 0.0];
        let mean = enumerate_expectation(&logits, |w| w.to_vec()).unwrap();
        for (&m, &x) in mean.iter().zip(&logits) {
            assert_relative_eq!(m, x.tanh(), epsilon = 1e-12);
        }
    }

    #[test]
    fn random_cases_pass_gradient_check() {
        for seed in 0..3 {
            let case = random_check_case(seed);
            let err = frozen_trajectory_max_rel_err(&case.net, &case.weights, &case.inputs, &case.target)
                .unwrap();
            assert!(err <= 1e-4, "case {} ({}): {err}", seed, case.description);
        }
    }
}
