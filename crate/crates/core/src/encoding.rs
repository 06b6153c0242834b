//! Synthetic dataset generators and population-coding conversion of real
//! inputs into spike trains.
//!
//! Scalars are encoded by a bank of units with Gaussian tuning curves spread
//! over the input range; each time step draws independent Bernoulli spikes at
//! the tuned rates. Generators and encoders are pure functions of their seed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Example, Target};
use crate::rng::{keyed_normal, keyed_u64, keyed_uniform, stream};
use crate::spikes::SpikeTensor;

/// Gaussian population code over one input range, applied per dimension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationCodeSpec {
    /// Tuning units per input dimension.
    pub n_units: usize,
    /// Covered value range (low, high); inputs are clamped into it.
    pub input_range: (f64, f64),
    /// Tuning-curve standard deviation.
    pub width: f64,
    /// Peak firing probability per step, in (0, 1].
    pub max_rate: f64,
    /// Sequence length in time steps.
    pub t_steps: usize,
}

impl PopulationCodeSpec {
    /// Default tuning: width = (high - low) / n_units, max_rate = 0.5.
    pub fn new(n_units: usize, input_range: (f64, f64), t_steps: usize) -> Result<Self> {
        let width = (input_range.1 - input_range.0) / n_units.max(1) as f64;
        Self::with_tuning(n_units, input_range, width, 0.5, t_steps)
    }

    pub fn with_tuning(
        n_units: usize,
        input_range: (f64, f64),
        width: f64,
        max_rate: f64,
        t_steps: usize,
    ) -> Result<Self> {
        let spec = Self {
            n_units,
            input_range,
            width,
            max_rate,
            t_steps,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_units == 0 || self.t_steps == 0 {
            return Err(Error::InvalidParam("population code needs units and time steps".into()));
        }
        let (low, high) = self.input_range;
        if !(low.is_finite() && high.is_finite() && low < high) {
            return Err(Error::InvalidParam(format!("invalid input range ({low}, {high})")));
        }
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::InvalidParam(format!("tuning width must be positive, got {}", self.width)));
        }
        if !(self.max_rate > 0.0 && self.max_rate <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "peak rate must lie in (0, 1], got {}",
                self.max_rate
            )));
        }
        Ok(())
    }

    /// Tuning-curve centers, evenly spaced over the input range inclusive.
    pub fn centers(&self) -> Vec<f64> {
        let (low, high) = self.input_range;
        if self.n_units == 1 {
            return vec![0.5 * (low + high)];
        }
        let step = (high - low) / (self.n_units - 1) as f64;
        (0..self.n_units).map(|j| low + j as f64 * step).collect()
    }

    /// Firing probability of a unit centered at `center` for input `x`
    /// (after clamping x into the range).
    pub fn rate(&self, x: f64, center: f64) -> f64 {
        let (low, high) = self.input_range;
        let xc = x.clamp(low, high);
        let d = xc - center;
        self.max_rate * (-d * d / (2.0 * self.width * self.width)).exp()
    }

    /// Total input units for a `dims`-dimensional value.
    pub fn total_units(&self, dims: usize) -> usize {
        self.n_units * dims
    }
}

/// Encode a real vector into a (t_steps, dims * n_units) spike tensor. Unit
/// j of dimension d occupies column d * n_units + j. Bit-identical for
/// identical (x, spec, seed).
pub fn population_encode(x: &[f64], spec: &PopulationCodeSpec, seed: u64) -> Result<SpikeTensor> {
    spec.validate()?;
    if x.is_empty() {
        return Err(Error::InvalidParam("cannot encode an empty vector".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("encoder input".into()));
    }
    let centers = spec.centers();
    let mut rates = Vec::with_capacity(x.len() * spec.n_units);
    for &value in x {
        for &c in &centers {
            rates.push(spec.rate(value, c));
        }
    }
    Ok(SpikeTensor::from_fn(spec.t_steps, rates.len(), |t, unit| {
        keyed_uniform(seed, &[stream::ENCODE, t as u64, unit as u64]) < rates[unit]
    }))
}

/// A labeled 2D point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub x: [f64; 2],
    pub label: usize,
}

/// Two interleaved half-circles: class 0 at (cos t, sin t), class 1 at
/// (1 - cos t, 1/2 - sin t), t uniform on [0, pi], plus isotropic Gaussian
/// noise. Returns exactly `n_per_class` points per class, class 0 first.
pub fn gen_two_moons(n_per_class: usize, noise_std: f64, seed: u64) -> Result<Vec<LabeledPoint>> {
    if n_per_class == 0 {
        return Err(Error::InvalidParam("need at least one point per class".into()));
    }
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(Error::InvalidParam(format!("noise std must be nonnegative, got {noise_std}")));
    }
    let mut points = Vec::with_capacity(2 * n_per_class);
    for class in 0..2u64 {
        for i in 0..n_per_class as u64 {
            let theta = std::f64::consts::PI * keyed_uniform(seed, &[1, class, i]);
            let (mut px, mut py) = if class == 0 {
                (theta.cos(), theta.sin())
            } else {
                (1.0 - theta.cos(), 0.5 - theta.sin())
            };
            px += noise_std * keyed_normal(seed, &[2, class, i]);
            py += noise_std * keyed_normal(seed, &[3, class, i]);
            points.push(LabeledPoint {
                x: [px, py],
                label: class as usize,
            });
        }
    }
    Ok(points)
}

/// A scalar regression pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionPoint {
    pub x: f64,
    pub y: f64,
}

/// Input support of the clustered 1D regression task.
pub const CLUSTER_SEGMENTS: [(f64, f64); 3] = [(-1.0, -0.6), (-0.2, 0.2), (0.6, 1.0)];
/// Points drawn per cluster.
pub const CLUSTER_POINTS: usize = 50;
/// Observation noise standard deviation.
pub const CLUSTER_NOISE_STD: f64 = 0.02;

/// Clustered scalar regression: inputs uniform over three separated
/// segments, targets y = x^3 plus Gaussian observation noise.
pub fn gen_1d_clusters(seed: u64) -> Vec<RegressionPoint> {
    let mut points = Vec::with_capacity(3 * CLUSTER_POINTS);
    for (c, &(lo, hi)) in CLUSTER_SEGMENTS.iter().enumerate() {
        for i in 0..CLUSTER_POINTS as u64 {
            let x = lo + (hi - lo) * keyed_uniform(seed, &[1, c as u64, i]);
            let y = x.powi(3) + CLUSTER_NOISE_STD * keyed_normal(seed, &[2, c as u64, i]);
            points.push(RegressionPoint { x, y });
        }
    }
    points
}

/// Encode labeled 2D points into classification examples. Example `i` draws
/// its spikes from a seed derived from (`seed`, i), so the dataset is
/// reproducible and insensitive to encoding order.
pub fn encode_labeled_points(
    points: &[LabeledPoint],
    spec: &PopulationCodeSpec,
    seed: u64,
) -> Result<Vec<Example>> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let ex_seed = keyed_u64(seed, &[stream::ENCODE, i as u64]);
            Ok(Example {
                spikes: population_encode(&p.x, spec, ex_seed)?,
                target: Target::Label(p.label),
            })
        })
        .collect()
}

/// Encode scalar regression pairs into examples with constant per-step
/// vector targets.
pub fn encode_regression_points(
    points: &[RegressionPoint],
    spec: &PopulationCodeSpec,
    seed: u64,
) -> Result<Vec<Example>> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let ex_seed = keyed_u64(seed, &[stream::ENCODE, i as u64]);
            Ok(Example {
                spikes: population_encode(&[p.x], spec, ex_seed)?,
                target: Target::Vector(vec![p.y]),
            })
        })
        .collect()
}
