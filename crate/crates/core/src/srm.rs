//! Discrete-time Spike Response Model: filter responses, recursive trace
//! updates, membrane potential, and threshold spiking.
//!
//! A neuron's membrane potential is the weighted sum of presynaptic traces
//! (input spikes convolved with the alpha filter) minus a refractory trace
//! (its own spikes convolved with the beta filter). Convolutions run over
//! strictly past steps, so a spike at time t never influences potentials at
//! time t. All traces are realized by first-order recursions.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::sigmoid;

/// Time constants, firing threshold, and surrogate steepness for one network.
///
/// Time constants are in units of simulation steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub tau_mem: f64,
    pub tau_syn: f64,
    pub tau_ref: f64,
    /// Firing threshold; a neuron spikes when membrane >= threshold.
    pub threshold: f64,
    /// Slope of the sigmoid used by the surrogate derivative.
    pub surrogate_steepness: f64,
}

impl FilterParams {
    pub fn new(tau_mem: f64, tau_syn: f64, tau_ref: f64, threshold: f64) -> Result<Self> {
        Self::with_steepness(tau_mem, tau_syn, tau_ref, threshold, 1.0)
    }

    pub fn with_steepness(
        tau_mem: f64,
        tau_syn: f64,
        tau_ref: f64,
        threshold: f64,
        surrogate_steepness: f64,
    ) -> Result<Self> {
        let p = Self {
            tau_mem,
            tau_syn,
            tau_ref,
            threshold,
            surrogate_steepness,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tau_mem", self.tau_mem),
            ("tau_syn", self.tau_syn),
            ("tau_ref", self.tau_ref),
            ("surrogate_steepness", self.surrogate_steepness),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParam(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.threshold.is_finite() {
            return Err(Error::InvalidParam("threshold must be finite".into()));
        }
        if self.tau_mem == self.tau_syn {
            return Err(Error::InvalidParam(
                "tau_mem == tau_syn makes the synaptic filter identically zero".into(),
            ));
        }
        Ok(())
    }

    pub fn decay_mem(&self) -> f64 {
        (-1.0 / self.tau_mem).exp()
    }

    pub fn decay_syn(&self) -> f64 {
        (-1.0 / self.tau_syn).exp()
    }

    pub fn decay_ref(&self) -> f64 {
        (-1.0 / self.tau_ref).exp()
    }
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            tau_mem: 20.0,
            tau_syn: 5.0,
            tau_ref: 2.0,
            threshold: 0.5,
            surrogate_steepness: 1.0,
        }
    }
}

/// Synaptic alpha filter: exp(-t/tau_mem) - exp(-t/tau_syn) for t >= 1,
/// zero at t = 0 (convolutions run over strictly positive lags).
pub fn filter_alpha(t: u64, params: &FilterParams) -> f64 {
    if t == 0 {
        return 0.0;
    }
    let tf = t as f64;
    (-tf / params.tau_mem).exp() - (-tf / params.tau_syn).exp()
}

/// Refractory beta filter: exp(-t/tau_ref) for t >= 1, zero at t = 0.
pub fn filter_beta(t: u64, params: &FilterParams) -> f64 {
    if t == 0 {
        return 0.0;
    }
    (-(t as f64) / params.tau_ref).exp()
}

/// Sigmoid surrogate for the Heaviside derivative: s(z)(1 - s(z)) with
/// z = steepness * (u - threshold). Lies in (0, 0.25], peaking at u = threshold.
pub fn surrogate_derivative(u: f64, params: &FilterParams) -> f64 {
    let z = params.surrogate_steepness * (u - params.threshold);
    let s = sigmoid(z);
    s * (1.0 - s)
}

/// Per-layer dynamic state at one time step.
///
/// `trace_mem - trace_syn` is exactly the presynaptic trace p_j (alpha filter
/// applied to the input spike history); `refractory` is the beta filter
/// applied to the neuron's own spike history.
#[derive(Clone, Debug)]
pub struct LayerState {
    pub membrane: Vec<f64>,
    pub trace_mem: Vec<f64>,
    pub trace_syn: Vec<f64>,
    pub refractory: Vec<f64>,
    pub last_spikes: Vec<u8>,
}

impl LayerState {
    pub fn new(n_in: usize, n_out: usize) -> Self {
        Self {
            membrane: vec![0.0; n_out],
            trace_mem: vec![0.0; n_in],
            trace_syn: vec![0.0; n_in],
            refractory: vec![0.0; n_out],
            last_spikes: vec![0; n_out],
        }
    }

    pub fn n_in(&self) -> usize {
        self.trace_mem.len()
    }

    pub fn n_out(&self) -> usize {
        self.membrane.len()
    }

    /// Write the presynaptic trace p_j = trace_mem_j - trace_syn_j into `out`.
    pub fn write_presyn(&self, out: &mut [f64]) {
        for ((o, &m), &s) in out.iter_mut().zip(&self.trace_mem).zip(&self.trace_syn) {
            *o = m - s;
        }
    }

    pub fn presyn(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_in()];
        self.write_presyn(&mut out);
        out
    }

    /// Advance all traces by one step, absorbing the input spikes just seen
    /// and the neuron's own spikes just emitted.
    pub fn step_traces(
        &mut self,
        input_spikes: &[u8],
        own_spikes: &[u8],
        params: &FilterParams,
    ) -> Result<()> {
        if input_spikes.len() != self.n_in() {
            return Err(Error::DimMismatch(format!(
                "input spikes: {} entries for {} presynaptic sources",
                input_spikes.len(),
                self.n_in()
            )));
        }
        if own_spikes.len() != self.n_out() {
            return Err(Error::DimMismatch(format!(
                "own spikes: {} entries for {} neurons",
                own_spikes.len(),
                self.n_out()
            )));
        }
        let dm = params.decay_mem();
        let ds = params.decay_syn();
        let dr = params.decay_ref();
        for (t, &s) in self.trace_mem.iter_mut().zip(input_spikes) {
            *t = dm * (*t + s as f64);
        }
        for (t, &s) in self.trace_syn.iter_mut().zip(input_spikes) {
            *t = ds * (*t + s as f64);
        }
        for (t, &s) in self.refractory.iter_mut().zip(own_spikes) {
            *t = dr * (*t + s as f64);
        }
        Ok(())
    }

    /// Compute membrane potentials u_i = scale * sum_j w_ij p_j - refractory_i
    /// and threshold them into spikes (spike when u >= threshold).
    ///
    /// `scale` multiplies only the synaptic summation; the refractory term is
    /// self-feedback, not a layer output.
    pub fn membrane_and_spike(
        &mut self,
        weights: &Array2<f64>,
        scale: f64,
        params: &FilterParams,
    ) -> Result<()> {
        let (n_out, n_in) = weights.dim();
        if n_in != self.n_in() || n_out != self.n_out() {
            return Err(Error::DimMismatch(format!(
                "weights {n_out}x{n_in} for state with {} neurons x {} sources",
                self.n_out(),
                self.n_in()
            )));
        }
        let trace_mem = &self.trace_mem;
        let trace_syn = &self.trace_syn;
        for i in 0..n_out {
            let row = weights.row(i);
            let row = row.as_slice().expect("weights are row-major");
            let mut acc = 0.0;
            for j in 0..n_in {
                acc += row[j] * (trace_mem[j] - trace_syn[j]);
            }
            let u = scale * acc - self.refractory[i];
            if !u.is_finite() {
                return Err(Error::NonFinite(format!("membrane potential of neuron {i}")));
            }
            self.membrane[i] = u;
            self.last_spikes[i] = (u >= params.threshold) as u8;
        }
        Ok(())
    }
}
