//! Feedforward stacks of fully connected spiking layers with fixed random
//! linear readouts and per-layer local losses.
//!
//! Every layer owns a frozen random readout mapping its spike vector into the
//! task output space, and is trained against the global target through that
//! readout alone: error signals never propagate between layers. The gradient
//! of a layer's weights combines its local error signal, the surrogate
//! derivative of its membrane potentials, and its recorded presynaptic
//! traces.

use ndarray::Array2;
use rand::distr::Uniform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{log_softmax_at, softmax};
use crate::rng::{keyed_u64, stream};
use crate::spikes::SpikeTensor;
use crate::srm::{surrogate_derivative, FilterParams, LayerState};

/// Shape and input scaling of one fully connected layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub n_in: usize,
    pub n_out: usize,
    /// Dimension of the auxiliary readout output (task output space).
    pub readout_dim: usize,
    /// Multiplier on the synaptic summation (default 1/sqrt(n_in)).
    pub scale: f64,
}

impl LayerSpec {
    pub fn new(n_in: usize, n_out: usize, readout_dim: usize) -> Result<Self> {
        let scale = 1.0 / (n_in.max(1) as f64).sqrt();
        Self::with_scale(n_in, n_out, readout_dim, scale)
    }

    pub fn with_scale(n_in: usize, n_out: usize, readout_dim: usize, scale: f64) -> Result<Self> {
        if n_in == 0 || n_out == 0 || readout_dim == 0 {
            return Err(Error::InvalidParam("layer dimensions must be positive".into()));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParam(format!("layer scale must be positive, got {scale}")));
        }
        Ok(Self {
            n_in,
            n_out,
            readout_dim,
            scale,
        })
    }
}

/// Task family a readout head reports in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadoutKind {
    Regression,
    Classification,
}

/// Fixed random linear map from a layer's spikes to the task output space.
/// Never updated by training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutHead {
    pub matrix: Array2<f64>,
    pub kind: ReadoutKind,
}

impl ReadoutHead {
    /// Entries drawn uniformly from [-1/sqrt(n_out), +1/sqrt(n_out)] with a
    /// dedicated seeded generator, then frozen.
    pub fn random(readout_dim: usize, n_out: usize, kind: ReadoutKind, seed: u64) -> Self {
        let bound = 1.0 / (n_out.max(1) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("valid uniform range");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..readout_dim * n_out).map(|_| rng.sample(dist)).collect();
        let matrix = Array2::from_shape_vec((readout_dim, n_out), data).expect("shape matches");
        Self { matrix, kind }
    }

    pub fn readout_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_out(&self) -> usize {
        self.matrix.ncols()
    }

    /// y = R s for a (possibly real-valued) activity vector s.
    pub fn outputs(&self, activity: &[f64]) -> Result<Vec<f64>> {
        if activity.len() != self.n_out() {
            return Err(Error::DimMismatch(format!(
                "readout expects {} activities, got {}",
                self.n_out(),
                activity.len()
            )));
        }
        let mut y = vec![0.0; self.readout_dim()];
        for (k, yk) in y.iter_mut().enumerate() {
            let row = self.matrix.row(k);
            let row = row.as_slice().expect("readout is row-major");
            *yk = row.iter().zip(activity).map(|(&r, &s)| r * s).sum();
        }
        Ok(y)
    }
}

/// Supervision for one example, applied at every time step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Label(usize),
    Vector(Vec<f64>),
}

/// One supervised example: an input spike train and its target.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub spikes: SpikeTensor,
    pub target: Target,
}

/// Loss value and per-neuron error signal at a single time step.
#[derive(Clone, Debug)]
pub struct PerStepLoss {
    pub value: f64,
    pub error_signals: Vec<f64>,
}

/// Per-step local loss through a readout head, with its error signal.
///
/// Regression: l = half the squared error between R s and the target vector.
/// Classification: l = cross-entropy of softmax(R s) against the label.
/// The error signal is e_i = sum_k (dl/dy_k) R_{k,i}, the pullback of the
/// output-space gradient through the frozen readout.
pub fn local_loss_and_errors(head: &ReadoutHead, activity: &[f64], target: &Target) -> Result<PerStepLoss> {
    let y = head.outputs(activity)?;
    let (value, out_grad): (f64, Vec<f64>) = match (head.kind, target) {
        (ReadoutKind::Regression, Target::Vector(r)) => {
            if r.len() != y.len() {
                return Err(Error::DimMismatch(format!(
                    "target has {} entries for readout dimension {}",
                    r.len(),
                    y.len()
                )));
            }
            let diff: Vec<f64> = y.iter().zip(r).map(|(&a, &b)| a - b).collect();
            let value = 0.5 * diff.iter().map(|d| d * d).sum::<f64>();
            (value, diff)
        }
        (ReadoutKind::Classification, Target::Label(label)) => {
            if *label >= y.len() {
                return Err(Error::InvalidParam(format!(
                    "label {label} out of range for {} classes",
                    y.len()
                )));
            }
            let value = -log_softmax_at(&y, *label);
            let mut grad = softmax(&y);
            grad[*label] -= 1.0;
            (value, grad)
        }
        (ReadoutKind::Regression, Target::Label(_)) => {
            return Err(Error::Incompatible("regression head given a class label".into()));
        }
        (ReadoutKind::Classification, Target::Vector(_)) => {
            return Err(Error::Incompatible("classification head given a real vector target".into()));
        }
    };
    let mut error_signals = vec![0.0; head.n_out()];
    for (k, &g) in out_grad.iter().enumerate() {
        let row = head.matrix.row(k);
        let row = row.as_slice().expect("readout is row-major");
        for (e, &r) in error_signals.iter_mut().zip(row) {
            *e += g * r;
        }
    }
    if !value.is_finite() || error_signals.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite("per-step loss or error signal".into()));
    }
    Ok(PerStepLoss { value, error_signals })
}

/// Everything one layer's forward pass recorded, step by step: membrane
/// potentials, presynaptic traces, refractory traces, and emitted spikes.
/// Rows are time steps.
#[derive(Clone, Debug)]
pub struct LayerTrajectory {
    pub potentials: Array2<f64>,
    pub presyn: Array2<f64>,
    pub refractory: Array2<f64>,
    pub spikes: SpikeTensor,
}

/// Forward-pass record for every layer of a network.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub layers: Vec<LayerTrajectory>,
}

impl Trajectory {
    pub fn t_steps(&self) -> usize {
        self.layers.first().map_or(0, |l| l.spikes.t_steps())
    }

    pub fn output_spikes(&self) -> &SpikeTensor {
        &self.layers.last().expect("network has layers").spikes
    }
}

/// Per-layer, per-step loss values and error signals for one sequence.
#[derive(Clone, Debug)]
pub struct SequenceLosses {
    /// Loss value at each step, indexed [layer][t].
    pub per_step: Vec<Vec<f64>>,
    /// Error signals per layer, shaped (t_steps, n_out).
    pub errors: Vec<Array2<f64>>,
}

impl SequenceLosses {
    pub fn layer_total(&self, layer: usize) -> f64 {
        self.per_step[layer].iter().sum()
    }

    /// Total loss at the final layer (the network's prediction head).
    pub fn output_total(&self) -> f64 {
        self.layer_total(self.per_step.len() - 1)
    }
}

/// A feedforward spiking network: layer shapes, frozen readout heads, and
/// shared filter parameters. Weights are training state and are passed to
/// each call, not stored here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub specs: Vec<LayerSpec>,
    pub heads: Vec<ReadoutHead>,
    pub params: FilterParams,
}

impl Network {
    pub fn new(specs: Vec<LayerSpec>, heads: Vec<ReadoutHead>, params: FilterParams) -> Result<Self> {
        params.validate()?;
        if specs.is_empty() {
            return Err(Error::InvalidParam("network needs at least one layer".into()));
        }
        if heads.len() != specs.len() {
            return Err(Error::DimMismatch(format!(
                "{} readout heads for {} layers",
                heads.len(),
                specs.len()
            )));
        }
        for pair in specs.windows(2) {
            if pair[0].n_out != pair[1].n_in {
                return Err(Error::DimMismatch(format!(
                    "layer output {} feeds layer input {}",
                    pair[0].n_out, pair[1].n_in
                )));
            }
        }
        for (spec, head) in specs.iter().zip(&heads) {
            if head.n_out() != spec.n_out || head.readout_dim() != spec.readout_dim {
                return Err(Error::DimMismatch(format!(
                    "readout {}x{} for layer with {} neurons and readout dimension {}",
                    head.readout_dim(),
                    head.n_out(),
                    spec.n_out,
                    spec.readout_dim
                )));
            }
        }
        Ok(Self { specs, heads, params })
    }

    /// Build a network from a dimension chain [n_in, h_1, ..., n_out] with
    /// default scaling and per-layer readout heads drawn from `readout_seed`.
    pub fn with_random_heads(
        dims: &[usize],
        readout_dim: usize,
        kind: ReadoutKind,
        params: FilterParams,
        readout_seed: u64,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidParam("dimension chain needs input and output sizes".into()));
        }
        let mut specs = Vec::new();
        let mut heads = Vec::new();
        for (l, pair) in dims.windows(2).enumerate() {
            specs.push(LayerSpec::new(pair[0], pair[1], readout_dim)?);
            let seed = keyed_u64(readout_seed, &[stream::READOUT, l as u64]);
            heads.push(ReadoutHead::random(readout_dim, pair[1], kind, seed));
        }
        Network::new(specs, heads, params)
    }

    pub fn n_layers(&self) -> usize {
        self.specs.len()
    }

    pub fn input_dim(&self) -> usize {
        self.specs[0].n_in
    }

    /// Dimension chain [n_in, h_1, ..., n_out].
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.specs[0].n_in];
        dims.extend(self.specs.iter().map(|s| s.n_out));
        dims
    }

    pub fn check_weight_shapes(&self, weights: &[Array2<f64>]) -> Result<()> {
        if weights.len() != self.n_layers() {
            return Err(Error::DimMismatch(format!(
                "{} weight matrices for {} layers",
                weights.len(),
                self.n_layers()
            )));
        }
        for (spec, w) in self.specs.iter().zip(weights) {
            if w.dim() != (spec.n_out, spec.n_in) {
                return Err(Error::DimMismatch(format!(
                    "weights {:?} for layer expecting {}x{}",
                    w.dim(),
                    spec.n_out,
                    spec.n_in
                )));
            }
        }
        Ok(())
    }

    /// Unroll the dynamics over the input sequence, recording everything a
    /// gradient computation needs. At each step every layer reads the traces
    /// accumulated from strictly earlier spikes, fires, and only then absorbs
    /// the current step's input, so a spike first reaches the next layer one
    /// step later. Deterministic given inputs and weights.
    pub fn forward_sequence(&self, weights: &[Array2<f64>], inputs: &SpikeTensor) -> Result<Trajectory> {
        self.check_weight_shapes(weights)?;
        if inputs.units() != self.input_dim() {
            return Err(Error::DimMismatch(format!(
                "{} input units for network expecting {}",
                inputs.units(),
                self.input_dim()
            )));
        }
        let t_steps = inputs.t_steps();
        let mut states: Vec<LayerState> = self
            .specs
            .iter()
            .map(|s| LayerState::new(s.n_in, s.n_out))
            .collect();
        let mut layers: Vec<LayerTrajectory> = self
            .specs
            .iter()
            .map(|s| LayerTrajectory {
                potentials: Array2::zeros((t_steps, s.n_out)),
                presyn: Array2::zeros((t_steps, s.n_in)),
                refractory: Array2::zeros((t_steps, s.n_out)),
                spikes: SpikeTensor::zeros(t_steps, s.n_out),
            })
            .collect();
        let mut carried: Vec<u8> = Vec::new();
        for t in 0..t_steps {
            for (l, state) in states.iter_mut().enumerate() {
                let record = &mut layers[l];
                state.write_presyn(
                    record
                        .presyn
                        .row_mut(t)
                        .into_slice()
                        .expect("presyn row is contiguous"),
                );
                record
                    .refractory
                    .row_mut(t)
                    .into_slice()
                    .expect("refractory row is contiguous")
                    .copy_from_slice(&state.refractory);
                state.membrane_and_spike(&weights[l], self.specs[l].scale, &self.params)?;
                record
                    .potentials
                    .row_mut(t)
                    .into_slice()
                    .expect("potential row is contiguous")
                    .copy_from_slice(&state.membrane);
                record.spikes.set_row(t, &state.last_spikes)?;
                let layer_input: &[u8] = if l == 0 { inputs.row(t) } else { &carried };
                let own = state.last_spikes.clone();
                state.step_traces(layer_input, &own, &self.params)?;
                carried = own;
            }
        }
        Ok(Trajectory { layers })
    }

    /// Per-layer local losses and error signals over a recorded trajectory,
    /// with errors evaluated on the binary spike outputs. Every layer is
    /// scored against the same global target through its own readout.
    pub fn sequence_losses(&self, traj: &Trajectory, target: &Target) -> Result<SequenceLosses> {
        if traj.layers.len() != self.n_layers() {
            return Err(Error::DimMismatch("trajectory does not match network depth".into()));
        }
        let t_steps = traj.t_steps();
        let mut per_step = Vec::with_capacity(self.n_layers());
        let mut errors = Vec::with_capacity(self.n_layers());
        let mut activity: Vec<f64> = Vec::new();
        for (l, record) in traj.layers.iter().enumerate() {
            let n_out = self.specs[l].n_out;
            let mut values = Vec::with_capacity(t_steps);
            let mut errs = Array2::zeros((t_steps, n_out));
            for t in 0..t_steps {
                activity.clear();
                activity.extend(record.spikes.row(t).iter().map(|&b| b as f64));
                let step = local_loss_and_errors(&self.heads[l], &activity, target)?;
                values.push(step.value);
                errs.row_mut(t)
                    .into_slice()
                    .expect("error row is contiguous")
                    .copy_from_slice(&step.error_signals);
            }
            per_step.push(values);
            errors.push(errs);
        }
        Ok(SequenceLosses { per_step, errors })
    }

    /// Local weight gradients: g_ij = sum_t e_{i,t} * surrogate'(u_{i,t}) *
    /// scale * p_{j,t}. Inter-layer spike dependencies and refractory history
    /// are detached — each layer's gradient uses only its own recorded
    /// trajectory and error signals.
    pub fn local_gradient(&self, traj: &Trajectory, errors: &[Array2<f64>]) -> Result<Vec<Array2<f64>>> {
        if traj.layers.len() != self.n_layers() || errors.len() != self.n_layers() {
            return Err(Error::DimMismatch("trajectory/errors do not match network depth".into()));
        }
        let mut grads = Vec::with_capacity(self.n_layers());
        for (l, record) in traj.layers.iter().enumerate() {
            let spec = &self.specs[l];
            let t_steps = record.potentials.nrows();
            if errors[l].dim() != (t_steps, spec.n_out) {
                return Err(Error::DimMismatch(format!(
                    "error signals {:?} for layer with {} steps x {} neurons",
                    errors[l].dim(),
                    t_steps,
                    spec.n_out
                )));
            }
            let mut g = Array2::<f64>::zeros((spec.n_out, spec.n_in));
            let g_slice = g.as_slice_mut().expect("gradient is row-major");
            for t in 0..t_steps {
                let u_row = record.potentials.row(t);
                let u_row = u_row.as_slice().expect("potentials row-major");
                let e_row = errors[l].row(t);
                let e_row = e_row.as_slice().expect("errors row-major");
                let p_row = record.presyn.row(t);
                let p_row = p_row.as_slice().expect("presyn row-major");
                for i in 0..spec.n_out {
                    let coeff = e_row[i] * surrogate_derivative(u_row[i], &self.params) * spec.scale;
                    if coeff == 0.0 {
                        continue;
                    }
                    let dst = &mut g_slice[i * spec.n_in..(i + 1) * spec.n_in];
                    for (d, &p) in dst.iter_mut().zip(p_row) {
                        *d += coeff * p;
                    }
                }
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of layer {l}")));
            }
            grads.push(g);
        }
        Ok(grads)
    }

    /// Forward pass, losses, and gradients for one example in one call.
    pub fn example_gradients(
        &self,
        weights: &[Array2<f64>],
        inputs: &SpikeTensor,
        target: &Target,
    ) -> Result<(Vec<Array2<f64>>, SequenceLosses, Trajectory)> {
        let traj = self.forward_sequence(weights, inputs)?;
        let losses = self.sequence_losses(&traj, target)?;
        let grads = self.local_gradient(&traj, &losses.errors)?;
        Ok((grads, losses, traj))
    }
}
