//! Run orchestration: dataset preparation, the epoch loop for every
//! learning rule, checkpoint/metric artifacts, evaluation of trained
//! checkpoints, temperature sweeps, and the gradient-check report.
//!
//! Every run is a pure function of its config: data generation, splitting,
//! shuffling, initialization and sampling all derive from the config seeds.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CHECKPOINT_VERSION};
use crate::config::{DataKind, TrainRunConfig};
use crate::dataset::{read_dataset, TargetBlock};
use crate::encoding::{
    encode_labeled_points, encode_regression_points, gen_1d_clusters, gen_two_moons,
};
use crate::error::{Error, Result};
use crate::eval::{
    accuracy, expected_calibration_error, mse, nll, predict_batch, uncertainty_grid, GridCell,
    Predictor, DEFAULT_ECE_BINS,
};
use crate::network::{Example, Network, ReadoutKind, Target};
use crate::oracle::{frozen_trajectory_max_rel_err, random_check_case};
use crate::rng::{keyed_u64, stream};
use crate::train::bayes::{
    bayes_step, estimator_mc_check, free_energy, kl_to_prior, BayesHyperparams, EstimatorCheck,
};
use crate::train::st::{init_real_weights, st_step, StConfig};
use crate::train::{full_precision_step, TrainRule};

/// A loaded and split dataset plus everything needed to size the network.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub train: Vec<Example>,
    pub test: Vec<Example>,
    pub kind: ReadoutKind,
    pub readout_dim: usize,
    pub input_units: usize,
    pub label_names: Option<Vec<String>>,
    /// Free-form provenance recorded into manifests and checkpoints.
    pub encoding_meta: serde_json::Value,
}

fn label_of(example: &Example) -> Option<usize> {
    match example.target {
        Target::Label(l) => Some(l),
        Target::Vector(_) => None,
    }
}

/// Deterministic holdout split. Classification splits are stratified per
/// label so small datasets keep their class balance; both halves preserve
/// the original example order.
fn split_examples(
    examples: Vec<Example>,
    kind: ReadoutKind,
    fraction: f64,
    data_seed: u64,
) -> (Vec<Example>, Vec<Example>) {
    if fraction <= 0.0 {
        return (examples, Vec::new());
    }
    let groups: Vec<Vec<usize>> = match kind {
        ReadoutKind::Classification => {
            let max_label = examples.iter().filter_map(label_of).max().unwrap_or(0);
            let mut groups = vec![Vec::new(); max_label + 1];
            for (i, ex) in examples.iter().enumerate() {
                groups[label_of(ex).unwrap_or(0)].push(i);
            }
            groups
        }
        ReadoutKind::Regression => vec![(0..examples.len()).collect()],
    };
    let mut is_test = vec![false; examples.len()];
    for (g, mut indices) in groups.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(keyed_u64(data_seed, &[stream::SHUFFLE, 0, g as u64]));
        indices.shuffle(&mut rng);
        let n_test = (fraction * indices.len() as f64).floor() as usize;
        for &i in indices.iter().take(n_test) {
            is_test[i] = true;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, ex) in examples.into_iter().enumerate() {
        if is_test[i] {
            test.push(ex);
        } else {
            train.push(ex);
        }
    }
    (train, test)
}

/// Generate or load the dataset a config describes and split it.
pub fn prepare_data(cfg: &TrainRunConfig) -> Result<PreparedData> {
    cfg.validate()?;
    let seeds = cfg.seeds;
    let (examples, kind, readout_dim, label_names, encoding_meta) = match cfg.data.kind {
        DataKind::OneDim => {
            let spec = cfg.data.population_spec()?;
            let points = gen_1d_clusters(seeds.data);
            let examples = encode_regression_points(&points, &spec, seeds.data)?;
            let meta = serde_json::json!({
                "task": "onedim-clusters",
                "population": spec,
                "data_seed": seeds.data,
            });
            (examples, ReadoutKind::Regression, 1, None, meta)
        }
        DataKind::TwoMoons => {
            let spec = cfg.data.population_spec()?;
            let points = gen_two_moons(cfg.data.n_per_class, cfg.data.noise_std, seeds.data)?;
            let examples = encode_labeled_points(&points, &spec, seeds.data)?;
            let meta = serde_json::json!({
                "task": "two-moons",
                "n_per_class": cfg.data.n_per_class,
                "noise_std": cfg.data.noise_std,
                "population": spec,
                "data_seed": seeds.data,
            });
            (
                examples,
                ReadoutKind::Classification,
                2,
                Some(vec!["0".to_string(), "1".to_string()]),
                meta,
            )
        }
        DataKind::Dvs => {
            let path = cfg.data.path.as_ref().expect("validated");
            let (header, examples) = read_dataset(path)?;
            let readout_dim = match &header.targets {
                TargetBlock::Labels(ls) => {
                    ls.iter().max().map(|&m| m + 1).unwrap_or(0)
                }
                TargetBlock::Vectors(vs) => vs.first().map(Vec::len).unwrap_or(0),
            };
            if readout_dim == 0 {
                return Err(Error::Incompatible("dataset has no usable targets".into()));
            }
            let label_names = header
                .encoding
                .get("labels")
                .and_then(|v| serde_json::from_value::<Vec<String>>(v.clone()).ok());
            (examples, header.kind, readout_dim, label_names, header.encoding.clone())
        }
    };
    let input_units = examples
        .first()
        .map(|e| e.spikes.units())
        .ok_or_else(|| Error::InvalidParam("dataset is empty".into()))?;
    let (train, test) = split_examples(examples, kind, cfg.data.holdout_fraction, seeds.data);
    if train.is_empty() {
        return Err(Error::InvalidParam("holdout left no training examples".into()));
    }
    Ok(PreparedData {
        train,
        test,
        kind,
        readout_dim,
        input_units,
        label_names,
        encoding_meta,
    })
}

/// Build the network a config describes for the given data.
pub fn build_network(cfg: &TrainRunConfig, data: &PreparedData) -> Result<Network> {
    let mut dims = Vec::with_capacity(cfg.hidden.len() + 1);
    dims.push(data.input_units);
    dims.extend_from_slice(&cfg.hidden);
    Network::with_random_heads(&dims, data.readout_dim, data.kind, cfg.filter, cfg.seeds.readout)
}

/// One row of per-epoch metrics. The metric is accuracy for classification
/// and mean squared error for regression, always computed after the epoch
/// with the deterministic point-estimate weights.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    /// Mean per-batch training loss observed during the epoch (for the
    /// variational rule this is the relaxed-sample loss).
    pub step_loss: f64,
    pub train_metric: f64,
    pub test_metric: Option<f64>,
    /// KL divergence to the prior after the epoch (variational rule only).
    pub kl: Option<f64>,
    /// step_loss + rho * kl (variational rule only).
    pub free_energy: Option<f64>,
}

/// Outcome of a training run.
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub checkpoint: Checkpoint,
    pub rows: Vec<EpochRow>,
    /// True when a step produced a non-finite update and the run stopped
    /// early, keeping the last epoch's parameters.
    pub aborted: bool,
    pub n_train: usize,
    pub n_test: usize,
}

impl TrainReport {
    pub fn final_row(&self) -> Option<&EpochRow> {
        self.rows.last()
    }
}

fn point_estimate(rule: TrainRule, params: &[Array2<f64>]) -> Vec<Array2<f64>> {
    match rule {
        TrainRule::St => crate::train::st::binarize(params),
        TrainRule::Bayes => crate::train::bayes::map_weights(params),
        TrainRule::Full => params.to_vec(),
    }
}

fn metric_of(net: &Network, weights: &[Array2<f64>], examples: &[Example], kind: ReadoutKind) -> Result<f64> {
    let records = predict_batch(net, &Predictor::Deterministic(weights), examples)?;
    match kind {
        ReadoutKind::Classification => accuracy(&records),
        ReadoutKind::Regression => mse(&records),
    }
}

fn write_metrics_csv(path: &Path, rows: &[EpochRow]) -> Result<()> {
    let mut out = String::from("epoch,step_loss,train_metric,test_metric,kl,free_energy\n");
    for r in rows {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch,
            r.step_loss,
            r.train_metric,
            opt(r.test_metric),
            opt(r.kl),
            opt(r.free_energy),
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Train a model per the config. When `out_dir` is given, writes
/// `checkpoint.json`, `metrics.csv`, and a `run.json` manifest (config
/// echo, dataset sizes, final metrics; no timestamps, so identical configs
/// produce identical artifacts).
pub fn run_train(cfg: &TrainRunConfig, out_dir: Option<&Path>) -> Result<TrainReport> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    let net = build_network(cfg, &data)?;

    let mut params = init_real_weights(&net, cfg.seeds.weights);
    let prior: Option<Vec<Array2<f64>>> = (cfg.rule == TrainRule::Bayes).then(|| {
        params
            .iter()
            .map(|w| Array2::from_elem(w.dim(), cfg.prior_logit))
            .collect()
    });
    let st_cfg = StConfig::new(cfg.eta, cfg.clip_real)?;
    let bayes_hp = BayesHyperparams {
        rho: cfg.rho,
        tau_gs: cfg.tau_gs,
        eta: cfg.eta,
        ensemble_size: cfg.ensemble_size,
        gs_samples: cfg.gs_samples,
    };

    let mut rows: Vec<EpochRow> = Vec::with_capacity(cfg.epochs);
    let mut aborted = false;
    let mut global_step = 0u64;
    'epochs: for epoch in 0..cfg.epochs {
        let snapshot = params.clone();
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(keyed_u64(
            cfg.seeds.data,
            &[stream::SHUFFLE, 1 + epoch as u64],
        ));
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut loss_n = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &data.train[i]).collect();
            let step_result = match cfg.rule {
                TrainRule::St => st_step(&net, &mut params, &batch, &st_cfg),
                TrainRule::Full => full_precision_step(&net, &mut params, &batch, cfg.eta),
                TrainRule::Bayes => bayes_step(
                    &net,
                    &mut params,
                    prior.as_ref().expect("bayes prior exists"),
                    &batch,
                    &bayes_hp,
                    cfg.seeds.gumbel,
                    global_step,
                )
                .map(|info| info.mean_loss),
            };
            match step_result {
                Ok(loss) => {
                    loss_sum += loss * batch.len() as f64;
                    loss_n += batch.len();
                    global_step += 1;
                }
                Err(_) => {
                    params = snapshot;
                    aborted = true;
                    break 'epochs;
                }
            }
        }
        let step_loss = loss_sum / loss_n.max(1) as f64;

        let inference = point_estimate(cfg.rule, &params);
        let train_metric = metric_of(&net, &inference, &data.train, data.kind)?;
        let test_metric = if data.test.is_empty() {
            None
        } else {
            Some(metric_of(&net, &inference, &data.test, data.kind)?)
        };
        let (kl, fe) = match (&prior, cfg.rule) {
            (Some(prior), TrainRule::Bayes) => {
                let kl = kl_to_prior(&params, prior);
                (Some(kl), Some(free_energy(step_loss, &params, prior, cfg.rho)))
            }
            _ => (None, None),
        };
        rows.push(EpochRow {
            epoch,
            step_loss,
            train_metric,
            test_metric,
            kl,
            free_energy: fe,
        });
    }

    let checkpoint = Checkpoint {
        version: CHECKPOINT_VERSION,
        rule: cfg.rule,
        network: net,
        params,
        prior_logits: prior,
        config: cfg.clone(),
        label_names: data.label_names.clone(),
        epochs_trained: rows.len(),
    };
    let report = TrainReport {
        checkpoint,
        rows,
        aborted,
        n_train: data.train.len(),
        n_test: data.test.len(),
    };

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        report.checkpoint.save(&dir.join("checkpoint.json"))?;
        write_metrics_csv(&dir.join("metrics.csv"), &report.rows)?;
        let manifest = serde_json::json!({
            "config": cfg,
            "metric": match data.kind {
                ReadoutKind::Classification => "accuracy",
                ReadoutKind::Regression => "mse",
            },
            "n_train": report.n_train,
            "n_test": report.n_test,
            "input_units": data.input_units,
            "label_names": data.label_names,
            "encoding": data.encoding_meta,
            "aborted": report.aborted,
            "epochs_run": report.rows.len(),
            "final": report.rows.last(),
            "tool_version": env!("CARGO_PKG_VERSION"),
        });
        std::fs::write(dir.join("run.json"), serde_json::to_string_pretty(&manifest)?)?;
    }
    Ok(report)
}

/// Metrics of one predictor on one example set.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n: usize,
    pub accuracy: Option<f64>,
    pub nll: Option<f64>,
    pub ece: Option<f64>,
    pub mse: Option<f64>,
}

/// Score a predictor on examples; fills the fields that apply to the task.
pub fn evaluate_examples(
    net: &Network,
    predictor: &Predictor,
    examples: &[Example],
    kind: ReadoutKind,
) -> Result<EvalSummary> {
    let records = predict_batch(net, predictor, examples)?;
    Ok(match kind {
        ReadoutKind::Classification => EvalSummary {
            n: records.len(),
            accuracy: Some(accuracy(&records)?),
            nll: Some(nll(&records)?),
            ece: Some(expected_calibration_error(&records, DEFAULT_ECE_BINS)?),
            mse: None,
        },
        ReadoutKind::Regression => EvalSummary {
            n: records.len(),
            accuracy: None,
            nll: None,
            ece: None,
            mse: Some(mse(&records)?),
        },
    })
}

/// Point-estimate and (for the variational rule) ensemble metrics of a
/// checkpoint on an example set.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub point: EvalSummary,
    pub ensemble: Option<EvalSummary>,
}

pub fn evaluate_checkpoint(ckpt: &Checkpoint, examples: &[Example]) -> Result<EvalReport> {
    ckpt.validate()?;
    let kind = ckpt
        .network
        .heads
        .last()
        .map(|h| h.kind)
        .ok_or_else(|| Error::Incompatible("checkpoint network has no layers".into()))?;
    let inference = ckpt.inference_weights();
    let point = evaluate_examples(
        &ckpt.network,
        &Predictor::Deterministic(&inference),
        examples,
        kind,
    )?;
    let ensemble = if ckpt.rule == TrainRule::Bayes {
        Some(evaluate_examples(
            &ckpt.network,
            &Predictor::Ensemble {
                logits: &ckpt.params,
                k: ckpt.config.ensemble_size,
                seed: ckpt.config.seeds.ensemble,
            },
            examples,
            kind,
        )?)
    } else {
        None
    };
    Ok(EvalReport { point, ensemble })
}

/// One temperature of a KL-temperature sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepPoint {
    pub rho: f64,
    pub train_metric: f64,
    pub test_metric: Option<f64>,
    pub dir: Option<PathBuf>,
}

/// Train the variational rule once per temperature, sharing every other
/// setting (and all seeds) across the runs. When `out_dir` is given, each
/// run writes into `rho_<i>/` and a `sweep.json` summary is written.
pub fn run_rho_sweep(
    base: &TrainRunConfig,
    rhos: &[f64],
    out_dir: Option<&Path>,
) -> Result<Vec<SweepPoint>> {
    if rhos.is_empty() {
        return Err(Error::InvalidParam("sweep needs at least one temperature".into()));
    }
    let mut points = Vec::with_capacity(rhos.len());
    for (i, &rho) in rhos.iter().enumerate() {
        let mut cfg = base.clone();
        cfg.rule = TrainRule::Bayes;
        cfg.rho = rho;
        let sub = out_dir.map(|d| d.join(format!("rho_{i}")));
        let report = run_train(&cfg, sub.as_deref())?;
        let row = report
            .final_row()
            .ok_or_else(|| Error::InvalidParam("sweep run produced no epochs".into()))?;
        points.push(SweepPoint {
            rho,
            train_metric: row.train_metric,
            test_metric: row.test_metric,
            dir: sub,
        });
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(&points)?)?;
    }
    Ok(points)
}

/// Write grid cells as `x,y,p` CSV (full float precision).
pub fn write_grid_csv(path: &Path, cells: &[GridCell]) -> Result<()> {
    let mut out = String::from("x,y,p\n");
    for c in cells {
        out.push_str(&format!("{},{},{}\n", c.x, c.y, c.p));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Dense prediction surface of a 2-class checkpoint over `bbox`, using the
/// point estimate or the configured ensemble.
pub fn checkpoint_grid(
    ckpt: &Checkpoint,
    use_ensemble: bool,
    bbox: (f64, f64, f64, f64),
    resolution: usize,
) -> Result<Vec<GridCell>> {
    ckpt.validate()?;
    let spec = ckpt.config.data.population_spec()?;
    let inference = ckpt.inference_weights();
    let predictor = if use_ensemble {
        Predictor::Ensemble {
            logits: &ckpt.params,
            k: ckpt.config.ensemble_size,
            seed: ckpt.config.seeds.ensemble,
        }
    } else {
        Predictor::Deterministic(&inference)
    };
    uncertainty_grid(
        &ckpt.network,
        &predictor,
        &spec,
        bbox,
        resolution,
        ckpt.config.seeds.data,
    )
}

/// Result of one randomized gradient check case.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradCheckCase {
    pub description: String,
    pub max_rel_err: f64,
}

/// Aggregate report of the analytic-vs-numeric gradient checks and the
/// Monte Carlo check of the relaxed gradient estimator.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub cases: Vec<GradCheckCase>,
    pub worst_rel_err: f64,
    pub estimator: EstimatorCheck,
    pub estimator_max_z: f64,
}

/// Run `n_cases` randomized finite-difference checks of the local learning
/// gradients plus one Monte Carlo check of the relaxed estimator against
/// exhaustive enumeration (temperature `tau`, `mc_samples` draws).
pub fn gradient_check_report(n_cases: usize, mc_samples: usize, tau: f64) -> Result<GradCheckReport> {
    if n_cases == 0 {
        return Err(Error::InvalidParam("need at least one check case".into()));
    }
    let mut cases = Vec::with_capacity(n_cases);
    let mut worst = 0.0f64;
    for i in 0..n_cases {
        let case = random_check_case(1000 + i as u64);
        let err = frozen_trajectory_max_rel_err(&case.net, &case.weights, &case.inputs, &case.target)?;
        worst = worst.max(err);
        cases.push(GradCheckCase {
            description: case.description,
            max_rel_err: err,
        });
    }
    // smooth surrogate loss over four weights; gradient known in closed form
    let logits = [0.3, -0.6, 1.1, 0.05];
    let coeff = [0.7, -0.4, 0.2, 1.0];
    let loss = move |w: &[f64]| {
        let s: f64 = coeff.iter().zip(w).map(|(c, x)| c * x).sum();
        0.5 * (s - 1.0) * (s - 1.0)
    };
    let grad = move |w: &[f64]| {
        let s: f64 = coeff.iter().zip(w).map(|(c, x)| c * x).sum();
        coeff.iter().map(|c| (s - 1.0) * c).collect()
    };
    let estimator = estimator_mc_check(&logits, loss, grad, tau, mc_samples, 424242)?;
    let estimator_max_z = estimator.max_abs_z();
    Ok(GradCheckReport {
        cases,
        worst_rel_err: worst,
        estimator,
        estimator_max_z,
    })
}
