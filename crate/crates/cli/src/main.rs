//! Command-line front end: dataset generation, event-file ingestion,
//! training, temperature sweeps, evaluation, prediction surfaces, and
//! gradient checks.
//!
//! Successful commands exit 0. Any failure prints a single JSON object
//! (`{"error": "..."}`) to stderr and exits 1.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use bisnn::checkpoint::Checkpoint;
use bisnn::config::{load_config, TrainRunConfig};
use bisnn::dataset::{read_dataset, write_dataset};
use bisnn::encoding::{
    encode_labeled_points, encode_regression_points, gen_1d_clusters, gen_two_moons,
    PopulationCodeSpec,
};
use bisnn::events::{ingest_label_directories, BinningSpec};
use bisnn::network::ReadoutKind;
use bisnn::runner::{
    checkpoint_grid, evaluate_checkpoint, gradient_check_report, prepare_data, run_rho_sweep,
    run_train, write_grid_csv,
};
use bisnn::synth::write_synth_dataset;

#[derive(Parser)]
#[command(name = "bisnn", version, about = "Binary-weight spiking network trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset.
    #[command(subcommand)]
    GenData(GenTask),
    /// Bin event-camera recordings (one subdirectory per label) into an
    /// encoded dataset container.
    IngestDvs(IngestArgs),
    /// Train a model from a JSON run config.
    Train(TrainArgs),
    /// Train the variational rule across several KL temperatures.
    Sweep(SweepArgs),
    /// Score a trained checkpoint.
    Eval(EvalArgs),
    /// Write a dense 2D prediction surface of a 2-class checkpoint.
    Grid(GridArgs),
    /// Compare analytic gradients against finite differences and the
    /// relaxed estimator against exhaustive enumeration.
    Gradcheck(GradcheckArgs),
}

#[derive(Subcommand)]
enum GenTask {
    /// Clustered 1D regression, population-encoded into spikes.
    Onedim(OnedimArgs),
    /// Two-moons 2D classification, population-encoded into spikes.
    Twomoons(TwomoonsArgs),
    /// Synthetic event-camera recordings (rotating ring vs. swaying bar)
    /// written as one event file per recording.
    DvsSynth(DvsSynthArgs),
}

#[derive(Args)]
struct EncodeOpts {
    /// Time steps per encoded example.
    #[arg(long, default_value_t = 100)]
    t_steps: usize,
    /// Population-code units per input dimension.
    #[arg(long, default_value_t = 20)]
    n_units: usize,
}

#[derive(Args)]
struct OnedimArgs {
    /// Output dataset container path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    seed: u64,
    #[command(flatten)]
    encode: EncodeOpts,
}

#[derive(Args)]
struct TwomoonsArgs {
    /// Output dataset container path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    n_per_class: usize,
    #[arg(long, default_value_t = 0.1)]
    noise_std: f64,
    #[arg(long, default_value_t = 2)]
    seed: u64,
    #[command(flatten)]
    encode: EncodeOpts,
}

#[derive(Args)]
struct DvsSynthArgs {
    /// Directory to fill with `<class>/recNNNN.aedat` files.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 100)]
    n_per_class: usize,
    #[arg(long, default_value_t = 2)]
    seed: u64,
}

#[derive(Args)]
struct IngestArgs {
    /// Directory of recordings, one subdirectory per label.
    #[arg(long)]
    in_dir: PathBuf,
    /// Output dataset container path.
    #[arg(long)]
    out: PathBuf,
    /// Cap on recordings ingested per label.
    #[arg(long)]
    limit: Option<usize>,
    /// Time-bin width in microseconds.
    #[arg(long, default_value_t = 2000)]
    window_us: u32,
    /// Number of time bins.
    #[arg(long, default_value_t = 100)]
    t_steps: usize,
    /// Crop as `x0,y0,width,height` in sensor pixels.
    #[arg(long, default_value = "32,32,64,64")]
    crop: String,
    /// Spatial downsampling stride.
    #[arg(long, default_value_t = 2)]
    stride: u16,
    /// Merge ON/OFF events into one channel instead of two.
    #[arg(long)]
    merge_polarities: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON run config.
    #[arg(long)]
    config: PathBuf,
    /// Where to write checkpoint.json, metrics.csv, run.json.
    #[arg(long)]
    out_dir: PathBuf,
    /// Override a config field, e.g. `--set epochs=10` or
    /// `--set data.n_per_class=50`. Repeatable; applied after the file.
    #[arg(long = "set", value_name = "PATH=VALUE", allow_hyphen_values = true)]
    overrides: Vec<String>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON run config (rule is forced to the variational one).
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated KL temperatures.
    #[arg(long, default_value = "1e-6,1e-4,1e-2,1")]
    rhos: String,
    /// Parent directory for the per-temperature runs.
    #[arg(long)]
    out_dir: PathBuf,
    /// Override a config field (see `train --set`). Repeatable.
    #[arg(long = "set", value_name = "PATH=VALUE", allow_hyphen_values = true)]
    overrides: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Trained checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset container to score. Omitted: regenerate the checkpoint's
    /// own data and score the chosen split.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Split of the regenerated data to score (train|test|all).
    #[arg(long, default_value = "test")]
    split: String,
    /// Also write the report JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    /// Trained 2-class checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output CSV path (columns x,y,p).
    #[arg(long)]
    out: PathBuf,
    /// Grid is resolution x resolution points.
    #[arg(long, default_value_t = 60)]
    resolution: usize,
    /// Bounding box `x0,y0,x1,y1`.
    #[arg(long, default_value = "-1.5,-1.0,2.5,1.5", allow_hyphen_values = true)]
    bbox: String,
    /// Average over sampled weight realizations instead of the point
    /// estimate (variational checkpoints only).
    #[arg(long)]
    ensemble: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Randomized finite-difference cases.
    #[arg(long, default_value_t = 20)]
    cases: usize,
    /// Monte Carlo draws for the estimator check.
    #[arg(long, default_value_t = 100000)]
    samples: usize,
    /// Relaxation temperature of the estimator check.
    #[arg(long, default_value_t = 0.05)]
    tau: f64,
}

fn parse_numbers<T: std::str::FromStr>(text: &str, expected: Option<usize>, what: &str) -> anyhow::Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    let parts: Vec<T> = text
        .split(',')
        .map(|p| p.trim().parse::<T>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("parsing {what} from {text:?}"))?;
    if let Some(n) = expected {
        if parts.len() != n {
            bail!("{what} needs {n} comma-separated values, got {}", parts.len());
        }
    }
    Ok(parts)
}

/// Load a run config, applying `--set path=value` overrides on top of the
/// file's JSON before it is validated. Values parse as JSON when possible
/// (numbers, booleans, arrays) and fall back to plain strings (`rule=bayes`).
fn load_config_with_overrides(path: &Path, overrides: &[String]) -> anyhow::Result<TrainRunConfig> {
    if overrides.is_empty() {
        return Ok(load_config(path)?);
    }
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut tree: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    for spec in overrides {
        let (dotted, raw) = spec
            .split_once('=')
            .with_context(|| format!("override {spec:?} is not of the form path=value"))?;
        let value = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        let mut node = &mut tree;
        let mut segments = dotted.split('.').peekable();
        while let Some(seg) = segments.next() {
            let map = node
                .as_object_mut()
                .with_context(|| format!("override path {dotted:?}: {seg:?} is not an object"))?;
            if segments.peek().is_none() {
                map.insert(seg.to_string(), value);
                break;
            }
            node = map
                .entry(seg.to_string())
                .or_insert_with(|| serde_json::Value::Object(Default::default()));
        }
    }
    let cfg: TrainRunConfig = serde_json::from_value(tree)
        .with_context(|| format!("config {} after overrides", path.display()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData(task) => gen_data(task),
        Command::IngestDvs(args) => ingest_dvs(args),
        Command::Train(args) => train(args),
        Command::Sweep(args) => sweep(args),
        Command::Eval(args) => eval(args),
        Command::Grid(args) => grid(args),
        Command::Gradcheck(args) => gradcheck(args),
    }
}

fn gen_data(task: GenTask) -> anyhow::Result<()> {
    match task {
        GenTask::Onedim(args) => {
            let spec = PopulationCodeSpec::new(args.encode.n_units, (-1.2, 1.2), args.encode.t_steps)?;
            let points = gen_1d_clusters(args.seed);
            let examples = encode_regression_points(&points, &spec, args.seed)?;
            let meta = serde_json::json!({
                "task": "onedim-clusters", "population": spec, "data_seed": args.seed,
            });
            write_dataset(&args.out, &examples, ReadoutKind::Regression, meta)?;
            println!("wrote {} regression examples to {}", examples.len(), args.out.display());
        }
        GenTask::Twomoons(args) => {
            let spec = PopulationCodeSpec::new(args.encode.n_units, (-1.5, 2.5), args.encode.t_steps)?;
            let points = gen_two_moons(args.n_per_class, args.noise_std, args.seed)?;
            let examples = encode_labeled_points(&points, &spec, args.seed)?;
            let meta = serde_json::json!({
                "task": "two-moons", "labels": ["0", "1"], "n_per_class": args.n_per_class,
                "noise_std": args.noise_std, "population": spec, "data_seed": args.seed,
            });
            write_dataset(&args.out, &examples, ReadoutKind::Classification, meta)?;
            println!("wrote {} labeled examples to {}", examples.len(), args.out.display());
        }
        GenTask::DvsSynth(args) => {
            write_synth_dataset(&args.out_dir, args.n_per_class, args.seed)?;
            println!(
                "wrote {} recordings per class under {}",
                args.n_per_class,
                args.out_dir.display()
            );
        }
    }
    Ok(())
}

fn ingest_dvs(args: IngestArgs) -> anyhow::Result<()> {
    let crop = parse_numbers::<u16>(&args.crop, Some(4), "--crop")?;
    let spec = BinningSpec {
        window_us: args.window_us,
        t_steps: args.t_steps,
        crop: (crop[0], crop[1], crop[2], crop[3]),
        stride: args.stride,
        polarity_channels: !args.merge_polarities,
        start_us: None,
    };
    let (examples, labels) = ingest_label_directories(&args.in_dir, &spec, args.limit)?;
    let meta = serde_json::json!({
        "task": "event-recordings",
        "labels": labels,
        "binning": spec,
        "source_dir": args.in_dir.display().to_string(),
        "limit": args.limit,
    });
    write_dataset(&args.out, &examples, ReadoutKind::Classification, meta)?;
    println!(
        "ingested {} recordings ({} labels) into {}",
        examples.len(),
        labels.len(),
        args.out.display()
    );
    Ok(())
}

fn train(args: TrainArgs) -> anyhow::Result<()> {
    let cfg = load_config_with_overrides(&args.config, &args.overrides)?;
    let report = run_train(&cfg, Some(&args.out_dir))?;
    if report.aborted {
        bail!(
            "training aborted after {} epochs on a non-finite update; last good state kept in {}",
            report.rows.len(),
            args.out_dir.display()
        );
    }
    let last = report.final_row();
    println!(
        "{}",
        serde_json::json!({
            "epochs": report.rows.len(),
            "n_train": report.n_train,
            "n_test": report.n_test,
            "final": last,
            "out_dir": args.out_dir.display().to_string(),
        })
    );
    Ok(())
}

fn sweep(args: SweepArgs) -> anyhow::Result<()> {
    let cfg = load_config_with_overrides(&args.config, &args.overrides)?;
    let rhos = parse_numbers::<f64>(&args.rhos, None, "--rhos")?;
    let points = run_rho_sweep(&cfg, &rhos, Some(&args.out_dir))?;
    println!("{}", serde_json::to_string_pretty(&points)?);
    Ok(())
}

fn eval(args: EvalArgs) -> anyhow::Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let (examples, scored) = match &args.dataset {
        Some(path) => {
            let (_, examples) = read_dataset(path)?;
            (examples, format!("dataset {}", path.display()))
        }
        None => {
            let data = prepare_data(&ckpt.config)?;
            match args.split.as_str() {
                "train" => (data.train, "train split".to_string()),
                "test" => (data.test, "test split".to_string()),
                "all" => {
                    let mut all = data.train;
                    all.extend(data.test);
                    (all, "all examples".to_string())
                }
                other => bail!("unknown split {other:?} (expected train, test, or all)"),
            }
        }
    };
    if examples.is_empty() {
        bail!("nothing to evaluate: {scored} is empty");
    }
    let report = evaluate_checkpoint(&ckpt, &examples)?;
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(out) = &args.out {
        std::fs::write(out, &text)?;
    }
    println!("{text}");
    Ok(())
}

fn grid(args: GridArgs) -> anyhow::Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let bbox = parse_numbers::<f64>(&args.bbox, Some(4), "--bbox")?;
    let cells = checkpoint_grid(
        &ckpt,
        args.ensemble,
        (bbox[0], bbox[1], bbox[2], bbox[3]),
        args.resolution,
    )?;
    write_grid_csv(&args.out, &cells)?;
    println!("wrote {} grid cells to {}", cells.len(), args.out.display());
    Ok(())
}

fn gradcheck(args: GradcheckArgs) -> anyhow::Result<()> {
    let report = gradient_check_report(args.cases, args.samples, args.tau)?;
    for case in &report.cases {
        println!("{:<60} max rel err {:.3e}", case.description, case.max_rel_err);
    }
    println!(
        "worst analytic-vs-numeric relative error: {:.3e} over {} cases",
        report.worst_rel_err,
        report.cases.len()
    );
    println!(
        "relaxed-estimator Monte Carlo z-score: {:.3} ({} samples, tau {})",
        report.estimator_max_z, args.samples, args.tau
    );
    if report.worst_rel_err > 1e-4 {
        bail!("gradient check failed: relative error {} > 1e-4", report.worst_rel_err);
    }
    if report.estimator_max_z > 4.0 {
        bail!("estimator check failed: z-score {} > 4", report.estimator_max_z);
    }
    println!("all checks passed");
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{}", serde_json::json!({ "error": format!("{e:#}") }));
        std::process::exit(1);
    }
}
