//! Command-line front end: synthetic data, flow preprocessing, training,
//! LOSO evaluation and standalone metrics.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use microflow_core::config::Config;
use microflow_core::dataset::Manifest;
use microflow_core::evaluation::{run_protocol, ConfusionMatrix, MetricSummary, ProtocolSpec};
use microflow_core::flow::FlowField;
use microflow_core::model::{ClipInput, ModelWeights};
use microflow_core::pipeline::{flows_to_input, preprocess_manifest, read_clip_flows, write_clip_flows};
use microflow_core::synth::{synth_generate, SynthSpec};
use microflow_core::training::{train, TrainSample};
use microflow_core::weights_io::{load_model, save_model};

#[derive(Parser)]
#[command(name = "microflow", version, about = "Micro-expression recognition from long-term optical flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (PNG frames and manifest.csv).
    Synth(SynthArgs),
    /// Compute long-term flow files for every sample of a manifest.
    Preprocess(PreprocessArgs),
    /// Train one model on every sample the protocol retains.
    Train(TrainArgs),
    /// Leave-one-subject-out evaluation with a fresh model per fold.
    Evaluate(EvaluateArgs),
    /// Score a prediction CSV with columns `true,predicted`.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    subjects: usize,
    #[arg(long, default_value_t = 3)]
    samples_per_subject: usize,
    /// Class motion directions in degrees.
    #[arg(long, value_delimiter = ',', default_value = "0,90,180")]
    directions: Vec<f64>,
    #[arg(long, default_value_t = 32)]
    image_side: usize,
    #[arg(long, default_value_t = 5)]
    frames: usize,
    #[arg(long, default_value_t = 3.0)]
    peak: f64,
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set epochs=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<Config> {
        let text = match &self.config {
            Some(p) => fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?,
            None => String::new(),
        };
        let origin = self.config.as_deref().map_or("defaults".into(), |p| p.display().to_string());
        Config::parse_with_overrides(&text, &self.overrides).with_context(|| format!("config {origin}"))
    }
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write color-coded PNG renderings of each flow field.
    #[arg(long)]
    png: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Flow cache written by `preprocess`; computed in memory when absent.
    #[arg(long)]
    flows: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output directory for weights.slst, train_log.jsonl and config.txt.
    #[arg(long)]
    out: PathBuf,
    /// Start from these weights instead of a seeded init.
    #[arg(long)]
    init: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output directory for report.json and confusion.csv.
    #[arg(long)]
    out: PathBuf,
    /// Initial weights for every fold (default: a seeded init per fold).
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// Class order; defaults to the sorted labels found in the file.
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<String>>,
    /// Write the JSON summary here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}

/// The error chain joined by `: `, skipping causes whose text the previous
/// message already ends with (core errors embed their I/O source).
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.ends_with(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Preprocess(a) => preprocess(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Metrics(a) => metrics(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load_manifest(path: &Path) -> Result<Manifest> {
    Manifest::load(path).with_context(|| format!("loading manifest {}", path.display()))
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        seed: a.seed,
        subjects: a.subjects,
        samples_per_subject: a.samples_per_subject,
        directions: a.directions,
        image_side: a.image_side,
        frames: a.frames,
        peak_displacement: a.peak,
        noise_std: a.noise,
    };
    let manifest = synth_generate(&spec, &a.out).with_context(|| format!("generating into {}", a.out.display()))?;
    println!(
        "wrote {} samples to {}",
        manifest.records.len(),
        a.out.join("manifest.csv").display()
    );
    Ok(())
}

fn preprocess(a: PreprocessArgs) -> Result<()> {
    let cfg = a.config.load()?;
    let manifest = load_manifest(&a.manifest)?;
    let flows = preprocess_manifest(&manifest, &cfg.preprocess)?;
    create_dir(&a.out)?;
    let png = a.png.then_some((cfg.preprocess.scale, cfg.preprocess.image_side));
    for (record, clip) in manifest.records.iter().zip(&flows) {
        write_clip_flows(&a.out, &record.sample_id, clip, png)
            .with_context(|| format!("sample {}", record.sample_id))?;
    }
    write_file(&a.out.join("config.txt"), &cfg.to_text())?;
    println!("wrote flows for {} samples to {}", flows.len(), a.out.display());
    Ok(())
}

/// Configuration, manifest, protocol and one encoder input per record.
struct Prepared {
    cfg: Config,
    manifest: Manifest,
    spec: ProtocolSpec,
    clips: Vec<ClipInput>,
}

fn prepare(a: &DataArgs) -> Result<Prepared> {
    let cfg = a.config.load()?;
    let manifest = load_manifest(&a.manifest)?;
    let spec = ProtocolSpec::new(cfg.protocol, &manifest.records)?;
    let flows: Vec<Vec<FlowField>> = match &a.flows {
        Some(root) => manifest
            .records
            .iter()
            .map(|r| read_clip_flows(root, &r.sample_id, cfg.preprocess.frames))
            .collect::<microflow_core::Result<_>>()
            .with_context(|| format!("reading flow cache {}", root.display()))?,
        None => preprocess_manifest(&manifest, &cfg.preprocess)?,
    };
    let clips = manifest
        .records
        .iter()
        .zip(&flows)
        .map(|(r, f)| flows_to_input(f, &cfg.preprocess, cfg.patch()).with_context(|| format!("sample {}", r.sample_id)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared {
        cfg,
        manifest,
        spec,
        clips,
    })
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let p = prepare(&a.data)?;
    let model = p.cfg.model(p.spec.label_set.len());
    let items = p.spec.select(&p.manifest.records)?;
    let samples: Vec<TrainSample> = items
        .iter()
        .map(|i| TrainSample {
            id: i.sample_id.clone(),
            clip: p.clips[i.record].clone(),
            label: i.class,
        })
        .collect();
    let init = match &a.init {
        Some(path) => load_model(path, &model)?,
        None => ModelWeights::init(&model, p.cfg.train.seed)?,
    };
    create_dir(&a.out)?;
    write_file(&a.out.join("config.txt"), &p.cfg.to_text())?;
    write_file(&a.out.join("labels.txt"), &(p.spec.label_set.join("\n") + "\n"))?;
    let log_path = a.out.join("train_log.jsonl");
    let mut log = fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
    let mut log_err = None;
    let outcome = train(&init, &model, &samples, &p.cfg.train, |rec| {
        let line = rec.to_json_line();
        if let Err(e) = writeln!(log, "{line}") {
            log_err.get_or_insert(e);
        }
        eprintln!("{line}");
    })?;
    if let Some(e) = log_err {
        return Err(e).with_context(|| format!("writing {}", log_path.display()));
    }
    let weights_path = a.out.join("weights.slst");
    save_model(&weights_path, &outcome.weights)?;
    let acc = outcome.log.last().map_or(0.0, |r| r.train_accuracy);
    println!(
        "trained on {} samples; final training accuracy {acc:.4}; weights in {}",
        samples.len(),
        weights_path.display()
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let p = prepare(&a.data)?;
    let model = p.cfg.model(p.spec.label_set.len());
    let init = a.weights.as_deref().map(|path| load_model(path, &model)).transpose()?;
    let report = run_protocol(&p.manifest.records, &p.clips, &p.spec, &model, &p.cfg.train, init.as_ref())?;
    create_dir(&a.out)?;
    write_file(&a.out.join("report.json"), &report.to_json())?;
    write_file(&a.out.join("confusion.csv"), &report.pooled_matrix().to_csv(&report.label_set)?)?;
    let s = &report.pooled;
    println!(
        "{}: {} folds, pooled accuracy {:.4} macro F1 {:.4} UF1 {:.4} UAR {:.4}",
        report.protocol,
        report.folds.len(),
        s.accuracy,
        s.macro_f1,
        s.uf1,
        s.uar
    );
    Ok(())
}

fn metrics(a: MetricsArgs) -> Result<()> {
    let path = &a.predictions;
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = reader.headers().with_context(|| format!("reading {}", path.display()))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .with_context(|| format!("{}: missing column {name:?}", path.display()))
    };
    let (ti, pi) = (column("true")?, column("predicted")?);
    let mut pairs = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.with_context(|| format!("{}: row {}", path.display(), line + 2))?;
        pairs.push((row[ti].trim().to_string(), row[pi].trim().to_string()));
    }
    if pairs.is_empty() {
        bail!("{}: no predictions", path.display());
    }
    let labels: Vec<String> = match a.labels {
        Some(l) => l,
        None => pairs
            .iter()
            .flat_map(|(t, p)| [t.clone(), p.clone()])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    if labels.len() < 2 {
        bail!("{}: need at least 2 classes, found {labels:?}", path.display());
    }
    let index = |l: &str, line: usize| {
        labels
            .iter()
            .position(|c| c == l)
            .with_context(|| format!("{}: row {line}: label {l:?} not in {labels:?}", path.display()))
    };
    let mut cm = ConfusionMatrix::new(labels.len());
    for (i, (t, p)) in pairs.iter().enumerate() {
        cm.record(index(t, i + 2)?, index(p, i + 2)?)?;
    }
    let summary = MetricSummary::from_matrix(&cm, &labels);
    let json = serde_json::to_string_pretty(&serde_json::json!({ "label_set": labels, "metrics": summary }))?;
    if let Some(out) = &a.out {
        write_file(out, &json)?;
    }
    println!("{json}");
    Ok(())
}
