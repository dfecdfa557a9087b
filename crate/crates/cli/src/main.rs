use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use geoblur_core::blur::BlurSpec;
use geoblur_core::classify::{FeatureParams, Hyperparams, LinearModel, ThresholdRule};
use geoblur_core::features::FeatureSet;
use geoblur_core::gradient::GradientOperator;
use geoblur_core::pipeline::{self, Classifier, RunConfig};
use geoblur_core::report::CorpusReport;

/// Exit code when the report contains per-file failures.
const EXIT_PARTIAL: u8 = 2;

#[derive(Parser)]
#[command(name = "geoblur", version, about = "Blur triage for grayscale image corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute features for every image in a corpus.
    Extract(ExtractArgs),
    /// Label every image with a trained model or a threshold rule.
    Classify(ClassifyArgs),
    /// Write blurred variants of clear images plus a label manifest.
    Synth(SynthArgs),
    /// Fit a linear classifier on an extraction report and a label manifest.
    Train(TrainArgs),
    /// Dump histograms, spectra and views for one image.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct CorpusArgs {
    /// Files or directories; directories are walked recursively.
    #[arg(long = "input", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// File-name pattern for directory walks [default: *.png *.jpg *.jpeg *.tif].
    #[arg(long = "glob")]
    globs: Vec<String>,
    /// Worker count [default: logical CPUs].
    #[arg(long, env = "GEOBLUR_THREADS")]
    threads: Option<usize>,
    /// Record per-file wall time in duration_ms.
    #[arg(long)]
    timings: bool,
}

#[derive(Args, Default)]
struct ParamArgs {
    #[arg(long, value_parser = parse_operator)]
    grad_operator: Option<GradientOperator>,
    #[arg(long)]
    grad_threshold: Option<f64>,
    #[arg(long)]
    svd_k: Option<usize>,
    /// Longest side before the SVD; `none` or 0 decomposes at full size.
    #[arg(long, value_parser = parse_downscale)]
    svd_downscale: Option<Downscale>,
    #[arg(long)]
    fft_divisor: Option<f64>,
}

#[derive(Clone, Copy)]
struct Downscale(Option<usize>);

fn parse_downscale(s: &str) -> Result<Downscale, String> {
    match s {
        "none" | "0" => Ok(Downscale(None)),
        _ => s.parse().map(|n| Downscale(Some(n))).map_err(|e| format!("{e}")),
    }
}

fn parse_operator(s: &str) -> Result<GradientOperator, String> {
    s.parse().map_err(|e: geoblur_core::Error| e.to_string())
}

impl ParamArgs {
    fn resolve(&self, base: FeatureParams) -> FeatureParams {
        FeatureParams {
            grad_operator: self.grad_operator.unwrap_or(base.grad_operator),
            grad_threshold: self.grad_threshold.unwrap_or(base.grad_threshold),
            svd_k: self.svd_k.unwrap_or(base.svd_k),
            svd_downscale: self.svd_downscale.map_or(base.svd_downscale, |d| d.0),
            fft_divisor: self.fft_divisor.unwrap_or(base.fft_divisor),
        }
    }
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Comma-separated subset of grad,svd,fft.
    #[arg(long, default_value = "grad,svd,fft")]
    features: FeatureSet,
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("classifier").required(true).args(["model", "rule"]))]
struct ClassifyArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Model JSON written by `train`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Threshold rule such as `beta>0.63:blurry`.
    #[arg(long)]
    rule: Option<ThresholdRule>,
    /// Feature parameters; with --model they default to the model's own.
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long = "input", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// `spin:<degrees>`, `vshift:<pixels>` or `hshift:<pixels>`; repeatable.
    #[arg(long = "blur", required = true)]
    blurs: Vec<BlurSpec>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, env = "GEOBLUR_THREADS")]
    threads: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Extraction report CSV with all three features.
    #[arg(long)]
    features: PathBuf,
    /// Manifest with `path` and `label` columns.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = geoblur_core::classify::DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = geoblur_core::classify::DEFAULT_EPOCHS)]
    epochs: usize,
    #[arg(long, default_value_t = geoblur_core::classify::DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
    /// Also write a rank-k reconstruction.
    #[arg(long)]
    lowrank: Option<usize>,
}

fn run_config(corpus: CorpusArgs, features: FeatureSet, params: FeatureParams) -> Result<RunConfig> {
    let threads = corpus.threads.unwrap_or_else(geoblur_core::par::default_threads);
    if threads == 0 {
        bail!("--threads must be at least 1");
    }
    Ok(RunConfig { inputs: corpus.inputs, globs: corpus.globs, features, params, threads, timings: corpus.timings })
}

fn write_report(report: &CorpusReport, csv: &Path, json: Option<&Path>) -> Result<()> {
    fs::write(csv, report.to_csv_string()?).with_context(|| format!("writing {}", csv.display()))?;
    if let Some(json) = json {
        fs::write(json, report.to_json_string()?).with_context(|| format!("writing {}", json.display()))?;
    }
    Ok(())
}

fn finish(report: &CorpusReport) -> u8 {
    let failed = report.failed();
    if failed > 0 {
        for row in report.rows.iter().filter(|r| r.error.is_some()) {
            eprintln!("failed: {} ({})", row.path, row.error.as_deref().unwrap_or(""));
        }
        EXIT_PARTIAL
    } else {
        0
    }
}

fn extract(args: ExtractArgs) -> Result<u8> {
    let config = run_config(args.corpus, args.features, args.params.resolve(FeatureParams::default()))?;
    let report = pipeline::run_extract(&config)?;
    write_report(&report, &args.out, args.json.as_deref())?;
    println!("{} files, {} failed", report.rows.len(), report.failed());
    Ok(finish(&report))
}

fn classify(args: ClassifyArgs) -> Result<u8> {
    let (classifier, base) = match (&args.model, args.rule) {
        (Some(path), _) => {
            let model = LinearModel::load(path).with_context(|| format!("loading {}", path.display()))?;
            let base = model.params.clone();
            (Classifier::Model(Box::new(model)), base)
        }
        (None, Some(rule)) => (Classifier::Rule(rule), FeatureParams::default()),
        (None, None) => bail!("one of --model or --rule is required"),
    };
    let config = run_config(args.corpus, classifier.required_features(), args.params.resolve(base))?;
    let report = pipeline::run_classify(&config, &classifier)?;
    write_report(&report, &args.out, args.json.as_deref())?;
    let s = report.summary.unwrap_or_default();
    println!("clear {}, blurry {}, failed {}", s.clear, s.blurry, s.failed);
    Ok(finish(&report))
}

fn synth(args: SynthArgs) -> Result<u8> {
    let threads = args.threads.unwrap_or_else(geoblur_core::par::default_threads).max(1);
    let out = pipeline::run_synth(&args.inputs, &args.blurs, &args.out_dir, threads)?;
    for path in &out.identical {
        eprintln!("warning: {} is identical to its source", path.display());
    }
    println!("{} manifest rows written to {}", out.manifest.len(), out.manifest_path.display());
    Ok(0)
}

fn train(args: TrainArgs) -> Result<u8> {
    let hp = Hyperparams { lambda: args.lambda, epochs: args.epochs, seed: args.seed };
    let out = pipeline::run_train(&args.features, &args.labels, &hp)?;
    out.model.save(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    for (name, flag) in ["alpha", "beta", "gamma"].iter().zip(out.degenerate) {
        if flag {
            eprintln!("warning: {name} is constant over the training set");
        }
    }
    if out.skipped > 0 {
        eprintln!("warning: {} report rows skipped (failed or unlabeled)", out.skipped);
    }
    println!("training accuracy: {:.4} ({} samples)", out.training_accuracy, out.samples);
    Ok(0)
}

fn inspect(args: InspectArgs) -> Result<u8> {
    let params = args.params.resolve(FeatureParams::default());
    let out = pipeline::inspect(&args.input, &args.out_dir, &params, args.lowrank)?;
    for path in &out.written {
        println!("{}", path.display());
    }
    println!("alpha {} beta {} gamma {}", out.alpha, out.beta, out.gamma);
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Extract(a) => extract(a),
        Command::Classify(a) => classify(a),
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Inspect(a) => inspect(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
