//! `mglstm` command-line tool: synth, propose, extract, train, eval.
//!
//! Exit codes: 0 success, 1 training diverged, 2 usage or configuration,
//! 3 I/O, 4 malformed or inconsistent input files. Diagnostics go to stderr
//! as one JSON object per line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use mglstm::eval::{emit_curve, CurveFormat, GroundTruth};
use mglstm::features::{load_features, save_features};
use mglstm::imaging::CameraIntrinsics;
use mglstm::nnet::{load_checkpoint, save_checkpoint};
use mglstm::pipeline::{
    evaluate_features, extract_dataset, propose_dataset, read_jsonl, train_features, write_atomic, write_jsonl,
    DatasetDir, PipelineConfig, ProposalRecord,
};
use mglstm::synth::{generate_dataset, SceneDistribution};
use mglstm::training::log_to_csv;
use mglstm::{Error, Exec};

#[derive(Parser)]
#[command(name = "mglstm", version, about = "Multi-glimpse LSTM RGB-D head detection")]
struct Cli {
    /// Run per-image work on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic RGB-D dataset.
    Synth(SynthArgs),
    /// Generate head-top proposals for a dataset.
    Propose(ProposeArgs),
    /// Extract glimpse features for proposals.
    Extract(ExtractArgs),
    /// Train a classifier on labeled features.
    Train(TrainArgs),
    /// Score features and compute the miss-rate curve.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    images: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// People per image as MIN..MAX.
    #[arg(long, default_value = "1..3", value_parser = parse_range)]
    humans: (u32, u32),
    #[arg(long, default_value_t = 3)]
    clutter: u32,
    /// Head-like distractors (a bust on a stand) per image.
    #[arg(long, default_value_t = 0)]
    lookalikes: u32,
    /// Depth noise standard deviation in millimeters.
    #[arg(long, default_value_t = 10.0)]
    noise: f64,
    #[arg(long, default_value_t = 640)]
    width: usize,
    #[arg(long, default_value_t = 480)]
    height: usize,
}

#[derive(Args)]
struct ProposeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Proposals JSONL.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    proposals: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Feature file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for model.mgck, last.mgck and train_log.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    proposals: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Curve CSV.
    #[arg(long)]
    out_curve: PathBuf,
    /// Optional curve plot.
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once("..").ok_or("expected MIN..MAX")?;
    let a: u32 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: u32 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if a > b {
        return Err(format!("{a} > {b}"));
    }
    Ok((a, b))
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    msg: String,
    path: Option<PathBuf>,
}

impl Failure {
    fn usage(msg: impl Into<String>, path: Option<&Path>) -> Self {
        Self { code: 2, msg: msg.into(), path: path.map(Path::to_path_buf) }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::Io(_) => 3,
            Error::Format { .. } | Error::Shape(_) | Error::Json(_) | Error::Contract(_) => 4,
            Error::Config(_) | Error::InvalidDepth(_) => 2,
            Error::NonFinite { .. } => 1,
            Error::InFile { .. } => unreachable!("root() strips file context"),
        };
        Self { code, msg: e.root().to_string(), path: e.path().map(Path::to_path_buf) }
    }
}

fn diag(level: &str, msg: &str, path: Option<&Path>) {
    let line = json!({ "level": level, "msg": msg, "path": path.map(|p| p.display().to_string()) });
    eprintln!("{line}");
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, Failure> {
    match path {
        Some(p) if !p.exists() => Err(Failure::usage("config file not found", Some(p))),
        Some(p) => Ok(PipelineConfig::load(p)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn load_intrinsics(config: &PipelineConfig, data: Option<&DatasetDir>) -> Result<CameraIntrinsics, Failure> {
    let path = match (&config.intrinsics_path, data) {
        (Some(p), _) => p.clone(),
        (None, Some(d)) => d.intrinsics_path(),
        (None, None) => return Ok(CameraIntrinsics::default()),
    };
    if !path.exists() {
        return Err(Failure::usage("intrinsics file not found", Some(&path)));
    }
    Ok(CameraIntrinsics::load(&path)?)
}

fn open_dataset(dir: &Path) -> Result<DatasetDir, Failure> {
    if !dir.join(mglstm::synth::MANIFEST_FILE).exists() {
        return Err(Failure::usage("no manifest.json in dataset directory", Some(dir)));
    }
    Ok(DatasetDir::open(dir)?)
}

fn synth(a: &SynthArgs, exec: Exec) -> Result<(), Failure> {
    let dist = SceneDistribution {
        humans_min: a.humans.0,
        humans_max: a.humans.1,
        clutter: a.clutter,
        lookalikes: a.lookalikes,
        noise_sigma: a.noise,
        width: a.width,
        height: a.height,
        ..SceneDistribution::default()
    };
    if a.width == 0 || a.height == 0 || a.noise.is_nan() || a.noise < 0.0 {
        return Err(Failure::usage("width, height and noise must be positive", None));
    }
    std::fs::create_dir_all(&a.out).map_err(|e| Failure::from(Error::from(e).in_file(&a.out)))?;
    let k = CameraIntrinsics::default();
    let out = generate_dataset(a.images as usize, &dist, &k, a.seed, &a.out, exec)?;
    for w in &out.warnings {
        diag("warn", w, None);
    }
    let heads: usize = out.truths.iter().map(|t| t.head_tops.len()).sum();
    println!("images={}", out.manifest.images.len());
    println!("head_tops={heads}");
    Ok(())
}

fn propose(a: &ProposeArgs, exec: Exec) -> Result<(), Failure> {
    let config = load_config(a.config.as_deref())?;
    let data = open_dataset(&a.data)?;
    let k = load_intrinsics(&config, Some(&data))?;
    let (records, summary) = propose_dataset(&data, &k, &config.proposals, &config.match_params(&k), exec)?;
    write_jsonl(&a.out, &records)?;
    println!("images={}", summary.images);
    println!("proposals={}", summary.proposals);
    println!("mean_proposals_per_image={}", summary.mean_per_image);
    if let Some(r) = summary.recall {
        println!("recall={r}");
    }
    Ok(())
}

fn extract(a: &ExtractArgs, exec: Exec) -> Result<(), Failure> {
    let config = load_config(a.config.as_deref())?;
    let data = open_dataset(&a.data)?;
    let k = load_intrinsics(&config, Some(&data))?;
    let proposals: Vec<ProposalRecord> = read_jsonl(&a.proposals)?;
    let truths = data.truths()?;
    let matching = config.match_params(&k);
    let labels = truths.as_deref().map(|t| (t, &matching));
    let feats = extract_dataset(&data, &proposals, &k, &config.glimpse, &config.extractor, labels, exec).map_err(
        |e| match e {
            e @ Error::Contract(_) => e.in_file(&a.proposals),
            e => e,
        },
    )?;
    save_features(&a.out, &feats)?;
    let pos = feats.iter().filter(|f| f.label == Some(true)).count();
    println!("records={}", feats.len());
    println!("positives={pos}");
    Ok(())
}

fn train(a: &TrainArgs, exec: Exec) -> Result<(), Failure> {
    let config = load_config(a.config.as_deref())?;
    let feats = load_features(&a.features)?;
    let outcome = train_features(feats, &config, exec).map_err(|e| match e {
        e @ Error::Shape(_) => e.in_file(&a.features),
        e => e,
    })?;
    std::fs::create_dir_all(&a.out).map_err(|e| Failure::from(Error::from(e).in_file(&a.out)))?;
    save_checkpoint(&a.out.join("model.mgck"), &outcome.best)?;
    save_checkpoint(&a.out.join("last.mgck"), &outcome.last)?;
    write_atomic(&a.out.join("train_log.csv"), log_to_csv(&outcome.log).as_bytes())?;
    if let Some(last) = outcome.log.last() {
        println!("epochs={}", outcome.log.len());
        println!("mean_loss={}", last.mean_loss);
        println!("train_accuracy={}", last.train_accuracy);
    }
    Ok(())
}

fn eval(a: &EvalArgs, exec: Exec) -> Result<(), Failure> {
    let config = load_config(a.config.as_deref())?;
    let ckpt = load_checkpoint(&a.model)?;
    let feats = load_features(&a.features)?;
    let proposals: Vec<ProposalRecord> = read_jsonl(&a.proposals)?;
    let truths: Vec<GroundTruth> = read_jsonl(&a.truth)?;
    let k = load_intrinsics(&config, None)?;
    let report =
        evaluate_features(&ckpt, &feats, &proposals, &truths, &config.match_params(&k), exec).map_err(|e| match e {
            e @ Error::Shape(_) => e.in_file(&a.features),
            e @ Error::Contract(_) => e.in_file(&a.proposals),
            e => e,
        })?;
    emit_curve(&report.curve, &a.out_curve, CurveFormat::Csv)?;
    if let Some(svg) = &a.svg {
        emit_curve(&report.curve, svg, CurveFormat::Svg)?;
    }
    println!("detections={}", report.detections.len());
    println!("LAMR={}", report.lamr);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            diag("error", msg.lines().next().unwrap_or("usage error"), None);
            return ExitCode::from(2);
        }
    };
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    let result = match &cli.cmd {
        Cmd::Synth(a) => synth(a, exec),
        Cmd::Propose(a) => propose(a, exec),
        Cmd::Extract(a) => extract(a, exec),
        Cmd::Train(a) => train(a, exec),
        Cmd::Eval(a) => eval(a, exec),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            diag("error", &f.msg, f.path.as_deref());
            ExitCode::from(f.code)
        }
    }
}
