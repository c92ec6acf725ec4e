//! `kws`: feature extraction, synthetic data, training, evaluation and SDC
//! ablation from the command line.
//!
//! Exit status is 0 on success, 1 for runtime or data errors and 2 for usage
//! errors. Set `KWS_LOG` (e.g. `KWS_LOG=debug`) to change log verbosity.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use kws_core::data::{load_manifest, read_wav, synth_dataset, Dataset, SynthParams};
use kws_core::features::kwsf;
use kws_core::io_util::write_atomic;
use kws_core::metrics::{ablation_grid, grid_csv, summarize, ScoredSet, Summary, Sweep};
use kws_core::model::{evaluate, history_csv, train, Checkpoint};

use config::{resolve, ConfigArgs};

#[derive(Debug, Parser)]
#[command(name = "kws", version, about = "Keyword spotting with shifted delta coefficients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute features for a WAV file or every WAV file in a directory.
    Extract(ExtractArgs),
    /// Generate a synthetic keyword dataset and its manifest.
    Synth(SynthArgs),
    /// Train a matcher on a manifest.
    Train(TrainArgs),
    /// Score a manifest with a checkpoint.
    Eval(EvalArgs),
    /// Summarise a `score,label` CSV.
    Metrics(MetricsArgs),
    /// Train and evaluate one SDC model per sweep value.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// WAV file or directory of WAV files.
    input: PathBuf,
    /// Output KWSF file, or directory when the input is a directory.
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Comma-separated keywords; at least two.
    #[arg(long, value_delimiter = ',', required = true)]
    keywords: Vec<String>,
    #[arg(long, default_value_t = 25)]
    per_keyword: usize,
    /// Negatives per keyword as a multiple of `per_keyword`.
    #[arg(long, default_value_t = 1.0)]
    negative_ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for the WAV files and `manifest.jsonl`.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    /// Checkpoint path.
    #[arg(short, long)]
    output: PathBuf,
    /// History CSV path; defaults to the checkpoint path with a `.csv` extension.
    #[arg(long)]
    history: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    /// Scores CSV path.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// CSV with `score,label` rows.
    scores: PathBuf,
}

#[derive(Debug, Args)]
struct AblateArgs {
    /// Training manifest followed by evaluation manifest.
    #[arg(long, num_args = 2, value_names = ["TRAIN", "EVAL"], required = true)]
    manifests: Vec<PathBuf>,
    /// `d=A..B` or `k=A..B`; repeat to run several sweeps.
    #[arg(long, required = true)]
    sweep: Vec<Sweep>,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    /// Grid CSV path.
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

/// Bad invocation discovered after argument parsing.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn print_summary(s: &Summary) {
    println!("auc {:.6}", s.auc);
    println!("eer {:.6}", s.eer);
    println!("f1 {:.6}", s.f1);
}

fn extract(args: &ExtractArgs) -> Result<()> {
    let cfg = resolve(&args.config)?;
    let fe = cfg.front_end();
    let jobs: Vec<(PathBuf, PathBuf)> = if args.input.is_dir() {
        let mut wavs: Vec<PathBuf> = fs::read_dir(&args.input)
            .with_context(|| format!("listing {}", args.input.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        wavs.retain(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")));
        wavs.sort();
        fs::create_dir_all(&args.output).with_context(|| format!("creating {}", args.output.display()))?;
        wavs.into_iter()
            .map(|w| {
                let out = args.output.join(w.file_stem().unwrap()).with_extension("kwsf");
                (w, out)
            })
            .collect()
    } else {
        vec![(args.input.clone(), args.output.clone())]
    };
    for (wav, out) in &jobs {
        let wave = read_wav(wav)?;
        let feats = fe.extract(&wave).with_context(|| format!("extracting {}", wav.display()))?;
        kwsf::save(out, feats.kind().code(), feats.matrix()).with_context(|| format!("writing {}", out.display()))?;
        log::info!("{} -> {} ({}x{})", wav.display(), out.display(), feats.num_frames(), feats.dim());
    }
    println!("wrote {} feature file(s)", jobs.len());
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let mut distinct: Vec<String> = args.keywords.iter().map(|k| k.trim().to_lowercase()).collect();
    distinct.sort();
    distinct.dedup();
    if distinct.len() < 2 || distinct.len() != args.keywords.len() {
        return Err(usage("--keywords needs at least two distinct keywords"));
    }
    if args.per_keyword == 0 {
        return Err(usage("--per-keyword must be at least 1"));
    }
    log::info!(
        "synth: keywords {:?}, per_keyword {}, negative_ratio {}, seed {}",
        args.keywords,
        args.per_keyword,
        args.negative_ratio,
        args.seed
    );
    let params = SynthParams::default();
    log::info!("synth parameters: {params:?}");
    let manifest = synth_dataset(
        &args.keywords,
        args.per_keyword,
        args.negative_ratio,
        args.seed,
        &args.output,
        &params,
    )?;
    log::info!("{} pairs", manifest.len());
    println!("{}", args.output.join("manifest.jsonl").display());
    Ok(())
}

fn train_cmd(args: &TrainArgs) -> Result<()> {
    let cfg = resolve(&args.config)?;
    let manifest = load_manifest(&args.manifest)?;
    let dataset = Dataset::from_manifest(&manifest, &cfg.front_end())?;
    let outcome = train(&dataset, &cfg, args.epochs)?;
    outcome.best.save(&args.output)?;
    let history = args.history.clone().unwrap_or_else(|| args.output.with_extension("csv"));
    write_file(&history, history_csv(&outcome.history).as_bytes())?;
    match outcome.history.get(outcome.best_epoch.wrapping_sub(1)) {
        Some(best) => println!("best epoch {}: val_auc {:.6}", best.epoch, best.val_auc),
        None => println!("no epochs run; saved initial weights"),
    }
    Ok(())
}

fn eval_cmd(args: &EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.ckpt)?;
    log::info!("checkpoint step {}, configuration:\n{}", ckpt.step, ckpt.config.to_toml());
    let model = ckpt.to_model()?;
    let manifest = load_manifest(&args.manifest)?;
    let dataset = Dataset::from_manifest(&manifest, &ckpt.config.front_end())?;
    let all: Vec<usize> = (0..dataset.len()).collect();
    let scores = evaluate(&model, &dataset, &all)?.scores;
    scores.save_csv(&args.output)?;
    print_summary(&summarize(&scores)?);
    Ok(())
}

fn metrics_cmd(args: &MetricsArgs) -> Result<()> {
    let text = fs::read_to_string(&args.scores).with_context(|| format!("reading {}", args.scores.display()))?;
    print_summary(&summarize(&ScoredSet::from_csv(&text)?)?);
    Ok(())
}

fn ablate(args: &AblateArgs) -> Result<()> {
    let cfg = resolve(&args.config)?;
    let sweeps: Vec<String> = args.sweep.iter().map(Sweep::to_string).collect();
    log::info!("ablation sweeps {sweeps:?}, {} epochs each", args.epochs);
    let train_m = load_manifest(&args.manifests[0])?;
    let eval_m = load_manifest(&args.manifests[1])?;
    let rows = ablation_grid(&train_m, &eval_m, &args.sweep, &cfg, args.epochs)?;
    write_file(&args.output, grid_csv(&rows).as_bytes())?;
    println!("wrote {} rows to {}", rows.len(), args.output.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Extract(a) => extract(a),
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Metrics(a) => metrics_cmd(a),
        Command::Ablate(a) => ablate(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KWS_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            eprintln!("Run `kws --help` for usage.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
