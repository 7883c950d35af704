use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use seaterra::eval::MiReport;
use seaterra::pipeline::{self, ConfigMap, FeaturePath, PipelineConfig, PipelineError};

#[derive(Parser)]
#[command(name = "seaterra", version, about = "Unsupervised terrain discovery in image streams")]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_features)]
    features: Option<FeaturePath>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Refinement iterations per ingested frame.
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// Override any config key, e.g. `--set rost.gamma=1e-5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured synthetic mission as PNG frames plus labels.csv.
    Synth,
    /// Train the convolutional autoencoder.
    TrainCae,
    /// Fit the visual vocabulary for the selected feature path.
    FitVocab,
    /// Stream words through the topic model.
    Run,
    /// Score a finished run against annotations.
    Eval,
    /// All stages end to end.
    Report,
}

fn parse_features(s: &str) -> Result<FeaturePath, String> {
    s.parse()
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut map = match &cli.config {
        Some(path) => ConfigMap::from_file(path)?,
        None => ConfigMap::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| PipelineError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        map.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        map.set("seed", &seed.to_string())?;
    }
    if let Some(f) = cli.features {
        map.set("run.features", f.as_str())?;
    }
    if let Some(out) = &cli.out {
        map.set("out", &out.to_string_lossy())?;
    }
    if let Some(b) = cli.budget {
        map.set("run.budget", &b.to_string())?;
    }
    PipelineConfig::from_map(&map)
}

fn print_report(r: &MiReport) {
    println!("frames        {}", r.frames);
    println!("topics        {}", r.k_discovered);
    println!("nmi_terrain   {:.4}", r.nmi_terrain);
    println!("nmi_interest  {:.4}", r.nmi_interest);
    if let Some(v) = r.nmi_interest_reconstruction {
        println!("nmi_interest (reconstruction)  {v:.4}");
    }
}

fn execute(cli: &Cli) -> Result<(), PipelineError> {
    if let Ok(v) = std::env::var("SEATERRA_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| PipelineError::Config(format!("SEATERRA_THREADS = {v:?} is not a positive integer")))?;
        pipeline::init_thread_pool(n)?;
    }
    let cfg = load_config(cli)?;
    let layout = pipeline::Layout::new(&cfg.out);
    match cli.command {
        Command::Synth => {
            let n = pipeline::synth(&cfg)?;
            println!("{n} frames written to {}", layout.data_dir().display());
        }
        Command::TrainCae => {
            let outcome = pipeline::train_cae(&cfg)?;
            let (first, last) = (outcome.history.first(), outcome.history.last());
            if let (Some(a), Some(b)) = (first, last) {
                println!("loss {a:.6} -> {b:.6} over {} epochs", outcome.history.len());
            }
            println!("model written to {}", layout.cae_model().display());
        }
        Command::FitVocab => {
            let cb = pipeline::fit_vocab(&cfg)?;
            println!(
                "{} words (dimension {}) written to {}",
                cb.size(),
                cb.dimension(),
                layout.codebook(cfg.features).display()
            );
        }
        Command::Run => {
            let s = pipeline::run(&cfg)?;
            println!(
                "{} frames, {} words, {} topics, mean perplexity {:.4}",
                s.frames, s.words, s.topics, s.perplexity.mean
            );
            println!("outputs in {}", layout.run_dir(cfg.features).display());
        }
        Command::Eval => {
            print_report(&pipeline::evaluate(&cfg)?);
            println!("report written to {}", layout.report(cfg.features).display());
        }
        Command::Report => {
            print_report(&pipeline::report(&cfg)?);
            println!("report written to {}", layout.report(cfg.features).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
