//! Command-line front end: train the word scorer, calibrate a masking
//! function, score words, emit masked training data, and verify emitted
//! data. Every command reads one TOML config (plus a few flag overrides)
//! and is fully deterministic given that config.

use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use selmask::config::{RunConfig, CONFIG_ENV_VAR};
use selmask::embeddings::EmbeddingTable;
use selmask::error::{Error, Result};
use selmask::job::{calibrate_job, corpus_score_sample, mask_job, stats_job, train_job, EXAMPLES_FILE, REPORT_FILE};
use selmask::maskfn::{MaskFamily, ScoreSample, Sidedness};
use selmask::pipeline::Strategy;
use selmask::scorer::ScoreModel;

#[derive(Parser)]
#[command(
    name = "selmask",
    about = "Task-selective masking data pipeline for masked language model pre-training",
    version
)]
struct Cli {
    /// Path to the run configuration.
    #[arg(long, global = true, env = CONFIG_ENV_VAR, default_value = "config.toml")]
    config: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the word scorer from the seed lexicons and embeddings.
    TrainScorer {
        /// Override the configured output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Override the configured seed.
        #[arg(long)]
        rng_seed: Option<u64>,
    },
    /// Solve the masking function's free parameter for the target rate.
    Calibrate {
        /// Calibrate on raw scores (one per line) instead of the corpus.
        #[arg(long)]
        scores_file: Option<PathBuf>,
        /// Override the configured masking family.
        #[arg(long)]
        family: Option<MaskFamily>,
        /// Override the configured sidedness.
        #[arg(long)]
        sidedness: Option<Sidedness>,
        /// Override the configured target mask rate.
        #[arg(long)]
        target_rate: Option<f64>,
        /// Override the score model location.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Override the configured output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Score words read from stdin, one per line, as "word<TAB>score".
    Score {
        /// Override the score model location.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Emit masked training examples and a run report.
    Mask {
        /// Override the configured masking strategy.
        #[arg(long)]
        strategy: Option<Strategy>,
        /// Override the configured worker count.
        #[arg(long)]
        workers: Option<usize>,
        /// Override the configured seed.
        #[arg(long)]
        rng_seed: Option<u64>,
        /// Override the configured output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Verify an emitted JSONL file and print realized statistics.
    Stats {
        /// JSONL file to analyze; defaults to the configured output.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

/// Redirect outputs to `dir` while still reading the model from wherever
/// the loaded config would have found it.
fn redirect_outputs(config: &mut RunConfig, dir: PathBuf) {
    if config.paths.model.is_none() {
        config.paths.model = Some(config.paths.model_path());
    }
    config.paths.output_dir = dir;
}

fn run(cli: Cli) -> Result<()> {
    RunConfig::require_file("config", &cli.config)?;
    let config = RunConfig::load(&cli.config)?;
    match cli.command {
        Command::TrainScorer {
            output_dir,
            rng_seed,
        } => {
            let mut config = config;
            if let Some(dir) = output_dir {
                config.paths.output_dir = dir;
            }
            if let Some(seed) = rng_seed {
                config.rng_seed = seed;
            }
            cmd_train_scorer(&config)
        }
        Command::Calibrate {
            scores_file,
            family,
            sidedness,
            target_rate,
            model,
            output_dir,
        } => {
            let mut config = config;
            if let Some(f) = family {
                config.mask_fn.family = f;
            }
            if let Some(s) = sidedness {
                config.mask_fn.sidedness = s;
            }
            if let Some(rate) = target_rate {
                config.mask_fn.target_rate = rate;
                config.validate_values()?;
            }
            if let Some(path) = model {
                config.paths.model = Some(path);
            }
            if let Some(dir) = output_dir {
                redirect_outputs(&mut config, dir);
            }
            cmd_calibrate(&config, scores_file.as_deref())
        }
        Command::Score { model } => {
            let mut config = config;
            if let Some(path) = model {
                config.paths.model = Some(path);
            }
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            cmd_score(&config, stdin.lock(), stdout.lock())
        }
        Command::Mask {
            strategy,
            workers,
            rng_seed,
            output_dir,
        } => {
            let mut config = config;
            if let Some(s) = strategy {
                config.sequence.strategy = s;
            }
            if let Some(w) = workers {
                config.workers = w;
                config.validate_values()?;
            }
            if let Some(seed) = rng_seed {
                config.rng_seed = seed;
            }
            if let Some(dir) = output_dir {
                redirect_outputs(&mut config, dir);
            }
            cmd_mask(&config)
        }
        Command::Stats { input } => {
            let input = input.unwrap_or_else(|| config.paths.output_dir.join(EXAMPLES_FILE));
            cmd_stats(&config, &input)
        }
    }
}

fn cmd_train_scorer(config: &RunConfig) -> Result<()> {
    let (model, model_path) = train_job(config)?;
    let stats = model.training_stats().expect("fresh model carries stats");
    println!("model={}", model_path.display());
    println!("dim={}", model.dim());
    println!("accuracy={:.6}", stats.accuracy);
    println!("margin={:.6}", stats.margin);
    println!("iterations={}", stats.iterations);
    println!("dropped_words={}", stats.dropped_words);
    println!("class_lo_words={}", stats.class_lo_count);
    println!("class_hi_words={}", stats.class_hi_count);
    Ok(())
}

fn read_scores_file(path: &std::path::Path) -> Result<ScoreSample> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut scores = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let score: f64 = line.parse().map_err(|_| Error::ScoresFile {
            path: path.to_path_buf(),
            line: i + 1,
            detail: format!("not a number: {line:?}"),
        })?;
        scores.push(score);
    }
    ScoreSample::from_scores(scores)
}

fn cmd_calibrate(config: &RunConfig, scores_file: Option<&std::path::Path>) -> Result<()> {
    let sample = match scores_file {
        Some(path) => {
            RunConfig::require_file("scores", path)?;
            read_scores_file(path)?
        }
        None => corpus_score_sample(config)?,
    };
    let (calibrated, report, out_path) = calibrate_job(config, &sample)?;

    println!("family={}", calibrated.mask_fn.family.name());
    println!("sidedness={}", calibrated.mask_fn.sidedness.name());
    println!("solved_parameter={}", report.solved_parameter);
    println!("solved_value={:?}", report.solved_value);
    println!("achieved_rate={:.6}", report.achieved_rate);
    println!("iterations={}", report.iterations);
    println!("sample_size={}", report.sample_size);
    println!("calibrated_config={}", out_path.display());
    Ok(())
}

fn cmd_score(config: &RunConfig, input: impl BufRead, mut output: impl Write) -> Result<()> {
    RunConfig::require_file("embeddings", &config.paths.embeddings)?;
    let policy = config.normalization;
    let table = EmbeddingTable::load(&config.paths.embeddings, &policy)?;
    let model_path = config.paths.model_path();
    RunConfig::require_file("model", &model_path)?;
    let model = ScoreModel::load(&model_path)?;

    for line in input.lines() {
        let line = line.map_err(|e| Error::io("<stdin>", e))?;
        let word = line.trim();
        if word.is_empty() {
            continue;
        }
        let normalized = policy.apply(word);
        let score = model.score_word(&normalized, &table);
        writeln!(output, "{word}\t{score:?}").map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(())
}

fn cmd_mask(config: &RunConfig) -> Result<()> {
    let (report, examples_path) = mask_job(config)?;
    print!("{}", report.to_key_value());
    println!("examples={}", examples_path.display());
    println!("report={}", config.paths.output_dir.join(REPORT_FILE).display());
    Ok(())
}

fn cmd_stats(config: &RunConfig, input: &std::path::Path) -> Result<()> {
    let report = stats_job(config, input)?;
    print!("{}", report.to_key_value());
    Ok(())
}
