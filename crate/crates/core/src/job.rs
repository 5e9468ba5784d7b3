//! Config-driven orchestration shared by every front end: each job loads
//! exactly the inputs it needs, runs one stage, and writes its artifacts
//! into the configured output directory.

use std::path::{Path, PathBuf};

use crate::config::{RunConfig, CALIBRATED_CONFIG_FILE, RESOLVED_CONFIG_FILE};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::lexicon::SeedLexicon;
use crate::maskfn::{calibrate, CalibrationReport, ScoreSample};
use crate::pipeline::{collect_score_sample, load_corpus, run_pipeline, PipelineInputs, RunReport, Strategy};
use crate::scorer::{train_scorer, ScoreModel};
use crate::stats::{analyze_jsonl, StatsReport};
use crate::tokenizer::Vocab;

pub const EXAMPLES_FILE: &str = "examples.jsonl";
pub const REPORT_FILE: &str = "run_report.txt";

fn load_model(config: &RunConfig) -> Result<ScoreModel> {
    let path = config.paths.model_path();
    RunConfig::require_file("model", &path)?;
    ScoreModel::load(&path)
}

fn load_lexicon_if_present(config: &RunConfig) -> Result<Option<SeedLexicon>> {
    if config.paths.seed_negative.is_file() && config.paths.seed_positive.is_file() {
        Ok(Some(SeedLexicon::load(
            &config.paths.seed_negative,
            &config.paths.seed_positive,
            &config.normalization,
        )?))
    } else {
        Ok(None)
    }
}

/// Train the word scorer from the configured seed lexicons and
/// embeddings, then save the model and the resolved config. Returns the
/// model (carrying its training stats) and where it was written.
pub fn train_job(config: &RunConfig) -> Result<(ScoreModel, PathBuf)> {
    RunConfig::require_file("embeddings", &config.paths.embeddings)?;
    RunConfig::require_file("seed_negative", &config.paths.seed_negative)?;
    RunConfig::require_file("seed_positive", &config.paths.seed_positive)?;

    let policy = config.normalization;
    let table = EmbeddingTable::load(&config.paths.embeddings, &policy)?;
    let lexicon = SeedLexicon::load(
        &config.paths.seed_negative,
        &config.paths.seed_positive,
        &policy,
    )?;
    let model = train_scorer(
        &lexicon,
        &table,
        config.scorer.reg_c,
        config.scorer.epochs,
        config.rng_seed,
    )?;

    config.ensure_output_dir()?;
    let model_path = config.paths.model_path();
    model.save(&model_path)?;
    config.save(&config.paths.output_dir.join(RESOLVED_CONFIG_FILE))?;
    Ok((model, model_path))
}

/// The reservoir-sampled, token-frequency-weighted score sample the
/// calibration expectation runs over, drawn from the configured corpus.
pub fn corpus_score_sample(config: &RunConfig) -> Result<ScoreSample> {
    RunConfig::require_file("corpus", &config.paths.corpus)?;
    RunConfig::require_file("vocab", &config.paths.vocab)?;
    RunConfig::require_file("embeddings", &config.paths.embeddings)?;
    let policy = config.normalization;
    let vocab = Vocab::load(&config.paths.vocab)?;
    let table = EmbeddingTable::load(&config.paths.embeddings, &policy)?;
    let model = load_model(config)?;
    let documents = load_corpus(&config.paths.corpus)?;
    collect_score_sample(
        &documents,
        &vocab,
        &policy,
        &model,
        &table,
        config.calibration_sample_cap,
        config.rng_seed,
    )
}

/// Solve the configured masking function's free parameter against
/// `sample`, then write a ready-to-run calibrated config. Returns the
/// calibrated config, the solver report, and the written path.
pub fn calibrate_job(
    config: &RunConfig,
    sample: &ScoreSample,
) -> Result<(RunConfig, CalibrationReport, PathBuf)> {
    let (solved, report) = calibrate(
        config.mask_fn.family,
        config.mask_fn.sidedness,
        config.mask_fn.fixed_shape(),
        sample,
        config.mask_fn.target_rate,
        config.mask_fn.calibration_tolerance,
    )?;

    config.ensure_output_dir()?;
    let mut calibrated = config.clone();
    calibrated.mask_fn.absorb(&solved);
    let out_path = config.paths.output_dir.join(CALIBRATED_CONFIG_FILE);
    calibrated.save(&out_path)?;
    Ok((calibrated, report, out_path))
}

/// Emit masked training examples plus the run report and resolved config.
/// Returns the report and the examples path.
pub fn mask_job(config: &RunConfig) -> Result<(RunReport, PathBuf)> {
    RunConfig::require_file("corpus", &config.paths.corpus)?;
    RunConfig::require_file("vocab", &config.paths.vocab)?;

    let policy = config.normalization;
    let vocab = Vocab::load(&config.paths.vocab)?;
    // The baselines mask uniformly at the target rate, so only the
    // selective strategy needs the scorer and its embeddings.
    let scoring = if config.sequence.strategy == Strategy::Selective {
        RunConfig::require_file("embeddings", &config.paths.embeddings)?;
        let table = EmbeddingTable::load(&config.paths.embeddings, &policy)?;
        let model = load_model(config)?;
        Some((model, table))
    } else {
        None
    };
    let lexicon = load_lexicon_if_present(config)?;
    let documents = load_corpus(&config.paths.corpus)?;

    let mask_cfg = config.mask_fn.mask_config();
    let seq_cfg = config.sequence_config();
    let inputs = PipelineInputs {
        documents: &documents,
        vocab: &vocab,
        scorer: scoring.as_ref().map(|(m, t)| (m, t)),
        mask_cfg: &mask_cfg,
        seq_cfg: &seq_cfg,
        policy: &policy,
        lexicon: lexicon.as_ref(),
        workers: config.workers,
    };

    config.ensure_output_dir()?;
    let examples_path = config.paths.output_dir.join(EXAMPLES_FILE);
    let file = std::fs::File::create(&examples_path).map_err(|e| Error::io(&examples_path, e))?;
    let mut writer = std::io::BufWriter::new(file);
    let report = run_pipeline(&inputs, &mut writer)?;
    use std::io::Write as _;
    writer.flush().map_err(|e| Error::io(&examples_path, e))?;

    let report_path = config.paths.output_dir.join(REPORT_FILE);
    std::fs::write(&report_path, report.to_key_value()).map_err(|e| Error::io(&report_path, e))?;
    config.save(&config.paths.output_dir.join(RESOLVED_CONFIG_FILE))?;
    Ok((report, examples_path))
}

/// Re-derive statistics from an emitted JSONL file, independently of the
/// run that produced it.
pub fn stats_job(config: &RunConfig, input: &Path) -> Result<StatsReport> {
    RunConfig::require_file("input", input)?;
    RunConfig::require_file("vocab", &config.paths.vocab)?;
    let vocab = Vocab::load(&config.paths.vocab)?;
    let lexicon = load_lexicon_if_present(config)?;
    analyze_jsonl(input, &vocab, lexicon.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{generate, FIXTURE_SEED};

    #[test]
    fn jobs_chain_train_calibrate_mask_stats() {
        let dir = tempfile::tempdir().unwrap();
        generate(dir.path(), FIXTURE_SEED).unwrap();
        let mut config = RunConfig::load(&dir.path().join("config.toml")).unwrap();
        config.paths.output_dir = dir.path().join("out");

        let (model, model_path) = train_job(&config).unwrap();
        assert!(model_path.is_file());
        assert_eq!(model.training_stats().unwrap().accuracy, 1.0);

        let sample = corpus_score_sample(&config).unwrap();
        let (calibrated, report, path) = calibrate_job(&config, &sample).unwrap();
        assert!(path.is_file());
        assert!((report.achieved_rate - 0.15).abs() <= 0.002);

        let (run_report, examples) = mask_job(&calibrated).unwrap();
        assert!(examples.is_file());
        assert!((run_report.realized_mask_rate() - 0.15).abs() <= 0.01);

        let stats = stats_job(&calibrated, &examples).unwrap();
        assert_eq!(stats.whole_word_violations, 0);
        assert_eq!(stats.masked_positions, run_report.selected_positions);
    }
}
