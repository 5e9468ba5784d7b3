//! Regenerate the bundled fixture set, optionally verifying that the
//! generated assets support the full calibrate-and-mask workflow for
//! every masking family.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use selmask::config::RunConfig;
use selmask::embeddings::EmbeddingTable;
use selmask::fixtures::{generate, FIXTURE_SEED};
use selmask::lexicon::SeedLexicon;
use selmask::maskfn::{calibrate, MaskFamily, Sidedness};
use selmask::pipeline::{
    collect_score_sample, load_corpus, run_pipeline, PipelineInputs, Strategy,
};
use selmask::scorer::train_scorer;
use selmask::stats::analyze_jsonl;
use selmask::tokenizer::Vocab;

#[derive(Parser)]
#[command(about = "Regenerate the bundled fixture assets")]
struct Args {
    /// Output directory for the fixture set.
    #[arg(long, default_value = "fixtures")]
    dir: PathBuf,

    /// Generation seed.
    #[arg(long, default_value_t = FIXTURE_SEED)]
    seed: u64,

    /// After generating, run every masking family end to end and check
    /// realized rates, enrichment, and scorer separability.
    #[arg(long)]
    verify: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Err(err) = generate(&args.dir, args.seed) {
        eprintln!("fixture generation failed: {err}");
        return ExitCode::from(1);
    }
    println!("fixtures written to {}", args.dir.display());
    if !args.verify {
        return ExitCode::SUCCESS;
    }
    match verify(&args.dir) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("verification failed to run: {err}");
            ExitCode::from(1)
        }
    }
}

fn verify(dir: &std::path::Path) -> selmask::Result<bool> {
    let config = RunConfig::load(&dir.join("config.toml"))?;
    let policy = config.normalization;
    let vocab = Vocab::load(&config.paths.vocab)?;
    let table = EmbeddingTable::load(&config.paths.embeddings, &policy)?;
    let lexicon = SeedLexicon::load(
        &config.paths.seed_negative,
        &config.paths.seed_positive,
        &policy,
    )?;
    let documents = load_corpus(&config.paths.corpus)?;

    let mut ok = true;
    let mut check = |label: &str, pass: bool, detail: String| {
        println!("{}: {label} ({detail})", if pass { "PASS" } else { "FAIL" });
        ok &= pass;
    };

    let model = train_scorer(
        &lexicon,
        &table,
        config.scorer.reg_c,
        config.scorer.epochs,
        config.rng_seed,
    )?;
    let accuracy = model
        .training_stats()
        .expect("fresh model has stats")
        .accuracy;
    check(
        "seed training accuracy 100%",
        accuracy == 1.0,
        format!("accuracy {accuracy}"),
    );

    let sample = collect_score_sample(
        &documents,
        &vocab,
        &policy,
        &model,
        &table,
        config.calibration_sample_cap,
        config.rng_seed,
    )?;
    println!("calibration sample: {} token scores", sample.len());

    for family in [MaskFamily::Step, MaskFamily::Linear, MaskFamily::Exponential] {
        for sidedness in [Sidedness::TwoSided, Sidedness::OneSidedHi] {
            let label = format!("{}/{}", family.name(), sidedness.name());
            let (mask_cfg, report) = match calibrate(
                family,
                sidedness,
                config.mask_fn.fixed_shape(),
                &sample,
                config.mask_fn.target_rate,
                config.mask_fn.calibration_tolerance,
            ) {
                Ok(solved) => solved,
                Err(err) => {
                    check(&format!("calibrate {label}"), false, err.to_string());
                    continue;
                }
            };
            let seq_cfg = config.sequence_config();
            let inputs = PipelineInputs {
                documents: &documents,
                vocab: &vocab,
                scorer: Some((&model, &table)),
                mask_cfg: &mask_cfg,
                seq_cfg: &seq_cfg,
                policy: &policy,
                lexicon: Some(&lexicon),
                workers: config.workers,
            };
            let mut out = Vec::new();
            let run = run_pipeline(&inputs, &mut out)?;
            let realized = run.realized_mask_rate();
            check(
                &format!("realized rate {label}"),
                (realized - 0.15).abs() <= 0.01,
                format!(
                    "calibrated {}={:.4} rate {:.4}, realized {realized:.4}",
                    report.solved_parameter, report.solved_value, report.achieved_rate
                ),
            );
            if family == MaskFamily::Step && sidedness == Sidedness::TwoSided {
                let ratio = run.enrichment_ratio.unwrap_or(0.0);
                check(
                    "seed enrichment >= 3 (probability ratio)",
                    ratio >= 3.0,
                    format!("ratio {ratio:.2}"),
                );
            }
        }
    }

    // Token-level masking must split some multi-piece word; whole-word
    // strategies must split none.
    let scratch = dir.join("verify_tmp");
    std::fs::create_dir_all(&scratch).map_err(|e| selmask::Error::io(&scratch, e))?;
    for (strategy, expect_violations) in [
        (Strategy::RandomWwm, false),
        (Strategy::RandomTm, true),
    ] {
        let mask_cfg = selmask::maskfn::MaskFnConfig::random_baseline(config.mask_fn.target_rate);
        let mut seq_cfg = config.sequence_config();
        seq_cfg.strategy = strategy;
        let inputs = PipelineInputs {
            documents: &documents,
            vocab: &vocab,
            scorer: None,
            mask_cfg: &mask_cfg,
            seq_cfg: &seq_cfg,
            policy: &policy,
            lexicon: Some(&lexicon),
            workers: config.workers,
        };
        let mut out = Vec::new();
        run_pipeline(&inputs, &mut out)?;
        let jsonl = scratch.join(format!("{}.jsonl", strategy.name()));
        std::fs::write(&jsonl, &out).map_err(|e| selmask::Error::io(&jsonl, e))?;
        let stats = analyze_jsonl(&jsonl, &vocab, Some(&lexicon))?;
        let pass = (stats.whole_word_violations > 0) == expect_violations;
        check(
            &format!("whole-word violations {}", strategy.name()),
            pass,
            format!(
                "violations {} rate {:.4}",
                stats.whole_word_violations,
                stats.realized_mask_rate()
            ),
        );
    }

    let _ = std::fs::remove_dir_all(&scratch);
    println!("{}", if ok { "all checks passed" } else { "some checks FAILED" });
    Ok(ok)
}
