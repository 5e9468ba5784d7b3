//! Python bindings: the pipeline's main types (vocabulary, embeddings,
//! seed lexicon, scorer, masking function) plus the config-driven jobs
//! (train, calibrate, mask, stats) as plain functions returning dicts.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use selmask::config::RunConfig;
use selmask::embeddings::EmbeddingTable;
use selmask::error::{Error, EXIT_CALIBRATION};
use selmask::lexicon::SeedLexicon;
use selmask::maskfn::{
    calibrate as calibrate_fn, FixedShape, MaskFamily, MaskFnConfig, ScoreSample, Sidedness,
};
use selmask::normalize::NormalizationPolicy;
use selmask::pipeline::{RunReport, Strategy};
use selmask::scorer::{train_scorer as train_scorer_fn, ScoreModel};
use selmask::stats::StatsReport;
use selmask::tokenizer::{tokenize_text, tokenize_word, Vocab, DEFAULT_MAX_WORD_CHARS};

fn err(e: Error) -> PyErr {
    let message = e.to_string();
    match &e {
        Error::Io { .. } => PyOSError::new_err(message),
        _ if e.exit_code() == EXIT_CALIBRATION => PyRuntimeError::new_err(message),
        _ => PyValueError::new_err(message),
    }
}

fn policy(lowercase: bool, strip_accents: bool) -> NormalizationPolicy {
    NormalizationPolicy {
        lowercase,
        strip_accents,
    }
}

fn parse_family(name: &str) -> PyResult<MaskFamily> {
    match name {
        "step" => Ok(MaskFamily::Step),
        "linear" => Ok(MaskFamily::Linear),
        "exponential" => Ok(MaskFamily::Exponential),
        "random_baseline" => Ok(MaskFamily::RandomBaseline),
        _ => Err(PyValueError::new_err(format!(
            "unknown family {name:?}; expected step, linear, exponential, or random_baseline"
        ))),
    }
}

fn parse_sidedness(name: &str) -> PyResult<Sidedness> {
    match name {
        "two_sided" => Ok(Sidedness::TwoSided),
        "one_sided_hi" => Ok(Sidedness::OneSidedHi),
        "one_sided_lo" => Ok(Sidedness::OneSidedLo),
        _ => Err(PyValueError::new_err(format!(
            "unknown sidedness {name:?}; expected two_sided, one_sided_hi, or one_sided_lo"
        ))),
    }
}

fn parse_strategy(name: &str) -> PyResult<Strategy> {
    match name {
        "selective" => Ok(Strategy::Selective),
        "random_tm" => Ok(Strategy::RandomTm),
        "random_wwm" => Ok(Strategy::RandomWwm),
        _ => Err(PyValueError::new_err(format!(
            "unknown strategy {name:?}; expected selective, random_tm, or random_wwm"
        ))),
    }
}

/// Apply the pipeline's text normalization.
#[pyfunction]
#[pyo3(signature = (text, lowercase=true, strip_accents=false))]
fn normalize(text: &str, lowercase: bool, strip_accents: bool) -> String {
    policy(lowercase, strip_accents).apply(text)
}

/// WordPiece vocabulary: one token per line, ## marking continuations.
#[pyclass(name = "Vocab", frozen)]
struct PyVocab {
    inner: Vocab,
    policy: NormalizationPolicy,
}

#[pymethods]
impl PyVocab {
    #[staticmethod]
    #[pyo3(signature = (path, lowercase=true, strip_accents=false))]
    fn load(path: PathBuf, lowercase: bool, strip_accents: bool) -> PyResult<Self> {
        Ok(PyVocab {
            inner: Vocab::load(&path).map_err(err)?,
            policy: policy(lowercase, strip_accents),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn id_of(&self, token: &str) -> Option<u32> {
        self.inner.id_of(token)
    }

    fn token(&self, id: u32) -> PyResult<String> {
        if (id as usize) < self.inner.len() {
            Ok(self.inner.token(id).to_string())
        } else {
            Err(PyValueError::new_err(format!("token id {id} out of range")))
        }
    }

    /// Greedy longest-match pieces of one already-normalized word.
    fn tokenize(&self, word: &str) -> Vec<String> {
        tokenize_word(&self.inner, word, DEFAULT_MAX_WORD_CHARS)
            .into_iter()
            .map(|id| self.inner.token(id).to_string())
            .collect()
    }

    /// Normalize and tokenize free text: a list of (word, pieces) pairs.
    fn tokenize_text(&self, text: &str) -> Vec<(String, Vec<String>)> {
        let seq = tokenize_text(&self.inner, text, &self.policy);
        seq.word_spans
            .iter()
            .zip(&seq.word_surfaces)
            .map(|(&(start, end), surface)| {
                let pieces = seq.token_ids[start..end]
                    .iter()
                    .map(|&id| self.inner.token(id).to_string())
                    .collect();
                (surface.clone(), pieces)
            })
            .collect()
    }
}

/// Word embeddings in the text format "count dim" header + one word per
/// line.
#[pyclass(name = "EmbeddingTable", frozen)]
struct PyEmbeddingTable {
    inner: EmbeddingTable,
}

#[pymethods]
impl PyEmbeddingTable {
    #[staticmethod]
    #[pyo3(signature = (path, lowercase=true, strip_accents=false))]
    fn load(path: PathBuf, lowercase: bool, strip_accents: bool) -> PyResult<Self> {
        let inner =
            EmbeddingTable::load(&path, &policy(lowercase, strip_accents)).map_err(err)?;
        Ok(PyEmbeddingTable { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __contains__(&self, word: &str) -> bool {
        self.inner.contains(word)
    }
}

/// The two seed word lists anchoring the score scale's extremes.
#[pyclass(name = "SeedLexicon", frozen)]
struct PySeedLexicon {
    inner: SeedLexicon,
}

#[pymethods]
impl PySeedLexicon {
    #[new]
    #[pyo3(signature = (negative, positive, lowercase=true, strip_accents=false))]
    fn new(
        negative: Vec<String>,
        positive: Vec<String>,
        lowercase: bool,
        strip_accents: bool,
    ) -> PyResult<Self> {
        let inner = SeedLexicon::new(negative, positive, &policy(lowercase, strip_accents))
            .map_err(err)?;
        Ok(PySeedLexicon { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (negative_path, positive_path, lowercase=true, strip_accents=false))]
    fn load(
        negative_path: PathBuf,
        positive_path: PathBuf,
        lowercase: bool,
        strip_accents: bool,
    ) -> PyResult<Self> {
        let inner = SeedLexicon::load(
            &negative_path,
            &positive_path,
            &policy(lowercase, strip_accents),
        )
        .map_err(err)?;
        Ok(PySeedLexicon { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn swap_classes(&self) -> PySeedLexicon {
        PySeedLexicon {
            inner: self.inner.swap_classes(),
        }
    }
}

/// Linear separator scoring word task-relevance on [0, 10].
#[pyclass(name = "ScoreModel", frozen)]
struct PyScoreModel {
    inner: ScoreModel,
}

#[pymethods]
impl PyScoreModel {
    #[staticmethod]
    #[pyo3(signature = (lexicon, table, reg_c=1.0, epochs=100, rng_seed=42))]
    fn train(
        lexicon: &PySeedLexicon,
        table: &PyEmbeddingTable,
        reg_c: f64,
        epochs: usize,
        rng_seed: u64,
    ) -> PyResult<Self> {
        let inner =
            train_scorer_fn(&lexicon.inner, &table.inner, reg_c, epochs, rng_seed).map_err(err)?;
        Ok(PyScoreModel { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyScoreModel {
            inner: ScoreModel::load(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Training accuracy on the seed set; None for a reloaded model.
    #[getter]
    fn accuracy(&self) -> Option<f64> {
        self.inner.training_stats().map(|s| s.accuracy)
    }

    /// Score one already-normalized word; unknown words sit at 5.
    fn score(&self, word: &str, table: &PyEmbeddingTable) -> f64 {
        self.inner.score_word(word, &table.inner)
    }
}

/// Score-to-masking-probability map: family, sidedness, and constants.
#[pyclass(name = "MaskFunction", frozen)]
struct PyMaskFunction {
    inner: MaskFnConfig,
}

#[pymethods]
impl PyMaskFunction {
    #[new]
    #[pyo3(signature = (family, sidedness, alpha=0.0, beta=0.0, gamma=0.0, target_rate=0.15))]
    fn new(
        family: &str,
        sidedness: &str,
        alpha: f64,
        beta: f64,
        gamma: f64,
        target_rate: f64,
    ) -> PyResult<Self> {
        let inner = MaskFnConfig {
            family: parse_family(family)?,
            sidedness: parse_sidedness(sidedness)?,
            alpha,
            beta,
            gamma,
            target_rate,
        };
        inner.validate().map_err(err)?;
        Ok(PyMaskFunction { inner })
    }

    /// Solve the family's free parameter so the expected mask rate over
    /// `scores` hits `target_rate`.
    #[staticmethod]
    #[pyo3(signature = (family, sidedness, scores, target_rate=0.15, tolerance=0.002,
                        linear_pivot=5.0, exp_shape=0.5))]
    #[allow(clippy::too_many_arguments)]
    fn calibrate(
        py: Python<'_>,
        family: &str,
        sidedness: &str,
        scores: Vec<f64>,
        target_rate: f64,
        tolerance: f64,
        linear_pivot: f64,
        exp_shape: f64,
    ) -> PyResult<(Self, Py<PyDict>)> {
        let sample = ScoreSample::from_scores(scores).map_err(err)?;
        let fixed = FixedShape {
            linear_pivot,
            exp_shape,
        };
        let (cfg, report) = calibrate_fn(
            parse_family(family)?,
            parse_sidedness(sidedness)?,
            fixed,
            &sample,
            target_rate,
            tolerance,
        )
        .map_err(err)?;
        let dict = PyDict::new(py);
        dict.set_item("solved_parameter", report.solved_parameter)?;
        dict.set_item("solved_value", report.solved_value)?;
        dict.set_item("achieved_rate", report.achieved_rate)?;
        dict.set_item("iterations", report.iterations)?;
        dict.set_item("sample_size", report.sample_size)?;
        Ok((PyMaskFunction { inner: cfg }, dict.into()))
    }

    fn probability(&self, score: f64) -> PyResult<f64> {
        self.inner.probability(score).map_err(err)
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.inner.family.name()
    }

    #[getter]
    fn sidedness(&self) -> &'static str {
        self.inner.sidedness.name()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    #[getter]
    fn target_rate(&self) -> f64 {
        self.inner.target_rate
    }
}

fn run_report_dict(py: Python<'_>, report: &RunReport, examples: &std::path::Path) -> PyResult<Py<PyDict>> {
    let dict = PyDict::new(py);
    dict.set_item("strategy", report.strategy.name())?;
    dict.set_item("mask_family", report.mask_config.family.name())?;
    dict.set_item("sidedness", report.mask_config.sidedness.name())?;
    dict.set_item("alpha", report.mask_config.alpha)?;
    dict.set_item("beta", report.mask_config.beta)?;
    dict.set_item("gamma", report.mask_config.gamma)?;
    dict.set_item("target_rate", report.mask_config.target_rate)?;
    dict.set_item("rng_seed", report.rng_seed)?;
    dict.set_item("max_seq_len", report.max_seq_len)?;
    dict.set_item("max_predictions", report.max_predictions)?;
    dict.set_item("documents", report.documents)?;
    dict.set_item("sequences", report.sequences)?;
    dict.set_item("examples", report.examples)?;
    dict.set_item("sequences_dropped", report.sequences_dropped)?;
    dict.set_item("content_tokens", report.content_tokens)?;
    dict.set_item("selected_positions", report.selected_positions)?;
    dict.set_item("realized_mask_rate", report.realized_mask_rate())?;
    dict.set_item("selected_units", report.selected_units)?;
    dict.set_item("mask_fate_units", report.mask_fate_units)?;
    dict.set_item("replace_fate_units", report.replace_fate_units)?;
    dict.set_item("keep_fate_units", report.keep_fate_units)?;
    dict.set_item("forced_selections", report.forced_selections)?;
    dict.set_item("cap_dropped_units", report.cap_dropped_units)?;
    dict.set_item("mean_prob_all_words", report.mean_prob_all_words)?;
    dict.set_item("mean_prob_seed_words", report.mean_prob_seed_words)?;
    dict.set_item("enrichment_ratio", report.enrichment_ratio)?;
    dict.set_item("examples_path", examples)?;
    Ok(dict.into())
}

fn stats_dict(py: Python<'_>, stats: &StatsReport) -> PyResult<Py<PyDict>> {
    let dict = PyDict::new(py);
    dict.set_item("examples", stats.examples)?;
    dict.set_item("content_tokens", stats.content_tokens)?;
    dict.set_item("masked_positions", stats.masked_positions)?;
    dict.set_item("realized_mask_rate", stats.realized_mask_rate())?;
    dict.set_item("words", stats.words)?;
    dict.set_item("masked_words", stats.masked_words)?;
    dict.set_item("whole_word_violations", stats.whole_word_violations)?;
    dict.set_item("structural_violations", stats.structural_violations)?;
    dict.set_item("masked_units", stats.masked_units)?;
    dict.set_item("mask_fate_units", stats.mask_fate_units)?;
    dict.set_item("replace_fate_units", stats.replace_fate_units)?;
    dict.set_item("keep_fate_units", stats.keep_fate_units)?;
    dict.set_item("mask_fate_positions", stats.mask_fate_positions)?;
    dict.set_item("replace_fate_positions", stats.replace_fate_positions)?;
    dict.set_item("keep_fate_positions", stats.keep_fate_positions)?;
    dict.set_item("seed_words", stats.seed_words)?;
    dict.set_item("masked_seed_words", stats.masked_seed_words)?;
    dict.set_item("enrichment_ratio", stats.enrichment_ratio())?;
    Ok(dict.into())
}

/// Train the scorer described by a config file; returns training stats.
#[pyfunction]
fn train_scorer(py: Python<'_>, config_path: PathBuf) -> PyResult<Py<PyDict>> {
    let config = RunConfig::load(&config_path).map_err(err)?;
    let (model, model_path) = selmask::job::train_job(&config).map_err(err)?;
    let stats = model.training_stats().expect("fresh model carries stats");
    let dict = PyDict::new(py);
    dict.set_item("model_path", model_path)?;
    dict.set_item("dim", model.dim())?;
    dict.set_item("accuracy", stats.accuracy)?;
    dict.set_item("margin", stats.margin)?;
    dict.set_item("iterations", stats.iterations)?;
    dict.set_item("dropped_words", stats.dropped_words)?;
    Ok(dict.into())
}

/// Calibrate the configured masking function on the configured corpus;
/// writes calibrated_config.toml and returns the solver report.
#[pyfunction]
fn calibrate(py: Python<'_>, config_path: PathBuf) -> PyResult<Py<PyDict>> {
    let config = RunConfig::load(&config_path).map_err(err)?;
    let sample = selmask::job::corpus_score_sample(&config).map_err(err)?;
    let (calibrated, report, out_path) =
        selmask::job::calibrate_job(&config, &sample).map_err(err)?;
    let dict = PyDict::new(py);
    dict.set_item("family", calibrated.mask_fn.family.name())?;
    dict.set_item("sidedness", calibrated.mask_fn.sidedness.name())?;
    dict.set_item("solved_parameter", report.solved_parameter)?;
    dict.set_item("solved_value", report.solved_value)?;
    dict.set_item("achieved_rate", report.achieved_rate)?;
    dict.set_item("iterations", report.iterations)?;
    dict.set_item("sample_size", report.sample_size)?;
    dict.set_item("calibrated_config", out_path)?;
    Ok(dict.into())
}

/// Emit masked training examples per the config; returns the run report.
#[pyfunction]
#[pyo3(signature = (config_path, strategy=None, workers=None, rng_seed=None, output_dir=None))]
fn mask(
    py: Python<'_>,
    config_path: PathBuf,
    strategy: Option<&str>,
    workers: Option<usize>,
    rng_seed: Option<u64>,
    output_dir: Option<PathBuf>,
) -> PyResult<Py<PyDict>> {
    let mut config = RunConfig::load(&config_path).map_err(err)?;
    if let Some(name) = strategy {
        config.sequence.strategy = parse_strategy(name)?;
    }
    if let Some(w) = workers {
        config.workers = w;
        config.validate_values().map_err(err)?;
    }
    if let Some(seed) = rng_seed {
        config.rng_seed = seed;
    }
    if let Some(dir) = output_dir {
        if config.paths.model.is_none() {
            config.paths.model = Some(config.paths.model_path());
        }
        config.paths.output_dir = dir;
    }
    let (report, examples_path) = selmask::job::mask_job(&config).map_err(err)?;
    run_report_dict(py, &report, &examples_path)
}

/// Re-derive statistics from an emitted JSONL file.
#[pyfunction]
#[pyo3(signature = (config_path, input=None))]
fn stats(py: Python<'_>, config_path: PathBuf, input: Option<PathBuf>) -> PyResult<Py<PyDict>> {
    let config = RunConfig::load(&config_path).map_err(err)?;
    let input = input
        .unwrap_or_else(|| config.paths.output_dir.join(selmask::job::EXAMPLES_FILE));
    let report = selmask::job::stats_job(&config, &input).map_err(err)?;
    stats_dict(py, &report)
}

#[pymodule]
fn selmask_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVocab>()?;
    m.add_class::<PyEmbeddingTable>()?;
    m.add_class::<PySeedLexicon>()?;
    m.add_class::<PyScoreModel>()?;
    m.add_class::<PyMaskFunction>()?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(train_scorer, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(mask, m)?)?;
    m.add_function(wrap_pyfunction!(stats, m)?)?;
    Ok(())
}
