//! Evaluation harness: build the benchmark prompt, query a model through the
//! gateway, robustly parse JSON predictions, and compute accuracies per
//! dataset and per language.

pub mod parse;
pub mod prompt;

pub use parse::{parse_response, parse_response_strict, PredictionSet};
pub use prompt::{build_eval_prompt, template_registry, PromptTemplate, OVERALL_SENTIMENT_KEY};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, SentimentPolarity};
use crate::gateway::{ChatRequest, GenParams, LlmGateway};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no JSON object found in model response")]
    NoJsonFound,
    #[error("{0} predictions for {1} gold samples")]
    LengthMismatch(usize, usize),
    #[error("three-class mode but gold contains {0} in {1:?}")]
    ClassModeViolation(SentimentPolarity, String),
    #[error("invalid probability distribution: {0}")]
    DomainError(String),
    #[error("unknown prompt template {0:?}")]
    UnknownTemplate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClassMode {
    Three,
    #[default]
    Five,
}

impl ClassMode {
    pub fn allowed(&self) -> &'static [SentimentPolarity] {
        match self {
            ClassMode::Three => &SentimentPolarity::THREE,
            ClassMode::Five => &SentimentPolarity::ALL,
        }
    }

    pub fn class_count(&self) -> usize {
        self.allowed().len()
    }
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub class_mode: ClassMode,
    pub include_overall: bool,
    pub gen_params: GenParams,
    pub prompt_template: String,
    /// Require the whole response to be a JSON object (for constrained
    /// decoding backends) instead of lenient extraction.
    pub strict_json: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            class_mode: ClassMode::Five,
            include_overall: false,
            gen_params: GenParams::deterministic(1024, false),
            prompt_template: "standard".to_string(),
            strict_json: false,
        }
    }
}

/// Three-class gold sets must not contain mixed or unknown labels; that is a
/// configuration error, never a silent coercion.
pub fn validate_class_mode(dataset: &Dataset, config: &EvalConfig) -> Result<(), EvalError> {
    if config.class_mode == ClassMode::Five {
        return Ok(());
    }
    for sample in &dataset.samples {
        for (label, polarity) in sample.aspects() {
            if !SentimentPolarity::THREE.contains(polarity) {
                return Err(EvalError::ClassModeViolation(
                    *polarity,
                    label.name().to_string(),
                ));
            }
        }
        if config.include_overall {
            if let Some(overall) = sample.overall {
                if !SentimentPolarity::THREE.contains(&overall) {
                    return Err(EvalError::ClassModeViolation(
                        overall,
                        OVERALL_SENTIMENT_KEY.to_string(),
                    ));
                }
            }
        }
    }
    Ok(())
}

pub const MISSING_BUCKET: &str = "missing";

/// Accuracy with per-class confusion counts; confusion rows are gold classes,
/// columns are predicted classes plus a `missing` bucket, summing to
/// `n_aspects`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub correct: usize,
    pub n_aspects: usize,
    pub n_parse_failures: usize,
    pub confusion: IndexMap<String, IndexMap<String, u64>>,
}

impl Metrics {
    fn empty() -> Self {
        let mut confusion = IndexMap::new();
        for gold in SentimentPolarity::ALL {
            let mut row = IndexMap::new();
            for pred in SentimentPolarity::ALL {
                row.insert(pred.to_string(), 0u64);
            }
            row.insert(MISSING_BUCKET.to_string(), 0u64);
            confusion.insert(gold.to_string(), row);
        }
        Metrics {
            accuracy: 1.0,
            correct: 0,
            n_aspects: 0,
            n_parse_failures: 0,
            confusion,
        }
    }

    fn record(&mut self, gold: SentimentPolarity, predicted: Option<SentimentPolarity>) {
        self.n_aspects += 1;
        let column = predicted
            .map(|p| p.to_string())
            .unwrap_or_else(|| MISSING_BUCKET.to_string());
        *self
            .confusion
            .get_mut(gold.as_str())
            .expect("all gold classes initialized")
            .get_mut(&column)
            .expect("all predicted buckets initialized") += 1;
        if predicted == Some(gold) {
            self.correct += 1;
        }
    }

    fn finalize(&mut self) {
        self.accuracy = if self.n_aspects == 0 {
            1.0
        } else {
            self.correct as f64 / self.n_aspects as f64
        };
    }
}

/// Score predictions against gold. Predictions align 1:1 with gold samples;
/// `None` marks a sample whose response could not be parsed — all of its
/// annotations count as wrong. Predicted aspects absent from gold are
/// ignored; gold aspects absent from the prediction are wrong.
pub fn score(
    gold: &Dataset,
    predictions: &[Option<PredictionSet>],
    config: &EvalConfig,
) -> Result<Metrics, EvalError> {
    if gold.len() != predictions.len() {
        return Err(EvalError::LengthMismatch(predictions.len(), gold.len()));
    }
    let mut metrics = Metrics::empty();
    for (sample, prediction) in gold.samples.iter().zip(predictions) {
        if prediction.is_none() {
            metrics.n_parse_failures += 1;
        }
        for (label, gold_polarity) in sample.aspects() {
            let predicted = prediction
                .as_ref()
                .and_then(|p| p.aspects.get(label))
                .copied();
            metrics.record(*gold_polarity, predicted);
        }
        if config.include_overall {
            if let Some(gold_overall) = sample.overall {
                let predicted = prediction.as_ref().and_then(|p| p.overall);
                metrics.record(gold_overall, predicted);
            }
        }
    }
    metrics.finalize();
    Ok(metrics)
}

/// Log-loss of a predicted distribution against the gold class index.
pub fn cross_entropy(probabilities: &[f64], gold_class: usize) -> Result<f64, EvalError> {
    if probabilities.len() != 3 && probabilities.len() != 5 {
        return Err(EvalError::DomainError(format!(
            "expected 3 or 5 classes, got {}",
            probabilities.len()
        )));
    }
    if probabilities.iter().any(|p| *p < 0.0 || !p.is_finite()) {
        return Err(EvalError::DomainError("negative or non-finite probability".into()));
    }
    let sum: f64 = probabilities.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(EvalError::DomainError(format!("probabilities sum to {sum}")));
    }
    if gold_class >= probabilities.len() {
        return Err(EvalError::DomainError(format!(
            "gold class {gold_class} out of range"
        )));
    }
    Ok(-probabilities[gold_class].ln())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<24} {:>10} {:>10} {:>10} {:>14}\n",
            "dataset", "accuracy", "correct", "aspects", "parse_failures"
        ));
        for row in &self.rows {
            out.push_str(&format!(
                "{:<24} {:>9.2}% {:>10} {:>10} {:>14}\n",
                row.dataset,
                row.metrics.accuracy * 100.0,
                row.metrics.correct,
                row.metrics.n_aspects,
                row.metrics.n_parse_failures
            ));
        }
        out
    }
}

fn parse_with_config(raw: &str, config: &EvalConfig) -> Option<PredictionSet> {
    if config.strict_json {
        parse_response_strict(raw).ok()
    } else {
        parse_response(raw).ok()
    }
}

/// Evaluate one dataset: build a prompt per sample, query, parse, and score.
/// Per-sample failures are recorded, never fatal; fully deterministic when
/// the gateway replays a cassette.
pub fn evaluate_dataset(
    name: &str,
    dataset: &Dataset,
    config: &EvalConfig,
    gateway: &LlmGateway,
) -> Result<ReportRow, EvalError> {
    validate_class_mode(dataset, config)?;
    let template = template_registry()
        .get(&config.prompt_template)
        .ok_or_else(|| EvalError::UnknownTemplate(config.prompt_template.clone()))?;
    // Samples with nothing to predict get no prompt and an empty prediction.
    let mut requests: Vec<Option<ChatRequest>> = Vec::with_capacity(dataset.len());
    for sample in &dataset.samples {
        let has_work =
            !sample.aspects().is_empty() || (config.include_overall && sample.overall.is_some());
        requests.push(has_work.then(|| template.build(sample, config)));
    }
    let live: Vec<ChatRequest> = requests.iter().flatten().cloned().collect();
    let mut responses = gateway.complete_many(&live).into_iter();
    let predictions: Vec<Option<PredictionSet>> = requests
        .iter()
        .map(|request| match request {
            Some(_) => match responses.next().expect("one response per request") {
                Ok(raw) => parse_with_config(&raw, config),
                Err(_) => None,
            },
            None => Some(PredictionSet::default()),
        })
        .collect();
    let metrics = score(dataset, &predictions, config)?;
    Ok(ReportRow {
        dataset: name.to_string(),
        metrics,
    })
}

/// Evaluate several named datasets into one report.
pub fn run_benchmark(
    datasets: &[(String, Dataset)],
    config: &EvalConfig,
    gateway: &LlmGateway,
) -> Result<Report, EvalError> {
    let mut report = Report::default();
    for (name, dataset) in datasets {
        report.rows.push(evaluate_dataset(name, dataset, config, gateway)?);
    }
    Ok(report)
}

/// Accuracy grid: rows are models, columns are languages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixReport {
    pub languages: Vec<String>,
    pub rows: Vec<MatrixRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixRow {
    pub model: String,
    pub accuracies: Vec<f64>,
}

impl MatrixReport {
    pub fn render(&self) -> String {
        let mut out = format!("{:<24}", "model");
        for language in &self.languages {
            out.push_str(&format!(" {:>8}", language.to_uppercase()));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{:<24}", row.model));
            for accuracy in &row.accuracies {
                out.push_str(&format!(" {:>7.1}%", accuracy * 100.0));
            }
            out.push('\n');
        }
        out
    }
}

/// Evaluate each model on each language's dataset.
pub fn multilingual_matrix(
    models: &[(String, &LlmGateway)],
    datasets_by_language: &[(String, Dataset)],
    config: &EvalConfig,
) -> Result<MatrixReport, EvalError> {
    assert!(!datasets_by_language.is_empty(), "language set must be non-empty");
    let languages: Vec<String> = datasets_by_language.iter().map(|(l, _)| l.clone()).collect();
    let mut rows = Vec::with_capacity(models.len());
    for (model, gateway) in models {
        let mut accuracies = Vec::with_capacity(languages.len());
        for (language, dataset) in datasets_by_language {
            let row = evaluate_dataset(&format!("{model}:{language}"), dataset, config, gateway)?;
            accuracies.push(row.metrics.accuracy);
        }
        rows.push(MatrixRow {
            model: model.clone(),
            accuracies,
        });
    }
    Ok(MatrixReport { languages, rows })
}
