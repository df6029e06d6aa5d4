//! Span scoring, the gold upper bound, a paired bootstrap and the
//! training-time benchmark.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureDictionary};
use crate::lattice::ModelKind;
use crate::model::Model;
use crate::text::{check_non_overlapping, word_spans_to_char_spans, LabelSet, Span};
use crate::training::{labels_for, Objective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Char,
    Word,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Char => "char",
            Level::Word => "word",
        })
    }
}

/// Exact-match span precision, recall and F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub level: Level,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl EvalReport {
    pub fn from_counts(level: Level, tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        EvalReport {
            level,
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }

    pub fn empty(level: Level) -> Self {
        Self::from_counts(level, 0, 0, 0)
    }

    /// Pools the counts of two reports at the same level.
    pub fn merge(&self, other: &EvalReport) -> EvalReport {
        Self::from_counts(self.level, self.tp + other.tp, self.fp + other.fp, self.fn_ + other.fn_)
    }
}

/// Scores one message. Spans must not overlap within either list.
pub fn score_spans<S: Span>(gold: &[S], predicted: &[S], level: Level) -> Result<EvalReport> {
    check_non_overlapping(gold)?;
    check_non_overlapping(predicted)?;
    let (tp, _, _) = match_counts(gold, predicted);
    Ok(EvalReport::from_counts(level, tp, predicted.len() - tp, gold.len() - tp))
}

fn match_counts<S: Span>(gold: &[S], predicted: &[S]) -> (usize, usize, usize) {
    let gold: std::collections::HashSet<&S> = gold.iter().collect();
    let tp = predicted.iter().filter(|s| gold.contains(s)).count();
    (tp, predicted.len() - tp, gold.len() - tp)
}

/// Micro-averaged score over aligned per-message span lists.
pub fn score_corpus<S: Span>(gold: &[Vec<S>], predicted: &[Vec<S>], level: Level) -> Result<EvalReport> {
    if gold.len() != predicted.len() {
        return Err(Error::DimensionMismatch {
            expected: gold.len(),
            actual: predicted.len(),
        });
    }
    gold.iter()
        .zip(predicted)
        .try_fold(EvalReport::empty(level), |acc, (g, p)| Ok(acc.merge(&score_spans(g, p, level)?)))
}

/// Character-level and word-level scores of a model on a dataset. The
/// character level compares against the original character annotations.
pub fn evaluate_model(model: &Model, dataset: &Dataset) -> Result<(EvalReport, EvalReport)> {
    let mut char_level = EvalReport::empty(Level::Char);
    let mut word_level = EvalReport::empty(Level::Word);
    for inst in &dataset.instances {
        let words = model.predict(&inst.sentence)?;
        let chars = word_spans_to_char_spans(&inst.sentence, &words);
        char_level = char_level.merge(&score_spans(&inst.gold_chars, &chars, Level::Char)?);
        word_level = word_level.merge(&score_spans(&inst.gold_words, &words, Level::Word)?);
    }
    log::debug!("char F1 {:.4}, word F1 {:.4}", char_level.f1, word_level.f1);
    Ok((char_level, word_level))
}

/// Scores of a perfect word-level system: gold spans projected to tokens
/// and back, against the original annotation.
pub fn gold_upper_bound(dataset: &Dataset) -> Result<(EvalReport, EvalReport)> {
    let mut char_level = EvalReport::empty(Level::Char);
    let mut word_level = EvalReport::empty(Level::Word);
    for inst in &dataset.instances {
        let chars = word_spans_to_char_spans(&inst.sentence, &inst.gold_words);
        char_level = char_level.merge(&score_spans(&inst.gold_chars, &chars, Level::Char)?);
        word_level = word_level.merge(&score_spans(&inst.gold_words, &inst.gold_words, Level::Word)?);
    }
    Ok((char_level, word_level))
}

/// Paired bootstrap summary of `F1(A) - F1(B)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapSummary {
    pub observed: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub confidence: f64,
    pub resamples: usize,
    /// The interval excludes zero.
    pub significant: bool,
}

/// Resamples messages with replacement and reports the percentile interval
/// of the F1 difference between systems A and B.
pub fn bootstrap_interval<S: Span>(
    gold: &[Vec<S>],
    predicted_a: &[Vec<S>],
    predicted_b: &[Vec<S>],
    resamples: usize,
    confidence: f64,
    seed: u64,
) -> Result<BootstrapSummary> {
    for other in [predicted_a.len(), predicted_b.len()] {
        if other != gold.len() {
            return Err(Error::DimensionMismatch {
                expected: gold.len(),
                actual: other,
            });
        }
    }
    if resamples == 0 || !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Config("need resamples > 0 and confidence in (0, 1)".into()));
    }
    let per_message = |pred: &[Vec<S>]| -> Result<Vec<(usize, usize, usize)>> {
        gold.iter()
            .zip(pred)
            .map(|(g, p)| {
                let r = score_spans(g, p, Level::Char)?;
                Ok((r.tp, r.fp, r.fn_))
            })
            .collect()
    };
    let a = per_message(predicted_a)?;
    let b = per_message(predicted_b)?;
    let diff = |idx: &mut dyn Iterator<Item = usize>| {
        let (mut ca, mut cb) = ((0, 0, 0), (0, 0, 0));
        for i in idx {
            ca = (ca.0 + a[i].0, ca.1 + a[i].1, ca.2 + a[i].2);
            cb = (cb.0 + b[i].0, cb.1 + b[i].1, cb.2 + b[i].2);
        }
        EvalReport::from_counts(Level::Char, ca.0, ca.1, ca.2).f1 - EvalReport::from_counts(Level::Char, cb.0, cb.1, cb.2).f1
    };
    let n = gold.len();
    let observed = diff(&mut (0..n));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples: Vec<f64> = (0..resamples)
        .map(|_| {
            if n == 0 {
                0.0
            } else {
                diff(&mut (0..n).map(|_| rng.gen_range(0..n)))
            }
        })
        .collect();
    samples.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence) / 2.0;
    let pick = |q: f64| samples[((q * resamples as f64).floor() as usize).min(resamples - 1)];
    let lower = pick(tail);
    let upper = pick(1.0 - tail);
    Ok(BootstrapSummary {
        observed,
        mean: samples.iter().sum::<f64>() / resamples as f64,
        lower,
        upper,
        confidence,
        resamples,
        significant: lower > 0.0 || upper < 0.0,
    })
}

/// Rows in the layout `System | char P R F | word P R F`, scores in percent.
pub fn format_table(rows: &[(String, EvalReport, EvalReport)]) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(6);
    let mut out = format!(
        "{:<width$}  {:>6} {:>6} {:>6}  {:>6} {:>6} {:>6}\n",
        "System", "cP", "cR", "cF", "wP", "wR", "wF"
    );
    for (name, c, w) in rows {
        out.push_str(&format!(
            "{:<width$}  {:>6.2} {:>6.2} {:>6.2}  {:>6.2} {:>6.2} {:>6.2}\n",
            name,
            100.0 * c.precision,
            100.0 * c.recall,
            100.0 * c.f1,
            100.0 * w.precision,
            100.0 * w.recall,
            100.0 * w.f1
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelTiming {
    pub model: ModelKind,
    pub edges: usize,
    pub features: usize,
    pub mean: f64,
    pub stddev: f64,
    pub median: f64,
    pub seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub models: Vec<ModelTiming>,
    /// Semi mean over weak mean, when both were timed.
    pub speedup: Option<f64>,
}

impl BenchReport {
    pub fn timing(&self, kind: ModelKind) -> Option<&ModelTiming> {
        self.models.iter().find(|m| m.model == kind)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<8} {:>10} {:>12} {:>12} {:>12}\n", "model", "edges", "mean_s", "stddev_s", "median_s");
        for m in &self.models {
            out.push_str(&format!(
                "{:<8} {:>10} {:>12.6} {:>12.6} {:>12.6}\n",
                m.model.as_str(),
                m.edges,
                m.mean,
                m.stddev,
                m.median
            ));
        }
        if let Some(s) = self.speedup {
            out.push_str(&format!("semi/weak {s:.4}\n"));
        }
        out
    }
}

fn summarize(seconds: &[f64]) -> (f64, f64, f64) {
    let n = seconds.len() as f64;
    let mean = seconds.iter().sum::<f64>() / n;
    let var = seconds.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let mut sorted = seconds.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    };
    (mean, var.sqrt(), median)
}

/// Times one single-threaded objective and gradient evaluation per
/// iteration for each model on the same data and features. Lattices are
/// built once up front; `warmup` evaluations are discarded.
pub fn benchmark_training(
    dataset: &Dataset,
    models: &[ModelKind],
    features: &FeatureConfig,
    iterations: usize,
    warmup: usize,
) -> Result<BenchReport> {
    if iterations == 0 {
        return Err(Error::Config("benchmark needs at least one iteration".into()));
    }
    let labels = labels_for(dataset)?;
    let timings = models
        .iter()
        .map(|&kind| time_model(dataset, kind, &labels, features, iterations, warmup))
        .collect::<Result<Vec<_>>>()?;
    let mean_of = |k: ModelKind| timings.iter().find(|t| t.model == k).map(|t| t.mean);
    let speedup = match (mean_of(ModelKind::Semi), mean_of(ModelKind::Weak)) {
        (Some(s), Some(w)) => Some(s / w),
        _ => None,
    };
    Ok(BenchReport {
        models: timings,
        speedup,
    })
}

fn time_model(
    dataset: &Dataset,
    kind: ModelKind,
    labels: &LabelSet,
    features: &FeatureConfig,
    iterations: usize,
    warmup: usize,
) -> Result<ModelTiming> {
    let mut dict = FeatureDictionary::new();
    let objective = Objective::compile(dataset, kind, labels, features, None, &mut dict, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let weights: Vec<f64> = (0..objective.dim()).map(|_| rng.gen_range(-0.1..0.1)).collect();
    let mut seconds = Vec::with_capacity(iterations);
    for i in 0..warmup + iterations {
        let started = Instant::now();
        std::hint::black_box(objective.evaluate(std::hint::black_box(&weights))?);
        if i >= warmup {
            seconds.push(started.elapsed().as_secs_f64().max(f64::MIN_POSITIVE));
        }
    }
    let (mean, stddev, median) = summarize(&seconds);
    log::info!("{kind}: {:.6}s per iteration ({} edges)", mean, objective.total_edges());
    Ok(ModelTiming {
        model: kind,
        edges: objective.total_edges(),
        features: objective.dim(),
        mean,
        stddev,
        median,
        seconds,
    })
}

/// One line of the label-count sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub model: ModelKind,
    pub num_labels: usize,
    pub n: usize,
    pub max_len: usize,
    pub edges: usize,
    pub sec_per_iter: f64,
}

pub const SWEEP_CSV_HEADER: &str = "model,num_labels,n,L,edges,sec_per_iter";

impl SweepRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.9}",
            self.model.as_str(),
            self.num_labels,
            self.n,
            self.max_len,
            self.edges,
            self.sec_per_iter
        )
    }
}

/// Times every model on synthetic corpora of fixed sentence length `n` for
/// each segment alphabet size in `num_labels` (O included).
pub fn benchmark_sweep(
    models: &[ModelKind],
    num_labels: &[usize],
    sentences: usize,
    n: usize,
    max_len: usize,
    iterations: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let features = FeatureConfig {
        max_segment_len: max_len,
        ..FeatureConfig::default()
    };
    features.validate()?;
    let mut rows = Vec::new();
    for &count in num_labels {
        if count < 2 {
            return Err(Error::Config("sweep label counts must be at least 2".into()));
        }
        let dataset = crate::synth::timing_corpus(sentences, n, count - 1, max_len, seed);
        let report = benchmark_training(&dataset, models, &features, iterations, 1)?;
        for t in report.models {
            rows.push(SweepRow {
                model: t.model,
                num_labels: count,
                n,
                max_len,
                edges: t.edges / sentences.max(1),
                sec_per_iter: t.mean,
            });
        }
    }
    Ok(rows)
}
