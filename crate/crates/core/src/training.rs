//! Regularized conditional log-likelihood training.
//!
//! The objective is maximized:
//!
//! ```text
//! L(w) = sum over instances [ score(gold path) - log Z(x) ] - lambda * |w|^2
//! ```
//!
//! [`Objective::evaluate`] returns `L(w)` and its gradient; the optimizer
//! minimizes `-L(w)`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, EvalReport};
use crate::features::{BrownClusterMap, DictAccess, FeatureConfig, FeatureDictionary, FeatureVector, Featurizer};
use crate::inference::{edge_scores, marginals_from_scores};
use crate::lattice::{self, Lattice, ModelKind};
use crate::model::{Model, TrainingMeta};
use crate::optim::{minimize, IterationRecord, LbfgsConfig};
use crate::text::{LabelSet, WordSpan};

/// Regularization strengths searched by [`tune_lambda`].
pub const LAMBDA_GRID: [f64; 5] = [0.125, 0.25, 0.5, 1.0, 2.0];

/// Instances per partial sum. Fixed so that results do not depend on the
/// number of threads.
const CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model_kind: ModelKind,
    pub lambda: f64,
    pub features: FeatureConfig,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub history: usize,
    pub threads: usize,
}

impl TrainConfig {
    pub fn new(model_kind: ModelKind) -> Self {
        TrainConfig {
            model_kind,
            lambda: 1.0,
            features: FeatureConfig::default(),
            max_iterations: 500,
            tolerance: 1e-6,
            history: 10,
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.history == 0 {
            return Err(Error::Config("L-BFGS history must be at least 1".into()));
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(Error::Config("tolerance must be non-negative".into()));
        }
        Ok(())
    }

    fn lbfgs(&self) -> LbfgsConfig {
        LbfgsConfig {
            history: self.history,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            ..LbfgsConfig::default()
        }
    }
}

/// Gold spans usable as a training target: segment models cannot represent
/// chunks longer than the segment limit, so those tokens become O.
pub fn training_gold(kind: ModelKind, spans: &[WordSpan], max_segment_len: usize) -> Vec<WordSpan> {
    if kind.is_segmental() {
        spans.iter().filter(|s| s.len() <= max_segment_len).cloned().collect()
    } else {
        spans.to_vec()
    }
}

/// A training instance reduced to its lattice and gold feature counts.
#[derive(Debug, Clone)]
pub struct CompiledInstance {
    pub lattice: Lattice,
    pub gold_counts: FeatureVector,
}

/// The training objective over a compiled dataset.
pub struct Objective {
    instances: Vec<CompiledInstance>,
    lambda: f64,
    dim: usize,
    skipped: usize,
    pool: Option<rayon::ThreadPool>,
}

impl Objective {
    /// Builds every lattice of `dataset`, growing `dict` unless it is frozen.
    /// Instances whose gold structure has no path are skipped with a warning.
    pub fn compile(
        dataset: &Dataset,
        kind: ModelKind,
        labels: &LabelSet,
        features: &FeatureConfig,
        brown: Option<&BrownClusterMap>,
        dict: &mut FeatureDictionary,
        lambda: f64,
    ) -> Result<Self> {
        let mut instances = Vec::with_capacity(dataset.len());
        let mut skipped = 0;
        for inst in &dataset.instances {
            if inst.sentence.is_empty() {
                skipped += 1;
                continue;
            }
            let mut f = Featurizer::new(&inst.sentence, labels, features, brown, DictAccess::Grow(dict));
            let lattice = lattice::build(kind, &mut f)?;
            let gold = training_gold(kind, &inst.gold_words, features.max_segment_len);
            let Some(path) = lattice.gold_path(&gold, labels) else {
                log::warn!("skipping instance {}: gold structure not representable", inst.id);
                skipped += 1;
                continue;
            };
            let gold_counts = FeatureVector::concat(
                path.iter()
                    .flat_map(|&e| lattice.edges()[e as usize].blocks())
                    .map(|b| &lattice.blocks()[b]),
            );
            instances.push(CompiledInstance { lattice, gold_counts });
        }
        if skipped > 0 {
            log::warn!("{skipped} of {} instances skipped", dataset.len());
        }
        Ok(Objective {
            instances,
            lambda,
            dim: dict.len(),
            skipped,
            pool: None,
        })
    }

    /// Spreads instance evaluation over `threads` workers. Results are
    /// identical for any thread count.
    pub fn with_threads(mut self, threads: usize) -> Result<Self> {
        self.pool = if threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn instances(&self) -> &[CompiledInstance] {
        &self.instances
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn total_edges(&self) -> usize {
        self.instances.iter().map(|i| i.lattice.num_edges()).sum()
    }

    fn chunk_contribution(&self, chunk: &[CompiledInstance], weights: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.dim];
        let mut loglik = 0.0;
        for inst in chunk {
            let lattice = &inst.lattice;
            let scores = edge_scores(lattice, weights)?;
            let marginals = marginals_from_scores(lattice, &scores);
            loglik += inst.gold_counts.dot(weights) - marginals.log_z;
            inst.gold_counts.add_scaled_to(&mut grad, 1.0);
            let mut block_mass = vec![0.0; lattice.blocks().len()];
            for (edge, &p) in lattice.edges().iter().zip(&marginals.edges) {
                for b in edge.blocks() {
                    block_mass[b] += p;
                }
            }
            for (block, &mass) in lattice.blocks().iter().zip(&block_mass) {
                if mass != 0.0 {
                    block.add_scaled_to(&mut grad, -mass);
                }
            }
        }
        Ok((loglik, grad))
    }

    /// Objective value and gradient (both for maximization).
    pub fn evaluate(&self, weights: &[f64]) -> Result<(f64, Vec<f64>)> {
        if weights.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: weights.len(),
            });
        }
        let chunks: Vec<&[CompiledInstance]> = self.instances.chunks(CHUNK).collect();
        let partials: Vec<Result<(f64, Vec<f64>)>> = match &self.pool {
            Some(pool) => pool.install(|| {
                chunks
                    .par_iter()
                    .map(|c| self.chunk_contribution(c, weights))
                    .collect()
            }),
            None => chunks.iter().map(|c| self.chunk_contribution(c, weights)).collect(),
        };
        let mut value = 0.0;
        let mut grad = vec![0.0; self.dim];
        for partial in partials {
            let (v, g) = partial?;
            value += v;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        let sq: f64 = weights.iter().map(|w| w * w).sum();
        value -= self.lambda * sq;
        for (g, w) in grad.iter_mut().zip(weights) {
            *g -= 2.0 * self.lambda * w;
        }
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("objective evaluated to {value}")));
        }
        Ok((value, grad))
    }
}

/// Objective and gradient of `weights` over `dataset`, with features
/// indexed by an existing dictionary.
pub fn objective_and_gradient(
    dataset: &Dataset,
    weights: &[f64],
    config: &TrainConfig,
    labels: &LabelSet,
    dict: &FeatureDictionary,
    brown: Option<&BrownClusterMap>,
) -> Result<(f64, Vec<f64>)> {
    let mut frozen = dict.clone();
    frozen.freeze();
    Objective::compile(dataset, config.model_kind, labels, &config.features, brown, &mut frozen, config.lambda)?
        .evaluate(weights)
}

/// Label set of a training split; `NP` when the split carries no spans.
pub fn labels_for(dataset: &Dataset) -> Result<LabelSet> {
    let labels = dataset.chunk_labels();
    if labels.is_empty() {
        Ok(LabelSet::noun_phrase())
    } else {
        LabelSet::new(labels)
    }
}

pub fn train(dataset: &Dataset, config: &TrainConfig, brown: Option<&BrownClusterMap>) -> Result<Model> {
    train_with_log(dataset, config, brown, |_| {})
}

/// Trains from zero weights with L-BFGS, calling `on_iteration` after every
/// accepted step.
pub fn train_with_log(
    dataset: &Dataset,
    config: &TrainConfig,
    brown: Option<&BrownClusterMap>,
    on_iteration: impl FnMut(&IterationRecord),
) -> Result<Model> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    if config.features.use_brown && brown.is_none() {
        return Err(Error::Config("Brown cluster features enabled but no cluster map given".into()));
    }
    let labels = labels_for(dataset)?;
    let mut dict = FeatureDictionary::new();
    let objective = Objective::compile(
        dataset,
        config.model_kind,
        &labels,
        &config.features,
        brown,
        &mut dict,
        config.lambda,
    )?
    .with_threads(config.threads)?;
    dict.freeze();
    log::info!(
        "{} model: {} instances, {} features, {} edges",
        config.model_kind,
        objective.instances().len(),
        objective.dim(),
        objective.total_edges()
    );

    let outcome = minimize(
        |w| objective.evaluate(w).map(|(v, g)| (-v, g.into_iter().map(|x| -x).collect())),
        vec![0.0; objective.dim()],
        &config.lbfgs(),
        on_iteration,
    )?;

    Ok(Model {
        kind: config.model_kind,
        labels,
        features: config.features.clone(),
        dict,
        weights: outcome.x,
        brown: if config.features.use_brown { brown.cloned() } else { None },
        meta: TrainingMeta {
            lambda: config.lambda,
            iterations: outcome.iterations.len(),
            final_objective: -outcome.value,
            skipped: objective.skipped(),
            iteration_seconds: outcome.iterations.iter().map(|r| r.seconds).collect(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaReport {
    pub lambda: f64,
    pub char_level: EvalReport,
    pub word_level: EvalReport,
}

#[derive(Debug, Clone)]
pub struct Tuning {
    pub best_lambda: f64,
    pub reports: Vec<LambdaReport>,
    pub model: Model,
}

/// Trains one model per grid value and keeps the one with the best
/// character-level dev F1; ties go to the larger lambda.
pub fn tune_lambda(
    train_split: &Dataset,
    dev_split: &Dataset,
    config: &TrainConfig,
    grid: &[f64],
    brown: Option<&BrownClusterMap>,
) -> Result<Tuning> {
    if train_split.is_empty() || dev_split.is_empty() {
        return Err(Error::Config("lambda tuning needs non-empty train and dev splits".into()));
    }
    if grid.is_empty() {
        return Err(Error::Config("empty lambda grid".into()));
    }
    let mut best: Option<(f64, f64, Model)> = None;
    let mut reports = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let cfg = TrainConfig {
            lambda,
            ..config.clone()
        };
        let started = Instant::now();
        let model = train(train_split, &cfg, brown)?;
        let (char_level, word_level) = evaluate_model(&model, dev_split)?;
        log::info!(
            "lambda {lambda}: dev char F1 {:.4}, word F1 {:.4} ({:.1}s)",
            char_level.f1,
            word_level.f1,
            started.elapsed().as_secs_f64()
        );
        let f1 = char_level.f1;
        reports.push(LambdaReport {
            lambda,
            char_level,
            word_level,
        });
        let better = match &best {
            None => true,
            Some((best_f1, best_lambda, _)) => f1 > *best_f1 || (f1 == *best_f1 && lambda > *best_lambda),
        };
        if better {
            best = Some((f1, lambda, model));
        }
    }
    let (_, best_lambda, model) = best.expect("grid is non-empty");
    Ok(Tuning {
        best_lambda,
        reports,
        model,
    })
}
