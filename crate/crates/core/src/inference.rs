//! Exact log-space inference over a [`Lattice`]: partition function, edge
//! marginals and max-score decoding.

use crate::error::{Error, Result};
use crate::features::{DictAccess, FeatureConfig, Featurizer};
use crate::lattice::{self, Lattice, ModelKind};
use crate::text::{LabelSet, Sentence, WordSpan};

/// `log(exp(a) + exp(b))` without overflow.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// Max-shifted log-sum-exp of a slice; `-inf` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn check_weights(lattice: &Lattice, weights: &[f64]) -> Result<()> {
    if weights.len() < lattice.feature_bound() {
        return Err(Error::DimensionMismatch {
            expected: lattice.feature_bound(),
            actual: weights.len(),
        });
    }
    Ok(())
}

/// Score `w . f(e)` of every edge.
pub fn edge_scores(lattice: &Lattice, weights: &[f64]) -> Result<Vec<f64>> {
    check_weights(lattice, weights)?;
    let block_scores: Vec<f64> = lattice.blocks().iter().map(|b| b.dot(weights)).collect();
    Ok(lattice
        .edges()
        .iter()
        .map(|e| e.blocks().map(|b| block_scores[b]).sum())
        .collect())
}

/// Log inside scores: `alpha[v]` sums over all root-to-`v` paths.
pub fn forward(lattice: &Lattice, scores: &[f64]) -> Vec<f64> {
    let edges = lattice.edges();
    let mut alpha = vec![f64::NEG_INFINITY; lattice.num_nodes()];
    alpha[0] = 0.0;
    for v in 1..lattice.num_nodes() {
        let range = lattice.in_edges(v);
        let mut max = f64::NEG_INFINITY;
        for e in range.clone() {
            max = max.max(alpha[edges[e].from as usize] + scores[e]);
        }
        if max == f64::NEG_INFINITY {
            continue;
        }
        let sum: f64 = range.map(|e| (alpha[edges[e].from as usize] + scores[e] - max).exp()).sum();
        alpha[v] = max + sum.ln();
    }
    alpha
}

/// Log outside scores: `beta[v]` sums over all `v`-to-leaf paths.
pub fn backward(lattice: &Lattice, scores: &[f64]) -> Vec<f64> {
    let edges = lattice.edges();
    let mut beta = vec![f64::NEG_INFINITY; lattice.num_nodes()];
    beta[lattice.leaf()] = 0.0;
    for v in (0..lattice.leaf()).rev() {
        let out = lattice.out_edges(v);
        let mut max = f64::NEG_INFINITY;
        for &e in out {
            max = max.max(scores[e as usize] + beta[edges[e as usize].to as usize]);
        }
        if max == f64::NEG_INFINITY {
            continue;
        }
        let sum: f64 = out
            .iter()
            .map(|&e| (scores[e as usize] + beta[edges[e as usize].to as usize] - max).exp())
            .sum();
        beta[v] = max + sum.ln();
    }
    beta
}

/// `log Z`: log of the summed exponentiated scores of all root-to-leaf paths.
pub fn log_partition(lattice: &Lattice, weights: &[f64]) -> Result<f64> {
    let scores = edge_scores(lattice, weights)?;
    Ok(forward(lattice, &scores)[lattice.leaf()])
}

/// Posterior probability of each edge together with `log Z`.
#[derive(Debug, Clone)]
pub struct Marginals {
    pub log_z: f64,
    pub edges: Vec<f64>,
}

pub fn edge_marginals(lattice: &Lattice, weights: &[f64]) -> Result<Marginals> {
    let scores = edge_scores(lattice, weights)?;
    Ok(marginals_from_scores(lattice, &scores))
}

pub(crate) fn marginals_from_scores(lattice: &Lattice, scores: &[f64]) -> Marginals {
    let alpha = forward(lattice, scores);
    let beta = backward(lattice, scores);
    let log_z = alpha[lattice.leaf()];
    let edges = lattice
        .edges()
        .iter()
        .zip(scores)
        .map(|(e, s)| (alpha[e.from as usize] + s + beta[e.to as usize] - log_z).exp())
        .collect();
    Marginals { log_z, edges }
}

/// Sum of edge scores along a path.
pub fn path_score(lattice: &Lattice, weights: &[f64], path: &[u32]) -> Result<f64> {
    let scores = edge_scores(lattice, weights)?;
    Ok(path.iter().map(|&e| scores[e as usize]).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    /// Edge ids from root to leaf.
    pub path: Vec<u32>,
    pub score: f64,
}

/// Highest-scoring root-to-leaf path. Among equal scores the predecessor
/// that comes first in topological order wins.
pub fn viterbi(lattice: &Lattice, weights: &[f64]) -> Result<Decoded> {
    let scores = edge_scores(lattice, weights)?;
    Ok(viterbi_from_scores(lattice, &scores))
}

pub(crate) fn viterbi_from_scores(lattice: &Lattice, scores: &[f64]) -> Decoded {
    let edges = lattice.edges();
    let mut best = vec![f64::NEG_INFINITY; lattice.num_nodes()];
    let mut back = vec![u32::MAX; lattice.num_nodes()];
    best[0] = 0.0;
    for v in 1..lattice.num_nodes() {
        // in-edges are ordered by source node, so a strict comparison keeps
        // the earliest predecessor on ties
        for e in lattice.in_edges(v) {
            let cand = best[edges[e].from as usize] + scores[e];
            if cand > best[v] {
                best[v] = cand;
                back[v] = e as u32;
            }
        }
    }
    let mut path = Vec::new();
    let mut v = lattice.leaf();
    while v != 0 {
        let e = back[v];
        path.push(e);
        v = edges[e as usize].from as usize;
    }
    path.reverse();
    Decoded {
        path,
        score: best[lattice.leaf()],
    }
}

/// Decodes and maps the best path to chunk spans.
pub fn decode_spans(lattice: &Lattice, weights: &[f64], labels: &LabelSet) -> Result<(Vec<WordSpan>, f64)> {
    let d = viterbi(lattice, weights)?;
    Ok((lattice.path_to_spans(&d.path, labels), d.score))
}

/// Edge count of the lattice for an `n`-token sentence with a segment
/// alphabet of `num_labels` (O included) and segment limit `max_len`.
pub fn complexity_probe(kind: ModelKind, n: usize, max_len: usize, num_labels: usize) -> Result<usize> {
    if num_labels < 2 {
        return Err(Error::Config("need at least two segment labels".into()));
    }
    let sentence = Sentence::from_words(&vec!["w"; n]);
    let labels = LabelSet::synthetic(num_labels);
    let config = FeatureConfig {
        max_segment_len: max_len,
        ..FeatureConfig::default()
    };
    config.validate()?;
    let mut featurizer = Featurizer::new(&sentence, &labels, &config, None, DictAccess::Discard);
    Ok(lattice::build(kind, &mut featurizer)?.num_edges())
}
