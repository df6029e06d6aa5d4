//! Brute-force reference implementations. Labelings are enumerated
//! directly from their definitions and scored from feature strings, without
//! touching lattices or dynamic programming.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use segcrf::features::{BrownClusterMap, DictAccess, Endpoint, FeatureConfig, FeatureDictionary, Featurizer};
use segcrf::lattice::{self, Lattice, ModelKind};
use segcrf::text::{LabelSet, Sentence, WordSpan};

pub const VOCAB: [&str; 8] = ["Dr", "teh", "says", "ok", "2day", "lol", "she's", "u"];

/// A labeling in segment form: `(first, last, label)` with label 0 = O.
pub type Segmentation = Vec<(usize, usize, usize)>;

/// Every BIO tag sequence of length `n` over `num_chunk` chunk labels.
/// Tag `0` is O, `2c+1` is B and `2c+2` is I of chunk `c`.
pub fn enumerate_bio(n: usize, num_chunk: usize) -> Vec<Vec<usize>> {
    let num_tags = 2 * num_chunk + 1;
    let mut out = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::new();
        for seq in &out {
            for t in 0..num_tags {
                let inside = t != 0 && t % 2 == 0;
                if inside {
                    let chunk = (t - 2) / 2;
                    match seq.last() {
                        Some(&p) if p != 0 && (p - 1) / 2 == chunk => {}
                        _ => continue,
                    }
                }
                let mut s: Vec<usize> = seq.clone();
                s.push(t);
                next.push(s);
            }
        }
        out = next;
    }
    out
}

/// Every segmentation of `n` tokens: O segments have length one, chunk
/// segments length `1..=max_len`.
pub fn enumerate_segmentations(n: usize, num_labels: usize, max_len: usize) -> Vec<Segmentation> {
    fn go(pos: usize, n: usize, num_labels: usize, max_len: usize, cur: &mut Segmentation, out: &mut Vec<Segmentation>) {
        if pos == n {
            out.push(cur.clone());
            return;
        }
        for y in 0..num_labels {
            let longest = if y == 0 { 1 } else { max_len };
            for k in 1..=longest.min(n - pos) {
                cur.push((pos, pos + k - 1, y));
                go(pos + k, n, num_labels, max_len, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(0, n, num_labels, max_len, &mut Vec::new(), &mut out);
    out
}

pub fn bio_to_segmentation(tags: &[usize]) -> Segmentation {
    let mut segs: Segmentation = Vec::new();
    for (i, &t) in tags.iter().enumerate() {
        if t == 0 {
            segs.push((i, i, 0));
        } else if t % 2 == 1 {
            segs.push((i, i, t.div_ceil(2)));
        } else {
            segs.last_mut().expect("I tag follows a chunk").1 = i;
        }
    }
    segs
}

pub fn segmentation_to_spans(segs: &Segmentation, labels: &LabelSet) -> Vec<WordSpan> {
    segs.iter()
        .filter(|s| s.2 != 0)
        .map(|&(a, b, y)| WordSpan::new(a, b, labels.segment_label_name(y)))
        .collect()
}

fn weigh(names: Vec<String>, dict: &FeatureDictionary, w: &[f64]) -> f64 {
    let unique: BTreeSet<String> = names.into_iter().collect();
    unique.iter().filter_map(|s| dict.get(s)).map(|i| w[i as usize]).sum()
}

fn weigh_counts(names: Vec<String>, dict: &FeatureDictionary, counts: &mut [f64], scale: f64) {
    let unique: BTreeSet<String> = names.into_iter().collect();
    for i in unique.iter().filter_map(|s| dict.get(s)) {
        counts[i as usize] += scale;
    }
}

/// Feature-name groups of one labeling, each group an edge-level set.
pub fn linear_groups(f: &Featurizer<'_>, tags: &[usize]) -> Vec<Vec<String>> {
    let n = tags.len();
    let mut groups = Vec::with_capacity(n + 1);
    let mut prev = Endpoint::Start;
    for (i, &t) in tags.iter().enumerate() {
        groups.push(f.linear_strings(i, prev, Endpoint::Label(t)));
        prev = Endpoint::Label(t);
    }
    groups.push(f.linear_strings(n, prev, Endpoint::Stop));
    groups
}

pub fn segment_groups(f: &Featurizer<'_>, segs: &Segmentation) -> Vec<Vec<String>> {
    let mut groups = Vec::with_capacity(2 * segs.len() + 1);
    let mut prev = Endpoint::Start;
    for &(a, b, y) in segs {
        groups.push(f.segment_strings(a, b, y).expect("segment within limits"));
        groups.push(f.segment_transition_strings(prev, Endpoint::Label(y)));
        prev = Endpoint::Label(y);
    }
    groups.push(f.segment_transition_strings(prev, Endpoint::Stop));
    groups
}

/// A random instance with its lattice and a dictionary grown from it.
pub struct Case {
    pub kind: ModelKind,
    pub sentence: Sentence,
    pub labels: LabelSet,
    pub config: FeatureConfig,
    pub brown: Option<BrownClusterMap>,
    pub dict: FeatureDictionary,
    pub lattice: Lattice,
}

impl Case {
    pub fn random(kind: ModelKind, rng: &mut impl Rng, max_n: usize, max_labels: usize, max_len: usize) -> Case {
        let n = rng.gen_range(1..=max_n);
        let words: Vec<&str> = (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect();
        let sentence = Sentence::from_words(&words);
        let labels = LabelSet::synthetic(rng.gen_range(2..=max_labels));
        let mut config = FeatureConfig {
            use_affix: rng.gen_bool(0.5),
            use_shape: rng.gen_bool(0.5),
            use_brown: rng.gen_bool(0.3),
            max_segment_len: rng.gen_range(1..=max_len),
            ..FeatureConfig::default()
        };
        config.affix_max_len = rng.gen_range(1..=3);
        let brown = config.use_brown.then(|| {
            let mut m = BrownClusterMap::new();
            m.insert("Dr", "0110");
            m.insert("teh", "0111");
            m.insert("says", "10");
            m
        });
        Case::new(kind, sentence, labels, config, brown)
    }

    pub fn new(
        kind: ModelKind,
        sentence: Sentence,
        labels: LabelSet,
        config: FeatureConfig,
        brown: Option<BrownClusterMap>,
    ) -> Case {
        let mut dict = FeatureDictionary::new();
        let lattice = {
            let mut f = Featurizer::new(&sentence, &labels, &config, brown.as_ref(), DictAccess::Grow(&mut dict));
            lattice::build(kind, &mut f).expect("non-empty sentence")
        };
        dict.freeze();
        Case {
            kind,
            sentence,
            labels,
            config,
            brown,
            dict,
            lattice,
        }
    }

    pub fn random_weights(&self, rng: &mut impl Rng, scale: f64) -> Vec<f64> {
        (0..self.dict.len()).map(|_| rng.gen_range(-scale..=scale)).collect()
    }

    fn featurizer(&self) -> Featurizer<'_> {
        Featurizer::new(
            &self.sentence,
            &self.labels,
            &self.config,
            self.brown.as_ref(),
            DictAccess::Frozen(&self.dict),
        )
    }

    /// Every labeling with its feature groups.
    pub fn labelings(&self) -> Vec<(Segmentation, Vec<Vec<String>>)> {
        let f = self.featurizer();
        let n = self.sentence.len();
        let num_chunk = self.labels.chunk_labels().len();
        match self.kind {
            ModelKind::Linear => enumerate_bio(n, num_chunk)
                .into_iter()
                .map(|tags| (bio_to_segmentation(&tags), linear_groups(&f, &tags)))
                .collect(),
            ModelKind::Semi | ModelKind::Weak => {
                enumerate_segmentations(n, num_chunk + 1, self.config.max_segment_len)
                    .into_iter()
                    .map(|s| {
                        let g = segment_groups(&f, &s);
                        (s, g)
                    })
                    .collect()
            }
        }
    }

    pub fn scores(&self, w: &[f64]) -> Vec<(Segmentation, f64)> {
        self.labelings()
            .into_iter()
            .map(|(s, groups)| {
                let score = groups.into_iter().map(|g| weigh(g, &self.dict, w)).sum();
                (s, score)
            })
            .collect()
    }

    pub fn log_z(&self, w: &[f64]) -> f64 {
        log_sum_exp(&self.scores(w).iter().map(|s| s.1).collect::<Vec<_>>())
    }

    /// Best score and every labeling within `tol` of it.
    pub fn argmax(&self, w: &[f64], tol: f64) -> (f64, Vec<Segmentation>) {
        let scores = self.scores(w);
        let best = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        let ties = scores.into_iter().filter(|s| s.1 >= best - tol).map(|s| s.0).collect();
        (best, ties)
    }

    /// Gradient of `log p(gold) - lambda |w|^2` by enumeration.
    pub fn gradient(&self, w: &[f64], gold: &Segmentation, lambda: f64) -> (f64, Vec<f64>) {
        let labelings = self.labelings();
        let scores: Vec<f64> = labelings
            .iter()
            .map(|(_, groups)| groups.iter().map(|g| weigh(g.clone(), &self.dict, w)).sum())
            .collect();
        let log_z = log_sum_exp(&scores);
        let mut grad = vec![0.0; w.len()];
        let mut value = f64::NAN;
        for ((seg, groups), score) in labelings.into_iter().zip(&scores) {
            let p = (score - log_z).exp();
            let is_gold = &seg == gold;
            if is_gold {
                value = score - log_z;
            }
            for g in groups {
                weigh_counts(g.clone(), &self.dict, &mut grad, -p);
                if is_gold {
                    weigh_counts(g, &self.dict, &mut grad, 1.0);
                }
            }
        }
        value -= lambda * w.iter().map(|x| x * x).sum::<f64>();
        for (g, x) in grad.iter_mut().zip(w) {
            *g -= 2.0 * lambda * x;
        }
        (value, grad)
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn random_segmentation(rng: &mut impl Rng, n: usize, num_labels: usize, max_len: usize) -> Segmentation {
    let mut all = enumerate_segmentations(n, num_labels, max_len);
    all.swap_remove(rng.gen_range(0..all.len()))
}
