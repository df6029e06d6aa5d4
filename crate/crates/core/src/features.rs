//! Feature templates for the three models and the feature dictionary.
//!
//! Every feature string is conjoined with the tag or segment label of the
//! edge it lives on (`...|B-NP`, `...|NP`). Word-valued templates are
//! optionally augmented with affixes (`+a`), Brown clusters (`+b`) and word
//! shapes (`+s`).

use std::collections::HashMap;
use std::fs;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{LabelSet, Sentence};

pub const BOS: &str = "<BOS>";
pub const EOS: &str = "<EOS>";
pub const START: &str = "<START>";
pub const STOP: &str = "<STOP>";
pub const UNKNOWN_CLUSTER: &str = "<UNK>";

/// Prefix shared by every segment-transition feature string.
pub const SEGMENT_TRANSITION_PREFIX: &str = "TR=";
/// Prefix shared by every tag-transition feature string.
pub const TAG_TRANSITION_PREFIX: &str = "T=";

/// Sparse feature vector. Indices are sorted and unique; an empty `values`
/// means every feature has value 1.0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureVector {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn from_indicators(mut indices: Vec<u32>) -> Self {
        indices.sort_unstable();
        let before = indices.len();
        let mut counted: Vec<(u32, f64)> = Vec::new();
        for &i in &indices {
            match counted.last_mut() {
                Some((last, v)) if *last == i => *v += 1.0,
                _ => counted.push((i, 1.0)),
            }
        }
        if counted.len() == before {
            FeatureVector {
                indices,
                values: Vec::new(),
            }
        } else {
            Self::from_pairs(counted)
        }
    }

    /// Builds a vector from `(index, value)` pairs, summing duplicates.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            match merged.last_mut() {
                Some((last, acc)) if *last == i => *acc += v,
                _ => merged.push((i, v)),
            }
        }
        let (indices, values): (Vec<u32>, Vec<f64>) = merged.into_iter().unzip();
        if values.iter().all(|&v| v == 1.0) {
            FeatureVector {
                indices,
                values: Vec::new(),
            }
        } else {
            FeatureVector { indices, values }
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices
            .iter()
            .enumerate()
            .map(move |(k, &i)| (i, if self.values.is_empty() { 1.0 } else { self.values[k] }))
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        if self.values.is_empty() {
            self.indices.iter().map(|&i| weights[i as usize]).sum()
        } else {
            self.indices
                .iter()
                .zip(&self.values)
                .map(|(&i, &v)| weights[i as usize] * v)
                .sum()
        }
    }

    /// `target += scale * self`
    pub fn add_scaled_to(&self, target: &mut [f64], scale: f64) {
        if self.values.is_empty() {
            for &i in &self.indices {
                target[i as usize] += scale;
            }
        } else {
            for (&i, &v) in self.indices.iter().zip(&self.values) {
                target[i as usize] += scale * v;
            }
        }
    }

    /// Sum of several vectors.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a FeatureVector>) -> FeatureVector {
        Self::from_pairs(parts.into_iter().flat_map(|p| p.iter()).collect())
    }
}

/// Bidirectional feature-string / index map. Once frozen, unseen strings
/// have no index and are dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureDictionary {
    index: HashMap<String, u32>,
    names: Vec<String>,
    frozen: bool,
}

impl FeatureDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a frozen dictionary from its ordered names.
    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i as u32).is_some() {
                return Err(Error::ModelFormat(format!("duplicate feature {name:?}")));
            }
        }
        Ok(FeatureDictionary {
            index,
            names,
            frozen: true,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, index: u32) -> Option<&str> {
        self.names.get(index as usize).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Looks a feature up, adding it unless the dictionary is frozen.
    pub fn get_or_insert(&mut self, name: &str) -> Option<u32> {
        if let Some(&i) = self.index.get(name) {
            return Some(i);
        }
        if self.frozen {
            return None;
        }
        let i = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        Some(i)
    }
}

/// Word-to-cluster map read from a Brown cluster file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BrownClusterMap {
    clusters: HashMap<String, String>,
}

impl BrownClusterMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(std::io::BufReader::new(file), &path.display().to_string())
    }

    /// Parses `cluster<TAB>word[<TAB>count]` lines. Blank lines are skipped and
    /// the first entry for a repeated word wins.
    pub fn from_reader(reader: impl BufRead, context: &str) -> Result<Self> {
        let mut clusters = HashMap::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(context, e))?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let (Some(cluster), Some(word)) = (fields.next(), fields.next()) else {
                return Err(Error::parse(context, lineno + 1, "expected cluster<TAB>word[<TAB>count]"));
            };
            if let Some(count) = fields.next() {
                if count.trim().parse::<u64>().is_err() {
                    return Err(Error::parse(context, lineno + 1, format!("bad count {count:?}")));
                }
            }
            if fields.next().is_some() || cluster.is_empty() || word.is_empty() {
                return Err(Error::parse(context, lineno + 1, "expected cluster<TAB>word[<TAB>count]"));
            }
            clusters.entry(word.to_string()).or_insert_with(|| cluster.to_string());
        }
        Ok(BrownClusterMap { clusters })
    }

    pub fn insert(&mut self, word: impl Into<String>, cluster: impl Into<String>) {
        self.clusters.entry(word.into()).or_insert_with(|| cluster.into());
    }

    pub fn cluster(&self, word: &str) -> &str {
        self.clusters.get(word).map_or(UNKNOWN_CLUSTER, String::as_str)
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Entries sorted by word.
    pub fn sorted_entries(&self) -> Vec<(&str, &str)> {
        let mut v: Vec<_> = self.clusters.iter().map(|(w, c)| (w.as_str(), c.as_str())).collect();
        v.sort_unstable();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub use_affix: bool,
    pub use_brown: bool,
    pub use_shape: bool,
    pub affix_max_len: usize,
    pub max_segment_len: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            use_affix: false,
            use_brown: false,
            use_shape: false,
            affix_max_len: 3,
            max_segment_len: 6,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.affix_max_len == 0 {
            return Err(Error::Config("affix_max_len must be at least 1".into()));
        }
        if self.max_segment_len == 0 {
            return Err(Error::Config("max segment length must be at least 1".into()));
        }
        Ok(())
    }

    /// Parses a flag list such as `a,b,s` (empty or `base` for none).
    pub fn with_flags(mut self, flags: &str) -> Result<Self> {
        self.use_affix = false;
        self.use_brown = false;
        self.use_shape = false;
        for flag in flags.split(',').map(str::trim).filter(|f| !f.is_empty()) {
            match flag.trim_start_matches('+') {
                "a" => self.use_affix = true,
                "b" => self.use_brown = true,
                "s" => self.use_shape = true,
                "base" => {}
                other => return Err(Error::Config(format!("unknown feature flag {other:?}"))),
            }
        }
        Ok(self)
    }

    /// Short name in the style `base`, `+a+b+s`.
    pub fn flag_name(&self) -> String {
        let mut s = String::new();
        if self.use_affix {
            s.push_str("+a");
        }
        if self.use_brown {
            s.push_str("+b");
        }
        if self.use_shape {
            s.push_str("+s");
        }
        if s.is_empty() {
            s.push_str("base");
        }
        s
    }
}

/// Maps uppercase to `X`, lowercase to `x`, digits to `d` and keeps other
/// characters; runs of one shape character longer than two collapse to two.
pub fn word_shape(surface: &str) -> String {
    let mut out = String::with_capacity(surface.len());
    let mut last: Option<char> = None;
    let mut run = 0;
    for c in surface.chars() {
        let mapped = if c.is_uppercase() {
            'X'
        } else if c.is_lowercase() {
            'x'
        } else if c.is_ascii_digit() || c.is_numeric() {
            'd'
        } else {
            c
        };
        if Some(mapped) == last {
            run += 1;
        } else {
            last = Some(mapped);
            run = 1;
        }
        if run <= 2 {
            out.push(mapped);
        }
    }
    out
}

/// Either side of a transition: a real label (tag or segment label id) or
/// the sentence boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Start,
    Label(usize),
    Stop,
}

/// Where extracted feature strings go.
pub enum DictAccess<'a> {
    /// Add unseen features (unless the dictionary is frozen).
    Grow(&'a mut FeatureDictionary),
    /// Look up only.
    Frozen(&'a FeatureDictionary),
    /// Produce empty vectors; used when only the graph shape matters.
    Discard,
}

/// Feature extractor bound to one sentence.
pub struct Featurizer<'a> {
    sentence: &'a Sentence,
    labels: &'a LabelSet,
    config: &'a FeatureConfig,
    brown: Option<&'a BrownClusterMap>,
    dict: DictAccess<'a>,
    shapes: Vec<String>,
}

impl<'a> Featurizer<'a> {
    pub fn new(
        sentence: &'a Sentence,
        labels: &'a LabelSet,
        config: &'a FeatureConfig,
        brown: Option<&'a BrownClusterMap>,
        dict: DictAccess<'a>,
    ) -> Self {
        let shapes = if config.use_shape {
            sentence.tokens().iter().map(|t| word_shape(&t.surface)).collect()
        } else {
            Vec::new()
        };
        Featurizer {
            sentence,
            labels,
            config,
            brown,
            dict,
            shapes,
        }
    }

    pub fn sentence(&self) -> &'a Sentence {
        self.sentence
    }

    pub fn labels(&self) -> &'a LabelSet {
        self.labels
    }

    pub fn config(&self) -> &'a FeatureConfig {
        self.config
    }

    /// False when running without a dictionary.
    pub fn produces_features(&self) -> bool {
        !matches!(self.dict, DictAccess::Discard)
    }

    fn index(&mut self, names: Vec<String>) -> FeatureVector {
        let indices = match &mut self.dict {
            DictAccess::Grow(d) => names.iter().filter_map(|n| d.get_or_insert(n)).collect(),
            DictAccess::Frozen(d) => names.iter().filter_map(|n| d.get(n)).collect(),
            DictAccess::Discard => Vec::new(),
        };
        FeatureVector::from_indicators(indices)
    }

    fn word_at(&self, i: isize) -> &str {
        if i < 0 {
            BOS
        } else if i as usize >= self.sentence.len() {
            EOS
        } else {
            self.sentence.word(i as usize)
        }
    }

    fn shape_at(&self, i: isize) -> &str {
        if i < 0 || i as usize >= self.sentence.len() {
            self.word_at(i)
        } else {
            &self.shapes[i as usize]
        }
    }

    fn cluster_at(&self, i: isize) -> &str {
        if i < 0 || i as usize >= self.sentence.len() {
            self.word_at(i)
        } else {
            self.brown.map_or(UNKNOWN_CLUSTER, |b| b.cluster(self.sentence.word(i as usize)))
        }
    }

    /// A word-valued template plus its cluster and shape variants.
    /// `C{aug}` and `S{aug}` name the cluster and shape variants.
    fn push_word(&self, out: &mut Vec<String>, template: &str, aug: &str, pos: isize, suffix: &str) {
        out.push(format!("{template}={}|{suffix}", self.word_at(pos)));
        if self.config.use_brown {
            out.push(format!("C{aug}={}|{suffix}", self.cluster_at(pos)));
        }
        if self.config.use_shape {
            out.push(format!("S{aug}={}|{suffix}", self.shape_at(pos)));
        }
    }

    fn push_affixes(&self, out: &mut Vec<String>, template: &str, pos: usize, suffix: &str) {
        let chars: Vec<char> = self.sentence.word(pos).chars().collect();
        for k in 1..=self.config.affix_max_len.min(chars.len()) {
            let prefix: String = chars[..k].iter().collect();
            let suffix_str: String = chars[chars.len() - k..].iter().collect();
            out.push(format!("PRE{k}{template}={prefix}|{suffix}"));
            out.push(format!("SUF{k}{template}={suffix_str}|{suffix}"));
        }
    }

    fn tag_label(&self, e: Endpoint) -> String {
        match e {
            Endpoint::Start => START.to_string(),
            Endpoint::Stop => STOP.to_string(),
            Endpoint::Label(t) => self.labels.tag_name(t),
        }
    }

    fn segment_label(&self, e: Endpoint) -> &str {
        match e {
            Endpoint::Start => START,
            Endpoint::Stop => STOP,
            Endpoint::Label(y) => self.labels.segment_label_name(y),
        }
    }

    /// Feature strings of the per-position part of a linear-chain edge.
    /// `position == n` with `Endpoint::Stop` is the final transition.
    pub fn linear_emission_strings(&self, position: usize, cur_tag: Endpoint) -> Vec<String> {
        let tag = self.tag_label(cur_tag);
        let i = position as isize;
        let mut out = Vec::with_capacity(8);
        self.push_word(&mut out, "W[-1]", "[-1]", i - 1, &tag);
        self.push_word(&mut out, "W[0]", "[0]", i, &tag);
        if self.config.use_affix && position < self.sentence.len() {
            self.push_affixes(&mut out, "[0]", position, &tag);
        }
        out
    }

    pub fn tag_transition_strings(&self, prev: Endpoint, cur: Endpoint) -> Vec<String> {
        vec![format!("{TAG_TRANSITION_PREFIX}{}|{}", self.tag_label(prev), self.tag_label(cur))]
    }

    /// All features of the linear-chain edge entering `cur_tag` at `position`.
    pub fn linear_strings(&self, position: usize, prev_tag: Endpoint, cur_tag: Endpoint) -> Vec<String> {
        let mut out = self.linear_emission_strings(position, cur_tag);
        out.extend(self.tag_transition_strings(prev_tag, cur_tag));
        out
    }

    fn check_segment(&self, start: usize, end: usize, label: usize) -> Result<()> {
        let len = (end + 1).saturating_sub(start);
        let max_len = if label == 0 { 1 } else { self.config.max_segment_len };
        if end < start || end >= self.sentence.len() || len > max_len || label >= self.labels.num_segment_labels() {
            return Err(Error::SegmentLength {
                start,
                end,
                label: if label < self.labels.num_segment_labels() {
                    self.labels.segment_label_name(label).to_string()
                } else {
                    format!("#{label}")
                },
                max_len,
            });
        }
        Ok(())
    }

    /// Segment templates for tokens `start..=end` with label `label`; no
    /// transition features.
    pub fn segment_strings(&self, start: usize, end: usize, label: usize) -> Result<Vec<String>> {
        self.check_segment(start, end, label)?;
        let name = self.labels.segment_label_name(label);
        let len = end + 1 - start;
        let mut out = Vec::with_capacity(4 * len + 2);
        for j in 0..len {
            let fwd = start + j;
            let bwd = end - j;
            let ws = format!("WS[{j}]");
            let we = format!("WE[{j}]");
            self.push_word(&mut out, &ws, &format!(":{ws}"), fwd as isize, name);
            self.push_word(&mut out, &we, &format!(":{we}"), bwd as isize, name);
            if self.config.use_affix {
                self.push_affixes(&mut out, &format!(":{ws}"), fwd, name);
                self.push_affixes(&mut out, &format!(":{we}"), bwd, name);
            }
        }
        self.push_word(&mut out, "W[before]", ":W[before]", start as isize - 1, name);
        self.push_word(&mut out, "W[after]", ":W[after]", end as isize + 1, name);
        Ok(out)
    }

    pub fn segment_transition_strings(&self, prev: Endpoint, cur: Endpoint) -> Vec<String> {
        vec![format!(
            "{SEGMENT_TRANSITION_PREFIX}{}|{}",
            self.segment_label(prev),
            self.segment_label(cur)
        )]
    }

    pub fn linear_emission(&mut self, position: usize, cur_tag: Endpoint) -> FeatureVector {
        if !self.produces_features() {
            return FeatureVector::default();
        }
        let names = self.linear_emission_strings(position, cur_tag);
        self.index(names)
    }

    pub fn tag_transition(&mut self, prev: Endpoint, cur: Endpoint) -> FeatureVector {
        if !self.produces_features() {
            return FeatureVector::default();
        }
        let names = self.tag_transition_strings(prev, cur);
        self.index(names)
    }

    pub fn segment(&mut self, start: usize, end: usize, label: usize) -> Result<FeatureVector> {
        if !self.produces_features() {
            self.check_segment(start, end, label)?;
            return Ok(FeatureVector::default());
        }
        let names = self.segment_strings(start, end, label)?;
        Ok(self.index(names))
    }

    pub fn segment_transition(&mut self, prev: Endpoint, cur: Endpoint) -> FeatureVector {
        if !self.produces_features() {
            return FeatureVector::default();
        }
        let names = self.segment_transition_strings(prev, cur);
        self.index(names)
    }

    /// Features of a linear-chain edge: previous word, current word and tag
    /// transition, plus the enabled augmentations.
    pub fn extract_linear_features(&mut self, position: usize, prev_tag: Endpoint, cur_tag: Endpoint) -> FeatureVector {
        let names = self.linear_strings(position, prev_tag, cur_tag);
        self.index(names)
    }

    /// Features of a segment edge. With `prev_label == None` (weak model
    /// segment edges) no transition feature is emitted.
    pub fn extract_segment_features(
        &mut self,
        start: usize,
        end: usize,
        label: usize,
        prev_label: Option<Endpoint>,
    ) -> Result<FeatureVector> {
        let mut names = self.segment_strings(start, end, label)?;
        if let Some(prev) = prev_label {
            names.extend(self.segment_transition_strings(prev, Endpoint::Label(label)));
        }
        Ok(self.index(names))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn set(v: Vec<String>) -> BTreeSet<String> {
        v.into_iter().collect()
    }

    fn strs(v: &[&str]) -> BTreeSet<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn shapes() {
        assert_eq!(word_shape("Dr"), "Xx");
        assert_eq!(word_shape("2011abcDEF"), "ddxxXX");
        assert_eq!(word_shape("she's"), "xx'x");
        assert_eq!(word_shape("!!!!"), "!!");
        assert_eq!(word_shape(""), "");
    }

    #[test]
    fn linear_templates() {
        let s = tokenize("Dr teh says");
        let labels = LabelSet::noun_phrase();
        let base = FeatureConfig::default();
        let f = Featurizer::new(&s, &labels, &base, None, DictAccess::Discard);
        let b_np = Endpoint::Label(1);
        assert_eq!(
            set(f.linear_strings(0, Endpoint::Start, b_np)),
            strs(&["W[-1]=<BOS>|B-NP", "W[0]=Dr|B-NP", "T=<START>|B-NP"])
        );

        let with_shape = base.clone().with_flags("s").unwrap();
        let f = Featurizer::new(&s, &labels, &with_shape, None, DictAccess::Discard);
        let got = set(f.linear_strings(0, Endpoint::Start, b_np));
        let extra: BTreeSet<_> = got.difference(&strs(&["W[-1]=<BOS>|B-NP", "W[0]=Dr|B-NP", "T=<START>|B-NP"])).cloned().collect();
        assert_eq!(extra, strs(&["S[-1]=<BOS>|B-NP", "S[0]=Xx|B-NP"]));
    }

    #[test]
    fn linear_affixes_and_clusters() {
        let s = tokenize("Dr teh says");
        let labels = LabelSet::noun_phrase();
        let cfg = FeatureConfig::default().with_flags("a,b").unwrap();
        let mut brown = BrownClusterMap::new();
        brown.insert("teh", "0110");
        let f = Featurizer::new(&s, &labels, &cfg, Some(&brown), DictAccess::Discard);
        let got = set(f.linear_emission_strings(1, Endpoint::Label(2)));
        for want in ["PRE1[0]=t|I-NP", "PRE3[0]=teh|I-NP", "SUF2[0]=eh|I-NP", "C[0]=0110|I-NP", "C[-1]=<UNK>|I-NP"] {
            assert!(got.contains(want), "missing {want} in {got:?}");
        }
        assert!(!got.iter().any(|s| s.starts_with("PRE4")));
    }

    #[test]
    fn segment_templates() {
        let s = tokenize("Dr teh says");
        let labels = LabelSet::noun_phrase();
        let base = FeatureConfig::default();
        let f = Featurizer::new(&s, &labels, &base, None, DictAccess::Discard);
        assert_eq!(
            set(f.segment_strings(0, 1, 1).unwrap()),
            strs(&["WS[0]=Dr|NP", "WS[1]=teh|NP", "WE[0]=teh|NP", "WE[1]=Dr|NP", "W[before]=<BOS>|NP", "W[after]=says|NP"])
        );
        let single = f.segment_strings(2, 2, 0).unwrap();
        assert!(single.contains(&"WS[0]=says|O".to_string()));
        assert!(single.contains(&"WE[0]=says|O".to_string()));
        assert!(single.contains(&"W[after]=<EOS>|O".to_string()));
    }

    #[test]
    fn segment_transition_only_with_previous_label() {
        let s = tokenize("Dr teh says");
        let labels = LabelSet::noun_phrase();
        let base = FeatureConfig::default();
        let mut dict = FeatureDictionary::new();
        let mut f = Featurizer::new(&s, &labels, &base, None, DictAccess::Grow(&mut dict));
        let weak = f.extract_segment_features(0, 1, 1, None).unwrap();
        let semi = f.extract_segment_features(0, 1, 1, Some(Endpoint::Start)).unwrap();
        assert_eq!(weak.len(), 6);
        assert_eq!(semi.len(), 7);
        assert!(dict.get("TR=<START>|NP").is_some());
    }

    #[test]
    fn segment_length_limits() {
        let s = tokenize("a b c d");
        let labels = LabelSet::noun_phrase();
        let cfg = FeatureConfig {
            max_segment_len: 2,
            ..FeatureConfig::default()
        };
        let f = Featurizer::new(&s, &labels, &cfg, None, DictAccess::Discard);
        assert!(f.segment_strings(0, 1, 1).is_ok());
        assert!(f.segment_strings(0, 2, 1).is_err());
        assert!(f.segment_strings(0, 1, 0).is_err());
        assert!(f.segment_strings(3, 4, 1).is_err());
    }

    #[test]
    fn frozen_dictionary_drops_unseen() {
        let labels = LabelSet::noun_phrase();
        let cfg = FeatureConfig::default();
        let mut dict = FeatureDictionary::new();
        let train = tokenize("the cat");
        Featurizer::new(&train, &labels, &cfg, None, DictAccess::Grow(&mut dict)).extract_linear_features(
            0,
            Endpoint::Start,
            Endpoint::Label(1),
        );
        dict.freeze();
        let size = dict.len();
        let test = tokenize("zebra cat");
        let fv = Featurizer::new(&test, &labels, &cfg, None, DictAccess::Grow(&mut dict)).extract_linear_features(
            0,
            Endpoint::Start,
            Endpoint::Label(1),
        );
        assert_eq!(dict.len(), size);
        // W[-1]=<BOS> and the transition survive, the unseen word does not
        assert_eq!(fv.len(), 2);
        assert!(fv.indices().iter().all(|&i| (i as usize) < size));
    }

    #[test]
    fn brown_file_parsing() {
        let text = "0110\tthe\t4200\n\n10\tcat\n111\tthe\t3\n";
        let map = BrownClusterMap::from_reader(text.as_bytes(), "mem").unwrap();
        assert_eq!(map.cluster("the"), "0110");
        assert_eq!(map.cluster("cat"), "10");
        assert_eq!(map.cluster("dog"), UNKNOWN_CLUSTER);
        assert!(BrownClusterMap::from_reader("".as_bytes(), "mem").unwrap().is_empty());
        let err = BrownClusterMap::from_reader("0110\tthe\n0111\n".as_bytes(), "clusters.txt").unwrap_err();
        assert!(err.to_string().contains("clusters.txt:2"), "{err}");
    }

    #[test]
    fn feature_vector_merges_duplicates() {
        let v = FeatureVector::from_indicators(vec![3, 1, 3]);
        assert_eq!(v.iter().collect::<Vec<_>>(), [(1, 1.0), (3, 2.0)]);
        assert_eq!(v.dot(&[0.0, 1.0, 0.0, 0.5]), 2.0);
    }

    #[test]
    fn flag_parsing() {
        let cfg = FeatureConfig::default().with_flags("a,s").unwrap();
        assert!(cfg.use_affix && cfg.use_shape && !cfg.use_brown);
        assert_eq!(cfg.flag_name(), "+a+s");
        assert!(FeatureConfig::default().with_flags("q").is_err());
    }

    fn all_strings(s: &Sentence, cfg: &FeatureConfig, brown: &BrownClusterMap) -> BTreeSet<String> {
        let labels = LabelSet::noun_phrase();
        let f = Featurizer::new(s, &labels, cfg, Some(brown), DictAccess::Discard);
        let mut out = BTreeSet::new();
        for i in 0..s.len() {
            out.extend(f.linear_strings(i, Endpoint::Start, Endpoint::Label(1)));
            for end in i..s.len().min(i + cfg.max_segment_len) {
                out.extend(f.segment_strings(i, end, 1).unwrap());
            }
        }
        out
    }

    proptest! {
        #[test]
        fn shape_length_and_collapse(word in "[a-zA-Z0-9'.-]{0,12}") {
            let shape = word_shape(&word);
            prop_assert!(shape.chars().count() <= word.chars().count());
            if !word.chars().any(|c| c.is_ascii_digit()) {
                prop_assert_eq!(word_shape(&shape), shape.clone());
            }
        }

        #[test]
        fn flags_only_add_features(words in proptest::collection::vec("[a-zA-Z]{1,5}", 1..6), a in any::<bool>(), b in any::<bool>(), s in any::<bool>()) {
            let sentence = Sentence::from_words(&words);
            let mut brown = BrownClusterMap::new();
            brown.insert(words[0].clone(), "01");
            let smaller = FeatureConfig { use_affix: a, use_brown: b, use_shape: s, ..FeatureConfig::default() };
            let bigger = FeatureConfig { use_affix: true, use_brown: b, use_shape: s, ..FeatureConfig::default() };
            let small_set = all_strings(&sentence, &smaller, &brown);
            let big_set = all_strings(&sentence, &bigger, &brown);
            prop_assert!(small_set.is_subset(&big_set));
            prop_assert_eq!(small_set.clone(), all_strings(&sentence, &smaller, &brown));
        }
    }
}
