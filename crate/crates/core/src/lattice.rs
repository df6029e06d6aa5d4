//! Per-sentence lattices for the three models.
//!
//! A lattice is a rooted DAG whose root-to-leaf paths are in bijection
//! with the legal labelings of one sentence:
//!
//! * linear chain: one node per (position, BIO tag), edges between
//!   adjacent positions that respect BIO validity;
//! * semi-Markov: one node per (end position, segment label); an edge
//!   `(s-1, y') -> (e, y)` is the segment `s..=e` labeled `y`;
//! * weak semi-Markov: Begin and End nodes per (position, label). Segment
//!   edges join `Begin(s, y)` to `End(e, y)` of the same label, and
//!   transition edges join `End(i-1, y')` to `Begin(i, y)`.
//!
//! Chunk segments may be up to `max_segment_len` tokens; O segments are a
//! single token. Edge features are stored as references to shared feature
//! blocks so that a segment's features are computed once per
//! (span, label) and a label transition's once per label pair.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Endpoint, FeatureVector, Featurizer};
use crate::text::{bio_to_word_spans, BioSequence, BioTag, LabelSet, WordSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Semi,
    Weak,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Linear, ModelKind::Semi, ModelKind::Weak];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Semi => "semi",
            ModelKind::Weak => "weak",
        }
    }

    pub fn is_segmental(self) -> bool {
        !matches!(self, ModelKind::Linear)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" | "crf" => Ok(ModelKind::Linear),
            "semi" | "semi-crf" => Ok(ModelKind::Semi),
            "weak" | "weak-semi-crf" => Ok(ModelKind::Weak),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Node {
    Root,
    Leaf,
    /// Linear chain: BIO tag id at a position.
    Tag { position: usize, tag: usize },
    /// Semi-Markov: a segment with this label ends at `position`.
    Label { position: usize, label: usize },
    /// Weak semi-Markov: a segment with this label starts at `position`.
    Begin { position: usize, label: usize },
    /// Weak semi-Markov: a segment with this label ends at `position`.
    End { position: usize, label: usize },
}

impl Node {
    fn display(&self, labels: &LabelSet) -> String {
        match *self {
            Node::Root => "Root".into(),
            Node::Leaf => "Leaf".into(),
            Node::Tag { position, tag } => format!("Tag({position},{})", labels.tag_name(tag)),
            Node::Label { position, label } => format!("Label({position},{})", labels.segment_label_name(label)),
            Node::Begin { position, label } => format!("Begin({position},{})", labels.segment_label_name(label)),
            Node::End { position, label } => format!("End({position},{})", labels.segment_label_name(label)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeClass {
    Transition,
    Segment,
}

const NO_BLOCK: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub from: u32,
    pub to: u32,
    pub class: EdgeClass,
    blocks: [u32; 2],
}

impl Edge {
    /// Ids of the feature blocks this edge's feature vector is made of.
    pub fn blocks(&self) -> impl Iterator<Item = usize> + '_ {
        self.blocks.iter().filter(|&&b| b != NO_BLOCK).map(|&b| b as usize)
    }
}

/// Rooted DAG for one sentence. Nodes are stored in topological order
/// (Root first, Leaf last); edges are grouped by target node and, within a
/// target, ordered by source node.
#[derive(Debug, Clone)]
pub struct Lattice {
    kind: ModelKind,
    len: usize,
    num_labels: usize,
    max_segment_len: usize,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    in_offsets: Vec<u32>,
    out_edges: Vec<u32>,
    out_offsets: Vec<u32>,
    blocks: Vec<FeatureVector>,
    /// dense (position, label) slot -> node id, `u32::MAX` when absent
    slots: Vec<u32>,
    feature_bound: usize,
}

struct Builder {
    nodes: Vec<Node>,
    slots: Vec<u32>,
    edges: Vec<Edge>,
    blocks: Vec<FeatureVector>,
}

impl Builder {
    fn new(num_slots: usize) -> Self {
        Builder {
            nodes: vec![Node::Root],
            slots: vec![u32::MAX; num_slots],
            edges: Vec::new(),
            blocks: Vec::new(),
        }
    }

    fn add_node(&mut self, slot: Option<usize>, node: Node) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(node);
        if let Some(slot) = slot {
            self.slots[slot] = id;
        }
        id
    }

    fn add_block(&mut self, fv: FeatureVector) -> u32 {
        self.blocks.push(fv);
        (self.blocks.len() - 1) as u32
    }

    fn add_edge(&mut self, from: u32, to: u32, class: EdgeClass, a: u32, b: u32) {
        debug_assert!(from != u32::MAX && to != u32::MAX);
        self.edges.push(Edge {
            from,
            to,
            class,
            blocks: [a, b],
        });
    }

    fn finish(mut self, kind: ModelKind, len: usize, num_labels: usize, max_segment_len: usize) -> Lattice {
        let leaf = self.nodes.len() - 1;
        debug_assert_eq!(self.nodes[leaf], Node::Leaf);
        self.edges.sort_by_key(|e| (e.to, e.from));
        let n_nodes = self.nodes.len();
        let mut in_offsets = vec![0u32; n_nodes + 1];
        let mut out_counts = vec![0u32; n_nodes + 1];
        for e in &self.edges {
            assert!(e.from < e.to, "lattice edges must follow topological order");
            in_offsets[e.to as usize + 1] += 1;
            out_counts[e.from as usize + 1] += 1;
        }
        for i in 0..n_nodes {
            in_offsets[i + 1] += in_offsets[i];
            out_counts[i + 1] += out_counts[i];
        }
        let out_offsets = out_counts.clone();
        let mut cursor = out_counts;
        let mut out_edges = vec![0u32; self.edges.len()];
        for (id, e) in self.edges.iter().enumerate() {
            let slot = &mut cursor[e.from as usize];
            out_edges[*slot as usize] = id as u32;
            *slot += 1;
        }
        let feature_bound = self
            .blocks
            .iter()
            .filter_map(|b| b.indices().last())
            .map(|&i| i as usize + 1)
            .max()
            .unwrap_or(0);
        Lattice {
            kind,
            len,
            num_labels,
            max_segment_len,
            nodes: self.nodes,
            edges: self.edges,
            in_offsets,
            out_edges,
            out_offsets,
            blocks: self.blocks,
            slots: self.slots,
            feature_bound,
        }
    }
}

fn max_len_for(label: usize, max_segment_len: usize) -> usize {
    if label == 0 {
        1
    } else {
        max_segment_len
    }
}

/// Builds the lattice of the given kind.
pub fn build(kind: ModelKind, featurizer: &mut Featurizer<'_>) -> Result<Lattice> {
    match kind {
        ModelKind::Linear => build_linear(featurizer),
        ModelKind::Semi => build_semi(featurizer),
        ModelKind::Weak => build_weak(featurizer),
    }
}

/// Linear-chain trellis over BIO tags.
pub fn build_linear(featurizer: &mut Featurizer<'_>) -> Result<Lattice> {
    let n = featurizer.sentence().len();
    if n == 0 {
        return Err(Error::EmptySentence);
    }
    let num_tags = featurizer.labels().num_tags();
    let mut b = Builder::new(n * num_tags);

    for i in 0..n {
        for t in 0..num_tags {
            if i == 0 && LabelSet::is_inside_tag(t) {
                continue;
            }
            b.add_node(Some(i * num_tags + t), Node::Tag { position: i, tag: t });
        }
    }
    let leaf = b.add_node(None, Node::Leaf);

    // transition blocks, indexed [prev][cur] with prev == num_tags for start
    let mut trans = vec![NO_BLOCK; (num_tags + 1) * (num_tags + 1)];
    for prev in 0..=num_tags {
        for cur in 0..=num_tags {
            let p = if prev == num_tags { None } else { Some(prev) };
            let allowed = match (p, cur == num_tags) {
                (None, true) => false,
                (_, true) => true,
                (p, false) => LabelSet::tag_transition_allowed(p, cur),
            };
            if allowed {
                let from = p.map_or(Endpoint::Start, Endpoint::Label);
                let to = if cur == num_tags { Endpoint::Stop } else { Endpoint::Label(cur) };
                let fv = featurizer.tag_transition(from, to);
                trans[prev * (num_tags + 1) + cur] = b.add_block(fv);
            }
        }
    }
    let trans_block = |prev: Option<usize>, cur: Option<usize>| {
        trans[prev.unwrap_or(num_tags) * (num_tags + 1) + cur.unwrap_or(num_tags)]
    };

    for i in 0..n {
        for t in 0..num_tags {
            let to = b.slots[i * num_tags + t];
            if to == u32::MAX {
                continue;
            }
            let emission = featurizer.linear_emission(i, Endpoint::Label(t));
            let emission = b.add_block(emission);
            if i == 0 {
                b.add_edge(0, to, EdgeClass::Transition, emission, trans_block(None, Some(t)));
                continue;
            }
            for prev in 0..num_tags {
                let from = b.slots[(i - 1) * num_tags + prev];
                if from == u32::MAX || !LabelSet::tag_transition_allowed(Some(prev), t) {
                    continue;
                }
                b.add_edge(from, to, EdgeClass::Transition, emission, trans_block(Some(prev), Some(t)));
            }
        }
    }
    let stop = featurizer.linear_emission(n, Endpoint::Stop);
    let stop = b.add_block(stop);
    for t in 0..num_tags {
        let from = b.slots[(n - 1) * num_tags + t];
        if from != u32::MAX {
            b.add_edge(from, leaf, EdgeClass::Transition, stop, trans_block(Some(t), None));
        }
    }
    let max_len = featurizer.config().max_segment_len;
    Ok(b.finish(ModelKind::Linear, n, num_tags, max_len))
}

/// Segment transition blocks indexed `[prev][cur]`; `prev == y` is the start
/// sentinel and `cur == y` the stop sentinel.
fn segment_transition_blocks(b: &mut Builder, featurizer: &mut Featurizer<'_>, num_labels: usize) -> Vec<u32> {
    let stride = num_labels + 1;
    let mut trans = vec![NO_BLOCK; stride * stride];
    for prev in 0..=num_labels {
        for cur in 0..=num_labels {
            if prev == num_labels && cur == num_labels {
                continue;
            }
            let from = if prev == num_labels { Endpoint::Start } else { Endpoint::Label(prev) };
            let to = if cur == num_labels { Endpoint::Stop } else { Endpoint::Label(cur) };
            let fv = featurizer.segment_transition(from, to);
            trans[prev * stride + cur] = b.add_block(fv);
        }
    }
    trans
}

/// Semi-Markov segment graph.
pub fn build_semi(featurizer: &mut Featurizer<'_>) -> Result<Lattice> {
    let n = featurizer.sentence().len();
    if n == 0 {
        return Err(Error::EmptySentence);
    }
    let num_labels = featurizer.labels().num_segment_labels();
    let max_len = featurizer.config().max_segment_len;
    let mut b = Builder::new(n * num_labels);
    for i in 0..n {
        for y in 0..num_labels {
            b.add_node(Some(i * num_labels + y), Node::Label { position: i, label: y });
        }
    }
    let leaf = b.add_node(None, Node::Leaf);
    let trans = segment_transition_blocks(&mut b, featurizer, num_labels);
    let stride = num_labels + 1;

    for end in 0..n {
        for y in 0..num_labels {
            let to = b.slots[end * num_labels + y];
            for k in 1..=max_len_for(y, max_len).min(end + 1) {
                let start = end + 1 - k;
                let seg = featurizer.segment(start, end, y)?;
                let seg = b.add_block(seg);
                if start == 0 {
                    b.add_edge(0, to, EdgeClass::Segment, seg, trans[num_labels * stride + y]);
                } else {
                    for prev in 0..num_labels {
                        let from = b.slots[(start - 1) * num_labels + prev];
                        b.add_edge(from, to, EdgeClass::Segment, seg, trans[prev * stride + y]);
                    }
                }
            }
        }
    }
    for y in 0..num_labels {
        let from = b.slots[(n - 1) * num_labels + y];
        b.add_edge(from, leaf, EdgeClass::Transition, trans[y * stride + num_labels], NO_BLOCK);
    }
    Ok(b.finish(ModelKind::Semi, n, num_labels, max_len))
}

/// Weak semi-Markov Begin/End graph.
pub fn build_weak(featurizer: &mut Featurizer<'_>) -> Result<Lattice> {
    let n = featurizer.sentence().len();
    if n == 0 {
        return Err(Error::EmptySentence);
    }
    let num_labels = featurizer.labels().num_segment_labels();
    let max_len = featurizer.config().max_segment_len;
    let begin_slot = |i: usize, y: usize| 2 * i * num_labels + y;
    let end_slot = |i: usize, y: usize| 2 * i * num_labels + num_labels + y;
    let mut b = Builder::new(2 * n * num_labels);
    for i in 0..n {
        for y in 0..num_labels {
            b.add_node(Some(begin_slot(i, y)), Node::Begin { position: i, label: y });
        }
        for y in 0..num_labels {
            b.add_node(Some(end_slot(i, y)), Node::End { position: i, label: y });
        }
    }
    let leaf = b.add_node(None, Node::Leaf);
    let trans = segment_transition_blocks(&mut b, featurizer, num_labels);
    let stride = num_labels + 1;

    for y in 0..num_labels {
        b.add_edge(0, b.slots[begin_slot(0, y)], EdgeClass::Transition, trans[num_labels * stride + y], NO_BLOCK);
    }
    for start in 0..n {
        for y in 0..num_labels {
            let from = b.slots[begin_slot(start, y)];
            for k in 1..=max_len_for(y, max_len).min(n - start) {
                let end = start + k - 1;
                let seg = featurizer.segment(start, end, y)?;
                let seg = b.add_block(seg);
                let to = b.slots[end_slot(end, y)];
                b.add_edge(from, to, EdgeClass::Segment, seg, NO_BLOCK);
            }
        }
        if start > 0 {
            for prev in 0..num_labels {
                let from = b.slots[end_slot(start - 1, prev)];
                for y in 0..num_labels {
                    let to = b.slots[begin_slot(start, y)];
                    b.add_edge(from, to, EdgeClass::Transition, trans[prev * stride + y], NO_BLOCK);
                }
            }
        }
    }
    for y in 0..num_labels {
        let from = b.slots[end_slot(n - 1, y)];
        b.add_edge(from, leaf, EdgeClass::Transition, trans[y * stride + num_labels], NO_BLOCK);
    }
    Ok(b.finish(ModelKind::Weak, n, num_labels, max_len))
}

impl Lattice {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// Number of tokens in the sentence.
    pub fn sentence_len(&self) -> usize {
        self.len
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn leaf(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn blocks(&self) -> &[FeatureVector] {
        &self.blocks
    }

    /// One more than the largest feature index used by any edge.
    pub fn feature_bound(&self) -> usize {
        self.feature_bound
    }

    /// Ids of edges entering `node`, ordered by source node.
    pub fn in_edges(&self, node: usize) -> std::ops::Range<usize> {
        self.in_offsets[node] as usize..self.in_offsets[node + 1] as usize
    }

    /// Ids of edges leaving `node`.
    pub fn out_edges(&self, node: usize) -> &[u32] {
        &self.out_edges[self.out_offsets[node] as usize..self.out_offsets[node + 1] as usize]
    }

    pub fn count_by_class(&self, class: EdgeClass) -> usize {
        self.edges.iter().filter(|e| e.class == class).count()
    }

    /// Full feature vector of an edge.
    pub fn edge_features(&self, edge: usize) -> FeatureVector {
        FeatureVector::concat(self.edges[edge].blocks().map(|b| &self.blocks[b]))
    }

    fn node_at_slot(&self, slot: usize) -> Option<u32> {
        self.slots.get(slot).copied().filter(|&id| id != u32::MAX)
    }

    fn find_edge(&self, from: u32, to: u32) -> Option<u32> {
        self.out_edges(from as usize)
            .iter()
            .copied()
            .find(|&e| self.edges[e as usize].to == to)
    }

    /// Segments `(first, last, segment label)` of the labeling a path
    /// encodes, O segments included.
    pub fn path_segments(&self, path: &[u32]) -> Vec<(usize, usize, usize)> {
        let mut segments = Vec::new();
        match self.kind {
            ModelKind::Linear => {
                for &e in path {
                    if let Node::Tag { position, tag } = self.nodes[self.edges[e as usize].to as usize] {
                        if LabelSet::is_inside_tag(tag) {
                            if let Some(last) = segments.last_mut() {
                                let last: &mut (usize, usize, usize) = last;
                                last.1 = position;
                            }
                        } else {
                            segments.push((position, position, tag.div_ceil(2)));
                        }
                    }
                }
            }
            ModelKind::Semi => {
                let mut next_start = 0;
                for &e in path {
                    if let Node::Label { position, label } = self.nodes[self.edges[e as usize].to as usize] {
                        segments.push((next_start, position, label));
                        next_start = position + 1;
                    }
                }
            }
            ModelKind::Weak => {
                for &e in path {
                    let edge = self.edges[e as usize];
                    if let (Node::Begin { position: s, label }, Node::End { position: t, .. }) =
                        (self.nodes[edge.from as usize], self.nodes[edge.to as usize])
                    {
                        segments.push((s, t, label));
                    }
                }
            }
        }
        segments
    }

    /// Chunk spans of the labeling a path encodes.
    pub fn path_to_spans(&self, path: &[u32], labels: &LabelSet) -> Vec<WordSpan> {
        self.path_segments(path)
            .into_iter()
            .filter(|&(_, _, y)| y != 0)
            .map(|(s, e, y)| WordSpan::new(s, e, labels.segment_label_name(y)))
            .collect()
    }

    /// The path encoding `spans`, or `None` if the labeling is not
    /// representable (unknown label, chunk longer than the segment limit).
    pub fn gold_path(&self, spans: &[WordSpan], labels: &LabelSet) -> Option<Vec<u32>> {
        let n = self.len;
        let mut sequence: Vec<u32> = vec![0];
        match self.kind {
            ModelKind::Linear => {
                let bio = crate::text::bio_from_spans(n, spans).ok()?;
                for (i, tag) in bio.tags().iter().enumerate() {
                    let t = match tag {
                        BioTag::O => 0,
                        BioTag::B(l) => 2 * labels.segment_label_id(l).filter(|&y| y > 0)? - 1,
                        BioTag::I(l) => 2 * labels.segment_label_id(l).filter(|&y| y > 0)?,
                    };
                    sequence.push(self.node_at_slot(i * self.num_labels + t)?);
                }
            }
            ModelKind::Semi | ModelKind::Weak => {
                for (s, e, y) in Self::segmentation(n, spans, labels)? {
                    if e + 1 - s > max_len_for(y, self.max_segment_len) {
                        return None;
                    }
                    if self.kind == ModelKind::Semi {
                        sequence.push(self.node_at_slot(e * self.num_labels + y)?);
                    } else {
                        sequence.push(self.node_at_slot(2 * s * self.num_labels + y)?);
                        sequence.push(self.node_at_slot(2 * e * self.num_labels + self.num_labels + y)?);
                    }
                }
            }
        }
        sequence.push(self.leaf() as u32);
        sequence.windows(2).map(|w| self.find_edge(w[0], w[1])).collect()
    }

    /// Full segmentation with O tokens as unit segments.
    fn segmentation(n: usize, spans: &[WordSpan], labels: &LabelSet) -> Option<Vec<(usize, usize, usize)>> {
        let mut sorted: Vec<&WordSpan> = spans.iter().collect();
        sorted.sort_by_key(|s| s.first);
        let mut out = Vec::new();
        let mut pos = 0;
        for span in sorted {
            if span.first < pos || span.last >= n || span.first > span.last {
                return None;
            }
            let y = labels.segment_label_id(&span.label).filter(|&y| y > 0)?;
            out.extend((pos..span.first).map(|i| (i, i, 0)));
            out.push((span.first, span.last, y));
            pos = span.last + 1;
        }
        out.extend((pos..n).map(|i| (i, i, 0)));
        Some(out)
    }

    /// Calls `visit` with every root-to-leaf path (as edge ids). Exponential;
    /// meant for small lattices in tests and diagnostics.
    pub fn for_each_path(&self, mut visit: impl FnMut(&[u32])) {
        fn walk(l: &Lattice, node: usize, path: &mut Vec<u32>, visit: &mut dyn FnMut(&[u32])) {
            if node == l.leaf() {
                visit(path);
                return;
            }
            for &e in l.out_edges(node) {
                path.push(e);
                walk(l, l.edges[e as usize].to as usize, path, visit);
                path.pop();
            }
        }
        walk(self, 0, &mut Vec::new(), &mut visit);
    }

    /// Text edge list, one `from -> to [class]` line per edge.
    pub fn to_edge_list(&self, labels: &LabelSet) -> String {
        let mut out = String::new();
        let mut order: Vec<&Edge> = self.edges.iter().collect();
        order.sort_by_key(|e| (e.from, e.to));
        for e in order {
            let class = match e.class {
                EdgeClass::Transition => "transition",
                EdgeClass::Segment => "segment",
            };
            out.push_str(&format!(
                "{} -> {} [{class}]\n",
                self.nodes[e.from as usize].display(labels),
                self.nodes[e.to as usize].display(labels)
            ));
        }
        out
    }
}

/// Decodes linear-chain tags on a path into a BIO sequence (for diagnostics).
pub fn path_to_bio(lattice: &Lattice, path: &[u32], labels: &LabelSet) -> Option<BioSequence> {
    if lattice.kind() != ModelKind::Linear {
        return None;
    }
    let tags = path
        .iter()
        .filter_map(|&e| match lattice.nodes()[lattice.edges()[e as usize].to as usize] {
            Node::Tag { tag: 0, .. } => Some(BioTag::O),
            Node::Tag { tag, .. } if LabelSet::is_inside_tag(tag) => {
                Some(BioTag::I(labels.segment_label_name(tag / 2).to_string()))
            }
            Node::Tag { tag, .. } => Some(BioTag::B(labels.segment_label_name(tag.div_ceil(2)).to_string())),
            _ => None,
        })
        .collect();
    BioSequence::new(tags).ok().filter(|b| bio_to_word_spans(b) == lattice.path_to_spans(path, labels))
}
