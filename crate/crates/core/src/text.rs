//! Text, span and label types, tokenization, and conversion between
//! character spans, word spans and BIO tag sequences.
//!
//! All offsets count Unicode scalar values, not bytes.

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the reserved outside label.
pub const OUTSIDE: &str = "O";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub start: usize,
    pub end: usize,
    pub is_anon: bool,
}

impl Token {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Raw text together with its tokens.
///
/// Tokens are non-empty, non-overlapping, strictly increasing, and each
/// surface equals the raw text sliced at the token's offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    raw_text: String,
    tokens: Vec<Token>,
    char_len: usize,
}

impl Sentence {
    pub fn raw_text(&self) -> &str {
        &self.raw_text
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Length of the raw text in characters.
    pub fn char_len(&self) -> usize {
        self.char_len
    }

    pub fn word(&self, i: usize) -> &str {
        &self.tokens[i].surface
    }

    /// Builds a sentence from already tokenized words joined by single spaces.
    pub fn from_words<S: AsRef<str>>(words: &[S]) -> Sentence {
        let text = words.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ");
        let mut tokens = Vec::with_capacity(words.len());
        let mut offset = 0;
        for w in words {
            let w = w.as_ref();
            let len = w.chars().count();
            tokens.push(Token {
                surface: w.to_string(),
                start: offset,
                end: offset + len,
                is_anon: is_anon_placeholder(w),
            });
            offset += len + 1;
        }
        let char_len = text.chars().count();
        Sentence {
            raw_text: text,
            tokens,
            char_len,
        }
    }
}

fn token_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"<[A-Z][A-Z0-9]*>|[\p{Alphabetic}\p{N}_]+|[^\p{Alphabetic}\p{N}_\s]+")
            .expect("token pattern compiles")
    })
}

fn is_anon_placeholder(s: &str) -> bool {
    let bytes = s.as_bytes();
    bytes.len() >= 3
        && bytes[0] == b'<'
        && bytes[bytes.len() - 1] == b'>'
        && bytes[1].is_ascii_uppercase()
        && bytes[2..bytes.len() - 1]
            .iter()
            .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit())
}

/// Splits text into anonymization placeholders (`<NAME>`), maximal
/// alphanumeric-or-underscore runs, and maximal runs of any other
/// non-whitespace characters.
pub fn tokenize(raw_text: &str) -> Sentence {
    let mut tokens = Vec::new();
    // byte offset -> char offset, advanced monotonically
    let mut byte_pos = 0;
    let mut char_pos = 0;
    for m in token_regex().find_iter(raw_text) {
        char_pos += raw_text[byte_pos..m.start()].chars().count();
        let len = m.as_str().chars().count();
        tokens.push(Token {
            surface: m.as_str().to_string(),
            start: char_pos,
            end: char_pos + len,
            is_anon: m.as_str().starts_with('<') && is_anon_placeholder(m.as_str()),
        });
        char_pos += len;
        byte_pos = m.end();
    }
    let char_len = char_pos + raw_text[byte_pos..].chars().count();
    Sentence {
        raw_text: raw_text.to_string(),
        tokens,
        char_len,
    }
}

/// A labeled span of characters, `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl CharSpan {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        CharSpan {
            start,
            end,
            label: label.into(),
        }
    }
}

/// A labeled range of tokens; both ends inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WordSpan {
    pub first: usize,
    pub last: usize,
    pub label: String,
}

impl WordSpan {
    pub fn new(first: usize, last: usize, label: impl Into<String>) -> Self {
        WordSpan {
            first,
            last,
            label: label.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.last + 1 - self.first
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Spans that occupy a half-open range of positions.
pub trait Span: Clone + Eq + std::hash::Hash + Ord + fmt::Debug {
    fn range(&self) -> (usize, usize);
    fn label(&self) -> &str;
}

impl Span for CharSpan {
    fn range(&self) -> (usize, usize) {
        (self.start, self.end)
    }

    fn label(&self) -> &str {
        &self.label
    }
}

impl Span for WordSpan {
    fn range(&self) -> (usize, usize) {
        (self.first, self.last + 1)
    }

    fn label(&self) -> &str {
        &self.label
    }
}

/// Fails if any two spans in the list share a position.
pub fn check_non_overlapping<S: Span>(spans: &[S]) -> Result<()> {
    let mut ranges: Vec<_> = spans.iter().map(Span::range).collect();
    ranges.sort_unstable();
    for pair in ranges.windows(2) {
        if pair[1].0 < pair[0].1 {
            return Err(Error::Overlap(format!(
                "[{}, {}) and [{}, {})",
                pair[0].0, pair[0].1, pair[1].0, pair[1].1
            )));
        }
    }
    Ok(())
}

/// Snaps character spans to token boundaries.
///
/// Each span maps to the range of tokens it intersects, so an endpoint
/// inside a token extends to that token's edge, and an endpoint in
/// whitespace shrinks to the nearest token inside the span. Spans touching
/// no token are dropped; spans that overlap after snapping are merged.
pub fn char_spans_to_word_spans(sentence: &Sentence, spans: &[CharSpan]) -> Result<Vec<WordSpan>> {
    let tokens = sentence.tokens();
    let mut mapped = Vec::with_capacity(spans.len());
    for span in spans {
        if span.start >= span.end || span.end > sentence.char_len() {
            return Err(Error::SpanOutOfBounds {
                start: span.start,
                end: span.end,
                len: sentence.char_len(),
            });
        }
        // first token ending after span.start
        let first = tokens.partition_point(|t| t.end <= span.start);
        // one past the last token starting before span.end
        let stop = tokens.partition_point(|t| t.start < span.end);
        if first < stop {
            mapped.push(WordSpan::new(first, stop - 1, span.label.clone()));
        }
    }
    mapped.sort_by_key(|s| (s.first, s.last));
    let mut merged: Vec<WordSpan> = Vec::with_capacity(mapped.len());
    for span in mapped {
        match merged.last_mut() {
            Some(prev) if span.first <= prev.last => prev.last = prev.last.max(span.last),
            _ => merged.push(span),
        }
    }
    Ok(merged)
}

/// Maps word spans back to character spans (first token start, last token end).
pub fn word_spans_to_char_spans(sentence: &Sentence, spans: &[WordSpan]) -> Vec<CharSpan> {
    let tokens = sentence.tokens();
    spans
        .iter()
        .map(|s| CharSpan::new(tokens[s.first].start, tokens[s.last].end, s.label.clone()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BioTag {
    B(String),
    I(String),
    O,
}

impl fmt::Display for BioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BioTag::B(l) => write!(f, "B-{l}"),
            BioTag::I(l) => write!(f, "I-{l}"),
            BioTag::O => f.write_str(OUTSIDE),
        }
    }
}

/// A valid BIO tag sequence: `I-x` only follows `B-x` or `I-x`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BioSequence {
    tags: Vec<BioTag>,
}

impl BioSequence {
    pub fn new(tags: Vec<BioTag>) -> Result<Self> {
        let mut prev: Option<&BioTag> = None;
        for (i, tag) in tags.iter().enumerate() {
            if let BioTag::I(label) = tag {
                let ok = matches!(prev, Some(BioTag::B(p)) | Some(BioTag::I(p)) if p == label);
                if !ok {
                    return Err(Error::InvalidBio {
                        position: i,
                        message: format!("{tag} cannot follow {}", prev.map_or("start".into(), |p| p.to_string())),
                    });
                }
            }
            prev = Some(tag);
        }
        Ok(BioSequence { tags })
    }

    pub fn tags(&self) -> &[BioTag] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

pub fn word_spans_to_bio(sentence: &Sentence, spans: &[WordSpan]) -> Result<BioSequence> {
    bio_from_spans(sentence.len(), spans)
}

pub(crate) fn bio_from_spans(n: usize, spans: &[WordSpan]) -> Result<BioSequence> {
    check_non_overlapping(spans)?;
    let mut tags = vec![BioTag::O; n];
    for span in spans {
        if span.first > span.last || span.last >= n {
            return Err(Error::SpanOutOfBounds {
                start: span.first,
                end: span.last + 1,
                len: n,
            });
        }
        tags[span.first] = BioTag::B(span.label.clone());
        for tag in &mut tags[span.first + 1..=span.last] {
            *tag = BioTag::I(span.label.clone());
        }
    }
    Ok(BioSequence { tags })
}

pub fn bio_to_word_spans(bio: &BioSequence) -> Vec<WordSpan> {
    let mut spans: Vec<WordSpan> = Vec::new();
    for (i, tag) in bio.tags.iter().enumerate() {
        match tag {
            BioTag::B(l) => spans.push(WordSpan::new(i, i, l.clone())),
            BioTag::I(_) => {
                if let Some(last) = spans.last_mut() {
                    last.last = i;
                }
            }
            BioTag::O => {}
        }
    }
    spans
}

/// Chunk labels plus the reserved outside label.
///
/// Segment label ids: `0` is O, `1..=k` are the chunk labels in order.
/// Tag ids: `0` is O, `2c+1` is `B-c`, `2c+2` is `I-c` for chunk index `c`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    chunk_labels: Vec<String>,
}

impl LabelSet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let chunk_labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        for (i, label) in chunk_labels.iter().enumerate() {
            if label == OUTSIDE || label.is_empty() {
                return Err(Error::InvalidLabel(format!("label {label:?} is reserved")));
            }
            if label.contains(char::is_whitespace) || label.contains('|') {
                return Err(Error::InvalidLabel(format!("label {label:?} contains a separator")));
            }
            if chunk_labels[..i].contains(label) {
                return Err(Error::InvalidLabel(format!("duplicate label {label:?}")));
            }
        }
        Ok(LabelSet { chunk_labels })
    }

    /// The single-label set used for noun-phrase chunking.
    pub fn noun_phrase() -> Self {
        LabelSet {
            chunk_labels: vec!["NP".to_string()],
        }
    }

    /// `count - 1` synthetic chunk labels, giving a segment alphabet of `count`.
    pub fn synthetic(count: usize) -> Self {
        assert!(count >= 2, "segment alphabet needs O plus one chunk label");
        LabelSet {
            chunk_labels: (1..count).map(|i| format!("C{i}")).collect(),
        }
    }

    pub fn chunk_labels(&self) -> &[String] {
        &self.chunk_labels
    }

    /// Size of the segment alphabet, O included.
    pub fn num_segment_labels(&self) -> usize {
        self.chunk_labels.len() + 1
    }

    pub fn num_tags(&self) -> usize {
        2 * self.chunk_labels.len() + 1
    }

    pub fn segment_label_name(&self, id: usize) -> &str {
        if id == 0 {
            OUTSIDE
        } else {
            &self.chunk_labels[id - 1]
        }
    }

    pub fn segment_label_id(&self, name: &str) -> Option<usize> {
        if name == OUTSIDE {
            return Some(0);
        }
        self.chunk_labels.iter().position(|l| l == name).map(|i| i + 1)
    }

    pub fn tag_name(&self, tag: usize) -> String {
        match tag {
            0 => OUTSIDE.to_string(),
            t if t % 2 == 1 => format!("B-{}", self.chunk_labels[(t - 1) / 2]),
            t => format!("I-{}", self.chunk_labels[(t - 2) / 2]),
        }
    }

    pub fn is_inside_tag(tag: usize) -> bool {
        tag != 0 && tag.is_multiple_of(2)
    }

    /// Whether `cur` may follow `prev` (`None` means sentence start).
    pub fn tag_transition_allowed(prev: Option<usize>, cur: usize) -> bool {
        if !Self::is_inside_tag(cur) {
            return true;
        }
        match prev {
            None | Some(0) => false,
            Some(p) => p.div_ceil(2) == cur / 2,
        }
    }
}
