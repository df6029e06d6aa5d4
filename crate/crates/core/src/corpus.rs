//! Annotated messages: JSON-lines and BRAT standoff input, tokenized
//! datasets, and corpus statistics.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{
    char_spans_to_word_spans, tokenize, word_spans_to_char_spans, CharSpan, Sentence, WordSpan,
};

/// One message with character-level annotations, as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub text: String,
    #[serde(default)]
    pub spans: Vec<CharSpan>,
}

/// A tokenized message with gold spans at both levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    pub sentence: Sentence,
    pub gold_chars: Vec<CharSpan>,
    pub gold_words: Vec<WordSpan>,
}

impl Instance {
    pub fn from_document(doc: &Document, index: usize) -> Result<Self> {
        let sentence = tokenize(&doc.text);
        let mut gold_chars = doc.spans.clone();
        gold_chars.sort();
        let gold_words = char_spans_to_word_spans(&sentence, &gold_chars)?;
        Ok(Instance {
            id: doc.id.clone().unwrap_or_else(|| index.to_string()),
            sentence,
            gold_chars,
            gold_words,
        })
    }

    /// Gold spans whose character boundaries do not fall on token boundaries.
    pub fn improper_spans(&self) -> usize {
        let aligned = word_spans_to_char_spans(&self.sentence, &self.gold_words);
        self.gold_chars.iter().filter(|s| !aligned.contains(s)).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub instances: Vec<Instance>,
}

impl Dataset {
    pub fn from_documents(split: Split, docs: &[Document]) -> Result<Self> {
        let instances = docs
            .iter()
            .enumerate()
            .map(|(i, d)| Instance::from_document(d, i))
            .collect::<Result<_>>()?;
        Ok(Dataset { split, instances })
    }

    pub fn load_jsonl(path: impl AsRef<Path>, split: Split) -> Result<Self> {
        Self::from_documents(split, &read_jsonl(path)?)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Sorted distinct chunk labels used by gold spans.
    pub fn chunk_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self
            .instances
            .iter()
            .flat_map(|i| i.gold_chars.iter().map(|s| s.label.clone()))
            .collect();
        labels.sort();
        labels.dedup();
        labels
    }

    pub fn stats(&self) -> CorpusStats {
        let mut stats = CorpusStats::default();
        for inst in &self.instances {
            stats.messages += 1;
            stats.spans += inst.gold_chars.len();
            stats.improper += inst.improper_spans();
            stats.tokens += inst.sentence.len();
        }
        stats
    }
}

/// Message, span, improper-span and token counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub messages: usize,
    pub spans: usize,
    pub improper: usize,
    pub tokens: usize,
}

impl CorpusStats {
    pub fn improper_percent(&self) -> f64 {
        if self.spans == 0 {
            0.0
        } else {
            100.0 * self.improper as f64 / self.spans as f64
        }
    }
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(BufReader::new(file), &path.display().to_string())
}

pub fn parse_jsonl(reader: impl BufRead, context: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(context, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document =
            serde_json::from_str(&line).map_err(|e| Error::parse(context, lineno + 1, e.to_string()))?;
        let len = doc.text.chars().count();
        for s in &doc.spans {
            if s.start >= s.end || s.end > len {
                return Err(Error::parse(
                    context,
                    lineno + 1,
                    format!("span [{}, {}) outside text of length {len}", s.start, s.end),
                ));
            }
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_jsonl<'a>(path: impl AsRef<Path>, docs: impl IntoIterator<Item = &'a Document>) -> Result<()> {
    let path = path.as_ref();
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for doc in docs {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Parses the `T` lines of a BRAT `.ann` file. Discontinuous annotations
/// (`start end;start end`) are read as the range covering all fragments.
pub fn parse_brat_ann(content: &str, context: &str) -> Result<Vec<CharSpan>> {
    let mut spans = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        if !line.starts_with('T') {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let _id = fields.next();
        let Some(body) = fields.next() else {
            return Err(Error::parse(context, lineno + 1, "missing annotation body"));
        };
        let (label, ranges) = body
            .split_once(' ')
            .ok_or_else(|| Error::parse(context, lineno + 1, "expected `<LABEL> <start> <end>`"))?;
        let mut start = usize::MAX;
        let mut end = 0;
        for fragment in ranges.split(';') {
            let mut nums = fragment.split_whitespace().map(str::parse::<usize>);
            match (nums.next(), nums.next(), nums.next()) {
                (Some(Ok(s)), Some(Ok(e)), None) if s < e => {
                    start = start.min(s);
                    end = end.max(e);
                }
                _ => return Err(Error::parse(context, lineno + 1, format!("bad offsets {fragment:?}"))),
            }
        }
        spans.push(CharSpan::new(start, end, label));
    }
    Ok(spans)
}

/// Reads one `.txt`/`.ann` pair, given either file's path or their stem.
pub fn read_brat_pair(path: impl AsRef<Path>) -> Result<Document> {
    let path = path.as_ref();
    let txt = path.with_extension("txt");
    let ann = path.with_extension("ann");
    let text = fs::read_to_string(&txt).map_err(|e| Error::io(&txt, e))?;
    let ann_text = fs::read_to_string(&ann).map_err(|e| Error::io(&ann, e))?;
    let spans = parse_brat_ann(&ann_text, &ann.display().to_string())?;
    let len = text.chars().count();
    if let Some(bad) = spans.iter().find(|s| s.end > len) {
        return Err(Error::parse(
            ann.display().to_string(),
            0,
            format!("span [{}, {}) outside text of length {len}", bad.start, bad.end),
        ));
    }
    Ok(Document {
        id: path.file_stem().map(|s| s.to_string_lossy().into_owned()),
        text,
        spans,
    })
}

/// Reads every `.ann` file in a directory (sorted by name) with its `.txt`.
pub fn read_brat_dir(dir: impl AsRef<Path>) -> Result<Vec<Document>> {
    let dir = dir.as_ref();
    let mut anns: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ann"))
        .collect();
    anns.sort();
    anns.iter().map(read_brat_pair).collect()
}
