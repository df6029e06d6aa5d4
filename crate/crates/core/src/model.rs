//! Trained models: prediction and the versioned binary model file.
//!
//! File layout (little endian):
//!
//! ```text
//! magic "SEGCRFMD" | version u32 | kind u8 | labels | feature config |
//! lambda f64 | iterations u32 | final objective f64 | skipped u32 |
//! feature names | weights f64* | brown clusters | FNV-1a 64 checksum
//! ```
//!
//! Strings are a u32 byte length followed by UTF-8 bytes; lists are a u64
//! count followed by their items. Per-iteration wall times are not stored,
//! so identical training runs produce identical files.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::{BrownClusterMap, DictAccess, FeatureConfig, FeatureDictionary, Featurizer};
use crate::inference;
use crate::lattice::{self, Lattice, ModelKind};
use crate::text::{word_spans_to_char_spans, CharSpan, LabelSet, Sentence, WordSpan};

pub const MAGIC: &[u8; 8] = b"SEGCRFMD";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingMeta {
    pub lambda: f64,
    pub iterations: usize,
    pub final_objective: f64,
    /// Training instances whose gold structure could not be represented.
    pub skipped: usize,
    /// Wall-clock seconds of each optimizer iteration; empty after loading.
    pub iteration_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub kind: ModelKind,
    pub labels: LabelSet,
    pub features: FeatureConfig,
    pub dict: FeatureDictionary,
    pub weights: Vec<f64>,
    pub brown: Option<BrownClusterMap>,
    pub meta: TrainingMeta,
}

impl Model {
    /// Builds the lattice of `sentence` against the frozen dictionary.
    pub fn lattice(&self, sentence: &Sentence) -> Result<Lattice> {
        let mut f = Featurizer::new(
            sentence,
            &self.labels,
            &self.features,
            self.brown.as_ref(),
            DictAccess::Frozen(&self.dict),
        );
        lattice::build(self.kind, &mut f)
    }

    /// Best-scoring chunking of a sentence; empty for a sentence without tokens.
    pub fn predict(&self, sentence: &Sentence) -> Result<Vec<WordSpan>> {
        if sentence.is_empty() {
            return Ok(Vec::new());
        }
        let lattice = self.lattice(sentence)?;
        Ok(inference::decode_spans(&lattice, &self.weights, &self.labels)?.0)
    }

    pub fn predict_chars(&self, sentence: &Sentence) -> Result<Vec<CharSpan>> {
        Ok(word_spans_to_char_spans(sentence, &self.predict(sentence)?))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.buf.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        w.buf.push(match self.kind {
            ModelKind::Linear => 0,
            ModelKind::Semi => 1,
            ModelKind::Weak => 2,
        });
        w.u64(self.labels.chunk_labels().len() as u64);
        for l in self.labels.chunk_labels() {
            w.str(l);
        }
        let flags = u8::from(self.features.use_affix) | (u8::from(self.features.use_brown) << 1) | (u8::from(self.features.use_shape) << 2);
        w.buf.push(flags);
        w.u32(self.features.affix_max_len as u32);
        w.u32(self.features.max_segment_len as u32);
        w.f64(self.meta.lambda);
        w.u32(self.meta.iterations as u32);
        w.f64(self.meta.final_objective);
        w.u32(self.meta.skipped as u32);
        w.u64(self.dict.len() as u64);
        for name in self.dict.names() {
            w.str(name);
        }
        w.u64(self.weights.len() as u64);
        for &x in &self.weights {
            w.f64(x);
        }
        match &self.brown {
            None => w.buf.push(0),
            Some(b) => {
                w.buf.push(1);
                let entries = b.sorted_entries();
                w.u64(entries.len() as u64);
                for (word, cluster) in entries {
                    w.str(word);
                    w.str(cluster);
                }
            }
        }
        let sum = fnv1a(&w.buf);
        w.u64(sum);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::ModelFormat("not a model file (bad magic bytes)".into()));
        }
        let mut r = Reader {
            buf: bytes,
            pos: MAGIC.len(),
        };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::ModelVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        if bytes.len() < 8 {
            return Err(Error::ModelFormat("truncated".into()));
        }
        let (payload, trailer) = bytes.split_at(bytes.len() - 8);
        if fnv1a(payload) != u64::from_le_bytes(trailer.try_into().expect("8 bytes")) {
            return Err(Error::ModelFormat("checksum mismatch".into()));
        }
        r.buf = payload;

        let kind = match r.u8()? {
            0 => ModelKind::Linear,
            1 => ModelKind::Semi,
            2 => ModelKind::Weak,
            k => return Err(Error::ModelFormat(format!("unknown model kind {k}"))),
        };
        let n_labels = r.len()?;
        let labels = (0..n_labels).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        let labels = LabelSet::new(labels)?;
        let flags = r.u8()?;
        let features = FeatureConfig {
            use_affix: flags & 1 != 0,
            use_brown: flags & 2 != 0,
            use_shape: flags & 4 != 0,
            affix_max_len: r.u32()? as usize,
            max_segment_len: r.u32()? as usize,
        };
        features.validate().map_err(|e| Error::ModelFormat(e.to_string()))?;
        let lambda = r.f64()?;
        let iterations = r.u32()? as usize;
        let final_objective = r.f64()?;
        let skipped = r.u32()? as usize;
        let n_features = r.len()?;
        let names = (0..n_features).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        let dict = FeatureDictionary::from_names(names)?;
        let n_weights = r.len()?;
        if n_weights != dict.len() {
            return Err(Error::ModelFormat(format!(
                "{n_weights} weights for {} features",
                dict.len()
            )));
        }
        let weights = (0..n_weights).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let brown = match r.u8()? {
            0 => None,
            1 => {
                let n = r.len()?;
                let mut map = BrownClusterMap::new();
                for _ in 0..n {
                    let word = r.str()?;
                    let cluster = r.str()?;
                    map.insert(word, cluster);
                }
                Some(map)
            }
            x => return Err(Error::ModelFormat(format!("bad cluster flag {x}"))),
        };
        if r.pos != r.buf.len() {
            return Err(Error::ModelFormat("trailing bytes".into()));
        }
        Ok(Model {
            kind,
            labels,
            features,
            dict,
            weights,
            brown,
            meta: TrainingMeta {
                lambda,
                iterations,
                final_objective,
                skipped,
                iteration_seconds: Vec::new(),
            },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Human-readable dump of the model, weights listed by feature name.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Weight<'a> {
            feature: &'a str,
            weight: f64,
        }
        #[derive(Serialize)]
        struct Dump<'a> {
            format_version: u32,
            kind: ModelKind,
            labels: &'a [String],
            features: &'a FeatureConfig,
            lambda: f64,
            iterations: usize,
            final_objective: f64,
            skipped: usize,
            brown_clusters: usize,
            weights: Vec<Weight<'a>>,
        }
        let dump = Dump {
            format_version: FORMAT_VERSION,
            kind: self.kind,
            labels: self.labels.chunk_labels(),
            features: &self.features,
            lambda: self.meta.lambda,
            iterations: self.meta.iterations,
            final_objective: self.meta.final_objective,
            skipped: self.meta.skipped,
            brown_clusters: self.brown.as_ref().map_or(0, BrownClusterMap::len),
            weights: self
                .dict
                .names()
                .iter()
                .zip(&self.weights)
                .map(|(feature, &weight)| Weight { feature, weight })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&dump)?)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, x: u32) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }

    fn u64(&mut self, x: u64) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }

    fn f64(&mut self, x: f64) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::ModelFormat("truncated model file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    /// A list length, bounded by the remaining bytes.
    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        if n > (self.buf.len() - self.pos) as u64 {
            return Err(Error::ModelFormat(format!("implausible list length {n}")));
        }
        Ok(n as usize)
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::ModelFormat("invalid UTF-8 string".into()))
    }
}
