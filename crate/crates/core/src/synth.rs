//! Generated corpora for sanity training, timing and conversion checks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dataset, Document, Split};
use crate::text::CharSpan;

const MARKERS: [&str; 4] = ["the", "my", "this", "some"];
const NOUNS: [&str; 16] = [
    "cat", "dog", "phone", "bus", "lecture", "movie", "friend", "exam", "shop", "lunch", "ticket", "class", "game",
    "party", "book", "car",
];
const FILLERS: [&str; 14] = [
    "go", "see", "want", "later", "ok", "lol", "so", "then", "now", "come", "will", "already", "can", "haha",
];

/// Builds a document from words, marking `(first, last, label)` word ranges.
fn assemble(words: &[String], chunks: &[(usize, usize, String)]) -> Document {
    let mut starts = Vec::with_capacity(words.len());
    let mut text = String::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            text.push(' ');
        }
        starts.push(text.chars().count());
        text.push_str(w);
    }
    let spans = chunks
        .iter()
        .map(|(first, last, label)| {
            CharSpan::new(starts[*first], starts[*last] + words[*last].chars().count(), label.clone())
        })
        .collect();
    Document { id: None, text, spans }
}

/// Messages whose NP chunks are a marker word followed by one or two nouns;
/// every other token is a filler word, so chunking is linearly separable.
pub fn separable_documents(count: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let mut words = Vec::new();
            let mut chunks = Vec::new();
            for _ in 0..rng.gen_range(2..=5) {
                if rng.gen_bool(0.5) {
                    let first = words.len();
                    words.push(MARKERS.choose(&mut rng).unwrap().to_string());
                    for _ in 0..rng.gen_range(1..=2) {
                        words.push(NOUNS.choose(&mut rng).unwrap().to_string());
                    }
                    chunks.push((first, words.len() - 1, "NP".to_string()));
                } else {
                    for _ in 0..rng.gen_range(1..=2) {
                        words.push(FILLERS.choose(&mut rng).unwrap().to_string());
                    }
                }
            }
            if chunks.is_empty() {
                let first = words.len();
                words.push(MARKERS[0].to_string());
                words.push(NOUNS[i % NOUNS.len()].to_string());
                chunks.push((first, first + 1, "NP".to_string()));
            }
            let mut doc = assemble(&words, &chunks);
            doc.id = Some(format!("sep{seed}-{i}"));
            doc
        })
        .collect()
}

pub fn separable_corpus(count: usize, seed: u64, split: Split) -> Dataset {
    Dataset::from_documents(split, &separable_documents(count, seed)).expect("generated spans are aligned")
}

/// Sentences of exactly `n` tokens with random chunks of up to
/// `min(3, max_len)` tokens over `num_chunk_labels` labels named `C1`, `C2`, ...
pub fn timing_documents(sentences: usize, n: usize, num_chunk_labels: usize, max_len: usize, seed: u64) -> Vec<Document> {
    assert!(num_chunk_labels >= 1 && max_len >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let longest = max_len.min(3);
    (0..sentences)
        .map(|_| {
            let words: Vec<String> = (0..n).map(|_| format!("w{}", rng.gen_range(0..200))).collect();
            let mut chunks = Vec::new();
            let mut i = 0;
            while i < n {
                if rng.gen_bool(0.4) {
                    let len = rng.gen_range(1..=longest).min(n - i);
                    let label = format!("C{}", rng.gen_range(1..=num_chunk_labels));
                    chunks.push((i, i + len - 1, label));
                    i += len;
                } else {
                    i += 1;
                }
            }
            assemble(&words, &chunks)
        })
        .collect()
}

pub fn timing_corpus(sentences: usize, n: usize, num_chunk_labels: usize, max_len: usize, seed: u64) -> Dataset {
    Dataset::from_documents(Split::Train, &timing_documents(sentences, n, num_chunk_labels, max_len, seed))
        .expect("generated spans are aligned")
}

/// Moves the start of one span one character into its first token in
/// `round(fraction * messages)` messages that have a span starting on a
/// token of at least two characters. Returns the number of messages changed.
pub fn inject_improper(docs: &mut [Document], fraction: f64, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = (fraction * docs.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.shuffle(&mut rng);
    let mut changed = 0;
    for i in order {
        if changed == target {
            break;
        }
        let doc = &mut docs[i];
        let chars: Vec<char> = doc.text.chars().collect();
        let candidate = doc.spans.iter_mut().find(|s| {
            s.end - s.start >= 2 && chars[s.start].is_alphanumeric() && chars[s.start + 1].is_alphanumeric()
        });
        if let Some(span) = candidate {
            span.start += 1;
            changed += 1;
        }
    }
    changed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::gold_upper_bound;

    #[test]
    fn separable_is_deterministic_and_aligned() {
        let a = separable_documents(50, 4);
        assert_eq!(a, separable_documents(50, 4));
        let ds = Dataset::from_documents(Split::Train, &a).unwrap();
        assert!(ds.instances.iter().all(|i| !i.gold_words.is_empty()));
        assert_eq!(ds.stats().improper, 0);
        assert_eq!(ds.chunk_labels(), ["NP"]);
    }

    #[test]
    fn timing_sentences_have_fixed_length() {
        let ds = timing_corpus(30, 12, 3, 6, 1);
        assert!(ds.instances.iter().all(|i| i.sentence.len() == 12));
        assert!(ds.instances.iter().flat_map(|i| &i.gold_words).all(|s| s.len() <= 3));
        assert!(ds.chunk_labels().len() <= 3);
    }

    #[test]
    fn injection_makes_spans_improper() {
        let mut docs = separable_documents(100, 9);
        assert_eq!(inject_improper(&mut docs, 0.04, 2), 4);
        let ds = Dataset::from_documents(Split::Test, &docs).unwrap();
        assert_eq!(ds.stats().improper, 4);
        assert!(gold_upper_bound(&ds).unwrap().0.f1 < 1.0);
    }
}
