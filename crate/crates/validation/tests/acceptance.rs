//! Acceptance criteria, one PASS/FAIL/SKIP line each. Exits non-zero when
//! any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::{random_segmentation, segmentation_to_spans, Case};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use segcrf::corpus::{self, Dataset, Instance, Split};
use segcrf::eval::{benchmark_training, evaluate_model, gold_upper_bound};
use segcrf::features::{FeatureConfig, FeatureDictionary};
use segcrf::inference::{complexity_probe, decode_spans, log_partition, viterbi};
use segcrf::synth;
use segcrf::text::word_spans_to_char_spans;
use segcrf::training::{train, Objective, TrainConfig};
use segcrf::ModelKind;
use segcrf_cli::{cmd_ingest, cmd_train, InputFormat, RunConfig};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn within_budget(outcome: Outcome, elapsed: Duration, budget: Option<Duration>) -> Outcome {
    match (outcome, budget) {
        (Outcome::Pass(d), Some(b)) if elapsed > b => {
            Outcome::Fail(format!("{d}; runtime {:.1}s exceeds {:.0}s", elapsed.as_secs_f64(), b.as_secs_f64()))
        }
        (o, _) => o,
    }
}

/// 1. log Z equals brute-force log-sum-exp within 1e-8.
fn partition_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for kind in ModelKind::ALL {
        for _ in 0..200 {
            let case = Case::random(kind, &mut rng, 5, 3, 3);
            let w = case.random_weights(&mut rng, 2.0);
            let dp = log_partition(&case.lattice, &w).unwrap();
            worst = worst.max((dp - case.log_z(&w)).abs());
        }
    }
    verdict(worst < 1e-8, format!("max |log Z - brute| = {worst:.2e} over 3x200 instances"))
}

fn single(case: &Case, gold: &common::Segmentation) -> Dataset {
    let spans = segmentation_to_spans(gold, &case.labels);
    Dataset {
        split: Split::Train,
        instances: vec![Instance {
            id: "0".into(),
            sentence: case.sentence.clone(),
            gold_chars: word_spans_to_char_spans(&case.sentence, &spans),
            gold_words: spans,
        }],
    }
}

/// 2. Analytic gradient against central differences.
fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for kind in ModelKind::ALL {
        for _ in 0..20 {
            let case = Case::random(kind, &mut rng, 5, 3, 3);
            let gold = random_segmentation(&mut rng, case.sentence.len(), case.labels.num_segment_labels(), case.config.max_segment_len);
            let data = single(&case, &gold);
            let mut dict = FeatureDictionary::new();
            let obj = Objective::compile(&data, kind, &case.labels, &case.config, case.brown.as_ref(), &mut dict, 0.5).unwrap();
            let w = case.random_weights(&mut rng, 1.0);
            let (_, g) = obj.evaluate(&w).unwrap();
            for i in 0..w.len() {
                if g[i].abs() <= 1e-6 {
                    continue;
                }
                let mut plus = w.clone();
                plus[i] += h;
                let mut minus = w.clone();
                minus[i] -= h;
                let fd = (obj.evaluate(&plus).unwrap().0 - obj.evaluate(&minus).unwrap().0) / (2.0 * h);
                worst = worst.max((fd - g[i]).abs() / g[i].abs().max(fd.abs()));
                checked += 1;
            }
        }
    }
    verdict(worst < 1e-4, format!("max relative error {worst:.2e} over {checked} coordinates, 3x20 instances"))
}

/// 3. Viterbi against exhaustive argmax; ties within 1e-9 accept any tied labeling.
fn viterbi_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    let mut worst: f64 = 0.0;
    for kind in ModelKind::ALL {
        for _ in 0..200 {
            let case = Case::random(kind, &mut rng, 5, 3, 3);
            let w = case.random_weights(&mut rng, 2.0);
            let decoded = viterbi(&case.lattice, &w).unwrap();
            let (best, ties) = case.argmax(&w, 1e-9);
            worst = worst.max((decoded.score - best).abs());
            let spans = case.lattice.path_to_spans(&decoded.path, &case.labels);
            if !ties.iter().any(|t| segmentation_to_spans(t, &case.labels) == spans) {
                mismatches += 1;
            }
        }
    }
    verdict(
        mismatches == 0 && worst <= 1e-9,
        format!("{mismatches} mismatched labelings, max score gap {worst:.2e} over 3x200 instances"),
    )
}

/// 4. Semi and weak agree once transition weights are zero.
fn semi_weak_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut differing = 0;
    for _ in 0..100 {
        let semi = Case::random(ModelKind::Semi, &mut rng, 5, 3, 3);
        let weak = Case::new(ModelKind::Weak, semi.sentence.clone(), semi.labels.clone(), semi.config.clone(), semi.brown.clone());
        let mut w = semi.random_weights(&mut rng, 2.0);
        for (i, name) in semi.dict.names().iter().enumerate() {
            if name.starts_with("TR=") {
                w[i] = 0.0;
            }
        }
        let weak_w: Vec<f64> = weak.dict.names().iter().map(|n| semi.dict.get(n).map_or(0.0, |i| w[i as usize])).collect();
        let zs = log_partition(&semi.lattice, &w).unwrap();
        let zw = log_partition(&weak.lattice, &weak_w).unwrap();
        worst = worst.max((zs - zw).abs());
        if decode_spans(&semi.lattice, &w, &semi.labels).unwrap().0 != decode_spans(&weak.lattice, &weak_w, &weak.labels).unwrap().0 {
            differing += 1;
        }
    }
    verdict(
        worst <= 1e-8 && differing == 0,
        format!("max |log Z diff| {worst:.2e}, {differing} differing decodes over 100 instances"),
    )
}

/// 5. Weak has fewer edges than semi, and the ratio grows with the label count.
fn edge_counts() -> Outcome {
    let mut violations = Vec::new();
    let mut ratios = Vec::new();
    for n in [5, 20] {
        for max_len in [2, 6] {
            let mut prev = 0.0;
            let mut row = Vec::new();
            for y in [2, 4, 8, 16] {
                let semi = complexity_probe(ModelKind::Semi, n, max_len, y).unwrap();
                let weak = complexity_probe(ModelKind::Weak, n, max_len, y).unwrap();
                let ratio = semi as f64 / weak as f64;
                if weak >= semi {
                    violations.push(format!("n={n} L={max_len} |Y|={y}: weak {weak} >= semi {semi}"));
                }
                if ratio <= prev {
                    violations.push(format!("n={n} L={max_len}: ratio not increasing at |Y|={y}"));
                }
                prev = ratio;
                row.push(format!("{ratio:.3}"));
            }
            ratios.push(format!("n={n},L={max_len}:[{}]", row.join(" ")));
        }
    }
    let detail = format!("semi/weak ratios {}", ratios.join(" "));
    if violations.is_empty() {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(format!("{detail}; violations: {}", violations.join("; ")))
    }
}

/// 6. Per-iteration time: weak below semi at |Y| = 2, larger speedup at |Y| = 8.
fn timing() -> Outcome {
    let features = FeatureConfig::default();
    let models = [ModelKind::Semi, ModelKind::Weak];
    let speedup = |chunk_labels: usize| {
        let data = synth::timing_corpus(2000, 20, chunk_labels, features.max_segment_len, 6);
        benchmark_training(&data, &models, &features, 5, 1).unwrap()
    };
    let two = speedup(1);
    let eight = speedup(7);
    let mean = |r: &segcrf::eval::BenchReport, k| r.timing(k).unwrap().mean;
    let s2 = two.speedup.unwrap();
    let s8 = eight.speedup.unwrap();
    verdict(
        mean(&two, ModelKind::Weak) < mean(&two, ModelKind::Semi) && s8 > s2,
        format!(
            "|Y|=2: semi {:.4}s weak {:.4}s (x{s2:.3}); |Y|=8: semi {:.4}s weak {:.4}s (x{s8:.3}); 2000 sentences of 20 tokens, L=6",
            mean(&two, ModelKind::Semi),
            mean(&two, ModelKind::Weak),
            mean(&eight, ModelKind::Semi),
            mean(&eight, ModelKind::Weak)
        ),
    )
}

/// 7. Separable corpus learned by all models within 100 iterations.
fn learning_sanity() -> Outcome {
    let train_set = synth::separable_corpus(300, 71, Split::Train);
    let test_set = synth::separable_corpus(200, 72, Split::Test);
    let mut f1 = Vec::new();
    for kind in ModelKind::ALL {
        let config = TrainConfig {
            max_iterations: 100,
            ..TrainConfig::new(kind)
        };
        let model = train(&train_set, &config, None).unwrap();
        let (c, _) = evaluate_model(&model, &test_set).unwrap();
        f1.push((kind, c.f1, model.meta.iterations));
    }
    let linear = f1[0].1;
    let ok = f1.iter().all(|(_, f, it)| *f >= 0.99 && *it <= 100) && f1[1..].iter().all(|(_, f, _)| *f >= linear - 0.005);
    let detail = f1
        .iter()
        .map(|(k, f, it)| format!("{k} F1={f:.4} ({it} iters)"))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(ok, format!("held-out {detail}"))
}

/// 8. Gold upper bound is exactly 1 on aligned data, below 1 with 4% improper messages.
fn conversion_boundary() -> Outcome {
    let mut docs = synth::separable_documents(500, 81);
    let aligned = gold_upper_bound(&Dataset::from_documents(Split::Test, &docs).unwrap()).unwrap();
    let changed = synth::inject_improper(&mut docs, 0.04, 82);
    let noisy = gold_upper_bound(&Dataset::from_documents(Split::Test, &docs).unwrap()).unwrap();
    verdict(
        aligned.0.f1 == 1.0 && aligned.1.f1 == 1.0 && noisy.0.f1 < 1.0 && changed == 20,
        format!(
            "aligned char F1 = {}, with {changed}/500 improper messages char F1 = {:.4} (word F1 {})",
            aligned.0.f1, noisy.0.f1, noisy.1.f1
        ),
    )
}

/// 9. Identical training runs write identical model files.
fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let train_path = dir.path().join("train.jsonl");
    corpus::write_jsonl(&train_path, &synth::separable_documents(120, 91)).unwrap();
    let mut identical = true;
    let mut sizes = Vec::new();
    for kind in ModelKind::ALL {
        let run = |name: &str, threads: usize| {
            let out = dir.path().join(name);
            let config = RunConfig {
                train: Some(train_path.clone()),
                out: Some(out.clone()),
                model: kind,
                features: FeatureConfig::default().with_flags("a,s").unwrap(),
                threads,
                ..RunConfig::default()
            };
            cmd_train(&config, &mut std::io::sink()).unwrap();
            std::fs::read(out).unwrap()
        };
        let a = run(&format!("{kind}-a.bin"), 1);
        let b = run(&format!("{kind}-b.bin"), 1);
        let c = run(&format!("{kind}-c.bin"), 3);
        identical &= a == b && a == c;
        sizes.push(format!("{kind} {} bytes", a.len()));
    }
    verdict(identical, format!("repeat and 3-thread runs byte-identical: {identical} ({})", sizes.join(", ")))
}

/// 10. Corpus statistics and gold bound, when the original corpus is available.
fn original_corpus() -> Outcome {
    let Some(dir) = std::env::var_os("SEGCRF_CORPUS_DIR").map(PathBuf::from) else {
        return Outcome::Skip("SEGCRF_CORPUS_DIR not set; the original corpus is not shipped".into());
    };
    let out = tempfile::tempdir().unwrap();
    let dataset_path = out.path().join("all.jsonl");
    let format = if dir.is_dir() { InputFormat::Brat } else { InputFormat::Jsonl };
    let stats = match cmd_ingest(&dir, format, &dataset_path) {
        Ok(s) => s,
        Err(e) => return Outcome::Fail(format!("ingest failed: {e}")),
    };
    let dataset = Dataset::load_jsonl(&dataset_path, Split::Test).unwrap();
    let (gold, _) = gold_upper_bound(&dataset).unwrap();
    let expected = (26_500, 76_490, 3_066, 359_009);
    let counts = (stats.messages, stats.spans, stats.improper, stats.tokens);
    let close = |a: f64, b: f64| (100.0 * a - b).abs() <= 0.05;
    verdict(
        counts == expected && close(gold.precision, 95.96) && close(gold.recall, 95.81) && close(gold.f1, 95.88),
        format!(
            "counts {counts:?} (expected {expected:?}); gold char P/R/F {:.2}/{:.2}/{:.2}",
            100.0 * gold.precision,
            100.0 * gold.recall,
            100.0 * gold.f1
        ),
    )
}

/// Name, check, and wall-clock budget in seconds.
type Criterion = (&'static str, fn() -> Outcome, Option<u64>);

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [Criterion; 10] = [
        ("partition-function oracle", partition_oracle, Some(30)),
        ("gradient check", gradient_check, Some(60)),
        ("viterbi oracle", viterbi_oracle, Some(30)),
        ("semi/weak equivalence without transitions", semi_weak_equivalence, None),
        ("edge-count claim", edge_counts, None),
        ("timing claim", timing, Some(600)),
        ("learning sanity", learning_sanity, None),
        ("conversion losslessness boundary", conversion_boundary, None),
        ("determinism", determinism, None),
        ("original corpus statistics", original_corpus, None),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = check();
        let elapsed = started.elapsed();
        let outcome = within_budget(outcome, elapsed, budget.map(Duration::from_secs));
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag} [{}] {name}: {detail} ({:.1}s)", i + 1, elapsed.as_secs_f64());
    }
    println!("acceptance: {} of {} criteria failed", failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
