mod common;

use common::{random_segmentation, segmentation_to_spans, Case};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use segcrf::corpus::{Dataset, Instance, Split};
use segcrf::eval::evaluate_model;
use segcrf::features::FeatureDictionary;
use segcrf::synth;
use segcrf::text::word_spans_to_char_spans;
use segcrf::training::{train, Objective, TrainConfig};
use segcrf::{Model, ModelKind};

#[test]
fn central_differences_agree_with_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for kind in ModelKind::ALL {
        for _ in 0..5 {
            let case = Case::random(kind, &mut rng, 5, 3, 3);
            let gold = random_segmentation(&mut rng, case.sentence.len(), case.labels.num_segment_labels(), case.config.max_segment_len);
            let spans = segmentation_to_spans(&gold, &case.labels);
            let data = Dataset {
                split: Split::Train,
                instances: vec![Instance {
                    id: "x".into(),
                    sentence: case.sentence.clone(),
                    gold_chars: word_spans_to_char_spans(&case.sentence, &spans),
                    gold_words: spans,
                }],
            };
            let mut dict = FeatureDictionary::new();
            let obj = Objective::compile(&data, kind, &case.labels, &case.config, case.brown.as_ref(), &mut dict, 0.2).unwrap();
            let w = case.random_weights(&mut rng, 1.0);
            let (_, g) = obj.evaluate(&w).unwrap();
            let h = 1e-4;
            for i in 0..w.len() {
                if g[i].abs() <= 1e-6 {
                    continue;
                }
                let mut p = w.clone();
                p[i] += h;
                let mut m = w.clone();
                m[i] -= h;
                let fd = (obj.evaluate(&p).unwrap().0 - obj.evaluate(&m).unwrap().0) / (2.0 * h);
                let rel = (fd - g[i]).abs() / g[i].abs().max(fd.abs());
                assert!(rel < 1e-4, "{kind} {}: {} vs {fd}", dict.names()[i], g[i]);
            }
        }
    }
}

#[test]
fn separable_corpus_is_learned_by_every_model() {
    let train_set = synth::separable_corpus(150, 1, Split::Train);
    let test_set = synth::separable_corpus(60, 2, Split::Test);
    for kind in ModelKind::ALL {
        let config = TrainConfig {
            max_iterations: 100,
            ..TrainConfig::new(kind)
        };
        let model = train(&train_set, &config, None).unwrap();
        let (c, w) = evaluate_model(&model, &test_set).unwrap();
        assert!(c.f1 >= 0.99 && w.f1 >= 0.99, "{kind}: {c:?} {w:?}");
    }
}

#[test]
fn saved_model_predicts_identically() {
    let train_set = synth::separable_corpus(40, 3, Split::Train);
    let test_set = synth::separable_corpus(20, 4, Split::Test);
    let config = TrainConfig {
        max_iterations: 30,
        features: segcrf::features::FeatureConfig::default().with_flags("a,s").unwrap(),
        ..TrainConfig::new(ModelKind::Semi)
    };
    let model = train(&train_set, &config, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    model.save(&path).unwrap();
    let loaded = Model::load(&path).unwrap();
    for inst in &test_set.instances {
        assert_eq!(model.predict(&inst.sentence).unwrap(), loaded.predict(&inst.sentence).unwrap());
    }
    assert_eq!(model.to_bytes(), loaded.to_bytes());
}

#[test]
fn threads_do_not_change_the_model() {
    let train_set = synth::separable_corpus(80, 5, Split::Train);
    let base = TrainConfig {
        max_iterations: 15,
        ..TrainConfig::new(ModelKind::Weak)
    };
    let one = train(&train_set, &base, None).unwrap();
    let four = train(&train_set, &TrainConfig { threads: 4, ..base }, None).unwrap();
    assert_eq!(one.to_bytes(), four.to_bytes());
}
