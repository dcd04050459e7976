use sner::checkpoint::{load_history, Checkpoint, CheckpointMeta, PARAMS_FILE, VOCAB_FILE};
use sner::encoder::{build_vocabulary, Vocabulary};
use sner::synthetic::{default_generator_config, generate_synthetic_ooe_corpus, SplitSizes};
use sner::templates::TemplateSet;
use sner::trainer::{predict, train, TrainConfig};
use sner::{Error, Scalar};

fn tiny_config() -> TrainConfig {
    TrainConfig { epochs: 2, d: 16, num_layers: 1, num_heads: 2, feedforward_width: 32, d_prime: 4, ..TrainConfig::desk() }
}

fn trained<T: Scalar>(dir: &std::path::Path) -> (Checkpoint<T>, sner::synthetic::SyntheticCorpus) {
    let corpus = generate_synthetic_ooe_corpus(&default_generator_config(10, SplitSizes { train: 30, test: 10, dev: 10 }, 1), 1).unwrap();
    let set = TemplateSet::default_set().truncated(2);
    let vocab = build_vocabulary(&corpus.train, Some(&set));
    let cfg = tiny_config();
    let out = train::<T>(&corpus.train, &corpus.dev, Some(&set), vocab, &cfg).unwrap();
    let meta = CheckpointMeta {
        config: cfg,
        entity_types: out.model.head().entity_types().to_vec(),
        epoch: out.best_epoch,
        best_dev_f1: out.best_dev_f1,
    };
    let ckpt = Checkpoint { model: out.model, meta };
    ckpt.save(dir, &out.history).unwrap();
    assert_eq!(load_history(dir).unwrap(), out.history);
    (ckpt, corpus)
}

fn round_trip<T: Scalar>() {
    let dir = tempfile::tempdir().unwrap();
    let (ckpt, corpus) = trained::<T>(dir.path());
    let back = Checkpoint::<T>::load(dir.path()).unwrap();
    assert_eq!(back.meta, ckpt.meta);
    for s in &corpus.test.sentences {
        let a = ckpt.model.span_scores(&s.tokens).unwrap();
        let b = back.model.span_scores(&s.tokens).unwrap();
        assert_eq!(a.len(), b.len());
        for ((sa, va), (sb, vb)) in a.iter().zip(&b) {
            assert_eq!(sa, sb);
            assert!(va.iter().zip(vb).all(|(x, y)| x.to_f64_lossy().to_bits() == y.to_f64_lossy().to_bits()));
        }
    }
    assert_eq!(predict(&ckpt.model, &corpus.test.sentences).unwrap(), predict(&back.model, &corpus.test.sentences).unwrap());
}

#[test]
fn reload_is_bit_exact_f32() {
    round_trip::<f32>();
}

#[test]
fn reload_is_bit_exact_f64() {
    round_trip::<f64>();
}

#[test]
fn foreign_vocabulary_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    trained::<f32>(dir.path());
    let other = Vocabulary::from_parts(["some", "other", "words"], []);
    match Checkpoint::<f32>::load_with_vocab(dir.path(), other) {
        Err(Error::VocabMismatch { .. }) => {}
        other => panic!("expected a vocabulary mismatch, got {other:?}"),
    }
}

#[test]
fn damaged_files_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    trained::<f32>(dir.path());
    std::fs::write(dir.path().join(VOCAB_FILE), "not json").unwrap();
    assert!(matches!(Checkpoint::<f32>::load(dir.path()), Err(Error::Checkpoint(_))));

    let dir = tempfile::tempdir().unwrap();
    trained::<f32>(dir.path());
    let path = dir.path().join(PARAMS_FILE);
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    v["params"][0]["rows"] = serde_json::json!(999);
    std::fs::write(&path, v.to_string()).unwrap();
    assert!(matches!(Checkpoint::<f32>::load(dir.path()), Err(Error::Checkpoint(_))));
}
