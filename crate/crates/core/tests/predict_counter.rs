//! Kept in its own binary: the template-encoding counter is process-global.

use sner::corpus::{BioMode, Sentence};
use sner::encoder::build_vocabulary;
use sner::synthetic::{default_generator_config, generate_synthetic_ooe_corpus, SplitSizes};
use sner::templates::{template_encode_count, TemplateSet};
use sner::trainer::{predict, TrainConfig, Trainer};

#[test]
fn prediction_encodes_no_templates() {
    let corpus = generate_synthetic_ooe_corpus(&default_generator_config(10, SplitSizes { train: 24, test: 12, dev: 0 }, 2), 2).unwrap();
    let set = TemplateSet::default_set().truncated(2);
    let vocab = build_vocabulary(&corpus.train, Some(&set));
    let cfg = TrainConfig { d: 16, num_layers: 1, num_heads: 2, feedforward_width: 32, d_prime: 4, ..TrainConfig::desk() };
    let mut trainer = Trainer::<f32>::new(cfg, vocab, &corpus.train.label_set, Some(set)).unwrap();
    trainer.run_epoch(&corpus.train, 1).unwrap();
    let after_training = template_encode_count();
    assert!(after_training > 0, "training should have encoded templates");

    let mut sentences = corpus.test.sentences.clone();
    // A sentence made only of unseen tokens still gets a prediction.
    sentences.push(
        Sentence::new("unseen", vec!["Zorblax".into(), "quenched".into(), "Vrill".into()], vec!["O".into(); 3], BioMode::Strict)
            .unwrap(),
    );
    let first = predict(trainer.model(), &sentences).unwrap();
    let second = predict(trainer.model(), &sentences).unwrap();
    assert_eq!(first, second);
    assert_eq!(first.len(), sentences.len());
    assert!(predict(trainer.model(), &[]).unwrap().is_empty());
    assert_eq!(template_encode_count(), after_training, "prediction must not touch the template branch");
}
