use approx::assert_relative_eq;

use sner::autograd::Graph;
use sner::corpus::{LabeledSpan, SpanIndex};
use sner::encoder::{Encoder, MockEncoder};
use sner::params::ParamStore;
use sner::templates::{
    contrastive_loss, fill_tokens, pooled_type_embeddings, sentence_contrastive_loss, PooledTypeEmbedding, Template,
    TemplateSet, TypeTag,
};

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn mean_of(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; rows[0].len()];
    for r in rows {
        for (o, x) in out.iter_mut().zip(r) {
            *o += x / rows.len() as f64;
        }
    }
    out
}

/// Sentence embedding of one filled template under the mock encoder, computed by hand.
fn mock_sentence_vector(enc: &MockEncoder, tokens: &[String]) -> Vec<f64> {
    mean_of(&tokens.iter().map(|t| enc.token_vector(t)).collect::<Vec<_>>())
}

#[test]
fn single_template_pool_is_that_template() {
    let enc = MockEncoder::new(6);
    let params = ParamStore::<f64>::new();
    let set = TemplateSet::default_set().truncated(1);
    let span = toks("Milan");
    let got = pooled_type_embeddings(&enc, &params, &set, &span, &[TypeTag::label("LOC")]).unwrap();
    let filled = fill_tokens(&set.templates[0], &span, Some("LOC"), &set.translation).unwrap();
    assert_eq!(filled.join(" "), "Milan is a location entity .");
    let expected = mock_sentence_vector(&enc, &filled);
    for (a, b) in got[0].vector.iter().zip(&expected) {
        assert_relative_eq!(*a, *b, epsilon = 1e-14);
    }
}

#[test]
fn two_templates_pool_to_their_mean() {
    let enc = MockEncoder::new(3)
        .with_vector("X", vec![1.0, 0.0, 0.0])
        .with_vector("first", vec![0.0, 2.0, 0.0])
        .with_vector("second", vec![0.0, 0.0, 4.0])
        .with_vector("place", vec![1.0, 1.0, 1.0]);
    let set = TemplateSet::new(
        vec![Template::new("[SPAN] first [TYPE]", "[SPAN] first").unwrap(), Template::new("[SPAN] second [TYPE]", "[SPAN] second").unwrap()],
        [("LOC".to_string(), "place".to_string())].into_iter().collect(),
    )
    .unwrap();
    let params = ParamStore::<f64>::new();
    let got = pooled_type_embeddings(&enc, &params, &set, &toks("X"), &[TypeTag::label("LOC")]).unwrap();
    // v1 = mean(X, first, place) = (2/3, 1, 1/3); v2 = mean(X, second, place) = (2/3, 1/3, 5/3).
    let expected = [2.0 / 3.0, 2.0 / 3.0, 1.0];
    for (a, b) in got[0].vector.iter().zip(&expected) {
        assert_relative_eq!(*a, *b, epsilon = 1e-15);
    }
}

#[test]
fn default_set_pool_matches_straight_loop() {
    let enc = MockEncoder::new(8);
    let params = ParamStore::<f64>::new();
    let set = TemplateSet::default_set();
    let span = toks("New York");
    for tag in [TypeTag::label("LOC"), TypeTag::label("PER"), TypeTag::NoneEntity] {
        let got = pooled_type_embeddings(&enc, &params, &set, &span, std::slice::from_ref(&tag)).unwrap();
        let label = match &tag {
            TypeTag::Label(l) => Some(l.as_str()),
            TypeTag::NoneEntity => None,
        };
        let mut rows = Vec::new();
        for t in &set.templates {
            let filled = fill_tokens(t, &span, label, &set.translation).unwrap();
            let mut g = Graph::new(&params);
            let h = enc.encode(&mut g, &filled, &mut sner::encoder::Mode::Eval).unwrap();
            let h = g.value(h);
            let mut v = vec![0.0; 8];
            for r in 0..h.rows() {
                for (o, x) in v.iter_mut().zip(h.row(r)) {
                    *o += x / h.rows() as f64;
                }
            }
            rows.push(v);
        }
        assert_eq!(rows.len(), 10);
        let expected = mean_of(&rows);
        for (a, b) in got[0].vector.iter().zip(&expected) {
            assert_relative_eq!(*a, *b, epsilon = 1e-13);
        }
    }
}

#[test]
fn contrastive_hand_values() {
    let p = |v: Vec<f64>| PooledTypeEmbedding { type_tag: TypeTag::label("LOC"), vector: v };
    let n = |v: Vec<f64>| PooledTypeEmbedding { type_tag: TypeTag::NoneEntity, vector: v };
    let e = std::f64::consts::E;
    let v = contrastive_loss(&[1.0, 0.0], &p(vec![1.0, 0.0]), &[n(vec![0.0, 1.0])], 1.0).unwrap().value;
    assert_relative_eq!(v, -(e / (e + 1.0)).ln(), epsilon = 1e-15);
    assert_relative_eq!(v, 0.3133, epsilon = 5e-5);
    let same = contrastive_loss(&[0.3, -0.7], &p(vec![1.0, 2.0]), &[n(vec![1.0, 2.0])], 1.0).unwrap().value;
    assert_relative_eq!(same, 2f64.ln(), epsilon = 1e-15);
    let zero = contrastive_loss(&[0.0, 0.0], &p(vec![1.0, 2.0]), &[n(vec![3.0, 1.0])], 1.0).unwrap();
    assert_eq!(zero.degenerate, 2);
    assert_relative_eq!(zero.value, 2f64.ln(), epsilon = 1e-15);
}

fn labels() -> Vec<String> {
    vec!["LOC".into(), "PER".into()]
}

#[test]
fn sentence_loss_composes_per_span_values() {
    let enc = MockEncoder::new(5);
    let params = ParamStore::<f64>::new();
    let set = TemplateSet::default_set().truncated(3);
    let tokens = toks("Ann lives in Rome now");
    let c = vec![0.2, -0.4, 0.9, 0.1, -0.3];
    let o = |b, e| LabeledSpan::new(SpanIndex::new(b, e), "O");

    // No entity spans: zero.
    let none = sentence_contrastive_loss(&enc, &params, &set, &tokens, &[o(1, 1), o(2, 3)], &labels(), &c, 1.0).unwrap();
    assert_eq!(none, 0.0);

    let per_span = |span: &[String], label: &str| {
        let pos = TypeTag::label(label);
        let other = labels().into_iter().find(|l| l != label).unwrap();
        let tags = [pos, TypeTag::label(other), TypeTag::NoneEntity];
        let pooled = pooled_type_embeddings(&enc, &params, &set, span, &tags).unwrap();
        // |labels| = 2: exactly the wrong type and NONE as negatives.
        assert_eq!(pooled[1..].len(), 2);
        contrastive_loss(&c, &pooled[0], &pooled[1..], 1.0).unwrap().value
    };
    let golds = vec![
        LabeledSpan::new(SpanIndex::new(1, 1), "PER"),
        o(2, 2),
        LabeledSpan::new(SpanIndex::new(4, 4), "LOC"),
    ];
    let got = sentence_contrastive_loss(&enc, &params, &set, &tokens, &golds, &labels(), &c, 1.0).unwrap();
    let expected = (per_span(&toks("Ann"), "PER") + per_span(&toks("Rome"), "LOC")) / 2.0;
    assert_relative_eq!(got, expected, epsilon = 1e-14);

    let single = sentence_contrastive_loss(&enc, &params, &set, &tokens, &golds[..1], &labels(), &c, 1.0).unwrap();
    assert_relative_eq!(single, per_span(&toks("Ann"), "PER"), epsilon = 1e-14);
}
