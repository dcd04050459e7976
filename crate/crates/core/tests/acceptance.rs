//! Acceptance suite. Each test prints one `PASS`/`FAIL` line to the real stderr
//! (bypassing libtest capture) and then asserts.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use sner::autograd::Graph;
use sner::corpus::{enumerate_spans, BioMode, Dataset, LabeledSpan, Sentence, SpanIndex};
use sner::encoder::{build_vocabulary, Mode};
use sner::inference::{decode, micro_f1, PredictedSpan, Prediction};
use sner::model::SpanNer;
use sner::ooe::{compute_ooe_rate, repartition, PartitionSpec};
use sner::span_model::{SpanHead, SpanHeadConfig};
use sner::synthetic::{default_generator_config, generate_synthetic_ooe_corpus, SplitSizes};
use sner::templates::{contrastive_loss, PooledTypeEmbedding, TemplateSet, TypeTag};
use sner::trainer::{sentence_objective, TrainConfig, Trainer};

fn report(n: usize, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr();
    let _ = writeln!(err, "[acceptance] criterion {n} ({name}): {verdict} :: {detail}");
}

fn sentence(id: &str, pairs: &[(&str, &str)]) -> Sentence {
    Sentence::new(
        id,
        pairs.iter().map(|p| p.0.to_string()).collect(),
        pairs.iter().map(|p| p.1.to_string()).collect(),
        BioMode::Strict,
    )
    .unwrap()
}

// ---------------------------------------------------------------- criterion 1

#[test]
fn criterion_1_gradient_check() {
    let start = Instant::now();
    let train = Dataset::new(vec![
        sentence("a", &[("Paris", "B-LOC"), ("is", "O"), ("near", "O"), ("Bob", "B-PER"), ("Smith", "I-PER"), (".", "O")]),
        sentence("b", &[("we", "O"), ("met", "O"), ("Ann", "B-PER"), ("in", "O"), ("Rome", "B-LOC")]),
    ])
    .unwrap();
    let set = TemplateSet::default_set().truncated(2);
    let vocab = build_vocabulary(&train, Some(&set));
    let cfg = TrainConfig {
        d: 16,
        num_layers: 2,
        num_heads: 2,
        feedforward_width: 24,
        d_prime: 4,
        max_tokens: 16,
        lambda_weight: 0.1,
        ..TrainConfig::default()
    };
    let mut model = SpanNer::<f64>::new(cfg.encoder_config(), cfg.head_config(), vocab, &train.label_set).unwrap();
    assert_eq!(model.labels().len(), 3);

    let objective = |m: &SpanNer<f64>, grads: bool| {
        let mut g = Graph::new(m.params());
        let mut roots = Vec::new();
        for s in &train.sentences {
            let (root, _) = sentence_objective(m, &mut g, s, &s.tokens, Some(&set), &cfg, &mut Mode::Eval, &mut Mode::Eval)
                .unwrap()
                .unwrap();
            roots.push(root);
        }
        let total = g.add(roots[0], roots[1]);
        (g.scalar(total), grads.then(|| g.backward(total)))
    };

    let (_, analytic) = objective(&model, true);
    let analytic = analytic.unwrap();
    let h = 1e-5;
    let floor = 1e-6;
    let (mut worst, mut worst_at, mut checked) = (0.0f64, String::new(), 0usize);
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        for k in 0..model.params().get(id).len() {
            let orig = model.params().get(id).data()[k];
            model.params_mut().get_mut(id).data_mut()[k] = orig + h;
            let (plus, _) = objective(&model, false);
            model.params_mut().get_mut(id).data_mut()[k] = orig - h;
            let (minus, _) = objective(&model, false);
            model.params_mut().get_mut(id).data_mut()[k] = orig;
            let fd = (plus - minus) / (2.0 * h);
            let a = analytic.get(id).map_or(0.0, |t| t.data()[k]);
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(floor);
            if rel > worst {
                worst = rel;
                worst_at = format!("{}[{k}] analytic {a:e} fd {fd:e}", model.params().param(id).name);
            }
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = worst < 1e-4 && elapsed < Duration::from_secs(60);
    report(
        1,
        "gradient check",
        pass,
        &format!("{checked} scalars, max rel err {worst:.2e} at {worst_at}, {:.1}s", elapsed.as_secs_f64()),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 2

/// Softmax cross-entropy written out term by term.
fn naive_ce(scores: &[f64], target: usize) -> f64 {
    let mut z = 0.0;
    for s in scores {
        z += s.exp();
    }
    -(scores[target].exp() / z).ln()
}

fn naive_cos(a: &[f64], b: &[f64]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    ab / (aa.sqrt() * bb.sqrt())
}

fn naive_info_nce(c: &[f64], pos: &[f64], negs: &[Vec<f64>], tau: f64) -> f64 {
    let num = (naive_cos(c, pos) / tau).exp();
    let mut den = num;
    for n in negs {
        den += (naive_cos(c, n) / tau).exp();
    }
    -(num / den).ln()
}

#[test]
fn criterion_2_loss_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_l1 = 0.0f64;
    let mut worst_l2 = 0.0f64;
    for _ in 0..100 {
        // L1: mean CE over the spans of one sentence.
        let n_labels = rng.gen_range(2..=6);
        let labels: Vec<String> = (0..n_labels - 1).map(|i| format!("T{i}")).chain(["O".to_string()]).collect();
        let spans = enumerate_spans(rng.gen_range(1..=6), 4);
        let scores: Vec<Vec<f64>> = spans.iter().map(|_| (0..n_labels).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
        let targets: Vec<usize> = spans.iter().map(|_| rng.gen_range(0..n_labels)).collect();
        let golds: Vec<LabeledSpan> =
            spans.iter().zip(&targets).map(|(s, &t)| LabeledSpan::new(*s, labels[t].clone())).collect();
        let oracle = scores.iter().zip(&targets).map(|(s, &t)| naive_ce(s, t)).sum::<f64>() / spans.len() as f64;

        let summed = sner::span_model::span_loss(&scores, &golds, &labels).unwrap() / spans.len() as f64;
        let mut store = sner::params::ParamStore::<f64>::new();
        let head = SpanHead::new(4, SpanHeadConfig::default(), &labels[..n_labels - 1], &mut store, &mut rng).unwrap();
        assert_eq!(head.labels(), &labels[..]);
        let mut g = Graph::new(&store);
        let flat: Vec<f64> = scores.iter().flatten().copied().collect();
        let logits = g.constant(sner::tensor::Tensor::from_vec(spans.len(), n_labels, flat));
        let node = head.loss(&mut g, logits, &golds).unwrap();
        worst_l1 = worst_l1.max((summed - oracle).abs()).max((g.scalar(node) - oracle).abs());

        // L2: InfoNCE of one anchor against a positive and 1..5 negatives.
        let d = rng.gen_range(2..=8);
        let vec = |rng: &mut ChaCha8Rng| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<f64>>();
        let c = vec(&mut rng);
        let pos = vec(&mut rng);
        let negs: Vec<Vec<f64>> = (0..rng.gen_range(1..=5)).map(|_| vec(&mut rng)).collect();
        let tau = rng.gen_range(0.25..2.0);
        let oracle = naive_info_nce(&c, &pos, &negs, tau);
        let wrap = |v: &Vec<f64>| PooledTypeEmbedding { type_tag: TypeTag::NoneEntity, vector: v.clone() };
        let negs_w: Vec<_> = negs.iter().map(wrap).collect();
        let got = contrastive_loss(&c, &wrap(&pos), &negs_w, tau).unwrap().value;
        worst_l2 = worst_l2.max((got - oracle).abs());
    }
    let hand = contrastive_loss(
        &[1.0, 0.0],
        &PooledTypeEmbedding { type_tag: TypeTag::label("LOC"), vector: vec![1.0, 0.0] },
        &[PooledTypeEmbedding { type_tag: TypeTag::NoneEntity, vector: vec![0.0, 1.0] }],
        1.0f64,
    )
    .unwrap()
    .value;
    let e = std::f64::consts::E;
    let hand_expected = -(e / (e + 1.0)).ln();
    let pass = worst_l1 <= 1e-12 && worst_l2 <= 1e-12 && (hand - hand_expected).abs() <= 1e-12 && (hand - 0.3133).abs() < 5e-5;
    report(
        2,
        "loss oracles",
        pass,
        &format!("100 instances, max |L1 err| {worst_l1:.1e}, max |L2 err| {worst_l2:.1e}, hand value {hand:.6}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 3

fn small_corpus(train: usize, seed: u64) -> sner::synthetic::SyntheticCorpus {
    let cfg = default_generator_config(20, SplitSizes { train, test: 20, dev: 20 }, seed);
    generate_synthetic_ooe_corpus(&cfg, seed).unwrap()
}

fn isolation_run<T: sner::Scalar>() -> (bool, String) {
    let corpus = small_corpus(60, 3);
    let set = TemplateSet::default_set().truncated(2);
    let vocab = build_vocabulary(&corpus.train, Some(&set));
    let cfg = TrainConfig {
        lambda_weight: 0.0,
        batch_size: 4,
        seed: 5,
        d: 16,
        num_layers: 1,
        num_heads: 2,
        feedforward_width: 32,
        unk_replace_prob: 0.2,
        ..TrainConfig::desk()
    };
    let types = &corpus.train.label_set;
    let mut with = Trainer::<T>::new(cfg.clone(), vocab.clone(), types, Some(set)).unwrap();
    let mut without = Trainer::<T>::new(cfg, vocab, types, None).unwrap();
    let (mut steps, mut epoch, mut l2_seen) = (0, 0, 0.0f64);
    while steps < 50 {
        epoch += 1;
        let order = with.epoch_order(epoch, corpus.train.len());
        for batch in order.chunks(4) {
            if steps == 50 {
                break;
            }
            let a = with.train_step(&corpus.train, batch, epoch).unwrap();
            let b = without.train_step(&corpus.train, batch, epoch).unwrap();
            l2_seen = l2_seen.max(a.loss.l2);
            steps += 1;
            if a.loss.l1.to_bits() != b.loss.l1.to_bits() || a.grad_norm.to_bits() != b.grad_norm.to_bits() {
                return (false, format!("loss or gradient norm diverged at step {steps}"));
            }
            for ((_, p), (_, q)) in with.model().params().iter().zip(without.model().params().iter()) {
                let same = p.value.data().iter().zip(q.value.data()).all(|(x, y)| x.to_f64_lossy().to_bits() == y.to_f64_lossy().to_bits());
                if !same {
                    return (false, format!("`{}` diverged at step {steps}", p.name));
                }
            }
        }
    }
    // The λ=0 run must really have evaluated the contrastive branch.
    (l2_seen > 0.0, format!("{steps} steps bit-identical, max L2 computed under λ=0: {l2_seen:.4}"))
}

#[test]
fn criterion_3_lambda_isolation() {
    let (p32, d32) = isolation_run::<f32>();
    let (p64, d64) = isolation_run::<f64>();
    let pass = p32 && p64;
    report(3, "λ-isolation", pass, &format!("f32: {d32}; f64: {d64}"));
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 4

fn softmax_prob(scores: &[f64], k: usize) -> f64 {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
    (scores[k] - m).exp() / z
}

/// Repeatedly take the global best candidate and discard everything that overlaps it.
fn brute_force(table: &[(SpanIndex, Vec<f64>)], labels: &[String]) -> Vec<(SpanIndex, String)> {
    let outside = labels.len() - 1;
    let mut live: Vec<(SpanIndex, usize, f64)> = table
        .iter()
        .filter_map(|(s, v)| {
            let mut best = 0;
            for k in 1..v.len() {
                if v[k] > v[best] {
                    best = k;
                }
            }
            (best != outside).then(|| (*s, best, softmax_prob(v, best)))
        })
        .collect();
    let mut kept = Vec::new();
    while !live.is_empty() {
        let mut top = 0;
        for i in 1..live.len() {
            let (a, b) = (&live[i], &live[top]);
            let better = a.2 > b.2
                || (a.2 == b.2 && (a.0.begin < b.0.begin || (a.0.begin == b.0.begin && a.0.end < b.0.end)));
            if better {
                top = i;
            }
        }
        let (span, label, _) = live[top];
        kept.push((span, labels[label].clone()));
        live.retain(|(s, _, _)| s.end < span.begin || s.begin > span.end);
    }
    kept.sort();
    kept
}

#[test]
fn criterion_4_decode_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut mismatches, mut overlaps, mut kept_total) = (0, 0, 0);
    for _ in 0..1000 {
        let n_labels = rng.gen_range(2..=5);
        let labels: Vec<String> = (0..n_labels - 1).map(|i| format!("T{i}")).chain(["O".to_string()]).collect();
        let mut spans = enumerate_spans(rng.gen_range(1..=8), 4);
        spans.shuffle(&mut rng);
        spans.truncate(rng.gen_range(1..=12));
        // A small palette of score vectors makes exact probability ties common.
        let palette: Vec<Vec<f64>> =
            (0..rng.gen_range(1..=4)).map(|_| (0..n_labels).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let table: Vec<(SpanIndex, Vec<f64>)> = spans
            .iter()
            .map(|s| {
                let v = if rng.gen_bool(0.7) {
                    palette.choose(&mut rng).unwrap().clone()
                } else {
                    (0..n_labels).map(|_| rng.gen_range(-3.0..3.0)).collect()
                };
                (*s, v)
            })
            .collect();
        let pred = decode("s", &table, &labels);
        let mut got: Vec<(SpanIndex, String)> = pred.spans.iter().map(|p| (p.span, p.label.clone())).collect();
        got.sort();
        if got != brute_force(&table, &labels) {
            mismatches += 1;
        }
        for (i, a) in pred.spans.iter().enumerate() {
            for b in &pred.spans[i + 1..] {
                if a.span.overlaps(&b.span) {
                    overlaps += 1;
                }
            }
        }
        kept_total += got.len();
    }
    let pass = mismatches == 0 && overlaps == 0;
    report(
        4,
        "decode equivalence",
        pass,
        &format!("1000 tables, {mismatches} mismatches, {overlaps} overlapping pairs, {kept_total} spans kept"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 5

#[test]
fn criterion_5_enumeration_and_metric_oracles() {
    let mut enum_ok = true;
    for n in 0..=10usize {
        for max in 1..=4usize {
            let spans = enumerate_spans(n, max);
            let closed: usize = (1..=n).map(|i| max.min(n - i + 1)).sum();
            let mut brute = Vec::new();
            for b in 1..=n {
                for e in b..=n {
                    if e - b < max {
                        brute.push(SpanIndex::new(b, e));
                    }
                }
            }
            enum_ok &= spans.len() == closed && spans == brute;
        }
    }

    let gold = Dataset::new(vec![sentence("s1", &[("Milan", "B-LOC"), ("Bob", "O"), ("Ray", "O")])]).unwrap();
    let preds = vec![Prediction {
        sentence_id: "s1".into(),
        spans: vec![
            PredictedSpan { span: SpanIndex::new(1, 1), label: "LOC".into(), score: 0.9 },
            PredictedSpan { span: SpanIndex::new(2, 3), label: "PER".into(), score: 0.8 },
        ],
    }];
    let s = micro_f1(&preds, &gold).unwrap().overall;
    let f1_ok = s.precision == 0.5 && s.recall == 1.0 && (s.micro_f1 - 2.0 / 3.0).abs() < 1e-15;

    let train = Dataset::new(vec![sentence("t", &[("Paris", "B-LOC"), ("is", "O"), ("nice", "O")])]).unwrap();
    let test = Dataset::new(vec![
        sentence("u", &[("Paris", "B-LOC"), ("is", "O"), ("big", "O")]),
        sentence("v", &[("New", "B-LOC"), ("York", "I-LOC"), ("is", "O"), ("nice", "O")]),
    ])
    .unwrap();
    let hand_rate = compute_ooe_rate(&train, &test).ooe_rate;
    let synth = generate_synthetic_ooe_corpus(
        &default_generator_config(40, SplitSizes { train: 500, test: 200, dev: 200 }, 11),
        11,
    )
    .unwrap();
    let synth_rate = compute_ooe_rate(&synth.train, &synth.test).ooe_rate;

    let pass = enum_ok && f1_ok && hand_rate == 0.5 && synth_rate == 1.0;
    report(
        5,
        "enumeration and metric oracles",
        pass,
        &format!(
            "enumeration n≤10 {}, P={} R={} F1={:.6}, hand OOE {hand_rate}, synthetic OOE {synth_rate}",
            if enum_ok { "ok" } else { "wrong" },
            s.precision,
            s.recall,
            s.micro_f1
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criteria 6 and 7

const TREND_SEEDS: u64 = 5;

fn trend_corpus() -> sner::synthetic::SyntheticCorpus {
    let cfg = default_generator_config(40, SplitSizes { train: 500, test: 200, dev: 200 }, 11);
    generate_synthetic_ooe_corpus(&cfg, 11).unwrap()
}

/// Trains one desk-scale model and returns its test micro-F1.
fn desk_f1(train: &Dataset, dev: &Dataset, test: &Dataset, templates: Option<&TemplateSet>, cfg: &TrainConfig) -> f64 {
    let vocab = build_vocabulary(train, templates);
    let out = sner::trainer::train::<f32>(train, dev, templates, vocab, cfg).unwrap();
    let preds = sner::trainer::predict(&out.model, &test.sentences).unwrap();
    micro_f1(&preds, test).unwrap().overall.micro_f1
}

#[test]
fn criterion_6_ablation_trend() {
    let start = Instant::now();
    let corpus = trend_corpus();
    assert_eq!(corpus.manifest.test_ooe_rate, 1.0);
    assert!(corpus.train.label_set.len() >= 3);
    let set = TemplateSet::default_set();
    let desk = TrainConfig::desk();
    let mut means = Vec::new();
    for (use_context, lambda_weight, templates) in [(false, 0.0, None), (true, 0.0, None), (true, desk.lambda_weight, Some(&set))] {
        let scores: Vec<f64> = (0..TREND_SEEDS)
            .map(|seed| {
                let cfg = TrainConfig { use_context, lambda_weight, seed, ..desk.clone() };
                desk_f1(&corpus.train, &corpus.dev, &corpus.test, templates, &cfg)
            })
            .collect();
        means.push((scores.iter().sum::<f64>() / scores.len() as f64, scores));
    }
    let elapsed = start.elapsed();
    let (b, c, f) = (means[0].0, means[1].0, means[2].0);
    let pass = b <= c && c < f && elapsed <= Duration::from_secs(30 * 60);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    report(
        6,
        "ablation trend",
        pass,
        &format!(
            "mean test F1 backbone {b:.4} [{}], +context {c:.4} [{}], full {f:.4} [{}]; {:.0} s",
            fmt(&means[0].1),
            fmt(&means[1].1),
            fmt(&means[2].1),
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

/// Splits off the last `fraction` of a seeded shuffle as a development set.
fn carve_dev(train: &Dataset, fraction: f64, seed: u64) -> (Dataset, Dataset) {
    let mut sentences = train.sentences.clone();
    sentences.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = sentences.len() - (sentences.len() as f64 * fraction).round() as usize;
    let dev = sentences.split_off(cut);
    let labels = train.label_set.clone();
    (Dataset::with_labels(sentences, labels.clone()).unwrap(), Dataset::with_labels(dev, labels).unwrap())
}

#[test]
fn criterion_7_repartition_convergence() {
    let corpus = trend_corpus();
    let merged = Dataset::concat(&[&corpus.train, &corpus.dev, &corpus.test]).unwrap();
    let set = TemplateSet::default_set();
    let split_fraction = 0.3;
    let mut pass = true;
    let mut details = Vec::new();
    let mut f1s = Vec::new();
    for target in [0.2, 0.5, 0.8] {
        let spec = PartitionSpec::new(target, split_fraction, 7);
        let start = Instant::now();
        let p = repartition(&merged, &spec).unwrap();
        let elapsed = start.elapsed();
        let again = repartition(&merged, &spec).unwrap();
        let realized = compute_ooe_rate(&p.train, &p.test).ooe_rate;
        let expected_test = merged.len() as f64 * split_fraction;
        let size_ok = (p.test.len() as f64 - expected_test).abs() <= 0.05 * expected_test;
        let same = again.test.sentences == p.test.sentences && again.train.sentences == p.train.sentences;
        let ok = p.converged && (realized - target).abs() <= 0.02 && size_ok && same && elapsed <= Duration::from_secs(120);
        pass &= ok;

        let (train, dev) = carve_dev(&p.train, 0.15, 7);
        let f1 = (0..TREND_SEEDS)
            .map(|seed| desk_f1(&train, &dev, &p.test, Some(&set), &TrainConfig { seed, ..TrainConfig::desk() }))
            .sum::<f64>()
            / TREND_SEEDS as f64;
        f1s.push(f1);
        details.push(format!(
            "target {target}: realized {realized:.4}, test {} sentences, {} iterations, {:.1} s, reproducible {same}, mean F1 {f1:.4}",
            p.test.len(),
            p.iterations,
            elapsed.as_secs_f64()
        ));
    }
    let monotone = f1s.windows(2).all(|w| w[1] <= w[0]);
    pass &= monotone;
    report(7, "repartition convergence", pass, &format!("{}; F1 non-increasing {monotone}", details.join("; ")));
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 8

#[test]
fn criterion_8_hyperparameter_snapshot() {
    let optimizer = json!({"beta1": 0.9, "beta2": 0.999, "eps": 1e-8, "weight_decay": 0.01, "clip_norm": 1.0});
    let full = json!({
        "lambda_weight": 0.1,
        "temperature": 1.0,
        "classifier_lr": 5e-5,
        "encoder_lr": 1e-5,
        "dropout_rate": 0.2,
        "max_span_length": 4,
        "max_tokens": 128,
        "epochs": 10,
        "batch_size": 8,
        "seed": 0,
        "d": 1024,
        "d_prime": 50,
        "num_layers": 24,
        "num_heads": 16,
        "feedforward_width": 4096,
        "encoder_dropout": 0.1,
        "use_context": true,
        "contrast_targets": "entity_spans",
        "detach_templates": false,
        "unk_replace_prob": 0.0,
        "optimizer": optimizer,
    });
    let mut default = full.clone();
    for (k, v) in [("d", 64), ("d_prime", 8), ("num_layers", 2), ("num_heads", 4), ("feedforward_width", 128)] {
        default[k] = json!(v);
    }
    let got_full = serde_json::to_value(TrainConfig::full_scale()).unwrap();
    let got_default = serde_json::to_value(TrainConfig::default()).unwrap();
    let pass = got_full == full && got_default == default;
    report(
        8,
        "hyperparameter fidelity",
        pass,
        &format!(
            "full-scale d={} d'={} τ={} λ={} dropout={} max span={} truncation={} lrs={}/{}",
            got_full["d"],
            got_full["d_prime"],
            got_full["temperature"],
            got_full["lambda_weight"],
            got_full["dropout_rate"],
            got_full["max_span_length"],
            got_full["max_tokens"],
            got_full["classifier_lr"],
            got_full["encoder_lr"]
        ),
    );
    assert_eq!(got_full, full);
    assert_eq!(got_default, default);
}
