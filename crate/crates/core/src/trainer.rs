//! Joint training under `L = L1 + λ·L2`, dev-based model selection and prediction.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::corpus::{gold_span_labels, Dataset, Sentence};
use crate::encoder::{EncoderConfig, Mode, Vocabulary, UNK};
use crate::error::{Error, Result};
use crate::inference::{micro_f1, Prediction};
use crate::model::SpanNer;
use crate::optim::{AdamW, AdamWConfig};
use crate::params::{Gradients, ParamGroup};
use crate::scalar::Scalar;
use crate::span_model::SpanHeadConfig;
use crate::templates::{sentence_contrastive_loss_var, ContrastTargets, TemplateSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight λ of the contrastive loss.
    pub lambda_weight: f64,
    /// InfoNCE temperature τ.
    pub temperature: f64,
    /// Learning rate of the span head (classifier and length table).
    pub classifier_lr: f64,
    pub encoder_lr: f64,
    /// Dropout on span representations before the classifier.
    pub dropout_rate: f64,
    pub max_span_length: usize,
    /// Sentences are truncated to this many tokens.
    pub max_tokens: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub d: usize,
    /// Width d' of the span-length embedding.
    pub d_prime: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub feedforward_width: usize,
    pub encoder_dropout: f64,
    /// Append the sentence vector to span representations.
    pub use_context: bool,
    pub contrast_targets: ContrastTargets,
    /// Treat pooled template embeddings as fixed targets: L2 then trains the encoder through `c` only.
    pub detach_templates: bool,
    /// Probability of replacing each training token by the unknown token (word dropout).
    pub unk_replace_prob: f64,
    pub optimizer: AdamWConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_weight: 0.1,
            temperature: 1.0,
            classifier_lr: 5e-5,
            encoder_lr: 1e-5,
            dropout_rate: 0.2,
            max_span_length: 4,
            max_tokens: 128,
            epochs: 10,
            batch_size: 8,
            seed: 0,
            d: 64,
            d_prime: 8,
            num_layers: 2,
            num_heads: 4,
            feedforward_width: 128,
            encoder_dropout: 0.1,
            use_context: true,
            contrast_targets: ContrastTargets::EntitySpans,
            detach_templates: false,
            unk_replace_prob: 0.0,
            optimizer: AdamWConfig::default(),
        }
    }
}

impl TrainConfig {
    /// BERT-large-sized widths.
    pub fn full_scale() -> Self {
        Self { d: 1024, d_prime: 50, num_layers: 24, num_heads: 16, feedforward_width: 4096, ..Self::default() }
    }

    /// Small randomly initialized model trainable on one CPU core in minutes.
    ///
    /// With no pretrained encoder the default learning rates barely move the weights,
    /// so this profile raises both while keeping their ratio. Template encodings are
    /// detached: letting L2 reshape a randomly initialized encoder through the template
    /// side drives it to memorize training names.
    pub fn desk() -> Self {
        Self {
            classifier_lr: 1e-3,
            encoder_lr: 2e-4,
            epochs: 15,
            detach_templates: true,
            batch_size: 8,
            d: 32,
            d_prime: 8,
            num_layers: 1,
            num_heads: 2,
            feedforward_width: 64,
            unk_replace_prob: 0.2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lambda_weight >= 0.0 && self.lambda_weight.is_finite()) {
            return bad("lambda_weight must be a finite value ≥ 0");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if !(self.classifier_lr > 0.0 && self.encoder_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        self.encoder_config().validate()?;
        if self.max_span_length == 0 || self.d_prime == 0 {
            return bad("max_span_length and d_prime must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0,1)");
        }
        if !(0.0..1.0).contains(&self.unk_replace_prob) {
            return bad("unk_replace_prob must lie in [0,1)");
        }
        Ok(())
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            d: self.d,
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            feedforward_width: self.feedforward_width,
            max_positions: self.max_tokens,
            dropout_rate: self.encoder_dropout,
            seed: self.seed,
        }
    }

    pub fn head_config(&self) -> SpanHeadConfig {
        SpanHeadConfig {
            max_span_length: self.max_span_length,
            length_dim: self.d_prime,
            use_context: self.use_context,
            dropout_rate: self.dropout_rate,
        }
    }

    fn learning_rate(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Encoder => self.encoder_lr,
            ParamGroup::Head => self.classifier_lr,
        }
    }
}

/// `L1 + λ·L2`.
pub fn total_loss<T: Scalar>(l1: T, l2: T, lambda: T) -> T {
    l1 + lambda * l2
}

const SHUFFLE_SALT: u64 = 0x0005_4aff_1e00_0000;

fn mix(mut x: u64) -> u64 {
    // splitmix64 finalizer
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Dropout RNG for one sentence visit: a pure function of (seed, epoch, sentence index, stream).
/// Stream 0 drives the span model, stream 1 the template encodings, stream 2 word dropout.
fn sentence_rng(seed: u64, epoch: usize, index: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(mix(seed ^ mix(epoch as u64)) ^ index as u64));
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub l1: f64,
    pub l2: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: usize,
    pub loss: LossParts,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean batch loss over the epoch; absent for the untrained epoch 0.
    pub train_loss: Option<f64>,
    pub dev_micro_f1: f64,
}

/// Builds the per-sentence objective on `g`: mean span CE plus λ times the mean contrastive loss.
#[allow(clippy::too_many_arguments)]
pub fn sentence_objective<T: Scalar>(
    model: &SpanNer<T>,
    g: &mut Graph<'_, T>,
    sentence: &Sentence,
    template_tokens: &[String],
    templates: Option<&TemplateSet>,
    cfg: &TrainConfig,
    mode: &mut Mode<'_>,
    template_mode: &mut Mode<'_>,
) -> Result<Option<(Var, LossParts)>> {
    if sentence.tokens.is_empty() {
        return Ok(None);
    }
    let f = model.forward(g, &sentence.tokens, mode)?;
    let golds = gold_span_labels(sentence, &f.spans);
    let l1 = model.head().loss(g, f.scores, &golds)?;
    let l1_value = g.scalar(l1).to_f64_lossy();
    let Some(set) = templates else {
        return Ok(Some((l1, LossParts { l1: l1_value, l2: 0.0, total: l1_value })));
    };
    let l2 = sentence_contrastive_loss_var(
        g,
        model.encoder(),
        set,
        template_tokens,
        &golds,
        model.head().entity_types(),
        f.c,
        T::from_f64_lossy(cfg.temperature),
        cfg.contrast_targets,
        cfg.detach_templates,
        template_mode,
    )?;
    let Some(l2) = l2 else {
        return Ok(Some((l1, LossParts { l1: l1_value, l2: 0.0, total: l1_value })));
    };
    let l2_value = g.scalar(l2).to_f64_lossy();
    let weighted = g.scale(l2, T::from_f64_lossy(cfg.lambda_weight));
    let total = g.add(l1, weighted);
    Ok(Some((total, LossParts { l1: l1_value, l2: l2_value, total: g.scalar(total).to_f64_lossy() })))
}

/// Copy of `sentence` with each token replaced by the unknown token with probability `p`.
fn word_dropout<'a>(sentence: &'a Sentence, p: f64, rng: &mut ChaCha8Rng) -> std::borrow::Cow<'a, Sentence> {
    if p <= 0.0 {
        return std::borrow::Cow::Borrowed(sentence);
    }
    let mut s = sentence.clone();
    for t in &mut s.tokens {
        if rng.gen::<f64>() < p {
            *t = UNK.to_string();
        }
    }
    std::borrow::Cow::Owned(s)
}

/// Step-level training driver.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    model: SpanNer<T>,
    optimizer: AdamW<T>,
    config: TrainConfig,
    templates: Option<TemplateSet>,
    steps: usize,
}

impl<T: Scalar> Trainer<T> {
    /// `templates = None` trains the span model alone, with no contrastive branch at all.
    pub fn new(
        config: TrainConfig,
        vocab: Vocabulary,
        entity_types: &[String],
        templates: Option<TemplateSet>,
    ) -> Result<Self> {
        config.validate()?;
        if let Some(set) = &templates {
            set.validate()?;
            set.validate_labels(entity_types)?;
        }
        let model = SpanNer::new(config.encoder_config(), config.head_config(), vocab, entity_types)?;
        let optimizer = AdamW::new(config.optimizer.clone(), model.params());
        Ok(Self { model, optimizer, config, templates, steps: 0 })
    }

    pub fn model(&self) -> &SpanNer<T> {
        &self.model
    }

    pub fn into_model(self) -> SpanNer<T> {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Seeded visiting order for `epoch` (1-based).
    pub fn epoch_order(&self, epoch: usize, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(self.config.seed ^ mix(SHUFFLE_SALT ^ epoch as u64))));
        order
    }

    /// One optimizer step on the sentences `indices` of `data`.
    pub fn train_step(&mut self, data: &Dataset, indices: &[usize], epoch: usize) -> Result<StepStats> {
        self.steps += 1;
        let mut grads = Gradients::zeros_like(self.model.params());
        let mut sum = LossParts { l1: 0.0, l2: 0.0, total: 0.0 };
        let mut counted = 0usize;
        for &i in indices {
            let sentence = word_dropout(&data.sentences[i], self.config.unk_replace_prob, &mut sentence_rng(self.config.seed, epoch, i, 2));
            let sentence = sentence.as_ref();
            let mut rng = sentence_rng(self.config.seed, epoch, i, 0);
            let mut template_rng = sentence_rng(self.config.seed, epoch, i, 1);
            let mut g = Graph::new(self.model.params());
            let out = sentence_objective(
                &self.model,
                &mut g,
                sentence,
                &sentence.tokens,
                self.templates.as_ref(),
                &self.config,
                &mut Mode::Train(&mut rng),
                &mut Mode::Train(&mut template_rng),
            )?;
            let Some((root, parts)) = out else { continue };
            if !parts.total.is_finite() {
                return Err(Error::NonFiniteLoss { step: self.steps, sentence: sentence.id.clone() });
            }
            grads.merge(&g.backward(root));
            sum.l1 += parts.l1;
            sum.l2 += parts.l2;
            sum.total += parts.total;
            counted += 1;
        }
        if counted == 0 {
            return Ok(StepStats { step: self.steps, loss: sum, grad_norm: 0.0 });
        }
        let inv = 1.0 / counted as f64;
        grads.scale(T::from_f64_lossy(inv));
        let cfg = &self.config;
        let norm = self.optimizer.step(self.model.params_mut(), &grads, |g| cfg.learning_rate(g));
        let loss = LossParts { l1: sum.l1 * inv, l2: sum.l2 * inv, total: sum.total * inv };
        Ok(StepStats { step: self.steps, loss, grad_norm: norm.to_f64_lossy() })
    }

    /// One pass over `data` in the seeded order; returns per-step statistics.
    pub fn run_epoch(&mut self, data: &Dataset, epoch: usize) -> Result<Vec<StepStats>> {
        let order = self.epoch_order(epoch, data.len());
        order.chunks(self.config.batch_size).map(|batch| self.train_step(data, batch, epoch)).collect()
    }
}

/// Evaluation-mode predictions. Sentences are split across `SNER_THREADS` worker
/// threads (default 1); output order always follows the input.
pub fn predict<T: Scalar>(model: &SpanNer<T>, sentences: &[Sentence]) -> Result<Vec<Prediction>> {
    let threads = std::env::var("SNER_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).unwrap_or(1).max(1);
    if threads == 1 || sentences.len() < 2 {
        return sentences.iter().map(|s| model.predict_sentence(s)).collect();
    }
    let chunk = sentences.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = sentences
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|s| model.predict_sentence(s)).collect::<Result<Vec<_>>>()))
            .collect();
        let mut out = Vec::with_capacity(sentences.len());
        for h in handles {
            out.extend(h.join().expect("prediction worker panicked")?);
        }
        Ok(out)
    })
}

/// Dev micro-F1 of `model`.
pub fn evaluate<T: Scalar>(model: &SpanNer<T>, data: &Dataset) -> Result<f64> {
    Ok(micro_f1(&predict(model, &data.sentences)?, data)?.overall.micro_f1)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters of the best dev epoch.
    pub model: SpanNer<T>,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    /// One row per epoch, starting with the untrained epoch 0.
    pub history: Vec<EpochMetrics>,
    pub steps: Vec<StepStats>,
}

/// Full training run: dev F1 before training and after every epoch, keeping the best
/// (earliest on ties) parameters.
pub fn train<T: Scalar>(
    train: &Dataset,
    dev: &Dataset,
    templates: Option<&TemplateSet>,
    vocab: Vocabulary,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    if train.is_empty() || dev.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut types = train.label_set.clone();
    for l in &dev.label_set {
        if !types.contains(l) {
            types.push(l.clone());
        }
    }
    let mut trainer = Trainer::<T>::new(config.clone(), vocab, &types, templates.cloned())?;
    let f1 = evaluate(trainer.model(), dev)?;
    log::info!("epoch 0: dev micro-F1 {f1:.4}");
    let mut history = vec![EpochMetrics { epoch: 0, train_loss: None, dev_micro_f1: f1 }];
    let (mut best, mut best_epoch, mut best_f1) = (trainer.model().clone(), 0, f1);
    let mut steps = Vec::new();
    for epoch in 1..=config.epochs {
        let stats = trainer.run_epoch(train, epoch)?;
        let loss = stats.iter().map(|s| s.loss.total).sum::<f64>() / stats.len().max(1) as f64;
        steps.extend(stats);
        let f1 = evaluate(trainer.model(), dev)?;
        log::info!("epoch {epoch}: train loss {loss:.4}, dev micro-F1 {f1:.4}");
        history.push(EpochMetrics { epoch, train_loss: Some(loss), dev_micro_f1: f1 });
        if f1 > best_f1 {
            best = trainer.model().clone();
            best_epoch = epoch;
            best_f1 = f1;
        }
    }
    Ok(TrainOutcome { model: best, best_epoch, best_dev_f1: best_f1, history, steps })
}
