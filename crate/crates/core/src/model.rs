//! Encoder + span head sharing one parameter store.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Var};
use crate::corpus::{enumerate_spans, Sentence, SpanIndex};
use crate::encoder::{sentence_embedding_var, Encoder, EncoderConfig, Mode, TransformerEncoder, Vocabulary};
use crate::error::Result;
use crate::inference::{decode, Prediction};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::span_model::{SpanHead, SpanHeadConfig};

/// Salt separating the head's initialization stream from the encoder's.
const HEAD_INIT_SALT: u64 = 0x5a17_4ead_0000_0001;

/// Graph nodes produced by one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub h: Var,
    pub c: Var,
    pub spans: Vec<SpanIndex>,
    /// `spans.len() × |labels|`.
    pub scores: Var,
}

#[derive(Debug, Clone)]
pub struct SpanNer<T> {
    store: ParamStore<T>,
    encoder: TransformerEncoder,
    head: SpanHead,
}

impl<T: Scalar> SpanNer<T> {
    pub fn new(
        encoder_config: EncoderConfig,
        head_config: SpanHeadConfig,
        vocab: Vocabulary,
        entity_types: &[String],
    ) -> Result<Self> {
        let mut store = ParamStore::new();
        let seed = encoder_config.seed;
        let d = encoder_config.d;
        let encoder = TransformerEncoder::new(encoder_config, vocab, &mut store)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ HEAD_INIT_SALT);
        let head = SpanHead::new(d, head_config, entity_types, &mut store, &mut rng)?;
        Ok(Self { store, encoder, head })
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn encoder(&self) -> &TransformerEncoder {
        &self.encoder
    }

    pub fn head(&self) -> &SpanHead {
        &self.head
    }

    pub fn vocab(&self) -> &Vocabulary {
        self.encoder.vocab()
    }

    pub fn labels(&self) -> &[String] {
        self.head.labels()
    }

    /// Candidate spans over the tokens the encoder keeps.
    pub fn spans_for(&self, n_tokens: usize) -> Vec<SpanIndex> {
        let n = n_tokens.min(Encoder::<T>::max_positions(&self.encoder));
        enumerate_spans(n, self.head.config().max_span_length)
    }

    /// Encodes `tokens` and scores every candidate span.
    pub fn forward(&self, g: &mut Graph<'_, T>, tokens: &[String], mode: &mut Mode<'_>) -> Result<Forward> {
        let h = self.encoder.encode(g, tokens, mode)?;
        let c = sentence_embedding_var(g, h);
        let spans = self.spans_for(tokens.len());
        let scores = self.head.forward(g, h, c, &spans, mode)?;
        Ok(Forward { h, c, spans, scores })
    }

    /// Evaluation-mode scores for every candidate span; empty input yields no spans.
    pub fn span_scores(&self, tokens: &[String]) -> Result<Vec<(SpanIndex, Vec<T>)>> {
        if tokens.is_empty() {
            return Ok(Vec::new());
        }
        let mut g = Graph::new(&self.store);
        let f = self.forward(&mut g, tokens, &mut Mode::Eval)?;
        let scores = g.value(f.scores);
        Ok(f.spans.iter().enumerate().map(|(r, s)| (*s, scores.row(r).to_vec())).collect())
    }

    pub fn predict_sentence(&self, sentence: &Sentence) -> Result<Prediction> {
        let scores = self.span_scores(&sentence.tokens)?;
        Ok(decode(&sentence.id, &scores, self.labels()))
    }
}
