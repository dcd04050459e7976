use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Encoder, Mode, Vocabulary};
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::{ParamGroup, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Standard deviation of the Gaussian parameter initialization.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub feedforward_width: usize,
    pub max_positions: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { d: 64, num_layers: 2, num_heads: 4, feedforward_width: 128, max_positions: 128, dropout_rate: 0.1, seed: 0 }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.num_heads == 0 || self.d % self.num_heads != 0 {
            return Err(Error::Config(format!("d = {} must be a positive multiple of num_heads = {}", self.d, self.num_heads)));
        }
        if self.feedforward_width == 0 || self.max_positions == 0 {
            return Err(Error::Config("feedforward width and max positions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("encoder dropout must lie in [0,1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct LayerParams {
    ln1: (ParamId, ParamId),
    wq: (ParamId, ParamId),
    wk: (ParamId, ParamId),
    wv: (ParamId, ParamId),
    wo: (ParamId, ParamId),
    ln2: (ParamId, ParamId),
    ff1: (ParamId, ParamId),
    ff2: (ParamId, ParamId),
}

/// Pre-layer-norm transformer encoder with learned positional embeddings.
///
/// Unknown tokens share the single UNK embedding row.
#[derive(Debug, Clone)]
pub struct TransformerEncoder {
    config: EncoderConfig,
    vocab: Vocabulary,
    token_embedding: ParamId,
    position_embedding: ParamId,
    layers: Vec<LayerParams>,
    final_ln: (ParamId, ParamId),
}

fn norm_params<T: Scalar>(store: &mut ParamStore<T>, name: &str, d: usize) -> (ParamId, ParamId) {
    let g = store.add(format!("{name}.gain"), Tensor::filled(1, d, T::one()), ParamGroup::Encoder, false);
    let b = store.add(format!("{name}.bias"), Tensor::zeros(1, d), ParamGroup::Encoder, false);
    (g, b)
}

fn linear<T: Scalar>(
    store: &mut ParamStore<T>,
    name: &str,
    input: usize,
    output: usize,
    rng: &mut ChaCha8Rng,
) -> (ParamId, ParamId) {
    let w = store.add_gaussian(format!("{name}.weight"), input, output, INIT_STD, ParamGroup::Encoder, rng);
    let b = store.add(format!("{name}.bias"), Tensor::zeros(1, output), ParamGroup::Encoder, false);
    (w, b)
}

impl TransformerEncoder {
    /// Registers freshly initialized encoder parameters in `store`.
    pub fn new<T: Scalar>(config: EncoderConfig, vocab: Vocabulary, store: &mut ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.d;
        let token_embedding =
            store.add_gaussian("encoder.token_embedding", vocab.len(), d, INIT_STD, ParamGroup::Encoder, &mut rng);
        let position_embedding = store.add_gaussian(
            "encoder.position_embedding",
            config.max_positions,
            d,
            INIT_STD,
            ParamGroup::Encoder,
            &mut rng,
        );
        let mut layers = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let p = format!("encoder.layer{l}");
            layers.push(LayerParams {
                ln1: norm_params(store, &format!("{p}.ln1"), d),
                wq: linear(store, &format!("{p}.query"), d, d, &mut rng),
                wk: linear(store, &format!("{p}.key"), d, d, &mut rng),
                wv: linear(store, &format!("{p}.value"), d, d, &mut rng),
                wo: linear(store, &format!("{p}.output"), d, d, &mut rng),
                ln2: norm_params(store, &format!("{p}.ln2"), d),
                ff1: linear(store, &format!("{p}.ff1"), d, config.feedforward_width, &mut rng),
                ff2: linear(store, &format!("{p}.ff2"), config.feedforward_width, d, &mut rng),
            });
        }
        let final_ln = norm_params(store, "encoder.final_ln", d);
        Ok(Self { config, vocab, token_embedding, position_embedding, layers, final_ln })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn attention<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var, layer: &LayerParams, mode: &mut Mode<'_>) -> Var {
        let heads = self.config.num_heads;
        let dh = self.config.d / heads;
        let scale = T::one() / T::from_usize_lossy(dh).sqrt();
        let proj = |pair: (ParamId, ParamId), g: &mut Graph<'_, T>| {
            let w = g.param(pair.0);
            let b = g.param(pair.1);
            g.affine(x, w, b)
        };
        let q = proj(layer.wq, g);
        let k = proj(layer.wk, g);
        let v = proj(layer.wv, g);
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = g.slice_cols(q, h * dh, dh);
            let kh = g.slice_cols(k, h * dh, dh);
            let vh = g.slice_cols(v, h * dh, dh);
            let scores = g.matmul_nt(qh, kh);
            let scores = g.scale(scores, scale);
            let probs = g.softmax_rows(scores);
            let probs = mode.dropout(g, probs, self.config.dropout_rate);
            outs.push(g.matmul(probs, vh));
        }
        let merged = if heads == 1 { outs[0] } else { g.concat_cols(&outs) };
        let wo = g.param(layer.wo.0);
        let bo = g.param(layer.wo.1);
        g.affine(merged, wo, bo)
    }
}

impl<T: Scalar> Encoder<T> for TransformerEncoder {
    fn width(&self) -> usize {
        self.config.d
    }

    fn max_positions(&self) -> usize {
        self.config.max_positions
    }

    fn encode(&self, g: &mut Graph<'_, T>, tokens: &[String], mode: &mut Mode<'_>) -> Result<Var> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = tokens.len().min(self.config.max_positions);
        let ids = self.vocab.ids(&tokens[..n]);
        let rate = self.config.dropout_rate;

        let table = g.param(self.token_embedding);
        let tok = g.gather_rows(table, ids);
        let pos_table = g.param(self.position_embedding);
        let pos = g.gather_rows(pos_table, (0..n).collect());
        let mut x = g.add(tok, pos);
        x = mode.dropout(g, x, rate);

        for layer in &self.layers {
            let (lg, lb) = (g.param(layer.ln1.0), g.param(layer.ln1.1));
            let normed = g.layer_norm(x, lg, lb);
            let attn = self.attention(g, normed, layer, mode);
            let attn = mode.dropout(g, attn, rate);
            x = g.add(x, attn);

            let (lg, lb) = (g.param(layer.ln2.0), g.param(layer.ln2.1));
            let normed = g.layer_norm(x, lg, lb);
            let (w1, b1) = (g.param(layer.ff1.0), g.param(layer.ff1.1));
            let hidden = g.affine(normed, w1, b1);
            let hidden = g.gelu(hidden);
            let (w2, b2) = (g.param(layer.ff2.0), g.param(layer.ff2.1));
            let ff = g.affine(hidden, w2, b2);
            let ff = mode.dropout(g, ff, rate);
            x = g.add(x, ff);
        }
        let (fg, fb) = (g.param(self.final_ln.0), g.param(self.final_ln.1));
        Ok(g.layer_norm(x, fg, fb))
    }
}
