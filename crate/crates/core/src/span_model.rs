//! Span representations and the span classifier.
//!
//! A span `(b, e)` is represented as `[h_b ; h_e ; len_emb(e-b+1) ; c]` where `h`
//! are token representations, `len_emb` is a learned length table and `c` the
//! mean-pooled sentence vector. An affine layer maps it to one score per entity
//! type plus `O`.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::corpus::{LabeledSpan, SpanIndex, OUTSIDE};
use crate::encoder::Mode;
use crate::error::{Error, Result};
use crate::loss;
use crate::params::{ParamGroup, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanHeadConfig {
    pub max_span_length: usize,
    /// Width d' of the span-length embedding.
    pub length_dim: usize,
    /// Whether the sentence vector is appended to each span representation.
    pub use_context: bool,
    pub dropout_rate: f64,
}

impl Default for SpanHeadConfig {
    fn default() -> Self {
        Self { max_span_length: 4, length_dim: 8, use_context: true, dropout_rate: 0.2 }
    }
}

/// Labels in canonical order: entity types sorted, then `O`.
pub fn canonical_labels(entity_types: &[String]) -> Vec<String> {
    let mut labels: Vec<String> = entity_types.iter().filter(|t| *t != OUTSIDE).cloned().collect();
    labels.sort();
    labels.dedup();
    labels.push(OUTSIDE.to_string());
    labels
}

/// Index of the highest score; ties resolve to the lowest index.
pub fn argmax<T: Scalar>(scores: &[T]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn check_span(span: SpanIndex, rows: usize) -> Result<()> {
    if span.begin == 0 || span.begin > span.end || span.end > rows {
        return Err(Error::SpanOutOfRange { begin: span.begin, end: span.end, len: rows });
    }
    Ok(())
}

/// `[h_b ; h_e]` for a 1-based inclusive span.
pub fn boundary_embedding<T: Scalar>(h: &Tensor<T>, span: SpanIndex) -> Result<Vec<T>> {
    check_span(span, h.rows())?;
    let mut z = h.row(span.begin - 1).to_vec();
    z.extend_from_slice(h.row(span.end - 1));
    Ok(z)
}

/// `[h_b ; h_e ; table[len] ; c]`.
pub fn span_representation<T: Scalar>(h: &Tensor<T>, c: &[T], span: SpanIndex, table: &Tensor<T>) -> Result<Vec<T>> {
    let mut z = boundary_embedding(h, span)?;
    if span.len() > table.rows() {
        return Err(Error::SpanTooLong { length: span.len(), max: table.rows() });
    }
    if c.len() != h.cols() {
        return Err(Error::Dimension { expected: h.cols(), actual: c.len() });
    }
    z.extend_from_slice(table.row(span.len() - 1));
    z.extend_from_slice(c);
    Ok(z)
}

/// Affine map from a span representation to label scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams<T> {
    /// `input_dim × num_labels`.
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
    pub dropout_rate: f64,
}

impl<T: Scalar> ClassifierParams<T> {
    pub fn zeros(input_dim: usize, num_labels: usize) -> Self {
        Self { weight: Tensor::zeros(input_dim, num_labels), bias: vec![T::zero(); num_labels], dropout_rate: 0.2 }
    }

    pub fn num_labels(&self) -> usize {
        self.weight.cols()
    }
}

/// Evaluation-mode scores `zW + b`.
pub fn classify_span<T: Scalar>(params: &ClassifierParams<T>, z: &[T]) -> Result<Vec<T>> {
    if z.len() != params.weight.rows() {
        return Err(Error::Dimension { expected: params.weight.rows(), actual: z.len() });
    }
    let mut out = params.bias.clone();
    for (i, &zi) in z.iter().enumerate() {
        for (o, &w) in out.iter_mut().zip(params.weight.row(i)) {
            *o += zi * w;
        }
    }
    Ok(out)
}

/// Sum over spans of the softmax cross-entropy against the gold label.
pub fn span_loss<T: Scalar>(scores: &[Vec<T>], golds: &[LabeledSpan], labels: &[String]) -> Result<T> {
    if scores.len() != golds.len() {
        return Err(Error::Dimension { expected: golds.len(), actual: scores.len() });
    }
    let mut total = T::zero();
    for (s, gold) in scores.iter().zip(golds) {
        let t = labels.iter().position(|l| *l == gold.label).ok_or_else(|| Error::UnknownLabel(gold.label.clone()))?;
        if s.len() != labels.len() {
            return Err(Error::Dimension { expected: labels.len(), actual: s.len() });
        }
        total += loss::cross_entropy(s, t);
    }
    Ok(total)
}

/// Trainable span head: length table plus classifier.
#[derive(Debug, Clone)]
pub struct SpanHead {
    d: usize,
    config: SpanHeadConfig,
    labels: Vec<String>,
    length_table: ParamId,
    weight: ParamId,
    bias: ParamId,
}

impl SpanHead {
    pub fn new<T: Scalar>(
        d: usize,
        config: SpanHeadConfig,
        entity_types: &[String],
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if config.max_span_length == 0 || config.length_dim == 0 {
            return Err(Error::Config("max span length and length embedding width must be positive".into()));
        }
        if !(0.0..1.0).contains(&config.dropout_rate) {
            return Err(Error::Config("classifier dropout must lie in [0,1)".into()));
        }
        let labels = canonical_labels(entity_types);
        let input = Self::input_dim(d, &config);
        let std = crate::encoder::INIT_STD;
        let length_table =
            store.add_gaussian("span.length_embedding", config.max_span_length, config.length_dim, std, ParamGroup::Head, rng);
        let weight = store.add_gaussian("span.classifier.weight", input, labels.len(), std, ParamGroup::Head, rng);
        let bias = store.add("span.classifier.bias", Tensor::zeros(1, labels.len()), ParamGroup::Head, false);
        Ok(Self { d, config, labels, length_table, weight, bias })
    }

    fn input_dim(d: usize, config: &SpanHeadConfig) -> usize {
        (if config.use_context { 3 } else { 2 }) * d + config.length_dim
    }

    /// Span representation width: `3d + d'`, or `2d + d'` without context.
    pub fn representation_dim(&self) -> usize {
        Self::input_dim(self.d, &self.config)
    }

    pub fn config(&self) -> &SpanHeadConfig {
        &self.config
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn entity_types(&self) -> &[String] {
        &self.labels[..self.labels.len() - 1]
    }

    pub fn outside_index(&self) -> usize {
        self.labels.len() - 1
    }

    pub fn label_index(&self, label: &str) -> Result<usize> {
        self.labels.iter().position(|l| l == label).ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn length_table<'a, T: Scalar>(&self, store: &'a ParamStore<T>) -> &'a Tensor<T> {
        store.get(self.length_table)
    }

    pub fn classifier_params<T: Scalar>(&self, store: &ParamStore<T>) -> ClassifierParams<T> {
        ClassifierParams {
            weight: store.get(self.weight).clone(),
            bias: store.get(self.bias).data().to_vec(),
            dropout_rate: self.config.dropout_rate,
        }
    }

    /// Scores for every span as an `m × |labels|` node. `c` is ignored without context.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        h: Var,
        c: Var,
        spans: &[SpanIndex],
        mode: &mut Mode<'_>,
    ) -> Result<Var> {
        let rows = g.value(h).rows();
        if spans.is_empty() {
            return Err(Error::EmptyInput);
        }
        for &s in spans {
            check_span(s, rows)?;
            if s.len() > self.config.max_span_length {
                return Err(Error::SpanTooLong { length: s.len(), max: self.config.max_span_length });
            }
        }
        let begins = g.gather_rows(h, spans.iter().map(|s| s.begin - 1).collect());
        let ends = g.gather_rows(h, spans.iter().map(|s| s.end - 1).collect());
        let table = g.param(self.length_table);
        let lens = g.gather_rows(table, spans.iter().map(|s| s.len() - 1).collect());
        let mut parts = vec![begins, ends, lens];
        if self.config.use_context {
            parts.push(g.repeat_rows(c, spans.len()));
        }
        let z = g.concat_cols(&parts);
        let z = mode.dropout(g, z, self.config.dropout_rate);
        let (w, b) = (g.param(self.weight), g.param(self.bias));
        Ok(g.affine(z, w, b))
    }

    /// Mean cross-entropy over spans, as a graph node.
    pub fn loss<T: Scalar>(&self, g: &mut Graph<'_, T>, scores: Var, golds: &[LabeledSpan]) -> Result<Var> {
        let targets = golds.iter().map(|l| self.label_index(&l.label)).collect::<Result<Vec<_>>>()?;
        let n = targets.len();
        let total = g.softmax_cross_entropy(scores, targets);
        Ok(g.scale(total, T::one() / T::from_usize_lossy(n)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn types() -> Vec<String> {
        vec!["PER".into(), "LOC".into()]
    }

    #[test]
    fn full_scale_dimension() {
        let cfg = SpanHeadConfig { length_dim: 50, ..SpanHeadConfig::default() };
        let mut store = ParamStore::<f32>::new();
        let head = SpanHead::new(1024, cfg, &types(), &mut store, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(head.representation_dim(), 3122);
        assert_eq!(head.labels(), ["LOC", "PER", "O"]);
    }

    #[test]
    fn representation_segments() {
        let d = 16;
        let h = Tensor::from_vec(3, d, (0..3 * d).map(|i| i as f64).collect());
        let table = Tensor::from_vec(4, 8, (0..32).map(|i| 100.0 + i as f64).collect());
        let c = vec![-1.0; d];
        let z = span_representation(&h, &c, SpanIndex::new(2, 3), &table).unwrap();
        assert_eq!(z.len(), 56);
        assert_eq!(&z[..d], h.row(1));
        assert_eq!(&z[d..2 * d], h.row(2));
        assert_eq!(&z[2 * d..2 * d + 8], table.row(1));
        assert_eq!(&z[2 * d + 8..], &c[..]);
        let unit = boundary_embedding(&h, SpanIndex::new(1, 1)).unwrap();
        assert_eq!(&unit[..d], &unit[d..]);
        assert!(boundary_embedding(&h, SpanIndex::new(1, 5)).is_err());
        let too_long = Tensor::<f64>::zeros(1, 8);
        assert!(span_representation(&h, &c, SpanIndex::new(1, 2), &too_long).is_err());
    }

    #[test]
    fn classifier_ties_and_sign_flip() {
        let p = ClassifierParams::<f64>::zeros(4, 3);
        let s = classify_span(&p, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s, vec![0.0; 3]);
        assert_eq!(argmax(&s), 0);
        let mut p = ClassifierParams::<f64>::zeros(2, 2);
        p.weight.set(0, 0, 1.0);
        p.weight.set(0, 1, -1.0);
        assert_eq!(argmax(&classify_span(&p, &[0.5, 9.0]).unwrap()), 0);
        assert_eq!(argmax(&classify_span(&p, &[-0.5, 9.0]).unwrap()), 1);
        assert!(classify_span(&p, &[1.0]).is_err());
    }

    #[test]
    fn uniform_loss_is_m_ln_k() {
        let labels = canonical_labels(&types());
        let golds = vec![
            LabeledSpan::new(SpanIndex::new(1, 1), "PER"),
            LabeledSpan::new(SpanIndex::new(1, 2), "O"),
        ];
        let scores = vec![vec![0.3f64; 3]; 2];
        assert_relative_eq!(span_loss(&scores, &golds, &labels).unwrap(), 2.0 * 3f64.ln(), epsilon = 1e-12);
        let bad = vec![LabeledSpan::new(SpanIndex::new(1, 1), "GENE")];
        assert!(matches!(span_loss(&scores[..1], &bad, &labels), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn graph_forward_matches_plain_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::<f64>::new();
        let head = SpanHead::new(4, SpanHeadConfig::default(), &types(), &mut store, &mut rng).unwrap();
        let h = Tensor::from_vec(3, 4, (0..12).map(|i| (i as f64 * 0.37).sin()).collect());
        let c = h.mean_rows();
        let spans = crate::corpus::enumerate_spans(3, 4);
        let mut g = Graph::new(&store);
        let hv = g.constant(h.clone());
        let cv = g.constant(c.clone());
        let out = head.forward(&mut g, hv, cv, &spans, &mut Mode::Eval).unwrap();
        let params = head.classifier_params(&store);
        for (r, &s) in spans.iter().enumerate() {
            let z = span_representation(&h, c.data(), s, head.length_table(&store)).unwrap();
            let want = classify_span(&params, &z).unwrap();
            for (a, b) in g.value(out).row(r).iter().zip(&want) {
                assert_relative_eq!(*a, *b, epsilon = 1e-12);
            }
        }
    }
}
