//! Entity-type templates, template pooling, and the contrastive context loss.
//!
//! A template pairs an entity pattern (`"[SPAN] is a [TYPE] entity."`) with a
//! none-entity pattern (`"[SPAN] is not an entity."`). For a gold entity span the
//! pattern filled with its true type is the positive; every other type and the
//! none pattern are negatives. Each filled string is encoded and mean-pooled into
//! a sentence vector, and the k vectors of one type are averaged again across the
//! template set. The sentence vector of the input is then pulled toward the
//! positive pool and away from the negatives with a cosine InfoNCE.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::corpus::LabeledSpan;
use crate::encoder::{Encoder, Mode};
use crate::error::{Error, Result};
use crate::loss;
use crate::params::ParamStore;
use crate::scalar::Scalar;

pub const SPAN_SLOT: &str = "[SPAN]";
pub const TYPE_SLOT: &str = "[TYPE]";

const DEFAULT_SET: &str = include_str!("../templates/default.json");

static ENCODED_TEMPLATES: AtomicUsize = AtomicUsize::new(0);

/// Filled templates encoded so far by this process.
pub fn template_encode_count() -> usize {
    ENCODED_TEMPLATES.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    #[serde(rename = "entity")]
    pub entity_pattern: String,
    #[serde(rename = "none")]
    pub none_pattern: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub templates: Vec<Template>,
    /// Label → natural-language term substituted for `[TYPE]`.
    pub translation: BTreeMap<String, String>,
}

/// Which pattern a template is filled with.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TypeTag {
    /// The entity pattern with this label's translation.
    Label(String),
    /// The none-entity pattern.
    NoneEntity,
}

impl TypeTag {
    pub fn label(l: impl Into<String>) -> Self {
        TypeTag::Label(l.into())
    }

    fn as_label(&self) -> Option<&str> {
        match self {
            TypeTag::Label(l) => Some(l),
            TypeTag::NoneEntity => None,
        }
    }
}

impl fmt::Display for TypeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeTag::Label(l) => f.write_str(l),
            TypeTag::NoneEntity => f.write_str("NONE"),
        }
    }
}

impl Template {
    pub fn new(entity: impl Into<String>, none: impl Into<String>) -> Result<Self> {
        let t = Self { entity_pattern: entity.into(), none_pattern: none.into() };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let count = |s: &str, pat: &str| s.matches(pat).count();
        if count(&self.entity_pattern, SPAN_SLOT) != 1 || count(&self.entity_pattern, TYPE_SLOT) != 1 {
            return Err(Error::Template(format!(
                "entity pattern `{}` must contain {SPAN_SLOT} and {TYPE_SLOT} exactly once",
                self.entity_pattern
            )));
        }
        if count(&self.none_pattern, SPAN_SLOT) != 1 || count(&self.none_pattern, TYPE_SLOT) != 0 {
            return Err(Error::Template(format!(
                "none pattern `{}` must contain {SPAN_SLOT} exactly once and no {TYPE_SLOT}",
                self.none_pattern
            )));
        }
        Ok(())
    }

    fn pattern(&self, tag: Option<&str>) -> &str {
        if tag.is_some() {
            &self.entity_pattern
        } else {
            &self.none_pattern
        }
    }
}

fn translate<'a>(translation: &'a BTreeMap<String, String>, tag: Option<&str>) -> Result<Option<&'a str>> {
    tag.map(|l| translation.get(l).map(String::as_str).ok_or_else(|| Error::Untranslated(l.to_string())))
        .transpose()
}

/// Fills `template` with the span text and the translated type (`None` selects the none pattern).
pub fn fill(template: &Template, span_text: &str, type_label: Option<&str>, translation: &BTreeMap<String, String>) -> Result<String> {
    let term = translate(translation, type_label)?;
    let mut s = template.pattern(type_label).replace(SPAN_SLOT, span_text);
    if let Some(term) = term {
        s = s.replace(TYPE_SLOT, term);
    }
    Ok(s)
}

const PUNCTUATION: &[char] = &['.', ',', ';', ':', '!', '?'];

/// Splits a pattern into words, separating leading and trailing punctuation.
fn pattern_words(pattern: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for word in pattern.split_whitespace() {
        let core_start = word.find(|c| !PUNCTUATION.contains(&c)).unwrap_or(word.len());
        let core_end = word.rfind(|c| !PUNCTUATION.contains(&c)).map_or(core_start, |i| i + 1);
        for (i, _) in word[..core_start].char_indices() {
            out.push(&word[i..i + 1]);
        }
        if core_end > core_start {
            out.push(&word[core_start..core_end]);
        }
        for (i, _) in word[core_end..].char_indices() {
            out.push(&word[core_end + i..core_end + i + 1]);
        }
    }
    out
}

/// Token-level fill: span tokens are inserted verbatim, pattern punctuation is split off.
pub fn fill_tokens(
    template: &Template,
    span_tokens: &[String],
    type_label: Option<&str>,
    translation: &BTreeMap<String, String>,
) -> Result<Vec<String>> {
    let term = translate(translation, type_label)?;
    let mut out = Vec::new();
    for w in pattern_words(template.pattern(type_label)) {
        match (w, term) {
            (SPAN_SLOT, _) => out.extend(span_tokens.iter().cloned()),
            (TYPE_SLOT, Some(term)) => out.extend(term.split_whitespace().map(String::from)),
            _ => out.push(w.to_string()),
        }
    }
    Ok(out)
}

impl TemplateSet {
    pub fn new(templates: Vec<Template>, translation: BTreeMap<String, String>) -> Result<Self> {
        let set = Self { templates, translation };
        set.validate()?;
        Ok(set)
    }

    /// The shipped ten-template set.
    pub fn default_set() -> Self {
        Self::from_json(DEFAULT_SET).expect("shipped template set is valid")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let set: TemplateSet = serde_json::from_str(json)?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("template sets serialize")
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.templates.is_empty() {
            return Err(Error::Template("a template set needs at least one template".into()));
        }
        self.templates.iter().try_for_each(Template::validate)
    }

    /// Checks that every label of the entity type set has a translation.
    pub fn validate_labels(&self, labels: &[String]) -> Result<()> {
        match labels.iter().find(|l| !self.translation.contains_key(*l)) {
            Some(l) => Err(Error::Untranslated(l.clone())),
            None => Ok(()),
        }
    }

    /// Copy restricted to the first `k` templates.
    pub fn truncated(&self, k: usize) -> Self {
        Self { templates: self.templates[..k.min(self.len())].to_vec(), translation: self.translation.clone() }
    }

    /// Every word a filled template can contain apart from span text.
    pub fn vocabulary_words(&self) -> Vec<String> {
        let mut out = Vec::new();
        for t in &self.templates {
            for p in [&t.entity_pattern, &t.none_pattern] {
                out.extend(pattern_words(p).into_iter().filter(|w| *w != SPAN_SLOT && *w != TYPE_SLOT).map(String::from));
            }
        }
        for term in self.translation.values() {
            out.extend(term.split_whitespace().map(String::from));
        }
        out
    }

    /// All k fills for one span and type.
    pub fn fill_all(&self, span_text: &str, tag: &TypeTag) -> Result<Vec<String>> {
        self.templates.iter().map(|t| fill(t, span_text, tag.as_label(), &self.translation)).collect()
    }
}

/// Mean over the k templates of one type's filled-template sentence vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledTypeEmbedding<T> {
    pub type_tag: TypeTag,
    pub vector: Vec<T>,
}

/// Graph node holding the pooled template embedding (`1 × d`) for one span and type.
pub fn pooled_type_embedding_var<T: Scalar, E: Encoder<T> + ?Sized>(
    g: &mut Graph<'_, T>,
    encoder: &E,
    set: &TemplateSet,
    span_tokens: &[String],
    tag: &TypeTag,
    mode: &mut Mode<'_>,
) -> Result<Var> {
    let mut pooled = Vec::with_capacity(set.len());
    for t in &set.templates {
        let tokens = fill_tokens(t, span_tokens, tag.as_label(), &set.translation)?;
        ENCODED_TEMPLATES.fetch_add(1, Ordering::Relaxed);
        let h = encoder.encode(g, &tokens, mode)?;
        pooled.push(g.mean_rows(h));
    }
    if pooled.len() == 1 {
        return Ok(pooled[0]);
    }
    let stacked = g.concat_rows(&pooled);
    Ok(g.mean_rows(stacked))
}

/// Evaluation-mode pooled template embeddings for each requested type.
pub fn pooled_type_embeddings<T: Scalar, E: Encoder<T> + ?Sized>(
    encoder: &E,
    params: &ParamStore<T>,
    set: &TemplateSet,
    span_tokens: &[String],
    tags: &[TypeTag],
) -> Result<Vec<PooledTypeEmbedding<T>>> {
    let mut g = Graph::new(params);
    tags.iter()
        .map(|tag| {
            let v = pooled_type_embedding_var(&mut g, encoder, set, span_tokens, tag, &mut Mode::Eval)?;
            Ok(PooledTypeEmbedding { type_tag: tag.clone(), vector: g.value(v).data().to_vec() })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastiveLoss<T> {
    pub value: T,
    /// Similarities that fell back to 0 because a vector had zero norm.
    pub degenerate: usize,
}

fn check_temperature<T: Scalar>(tau: T) -> Result<()> {
    if tau > T::zero() && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::Config("temperature must be positive and finite".into()))
    }
}

/// Cosine InfoNCE of the sentence vector `c` against one positive and ≥1 negatives.
pub fn contrastive_loss<T: Scalar>(
    c: &[T],
    positive: &PooledTypeEmbedding<T>,
    negatives: &[PooledTypeEmbedding<T>],
    tau: T,
) -> Result<ContrastiveLoss<T>> {
    if negatives.is_empty() {
        return Err(Error::Config("contrastive loss needs at least one negative".into()));
    }
    check_temperature(tau)?;
    let mut cands: Vec<&[T]> = vec![&positive.vector];
    cands.extend(negatives.iter().map(|n| n.vector.as_slice()));
    for v in &cands {
        if v.len() != c.len() {
            return Err(Error::Dimension { expected: c.len(), actual: v.len() });
        }
    }
    let terms = loss::info_nce(c, &cands, tau);
    if terms.degenerate > 0 {
        log::warn!("{} zero-norm vectors in contrastive loss; similarity set to 0", terms.degenerate);
    }
    Ok(ContrastiveLoss { value: terms.loss, degenerate: terms.degenerate })
}

/// Which spans receive contrastive supervision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastTargets {
    /// Gold entity spans only.
    #[default]
    EntitySpans,
    /// Entity spans plus every `O` span (positive: the none pattern).
    AllSpans,
}

/// Per-sentence contrastive loss on the graph: mean over supervised spans of the
/// InfoNCE between `c` and the pooled positive/negative template embeddings.
///
/// Returns `None` when the sentence has no supervised span.
#[allow(clippy::too_many_arguments)]
pub fn sentence_contrastive_loss_var<T: Scalar, E: Encoder<T> + ?Sized>(
    g: &mut Graph<'_, T>,
    encoder: &E,
    set: &TemplateSet,
    tokens: &[String],
    golds: &[LabeledSpan],
    labels: &[String],
    c: Var,
    tau: T,
    targets: ContrastTargets,
    detach_templates: bool,
    mode: &mut Mode<'_>,
) -> Result<Option<Var>> {
    check_temperature(tau)?;
    let mut per_span = Vec::new();
    // Pooled embeddings depend only on (span text, type); reuse within the sentence.
    let mut cache: BTreeMap<(Vec<String>, Option<String>), Var> = BTreeMap::new();
    for gold in golds {
        let positive = if gold.is_entity() {
            if !labels.contains(&gold.label) {
                return Err(Error::UnknownLabel(gold.label.clone()));
            }
            TypeTag::Label(gold.label.clone())
        } else if targets == ContrastTargets::AllSpans {
            TypeTag::NoneEntity
        } else {
            continue;
        };
        let span_tokens = tokens[gold.span.begin - 1..gold.span.end].to_vec();
        let mut tags = vec![positive.clone()];
        tags.extend(labels.iter().filter(|l| positive.as_label() != Some(l.as_str())).map(|l| TypeTag::Label(l.clone())));
        if positive != TypeTag::NoneEntity {
            tags.push(TypeTag::NoneEntity);
        }
        let mut rows = Vec::with_capacity(tags.len());
        for tag in &tags {
            let key = (span_tokens.clone(), tag.as_label().map(String::from));
            let v = match cache.get(&key) {
                Some(&v) => v,
                None => {
                    let mut v = pooled_type_embedding_var(g, encoder, set, &span_tokens, tag, mode)?;
                    if detach_templates {
                        let t = g.value(v).clone();
                        v = g.constant(t);
                    }
                    cache.insert(key, v);
                    v
                }
            };
            rows.push(v);
        }
        let cands = g.concat_rows(&rows);
        per_span.push(g.info_nce(c, cands, tau));
    }
    if per_span.is_empty() {
        return Ok(None);
    }
    let mut total = per_span[0];
    for &v in &per_span[1..] {
        total = g.add(total, v);
    }
    let inv = T::one() / T::from_usize_lossy(per_span.len());
    Ok(Some(g.scale(total, inv)))
}

/// Evaluation-mode value of [`sentence_contrastive_loss_var`] for a given sentence vector.
#[allow(clippy::too_many_arguments)]
pub fn sentence_contrastive_loss<T: Scalar, E: Encoder<T> + ?Sized>(
    encoder: &E,
    params: &ParamStore<T>,
    set: &TemplateSet,
    tokens: &[String],
    golds: &[LabeledSpan],
    labels: &[String],
    c: &[T],
    tau: T,
) -> Result<T> {
    let mut g = Graph::new(params);
    let cv = g.constant(crate::tensor::Tensor::row_vector(c.to_vec()));
    let out = sentence_contrastive_loss_var(
        &mut g,
        encoder,
        set,
        tokens,
        golds,
        labels,
        cv,
        tau,
        ContrastTargets::EntitySpans,
        false,
        &mut Mode::Eval,
    )?;
    Ok(out.map_or(T::zero(), |v| g.scalar(v)))
}
