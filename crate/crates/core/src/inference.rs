//! Decoding span scores into flat entity sets, and entity-level scoring.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, LabeledSpan, SpanIndex, OUTSIDE};
use crate::error::{Error, Result};
use crate::loss;
use crate::ooe::OoeBins;
use crate::scalar::Scalar;
use crate::span_model::argmax;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedSpan {
    pub span: SpanIndex,
    pub label: String,
    /// Softmax probability of `label`.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sentence_id: String,
    /// Kept spans, ordered by start.
    pub spans: Vec<PredictedSpan>,
}

impl Prediction {
    pub fn labeled_spans(&self) -> Vec<LabeledSpan> {
        self.spans.iter().map(|p| LabeledSpan::new(p.span, p.label.clone())).collect()
    }
}

/// Largest-score-first decode: spans whose argmax is an entity type compete by the
/// probability of that type; each kept span eliminates everything it overlaps.
pub fn decode<T: Scalar>(sentence_id: &str, spans: &[(SpanIndex, Vec<T>)], labels: &[String]) -> Prediction {
    let mut candidates: Vec<PredictedSpan> = spans
        .iter()
        .filter_map(|(span, scores)| {
            let best = argmax(scores);
            (labels[best] != OUTSIDE).then(|| PredictedSpan {
                span: *span,
                label: labels[best].clone(),
                score: loss::softmax(scores)[best].to_f64_lossy(),
            })
        })
        .collect();
    candidates.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.span.begin.cmp(&b.span.begin))
            .then(a.span.len().cmp(&b.span.len()))
    });
    let mut kept: Vec<PredictedSpan> = Vec::new();
    for c in candidates {
        if kept.iter().all(|k| !k.span.overlaps(&c.span)) {
            kept.push(c);
        }
    }
    kept.sort_by_key(|p| (p.span.begin, p.span.end));
    Prediction { sentence_id: sentence_id.to_string(), spans: kept }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
    pub micro_f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Score {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let micro_f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Self { precision, recall, micro_f1, tp, fp, fn_ }
    }

    pub fn gold(&self) -> usize {
        self.tp + self.fn_
    }
}

/// Per-bin scores; a bin without gold entities is `None`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BinScores {
    pub ooe: Option<Score>,
    pub in_vocab: Option<Score>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub overall: Score,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bins: Option<BinScores>,
}

impl MetricsReport {
    pub fn micro_f1(&self) -> f64 {
        self.overall.micro_f1
    }
}

/// Where predictions matching no gold entity are counted when scoring bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FpAttribution {
    /// Bin of the gold entity sharing the most tokens (earliest on ties); the OOE bin if none overlaps.
    #[default]
    NearestGold,
    /// Unmatched predictions count toward no bin.
    Exclude,
}

fn index_predictions<'a>(predictions: &'a [Prediction], gold: &Dataset) -> Result<HashMap<&'a str, &'a Prediction>> {
    let mut by_id = HashMap::new();
    for p in predictions {
        if gold.get(&p.sentence_id).is_none() {
            return Err(Error::UnknownSentence(p.sentence_id.clone()));
        }
        by_id.insert(p.sentence_id.as_str(), p);
    }
    Ok(by_id)
}

/// Exact-boundary, exact-type entity micro-F1.
pub fn micro_f1(predictions: &[Prediction], gold: &Dataset) -> Result<MetricsReport> {
    let by_id = index_predictions(predictions, gold)?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for s in &gold.sentences {
        let g: HashSet<LabeledSpan> = s.entities().into_iter().collect();
        let p: HashSet<LabeledSpan> =
            by_id.get(s.id.as_str()).map(|p| p.labeled_spans().into_iter().collect()).unwrap_or_default();
        let hit = g.intersection(&p).count();
        tp += hit;
        fp += p.len() - hit;
        fn_ += g.len() - hit;
    }
    Ok(MetricsReport { overall: Score::from_counts(tp, fp, fn_), bins: None })
}

fn overlap(a: &SpanIndex, b: &SpanIndex) -> usize {
    let lo = a.begin.max(b.begin);
    let hi = a.end.min(b.end);
    (hi + 1).saturating_sub(lo)
}

/// Micro-F1 overall and restricted to OOE / in-vocabulary gold entities.
pub fn binned_f1(
    predictions: &[Prediction],
    gold: &Dataset,
    bins: &OoeBins,
    attribution: FpAttribution,
) -> Result<MetricsReport> {
    let mut report = micro_f1(predictions, gold)?;
    let by_id = index_predictions(predictions, gold)?;
    // [ooe, in_vocab] × (tp, fp, fn)
    let mut counts = [[0usize; 3]; 2];
    let bin_of = |is_ooe: bool| if is_ooe { 0 } else { 1 };
    for s in &gold.sentences {
        let entities = bins.get(&s.id).map(Vec::as_slice).unwrap_or_default();
        let preds = by_id.get(s.id.as_str()).map(|p| p.labeled_spans()).unwrap_or_default();
        for e in entities {
            let b = bin_of(e.is_ooe);
            if preds.contains(&e.entity) {
                counts[b][0] += 1;
            } else {
                counts[b][2] += 1;
            }
        }
        for p in &preds {
            if entities.iter().any(|e| e.entity == *p) {
                continue;
            }
            let nearest = entities
                .iter()
                .filter(|e| e.entity.span.overlaps(&p.span))
                .max_by(|a, b| {
                    overlap(&a.entity.span, &p.span)
                        .cmp(&overlap(&b.entity.span, &p.span))
                        .then(b.entity.span.begin.cmp(&a.entity.span.begin))
                });
            match (attribution, nearest) {
                (FpAttribution::Exclude, _) => {}
                (FpAttribution::NearestGold, Some(e)) => counts[bin_of(e.is_ooe)][1] += 1,
                (FpAttribution::NearestGold, None) => counts[0][1] += 1,
            }
        }
    }
    let score = |c: [usize; 3]| (c[0] + c[2] > 0).then(|| Score::from_counts(c[0], c[1], c[2]));
    report.bins = Some(BinScores { ooe: score(counts[0]), in_vocab: score(counts[1]) });
    Ok(report)
}

/// `token gold predicted` lines (BIO), one blank line between sentences.
pub fn predictions_to_conll(predictions: &[Prediction], gold: &Dataset) -> Result<String> {
    let by_id = index_predictions(predictions, gold)?;
    let mut out = String::new();
    for s in &gold.sentences {
        let pred_tags = match by_id.get(s.id.as_str()) {
            Some(p) => s.tags_for(&p.labeled_spans()),
            None => vec![OUTSIDE.to_string(); s.len()],
        };
        for ((tok, g), p) in s.tokens.iter().zip(&s.bio_tags).zip(&pred_tags) {
            out.push_str(&format!("{tok} {g} {p}\n"));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Per-label counts, handy for reports.
pub fn per_label_f1(predictions: &[Prediction], gold: &Dataset) -> Result<BTreeMap<String, Score>> {
    let by_id = index_predictions(predictions, gold)?;
    let mut counts: BTreeMap<String, [usize; 3]> = BTreeMap::new();
    for s in &gold.sentences {
        let g: HashSet<LabeledSpan> = s.entities().into_iter().collect();
        let p: HashSet<LabeledSpan> =
            by_id.get(s.id.as_str()).map(|p| p.labeled_spans().into_iter().collect()).unwrap_or_default();
        for e in &g {
            counts.entry(e.label.clone()).or_default()[if p.contains(e) { 0 } else { 2 }] += 1;
        }
        for e in p.difference(&g) {
            counts.entry(e.label.clone()).or_default()[1] += 1;
        }
    }
    Ok(counts.into_iter().map(|(l, c)| (l, Score::from_counts(c[0], c[1], c[2]))).collect())
}
