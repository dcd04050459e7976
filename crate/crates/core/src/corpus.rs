//! Sentences with BIO tags, CoNLL-style IO, span enumeration and gold span labels.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label of a span that is not an entity.
pub const OUTSIDE: &str = "O";

/// A pre-tokenized sentence with one BIO tag per token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub tokens: Vec<String>,
    pub bio_tags: Vec<String>,
}

/// Contiguous token interval, 1-based and inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpanIndex {
    pub begin: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledSpan {
    pub span: SpanIndex,
    pub label: String,
}

/// How illegal `I-` transitions are handled while reading BIO tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BioMode {
    /// An `I-t` without a `B-t`/`I-t` predecessor is read as `B-t`.
    #[default]
    Repair,
    Strict,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub sentences: Vec<Sentence>,
    /// Entity types, sorted; `O` is never a member.
    pub label_set: Vec<String>,
}

enum Tag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

fn classify_tag(tag: &str) -> Option<Tag<'_>> {
    if tag == OUTSIDE {
        return Some(Tag::Outside);
    }
    let (prefix, ty) = tag.split_once('-')?;
    if ty.is_empty() {
        return None;
    }
    match prefix {
        "B" => Some(Tag::Begin(ty)),
        "I" => Some(Tag::Inside(ty)),
        _ => None,
    }
}

impl SpanIndex {
    pub fn new(begin: usize, end: usize) -> Self {
        debug_assert!(1 <= begin && begin <= end, "invalid span ({begin},{end})");
        Self { begin, end }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.begin
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Whether the two token intervals intersect.
    pub fn overlaps(&self, other: &SpanIndex) -> bool {
        self.begin <= other.end && other.begin <= self.end
    }
}

impl fmt::Display for SpanIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.begin, self.end)
    }
}

impl LabeledSpan {
    pub fn new(span: SpanIndex, label: impl Into<String>) -> Self {
        Self { span, label: label.into() }
    }

    pub fn is_entity(&self) -> bool {
        self.label != OUTSIDE
    }
}

impl Sentence {
    /// Builds a sentence, validating tag syntax and repairing transitions per `mode`.
    pub fn new(id: impl Into<String>, tokens: Vec<String>, tags: Vec<String>, mode: BioMode) -> Result<Self> {
        let id = id.into();
        if tokens.is_empty() || tokens.len() != tags.len() {
            return Err(Error::Parse {
                path: PathBuf::new(),
                line: 0,
                message: format!("sentence `{id}` needs as many tags as tokens (≥1)"),
            });
        }
        let tags = repair_tags(tags, mode, Path::new(""), &vec![0; tokens.len()])?;
        Ok(Self { id, tokens, bio_tags: tags })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Gold entities decoded from the BIO tags, in order of appearance.
    pub fn entities(&self) -> Vec<LabeledSpan> {
        let mut out = Vec::new();
        let mut open: Option<(usize, &str)> = None;
        for (i, tag) in self.bio_tags.iter().enumerate() {
            let pos = i + 1;
            match classify_tag(tag) {
                Some(Tag::Inside(ty)) if open.is_some_and(|(_, t)| t == ty) => {}
                other => {
                    if let Some((b, t)) = open.take() {
                        out.push(LabeledSpan::new(SpanIndex::new(b, pos - 1), t));
                    }
                    match other {
                        Some(Tag::Begin(ty)) | Some(Tag::Inside(ty)) => open = Some((pos, ty)),
                        _ => {}
                    }
                }
            }
        }
        if let Some((b, t)) = open {
            out.push(LabeledSpan::new(SpanIndex::new(b, self.len()), t));
        }
        out
    }

    /// Surface tokens of `span`.
    pub fn span_tokens(&self, span: SpanIndex) -> &[String] {
        &self.tokens[span.begin - 1..span.end]
    }

    /// Surface text of `span`, tokens joined by single spaces.
    pub fn span_text(&self, span: SpanIndex) -> String {
        self.span_tokens(span).join(" ")
    }

    /// BIO tags for a flat set of labeled spans over this sentence's tokens.
    pub fn tags_for(&self, spans: &[LabeledSpan]) -> Vec<String> {
        let mut tags = vec![OUTSIDE.to_string(); self.len()];
        for s in spans.iter().filter(|s| s.is_entity()) {
            tags[s.span.begin - 1] = format!("B-{}", s.label);
            for t in &mut tags[s.span.begin..s.span.end] {
                *t = format!("I-{}", s.label);
            }
        }
        tags
    }
}

fn repair_tags(mut tags: Vec<String>, mode: BioMode, path: &Path, lines: &[usize]) -> Result<Vec<String>> {
    let mut prev: Option<String> = None;
    for (i, tag) in tags.iter_mut().enumerate() {
        let fixed = match classify_tag(tag) {
            None => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lines[i],
                    message: format!("malformed tag `{tag}`"),
                })
            }
            Some(Tag::Inside(ty)) => {
                let legal = prev.as_deref().is_some_and(|p| p == ty);
                if legal {
                    None
                } else if mode == BioMode::Strict {
                    return Err(Error::IllegalTransition {
                        path: path.to_path_buf(),
                        line: lines[i],
                        tag: tag.clone(),
                        previous: if i == 0 { "<start>".into() } else { "O or another type".into() },
                    });
                } else {
                    Some(format!("B-{ty}"))
                }
            }
            _ => None,
        };
        if let Some(f) = fixed {
            *tag = f;
        }
        prev = match classify_tag(tag) {
            Some(Tag::Begin(t)) | Some(Tag::Inside(t)) => Some(t.to_string()),
            _ => None,
        };
    }
    Ok(tags)
}

impl Dataset {
    /// Builds a dataset, inferring the label set and rejecting duplicate ids.
    pub fn new(sentences: Vec<Sentence>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut labels = BTreeSet::new();
        for s in &sentences {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Config(format!("duplicate sentence id `{}`", s.id)));
            }
            for e in s.entities() {
                labels.insert(e.label);
            }
        }
        Ok(Self { sentences, label_set: labels.into_iter().collect() })
    }

    /// Like [`Dataset::new`] but with an explicit label set, which must cover every tag type.
    pub fn with_labels(sentences: Vec<Sentence>, label_set: Vec<String>) -> Result<Self> {
        let mut ds = Self::new(sentences)?;
        for l in &ds.label_set {
            if !label_set.contains(l) {
                return Err(Error::UnknownLabel(l.clone()));
            }
        }
        ds.label_set = label_set;
        Ok(ds)
    }

    /// Concatenates datasets; ids must stay unique across parts.
    pub fn concat(parts: &[&Dataset]) -> Result<Self> {
        Self::new(parts.iter().flat_map(|d| d.sentences.iter().cloned()).collect())
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn entity_count(&self) -> usize {
        self.sentences.iter().map(|s| s.entities().len()).sum()
    }

    pub fn get(&self, id: &str) -> Option<&Sentence> {
        self.sentences.iter().find(|s| s.id == id)
    }

    /// Renders the dataset in the two-column CoNLL layout read by [`parse_conll`].
    pub fn to_conll(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.sentences.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            for (tok, tag) in s.tokens.iter().zip(&s.bio_tags) {
                out.push_str(tok);
                out.push('\t');
                out.push_str(tag);
                out.push('\n');
            }
        }
        out
    }

    pub fn write_conll(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_conll())?;
        Ok(())
    }
}

/// Reads a `token<whitespace>tag` file with blank lines between sentences.
///
/// Sentences get sequential ids `s1`, `s2`, … in file order.
pub fn parse_conll(path: impl AsRef<Path>, mode: BioMode) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_conll_str(&text, path, mode)
}

/// [`parse_conll`] over in-memory text; `path` is only used in error messages.
pub fn parse_conll_str(text: &str, path: &Path, mode: BioMode) -> Result<Dataset> {
    let mut sentences = Vec::new();
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let mut lines = Vec::new();

    let mut flush = |tokens: &mut Vec<String>, tags: &mut Vec<String>, lines: &mut Vec<usize>| -> Result<()> {
        if tokens.is_empty() {
            return Ok(());
        }
        let repaired = repair_tags(std::mem::take(tags), mode, path, lines)?;
        let id = format!("s{}", sentences.len() + 1);
        sentences.push(Sentence { id, tokens: std::mem::take(tokens), bio_tags: repaired });
        lines.clear();
        Ok(())
    };

    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with("-DOCSTART-") {
            flush(&mut tokens, &mut tags, &mut lines)?;
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected `token tag`, found {} fields", fields.len()),
            });
        }
        tokens.push(fields[0].to_string());
        tags.push(fields[1].to_string());
        lines.push(i + 1);
    }
    flush(&mut tokens, &mut tags, &mut lines)?;
    Dataset::new(sentences)
}

/// All spans of at most `max_span_length` tokens, by start then end.
pub fn enumerate_spans(n_tokens: usize, max_span_length: usize) -> Vec<SpanIndex> {
    let mut out = Vec::new();
    for b in 1..=n_tokens {
        let last = (b + max_span_length - 1).min(n_tokens);
        for e in b..=last {
            out.push(SpanIndex::new(b, e));
        }
    }
    out
}

/// Labels each span with the gold entity type whose boundaries it matches exactly, else `O`.
pub fn gold_span_labels(sentence: &Sentence, spans: &[SpanIndex]) -> Vec<LabeledSpan> {
    let gold = sentence.entities();
    spans
        .iter()
        .map(|&span| {
            let label = gold.iter().find(|g| g.span == span).map_or(OUTSIDE, |g| g.label.as_str());
            LabeledSpan::new(span, label)
        })
        .collect()
}
