//! Out-of-entity analysis: OOE rates, per-occurrence OOE bins, and re-partitioning
//! a corpus toward a target OOE rate.
//!
//! A test entity is OOE when at least one of its tokens never occurs in the
//! training data. By default "training data" means every token of every training
//! sentence; [`TokenUniverse::EntityTokensOnly`] restricts it to tokens inside
//! training entities.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, LabeledSpan, Sentence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenUniverse {
    #[default]
    AllTrainTokens,
    EntityTokensOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OoeReport {
    pub ooe_rate: f64,
    pub unique_test_entities: usize,
    pub unique_ooe_entities: usize,
    pub train_token_vocab_size: usize,
    /// Set when the test side has no entities and the rate is reported as 0.
    #[serde(default)]
    pub no_test_entities: bool,
}

/// Deduplication key of an entity: surface text as written (case kept) and type.
type EntityKey = (String, String);

fn train_tokens(train: &Dataset, universe: TokenUniverse) -> HashSet<&str> {
    let mut set = HashSet::new();
    for s in &train.sentences {
        match universe {
            TokenUniverse::AllTrainTokens => set.extend(s.tokens.iter().map(String::as_str)),
            TokenUniverse::EntityTokensOnly => {
                for e in s.entities() {
                    set.extend(s.span_tokens(e.span).iter().map(String::as_str));
                }
            }
        }
    }
    set
}

fn is_ooe(sentence: &Sentence, entity: &LabeledSpan, vocab: &HashSet<&str>) -> bool {
    sentence.span_tokens(entity.span).iter().any(|t| !vocab.contains(t.as_str()))
}

pub fn compute_ooe_rate(train: &Dataset, test: &Dataset) -> OoeReport {
    compute_ooe_rate_with(train, test, TokenUniverse::AllTrainTokens)
}

pub fn compute_ooe_rate_with(train: &Dataset, test: &Dataset, universe: TokenUniverse) -> OoeReport {
    let vocab = train_tokens(train, universe);
    let mut unique: HashMap<EntityKey, bool> = HashMap::new();
    for s in &test.sentences {
        for e in s.entities() {
            let ooe = is_ooe(s, &e, &vocab);
            unique.entry((s.span_text(e.span), e.label)).or_insert(ooe);
        }
    }
    let total = unique.len();
    let ooe = unique.values().filter(|&&v| v).count();
    if total == 0 {
        log::warn!("test set has no entities; OOE rate reported as 0");
    }
    OoeReport {
        ooe_rate: if total == 0 { 0.0 } else { ooe as f64 / total as f64 },
        unique_test_entities: total,
        unique_ooe_entities: ooe,
        train_token_vocab_size: vocab.len(),
        no_test_entities: total == 0,
    }
}

/// A gold test entity with its OOE status.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinnedEntity {
    pub entity: LabeledSpan,
    pub is_ooe: bool,
}

/// Per-sentence OOE tagging of every gold test entity occurrence (no deduplication).
pub type OoeBins = BTreeMap<String, Vec<BinnedEntity>>;

pub fn bin_entities_by_ooe(train: &Dataset, test: &Dataset) -> OoeBins {
    bin_entities_by_ooe_with(train, test, TokenUniverse::AllTrainTokens)
}

pub fn bin_entities_by_ooe_with(train: &Dataset, test: &Dataset, universe: TokenUniverse) -> OoeBins {
    let vocab = train_tokens(train, universe);
    bins_against(&vocab, test)
}

/// Bins `test` entities against an explicit training-token vocabulary.
pub fn bins_against(vocab: &HashSet<&str>, test: &Dataset) -> OoeBins {
    test.sentences
        .iter()
        .map(|s| {
            let tagged = s
                .entities()
                .into_iter()
                .map(|e| {
                    let is_ooe = is_ooe(s, &e, vocab);
                    BinnedEntity { entity: e, is_ooe }
                })
                .collect();
            (s.id.clone(), tagged)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub target_ooe_rate: f64,
    #[serde(default = "default_rate_tolerance")]
    pub rate_tolerance: f64,
    /// Fraction of sentences placed in the test split.
    pub split_fraction: f64,
    #[serde(default = "default_size_tolerance")]
    pub size_tolerance: f64,
    pub seed: u64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub universe: TokenUniverse,
}

fn default_rate_tolerance() -> f64 {
    0.02
}
fn default_size_tolerance() -> f64 {
    0.05
}
fn default_max_iterations() -> usize {
    5000
}

/// Swap candidates scored per hill-climbing iteration.
pub const SWAP_CANDIDATES: usize = 32;

impl PartitionSpec {
    pub fn new(target_ooe_rate: f64, split_fraction: f64, seed: u64) -> Self {
        Self {
            target_ooe_rate,
            rate_tolerance: default_rate_tolerance(),
            split_fraction,
            size_tolerance: default_size_tolerance(),
            seed,
            max_iterations: default_max_iterations(),
            universe: TokenUniverse::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.target_ooe_rate) {
            return Err(Error::Config("target OOE rate must lie in [0,1]".into()));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::Config("split fraction must lie strictly inside (0,1)".into()));
        }
        if self.rate_tolerance <= 0.0 || self.size_tolerance <= 0.0 {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Partition {
    pub train: Dataset,
    pub test: Dataset,
    pub report: OoeReport,
    pub converged: bool,
    pub iterations: usize,
}

/// Contents of `partition_manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionManifest {
    pub target: f64,
    pub realized: f64,
    pub converged: bool,
    pub seed: u64,
    pub iterations: usize,
}

impl Partition {
    pub fn manifest(&self, spec: &PartitionSpec) -> PartitionManifest {
        PartitionManifest {
            target: spec.target_ooe_rate,
            realized: self.report.ooe_rate,
            converged: self.converged,
            seed: spec.seed,
            iterations: self.iterations,
        }
    }
}

/// Interned view of the corpus used by the hill climber.
struct SwapState {
    /// Token ids counted toward the training vocabulary, per sentence.
    vocab_tokens: Vec<Vec<usize>>,
    /// Entity key ids occurring in each sentence.
    entities: Vec<Vec<usize>>,
    /// Token ids of each entity key.
    key_tokens: Vec<Vec<usize>>,
    in_test: Vec<bool>,
    train_count: Vec<u32>,
    test_occurrences: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct Score {
    error: f64,
    /// Tie-break measuring how far the entity set is from moving in the needed direction.
    slack: f64,
}

impl SwapState {
    fn new<'a>(corpus: &'a Dataset, universe: TokenUniverse, in_test: Vec<bool>) -> Self {
        let mut token_ids: HashMap<&'a str, usize> = HashMap::new();
        let mut key_ids: HashMap<EntityKey, usize> = HashMap::new();
        let mut key_tokens = Vec::new();
        let mut vocab_tokens = Vec::with_capacity(corpus.len());
        let mut entities = Vec::with_capacity(corpus.len());
        for s in &corpus.sentences {
            let mut intern = |t: &'a str| -> usize {
                let next = token_ids.len();
                *token_ids.entry(t).or_insert(next)
            };
            let ents = s.entities();
            let toks: Vec<usize> = match universe {
                TokenUniverse::AllTrainTokens => s.tokens.iter().map(|t| intern(t)).collect(),
                TokenUniverse::EntityTokensOnly => {
                    ents.iter().flat_map(|e| s.span_tokens(e.span)).map(|t| intern(t)).collect()
                }
            };
            let mut keys = Vec::new();
            for e in &ents {
                let key = (s.span_text(e.span), e.label.clone());
                let ids: Vec<usize> = s.span_tokens(e.span).iter().map(|t| intern(t)).collect();
                let next = key_ids.len();
                let id = *key_ids.entry(key).or_insert_with(|| {
                    key_tokens.push(ids);
                    next
                });
                keys.push(id);
            }
            vocab_tokens.push(toks);
            entities.push(keys);
        }
        let mut st = Self {
            train_count: vec![0; token_ids.len()],
            test_occurrences: vec![0; key_tokens.len()],
            vocab_tokens,
            entities,
            key_tokens,
            in_test,
        };
        for i in 0..st.in_test.len() {
            st.place(i, st.in_test[i], 1);
        }
        st
    }

    /// Adds (`sign = 1`) or removes (`sign = -1`) sentence `i` from the given side.
    fn place(&mut self, i: usize, test_side: bool, sign: i32) {
        if test_side {
            for &k in &self.entities[i] {
                self.test_occurrences[k] = (self.test_occurrences[k] as i32 + sign) as u32;
            }
        } else {
            for &t in &self.vocab_tokens[i] {
                self.train_count[t] = (self.train_count[t] as i32 + sign) as u32;
            }
        }
    }

    fn swap(&mut self, a: usize, b: usize) {
        let (sa, sb) = (self.in_test[a], self.in_test[b]);
        self.place(a, sa, -1);
        self.place(b, sb, -1);
        self.in_test[a] = sb;
        self.in_test[b] = sa;
        self.place(a, sb, 1);
        self.place(b, sa, 1);
    }

    fn counts(&self) -> (usize, usize) {
        let mut total = 0;
        let mut ooe = 0;
        for (k, &occ) in self.test_occurrences.iter().enumerate() {
            if occ == 0 {
                continue;
            }
            total += 1;
            if self.key_tokens[k].iter().any(|&t| self.train_count[t] == 0) {
                ooe += 1;
            }
        }
        (total, ooe)
    }

    fn rate(&self) -> f64 {
        let (total, ooe) = self.counts();
        if total == 0 {
            0.0
        } else {
            ooe as f64 / total as f64
        }
    }

    fn score(&self, target: f64) -> Score {
        let rate = self.rate();
        let raising = rate < target;
        let mut slack = 0.0;
        for (k, &occ) in self.test_occurrences.iter().enumerate() {
            if occ == 0 {
                continue;
            }
            let toks = &self.key_tokens[k];
            let min_count = toks.iter().map(|&t| self.train_count[t]).min().unwrap_or(0);
            if raising && min_count > 0 {
                slack += min_count as f64;
            } else if !raising && min_count == 0 {
                slack += toks.iter().filter(|&&t| self.train_count[t] == 0).count() as f64;
            }
        }
        Score { error: (rate - target).abs(), slack }
    }
}

/// Splits `corpus` into train/test whose OOE rate approaches `spec.target_ooe_rate`.
///
/// Starts from a seeded random split and hill-climbs with train↔test sentence swaps,
/// keeping the best of [`SWAP_CANDIDATES`] random swaps per iteration whenever it
/// improves the score. Swaps keep the split size fixed. An unreachable target yields
/// the best split found with `converged == false`.
pub fn repartition(corpus: &Dataset, spec: &PartitionSpec) -> Result<Partition> {
    spec.validate()?;
    let n = corpus.len();
    if n < 20 || corpus.entity_count() < 2 {
        return Err(Error::Config("re-partitioning needs at least 20 sentences and 2 entities".into()));
    }
    let test_size = ((spec.split_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut in_test = vec![false; n];
    for &i in &order[..test_size] {
        in_test[i] = true;
    }
    let mut state = SwapState::new(corpus, spec.universe, in_test);
    let target = spec.target_ooe_rate;
    let mut current = state.score(target);
    let mut iterations = 0;

    let mut test_idx: Vec<usize> = (0..n).filter(|&i| state.in_test[i]).collect();
    let mut train_idx: Vec<usize> = (0..n).filter(|&i| !state.in_test[i]).collect();

    while current.error > spec.rate_tolerance && iterations < spec.max_iterations {
        iterations += 1;
        let mut best: Option<(Score, usize, usize)> = None;
        for _ in 0..SWAP_CANDIDATES {
            let ti = rng.gen_range(0..test_idx.len());
            let ri = rng.gen_range(0..train_idx.len());
            let (a, b) = (test_idx[ti], train_idx[ri]);
            state.swap(a, b);
            let s = state.score(target);
            state.swap(a, b);
            if best.as_ref().is_none_or(|(bs, _, _)| s < *bs) {
                best = Some((s, ti, ri));
            }
        }
        if let Some((s, ti, ri)) = best {
            if s < current {
                state.swap(test_idx[ti], train_idx[ri]);
                std::mem::swap(&mut test_idx[ti], &mut train_idx[ri]);
                current = s;
            }
        }
    }

    let (total, ooe) = state.counts();
    let mut train = Vec::with_capacity(n - test_size);
    let mut test = Vec::with_capacity(test_size);
    for (i, s) in corpus.sentences.iter().enumerate() {
        if state.in_test[i] {
            test.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    let train = Dataset::with_labels(train, corpus.label_set.clone())?;
    let test = Dataset::with_labels(test, corpus.label_set.clone())?;
    let vocab_size = state.train_count.iter().filter(|&&c| c > 0).count();
    let report = OoeReport {
        ooe_rate: if total == 0 { 0.0 } else { ooe as f64 / total as f64 },
        unique_test_entities: total,
        unique_ooe_entities: ooe,
        train_token_vocab_size: vocab_size,
        no_test_entities: total == 0,
    };
    Ok(Partition { converged: current.error <= spec.rate_tolerance, train, test, report, iterations })
}
