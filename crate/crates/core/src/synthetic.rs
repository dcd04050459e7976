//! Seeded generator of small NER corpora whose test entities are all out-of-entity.
//!
//! Each sentence is a context frame such as `"<X> is a wonderful city ."` with the
//! `<X>` slot filled by a name of the frame's type. Train, dev and test sentences
//! draw names from disjoint pools, so every test mention contains a token that
//! never occurs in training.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Sentence, OUTSIDE};
use crate::error::{Error, Result};
use crate::ooe::compute_ooe_rate;

/// Slot marker inside a context frame.
pub const SLOT: &str = "<X>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityTypeSpec {
    pub name: String,
    pub context_frames: Vec<String>,
    pub train_names: Vec<String>,
    pub test_names: Vec<String>,
    /// Optional third pool for a development split; must also be disjoint from train.
    #[serde(default)]
    pub dev_names: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub test: usize,
    #[serde(default)]
    pub dev: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub types: Vec<EntityTypeSpec>,
    pub sentences_per_split: SplitSizes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorManifest {
    pub seed: u64,
    pub train_sentences: usize,
    pub dev_sentences: usize,
    pub test_sentences: usize,
    pub test_ooe_rate: f64,
    pub dev_ooe_rate: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
    pub manifest: GeneratorManifest,
}

fn words(s: &str) -> impl Iterator<Item = &str> {
    s.split_whitespace()
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.types.len() < 2 {
            return Err(Error::Config("the generator needs at least two entity types".into()));
        }
        let mut train_vocab: HashSet<&str> = HashSet::new();
        for ty in &self.types {
            if ty.name.is_empty() || ty.name == OUTSIDE || ty.name.contains(char::is_whitespace) {
                return Err(Error::Config(format!("invalid entity type name `{}`", ty.name)));
            }
            if ty.context_frames.len() < 3 {
                return Err(Error::Config(format!("type `{}` needs at least three context frames", ty.name)));
            }
            for f in &ty.context_frames {
                if words(f).filter(|w| *w == SLOT).count() != 1 {
                    return Err(Error::Config(format!("frame `{f}` must contain exactly one {SLOT} slot")));
                }
                train_vocab.extend(words(f).filter(|w| *w != SLOT));
            }
            if ty.train_names.is_empty() || ty.test_names.is_empty() {
                return Err(Error::Config(format!("type `{}` needs train and test names", ty.name)));
            }
            if ty.dev_names.is_empty() && self.sentences_per_split.dev > 0 {
                return Err(Error::Config(format!("type `{}` has no dev names", ty.name)));
            }
            for n in ty.train_names.iter().chain(&ty.test_names).chain(&ty.dev_names) {
                if words(n).next().is_none() {
                    return Err(Error::Config(format!("type `{}` has an empty name", ty.name)));
                }
            }
            train_vocab.extend(ty.train_names.iter().flat_map(|n| words(n)));
        }
        for ty in &self.types {
            for n in ty.test_names.iter().chain(&ty.dev_names) {
                if let Some(w) = words(n).find(|w| train_vocab.contains(w)) {
                    return Err(Error::Config(format!(
                        "name pools overlap: `{w}` in held-out name `{n}` also occurs in training material"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn make_sentence(id: String, frame: &str, name: &str, ty: &str) -> Sentence {
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    for w in words(frame) {
        if w == SLOT {
            for (i, n) in words(name).enumerate() {
                tokens.push(n.to_string());
                tags.push(format!("{}-{ty}", if i == 0 { 'B' } else { 'I' }));
            }
        } else {
            tokens.push(w.to_string());
            tags.push(OUTSIDE.to_string());
        }
    }
    Sentence { id, tokens, bio_tags: tags }
}

#[derive(Clone, Copy)]
enum Pool {
    Train,
    Dev,
    Test,
}

fn generate_split(cfg: &GeneratorConfig, pool: Pool, count: usize, prefix: &str, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let mut sentences = Vec::with_capacity(count);
    for i in 0..count {
        let ty = &cfg.types[i % cfg.types.len()];
        let frame = ty.context_frames.choose(rng).expect("validated non-empty");
        let names = match pool {
            Pool::Train => &ty.train_names,
            Pool::Dev => &ty.dev_names,
            Pool::Test => &ty.test_names,
        };
        let name = &names[rng.gen_range(0..names.len())];
        sentences.push(make_sentence(format!("{prefix}-{}", i + 1), frame, name, &ty.name));
    }
    sentences.shuffle(rng);
    let labels = {
        let mut l: Vec<String> = cfg.types.iter().map(|t| t.name.clone()).collect();
        l.sort();
        l
    };
    Dataset::with_labels(sentences, labels)
}

/// Generates train/dev/test splits; identical seeds give identical corpora.
pub fn generate_synthetic_ooe_corpus(cfg: &GeneratorConfig, seed: u64) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = cfg.sentences_per_split;
    let train = generate_split(cfg, Pool::Train, sizes.train, "train", &mut rng)?;
    let dev = generate_split(cfg, Pool::Dev, sizes.dev, "dev", &mut rng)?;
    let test = generate_split(cfg, Pool::Test, sizes.test, "test", &mut rng)?;
    let manifest = GeneratorManifest {
        seed,
        train_sentences: train.len(),
        dev_sentences: dev.len(),
        test_sentences: test.len(),
        test_ooe_rate: compute_ooe_rate(&train, &test).ooe_rate,
        dev_ooe_rate: compute_ooe_rate(&train, &dev).ooe_rate,
    };
    Ok(SyntheticCorpus { train, dev, test, manifest })
}

/// Deterministic pool of distinct pseudo-words, e.g. for populating name pools.
///
/// Words are built from consonant–vowel syllables and capitalized; every word in
/// the returned list is unique.
pub fn pseudo_words(count: usize, syllables: usize, seed: u64) -> Vec<String> {
    const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "kr", "st", "tr"];
    const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(&mut rng).expect("non-empty"));
            w.push_str(VOWELS.choose(&mut rng).expect("non-empty"));
        }
        let mut chars = w.chars();
        let first = chars.next().expect("non-empty").to_ascii_uppercase();
        let w: String = std::iter::once(first).chain(chars).collect();
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// A ready-made three-type configuration (PER, LOC, ORG) with procedurally named pools.
///
/// Names are one or two pseudo-words; the train, dev and test pools never share a word.
pub fn default_generator_config(names_per_pool: usize, sizes: SplitSizes, seed: u64) -> GeneratorConfig {
    let frames = [
        (
            "PER",
            vec![
                "<X> said the plan would work .",
                "yesterday <X> told reporters about the deal .",
                "the coach praised <X> after the match .",
                "<X> was born in a small village .",
                "according to <X> , the results look good .",
                "we met <X> at the conference .",
            ],
        ),
        (
            "LOC",
            vec![
                "<X> is a wonderful city .",
                "they travelled to <X> last summer .",
                "heavy rain fell across <X> on monday .",
                "the river flows through <X> .",
                "tourists love the old streets of <X> .",
                "the mayor of <X> opened a park .",
            ],
        ),
        (
            "ORG",
            vec![
                "<X> reported higher profits this quarter .",
                "shares of <X> rose sharply .",
                "she joined <X> as an engineer .",
                "<X> announced a new product line .",
                "the board of <X> approved the merger .",
                "analysts expect <X> to hire more staff .",
            ],
        ),
    ];
    let pools = ["train", "dev", "test"];
    let total_words = frames.len() * pools.len() * names_per_pool * 2;
    let vocab = pseudo_words(total_words, 2, seed);
    let mut next = vocab.into_iter();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut types = Vec::new();
    for (name, fr) in frames {
        let mut pool_names: Vec<Vec<String>> = Vec::new();
        for _ in pools {
            let names = (0..names_per_pool)
                .map(|_| {
                    let first = next.next().expect("enough words");
                    let second = next.next().expect("enough words");
                    if rng.gen_bool(0.5) {
                        first
                    } else {
                        format!("{first} {second}")
                    }
                })
                .collect();
            pool_names.push(names);
        }
        let test_names = pool_names.pop().expect("three pools");
        let dev_names = pool_names.pop().expect("three pools");
        let train_names = pool_names.pop().expect("three pools");
        types.push(EntityTypeSpec {
            name: name.to_string(),
            context_frames: fr.into_iter().map(String::from).collect(),
            train_names,
            test_names,
            dev_names,
        });
    }
    GeneratorConfig { types, sentences_per_split: sizes }
}
