//! Checkpoint directories: `params.json`, `config.json`, `vocab.json`, `metrics_history.jsonl`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::Vocabulary;
use crate::error::{Error, Result};
use crate::model::SpanNer;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::trainer::{EpochMetrics, TrainConfig};

pub const PARAMS_FILE: &str = "params.json";
pub const CONFIG_FILE: &str = "config.json";
pub const VOCAB_FILE: &str = "vocab.json";
pub const HISTORY_FILE: &str = "metrics_history.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamsHeader {
    d: usize,
    num_layers: usize,
    num_heads: usize,
    vocab_hash: String,
    seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredParam {
    name: String,
    rows: usize,
    cols: usize,
    /// Widened to f64, which round-trips both precisions exactly.
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamsFile {
    header: ParamsHeader,
    params: Vec<StoredParam>,
}

/// Contents of `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: TrainConfig,
    /// Entity types in canonical order (without `O`).
    pub entity_types: Vec<String>,
    pub epoch: usize,
    pub best_dev_f1: f64,
}

#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub model: SpanNer<T>,
    pub meta: CheckpointMeta,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn vocab_hash(&self) -> String {
        self.model.vocab().hash()
    }

    /// Writes the checkpoint files into `dir` (created if missing).
    pub fn save(&self, dir: impl AsRef<Path>, history: &[EpochMetrics]) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let cfg = &self.meta.config;
        let header = ParamsHeader {
            d: cfg.d,
            num_layers: cfg.num_layers,
            num_heads: cfg.num_heads,
            vocab_hash: self.vocab_hash(),
            seed: cfg.seed,
        };
        let params = self
            .model
            .params()
            .iter()
            .map(|(_, p)| StoredParam {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
                data: p.value.data().iter().map(|v| v.to_f64_lossy()).collect(),
            })
            .collect();
        fs::write(dir.join(PARAMS_FILE), serde_json::to_vec(&ParamsFile { header, params })?)?;
        fs::write(dir.join(CONFIG_FILE), serde_json::to_vec_pretty(&self.meta)?)?;
        fs::write(dir.join(VOCAB_FILE), serde_json::to_vec(self.model.vocab())?)?;
        let mut f = fs::File::create(dir.join(HISTORY_FILE))?;
        for row in history {
            writeln!(f, "{}", serde_json::to_string(row)?)?;
        }
        Ok(())
    }

    /// Loads `dir` using its own `vocab.json`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let vocab: Vocabulary = serde_json::from_slice(&fs::read(dir.join(VOCAB_FILE))?)
            .map_err(|e| Error::Checkpoint(format!("{VOCAB_FILE}: {e}")))?;
        Self::load_with_vocab(dir, vocab)
    }

    /// Loads `dir` against an externally supplied vocabulary; fails if the hashes differ.
    pub fn load_with_vocab(dir: impl AsRef<Path>, vocab: Vocabulary) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: CheckpointMeta = serde_json::from_slice(&fs::read(dir.join(CONFIG_FILE))?)?;
        let file: ParamsFile = serde_json::from_slice(&fs::read(dir.join(PARAMS_FILE))?)?;
        if file.header.vocab_hash != vocab.hash() {
            return Err(Error::VocabMismatch { expected: file.header.vocab_hash, actual: vocab.hash() });
        }
        let cfg = &meta.config;
        if (file.header.d, file.header.num_layers, file.header.num_heads) != (cfg.d, cfg.num_layers, cfg.num_heads) {
            return Err(Error::Checkpoint("parameter header disagrees with config.json".into()));
        }
        let mut model = SpanNer::new(cfg.encoder_config(), cfg.head_config(), vocab, &meta.entity_types)?;
        let store = model.params_mut();
        if file.params.len() != store.len() {
            return Err(Error::Checkpoint(format!("expected {} tensors, found {}", store.len(), file.params.len())));
        }
        for p in file.params {
            let id = store.find(&p.name).ok_or_else(|| Error::Checkpoint(format!("unknown parameter `{}`", p.name)))?;
            let slot = store.get_mut(id);
            if slot.shape() != (p.rows, p.cols) || p.data.len() != p.rows * p.cols {
                return Err(Error::Checkpoint(format!("shape mismatch for `{}`", p.name)));
            }
            *slot = Tensor::from_vec(p.rows, p.cols, p.data.into_iter().map(T::from_f64_lossy).collect());
        }
        Ok(Self { model, meta })
    }
}

/// Reads `metrics_history.jsonl`.
pub fn load_history(dir: impl AsRef<Path>) -> Result<Vec<EpochMetrics>> {
    let text = fs::read_to_string(dir.as_ref().join(HISTORY_FILE))?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}
