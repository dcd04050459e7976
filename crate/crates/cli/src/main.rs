use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use sner::checkpoint::{Checkpoint, CheckpointMeta};
use sner::corpus::{parse_conll, BioMode, Dataset};
use sner::encoder::{build_vocabulary, Vocabulary};
use sner::inference::{binned_f1, micro_f1, predictions_to_conll, FpAttribution};
use sner::ooe::{bins_against, compute_ooe_rate_with, repartition, PartitionSpec, TokenUniverse};
use sner::span_model::canonical_labels;
use sner::synthetic::{default_generator_config, generate_synthetic_ooe_corpus, GeneratorConfig, SplitSizes};
use sner::templates::{fill, ContrastTargets, TemplateSet, TypeTag};
use sner::trainer::{predict, train, TrainConfig};

const EXIT_INPUT: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_MISMATCH: u8 = 4;

#[derive(Parser)]
#[command(name = "sner", version, about = "Span-based NER for out-of-entity mentions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report the OOE rate of a test file against a training file.
    Analyze(AnalyzeArgs),
    /// Re-split a corpus so the test side hits a target OOE rate.
    Partition(PartitionArgs),
    /// Train one model per seed.
    Train(Box<TrainArgs>),
    /// Score a trained model on a labeled file.
    Eval(EvalArgs),
    /// Print every template filled with a span and type.
    FillTemplates(FillArgs),
    /// Write a synthetic corpus whose test entities are all out-of-entity.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Count only tokens inside training entities as seen.
    #[arg(long)]
    entity_tokens_only: bool,
    #[arg(long)]
    strict_bio: bool,
    /// Directory for `ooe_report.json` and the run manifest.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PartitionArgs {
    /// One or more CoNLL files, merged before splitting.
    #[arg(long, required = true, num_args = 1..)]
    corpus: Vec<PathBuf>,
    #[arg(long)]
    ooe_rate: f64,
    /// Fraction of sentences placed in the test split.
    #[arg(long, default_value_t = 0.2)]
    split: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.02)]
    rate_tolerance: f64,
    #[arg(long, default_value_t = 0.05)]
    size_tolerance: f64,
    #[arg(long, default_value_t = 5000)]
    max_iterations: usize,
    #[arg(long)]
    entity_tokens_only: bool,
    #[arg(long)]
    strict_bio: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    /// JSON training configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Starting profile before the config file and flags are applied.
    #[arg(long, value_parser = ["default", "desk", "full-scale"], default_value = "default")]
    profile: String,
    /// Template file; the shipped set is used when omitted.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Train without the template branch.
    #[arg(long)]
    no_templates: bool,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated seeds, one model each.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Train all seeds concurrently.
    #[arg(long)]
    parallel_seeds: bool,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    classifier_lr: Option<f64>,
    #[arg(long)]
    encoder_lr: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    max_span_length: Option<usize>,
    #[arg(long)]
    max_tokens: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    d_prime: Option<usize>,
    #[arg(long)]
    unk_replace_prob: Option<f64>,
    /// Drop the sentence vector from span representations.
    #[arg(long)]
    no_context: bool,
    /// Also contrast every non-entity span against the none template.
    #[arg(long)]
    contrast_o_spans: bool,
    /// Stop gradients through the template encodings.
    #[arg(long)]
    detach_templates: bool,
    #[arg(long)]
    strict_bio: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Add OOE / in-vocabulary breakdowns.
    #[arg(long)]
    bins: bool,
    /// Training file defining seen tokens for `--bins` (default: the model's training vocabulary).
    #[arg(long)]
    train: Option<PathBuf>,
    /// Vocabulary file to check against the checkpoint instead of its own.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Leave predictions that match no gold entity out of the bins.
    #[arg(long)]
    exclude_unmatched: bool,
    #[arg(long)]
    strict_bio: bool,
    /// Directory for `metrics.json`, `predictions.conll` and the run manifest.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FillArgs {
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    span: String,
    /// Entity label, or NONE for the none-entity patterns.
    #[arg(long = "type")]
    type_label: String,
}

#[derive(Args)]
struct GenerateArgs {
    /// Generator JSON; the built-in three-type generator is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    names_per_pool: usize,
    #[arg(long, default_value_t = 500)]
    train_sentences: usize,
    #[arg(long, default_value_t = 200)]
    dev_sentences: usize,
    #[arg(long, default_value_t = 200)]
    test_sentences: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Error carrying the process exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        let code = match error.downcast_ref::<sner::Error>() {
            Some(sner::Error::VocabMismatch { .. } | sner::Error::Checkpoint(_)) => EXIT_MISMATCH,
            _ => EXIT_INPUT,
        };
        Self { code, error }
    }
}

type CmdResult = Result<u8, Failure>;

#[derive(Serialize)]
struct RunManifest {
    command: String,
    args: Vec<String>,
    config: Value,
    seeds: Vec<u64>,
    code_version: String,
    started_unix: u64,
    finished_unix: u64,
    outputs: Vec<PathBuf>,
}

/// Seconds since the epoch, pinned by `SOURCE_DATE_EPOCH` when set so reruns are byte-identical.
fn now_unix() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok()) {
        return t;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn code_version() -> String {
    match option_env!("SNER_GIT_DESCRIBE") {
        Some(g) => format!("{} ({g})", env!("CARGO_PKG_VERSION")),
        None => env!("CARGO_PKG_VERSION").to_string(),
    }
}

struct Run {
    command: &'static str,
    started: u64,
}

impl Run {
    fn start(command: &'static str) -> Self {
        Self { command, started: now_unix() }
    }

    fn finish(&self, dir: &Path, config: Value, seeds: Vec<u64>, outputs: Vec<PathBuf>) -> anyhow::Result<()> {
        let m = RunManifest {
            command: self.command.to_string(),
            args: std::env::args().skip(1).collect(),
            config,
            seeds,
            code_version: code_version(),
            started_unix: self.started,
            finished_unix: now_unix(),
            outputs,
        };
        write_json(&dir.join("manifest.json"), &m)
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn bio_mode(strict: bool) -> BioMode {
    if strict {
        BioMode::Strict
    } else {
        BioMode::Repair
    }
}

fn load(path: &Path, strict: bool) -> anyhow::Result<Dataset> {
    parse_conll(path, bio_mode(strict)).with_context(|| format!("reading {}", path.display()))
}

fn universe(entity_tokens_only: bool) -> TokenUniverse {
    if entity_tokens_only {
        TokenUniverse::EntityTokensOnly
    } else {
        TokenUniverse::AllTrainTokens
    }
}

fn analyze(a: AnalyzeArgs) -> CmdResult {
    let run = Run::start("analyze");
    let train = load(&a.train, a.strict_bio)?;
    let test = load(&a.test, a.strict_bio)?;
    let report = compute_ooe_rate_with(&train, &test, universe(a.entity_tokens_only));
    println!("ooe_rate {:.3}", report.ooe_rate);
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        let path = dir.join("ooe_report.json");
        write_json(&path, &report)?;
        let config = json!({"train": a.train, "test": a.test, "entity_tokens_only": a.entity_tokens_only});
        run.finish(dir, config, vec![], vec![path])?;
    }
    Ok(0)
}

fn partition(a: PartitionArgs) -> CmdResult {
    let run = Run::start("partition");
    let parts = a.corpus.iter().map(|p| load(p, a.strict_bio)).collect::<anyhow::Result<Vec<_>>>()?;
    let merged = if parts.len() == 1 {
        parts.into_iter().next().expect("one part")
    } else {
        // Sentence ids restart in every file; prefix them with the file index.
        let mut sentences = Vec::new();
        for (i, d) in parts.into_iter().enumerate() {
            sentences.extend(d.sentences.into_iter().map(|mut s| {
                s.id = format!("f{}:{}", i + 1, s.id);
                s
            }));
        }
        Dataset::new(sentences)?
    };
    let spec = PartitionSpec {
        target_ooe_rate: a.ooe_rate,
        rate_tolerance: a.rate_tolerance,
        split_fraction: a.split,
        size_tolerance: a.size_tolerance,
        seed: a.seed,
        max_iterations: a.max_iterations,
        universe: universe(a.entity_tokens_only),
    };
    let p = repartition(&merged, &spec)?;
    fs::create_dir_all(&a.out)?;
    let train_path = a.out.join("train.conll");
    let test_path = a.out.join("test.conll");
    let manifest_path = a.out.join("partition_manifest.json");
    let report_path = a.out.join("ooe_report.json");
    p.train.write_conll(&train_path)?;
    p.test.write_conll(&test_path)?;
    write_json(&manifest_path, &p.manifest(&spec))?;
    write_json(&report_path, &p.report)?;
    println!(
        "realized ooe_rate {:.4} (target {:.4}), test {} / {} sentences, converged {}",
        p.report.ooe_rate,
        a.ooe_rate,
        p.test.len(),
        merged.len(),
        p.converged
    );
    run.finish(&a.out, serde_json::to_value(&spec)?, vec![a.seed], vec![train_path, test_path, manifest_path, report_path])?;
    Ok(if p.converged { 0 } else { EXIT_NOT_CONVERGED })
}

/// Profile, then config file, then flags.
fn resolve_config(a: &TrainArgs) -> anyhow::Result<TrainConfig> {
    let profile = match a.profile.as_str() {
        "desk" => TrainConfig::desk(),
        "full-scale" => TrainConfig::full_scale(),
        _ => TrainConfig::default(),
    };
    let mut value = serde_json::to_value(&profile)?;
    if let Some(path) = &a.config {
        let file: Value = serde_json::from_str(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)
            .with_context(|| format!("parsing {}", path.display()))?;
        let Value::Object(map) = file else { bail!("{} must hold a JSON object", path.display()) };
        for (k, v) in map {
            if value.get(&k).is_none() {
                bail!("unknown configuration key `{k}` in {}", path.display());
            }
            value[k] = v;
        }
    }
    let mut cfg: TrainConfig = serde_json::from_value(value)?;
    macro_rules! flag {
        ($field:ident, $opt:expr) => {
            if let Some(v) = $opt {
                cfg.$field = v;
            }
        };
    }
    flag!(lambda_weight, a.lambda);
    flag!(temperature, a.temperature);
    flag!(epochs, a.epochs);
    flag!(batch_size, a.batch_size);
    flag!(classifier_lr, a.classifier_lr);
    flag!(encoder_lr, a.encoder_lr);
    flag!(dropout_rate, a.dropout);
    flag!(max_span_length, a.max_span_length);
    flag!(max_tokens, a.max_tokens);
    flag!(d, a.d);
    flag!(d_prime, a.d_prime);
    flag!(unk_replace_prob, a.unk_replace_prob);
    if a.no_context {
        cfg.use_context = false;
    }
    if a.contrast_o_spans {
        cfg.contrast_targets = ContrastTargets::AllSpans;
    }
    if a.detach_templates {
        cfg.detach_templates = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_templates(path: Option<&Path>) -> anyhow::Result<TemplateSet> {
    match path {
        Some(p) => TemplateSet::load(p).with_context(|| format!("loading templates from {}", p.display())),
        None => Ok(TemplateSet::default_set()),
    }
}

#[derive(Serialize)]
struct SeedSummary {
    seed: u64,
    best_epoch: usize,
    best_dev_micro_f1: f64,
    checkpoint: PathBuf,
}

fn train_seed(
    seed: u64,
    base: &TrainConfig,
    train_set: &Dataset,
    dev: &Dataset,
    templates: Option<&TemplateSet>,
    vocab: &Vocabulary,
    out: &Path,
) -> anyhow::Result<SeedSummary> {
    let run = Run::start("train");
    let cfg = TrainConfig { seed, ..base.clone() };
    let outcome = train::<f32>(train_set, dev, templates, vocab.clone(), &cfg)?;
    let dir = out.join(format!("seed-{seed}"));
    let meta = CheckpointMeta {
        config: cfg.clone(),
        entity_types: outcome.model.head().entity_types().to_vec(),
        epoch: outcome.best_epoch,
        best_dev_f1: outcome.best_dev_f1,
    };
    Checkpoint { model: outcome.model, meta }.save(&dir, &outcome.history)?;
    log::info!("seed {seed}: best dev micro-F1 {:.4} at epoch {}", outcome.best_dev_f1, outcome.best_epoch);
    run.finish(&dir, serde_json::to_value(&cfg)?, vec![seed], vec![dir.clone()])?;
    Ok(SeedSummary { seed, best_epoch: outcome.best_epoch, best_dev_micro_f1: outcome.best_dev_f1, checkpoint: dir })
}

/// Writes one checkpoint and one manifest per seed, plus `summary.json`.
fn train_cmd(a: TrainArgs) -> CmdResult {
    let cfg = resolve_config(&a)?;
    if a.seeds.is_empty() {
        return Err(anyhow::anyhow!("--seeds must list at least one seed").into());
    }
    let train_set = load(&a.train, a.strict_bio)?;
    let dev = load(&a.dev, a.strict_bio)?;
    let templates = if a.no_templates { None } else { Some(load_templates(a.templates.as_deref())?) };
    let mut types = train_set.label_set.clone();
    types.extend(dev.label_set.iter().cloned());
    let types = canonical_labels(&types);
    if let Some(t) = &templates {
        t.validate_labels(&types[..types.len() - 1])?;
    }
    let vocab = build_vocabulary(&train_set, templates.as_ref());
    fs::create_dir_all(&a.out)?;
    let one = |seed| train_seed(seed, &cfg, &train_set, &dev, templates.as_ref(), &vocab, &a.out);
    let summaries: Vec<SeedSummary> = if a.parallel_seeds {
        std::thread::scope(|s| {
            let handles: Vec<_> = a.seeds.iter().map(|&seed| s.spawn(move || one(seed))).collect();
            handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect::<anyhow::Result<_>>()
        })?
    } else {
        a.seeds.iter().map(|&seed| one(seed)).collect::<anyhow::Result<_>>()?
    };
    let mean = summaries.iter().map(|s| s.best_dev_micro_f1).sum::<f64>() / summaries.len() as f64;
    let summary_path = a.out.join("summary.json");
    write_json(&summary_path, &json!({"seeds": summaries, "mean_dev_micro_f1": mean}))?;
    println!("mean dev micro-F1 over {} seed(s): {mean:.4}", summaries.len());
    Ok(0)
}

fn eval_cmd(a: EvalArgs) -> CmdResult {
    let run = Run::start("eval");
    let ckpt = match &a.vocab {
        Some(p) => {
            let vocab: Vocabulary = serde_json::from_str(&fs::read_to_string(p)?)
                .map_err(|e| sner::Error::Checkpoint(format!("{}: {e}", p.display())))?;
            Checkpoint::<f32>::load_with_vocab(&a.model, vocab)?
        }
        None => Checkpoint::<f32>::load(&a.model)?,
    };
    let test = load(&a.test, a.strict_bio)?;
    let preds = predict(&ckpt.model, &test.sentences)?;
    let report = if a.bins {
        let train_tokens: Vec<String> = match &a.train {
            Some(p) => load(p, a.strict_bio)?.sentences.into_iter().flat_map(|s| s.tokens).collect(),
            None => ckpt.model.vocab().train_tokens().map(String::from).collect(),
        };
        let seen: HashSet<&str> = train_tokens.iter().map(String::as_str).collect();
        let attribution = if a.exclude_unmatched { FpAttribution::Exclude } else { FpAttribution::NearestGold };
        binned_f1(&preds, &test, &bins_against(&seen, &test), attribution)?
    } else {
        micro_f1(&preds, &test)?
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        let metrics = dir.join("metrics.json");
        let conll = dir.join("predictions.conll");
        write_json(&metrics, &report)?;
        fs::write(&conll, predictions_to_conll(&preds, &test)?)?;
        let config = json!({"model": a.model, "test": a.test, "bins": a.bins});
        run.finish(dir, config, vec![ckpt.meta.config.seed], vec![metrics, conll])?;
    }
    Ok(0)
}

fn fill_cmd(a: FillArgs) -> CmdResult {
    let set = load_templates(a.templates.as_deref())?;
    let tag = if a.type_label == "NONE" { TypeTag::NoneEntity } else { TypeTag::Label(a.type_label.clone()) };
    let label = match &tag {
        TypeTag::Label(l) => Some(l.as_str()),
        TypeTag::NoneEntity => None,
    };
    for t in &set.templates {
        println!("{}", fill(t, &a.span, label, &set.translation)?);
    }
    Ok(0)
}

fn generate_cmd(a: GenerateArgs) -> CmdResult {
    let run = Run::start("generate");
    let cfg: GeneratorConfig = match &a.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => default_generator_config(
            a.names_per_pool,
            SplitSizes { train: a.train_sentences, test: a.test_sentences, dev: a.dev_sentences },
            a.seed,
        ),
    };
    let corpus = generate_synthetic_ooe_corpus(&cfg, a.seed)?;
    fs::create_dir_all(&a.out)?;
    let mut outputs = Vec::new();
    for (name, d) in [("train", &corpus.train), ("dev", &corpus.dev), ("test", &corpus.test)] {
        if d.is_empty() {
            continue;
        }
        let p = a.out.join(format!("{name}.conll"));
        d.write_conll(&p)?;
        outputs.push(p);
    }
    let gm = a.out.join("generator_manifest.json");
    write_json(&gm, &corpus.manifest)?;
    outputs.push(gm);
    println!("test ooe_rate {:.3}", corpus.manifest.test_ooe_rate);
    run.finish(&a.out, serde_json::to_value(&cfg)?, vec![a.seed], outputs)?;
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Partition(a) => partition(a),
        Command::Train(a) => train_cmd(*a),
        Command::Eval(a) => eval_cmd(a),
        Command::FillTemplates(a) => fill_cmd(a),
        Command::Generate(a) => generate_cmd(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
