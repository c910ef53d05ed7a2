//! Settings from flags, an optional config file, and built-in defaults, in
//! that order of precedence.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use seqtag::corpus::{Scheme, DEFAULT_MAX_SENTENCE_LEN};
use seqtag::features::{EmbeddingMode, FeatureConfig};
use seqtag::model::{CellKind, DEFAULT_DROPOUT, DEFAULT_HIDDEN, DEFAULT_LAYERS};
use seqtag::train::{RunSpec, TrainConfig, DEFAULT_EMBEDDING_DIM};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_DEV_FRACTION: f64 = 0.1;
pub const DEFAULT_MODEL_PATH: &str = "model.sqtg";

/// Every key a config file may set. Keys mirror the long flag names with
/// `-` replaced by `_`. A run manifest is accepted too; its `config` table
/// is used.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub quiet: Option<bool>,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub dev_fraction: Option<f64>,
    pub embeddings: Option<PathBuf>,
    pub embedding_mode: Option<String>,
    pub embedding_dim: Option<usize>,
    pub features: Option<String>,
    pub regex_file: Option<PathBuf>,
    pub hidden: Option<usize>,
    pub layers: Option<usize>,
    pub cell: Option<String>,
    pub bidi: Option<bool>,
    pub dropout: Option<f64>,
    pub lr: Option<f64>,
    pub clip: Option<f64>,
    pub patience: Option<usize>,
    pub max_epochs: Option<usize>,
    pub target_f1: Option<f64>,
    pub scheme: Option<String>,
    pub lenient: Option<bool>,
    pub entity_types: Option<String>,
    pub max_sentence_len: Option<usize>,
    pub out: Option<PathBuf>,
    pub preset: Option<String>,
    pub rows: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub keep_models: Option<bool>,
    pub model: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub types: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("{}: {}", path.display(), e)))?;
        let bad = |m: String| CliError::input(format!("{}: {}", path.display(), m));
        let is_json = path.extension().map_or(false, |e| e == "json");
        if is_json {
            let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
            if value.get("tool").and_then(|t| t.as_str()) == Some(crate::manifest::TOOL) {
                value = value.get_mut("config").map(serde_json::Value::take).unwrap_or_default();
            }
            strip_nulls(&mut value);
            serde_json::from_value(value).map_err(|e| bad(e.to_string()))
        } else {
            toml::from_str(&text).map_err(|e| bad(e.to_string()))
        }
    }
}

fn strip_nulls(v: &mut serde_json::Value) {
    if let Some(map) = v.as_object_mut() {
        map.retain(|_, v| !v.is_null());
    }
}

/// Flags shared by `train` and `ablate`.
#[derive(Args, Debug, Clone, Default)]
pub struct TrainFlags {
    /// Training corpus (CoNLL: word POS chunk label)
    #[arg(long, value_name = "CONLL")]
    pub train: Option<PathBuf>,
    /// Dev corpus; without it a fraction of the training set is held out
    #[arg(long, value_name = "CONLL")]
    pub dev: Option<PathBuf>,
    /// Held-out fraction when no dev corpus is given [default: 0.1]
    #[arg(long)]
    pub dev_fraction: Option<f64>,
    /// Word vectors in word2vec text format
    #[arg(long, value_name = "VEC")]
    pub embeddings: Option<PathBuf>,
    /// skipgram | random | onehot [default: skipgram with --embeddings, else random]
    #[arg(long)]
    pub embedding_mode: Option<String>,
    /// Width of random word vectors, or expected width of --embeddings [default: 300]
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    /// Comma-separated feature groups: word,pos,chunk,case,regex [default: word,pos,chunk,regex]
    #[arg(long)]
    pub features: Option<String>,
    /// Regex rule file replacing the built-in rules
    #[arg(long, value_name = "PATH")]
    pub regex_file: Option<PathBuf>,
    /// Hidden units per direction [default: 100]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Stacked recurrent layers [default: 2]
    #[arg(long)]
    pub layers: Option<usize>,
    /// lstm | rnn [default: lstm]
    #[arg(long)]
    pub cell: Option<String>,
    /// Bidirectional layers (default)
    #[arg(long, overrides_with = "no_bidi")]
    pub bidi: bool,
    /// Forward-only layers
    #[arg(long, overrides_with = "bidi")]
    pub no_bidi: bool,
    /// Dropout ratio on layer outputs [default: 0.5]
    #[arg(long)]
    pub dropout: Option<f64>,
    /// SGD learning rate [default: 0.05]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Global gradient-norm clip [default: 5.0]
    #[arg(long)]
    pub clip: Option<f64>,
    /// Epochs without dev improvement before stopping [default: 5]
    #[arg(long)]
    pub patience: Option<usize>,
    /// [default: 100]
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Stop once dev F1 reaches this value
    #[arg(long)]
    pub target_f1: Option<f64>,
    /// Label scheme of the input files: iob1 | iob2 [default: iob2]
    #[arg(long)]
    pub scheme: Option<String>,
    /// Repair malformed label sequences instead of rejecting them
    #[arg(long)]
    pub lenient: bool,
    /// Entity types [default: PER,LOC,ORG,MISC]
    #[arg(long)]
    pub entity_types: Option<String>,
    /// Split longer sentences at entity boundaries [default: 150]
    #[arg(long)]
    pub max_sentence_len: Option<usize>,
}

/// Everything `train` and `ablate` need, fully resolved. Serialized into the
/// run manifest with the same keys a config file uses.
#[derive(Debug, Clone, Serialize)]
pub struct TrainSettings {
    pub seed: u64,
    pub train: PathBuf,
    pub dev: Option<PathBuf>,
    pub dev_fraction: f64,
    pub embeddings: Option<PathBuf>,
    pub embedding_mode: String,
    pub embedding_dim: usize,
    pub features: String,
    pub regex_file: Option<PathBuf>,
    pub hidden: usize,
    pub layers: usize,
    pub cell: String,
    pub bidi: bool,
    pub dropout: f64,
    pub lr: f64,
    pub clip: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub target_f1: Option<f64>,
    pub scheme: String,
    pub lenient: bool,
    pub entity_types: String,
    pub max_sentence_len: usize,
    #[serde(skip)]
    pub embedding_dim_explicit: bool,
}

fn parse<T: std::str::FromStr<Err = String>>(what: &str, s: &str) -> Result<T, CliError> {
    s.parse().map_err(|e: String| CliError::usage(format!("--{}: {}", what, e)))
}

impl TrainSettings {
    pub fn resolve(seed: Option<u64>, flags: &TrainFlags, file: &FileConfig) -> Result<Self, CliError> {
        let train = flags
            .train
            .clone()
            .or_else(|| file.train.clone())
            .ok_or_else(|| CliError::usage("--train is required"))?;
        let embeddings = flags.embeddings.clone().or_else(|| file.embeddings.clone());
        let default_mode = if embeddings.is_some() { "skipgram" } else { "random" };
        let bidi = if flags.no_bidi {
            false
        } else if flags.bidi {
            true
        } else {
            file.bidi.unwrap_or(true)
        };
        let s = TrainSettings {
            seed: seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            train,
            dev: flags.dev.clone().or_else(|| file.dev.clone()),
            dev_fraction: flags.dev_fraction.or(file.dev_fraction).unwrap_or(DEFAULT_DEV_FRACTION),
            embeddings,
            embedding_mode: flags
                .embedding_mode
                .clone()
                .or_else(|| file.embedding_mode.clone())
                .unwrap_or_else(|| default_mode.to_string()),
            embedding_dim: flags.embedding_dim.or(file.embedding_dim).unwrap_or(DEFAULT_EMBEDDING_DIM),
            features: flags
                .features
                .clone()
                .or_else(|| file.features.clone())
                .unwrap_or_else(|| "word,pos,chunk,regex".to_string()),
            regex_file: flags.regex_file.clone().or_else(|| file.regex_file.clone()),
            hidden: flags.hidden.or(file.hidden).unwrap_or(DEFAULT_HIDDEN),
            layers: flags.layers.or(file.layers).unwrap_or(DEFAULT_LAYERS),
            cell: flags
                .cell
                .clone()
                .or_else(|| file.cell.clone())
                .unwrap_or_else(|| "lstm".to_string()),
            bidi,
            dropout: flags.dropout.or(file.dropout).unwrap_or(DEFAULT_DROPOUT),
            lr: flags.lr.or(file.lr).unwrap_or(TrainConfig::default().learning_rate),
            clip: flags.clip.or(file.clip).unwrap_or(TrainConfig::default().clip),
            patience: flags.patience.or(file.patience).unwrap_or(TrainConfig::default().patience),
            max_epochs: flags.max_epochs.or(file.max_epochs).unwrap_or(TrainConfig::default().max_epochs),
            target_f1: flags.target_f1.or(file.target_f1),
            scheme: flags
                .scheme
                .clone()
                .or_else(|| file.scheme.clone())
                .unwrap_or_else(|| "iob2".to_string()),
            lenient: flags.lenient || file.lenient.unwrap_or(false),
            entity_types: flags
                .entity_types
                .clone()
                .or_else(|| file.entity_types.clone())
                .unwrap_or_else(|| "PER,LOC,ORG,MISC".to_string()),
            max_sentence_len: flags
                .max_sentence_len
                .or(file.max_sentence_len)
                .unwrap_or(DEFAULT_MAX_SENTENCE_LEN),
            embedding_dim_explicit: flags.embedding_dim.or(file.embedding_dim).is_some(),
        };
        s.run_spec()?;
        s.scheme()?;
        Ok(s)
    }

    pub fn scheme(&self) -> Result<Scheme, CliError> {
        parse("scheme", &self.scheme)
    }

    pub fn entity_types(&self) -> Vec<String> {
        split_list(&self.entity_types)
    }

    pub fn embedding_mode(&self) -> Result<EmbeddingMode, CliError> {
        parse("embedding-mode", &self.embedding_mode)
    }

    pub fn run_spec(&self) -> Result<RunSpec, CliError> {
        Ok(RunSpec {
            name: "default".to_string(),
            features: FeatureConfig::parse_list(&self.features)
                .map_err(|e| CliError::usage(format!("--features: {}", e)))?,
            embedding_mode: self.embedding_mode()?,
            cell: parse::<CellKind>("cell", &self.cell)?,
            bidirectional: self.bidi,
            layers: self.layers,
            hidden: self.hidden,
            dropout: self.dropout,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            clip: self.clip,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
            shuffle: true,
            target_f1: self.target_f1,
        }
    }
}

pub fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}
