//! Train one model per configuration row and tabulate the dev scores.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, EpochRecord, TrainConfig, TrainError, TrainLog};
use crate::corpus::{label_alphabet, Sentence};
use crate::eval::{Counts, ScoreReport};
use crate::features::{EmbeddingMode, EmbeddingTable, FeatureConfig, FeatureError, FeatureExtractor, FeatureKind, RegexRuleSet};
use crate::model::{CellKind, Tagger, TaggerConfig, DEFAULT_DROPOUT, DEFAULT_HIDDEN, DEFAULT_LAYERS};
use crate::numerics::Rng;

pub const DEFAULT_EMBEDDING_DIM: usize = 300;

/// One model configuration: feature set, word representation, architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSpec {
    pub name: String,
    pub features: FeatureConfig,
    pub embedding_mode: EmbeddingMode,
    pub cell: CellKind,
    pub bidirectional: bool,
    pub layers: usize,
    pub hidden: usize,
    pub dropout: f64,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            name: "default".to_string(),
            features: FeatureConfig::default(),
            embedding_mode: EmbeddingMode::Random,
            cell: CellKind::Lstm,
            bidirectional: true,
            layers: DEFAULT_LAYERS,
            hidden: DEFAULT_HIDDEN,
            dropout: DEFAULT_DROPOUT,
        }
    }
}

impl RunSpec {
    fn named(&self, name: &str) -> RunSpec {
        RunSpec {
            name: name.to_string(),
            ..self.clone()
        }
    }

    pub fn tagger_config(&self, input_dim: usize, labels: Vec<String>) -> TaggerConfig {
        TaggerConfig {
            cell: self.cell,
            bidirectional: self.bidirectional,
            layers: self.layers,
            hidden: self.hidden,
            dropout: self.dropout,
            labels,
            input_dim,
        }
    }
}

/// Inputs shared by every row.
#[derive(Debug, Clone)]
pub struct Resources {
    /// Pretrained vectors, required by rows in pretrained mode.
    pub embeddings: Option<EmbeddingTable>,
    pub embedding_source: Option<String>,
    /// Width of random word vectors.
    pub embedding_dim: usize,
    pub rules: RegexRuleSet,
    pub entity_types: Vec<String>,
}

impl Default for Resources {
    fn default() -> Self {
        Resources {
            embeddings: None,
            embedding_source: None,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            rules: RegexRuleSet::default_vietnamese(),
            entity_types: crate::corpus::default_entity_types(),
        }
    }
}

pub fn build_extractor(
    spec: &RunSpec,
    resources: &Resources,
    train_set: &[Sentence],
    seed: u64,
) -> Result<FeatureExtractor, FeatureError> {
    let oov_seed = Rng::derived(seed, b"oov").next_u64();
    let table = match spec.embedding_mode {
        EmbeddingMode::Pretrained => resources
            .embeddings
            .clone()
            .ok_or_else(|| FeatureError::MissingEmbeddings(resources.embedding_source.clone()))?
            .with_oov_seed(oov_seed),
        EmbeddingMode::Random => EmbeddingTable::random(resources.embedding_dim, oov_seed)?,
        EmbeddingMode::OneHot => {
            EmbeddingTable::one_hot(train_set.iter().flat_map(|s| s.tokens.iter().map(|t| t.surface.as_str())))
        }
    };
    let mut extractor = FeatureExtractor::fit(spec.features.clone(), table, resources.rules.clone(), train_set);
    if spec.embedding_mode == EmbeddingMode::Pretrained {
        if let Some(src) = &resources.embedding_source {
            extractor = extractor.with_embedding_source(src.clone());
        }
    }
    Ok(extractor)
}

/// A trained model together with its feature pipeline.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub extractor: FeatureExtractor,
    pub tagger: Tagger,
    pub log: TrainLog,
    /// Dev scores of the returned checkpoint.
    pub dev_report: ScoreReport,
}

/// Build features, initialize and train one model.
pub fn fit(
    spec: &RunSpec,
    train_set: &[Sentence],
    dev_set: &[Sentence],
    resources: &Resources,
    config: &TrainConfig,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<Fitted, TrainError> {
    let extractor = build_extractor(spec, resources, train_set, config.seed)?;
    let tagger_config = spec.tagger_config(extractor.input_dim(), label_alphabet(&resources.entity_types));
    let tagger = Tagger::init(tagger_config, &mut Rng::derived(config.seed, b"init"))?;
    let (tagger, log) = train(tagger, &extractor, train_set, dev_set, config, progress)?;
    let dev_report = super::evaluate(&tagger, &extractor, dev_set, None)?;
    Ok(Fitted {
        extractor,
        tagger,
        log,
        dev_report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Entity types down, one Pre/Rec/F1 column group per row spec.
    ByEntity,
    /// One line per row spec with overall Pre/Rec/F1.
    ByRow,
}

#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub layout: Layout,
    pub rows: Vec<RunSpec>,
}

pub const PRESETS: [&str; 5] = ["table3", "table4", "table5", "table6", "table7"];

/// Built-in row sets. Tables 3 to 6 use word features only and vary one
/// setting of `base`; table 7 varies the feature set.
pub fn preset(name: &str, base: &RunSpec) -> Option<Preset> {
    let word = RunSpec {
        features: FeatureConfig::word_only(),
        ..base.clone()
    };
    let vary = |label: &str, f: &dyn Fn(&mut RunSpec)| {
        let mut r = word.named(label);
        f(&mut r);
        r
    };
    let (name, layout, rows) = match name {
        "table3" => (
            "table3",
            Layout::ByEntity,
            vec![
                vary("Skip-Gram", &|r| r.embedding_mode = EmbeddingMode::Pretrained),
                vary("Random", &|r| r.embedding_mode = EmbeddingMode::Random),
                vary("One-hot", &|r| r.embedding_mode = EmbeddingMode::OneHot),
            ],
        ),
        "table4" => (
            "table4",
            Layout::ByEntity,
            vec![
                vary("Bi-LSTM", &|r| {
                    r.cell = CellKind::Lstm;
                    r.bidirectional = true
                }),
                vary("LSTM", &|r| {
                    r.cell = CellKind::Lstm;
                    r.bidirectional = false
                }),
            ],
        ),
        "table5" => (
            "table5",
            Layout::ByEntity,
            vec![vary("Two layers", &|r| r.layers = 2), vary("One layer", &|r| r.layers = 1)],
        ),
        "table6" => (
            "table6",
            Layout::ByEntity,
            vec![
                vary("Dropout = 0.5", &|r| r.dropout = 0.5),
                vary("Dropout = 0.0", &|r| r.dropout = 0.0),
            ],
        ),
        "table7" => {
            use FeatureKind::*;
            let sets: [&[FeatureKind]; 7] = [
                &[],
                &[Pos],
                &[Chunk],
                &[Case],
                &[Regex],
                &[Pos, Chunk, Case, Regex],
                &[Pos, Chunk, Regex],
            ];
            let rows = sets
                .iter()
                .map(|kinds| {
                    let features = FeatureConfig::new(kinds.iter().copied());
                    RunSpec {
                        name: features.label(),
                        features,
                        ..base.clone()
                    }
                })
                .collect();
            ("table7", Layout::ByRow, rows)
        }
        _ => return None,
    };
    Some(Preset { name, layout, rows })
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub spec: RunSpec,
    /// Dev scores, or the error message of a failed row.
    pub result: Result<ScoreReport, String>,
    /// The trained model, when requested.
    pub fitted: Option<Box<Fitted>>,
}

/// Train every row with the same seed and configuration. Rows run in
/// parallel; results come back in row order. A failing row does not stop
/// the others.
pub fn ablate(
    rows: &[RunSpec],
    train_set: &[Sentence],
    dev_set: &[Sentence],
    resources: &Resources,
    config: &TrainConfig,
    keep_models: bool,
) -> Vec<AblationRow> {
    rows.par_iter()
        .map(|spec| match fit(spec, train_set, dev_set, resources, config, &mut |_| {}) {
            Ok(f) => AblationRow {
                spec: spec.clone(),
                result: Ok(f.dev_report.clone()),
                fitted: keep_models.then(|| Box::new(f)),
            },
            Err(e) => AblationRow {
                spec: spec.clone(),
                result: Err(e.to_string()),
                fitted: None,
            },
        })
        .collect()
}

impl AblationRow {
    pub fn overall(&self) -> Option<Counts> {
        self.result.as_ref().ok().map(|r| r.overall)
    }
}

fn triple(c: &Counts) -> String {
    format!("{:>6.2} {:>6.2} {:>6.2}", c.precision(), c.recall(), c.f1())
}

/// Aligned plain-text table.
pub fn render_table(rows: &[AblationRow], layout: Layout) -> String {
    let mut out = String::new();
    match layout {
        Layout::ByRow => {
            let w = rows.iter().map(|r| r.spec.name.len()).max().unwrap_or(0).max(8);
            let _ = writeln!(out, "{:<w$}  {:>6} {:>6} {:>6}", "Features", "Pre.", "Rec.", "F1", w = w);
            for r in rows {
                match &r.result {
                    Ok(rep) => {
                        let _ = writeln!(out, "{:<w$}  {}", r.spec.name, triple(&rep.overall), w = w);
                    }
                    Err(e) => {
                        let _ = writeln!(out, "{:<w$}  failed: {}", r.spec.name, e, w = w);
                    }
                }
            }
        }
        Layout::ByEntity => {
            let types: BTreeSet<&str> = rows
                .iter()
                .filter_map(|r| r.result.as_ref().ok())
                .flat_map(|rep| rep.per_type.keys().map(String::as_str))
                .collect();
            let _ = write!(out, "{:<6}", "Entity");
            for r in rows {
                let _ = write!(out, " | {:^20}", r.spec.name);
            }
            let _ = write!(out, "\n{:<6}", "");
            for _ in rows {
                let _ = write!(out, " | {:>6} {:>6} {:>6}", "Pre.", "Rec.", "F1");
            }
            out.push('\n');
            let lines = types.iter().map(|t| Some(*t)).chain(std::iter::once(None));
            for ty in lines {
                let _ = write!(out, "{:<6}", ty.unwrap_or("ALL"));
                for r in rows {
                    let cell = match (&r.result, ty) {
                        (Ok(rep), Some(t)) => triple(&rep.per_type.get(t).copied().unwrap_or_default()),
                        (Ok(rep), None) => triple(&rep.overall),
                        (Err(_), _) => format!("{:^20}", "-"),
                    };
                    let _ = write!(out, " | {}", cell);
                }
                out.push('\n');
            }
            for r in rows {
                if let Err(e) = &r.result {
                    let _ = writeln!(out, "{}: failed: {}", r.spec.name, e);
                }
            }
        }
    }
    out
}

/// `row  entity  precision  recall  f1  status`, tab separated, one line per
/// entity type plus `ALL` per row.
pub fn render_tsv(rows: &[AblationRow]) -> String {
    let mut out = String::from("row\tentity\tprecision\trecall\tf1\tstatus\n");
    for r in rows {
        match &r.result {
            Ok(rep) => {
                let lines = rep
                    .per_type
                    .iter()
                    .map(|(t, c)| (t.as_str(), c))
                    .chain(std::iter::once(("ALL", &rep.overall)));
                for (t, c) in lines {
                    let _ = writeln!(
                        out,
                        "{}\t{}\t{:.4}\t{:.4}\t{:.4}\tok",
                        r.spec.name,
                        t,
                        c.precision(),
                        c.recall(),
                        c.f1()
                    );
                }
            }
            Err(e) => {
                let _ = writeln!(out, "{}\tALL\t\t\t\tfailed: {}", r.spec.name, e.replace(['\t', '\n'], " "));
            }
        }
    }
    out
}
