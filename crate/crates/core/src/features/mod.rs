//! Per-token input vectors: word embedding, POS, chunk, capitalization and
//! regex features, concatenated in that fixed order.

mod embeddings;
mod lexical;

use std::collections::BTreeSet;
use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};

pub use embeddings::{load_embeddings, EmbeddingMode, EmbeddingTable};
pub use lexical::{
    case_feature, encode_tagset, CaseClass, RegexRule, RegexRuleSet, RuleScope, TagEncoder,
    DEFAULT_REGEX_RULES,
};

use crate::corpus::Sentence;

#[derive(Debug)]
pub enum FeatureError {
    Io(io::Error),
    DimMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    UnparseableValue {
        line: usize,
        value: String,
    },
    InvalidDim(usize),
    BadRule {
        line: usize,
        message: String,
    },
    /// A pretrained-mode pipeline was rebuilt without its embedding table.
    MissingEmbeddings(Option<String>),
    TableMismatch {
        expected: usize,
        found: usize,
    },
}

impl fmt::Display for FeatureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureError::Io(e) => write!(f, "i/o error: {}", e),
            FeatureError::DimMismatch {
                line,
                expected,
                found,
            } => write!(
                f,
                "line {}: expected {} vector components, found {}",
                line, expected, found
            ),
            FeatureError::UnparseableValue { line, value } => {
                write!(f, "line {}: cannot parse '{}' as a number", line, value)
            }
            FeatureError::InvalidDim(d) => write!(f, "invalid embedding dimension {}", d),
            FeatureError::BadRule { line, message } => {
                write!(f, "regex rule file line {}: {}", line, message)
            }
            FeatureError::MissingEmbeddings(Some(path)) => {
                write!(f, "pretrained embeddings required: {}", path)
            }
            FeatureError::MissingEmbeddings(None) => write!(f, "pretrained embeddings required"),
            FeatureError::TableMismatch { expected, found } => write!(
                f,
                "embedding table has dimension {}, model expects {}",
                found, expected
            ),
        }
    }
}

impl std::error::Error for FeatureError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            FeatureError::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for FeatureError {
    fn from(e: io::Error) -> Self {
        FeatureError::Io(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Word,
    Pos,
    Chunk,
    Case,
    Regex,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 5] = [
        FeatureKind::Word,
        FeatureKind::Pos,
        FeatureKind::Chunk,
        FeatureKind::Case,
        FeatureKind::Regex,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Word => "Word",
            FeatureKind::Pos => "POS",
            FeatureKind::Chunk => "Chunk",
            FeatureKind::Case => "Case",
            FeatureKind::Regex => "Regex",
        }
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "word" => Ok(FeatureKind::Word),
            "pos" => Ok(FeatureKind::Pos),
            "chunk" => Ok(FeatureKind::Chunk),
            "case" => Ok(FeatureKind::Case),
            "regex" => Ok(FeatureKind::Regex),
            other => Err(format!("unknown feature '{}'", other)),
        }
    }
}

/// Enabled feature groups. `Word` is always present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<FeatureKind>", into = "Vec<FeatureKind>")]
pub struct FeatureConfig {
    enabled: BTreeSet<FeatureKind>,
}

impl From<Vec<FeatureKind>> for FeatureConfig {
    fn from(v: Vec<FeatureKind>) -> Self {
        FeatureConfig::new(v)
    }
}

impl From<FeatureConfig> for Vec<FeatureKind> {
    fn from(c: FeatureConfig) -> Self {
        c.enabled.into_iter().collect()
    }
}

impl Default for FeatureConfig {
    /// Word + POS + Chunk + Regex.
    fn default() -> Self {
        FeatureConfig::new([FeatureKind::Pos, FeatureKind::Chunk, FeatureKind::Regex])
    }
}

impl FeatureConfig {
    pub fn new(kinds: impl IntoIterator<Item = FeatureKind>) -> Self {
        let mut enabled: BTreeSet<FeatureKind> = kinds.into_iter().collect();
        enabled.insert(FeatureKind::Word);
        FeatureConfig { enabled }
    }

    pub fn word_only() -> Self {
        FeatureConfig::new([])
    }

    /// Parse a comma-separated list such as `word,pos,chunk`.
    pub fn parse_list(s: &str) -> Result<Self, String> {
        let kinds = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<FeatureKind>, _>>()?;
        Ok(FeatureConfig::new(kinds))
    }

    pub fn has(&self, kind: FeatureKind) -> bool {
        self.enabled.contains(&kind)
    }

    pub fn kinds(&self) -> impl Iterator<Item = FeatureKind> + '_ {
        self.enabled.iter().copied()
    }

    /// `Word+POS+Chunk` style label.
    pub fn label(&self) -> String {
        self.kinds().map(FeatureKind::name).collect::<Vec<_>>().join("+")
    }
}

/// Everything needed to turn a sentence into model inputs.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    config: FeatureConfig,
    table: EmbeddingTable,
    pos: TagEncoder,
    chunk: TagEncoder,
    rules: RegexRuleSet,
    embedding_source: Option<String>,
}

/// Serializable description of a [`FeatureExtractor`]. Pretrained vectors are
/// referenced by path, not embedded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub features: FeatureConfig,
    pub embedding_mode: EmbeddingMode,
    pub embedding_dim: usize,
    pub oov_seed: u64,
    pub embedding_source: Option<String>,
    pub one_hot_vocab: Vec<String>,
    pub pos_tags: TagEncoder,
    pub chunk_tags: TagEncoder,
    pub regex_rules: String,
    pub input_dim: usize,
}

impl FeatureExtractor {
    /// Fit POS/chunk encoders on `train` and bundle the resources.
    pub fn fit(
        config: FeatureConfig,
        table: EmbeddingTable,
        rules: RegexRuleSet,
        train: &[Sentence],
    ) -> Self {
        let (pos, chunk) = encode_tagset(train);
        FeatureExtractor {
            config,
            table,
            pos,
            chunk,
            rules,
            embedding_source: None,
        }
    }

    pub fn with_embedding_source(mut self, source: impl Into<String>) -> Self {
        self.embedding_source = Some(source.into());
        self
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    pub fn pos_encoder(&self) -> &TagEncoder {
        &self.pos
    }

    pub fn chunk_encoder(&self) -> &TagEncoder {
        &self.chunk
    }

    pub fn rules(&self) -> &RegexRuleSet {
        &self.rules
    }

    pub fn width_of(&self, kind: FeatureKind) -> usize {
        match kind {
            FeatureKind::Word => self.table.dim(),
            FeatureKind::Pos => self.pos.width(),
            FeatureKind::Chunk => self.chunk.width(),
            FeatureKind::Case => CaseClass::COUNT,
            FeatureKind::Regex => self.rules.len(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.config.kinds().map(|k| self.width_of(k)).sum()
    }

    /// One vector of width [`input_dim`](Self::input_dim) per token.
    pub fn assemble(&self, sentence: &Sentence) -> Vec<Vec<f64>> {
        let regex = if self.config.has(FeatureKind::Regex) {
            self.rules.features(sentence)
        } else {
            Vec::new()
        };
        let dim = self.input_dim();
        sentence
            .tokens
            .iter()
            .enumerate()
            .map(|(i, tok)| {
                let mut v = Vec::with_capacity(dim);
                for kind in self.config.kinds() {
                    match kind {
                        FeatureKind::Word => v.extend(self.table.lookup(&tok.surface)),
                        FeatureKind::Pos => v.extend(self.pos.encode(&tok.pos)),
                        FeatureKind::Chunk => v.extend(self.chunk.encode(&tok.chunk)),
                        FeatureKind::Case => v.extend(case_feature(&tok.surface)),
                        FeatureKind::Regex => v.extend_from_slice(&regex[i]),
                    }
                }
                debug_assert_eq!(v.len(), dim);
                v
            })
            .collect()
    }

    pub fn spec(&self) -> FeatureSpec {
        FeatureSpec {
            features: self.config.clone(),
            embedding_mode: self.table.mode(),
            embedding_dim: self.table.dim(),
            oov_seed: self.table.oov_seed(),
            embedding_source: self.embedding_source.clone(),
            one_hot_vocab: if self.table.mode() == EmbeddingMode::OneHot {
                self.table.one_hot_vocab()
            } else {
                Vec::new()
            },
            pos_tags: self.pos.clone(),
            chunk_tags: self.chunk.clone(),
            regex_rules: self.rules.to_text(),
            input_dim: self.input_dim(),
        }
    }

    /// Rebuild from a spec. Pretrained mode needs the table passed in.
    pub fn from_spec(spec: &FeatureSpec, pretrained: Option<EmbeddingTable>) -> Result<Self, FeatureError> {
        let table = match spec.embedding_mode {
            EmbeddingMode::Pretrained => {
                let t = pretrained
                    .ok_or_else(|| FeatureError::MissingEmbeddings(spec.embedding_source.clone()))?;
                if t.dim() != spec.embedding_dim {
                    return Err(FeatureError::TableMismatch {
                        expected: spec.embedding_dim,
                        found: t.dim(),
                    });
                }
                t.with_oov_seed(spec.oov_seed)
            }
            EmbeddingMode::Random => EmbeddingTable::random(spec.embedding_dim, spec.oov_seed)?,
            EmbeddingMode::OneHot => EmbeddingTable::one_hot(&spec.one_hot_vocab),
        };
        Ok(FeatureExtractor {
            config: spec.features.clone(),
            table,
            pos: spec.pos_tags.clone(),
            chunk: spec.chunk_tags.clone(),
            rules: RegexRuleSet::parse(&spec.regex_rules)?,
            embedding_source: spec.embedding_source.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;

    fn corpus() -> Vec<Sentence> {
        vec![Sentence::new(vec![
            Token::new("công_ty", "N", "B-NP", "O"),
            Token::new("Vinamilk", "Np", "I-NP", "B-ORG"),
            Token::new("lớn", "A", "B-AP", "O"),
        ])]
    }

    fn extractor(config: FeatureConfig, dim: usize) -> FeatureExtractor {
        FeatureExtractor::fit(
            config,
            EmbeddingTable::random(dim, 1).unwrap(),
            RegexRuleSet::default_vietnamese(),
            &corpus(),
        )
    }

    #[test]
    fn widths() {
        let fx = extractor(FeatureConfig::word_only(), 300);
        assert_eq!(fx.input_dim(), 300);
        let fx = extractor(FeatureConfig::new([FeatureKind::Pos]), 300);
        assert_eq!(fx.input_dim(), 300 + 4);
        let all = extractor(FeatureConfig::new(FeatureKind::ALL), 10);
        let rows = all.assemble(&corpus()[0]);
        assert!(rows.iter().all(|r| r.len() == all.input_dim()));
        assert_eq!(all.input_dim(), 10 + 4 + 4 + 5 + all.rules().len());
    }

    #[test]
    fn disabling_a_feature_keeps_other_slots() {
        let s = &corpus()[0];
        let full = extractor(FeatureConfig::new(FeatureKind::ALL), 8).assemble(s);
        let no_chunk = extractor(
            FeatureConfig::new([FeatureKind::Pos, FeatureKind::Case, FeatureKind::Regex]),
            8,
        )
        .assemble(s);
        for (a, b) in full.iter().zip(&no_chunk) {
            // [word 8 | pos 4 | chunk 4 | case 5 | regex]
            assert_eq!(&a[..12], &b[..12]);
            assert_eq!(&a[16..], &b[12..]);
        }
    }

    #[test]
    fn parse_feature_list() {
        let c = FeatureConfig::parse_list("pos,chunk,regex").unwrap();
        assert_eq!(c, FeatureConfig::default());
        assert_eq!(c.label(), "Word+POS+Chunk+Regex");
        assert!(FeatureConfig::parse_list("word,colour").is_err());
    }

    #[test]
    fn spec_round_trip() {
        let fx = extractor(FeatureConfig::new(FeatureKind::ALL), 6);
        let spec = fx.spec();
        let json = serde_json::to_string(&spec).unwrap();
        let back: FeatureSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        let rebuilt = FeatureExtractor::from_spec(&back, None).unwrap();
        let s = &corpus()[0];
        assert_eq!(rebuilt.assemble(s), fx.assemble(s));

        let onehot = FeatureExtractor::fit(
            FeatureConfig::word_only(),
            EmbeddingTable::one_hot(["a", "b"]),
            RegexRuleSet::empty(),
            &corpus(),
        );
        let rebuilt = FeatureExtractor::from_spec(&onehot.spec(), None).unwrap();
        assert_eq!(rebuilt.assemble(s), onehot.assemble(s));

        let mut pre = fx.spec();
        pre.embedding_mode = EmbeddingMode::Pretrained;
        pre.embedding_source = Some("vec.txt".into());
        let err = FeatureExtractor::from_spec(&pre, None).unwrap_err();
        assert_eq!(err.to_string(), "pretrained embeddings required: vec.txt");
    }
}
