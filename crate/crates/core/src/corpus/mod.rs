//! Sentences, tokens and everything about their labels: CoNLL reading and
//! writing, IOB validation/conversion, span extraction, statistics and
//! train/dev splitting.

mod conll;
pub mod iob;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use conll::{
    parse_conll, read_conll, write_conll, write_tagged, ColumnMap, CorpusError, ReadOptions,
    Strictness, DEFAULT_MAX_SENTENCE_LEN,
};
pub use iob::{
    convert_scheme, extract_spans, extract_spans_in, parse_tag, repair_iob, spans_to_labels,
    EntitySpan, IobError, Scheme, Tag,
};

use crate::numerics::Rng;

/// PER, LOC, ORG, MISC.
pub fn default_entity_types() -> Vec<String> {
    ["PER", "LOC", "ORG", "MISC"].iter().map(|s| s.to_string()).collect()
}

/// The nine-label IOB2 alphabet over the given entity types, `O` first.
pub fn label_alphabet(entity_types: &[String]) -> Vec<String> {
    let mut labels = vec!["O".to_string()];
    for ty in entity_types {
        labels.push(format!("B-{}", ty));
        labels.push(format!("I-{}", ty));
    }
    labels
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub pos: String,
    pub chunk: String,
    pub gold_label: String,
    pub predicted_label: Option<String>,
    /// All whitespace-separated input columns, as read.
    pub columns: Vec<String>,
}

impl Token {
    pub fn new(surface: &str, pos: &str, chunk: &str, gold_label: &str) -> Self {
        Token {
            surface: surface.to_string(),
            pos: pos.to_string(),
            chunk: chunk.to_string(),
            gold_label: gold_label.to_string(),
            predicted_label: None,
            columns: vec![
                surface.to_string(),
                pos.to_string(),
                chunk.to_string(),
                gold_label.to_string(),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Sentence { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn gold_labels(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.gold_label.as_str()).collect()
    }

    /// Predicted labels, `O` where a token has none.
    pub fn predicted_labels(&self) -> Vec<&str> {
        self.tokens
            .iter()
            .map(|t| t.predicted_label.as_deref().unwrap_or("O"))
            .collect()
    }

    pub fn gold_spans(&self) -> Result<Vec<EntitySpan>, IobError> {
        extract_spans(&self.gold_labels())
    }
}

/// Split a sentence into pieces of at most `max` tokens, cutting only where
/// the next token is not `I-` so no entity is broken. `None` when an entity
/// alone is longer than `max`.
pub(crate) fn split_long_sentence(sentence: Sentence, max: usize) -> Option<Vec<Sentence>> {
    let mut parts = Vec::new();
    let mut rest = sentence.tokens;
    while rest.len() > max {
        let cut = (1..=max)
            .rev()
            .find(|&p| !matches!(parse_tag(&rest[p].gold_label), Some(Tag::Inside(_))))?;
        let tail = rest.split_off(cut);
        parts.push(Sentence::new(rest));
        rest = tail;
    }
    parts.push(Sentence::new(rest));
    Some(parts)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_type: BTreeMap<String, usize>,
    pub sentences: usize,
    pub tokens: usize,
}

impl CorpusStats {
    pub fn total_entities(&self) -> usize {
        self.per_type.values().sum()
    }

    /// Aligned table: one row per entity type, then `All`.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<14}{:>10}", "Entity type", "Count");
        for (ty, n) in &self.per_type {
            let _ = writeln!(out, "{:<14}{:>10}", ty, n);
        }
        let _ = writeln!(out, "{:<14}{:>10}", "All", self.total_entities());
        let _ = writeln!(out, "{:<14}{:>10}", "Sentences", self.sentences);
        let _ = writeln!(out, "{:<14}{:>10}", "Tokens", self.tokens);
        out
    }

    /// `key=value` lines.
    pub fn render_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "sentences={}", self.sentences);
        let _ = writeln!(out, "tokens={}", self.tokens);
        for (ty, n) in &self.per_type {
            let _ = writeln!(out, "entities.{}={}", ty, n);
        }
        let _ = writeln!(out, "entities.total={}", self.total_entities());
        out
    }
}

/// Count gold entities per type.
pub fn stats(sentences: &[Sentence]) -> Result<CorpusStats, IobError> {
    let mut st = CorpusStats {
        sentences: sentences.len(),
        ..CorpusStats::default()
    };
    for s in sentences {
        st.tokens += s.len();
        for span in s.gold_spans()? {
            *st.per_type.entry(span.entity_type).or_insert(0) += 1;
        }
    }
    Ok(st)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DevSize {
    Count(usize),
    Fraction(f64),
}

/// Hold out a dev set. Without a seed the last `k` sentences are taken;
/// with a seed, `k` sentences are drawn at random. Both parts keep the input
/// order.
pub fn split(
    sentences: Vec<Sentence>,
    dev: DevSize,
    seed: Option<u64>,
) -> Result<(Vec<Sentence>, Vec<Sentence>), CorpusError> {
    let n = sentences.len();
    let k = match dev {
        DevSize::Count(k) => k,
        DevSize::Fraction(f) => (f.clamp(0.0, 1.0) * n as f64).round() as usize,
    };
    if k > 0 && k >= n {
        return Err(CorpusError::DevTooLarge {
            requested: k,
            available: n,
        });
    }
    let mut is_dev = vec![false; n];
    match seed {
        None => is_dev[n - k..].iter_mut().for_each(|d| *d = true),
        Some(seed) => {
            let mut order: Vec<usize> = (0..n).collect();
            Rng::new(seed).shuffle(&mut order);
            for &i in &order[..k] {
                is_dev[i] = true;
            }
        }
    }
    let (mut train, mut dev) = (Vec::with_capacity(n - k), Vec::with_capacity(k));
    for (s, d) in sentences.into_iter().zip(is_dev) {
        if d {
            dev.push(s)
        } else {
            train.push(s)
        }
    }
    Ok((train, dev))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentence(labels: &[&str]) -> Sentence {
        Sentence::new(
            labels
                .iter()
                .enumerate()
                .map(|(i, l)| Token::new(&format!("w{}", i), "N", "B-NP", l))
                .collect(),
        )
    }

    #[test]
    fn alphabet_has_nine_labels() {
        let a = label_alphabet(&default_entity_types());
        assert_eq!(a.len(), 9);
        assert_eq!(a[0], "O");
        assert!(a.contains(&"I-MISC".to_string()));
    }

    #[test]
    fn stats_counts() {
        let st = stats(&[sentence(&["B-PER", "I-PER", "B-LOC"])]).unwrap();
        assert_eq!(st.per_type.get("PER"), Some(&1));
        assert_eq!(st.per_type.get("LOC"), Some(&1));
        assert_eq!(st.total_entities(), 2);
        assert_eq!(st.tokens, 3);
        let empty = stats(&[]).unwrap();
        assert_eq!(empty.total_entities(), 0);
        assert_eq!((empty.sentences, empty.tokens), (0, 0));
        assert!(st.render_kv().contains("entities.total=2"));
        assert!(st.render_table().lines().any(|l| l.starts_with("All") && l.ends_with('2')));
    }

    #[test]
    fn split_last_k() {
        let corpus: Vec<Sentence> = (0..10).map(|_| sentence(&["O"])).collect();
        let (train, dev) = split(corpus.clone(), DevSize::Count(2), None).unwrap();
        assert_eq!((train.len(), dev.len()), (8, 2));
        let (train, dev) = split(corpus.clone(), DevSize::Count(0), None).unwrap();
        assert_eq!((train.len(), dev.len()), (10, 0));
        assert!(matches!(
            split(corpus, DevSize::Count(10), None),
            Err(CorpusError::DevTooLarge { requested: 10, available: 10 })
        ));
    }

    #[test]
    fn split_seeded_is_deterministic_partition() {
        let corpus: Vec<Sentence> = (0..20)
            .map(|i| {
                let mut s = sentence(&["O"]);
                s.tokens[0].surface = i.to_string();
                s
            })
            .collect();
        let a = split(corpus.clone(), DevSize::Fraction(0.25), Some(9)).unwrap();
        let b = split(corpus.clone(), DevSize::Fraction(0.25), Some(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.len(), 5);
        let mut ids: Vec<String> = a.0.iter().chain(&a.1).map(|s| s.tokens[0].surface.clone()).collect();
        ids.sort_by_key(|s| s.parse::<usize>().unwrap());
        let expect: Vec<String> = (0..20).map(|i| i.to_string()).collect();
        assert_eq!(ids, expect);
    }
}
