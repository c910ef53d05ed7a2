//! Phrase-level precision, recall and F1 with exact span matching, in the
//! style of the CoNLL-2003 `conlleval` script.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::corpus::{extract_spans, repair_iob, EntitySpan, Sentence, Token};

/// Harmonic mean of two percentages; 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        percent(self.correct, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        percent(self.correct, self.gold)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }

    fn add(&mut self, other: &Counts) {
        self.gold += other.gold;
        self.predicted += other.predicted;
        self.correct += other.correct;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScoreReport {
    pub per_type: BTreeMap<String, Counts>,
    pub overall: Counts,
    pub tokens: usize,
    pub correct_tokens: usize,
}

impl ScoreReport {
    /// Token-level label accuracy in percent.
    pub fn accuracy(&self) -> f64 {
        percent(self.correct_tokens, self.tokens)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalError {
    MissingPredictions { sentence: usize, token: usize },
    InvalidLabel { sentence: usize, token: usize, label: String },
    MalformedLine { line: usize, found: usize },
    ColumnCount { line: usize, expected: usize, found: usize },
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::MissingPredictions { sentence, token } => {
                write!(f, "sentence {} token {} has no predicted label", sentence + 1, token + 1)
            }
            EvalError::InvalidLabel { sentence, token, label } => write!(
                f,
                "sentence {} token {}: invalid label '{}'",
                sentence + 1,
                token + 1,
                label
            ),
            EvalError::MalformedLine { line, found } => write!(
                f,
                "line {}: expected at least 2 columns (gold, predicted), found {}",
                line, found
            ),
            EvalError::ColumnCount { line, expected, found } => write!(
                f,
                "line {}: expected {} columns like the first line, found {}",
                line, expected, found
            ),
        }
    }
}

impl std::error::Error for EvalError {}

/// Chunks the way `conlleval` reads them: an `I-X` that does not continue
/// an `X` chunk opens a new one.
fn chunks(labels: &[&str], sentence: usize) -> Result<Vec<EntitySpan>, EvalError> {
    extract_spans(&repair_iob(labels)).map_err(|e| EvalError::InvalidLabel {
        sentence,
        token: e.position(),
        label: labels[e.position()].to_string(),
    })
}

/// Score predicted against gold labels. With `types`, spans of any other
/// type are dropped from both sides before counting.
pub fn score(sentences: &[Sentence], types: Option<&[String]>) -> Result<ScoreReport, EvalError> {
    let keep: Option<BTreeSet<&str>> = types.map(|t| t.iter().map(String::as_str).collect());
    let kept = |s: &EntitySpan| keep.as_ref().map_or(true, |k| k.contains(s.entity_type.as_str()));
    let mut report = ScoreReport::default();
    for (si, sentence) in sentences.iter().enumerate() {
        if let Some(ti) = sentence.tokens.iter().position(|t| t.predicted_label.is_none()) {
            return Err(EvalError::MissingPredictions { sentence: si, token: ti });
        }
        let gold_labels = sentence.gold_labels();
        let pred_labels = sentence.predicted_labels();
        report.tokens += gold_labels.len();
        report.correct_tokens += gold_labels.iter().zip(&pred_labels).filter(|(g, p)| g == p).count();

        let gold: BTreeSet<EntitySpan> = chunks(&gold_labels, si)?.into_iter().filter(kept).collect();
        let pred: BTreeSet<EntitySpan> = chunks(&pred_labels, si)?.into_iter().filter(kept).collect();
        for s in &gold {
            report.per_type.entry(s.entity_type.clone()).or_default().gold += 1;
        }
        for s in &pred {
            let c = report.per_type.entry(s.entity_type.clone()).or_default();
            c.predicted += 1;
            if gold.contains(s) {
                c.correct += 1;
            }
        }
    }
    let mut overall = Counts::default();
    report.per_type.values().for_each(|c| overall.add(c));
    report.overall = overall;
    Ok(report)
}

/// Score two parallel label sequences.
pub fn score_labels<S: AsRef<str>>(gold: &[Vec<S>], predicted: &[Vec<S>]) -> Result<ScoreReport, EvalError> {
    let sentences: Vec<Sentence> = gold
        .iter()
        .zip(predicted)
        .map(|(g, p)| {
            Sentence::new(
                g.iter()
                    .zip(p)
                    .map(|(g, p)| {
                        let mut t = Token::new("_", "_", "_", g.as_ref());
                        t.predicted_label = Some(p.as_ref().to_string());
                        t
                    })
                    .collect(),
            )
        })
        .collect();
    score(&sentences, None)
}

/// Read conlleval input: blank-line separated sentences, gold label in the
/// second-to-last column, prediction in the last.
pub fn parse_conlleval(text: &str) -> Result<Vec<Sentence>, EvalError> {
    let mut sentences = Vec::new();
    let mut current = Vec::new();
    let mut width = None;
    for (idx, line) in text.lines().enumerate() {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            if !current.is_empty() {
                sentences.push(Sentence::new(std::mem::take(&mut current)));
            }
            continue;
        }
        if cols[0] == "-DOCSTART-" {
            continue;
        }
        if cols.len() < 2 {
            return Err(EvalError::MalformedLine {
                line: idx + 1,
                found: cols.len(),
            });
        }
        let n = cols.len();
        let expected = *width.get_or_insert(n);
        if n != expected {
            return Err(EvalError::ColumnCount {
                line: idx + 1,
                expected,
                found: n,
            });
        }
        let mut tok = Token::new(cols[0], "_", "_", cols[n - 2]);
        tok.predicted_label = Some(cols[n - 1].to_string());
        tok.columns = cols.iter().map(|s| s.to_string()).collect();
        current.push(tok);
    }
    if !current.is_empty() {
        sentences.push(Sentence::new(current));
    }
    Ok(sentences)
}

/// Plain-text report: one row per type (alphabetical), then `ALL`, then
/// token accuracy.
pub fn render(report: &ScoreReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:>7} {:>7} {:>7} {:>9} {:>9} {:>9}",
        "type", "gold", "found", "correct", "precision", "recall", "FB1"
    );
    let rows = report
        .per_type
        .iter()
        .map(|(t, c)| (t.as_str(), c))
        .chain(std::iter::once(("ALL", &report.overall)));
    for (name, c) in rows {
        let _ = writeln!(
            out,
            "{:<8} {:>7} {:>7} {:>7} {:>9.2} {:>9.2} {:>9.2}",
            name,
            c.gold,
            c.predicted,
            c.correct,
            c.precision(),
            c.recall(),
            c.f1()
        );
    }
    let _ = writeln!(
        out,
        "accuracy {:.2}% ({} of {} tokens)",
        report.accuracy(),
        report.correct_tokens,
        report.tokens
    );
    out
}
