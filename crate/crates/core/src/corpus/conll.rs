//! CoNLL column files.

use std::fmt;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::iob::{self, parse_tag, Scheme};
use super::{split_long_sentence, Sentence, Token};

pub const DEFAULT_MAX_SENTENCE_LEN: usize = 150;

/// Which whitespace-separated column holds which field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub surface: usize,
    pub pos: usize,
    pub chunk: usize,
    /// `None` for unlabeled input; tokens then carry `O` as gold label.
    pub label: Option<usize>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            surface: 0,
            pos: 1,
            chunk: 2,
            label: Some(3),
        }
    }
}

impl ColumnMap {
    pub fn unlabeled() -> Self {
        ColumnMap {
            label: None,
            ..ColumnMap::default()
        }
    }

    fn required(&self) -> usize {
        let max = self.surface.max(self.pos).max(self.chunk);
        self.label.map_or(max, |l| l.max(max)) + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strictness {
    /// Malformed label sequences are errors. Use for gold data.
    Strict,
    /// Malformed sequences are fixed with [`iob::repair_iob`].
    Lenient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadOptions {
    pub columns: ColumnMap,
    pub strictness: Strictness,
    pub scheme: Scheme,
    /// Longer sentences are split at entity boundaries.
    pub max_len: Option<usize>,
    /// Allowed entity types; `None` accepts any.
    pub entity_types: Option<Vec<String>>,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions {
            columns: ColumnMap::default(),
            strictness: Strictness::Strict,
            scheme: Scheme::Iob2,
            max_len: Some(DEFAULT_MAX_SENTENCE_LEN),
            entity_types: Some(super::default_entity_types()),
        }
    }
}

#[derive(Debug)]
pub enum CorpusError {
    Io(io::Error),
    MalformedLine {
        line: usize,
        found: usize,
        needed: usize,
    },
    InvalidLabel {
        line: usize,
        label: String,
    },
    InvalidSequence {
        line: usize,
        label: String,
        previous: String,
    },
    SentenceTooLong {
        line: usize,
        len: usize,
        max: usize,
    },
    DevTooLarge {
        requested: usize,
        available: usize,
    },
}

impl fmt::Display for CorpusError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorpusError::Io(e) => write!(f, "i/o error: {}", e),
            CorpusError::MalformedLine {
                line,
                found,
                needed,
            } => write!(
                f,
                "line {}: expected at least {} columns, found {}",
                line, needed, found
            ),
            CorpusError::InvalidLabel { line, label } => {
                write!(f, "line {}: invalid label '{}'", line, label)
            }
            CorpusError::InvalidSequence {
                line,
                label,
                previous,
            } => write!(
                f,
                "line {}: label '{}' cannot follow '{}'",
                line, label, previous
            ),
            CorpusError::SentenceTooLong { line, len, max } => write!(
                f,
                "sentence starting at line {} has {} tokens and no entity boundary before the {}-token limit",
                line, len, max
            ),
            CorpusError::DevTooLarge {
                requested,
                available,
            } => write!(
                f,
                "dev set of {} sentences requested from a corpus of {}",
                requested, available
            ),
        }
    }
}

impl std::error::Error for CorpusError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CorpusError::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for CorpusError {
    fn from(e: io::Error) -> Self {
        CorpusError::Io(e)
    }
}

pub fn parse_conll(text: &str, opts: &ReadOptions) -> Result<Vec<Sentence>, CorpusError> {
    read_conll(text.as_bytes(), opts)
}

/// Read sentences from a CoNLL stream. Line numbers in errors are 1-based.
pub fn read_conll<R: BufRead>(reader: R, opts: &ReadOptions) -> Result<Vec<Sentence>, CorpusError> {
    let needed = opts.columns.required();
    let mut sentences = Vec::new();
    let mut pending: Vec<Token> = Vec::new();
    let mut lines: Vec<usize> = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            flush(&mut pending, &mut lines, &mut sentences, opts)?;
            continue;
        }
        if trimmed.starts_with("-DOCSTART-") {
            continue;
        }
        let columns: Vec<String> = trimmed.split_whitespace().map(str::to_string).collect();
        if columns.len() < needed {
            return Err(CorpusError::MalformedLine {
                line: lineno,
                found: columns.len(),
                needed,
            });
        }
        let cm = opts.columns;
        let gold_label = match cm.label {
            Some(i) => {
                let label = &columns[i];
                let ok = match parse_tag(label) {
                    Some(tag) => match (tag.entity_type(), &opts.entity_types) {
                        (Some(ty), Some(allowed)) => allowed.iter().any(|a| a == ty),
                        _ => true,
                    },
                    None => false,
                };
                if !ok {
                    return Err(CorpusError::InvalidLabel {
                        line: lineno,
                        label: label.clone(),
                    });
                }
                label.clone()
            }
            None => "O".to_string(),
        };
        pending.push(Token {
            surface: columns[cm.surface].clone(),
            pos: columns[cm.pos].clone(),
            chunk: columns[cm.chunk].clone(),
            gold_label,
            predicted_label: None,
            columns,
        });
        lines.push(lineno);
    }
    flush(&mut pending, &mut lines, &mut sentences, opts)?;
    Ok(sentences)
}

fn flush(
    pending: &mut Vec<Token>,
    lines: &mut Vec<usize>,
    out: &mut Vec<Sentence>,
    opts: &ReadOptions,
) -> Result<(), CorpusError> {
    if pending.is_empty() {
        return Ok(());
    }
    let mut tokens = std::mem::take(pending);
    let token_lines = std::mem::take(lines);
    let labels: Vec<&str> = tokens.iter().map(|t| t.gold_label.as_str()).collect();

    let normalized = match (opts.scheme, opts.strictness) {
        (Scheme::Iob2, Strictness::Strict) => match iob::extract_spans(&labels) {
            Ok(_) => None,
            Err(e) => return Err(at_line(e, &token_lines)),
        },
        (Scheme::Iob1, Strictness::Strict) => {
            Some(iob::convert_scheme(&labels, Scheme::Iob1, Scheme::Iob2).map_err(|e| at_line(e, &token_lines))?)
        }
        // In IOB1 every I- without a same-type predecessor opens an entity,
        // which is exactly what repair does.
        (_, Strictness::Lenient) => Some(iob::repair_iob(&labels)),
    };
    if let Some(fixed) = normalized {
        for (token, label) in tokens.iter_mut().zip(fixed) {
            token.gold_label = label;
        }
    }

    let sentence = Sentence { tokens };
    match opts.max_len {
        Some(max) if sentence.len() > max => {
            let parts = split_long_sentence(sentence, max).ok_or(CorpusError::SentenceTooLong {
                line: token_lines[0],
                len: token_lines.len(),
                max,
            })?;
            out.extend(parts);
        }
        _ => out.push(sentence),
    }
    Ok(())
}

fn at_line(e: iob::IobError, lines: &[usize]) -> CorpusError {
    match e {
        iob::IobError::InvalidLabel { position, label } => CorpusError::InvalidLabel {
            line: lines[position],
            label,
        },
        iob::IobError::InvalidSequence {
            position,
            label,
            previous,
        } => CorpusError::InvalidSequence {
            line: lines[position],
            label,
            previous,
        },
    }
}

/// Write the four canonical columns (surface, POS, chunk, gold), single-space
/// separated, one blank line after each sentence.
pub fn write_conll<W: Write>(mut w: W, sentences: &[Sentence]) -> io::Result<()> {
    for sentence in sentences {
        for t in &sentence.tokens {
            writeln!(w, "{} {} {} {}", t.surface, t.pos, t.chunk, t.gold_label)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Write every original input column followed by the predicted label.
pub fn write_tagged<W: Write>(mut w: W, sentences: &[Sentence]) -> io::Result<()> {
    for sentence in sentences {
        for t in &sentence.tokens {
            let pred = t.predicted_label.as_deref().unwrap_or("O");
            writeln!(w, "{} {}", t.columns.join(" "), pred)?;
        }
        writeln!(w)?;
    }
    Ok(())
}
