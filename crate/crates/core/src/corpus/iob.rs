//! IOB label grammar, span extraction and scheme conversion.
//!
//! The canonical in-memory scheme is IOB2: every entity starts with `B-`.
//! IOB1 (the CoNLL 2003 distribution format) only uses `B-` to separate two
//! adjacent entities of the same type.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Iob1,
    Iob2,
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "iob1" => Ok(Scheme::Iob1),
            "iob2" | "bio" => Ok(Scheme::Iob2),
            other => Err(format!("unknown tagging scheme '{}'", other)),
        }
    }
}

/// A parsed label. Borrowed from the label string.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

impl<'a> Tag<'a> {
    pub fn entity_type(&self) -> Option<&'a str> {
        match *self {
            Tag::Outside => None,
            Tag::Begin(t) | Tag::Inside(t) => Some(t),
        }
    }
}

/// Parse `O`, `B-TYPE` or `I-TYPE`. `TYPE` must be nonempty and contain no
/// whitespace.
pub fn parse_tag(label: &str) -> Option<Tag<'_>> {
    if label == "O" {
        return Some(Tag::Outside);
    }
    let (prefix, ty) = label.split_at_checked(2)?;
    if ty.is_empty() || ty.chars().any(char::is_whitespace) {
        return None;
    }
    match prefix {
        "B-" => Some(Tag::Begin(ty)),
        "I-" => Some(Tag::Inside(ty)),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub entity_type: String,
    /// Inclusive.
    pub start: usize,
    /// Inclusive.
    pub end: usize,
}

impl EntitySpan {
    pub fn new(entity_type: impl Into<String>, start: usize, end: usize) -> Self {
        EntitySpan {
            entity_type: entity_type.into(),
            start,
            end,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for EntitySpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.entity_type, self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IobError {
    /// The label does not match `O | B-TYPE | I-TYPE`.
    InvalidLabel { position: usize, label: String },
    /// The label is well formed but cannot follow its predecessor.
    InvalidSequence {
        position: usize,
        label: String,
        previous: String,
    },
}

impl IobError {
    pub fn position(&self) -> usize {
        match self {
            IobError::InvalidLabel { position, .. } | IobError::InvalidSequence { position, .. } => {
                *position
            }
        }
    }
}

impl fmt::Display for IobError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IobError::InvalidLabel { position, label } => {
                write!(f, "invalid label '{}' at position {}", label, position)
            }
            IobError::InvalidSequence {
                position,
                label,
                previous,
            } => write!(
                f,
                "label '{}' at position {} cannot follow '{}'",
                label, position, previous
            ),
        }
    }
}

impl std::error::Error for IobError {}

fn parse_at<S: AsRef<str>>(labels: &[S], i: usize) -> Result<Tag<'_>, IobError> {
    let label = labels[i].as_ref();
    parse_tag(label).ok_or_else(|| IobError::InvalidLabel {
        position: i,
        label: label.to_string(),
    })
}

fn sequence_error<S: AsRef<str>>(labels: &[S], i: usize) -> IobError {
    IobError::InvalidSequence {
        position: i,
        label: labels[i].as_ref().to_string(),
        previous: if i == 0 {
            "<start>".to_string()
        } else {
            labels[i - 1].as_ref().to_string()
        },
    }
}

/// Extract the maximal `B-X (I-X)*` runs of a strict IOB2 sequence.
pub fn extract_spans<S: AsRef<str>>(labels: &[S]) -> Result<Vec<EntitySpan>, IobError> {
    let mut spans: Vec<EntitySpan> = Vec::new();
    let mut open = false;
    for i in 0..labels.len() {
        match parse_at(labels, i)? {
            Tag::Outside => open = false,
            Tag::Begin(ty) => {
                spans.push(EntitySpan::new(ty, i, i));
                open = true;
            }
            Tag::Inside(ty) => match spans.last_mut() {
                Some(span) if open && span.entity_type == ty => span.end = i,
                _ => return Err(sequence_error(labels, i)),
            },
        }
    }
    Ok(spans)
}

fn extract_spans_iob1<S: AsRef<str>>(labels: &[S]) -> Result<Vec<EntitySpan>, IobError> {
    let mut spans: Vec<EntitySpan> = Vec::new();
    let mut open = false;
    for i in 0..labels.len() {
        let continues = |spans: &Vec<EntitySpan>, ty: &str| {
            open && spans.last().map_or(false, |s| s.entity_type == ty)
        };
        match parse_at(labels, i)? {
            Tag::Outside => open = false,
            Tag::Begin(ty) => {
                // B- only separates two same-type neighbours in IOB1.
                if !continues(&spans, ty) {
                    return Err(sequence_error(labels, i));
                }
                spans.push(EntitySpan::new(ty, i, i));
            }
            Tag::Inside(ty) => {
                if continues(&spans, ty) {
                    spans.last_mut().unwrap().end = i;
                } else {
                    spans.push(EntitySpan::new(ty, i, i));
                    open = true;
                }
            }
        }
    }
    Ok(spans)
}

/// Span extraction under either scheme.
pub fn extract_spans_in<S: AsRef<str>>(
    labels: &[S],
    scheme: Scheme,
) -> Result<Vec<EntitySpan>, IobError> {
    match scheme {
        Scheme::Iob1 => extract_spans_iob1(labels),
        Scheme::Iob2 => extract_spans(labels),
    }
}

/// Render spans as an IOB2 sequence of length `len`. Spans must be sorted,
/// in range and non-overlapping.
pub fn spans_to_labels(spans: &[EntitySpan], len: usize) -> Vec<String> {
    let mut labels = vec!["O".to_string(); len];
    for span in spans {
        labels[span.start] = format!("B-{}", span.entity_type);
        for label in &mut labels[span.start + 1..=span.end] {
            *label = format!("I-{}", span.entity_type);
        }
    }
    labels
}

fn spans_to_iob1(spans: &[EntitySpan], len: usize) -> Vec<String> {
    let mut labels = vec!["O".to_string(); len];
    let mut prev: Option<&EntitySpan> = None;
    for span in spans {
        for label in &mut labels[span.start..=span.end] {
            *label = format!("I-{}", span.entity_type);
        }
        if let Some(p) = prev {
            if p.end + 1 == span.start && p.entity_type == span.entity_type {
                labels[span.start] = format!("B-{}", span.entity_type);
            }
        }
        prev = Some(span);
    }
    labels
}

/// Turn any sequence over the label alphabet into valid IOB2: an `I-X` with
/// no `B-X`/`I-X` predecessor becomes `B-X`. Everything else is unchanged.
///
/// Labels that do not parse at all are passed through untouched.
pub fn repair_iob<S: AsRef<str>>(labels: &[S]) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(labels.len());
    let mut prev_type: Option<String> = None;
    for label in labels {
        let label = label.as_ref();
        match parse_tag(label) {
            Some(Tag::Inside(ty)) if prev_type.as_deref() != Some(ty) => {
                out.push(format!("B-{}", ty));
            }
            _ => out.push(label.to_string()),
        }
        prev_type = parse_tag(label).and_then(|t| t.entity_type()).map(str::to_string);
    }
    out
}

/// Convert between IOB1 and IOB2, preserving the extracted span set.
pub fn convert_scheme<S: AsRef<str>>(
    labels: &[S],
    from: Scheme,
    to: Scheme,
) -> Result<Vec<String>, IobError> {
    let spans = extract_spans_in(labels, from)?;
    Ok(match to {
        Scheme::Iob1 => spans_to_iob1(&spans, labels.len()),
        Scheme::Iob2 => spans_to_labels(&spans, labels.len()),
    })
}
