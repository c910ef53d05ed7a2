//! Categorical token features: capitalization class, regex rules, and
//! one-hot encoders for POS and chunk tags.

use std::collections::{HashMap, HashSet};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::corpus::Sentence;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseClass {
    AllCaps,
    InitCap,
    Lower,
    Mixed,
    NoLetter,
}

impl CaseClass {
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        match self {
            CaseClass::AllCaps => 0,
            CaseClass::InitCap => 1,
            CaseClass::Lower => 2,
            CaseClass::Mixed => 3,
            CaseClass::NoLetter => 4,
        }
    }

    /// Classify a token. Underscores join syllables; a token whose uppercase
    /// letters are all syllable-initial (and whose first letter is uppercase)
    /// is `InitCap`.
    pub fn of(surface: &str) -> CaseClass {
        let mut letters = 0;
        let mut upper = 0;
        let mut lower = 0;
        let mut first_upper = None;
        let mut inner_upper = false;
        for syllable in surface.split('_') {
            let mut first_in_syllable = true;
            for c in syllable.chars().filter(|c| c.is_alphabetic()) {
                letters += 1;
                if c.is_uppercase() {
                    upper += 1;
                    if !first_in_syllable {
                        inner_upper = true;
                    }
                } else if c.is_lowercase() {
                    lower += 1;
                }
                if first_upper.is_none() {
                    first_upper = Some(c.is_uppercase());
                }
                first_in_syllable = false;
            }
        }
        if letters == 0 {
            CaseClass::NoLetter
        } else if lower == 0 && upper > 0 {
            CaseClass::AllCaps
        } else if upper == 0 {
            CaseClass::Lower
        } else if first_upper == Some(true) && !inner_upper {
            CaseClass::InitCap
        } else {
            CaseClass::Mixed
        }
    }
}

/// One-hot over the five [`CaseClass`] values.
pub fn case_feature(surface: &str) -> Vec<f64> {
    let mut v = vec![0.0; CaseClass::COUNT];
    v[CaseClass::of(surface).index()] = 1.0;
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleScope {
    SelfToken,
    Prev1,
    Prev2,
}

impl RuleScope {
    fn offset(self) -> usize {
        match self {
            RuleScope::SelfToken => 0,
            RuleScope::Prev1 => 1,
            RuleScope::Prev2 => 2,
        }
    }

    fn name(self) -> &'static str {
        match self {
            RuleScope::SelfToken => "self",
            RuleScope::Prev1 => "prev1",
            RuleScope::Prev2 => "prev2",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegexRule {
    pub name: String,
    pub scope: RuleScope,
    pub pattern: Regex,
}

/// Ordered rules; rule `k` owns feature slot `k`.
#[derive(Debug, Clone, Default)]
pub struct RegexRuleSet {
    rules: Vec<RegexRule>,
}

pub const DEFAULT_REGEX_RULES: &str = include_str!("../../data/regex_vi.tsv");

impl RegexRuleSet {
    pub fn empty() -> Self {
        RegexRuleSet::default()
    }

    pub fn default_vietnamese() -> Self {
        RegexRuleSet::parse(DEFAULT_REGEX_RULES).expect("bundled rule file is valid")
    }

    /// Parse `NAME<TAB>SCOPE<TAB>PATTERN` lines; `#` lines and blank lines
    /// are skipped.
    pub fn parse(text: &str) -> Result<Self, FeatureError> {
        let mut rules = Vec::new();
        let mut names = HashSet::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.splitn(3, '\t').collect();
            if parts.len() != 3 {
                return Err(FeatureError::BadRule {
                    line: lineno,
                    message: "expected NAME<TAB>SCOPE<TAB>PATTERN".into(),
                });
            }
            let name = parts[0].trim().to_string();
            let scope = match parts[1].trim() {
                "self" => RuleScope::SelfToken,
                "prev1" => RuleScope::Prev1,
                "prev2" => RuleScope::Prev2,
                other => {
                    return Err(FeatureError::BadRule {
                        line: lineno,
                        message: format!("unknown scope '{}'", other),
                    })
                }
            };
            let pattern = Regex::new(parts[2]).map_err(|e| FeatureError::BadRule {
                line: lineno,
                message: e.to_string(),
            })?;
            if !names.insert(name.clone()) {
                return Err(FeatureError::BadRule {
                    line: lineno,
                    message: format!("duplicate rule name '{}'", name),
                });
            }
            rules.push(RegexRule {
                name,
                scope,
                pattern,
            });
        }
        Ok(RegexRuleSet { rules })
    }

    /// Render back to the file format; `parse(to_text())` yields the same rules.
    pub fn to_text(&self) -> String {
        self.rules
            .iter()
            .map(|r| format!("{}\t{}\t{}\n", r.name, r.scope.name(), r.pattern.as_str()))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.rules.iter().map(|r| r.name.as_str()).collect()
    }

    /// Per-token binary vectors, one slot per rule.
    pub fn features(&self, sentence: &Sentence) -> Vec<Vec<f64>> {
        (0..sentence.len())
            .map(|i| {
                self.rules
                    .iter()
                    .map(|rule| {
                        let off = rule.scope.offset();
                        let fires = i >= off && rule.pattern.is_match(&sentence.tokens[i - off].surface);
                        if fires {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Tag → one-hot index, fixed by first-seen order, plus a final UNK slot.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct TagEncoder {
    tags: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for TagEncoder {
    fn from(tags: Vec<String>) -> Self {
        TagEncoder::fit(tags)
    }
}

impl From<TagEncoder> for Vec<String> {
    fn from(enc: TagEncoder) -> Self {
        enc.tags
    }
}

impl TagEncoder {
    pub fn fit<I, S>(tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut enc = TagEncoder::default();
        for t in tags {
            let t = t.as_ref();
            if !enc.index.contains_key(t) {
                enc.index.insert(t.to_string(), enc.tags.len());
                enc.tags.push(t.to_string());
            }
        }
        enc
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn width(&self) -> usize {
        self.tags.len() + 1
    }

    pub fn unk_index(&self) -> usize {
        self.tags.len()
    }

    pub fn index_of(&self, tag: &str) -> usize {
        self.index.get(tag).copied().unwrap_or(self.unk_index())
    }

    pub fn encode(&self, tag: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.width()];
        v[self.index_of(tag)] = 1.0;
        v
    }
}

/// POS and chunk encoders fitted on a corpus.
pub fn encode_tagset(sentences: &[Sentence]) -> (TagEncoder, TagEncoder) {
    let tokens = || sentences.iter().flat_map(|s| s.tokens.iter());
    (
        TagEncoder::fit(tokens().map(|t| t.pos.as_str())),
        TagEncoder::fit(tokens().map(|t| t.chunk.as_str())),
    )
}
