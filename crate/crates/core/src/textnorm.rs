//! Normalization and tokenization applied before every lexical metric and
//! before utility computation.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::data::read_file;
use crate::error::{Error, Result};

/// Substitution table shipped with the crate: contractions, titles and the
/// British to American spelling map.
pub const BUNDLED_ENGLISH_RULES: &str = include_str!("../data/english_rules.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizerKind {
    None,
    #[default]
    Basic,
    EnglishRules,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NormalizerSpec {
    pub kind: NormalizerKind,
    /// Rule file for `english_rules`. When absent the bundled table is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules_path: Option<PathBuf>,
}

impl NormalizerSpec {
    pub fn none() -> Self {
        NormalizerSpec {
            kind: NormalizerKind::None,
            rules_path: None,
        }
    }

    pub fn basic() -> Self {
        NormalizerSpec::default()
    }

    pub fn english(rules_path: Option<PathBuf>) -> Self {
        NormalizerSpec {
            kind: NormalizerKind::EnglishRules,
            rules_path,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenUnit {
    #[default]
    Word,
    Char,
}

/// Whole-word substitution table. Patterns may span several words; matching
/// is longest-first at each position.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleTable {
    rules: HashMap<Vec<String>, Vec<String>>,
    max_words: usize,
}

impl RuleTable {
    pub fn parse(contents: &str, path: &Path) -> Result<Self> {
        let mut table = RuleTable::default();
        for (lineno, line) in contents.lines().enumerate() {
            let lineno = lineno + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (pattern, replacement) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path, lineno, "expected pattern<TAB>replacement"))?;
            if replacement.contains('\t') {
                return Err(Error::parse(path, lineno, "too many fields"));
            }
            let pattern = words(&basic(pattern));
            if pattern.is_empty() {
                return Err(Error::parse(path, lineno, "empty pattern"));
            }
            let replacement = words(&basic(replacement));
            table.max_words = table.max_words.max(pattern.len());
            table.rules.insert(pattern, replacement);
        }
        // A replacement that itself contains a pattern would make
        // normalization non-idempotent.
        for (pattern, replacement) in &table.rules {
            let refs: Vec<&str> = replacement.iter().map(String::as_str).collect();
            if table.apply_words(&refs) != replacement.join(" ") {
                return Err(Error::parse(
                    path,
                    0,
                    format!(
                        "replacement {:?} for {:?} is rewritten again by another rule",
                        replacement.join(" "),
                        pattern.join(" ")
                    ),
                ));
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_file(path)?, path)
    }

    pub fn bundled() -> Self {
        Self::parse(
            BUNDLED_ENGLISH_RULES,
            Path::new("<bundled english_rules.tsv>"),
        )
        .expect("bundled rule table parses")
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    fn apply_words(&self, input: &[&str]) -> String {
        let mut out: Vec<&str> = Vec::with_capacity(input.len());
        let mut key: Vec<String> = Vec::with_capacity(self.max_words);
        let mut i = 0;
        'outer: while i < input.len() {
            let longest = self.max_words.min(input.len() - i);
            for len in (1..=longest).rev() {
                key.clear();
                key.extend(input[i..i + len].iter().map(|w| w.to_string()));
                if let Some(rep) = self.rules.get(&key) {
                    out.extend(rep.iter().map(String::as_str));
                    i += len;
                    continue 'outer;
                }
            }
            out.push(input[i]);
            i += 1;
        }
        out.join(" ")
    }
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

/// A normalizer with its rule table resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum Normalizer {
    None,
    Basic,
    EnglishRules(RuleTable),
}

impl Normalizer {
    pub fn from_spec(spec: &NormalizerSpec) -> Result<Self> {
        Ok(match spec.kind {
            NormalizerKind::None => Normalizer::None,
            NormalizerKind::Basic => Normalizer::Basic,
            NormalizerKind::EnglishRules => Normalizer::EnglishRules(match &spec.rules_path {
                Some(p) => RuleTable::load(p)?,
                None => RuleTable::bundled(),
            }),
        })
    }

    pub fn normalize(&self, text: &str) -> String {
        match self {
            Normalizer::None => text.to_string(),
            Normalizer::Basic => basic(text),
            Normalizer::EnglishRules(table) => {
                let b = basic(text);
                let ws: Vec<&str> = b.split_whitespace().collect();
                table.apply_words(&ws)
            }
        }
    }
}

/// Convenience wrapper that resolves `spec` and normalizes one string.
pub fn normalize(text: &str, spec: &NormalizerSpec) -> Result<String> {
    Ok(Normalizer::from_spec(spec)?.normalize(text))
}

fn basic_once(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for ch in text.nfkc().flat_map(char::to_lowercase) {
        let ch = if ch == '\u{2019}' { '\'' } else { ch };
        // A few symbols are uppercase letters without a lowercase form.
        if (ch.is_alphabetic() && !ch.is_uppercase()) || ch.is_numeric() || ch == '\'' {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(ch);
        } else {
            pending_space = true;
        }
    }
    out
}

/// Compatibility-normalize, lowercase, replace everything but letters,
/// digits and apostrophes with spaces, collapse whitespace.
pub fn basic(text: &str) -> String {
    // Lowercasing and NFKC do not commute for a handful of code points, so
    // iterate to the fixed point.
    let mut cur = basic_once(text);
    for _ in 0..4 {
        let next = basic_once(&cur);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

pub fn tokenize(text: &str, unit: TokenUnit) -> Vec<String> {
    match unit {
        TokenUnit::Word => text.split_whitespace().map(str::to_string).collect(),
        TokenUnit::Char => text
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect(),
    }
}
