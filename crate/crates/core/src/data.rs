//! Utterances, hypothesis sets and decode results, plus their line-oriented
//! file formats.
//!
//! Manifest files are tab separated (`id`, `audio_path`, `reference`,
//! `language`); hypothesis-set and result files hold one JSON object per line.
//! Hypothesis text is always stored raw. Normalization happens downstream and
//! is never written back.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::SamplerConfig;

/// Language tag used when a manifest leaves the column empty.
pub const UNDETERMINED_LANGUAGE: &str = "und";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub id: String,
    pub audio_path: Option<PathBuf>,
    pub reference: Option<String>,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Hypothesis {
    pub text: String,
    /// Sum of token log-probabilities, natural log.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_count: Option<u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub external_scores: BTreeMap<String, f64>,
}

impl Hypothesis {
    pub fn new(text: impl Into<String>) -> Self {
        Hypothesis {
            text: text.into(),
            ..Default::default()
        }
    }

    pub fn with_log_prob(mut self, log_prob: f64) -> Self {
        self.log_prob = Some(log_prob);
        self
    }

    pub fn with_token_count(mut self, count: u64) -> Self {
        self.token_count = Some(count);
        self
    }

    pub fn with_score(mut self, key: impl Into<String>, value: f64) -> Self {
        self.external_scores.insert(key.into(), value);
        self
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if let Some(lp) = self.log_prob {
            if !lp.is_finite() {
                return Err(format!("log_prob {lp} is not finite"));
            }
        }
        for (key, value) in &self.external_scores {
            if key.is_empty() {
                return Err("external_scores has an empty key".into());
            }
            if !value.is_finite() {
                return Err(format!("external score {key:?} is not finite"));
            }
        }
        Ok(())
    }
}

/// The sampled candidates for one utterance, in generation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSet {
    pub utterance_id: String,
    pub hypotheses: Vec<Hypothesis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerConfig>,
}

impl HypothesisSet {
    pub fn new(utterance_id: impl Into<String>, hypotheses: Vec<Hypothesis>) -> Result<Self> {
        let set = HypothesisSet {
            utterance_id: utterance_id.into(),
            hypotheses,
            sampler: None,
        };
        set.validate().map_err(Error::InvalidInput)?;
        Ok(set)
    }

    pub fn from_texts<S: AsRef<str>>(utterance_id: &str, texts: &[S]) -> Result<Self> {
        Self::new(
            utterance_id,
            texts.iter().map(|t| Hypothesis::new(t.as_ref())).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    /// The first `n` hypotheses in generation order.
    pub fn prefix(&self, n: usize) -> Result<HypothesisSet> {
        if n == 0 || n > self.len() {
            return Err(Error::invalid(format!(
                "utterance {:?}: requested {n} hypotheses, {} available",
                self.utterance_id,
                self.len()
            )));
        }
        Ok(HypothesisSet {
            utterance_id: self.utterance_id.clone(),
            hypotheses: self.hypotheses[..n].to_vec(),
            sampler: self.sampler.clone(),
        })
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.hypotheses.is_empty() {
            return Err(format!("hypothesis set {:?} is empty", self.utterance_id));
        }
        for (i, h) in self.hypotheses.iter().enumerate() {
            h.validate().map_err(|m| format!("hypothesis {i}: {m}"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedItem {
    pub hypothesis: Hypothesis,
    pub weight: u32,
    /// Index of the first occurrence in the source set.
    pub first_index: usize,
}

/// A hypothesis set with exact duplicates collapsed into multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedHypothesisSet {
    pub utterance_id: String,
    pub items: Vec<WeightedItem>,
}

impl WeightedHypothesisSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn weights(&self) -> Vec<u32> {
        self.items.iter().map(|it| it.weight).collect()
    }

    /// Number of samples in the original set.
    pub fn total_weight(&self) -> u64 {
        self.items.iter().map(|it| it.weight as u64).sum()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.items
            .iter()
            .map(|it| it.hypothesis.text.as_str())
            .collect()
    }
}

/// Collapses repeated texts (exact string equality on raw text). The first
/// occurrence of each text is retained and items keep first-occurrence order.
pub fn dedup_weight(set: &HypothesisSet) -> WeightedHypothesisSet {
    let mut position: HashMap<&str, usize> = HashMap::new();
    let mut items: Vec<WeightedItem> = Vec::new();
    for (i, h) in set.hypotheses.iter().enumerate() {
        match position.get(h.text.as_str()) {
            Some(&k) => items[k].weight += 1,
            None => {
                position.insert(h.text.as_str(), items.len());
                items.push(WeightedItem {
                    hypothesis: h.clone(),
                    weight: 1,
                    first_index: i,
                });
            }
        }
    }
    WeightedHypothesisSet {
        utterance_id: set.utterance_id.clone(),
        items,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Map,
    Beam,
    Mbr,
    MbrPruned,
    Weighted,
    Oracle,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Map => "map",
            Method::Beam => "beam",
            Method::Mbr => "mbr",
            Method::MbrPruned => "mbr_pruned",
            Method::Weighted => "weighted",
            Method::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub utterance_id: String,
    pub method: Method,
    /// Distinguishes parameterizations of one method, e.g. `mbr_n64`.
    pub label: String,
    pub chosen_index: usize,
    pub chosen_text: String,
    pub objective: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_candidate_objective: Option<Vec<f64>>,
}

impl DecodeResult {
    pub fn new(
        set: &HypothesisSet,
        method: Method,
        chosen_index: usize,
        objective: f64,
        per_candidate_objective: Option<Vec<f64>>,
    ) -> Self {
        DecodeResult {
            utterance_id: set.utterance_id.clone(),
            method,
            label: method.as_str().to_string(),
            chosen_index,
            chosen_text: set.hypotheses[chosen_index].text.clone(),
            objective,
            per_candidate_objective,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(contents.as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<Utterance>> {
    let path = path.as_ref();
    parse_manifest(&read_text(path)?, path)
}

pub fn parse_manifest(contents: &str, path: &Path) -> Result<Vec<Utterance>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (lineno, line) in contents.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() > 4 {
            return Err(Error::parse(
                path,
                lineno,
                format!(
                    "expected at most 4 tab-separated fields, found {}",
                    fields.len()
                ),
            ));
        }
        let field = |i: usize| fields.get(i).copied().filter(|f| !f.is_empty());
        let id = field(0).ok_or_else(|| Error::parse(path, lineno, "empty utterance id"))?;
        if !seen.insert(id.to_string()) {
            return Err(Error::DuplicateId(id.to_string()));
        }
        out.push(Utterance {
            id: id.to_string(),
            audio_path: field(1).map(PathBuf::from),
            reference: field(2).map(str::to_string),
            language: field(3).unwrap_or(UNDETERMINED_LANGUAGE).to_string(),
        });
    }
    Ok(out)
}

pub fn format_manifest(utterances: &[Utterance]) -> Result<String> {
    let mut out = String::new();
    for u in utterances {
        let audio = u
            .audio_path
            .as_ref()
            .map(|p| p.to_string_lossy().into_owned())
            .unwrap_or_default();
        let reference = u.reference.clone().unwrap_or_default();
        for value in [&u.id, &audio, &reference, &u.language] {
            if value.contains(['\t', '\n', '\r']) {
                return Err(Error::invalid(format!(
                    "utterance {:?}: field contains a tab or newline",
                    u.id
                )));
            }
        }
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            u.id, audio, reference, u.language
        ));
    }
    Ok(out)
}

pub fn write_manifest(path: impl AsRef<Path>, utterances: &[Utterance]) -> Result<()> {
    write_text(path.as_ref(), &format_manifest(utterances)?)
}

pub fn load_hypothesis_sets(path: impl AsRef<Path>) -> Result<Vec<HypothesisSet>> {
    let path = path.as_ref();
    parse_hypothesis_sets(&read_text(path)?, path)
}

pub fn parse_hypothesis_sets(contents: &str, path: &Path) -> Result<Vec<HypothesisSet>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in contents.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let set: HypothesisSet = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, lineno + 1, e.to_string()))?;
        set.validate()
            .map_err(|m| Error::parse(path, lineno + 1, m))?;
        if !seen.insert(set.utterance_id.clone()) {
            return Err(Error::parse(
                path,
                lineno + 1,
                format!("duplicate utterance id {:?}", set.utterance_id),
            ));
        }
        out.push(set);
    }
    Ok(out)
}

pub fn format_hypothesis_sets(sets: &[HypothesisSet]) -> Result<String> {
    format_json_lines(sets)
}

pub fn write_hypothesis_sets(path: impl AsRef<Path>, sets: &[HypothesisSet]) -> Result<()> {
    write_text(path.as_ref(), &format_hypothesis_sets(sets)?)
}

pub fn load_decode_results(path: impl AsRef<Path>) -> Result<Vec<DecodeResult>> {
    let path = path.as_ref();
    let contents = read_text(path)?;
    contents
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(path, i + 1, e.to_string())))
        .collect()
}

pub fn write_decode_results(path: impl AsRef<Path>, results: &[DecodeResult]) -> Result<()> {
    write_text(path.as_ref(), &format_json_lines(results)?)
}

fn format_json_lines<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::invalid(e.to_string()))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    write_text(path, contents)
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    read_text(path)
}
