use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::read_file;
use crate::error::{Error, Result};
use crate::metrics::{cosine_distance, BleuConfig, EmbeddingTable, NgramProfile};
use crate::textnorm::{tokenize, Normalizer, NormalizerSpec, TokenUnit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityKind {
    #[default]
    BleuSentence,
    /// `1 - cosine_distance` of externally supplied embeddings.
    EmbeddingCosineSimilarity,
    /// Precomputed values loaded from a triples file.
    ExternalMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tokenization {
    #[default]
    Word,
    Char,
    /// Text is already space-joined tokens; split as-is, no normalization.
    PreTokenized,
}

impl Tokenization {
    pub fn from_unit(unit: TokenUnit) -> Self {
        match unit {
            TokenUnit::Word => Tokenization::Word,
            TokenUnit::Char => Tokenization::Char,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct UtilitySpec {
    pub kind: UtilityKind,
    pub bleu: BleuConfig,
    pub normalizer: NormalizerSpec,
    pub tokenization: Tokenization,
}

impl UtilitySpec {
    pub fn bleu(normalizer: NormalizerSpec, tokenization: Tokenization) -> Self {
        UtilitySpec {
            kind: UtilityKind::BleuSentence,
            bleu: BleuConfig::sentence(),
            normalizer,
            tokenization,
        }
    }

    pub fn embedding() -> Self {
        UtilitySpec {
            kind: UtilityKind::EmbeddingCosineSimilarity,
            ..Default::default()
        }
    }

    pub fn external() -> Self {
        UtilitySpec {
            kind: UtilityKind::ExternalMatrix,
            ..Default::default()
        }
    }

    /// Stable identifier recorded on every matrix built from this spec.
    pub fn id(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }
}

/// Precomputed utilities keyed by `(utterance_id, candidate, reference)`,
/// with indices into the original hypothesis set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalUtilities {
    values: HashMap<(String, usize, usize), f64>,
}

impl ExternalUtilities {
    pub fn insert(&mut self, utterance_id: &str, candidate: usize, reference: usize, value: f64) {
        self.values
            .insert((utterance_id.to_string(), candidate, reference), value);
    }

    pub fn get(&self, utterance_id: &str, candidate: usize, reference: usize) -> Option<f64> {
        self.values
            .get(&(utterance_id.to_string(), candidate, reference))
            .or_else(|| self.values.get(&(String::new(), candidate, reference)))
            .copied()
    }

    /// Lines are `i<TAB>j<TAB>value` (applies to any utterance) or
    /// `utterance_id<TAB>i<TAB>j<TAB>value`.
    pub fn parse(contents: &str, path: &Path) -> Result<Self> {
        let mut out = ExternalUtilities::default();
        for (lineno, line) in contents.lines().enumerate() {
            let lineno = lineno + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let (utt, rest) = match f.len() {
                3 => ("", &f[..]),
                4 => (f[0], &f[1..]),
                n => {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("expected 3 or 4 fields, found {n}"),
                    ))
                }
            };
            let idx = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| Error::parse(path, lineno, format!("bad index {s:?}: {e}")))
            };
            let value: f64 = rest[2]
                .parse()
                .map_err(|e| Error::parse(path, lineno, format!("bad value {:?}: {e}", rest[2])))?;
            if !value.is_finite() {
                return Err(Error::parse(path, lineno, "non-finite utility"));
            }
            out.insert(utt, idx(rest[0])?, idx(rest[1])?, value);
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&read_file(path)?, path)
    }
}

/// Pairwise utility over a fixed list of candidates, which double as
/// pseudo-references.
pub trait PairwiseUtility: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `u(candidate, pseudo_reference)`.
    fn utility(&self, candidate: usize, reference: usize) -> Result<f64>;
}

/// A utility spec bound to the resources it needs.
#[derive(Debug, Clone)]
pub struct Utility {
    spec: UtilitySpec,
    normalizer: Normalizer,
    embeddings: Option<Arc<EmbeddingTable>>,
    external: Option<Arc<ExternalUtilities>>,
}

impl Utility {
    pub fn new(
        spec: UtilitySpec,
        embeddings: Option<Arc<EmbeddingTable>>,
        external: Option<Arc<ExternalUtilities>>,
    ) -> Result<Self> {
        match spec.kind {
            UtilityKind::BleuSentence => spec.bleu.validate()?,
            UtilityKind::EmbeddingCosineSimilarity if embeddings.is_none() => {
                return Err(Error::invalid("embedding utility needs an embedding table"))
            }
            UtilityKind::ExternalMatrix if external.is_none() => {
                return Err(Error::invalid(
                    "external_matrix utility needs a utilities file",
                ))
            }
            _ => {}
        }
        let normalizer = Normalizer::from_spec(&spec.normalizer)?;
        Ok(Utility {
            spec,
            normalizer,
            embeddings,
            external,
        })
    }

    /// Sentence-BLEU utility with no external resources.
    pub fn bleu(normalizer: NormalizerSpec, tokenization: Tokenization) -> Result<Self> {
        Self::new(UtilitySpec::bleu(normalizer, tokenization), None, None)
    }

    pub fn spec(&self) -> &UtilitySpec {
        &self.spec
    }

    /// Binds the utility to a candidate list. `source_indices[i]` is the index
    /// of candidate `i` in its original hypothesis set (used for external
    /// matrices); pass `None` to use positions.
    pub fn prepare<'a>(
        &'a self,
        utterance_id: &str,
        texts: &[&str],
        source_indices: Option<&[usize]>,
    ) -> Result<PreparedUtility<'a>> {
        let inner = match self.spec.kind {
            UtilityKind::BleuSentence => {
                let mut vocab: HashMap<String, u32> = HashMap::new();
                let profiles = texts
                    .iter()
                    .map(|t| {
                        let ids: Vec<u32> = self
                            .tokens(t)
                            .into_iter()
                            .map(|tok| {
                                let next = vocab.len() as u32;
                                *vocab.entry(tok).or_insert(next)
                            })
                            .collect();
                        NgramProfile::new(&ids, self.spec.bleu.max_order)
                    })
                    .collect();
                Prepared::Bleu(profiles)
            }
            UtilityKind::EmbeddingCosineSimilarity => {
                let table = self.embeddings.as_deref().expect("checked in Utility::new");
                Prepared::Embedding(texts.iter().map(|t| table.get(t)).collect::<Result<_>>()?)
            }
            UtilityKind::ExternalMatrix => Prepared::External {
                table: self.external.as_deref().expect("checked in Utility::new"),
                utterance_id: utterance_id.to_string(),
                indices: match source_indices {
                    Some(ix) => ix.to_vec(),
                    None => (0..texts.len()).collect(),
                },
            },
        };
        Ok(PreparedUtility {
            utility: self,
            n: texts.len(),
            inner,
        })
    }

    fn tokens(&self, text: &str) -> Vec<String> {
        match self.spec.tokenization {
            Tokenization::PreTokenized => tokenize(text, TokenUnit::Word),
            Tokenization::Word => tokenize(&self.normalizer.normalize(text), TokenUnit::Word),
            Tokenization::Char => tokenize(&self.normalizer.normalize(text), TokenUnit::Char),
        }
    }
}

#[derive(Debug)]
enum Prepared<'a> {
    Bleu(Vec<NgramProfile<u32>>),
    Embedding(Vec<&'a [f64]>),
    External {
        table: &'a ExternalUtilities,
        utterance_id: String,
        indices: Vec<usize>,
    },
}

#[derive(Debug)]
pub struct PreparedUtility<'a> {
    utility: &'a Utility,
    n: usize,
    inner: Prepared<'a>,
}

impl PairwiseUtility for PreparedUtility<'_> {
    fn len(&self) -> usize {
        self.n
    }

    fn utility(&self, candidate: usize, reference: usize) -> Result<f64> {
        let value = match &self.inner {
            Prepared::Bleu(p) => p[candidate]
                .stats_against(&p[reference])
                .score(&self.utility.spec.bleu),
            Prepared::Embedding(v) => {
                1.0 - cosine_distance(v[candidate], v[reference]).map_err(|e| Error::Utility {
                    candidate,
                    reference,
                    message: e.to_string(),
                })?
            }
            Prepared::External {
                table,
                utterance_id,
                indices,
            } => {
                let (i, j) = (indices[candidate], indices[reference]);
                table
                    .get(utterance_id, i, j)
                    .ok_or_else(|| Error::Utility {
                        candidate: i,
                        reference: j,
                        message: format!("no external utility for utterance {utterance_id:?}"),
                    })?
            }
        };
        if !value.is_finite() {
            return Err(Error::Utility {
                candidate,
                reference,
                message: format!("non-finite utility {value}"),
            });
        }
        Ok(value)
    }
}

/// Wraps a utility and counts every evaluation.
#[derive(Debug)]
pub struct CountingUtility<U> {
    inner: U,
    calls: AtomicUsize,
}

impl<U: PairwiseUtility> CountingUtility<U> {
    pub fn new(inner: U) -> Self {
        CountingUtility {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn evaluations(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<U: PairwiseUtility> PairwiseUtility for CountingUtility<U> {
    fn len(&self) -> usize {
        self.inner.len()
    }

    fn utility(&self, candidate: usize, reference: usize) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.utility(candidate, reference)
    }
}
