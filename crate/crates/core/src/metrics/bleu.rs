//! BLEU with the sufficient statistics, closest-reference-length rule and
//! smoothing schedules of sacreBLEU, over pre-tokenized input.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Log of a zero precision, as in sacreBLEU.
const LOG_ZERO: f64 = -9_999_999_999.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// Each successive zero-match order k gets precision 1 / (2^k · total).
    Exp,
    /// Zero-match orders get precision `value / total`.
    Floor(f64),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BleuLevel {
    Sentence,
    Corpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BleuConfig {
    pub max_order: usize,
    pub smoothing: Smoothing,
    pub level: BleuLevel,
    /// Drop orders the hypothesis is too short to contain from the geometric
    /// mean. On by default at sentence level.
    pub effective_order: bool,
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig::sentence()
    }
}

impl BleuConfig {
    pub fn sentence() -> Self {
        BleuConfig {
            max_order: 4,
            smoothing: Smoothing::Exp,
            level: BleuLevel::Sentence,
            effective_order: true,
        }
    }

    pub fn corpus() -> Self {
        BleuConfig {
            max_order: 4,
            smoothing: Smoothing::Exp,
            level: BleuLevel::Corpus,
            effective_order: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_order < 1 {
            return Err(Error::invalid("BLEU max_order must be at least 1"));
        }
        if let Smoothing::Floor(v) = self.smoothing {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(
                    "BLEU floor smoothing value must be positive",
                ));
            }
        }
        Ok(())
    }
}

/// Sufficient statistics of one segment (or a sum over segments).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BleuStats {
    pub hyp_len: usize,
    pub ref_len: usize,
    pub correct: Vec<u64>,
    pub total: Vec<u64>,
}

impl BleuStats {
    fn zeros(max_order: usize) -> Self {
        BleuStats {
            hyp_len: 0,
            ref_len: 0,
            correct: vec![0; max_order],
            total: vec![0; max_order],
        }
    }

    fn add(&mut self, other: &BleuStats) {
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
        for (a, b) in self.correct.iter_mut().zip(&other.correct) {
            *a += b;
        }
        for (a, b) in self.total.iter_mut().zip(&other.total) {
            *a += b;
        }
    }

    pub fn score(&self, cfg: &BleuConfig) -> f64 {
        let max_order = self.correct.len();
        if self.correct.iter().all(|&c| c == 0) {
            return 0.0;
        }
        let bp = if self.hyp_len < self.ref_len {
            if self.hyp_len > 0 {
                (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
            } else {
                0.0
            }
        } else {
            1.0
        };
        let mut precisions = vec![0.0f64; max_order];
        let mut smooth = 1.0f64;
        let mut eff_order = max_order;
        for n in 0..max_order {
            let total = self.total[n];
            if total == 0 {
                break;
            }
            if cfg.effective_order {
                eff_order = n + 1;
            }
            let correct = self.correct[n];
            precisions[n] = if correct == 0 {
                match cfg.smoothing {
                    Smoothing::Exp => {
                        smooth *= 2.0;
                        100.0 / (smooth * total as f64)
                    }
                    Smoothing::Floor(v) => 100.0 * v / total as f64,
                    Smoothing::None => 0.0,
                }
            } else {
                100.0 * correct as f64 / total as f64
            };
        }
        let log_sum: f64 = precisions[..eff_order]
            .iter()
            .map(|&p| if p == 0.0 { LOG_ZERO } else { p.ln() })
            .sum();
        bp * (log_sum / eff_order as f64).exp()
    }
}

/// N-gram counts of one token sequence, up to a maximum order.
#[derive(Debug, Clone)]
pub struct NgramProfile<T: Hash + Eq> {
    len: usize,
    counts: Vec<HashMap<Vec<T>, u32>>,
}

impl<T: Hash + Eq + Clone> NgramProfile<T> {
    pub fn new(tokens: &[T], max_order: usize) -> Self {
        let mut counts = vec![HashMap::new(); max_order];
        for (n, map) in counts.iter_mut().enumerate() {
            for gram in tokens.windows(n + 1) {
                *map.entry(gram.to_vec()).or_insert(0) += 1;
            }
        }
        NgramProfile {
            len: tokens.len(),
            counts,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn max_order(&self) -> usize {
        self.counts.len()
    }

    /// Clipped match statistics of `self` as hypothesis against one reference.
    pub fn stats_against(&self, reference: &NgramProfile<T>) -> BleuStats {
        let mut stats = BleuStats::zeros(self.max_order());
        stats.hyp_len = self.len;
        stats.ref_len = reference.len;
        for n in 0..self.max_order() {
            for (gram, &count) in &self.counts[n] {
                stats.total[n] += count as u64;
                if let Some(&rc) = reference.counts[n].get(gram) {
                    stats.correct[n] += count.min(rc) as u64;
                }
            }
        }
        stats
    }

    fn stats_against_many(&self, refs: &[NgramProfile<T>]) -> BleuStats {
        if let [single] = refs {
            return self.stats_against(single);
        }
        let mut stats = BleuStats::zeros(self.max_order());
        stats.hyp_len = self.len;
        stats.ref_len = closest_ref_len(self.len, refs.iter().map(|r| r.len));
        for n in 0..self.max_order() {
            for (gram, &count) in &self.counts[n] {
                stats.total[n] += count as u64;
                let clip = refs
                    .iter()
                    .filter_map(|r| r.counts[n].get(gram).copied())
                    .max()
                    .unwrap_or(0);
                stats.correct[n] += count.min(clip) as u64;
            }
        }
        stats
    }
}

/// Closest reference length, shorter on ties.
fn closest_ref_len(hyp_len: usize, ref_lens: impl Iterator<Item = usize>) -> usize {
    let mut best: Option<(usize, usize)> = None;
    for len in ref_lens {
        let diff = hyp_len.abs_diff(len);
        best = match best {
            None => Some((diff, len)),
            Some((d, l)) if diff < d || (diff == d && len < l) => Some((diff, len)),
            keep => keep,
        };
    }
    best.map_or(0, |(_, l)| l)
}

pub fn segment_stats<T: Hash + Eq + Clone>(
    hyp: &[T],
    refs: &[Vec<T>],
    max_order: usize,
) -> BleuStats {
    let hyp = NgramProfile::new(hyp, max_order);
    let refs: Vec<_> = refs
        .iter()
        .map(|r| NgramProfile::new(r, max_order))
        .collect();
    hyp.stats_against_many(&refs)
}

/// Sentence-level BLEU in [0, 100] of one hypothesis against its references.
pub fn sentence_bleu<T: Hash + Eq + Clone>(
    hyp: &[T],
    refs: &[Vec<T>],
    cfg: &BleuConfig,
) -> Result<f64> {
    cfg.validate()?;
    if refs.is_empty() {
        return Err(Error::invalid("BLEU needs at least one reference"));
    }
    Ok(segment_stats(hyp, refs, cfg.max_order).score(cfg))
}

/// Corpus-level BLEU: statistics are summed over segments before scoring.
/// `refs[i]` holds the references of segment `i`.
pub fn corpus_bleu<T: Hash + Eq + Clone>(
    hyps: &[Vec<T>],
    refs: &[Vec<Vec<T>>],
    cfg: &BleuConfig,
) -> Result<f64> {
    cfg.validate()?;
    if hyps.len() != refs.len() {
        return Err(Error::invalid(format!(
            "corpus BLEU: {} hypotheses but {} reference entries",
            hyps.len(),
            refs.len()
        )));
    }
    let mut total = BleuStats::zeros(cfg.max_order);
    for (i, (h, r)) in hyps.iter().zip(refs).enumerate() {
        if r.is_empty() {
            return Err(Error::invalid(format!(
                "corpus BLEU: segment {i} has no reference"
            )));
        }
        total.add(&segment_stats(h, r, cfg.max_order));
    }
    Ok(total.score(cfg))
}

/// Whitespace-split convenience form of [`sentence_bleu`].
pub fn sentence_bleu_str(hyp: &str, refs: &[&str], cfg: &BleuConfig) -> Result<f64> {
    fn split(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }
    let refs: Vec<Vec<&str>> = refs.iter().map(|r| split(r)).collect();
    sentence_bleu(&split(hyp), &refs, cfg)
}
