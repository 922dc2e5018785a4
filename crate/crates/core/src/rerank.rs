//! Selection baselines that do not marginalize over the hypothesis set: the
//! model-score (MAP) choice, weighted fusion of two external scores, and the
//! reference-aware oracle.

use serde::{Deserialize, Serialize};

use crate::data::{DecodeResult, HypothesisSet, Method};
use crate::error::{Error, Result};
use crate::mbr::argmax;
use crate::metrics::edit_distance;
use crate::textnorm::{tokenize, Normalizer, TokenUnit};

/// Argmax of `log_prob` (or `log_prob / token_count`), lowest index on ties.
pub fn map_select(set: &HypothesisSet, length_normalize: bool) -> Result<DecodeResult> {
    let scores = set
        .hypotheses
        .iter()
        .enumerate()
        .map(|(index, h)| {
            let lp = h.log_prob.ok_or_else(|| Error::Hypothesis {
                index,
                message: "missing log_prob".into(),
            })?;
            if !length_normalize {
                return Ok(lp);
            }
            match h.token_count {
                Some(c) if c > 0 => Ok(lp / c as f64),
                Some(_) => Err(Error::Hypothesis {
                    index,
                    message: "token_count is zero".into(),
                }),
                None => Err(Error::Hypothesis {
                    index,
                    message: "missing token_count".into(),
                }),
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let i = argmax(&scores);
    Ok(DecodeResult::new(
        set,
        Method::Map,
        i,
        scores[i],
        Some(scores),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// `(1 - alpha) * asr + alpha * llm`
    #[default]
    Convex,
    /// `asr + alpha * llm`
    RawSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightedScoreSpec {
    pub alpha: f64,
    pub llm_key: String,
    pub asr_key: String,
    /// Divide the LLM score by `token_count`.
    pub llm_length_normalize: bool,
    /// Divide the ASR score by `token_count`.
    pub asr_length_normalize: bool,
    pub fusion: Fusion,
}

impl Default for WeightedScoreSpec {
    fn default() -> Self {
        WeightedScoreSpec {
            alpha: 0.05,
            llm_key: "llm_score".into(),
            asr_key: "asr_score".into(),
            llm_length_normalize: false,
            asr_length_normalize: false,
            fusion: Fusion::Convex,
        }
    }
}

impl WeightedScoreSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!(
                "alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.llm_key.is_empty() || self.asr_key.is_empty() {
            return Err(Error::invalid("score keys must be non-empty"));
        }
        Ok(())
    }
}

fn score(set: &HypothesisSet, index: usize, key: &str, length_normalize: bool) -> Result<f64> {
    let h = &set.hypotheses[index];
    let v = *h
        .external_scores
        .get(key)
        .ok_or_else(|| Error::Hypothesis {
            index,
            message: format!("missing external score {key:?}"),
        })?;
    if !length_normalize {
        return Ok(v);
    }
    match h.token_count {
        Some(c) if c > 0 => Ok(v / c as f64),
        _ => Err(Error::Hypothesis {
            index,
            message: format!("length normalization of {key:?} needs a positive token_count"),
        }),
    }
}

pub fn weighted_select(set: &HypothesisSet, spec: &WeightedScoreSpec) -> Result<DecodeResult> {
    spec.validate()?;
    let scores = (0..set.len())
        .map(|i| {
            let asr = score(set, i, &spec.asr_key, spec.asr_length_normalize)?;
            let llm = score(set, i, &spec.llm_key, spec.llm_length_normalize)?;
            Ok(match spec.fusion {
                Fusion::Convex => (1.0 - spec.alpha) * asr + spec.alpha * llm,
                Fusion::RawSum => asr + spec.alpha * llm,
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let i = argmax(&scores);
    Ok(DecodeResult::new(
        set,
        Method::Weighted,
        i,
        scores[i],
        Some(scores),
    ))
}

/// Per-hypothesis error rate against the reference; the lowest wins.
pub fn oracle_select(
    set: &HypothesisSet,
    reference: &str,
    normalizer: &Normalizer,
    unit: TokenUnit,
) -> Result<DecodeResult> {
    let ref_tokens = tokenize(&normalizer.normalize(reference), unit);
    if ref_tokens.is_empty() {
        return Err(Error::Undefined(format!(
            "utterance {:?}: reference is empty after normalization",
            set.utterance_id
        )));
    }
    let rates: Vec<f64> = set
        .hypotheses
        .iter()
        .map(|h| {
            let toks = tokenize(&normalizer.normalize(&h.text), unit);
            edit_distance(&toks, &ref_tokens).distance as f64 / ref_tokens.len() as f64
        })
        .collect();
    let negated: Vec<f64> = rates.iter().map(|r| -r).collect();
    let i = argmax(&negated);
    Ok(DecodeResult::new(
        set,
        Method::Oracle,
        i,
        rates[i],
        Some(rates),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Hypothesis;
    use crate::textnorm::NormalizerSpec;

    fn with_lp(lps: &[f64]) -> HypothesisSet {
        let hyps = lps
            .iter()
            .enumerate()
            .map(|(k, &lp)| Hypothesis::new(format!("h{k}")).with_log_prob(lp))
            .collect();
        HypothesisSet::new("u", hyps).unwrap()
    }

    #[test]
    fn map_examples() {
        assert_eq!(
            map_select(&with_lp(&[-5.0, -2.0, -9.0]), false)
                .unwrap()
                .chosen_index,
            1
        );
        assert_eq!(
            map_select(&with_lp(&[-3.0, -3.0]), false)
                .unwrap()
                .chosen_index,
            0
        );
        let mut s = with_lp(&[-10.0, -8.0]);
        s.hypotheses[0].token_count = Some(2);
        s.hypotheses[1].token_count = Some(10);
        assert_eq!(map_select(&s, true).unwrap().chosen_index, 1);
        assert_eq!(map_select(&s, false).unwrap().chosen_index, 1);
    }

    #[test]
    fn map_missing_log_prob_names_index() {
        let mut s = with_lp(&[-1.0, -2.0]);
        s.hypotheses[1].log_prob = None;
        assert!(matches!(
            map_select(&s, false),
            Err(Error::Hypothesis { index: 1, .. })
        ));
    }

    fn scored(asr: &[f64], llm: &[f64]) -> HypothesisSet {
        let hyps = asr
            .iter()
            .zip(llm)
            .enumerate()
            .map(|(k, (&a, &l))| {
                Hypothesis::new(format!("h{k}"))
                    .with_score("asr_score", a)
                    .with_score("llm_score", l)
            })
            .collect();
        HypothesisSet::new("u", hyps).unwrap()
    }

    #[test]
    fn weighted_example() {
        let s = scored(&[-2.0, -1.0], &[0.0, -100.0]);
        let r = weighted_select(&s, &WeightedScoreSpec::default()).unwrap();
        assert_eq!(r.chosen_index, 0);
        let per = r.per_candidate_objective.unwrap();
        assert!((per[0] + 1.9).abs() < 1e-12);
        assert!((per[1] + 5.95).abs() < 1e-12);
    }

    #[test]
    fn weighted_boundaries() {
        let s = scored(&[-2.0, -1.0, -3.0], &[-1.0, -9.0, 0.0]);
        let at = |alpha| {
            weighted_select(
                &s,
                &WeightedScoreSpec {
                    alpha,
                    ..Default::default()
                },
            )
            .unwrap()
            .chosen_index
        };
        assert_eq!(at(0.0), 1);
        assert_eq!(at(1.0), 2);
        let raw = WeightedScoreSpec {
            alpha: 0.5,
            fusion: Fusion::RawSum,
            ..Default::default()
        };
        // raw: [-2.5, -5.5, -3.0]
        assert_eq!(weighted_select(&s, &raw).unwrap().chosen_index, 0);
    }

    #[test]
    fn weighted_missing_key() {
        let s = HypothesisSet::from_texts("u", &["a"]).unwrap();
        assert!(matches!(
            weighted_select(&s, &WeightedScoreSpec::default()),
            Err(Error::Hypothesis { index: 0, .. })
        ));
    }

    #[test]
    fn oracle_examples() {
        let n = Normalizer::from_spec(&NormalizerSpec::basic()).unwrap();
        let s = HypothesisSet::from_texts("u", &["a b", "a b c", "x"]).unwrap();
        let r = oracle_select(&s, "A b, c.", &n, TokenUnit::Word).unwrap();
        assert_eq!(r.chosen_index, 1);
        assert_eq!(r.objective, 0.0);
        assert!(matches!(
            oracle_select(&s, " ?! ", &n, TokenUnit::Word),
            Err(Error::Undefined(_))
        ));
    }
}
