//! Sampling and search over an abstract next-token model.
//!
//! Every sample owns a counter-based random stream keyed by
//! `(seed, draw_index)`, so sample `i` is the same whether it is drawn alone,
//! as part of a batch, or on any worker.

mod beam;
mod simulate;
mod synthetic;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Hypothesis, HypothesisSet};
use crate::error::{Error, Result};

pub use beam::beam_search;
pub use simulate::{
    exact_mbr_optimum, simulate_regret, MbrOptimum, RegretRow, RegretTable, SimulationSampler,
    MAX_SUPPORT,
};
pub use synthetic::{SyntheticModel, EOS};

/// Name of the external score holding the log-probability under the
/// transformed (sampling) distribution.
pub const SAMPLER_LOG_PROB: &str = "sampler_log_prob";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMethod {
    Ancestral,
    Temperature,
    #[default]
    Epsilon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub method: SamplerMethod,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_num_samples")]
    pub num_samples: usize,
}

fn default_temperature() -> f64 {
    1.0
}

fn default_epsilon() -> f64 {
    0.01
}

fn default_num_samples() -> usize {
    64
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            method: SamplerMethod::Epsilon,
            temperature: default_temperature(),
            epsilon: default_epsilon(),
            seed: 0,
            num_samples: default_num_samples(),
        }
    }
}

impl SamplerConfig {
    pub fn ancestral(seed: u64, num_samples: usize) -> Self {
        SamplerConfig {
            method: SamplerMethod::Ancestral,
            temperature: 1.0,
            epsilon: 0.0,
            seed,
            num_samples,
        }
    }

    pub fn epsilon(epsilon: f64, temperature: f64, seed: u64, num_samples: usize) -> Self {
        SamplerConfig {
            method: SamplerMethod::Epsilon,
            temperature,
            epsilon,
            seed,
            num_samples,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::invalid(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::invalid(format!(
                "epsilon must be in [0, 1), got {}",
                self.epsilon
            )));
        }
        if self.num_samples == 0 {
            return Err(Error::invalid("num_samples must be positive"));
        }
        Ok(())
    }

    /// Temperature actually applied; ancestral sampling ignores the field.
    pub fn effective_temperature(&self) -> f64 {
        match self.method {
            SamplerMethod::Ancestral => 1.0,
            _ => self.temperature,
        }
    }

    /// Truncation threshold actually applied; only epsilon sampling truncates.
    pub fn effective_epsilon(&self) -> f64 {
        match self.method {
            SamplerMethod::Epsilon => self.epsilon,
            _ => 0.0,
        }
    }
}

/// A finite-vocabulary autoregressive model. The empty prefix plays the role
/// of the begin marker; token [`EOS`] ends a sequence.
pub trait NextTokenModel: Sync {
    fn vocab_size(&self) -> usize;

    fn token(&self, id: usize) -> &str;

    fn max_len(&self) -> usize;

    /// Distribution over the vocabulary given a prefix (which never
    /// contains `EOS`).
    fn conditional(&self, prefix: &[usize]) -> Result<Vec<f64>>;
}

fn check_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::invalid("empty distribution"));
    }
    if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::invalid(
            "distribution has negative or non-finite entries",
        ));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("distribution sums to {sum}")));
    }
    Ok(())
}

/// Tempers `p` (p_i^(1/T), renormalized), then zeroes entries below
/// `epsilon` and renormalizes. If every entry falls below `epsilon`, the
/// largest one (lowest index on ties) is kept alone.
pub fn transform_distribution(p: &[f64], temperature: f64, epsilon: f64) -> Result<Vec<f64>> {
    check_distribution(p)?;
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::invalid(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::invalid(format!(
            "epsilon must be in [0, 1), got {epsilon}"
        )));
    }
    let mut q = p.to_vec();
    let mut changed = false;
    if temperature != 1.0 {
        let max_log = p
            .iter()
            .filter(|&&x| x > 0.0)
            .map(|x| x.ln())
            .fold(f64::NEG_INFINITY, f64::max);
        for x in q.iter_mut() {
            if *x > 0.0 {
                *x = ((x.ln() - max_log) / temperature).exp();
            }
        }
        changed = true;
        normalize_in_place(&mut q);
    }
    if epsilon > 0.0 && q.iter().any(|&x| x > 0.0 && x < epsilon) {
        let best = crate::mbr::argmax(&q);
        for x in q.iter_mut() {
            if *x < epsilon {
                *x = 0.0;
            }
        }
        if q.iter().all(|&x| x == 0.0) {
            q[best] = 1.0;
        }
        changed = true;
    }
    if changed {
        normalize_in_place(&mut q);
    }
    Ok(q)
}

fn normalize_in_place(q: &mut [f64]) {
    let sum: f64 = q.iter().sum();
    for x in q.iter_mut() {
        *x /= sum;
    }
}

/// Random stream for one draw.
pub fn draw_rng(seed: u64, draw_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw_index);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledSequence {
    pub tokens: Vec<usize>,
    pub text: String,
    /// Log-probability under the base model.
    pub log_prob: f64,
    /// Log-probability under the transformed distribution that was sampled.
    pub sampler_log_prob: f64,
}

impl SampledSequence {
    /// Base log-probability in `log_prob`, the sampling one under
    /// [`SAMPLER_LOG_PROB`].
    pub fn into_hypothesis(self) -> Hypothesis {
        Hypothesis::new(self.text)
            .with_log_prob(self.log_prob)
            .with_token_count(self.tokens.len() as u64)
            .with_score(SAMPLER_LOG_PROB, self.sampler_log_prob)
    }
}

pub fn join_tokens<M: NextTokenModel + ?Sized>(model: &M, tokens: &[usize]) -> String {
    tokens
        .iter()
        .map(|&t| model.token(t))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn sample_sequence<M: NextTokenModel + ?Sized>(
    model: &M,
    cfg: &SamplerConfig,
    draw_index: u64,
) -> Result<SampledSequence> {
    cfg.validate()?;
    let (temperature, epsilon) = (cfg.effective_temperature(), cfg.effective_epsilon());
    let mut rng = draw_rng(cfg.seed, draw_index);
    let mut tokens = Vec::new();
    let (mut log_prob, mut sampler_log_prob) = (0.0, 0.0);
    loop {
        let p = model.conditional(&tokens)?;
        if p.len() != model.vocab_size() {
            return Err(Error::invalid(format!(
                "model returned {} probabilities for a vocabulary of {}",
                p.len(),
                model.vocab_size()
            )));
        }
        let q = transform_distribution(&p, temperature, epsilon)?;
        let tok = pick(&q, rng.gen::<f64>());
        log_prob += p[tok].ln();
        sampler_log_prob += q[tok].ln();
        if tok == EOS {
            break;
        }
        if tokens.len() >= model.max_len() {
            return Err(Error::invalid("model did not end the sequence at max_len"));
        }
        tokens.push(tok);
    }
    Ok(SampledSequence {
        text: join_tokens(model, &tokens),
        tokens,
        log_prob,
        sampler_log_prob,
    })
}

/// Inverse-CDF draw; never returns a zero-probability entry.
fn pick(q: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &x) in q.iter().enumerate() {
        if x <= 0.0 {
            continue;
        }
        acc += x;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Draws `cfg.num_samples` sequences in parallel, kept in draw order.
pub fn sample_set<M: NextTokenModel + ?Sized>(
    model: &M,
    cfg: &SamplerConfig,
    utterance_id: &str,
) -> Result<HypothesisSet> {
    cfg.validate()?;
    let hyps = (0..cfg.num_samples as u64)
        .into_par_iter()
        .map(|i| sample_sequence(model, cfg, i).map(SampledSequence::into_hypothesis))
        .collect::<Result<Vec<_>>>()?;
    let mut set = HypothesisSet::new(utterance_id, hyps)?;
    set.sampler = Some(cfg.clone());
    Ok(set)
}
