//! Exact MBR over an enumerable model, and the regret of sample-based MBR
//! against it as the sample count grows.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sample_sequence, SamplerConfig, SyntheticModel};
use crate::error::{Error, Result};
use crate::mbr::{argmax, build_matrix, Utility, UtilityMatrix};
use crate::metrics::{mean_and_standard_error, median};

/// Largest support enumerated exhaustively.
pub const MAX_SUPPORT: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct MbrOptimum {
    pub index: usize,
    pub text: String,
    pub expected_utility: f64,
    /// `E_{y'~P}[u(y, y')]` for every support string, in support order.
    pub expected: Vec<f64>,
}

fn support_matrix(model: &SyntheticModel, utility: &Utility) -> Result<UtilityMatrix> {
    let n = model.support().len();
    if n > MAX_SUPPORT {
        return Err(Error::invalid(format!(
            "support of {n} strings exceeds the enumeration cap of {MAX_SUPPORT}"
        )));
    }
    let texts: Vec<&str> = model.support().iter().map(|(s, _)| s.as_str()).collect();
    let prepared = utility.prepare("", &texts, None)?;
    build_matrix(&prepared, &utility.spec().id())
}

fn optimum_from_matrix(model: &SyntheticModel, m: &UtilityMatrix) -> MbrOptimum {
    let probs: Vec<f64> = model.support().iter().map(|(_, p)| *p).collect();
    let expected: Vec<f64> = (0..m.n())
        .map(|i| {
            m.row(i)
                .iter()
                .zip(&probs)
                .fold(0.0, |acc, (u, p)| acc + p * u)
        })
        .collect();
    let index = argmax(&expected);
    MbrOptimum {
        index,
        text: model.support()[index].0.clone(),
        expected_utility: expected[index],
        expected,
    }
}

/// Maximizer of `sum_{y'} P(y') u(y, y')` over the support, by enumeration.
pub fn exact_mbr_optimum(model: &SyntheticModel, utility: &Utility) -> Result<MbrOptimum> {
    Ok(optimum_from_matrix(model, &support_matrix(model, utility)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimulationSampler {
    /// Draw samples; seed `s` uses `config.seed + s`.
    Sample { config: SamplerConfig },
    /// No randomness: the `N` most probable strings, weighted by probability.
    Enumerate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretRow {
    pub n: usize,
    pub median: f64,
    pub mean: f64,
    pub standard_error: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretTable {
    pub optimum_text: String,
    pub optimum_utility: f64,
    pub seeds: usize,
    pub rows: Vec<RegretRow>,
    /// Adjacent grid points where the median regret went up.
    pub inversions: usize,
}

impl RegretTable {
    /// At most one inversion, and the largest `N` beats the smallest.
    pub fn converges(&self) -> bool {
        let first = self.rows.first().map(|r| r.median);
        let last = self.rows.last().map(|r| r.median);
        self.inversions <= 1
            && matches!((first, last), (Some(a), Some(b)) if b < a || (a == 0.0 && b == 0.0))
    }

    pub fn row(&self, n: usize) -> Option<&RegretRow> {
        self.rows.iter().find(|r| r.n == n)
    }
}

/// Sample-based MBR choice over support indices `picks` (with repeats).
/// Returns the support index chosen.
fn mbr_over_samples(m: &UtilityMatrix, picks: &[usize]) -> usize {
    let mut distinct: Vec<usize> = Vec::new();
    let mut weight: HashMap<usize, f64> = HashMap::new();
    for &p in picks {
        let w = weight.entry(p).or_insert(0.0);
        if *w == 0.0 {
            distinct.push(p);
        }
        *w += 1.0;
    }
    let weights: Vec<f64> = distinct.iter().map(|d| weight[d]).collect();
    let objectives: Vec<f64> = distinct
        .iter()
        .map(|&c| {
            distinct
                .iter()
                .zip(&weights)
                .fold(0.0, |acc, (&d, w)| acc + w * m.get(c, d))
        })
        .collect();
    distinct[argmax(&objectives)]
}

fn summarize(n: usize, regrets: &[f64]) -> RegretRow {
    let (mean, standard_error) = mean_and_standard_error(regrets).unwrap_or((0.0, 0.0));
    RegretRow {
        n,
        median: median(regrets).unwrap_or(0.0),
        mean,
        standard_error,
        max: regrets.iter().copied().fold(0.0, f64::max),
    }
}

/// Regret of sample-based MBR with `N` candidates, for each `N` in `grid`.
/// Sampled runs draw `max(grid)` sequences per seed and evaluate prefixes.
pub fn simulate_regret(
    model: &SyntheticModel,
    utility: &Utility,
    grid: &[usize],
    seeds: usize,
    sampler: &SimulationSampler,
) -> Result<RegretTable> {
    if grid.is_empty() || grid.contains(&0) {
        return Err(Error::invalid("N grid must be non-empty and positive"));
    }
    let m = support_matrix(model, utility)?;
    let opt = optimum_from_matrix(model, &m);
    let regret = |choice: usize| opt.expected_utility - opt.expected[choice];

    let (rows, seeds): (Vec<RegretRow>, usize) = match sampler {
        SimulationSampler::Enumerate => {
            let mut by_prob: Vec<usize> = (0..m.n()).collect();
            by_prob.sort_by(|&a, &b| {
                model.support()[b]
                    .1
                    .total_cmp(&model.support()[a].1)
                    .then(a.cmp(&b))
            });
            let rows = grid
                .iter()
                .map(|&n| {
                    let mut chosen: Vec<usize> = by_prob[..n.min(m.n())].to_vec();
                    chosen.sort_unstable();
                    let objectives: Vec<f64> = chosen
                        .iter()
                        .map(|&c| {
                            chosen
                                .iter()
                                .fold(0.0, |acc, &d| acc + model.support()[d].1 * m.get(c, d))
                        })
                        .collect();
                    summarize(n, &[regret(chosen[argmax(&objectives)])])
                })
                .collect();
            (rows, 1)
        }
        SimulationSampler::Sample { config } => {
            if seeds == 0 {
                return Err(Error::invalid("simulation needs at least one seed"));
            }
            config.validate()?;
            let index: HashMap<&str, usize> = model
                .support()
                .iter()
                .enumerate()
                .map(|(i, (s, _))| (s.as_str(), i))
                .collect();
            let max_n = *grid.iter().max().expect("non-empty grid");
            let per_seed: Vec<Vec<f64>> = (0..seeds as u64)
                .into_par_iter()
                .map(|s| {
                    let cfg = SamplerConfig {
                        seed: config.seed.wrapping_add(s),
                        ..config.clone()
                    };
                    let picks = (0..max_n as u64)
                        .map(|d| {
                            sample_sequence(model, &cfg, d).map(|seq| index[seq.text.as_str()])
                        })
                        .collect::<Result<Vec<usize>>>()?;
                    Ok(grid
                        .iter()
                        .map(|&n| regret(mbr_over_samples(&m, &picks[..n])))
                        .collect())
                })
                .collect::<Result<_>>()?;
            let rows = grid
                .iter()
                .enumerate()
                .map(|(k, &n)| summarize(n, &per_seed.iter().map(|r| r[k]).collect::<Vec<_>>()))
                .collect();
            (rows, seeds)
        }
    };
    let inversions = rows
        .windows(2)
        .filter(|w| w[1].median > w[0].median)
        .count();
    Ok(RegretTable {
        optimum_text: opt.text,
        optimum_utility: opt.expected_utility,
        seeds,
        rows,
        inversions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mbr::Tokenization;
    use crate::textnorm::NormalizerSpec;

    fn bleu() -> Utility {
        Utility::bleu(NormalizerSpec::basic(), Tokenization::Word).unwrap()
    }

    fn model(pairs: &[(&str, f64)]) -> SyntheticModel {
        SyntheticModel::from_pairs(pairs.iter().map(|(s, p)| (s.to_string(), *p)).collect())
            .unwrap()
    }

    #[test]
    fn single_string() {
        let opt = exact_mbr_optimum(&model(&[("a b c d", 1.0)]), &bleu()).unwrap();
        assert_eq!(opt.text, "a b c d");
        assert!((opt.expected_utility - 100.0).abs() < 1e-9);
    }

    #[test]
    fn disjoint_pair_prefers_likely_string() {
        let opt =
            exact_mbr_optimum(&model(&[("a b c d", 0.9), ("w x y z", 0.1)]), &bleu()).unwrap();
        assert_eq!(opt.index, 0);
        assert!((opt.expected[0] - 90.0).abs() < 1e-9);
        assert!((opt.expected[1] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn enumerate_full_support_has_zero_regret() {
        let m = model(&[
            ("a b c d", 0.3),
            ("a b c e", 0.3),
            ("a b f g", 0.25),
            ("h i", 0.15),
        ]);
        let t = simulate_regret(&m, &bleu(), &[1, 2, 4], 1, &SimulationSampler::Enumerate).unwrap();
        assert_eq!(t.row(4).unwrap().median, 0.0);
        assert!(t.rows.iter().all(|r| r.median >= 0.0));
    }

    #[test]
    fn support_cap() {
        let pairs: Vec<(String, f64)> = (0..MAX_SUPPORT + 1)
            .map(|k| (format!("w{k}"), 1.0 / (MAX_SUPPORT + 1) as f64))
            .collect();
        let m = SyntheticModel::from_pairs(pairs).unwrap();
        assert!(exact_mbr_optimum(&m, &bleu()).is_err());
    }
}
