//! Sample-based minimum Bayes risk selection.
//!
//! Every candidate is scored by its mean utility against all candidates of
//! the set (itself included), weighted by multiplicity:
//!
//! ```text
//! objective_i = (1/N) * sum_j weight_j * u(candidate_i, candidate_j)
//! ```
//!
//! and the argmax wins, ties going to the lowest index. The candidate pool is
//! also the pseudo-reference pool.

mod prune;
mod utility;

use rayon::prelude::*;

use crate::data::{dedup_weight, DecodeResult, HypothesisSet, Method, WeightedHypothesisSet};
use crate::error::{Error, Result};

pub use prune::{mbr_decode_pruned, mbr_select_pruned, PruneRound, PruneSchedule, PrunedSelection};
pub use utility::{
    CountingUtility, ExternalUtilities, PairwiseUtility, PreparedUtility, Tokenization, Utility,
    UtilityKind, UtilitySpec,
};

/// Dense `n x n` utilities, `values[i * n + j] = u(candidate_i, pseudo_reference_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityMatrix {
    n: usize,
    values: Vec<f64>,
    spec_id: String,
}

impl UtilityMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>, spec_id: impl Into<String>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("utility matrix must be square"));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Utility {
                candidate: k / n,
                reference: k % n,
                message: "non-finite utility".into(),
            });
        }
        Ok(UtilityMatrix {
            n,
            values,
            spec_id: spec_id.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, candidate: usize, reference: usize) -> f64 {
        self.values[candidate * self.n + reference]
    }

    pub fn row(&self, candidate: usize) -> &[f64] {
        &self.values[candidate * self.n..(candidate + 1) * self.n]
    }

    pub fn spec_id(&self) -> &str {
        &self.spec_id
    }
}

impl PairwiseUtility for UtilityMatrix {
    fn len(&self) -> usize {
        self.n
    }

    fn utility(&self, candidate: usize, reference: usize) -> Result<f64> {
        Ok(self.get(candidate, reference))
    }
}

/// Evaluates every pair of `utility`. Rows are filled in parallel on the
/// current rayon pool; each entry is computed independently, so the result
/// does not depend on the number of workers.
pub fn build_matrix<U: PairwiseUtility>(utility: &U, spec_id: &str) -> Result<UtilityMatrix> {
    let n = utility.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| utility.utility(i, j))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    UtilityMatrix::from_rows(rows, spec_id)
}

/// Pairwise utilities over the distinct items of `set`.
pub fn utility_matrix(set: &WeightedHypothesisSet, utility: &Utility) -> Result<UtilityMatrix> {
    if set.is_empty() {
        return Err(Error::invalid("utility matrix of an empty set"));
    }
    let texts = set.texts();
    let indices: Vec<usize> = set.items.iter().map(|it| it.first_index).collect();
    let prepared = utility.prepare(&set.utterance_id, &texts, Some(&indices))?;
    build_matrix(&prepared, &utility.spec().id())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MbrSelection {
    pub index: usize,
    pub objective: f64,
    /// Objective of every candidate, in candidate order.
    pub objectives: Vec<f64>,
}

/// `(1/N) * sum_j weights[j] * row[j]`, reduced in index order.
pub(crate) fn weighted_objective(
    row: impl Iterator<Item = f64>,
    weights: &[f64],
    total: f64,
) -> f64 {
    let mut acc = 0.0;
    for (v, w) in row.zip(weights) {
        acc += w * v;
    }
    acc / total
}

/// Index of the maximum, lowest index on ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn check_weights(n: usize, weights: &[u32]) -> Result<(Vec<f64>, f64)> {
    if weights.len() != n {
        return Err(Error::invalid(format!(
            "{} weights for {n} candidates",
            weights.len()
        )));
    }
    if n == 0 {
        return Err(Error::invalid("MBR selection over zero candidates"));
    }
    if weights.contains(&0) {
        return Err(Error::invalid("MBR weights must be positive"));
    }
    let total: u64 = weights.iter().map(|&w| w as u64).sum();
    Ok((weights.iter().map(|&w| w as f64).collect(), total as f64))
}

pub fn mbr_select(matrix: &UtilityMatrix, weights: &[u32]) -> Result<MbrSelection> {
    let (w, total) = check_weights(matrix.n(), weights)?;
    let objectives: Vec<f64> = (0..matrix.n())
        .map(|i| weighted_objective(matrix.row(i).iter().copied(), &w, total))
        .collect();
    let index = argmax(&objectives);
    Ok(MbrSelection {
        index,
        objective: objectives[index],
        objectives,
    })
}

/// Full MBR decode of one hypothesis set: deduplicate, build the matrix,
/// select, and map the winner back to its first occurrence. The per-candidate
/// objective is reported for every original hypothesis.
pub fn mbr_decode(set: &HypothesisSet, utility: &Utility) -> Result<(DecodeResult, usize)> {
    let weighted = dedup_weight(set);
    let matrix = utility_matrix(&weighted, utility)?;
    let sel = mbr_select(&matrix, &weighted.weights())?;
    let per_candidate = expand_objectives(set, &weighted, &sel.objectives);
    let chosen = weighted.items[sel.index].first_index;
    let evaluations = matrix.n() * matrix.n();
    Ok((
        DecodeResult::new(set, Method::Mbr, chosen, sel.objective, Some(per_candidate)),
        evaluations,
    ))
}

/// Maps per-item objectives back onto every hypothesis of the original set.
pub fn expand_objectives(
    set: &HypothesisSet,
    weighted: &WeightedHypothesisSet,
    objectives: &[f64],
) -> Vec<f64> {
    let by_text: std::collections::HashMap<&str, f64> = weighted
        .items
        .iter()
        .zip(objectives)
        .map(|(it, &o)| (it.hypothesis.text.as_str(), o))
        .collect();
    set.hypotheses
        .iter()
        .map(|h| by_text[h.text.as_str()])
        .collect()
}
