use std::collections::HashMap;
use std::path::PathBuf;

use log::{info, warn};
use rayon::prelude::*;

use super::{load_indexed_sets, with_workers, write_output, MethodConfig, Resources, RunConfig};
use crate::audio::fnv1a;
use crate::data::{
    load_manifest, write_decode_results, DecodeResult, HypothesisSet, Method, Utterance,
};
use crate::error::{Error, Result};
use crate::mbr::{mbr_decode, mbr_decode_pruned, PruneSchedule, Utility};
use crate::rerank::{map_select, oracle_select, weighted_select, WeightedScoreSpec};
use crate::textnorm::{Normalizer, TokenUnit};

enum Planned {
    Map {
        n: Option<usize>,
        length_normalize: bool,
    },
    Beam {
        sets: HashMap<String, HypothesisSet>,
    },
    Mbr {
        n: Option<usize>,
        utility: Utility,
    },
    Pruned {
        n: Option<usize>,
        utility: Utility,
        schedule: PruneSchedule,
    },
    Weighted {
        n: Option<usize>,
        spec: WeightedScoreSpec,
    },
    Oracle {
        n: Option<usize>,
    },
}

fn prefix(set: &HypothesisSet, n: Option<usize>) -> Result<HypothesisSet> {
    match n {
        Some(n) => set.prefix(n),
        None => Ok(set.clone()),
    }
}

/// Methods of a config with every resource they need resolved.
pub struct DecodePlan {
    methods: Vec<(String, Planned)>,
    normalizer: Normalizer,
    unit: TokenUnit,
    seed: u64,
}

impl DecodePlan {
    pub fn new(cfg: &RunConfig, resources: &Resources) -> Result<Self> {
        if cfg.methods.is_empty() {
            return Err(Error::Config("no methods configured".into()));
        }
        let mut methods = Vec::new();
        for m in &cfg.methods {
            let planned = match m {
                MethodConfig::Map(x) => Planned::Map {
                    n: x.n,
                    length_normalize: x.length_normalize,
                },
                MethodConfig::Beam(b) => Planned::Beam {
                    sets: load_indexed_sets(
                        &cfg.require(&Some(b.hypotheses.clone()), "beam hypotheses")?,
                    )?,
                },
                MethodConfig::Mbr(x) => Planned::Mbr {
                    n: x.n,
                    utility: resources.utility(cfg.utility_spec(&x.utility))?,
                },
                MethodConfig::MbrPruned(x) => Planned::Pruned {
                    n: x.n,
                    utility: resources.utility(cfg.utility_spec(&x.utility))?,
                    schedule: x.schedule.clone(),
                },
                MethodConfig::Weighted(x) => Planned::Weighted {
                    n: x.n,
                    spec: x.score.clone(),
                },
                MethodConfig::Oracle(x) => Planned::Oracle { n: x.n },
            };
            methods.push((m.label(), planned));
        }
        Ok(DecodePlan {
            methods,
            normalizer: Normalizer::from_spec(&cfg.resolved_normalizer(&cfg.normalizer))
                .map_err(|e| Error::Config(e.to_string()))?,
            unit: cfg.unit,
            seed: cfg.seed,
        })
    }

    pub fn labels(&self) -> Vec<&str> {
        self.methods.iter().map(|(l, _)| l.as_str()).collect()
    }

    /// Largest sample prefix any method reads.
    fn max_n(&self) -> Option<usize> {
        self.methods
            .iter()
            .filter_map(|(_, m)| match m {
                Planned::Map { n, .. }
                | Planned::Mbr { n, .. }
                | Planned::Pruned { n, .. }
                | Planned::Weighted { n, .. }
                | Planned::Oracle { n } => *n,
                Planned::Beam { .. } => None,
            })
            .max()
    }

    fn needs_samples(&self) -> bool {
        self.methods
            .iter()
            .any(|(_, m)| !matches!(m, Planned::Beam { .. }))
    }

    /// Runs method `k` on one utterance; returns the result and the number
    /// of utility evaluations it used.
    pub fn run_one(
        &self,
        k: usize,
        utt: &Utterance,
        set: Option<&HypothesisSet>,
    ) -> Result<(DecodeResult, usize)> {
        let (label, m) = &self.methods[k];
        let samples = || set.ok_or_else(|| Error::invalid("no hypothesis set"));
        let (result, evaluations) = match m {
            Planned::Map {
                n,
                length_normalize,
            } => (map_select(&prefix(samples()?, *n)?, *length_normalize)?, 0),
            Planned::Beam { sets } => {
                let beam = sets
                    .get(&utt.id)
                    .ok_or_else(|| Error::invalid(format!("{label}: no beam output")))?;
                let objective = beam.hypotheses[0].log_prob.unwrap_or(0.0);
                (DecodeResult::new(beam, Method::Beam, 0, objective, None), 0)
            }
            Planned::Mbr { n, utility } => mbr_decode(&prefix(samples()?, *n)?, utility)?,
            Planned::Pruned {
                n,
                utility,
                schedule,
            } => mbr_decode_pruned(
                &prefix(samples()?, *n)?,
                utility,
                schedule,
                self.seed ^ fnv1a(utt.id.as_bytes()),
            )?,
            Planned::Weighted { n, spec } => (weighted_select(&prefix(samples()?, *n)?, spec)?, 0),
            Planned::Oracle { n } => {
                let reference = utt
                    .reference
                    .as_deref()
                    .ok_or_else(|| Error::invalid("oracle needs a reference"))?;
                (
                    oracle_select(
                        &prefix(samples()?, *n)?,
                        reference,
                        &self.normalizer,
                        self.unit,
                    )?,
                    0,
                )
            }
        };
        Ok((result.with_label(label.clone()), evaluations))
    }

    pub fn len(&self) -> usize {
        self.methods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.methods.is_empty()
    }

    /// `(label, kind, n)` of method `k`.
    pub fn describe(&self, k: usize) -> (&str, &'static str, Option<usize>) {
        let (label, m) = &self.methods[k];
        let (kind, n) = match m {
            Planned::Map { n, .. } => ("map", *n),
            Planned::Beam { .. } => ("beam", None),
            Planned::Mbr { n, .. } => ("mbr", *n),
            Planned::Pruned { n, .. } => ("mbr_pruned", *n),
            Planned::Weighted { n, .. } => ("weighted", *n),
            Planned::Oracle { n } => ("oracle", *n),
        };
        (label, kind, n)
    }
}

/// Runs every planned method on one utterance, in method order.
pub fn decode_utterance(
    plan: &DecodePlan,
    utt: &Utterance,
    set: Option<&HypothesisSet>,
) -> Result<Vec<(DecodeResult, usize)>> {
    (0..plan.len()).map(|k| plan.run_one(k, utt, set)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    pub results: Vec<DecodeResult>,
    /// Utterances left out, with the reason, in manifest order.
    pub skipped: Vec<(String, String)>,
    pub results_path: PathBuf,
}

/// Decodes every manifest utterance with every configured method. An
/// utterance is all-or-nothing: if any method fails on it, it is skipped and
/// counted so that every reported (utterance, method) pair is complete.
pub fn cmd_decode(cfg: &RunConfig) -> Result<DecodeOutcome> {
    cfg.validate()?;
    let manifest = load_manifest(cfg.require(&cfg.manifest, "manifest")?)?;
    let resources = Resources::load(cfg)?;
    let plan = DecodePlan::new(cfg, &resources)?;
    let sets = if plan.needs_samples() {
        load_indexed_sets(&cfg.require(&cfg.hypotheses, "hypotheses")?)?
    } else {
        HashMap::new()
    };
    if let Some(n) = plan.max_n() {
        if let Some(short) = manifest
            .iter()
            .filter_map(|u| sets.get(&u.id))
            .find(|s| s.len() < n)
        {
            return Err(Error::Config(format!(
                "N = {n} but utterance {:?} has only {} hypotheses",
                short.utterance_id,
                short.len()
            )));
        }
    }

    let per_utt: Vec<Result<Vec<(DecodeResult, usize)>>> = with_workers(cfg.workers, || {
        manifest
            .par_iter()
            .map(|u| {
                if plan.needs_samples() && !sets.contains_key(&u.id) {
                    return Err(Error::invalid("no hypothesis set"));
                }
                decode_utterance(&plan, u, sets.get(&u.id))
            })
            .collect()
    })?;

    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for (u, r) in manifest.iter().zip(per_utt) {
        match r {
            Ok(rs) => results.extend(rs.into_iter().map(|(r, _)| r)),
            Err(e) => {
                warn!("skipping {}: {e}", u.id);
                skipped.push((u.id.clone(), e.to_string()));
            }
        }
    }
    let results_path = cfg.output_path("results.jsonl");
    write_decode_results(&results_path, &results)?;
    let mut skip_tsv = String::from("utterance_id\treason\n");
    for (id, reason) in &skipped {
        skip_tsv.push_str(&format!("{id}\t{}\n", reason.replace(['\t', '\n'], " ")));
    }
    write_output(cfg, "skipped.tsv", &skip_tsv)?;
    info!(
        "decoded {} utterances with {} methods ({} skipped)",
        manifest.len() - skipped.len(),
        plan.methods.len(),
        skipped.len()
    );
    Ok(DecodeOutcome {
        results,
        skipped,
        results_path,
    })
}
