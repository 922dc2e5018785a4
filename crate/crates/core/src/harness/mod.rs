//! Batch orchestration behind the command-line tool.
//!
//! Utterances are processed on a rayon pool sized by `workers`; every
//! reduction and every output file is produced in manifest order, so results
//! are byte-identical for any worker count.

mod analysis;
mod config;
mod decode;
mod evaluate;
mod noise;

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use crate::data::{
    load_hypothesis_sets, read_file, write_file, write_hypothesis_sets, HypothesisSet,
};
use crate::error::{Error, Result};
use crate::mbr::{ExternalUtilities, Utility, UtilityKind, UtilitySpec};
use crate::metrics::EmbeddingTable;

pub use analysis::{
    cmd_bench, cmd_correlate, cmd_simulate, regret_text, regret_tsv, BenchReport, BenchRow,
    CorrelateReport, InstanceCorrelation,
};
pub use config::{
    BeamMethod, BenchConfig, CorrelateConfig, EvaluateConfig, MapMethod, MbrMethod, MergeConfig,
    MethodConfig, NoiseConfig, OracleMethod, Overrides, PrunedMethod, RunConfig, SimulateConfig,
    UtilityConfig, WeightedMethod,
};
pub use decode::{cmd_decode, decode_utterance, DecodeOutcome, DecodePlan};
pub use evaluate::{
    cmd_evaluate, evaluate_results, BucketRow, CorpusRow, EvalReport, ReportMetadata, UtteranceRow,
};
pub use noise::{cmd_mix_noise, MixOutcome};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Runs `f` on a pool with `workers` threads (0 = one per CPU).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Shared resources referenced by a config, loaded once.
#[derive(Debug, Clone, Default)]
pub struct Resources {
    pub embeddings: Option<Arc<EmbeddingTable>>,
    pub external: Option<Arc<ExternalUtilities>>,
}

impl Resources {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let embeddings = match &cfg.embeddings {
            Some(_) => Some(Arc::new(EmbeddingTable::load(
                cfg.require(&cfg.embeddings, "embeddings")?,
            )?)),
            None => None,
        };
        let external = match &cfg.external_utilities {
            Some(_) => Some(Arc::new(ExternalUtilities::load(
                cfg.require(&cfg.external_utilities, "external_utilities")?,
            )?)),
            None => None,
        };
        Ok(Resources {
            embeddings,
            external,
        })
    }

    pub fn utility(&self, spec: UtilitySpec) -> Result<Utility> {
        let needs = |k| spec.kind == k;
        Utility::new(
            spec.clone(),
            self.embeddings
                .clone()
                .filter(|_| needs(UtilityKind::EmbeddingCosineSimilarity)),
            self.external
                .clone()
                .filter(|_| needs(UtilityKind::ExternalMatrix)),
        )
        .map_err(|e| Error::Config(e.to_string()))
    }
}

/// Hypothesis sets keyed by utterance id; a repeated id is an error.
pub fn index_sets(sets: Vec<HypothesisSet>, path: &Path) -> Result<HashMap<String, HypothesisSet>> {
    let mut out = HashMap::with_capacity(sets.len());
    for s in sets {
        let id = s.utterance_id.clone();
        if out.insert(id.clone(), s).is_some() {
            return Err(Error::Config(format!(
                "{}: utterance {id:?} has more than one hypothesis set",
                path.display()
            )));
        }
    }
    Ok(out)
}

pub fn load_indexed_sets(path: &Path) -> Result<HashMap<String, HypothesisSet>> {
    index_sets(load_hypothesis_sets(path)?, path)
}

/// Attaches `key<TAB>utterance_id<TAB>hyp_index<TAB>value` scores to sets.
pub fn merge_scores(sets: &mut [HypothesisSet], contents: &str, path: &Path) -> Result<usize> {
    let position: HashMap<String, usize> = sets
        .iter()
        .enumerate()
        .map(|(k, s)| (s.utterance_id.clone(), k))
        .collect();
    let mut merged = 0;
    for (lineno, line) in contents.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 4 fields, found {}", f.len()),
            ));
        }
        if f[0].is_empty() {
            return Err(Error::parse(path, lineno, "empty score key"));
        }
        let set = position
            .get(f[1])
            .map(|&k| &mut sets[k])
            .ok_or_else(|| Error::parse(path, lineno, format!("unknown utterance {:?}", f[1])))?;
        let idx: usize = f[2]
            .parse()
            .map_err(|e| Error::parse(path, lineno, format!("bad index {:?}: {e}", f[2])))?;
        let value: f64 = f[3]
            .parse()
            .map_err(|e| Error::parse(path, lineno, format!("bad value {:?}: {e}", f[3])))?;
        if !value.is_finite() {
            return Err(Error::parse(path, lineno, "non-finite score"));
        }
        let hyp = set.hypotheses.get_mut(idx).ok_or_else(|| {
            Error::parse(path, lineno, format!("hypothesis index {idx} out of range"))
        })?;
        hyp.external_scores.insert(f[0].to_string(), value);
        merged += 1;
    }
    Ok(merged)
}

/// Merges the configured score file into the configured hypothesis sets and
/// writes `hypotheses.jsonl` to the output directory.
pub fn cmd_merge_scores(cfg: &RunConfig) -> Result<(std::path::PathBuf, usize)> {
    let merge = cfg
        .merge
        .as_ref()
        .ok_or_else(|| Error::Config("a [merge] section or --scores is required".into()))?;
    let hyp_path = cfg.require(&cfg.hypotheses, "hypotheses")?;
    let mut sets = load_hypothesis_sets(&hyp_path)?;
    index_sets(sets.clone(), &hyp_path)?;
    let scores_path = cfg.require(&Some(merge.scores.clone()), "merge.scores")?;
    let merged = merge_scores(&mut sets, &read_file(&scores_path)?, &scores_path)?;
    let out = cfg.output_path("hypotheses.jsonl");
    write_hypothesis_sets(&out, &sets)?;
    Ok((out, merged))
}

pub(crate) fn write_output(
    cfg: &RunConfig,
    name: &str,
    contents: &str,
) -> Result<std::path::PathBuf> {
    let path = cfg.output_path(name);
    write_file(&path, contents)?;
    Ok(path)
}
