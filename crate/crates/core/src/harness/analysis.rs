use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::Instant;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use super::{load_indexed_sets, with_workers, write_output, DecodePlan, Resources, RunConfig};
use crate::data::{load_manifest, HypothesisSet, Utterance};
use crate::error::{Error, Result};
use crate::mbr::{mbr_decode, Utility};
use crate::metrics::{edit_distance, mean_and_standard_error, median, pearson};
use crate::sampling::{simulate_regret, RegretTable, SyntheticModel};
use crate::textnorm::{tokenize, Normalizer, TokenUnit};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceCorrelation {
    pub utterance_id: String,
    pub r: Option<f64>,
    /// Why the instance was skipped.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelateReport {
    pub mean_r: f64,
    pub standard_error: f64,
    pub used: usize,
    pub skipped: usize,
    pub instances: Vec<InstanceCorrelation>,
}

fn instance_r(
    utt: &Utterance,
    set: Option<&HypothesisSet>,
    n: Option<usize>,
    utility: &Utility,
    normalizer: &Normalizer,
    unit: TokenUnit,
) -> std::result::Result<f64, String> {
    let set = set.ok_or("no hypothesis set")?;
    let set = match n {
        Some(n) => set.prefix(n).map_err(|e| e.to_string())?,
        None => set.clone(),
    };
    if set.len() < 2 {
        return Err("fewer than two hypotheses".into());
    }
    let reference = utt.reference.as_deref().ok_or("no reference")?;
    let ref_tokens = tokenize(&normalizer.normalize(reference), unit);
    if ref_tokens.is_empty() {
        return Err("empty reference".into());
    }
    let (result, _) = mbr_decode(&set, utility).map_err(|e| e.to_string())?;
    let objectives = result
        .per_candidate_objective
        .expect("mbr reports every objective");
    let rates: Vec<f64> = set
        .hypotheses
        .iter()
        .map(|h| {
            let toks = tokenize(&normalizer.normalize(&h.text), unit);
            edit_distance(&toks, &ref_tokens).distance as f64 / ref_tokens.len() as f64
        })
        .collect();
    pearson(&objectives, &rates).map_err(|e| e.to_string())
}

/// Per utterance, the Pearson correlation between each candidate's MBR
/// objective and its error rate; averaged over usable utterances.
pub fn cmd_correlate(cfg: &RunConfig) -> Result<CorrelateReport> {
    cfg.validate()?;
    let manifest = load_manifest(cfg.require(&cfg.manifest, "manifest")?)?;
    let sets = load_indexed_sets(&cfg.require(&cfg.hypotheses, "hypotheses")?)?;
    let resources = Resources::load(cfg)?;
    let utility = resources.utility(cfg.utility_spec(&cfg.correlate.utility))?;
    let normalizer = Normalizer::from_spec(&cfg.resolved_normalizer(&cfg.normalizer))
        .map_err(|e| Error::Config(e.to_string()))?;
    let n = cfg.correlate.n;

    let instances: Vec<InstanceCorrelation> = with_workers(cfg.workers, || {
        manifest
            .par_iter()
            .map(
                |u| match instance_r(u, sets.get(&u.id), n, &utility, &normalizer, cfg.unit) {
                    Ok(r) => InstanceCorrelation {
                        utterance_id: u.id.clone(),
                        r: Some(r),
                        skipped: None,
                    },
                    Err(reason) => InstanceCorrelation {
                        utterance_id: u.id.clone(),
                        r: None,
                        skipped: Some(reason),
                    },
                },
            )
            .collect()
    })?;
    let rs: Vec<f64> = instances.iter().filter_map(|i| i.r).collect();
    let (mean_r, standard_error) = mean_and_standard_error(&rs)
        .ok_or_else(|| Error::Undefined("no usable correlation instances".into()))?;
    let report = CorrelateReport {
        mean_r,
        standard_error,
        used: rs.len(),
        skipped: instances.len() - rs.len(),
        instances,
    };

    let mut tsv = String::from("utterance_id\tr\tskipped\n");
    for i in &report.instances {
        let r = i.r.map_or_else(|| "NA".to_string(), |r| format!("{r:.6}"));
        let _ = writeln!(
            tsv,
            "{}\t{r}\t{}",
            i.utterance_id,
            i.skipped.as_deref().unwrap_or("")
        );
    }
    write_output(cfg, "correlate.tsv", &tsv)?;
    write_output(cfg, "correlate.txt", &report.summary())?;
    Ok(report)
}

impl CorrelateReport {
    pub fn summary(&self) -> String {
        format!(
            "mean r = {:.4}  standard error = {:.4}  instances = {}  skipped = {}\n",
            self.mean_r, self.standard_error, self.used, self.skipped
        )
    }
}

/// Regret of sample-based MBR against the exact optimum of a synthetic model.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<RegretTable> {
    cfg.validate()?;
    let sim = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| Error::Config("a [simulate] section is required".into()))?;
    let model = SyntheticModel::load(cfg.require(&Some(sim.model.clone()), "simulate.model")?)?;
    let utility = Resources::default().utility(cfg.utility_spec(&sim.utility))?;
    let table = with_workers(cfg.workers, || {
        simulate_regret(&model, &utility, &sim.grid, sim.seeds, &sim.sampler)
    })??;
    write_output(cfg, "simulate.tsv", &regret_tsv(&table))?;
    write_output(cfg, "simulate.txt", &regret_text(&table))?;
    Ok(table)
}

pub fn regret_tsv(t: &RegretTable) -> String {
    let mut s = String::from("n\tmedian_regret\tmean_regret\tstandard_error\tmax_regret\n");
    for r in &t.rows {
        let _ = writeln!(
            s,
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            r.n, r.median, r.mean, r.standard_error, r.max
        );
    }
    s
}

pub fn regret_text(t: &RegretTable) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "exact optimum: {:?} (expected utility {:.4})",
        t.optimum_text, t.optimum_utility
    );
    let _ = writeln!(s, "seeds: {}", t.seeds);
    let _ = writeln!(
        s,
        "{:>5} {:>10} {:>10} {:>10}",
        "N", "median", "mean", "stderr"
    );
    for r in &t.rows {
        let _ = writeln!(
            s,
            "{:>5} {:>10.4} {:>10.4} {:>10.4}",
            r.n, r.median, r.mean, r.standard_error
        );
    }
    let _ = writeln!(
        s,
        "inversions: {}  verdict: {}",
        t.inversions,
        if t.converges() {
            "converging"
        } else {
            "not converging"
        }
    );
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub label: String,
    pub kind: String,
    pub repetition: usize,
    pub utterances: usize,
    pub mean_seconds: f64,
    pub median_seconds: f64,
    /// Utility evaluations actually performed.
    pub evaluations: usize,
    /// `N^2` summed over utterances: the cost of exact MBR without dedup.
    pub expanded_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// `(pruned label, exact label, time ratio, evaluation ratio)`; ratios
    /// are exact over pruned.
    pub speedups: Vec<(String, String, f64, f64)>,
}

/// Wall-clock per utterance for each configured method; files are loaded
/// before timing starts.
pub fn cmd_bench(cfg: &RunConfig, repetitions: Option<usize>) -> Result<BenchReport> {
    cfg.validate()?;
    let reps = repetitions.unwrap_or(cfg.bench.repetitions);
    if reps == 0 {
        return Err(Error::Config("repetitions must be positive".into()));
    }
    let manifest = load_manifest(cfg.require(&cfg.manifest, "manifest")?)?;
    let sets = load_indexed_sets(&cfg.require(&cfg.hypotheses, "hypotheses")?)?;
    let resources = Resources::load(cfg)?;
    let plan = DecodePlan::new(cfg, &resources)?;
    let usable: Vec<&Utterance> = manifest
        .iter()
        .filter(|u| sets.contains_key(&u.id))
        .collect();
    if usable.len() < manifest.len() {
        warn!(
            "{} utterances have no hypothesis set",
            manifest.len() - usable.len()
        );
    }

    let rows = with_workers(cfg.workers, || -> Result<Vec<BenchRow>> {
        let mut rows = Vec::new();
        for k in 0..plan.len() {
            let (label, kind, n) = plan.describe(k);
            for repetition in 0..reps {
                let mut seconds = Vec::with_capacity(usable.len());
                let mut evaluations = 0;
                let mut expanded = 0;
                for u in &usable {
                    let set = sets.get(&u.id);
                    let start = Instant::now();
                    let (_, evals) = plan.run_one(k, u, set)?;
                    seconds.push(start.elapsed().as_secs_f64());
                    evaluations += evals;
                    let size = n.unwrap_or_else(|| set.map_or(0, |s| s.len()));
                    if kind.starts_with("mbr") {
                        expanded += size * size;
                    }
                }
                rows.push(BenchRow {
                    label: label.to_string(),
                    kind: kind.to_string(),
                    repetition,
                    utterances: usable.len(),
                    mean_seconds: seconds.iter().sum::<f64>() / seconds.len().max(1) as f64,
                    median_seconds: median(&seconds).unwrap_or(0.0),
                    evaluations,
                    expanded_evaluations: expanded,
                });
            }
        }
        Ok(rows)
    })??;

    let mean_of = |label: &str| {
        let r: Vec<&BenchRow> = rows.iter().filter(|r| r.label == label).collect();
        (
            r.iter().map(|r| r.mean_seconds).sum::<f64>() / r.len() as f64,
            r[0].evaluations as f64,
        )
    };
    let mut by_n: HashMap<Option<usize>, String> = HashMap::new();
    for k in 0..plan.len() {
        let (label, kind, n) = plan.describe(k);
        if kind == "mbr" {
            by_n.entry(n).or_insert_with(|| label.to_string());
        }
    }
    let mut speedups = Vec::new();
    for k in 0..plan.len() {
        let (label, kind, n) = plan.describe(k);
        if kind != "mbr_pruned" {
            continue;
        }
        if let Some(exact) = by_n.get(&n) {
            let (te, ee) = mean_of(exact);
            let (tp, ep) = mean_of(label);
            speedups.push((label.to_string(), exact.clone(), te / tp, ee / ep));
        }
    }
    let report = BenchReport { rows, speedups };
    write_output(cfg, "bench.tsv", &report.tsv())?;
    write_output(cfg, "bench.txt", &report.to_text())?;
    Ok(report)
}

impl BenchReport {
    pub fn tsv(&self) -> String {
        let mut s = String::from(
            "label\tkind\trepetition\tutterances\tmean_seconds\tmedian_seconds\tevaluations\texpanded_evaluations\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{:.9}\t{:.9}\t{}\t{}",
                r.label,
                r.kind,
                r.repetition,
                r.utterances,
                r.mean_seconds,
                r.median_seconds,
                r.evaluations,
                r.expanded_evaluations
            );
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<22} {:>4} {:>14} {:>14} {:>12}",
            "method", "rep", "mean s/utt", "median s/utt", "evaluations"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<22} {:>4} {:>14.6} {:>14.6} {:>12}",
                r.label, r.repetition, r.mean_seconds, r.median_seconds, r.evaluations
            );
        }
        for (p, e, t, ev) in &self.speedups {
            let _ = writeln!(s, "{p} vs {e}: {t:.2}x faster, {ev:.2}x fewer evaluations");
        }
        s
    }
}
