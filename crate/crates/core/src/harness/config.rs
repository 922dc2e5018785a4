use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::read_file;
use crate::error::{Error, Result};
use crate::mbr::{PruneSchedule, Tokenization, UtilityKind, UtilitySpec};
use crate::metrics::BleuConfig;
use crate::rerank::WeightedScoreSpec;
use crate::sampling::{SamplerConfig, SimulationSampler};
use crate::textnorm::{NormalizerSpec, TokenUnit};

/// Everything a harness command needs. Relative paths are resolved against
/// the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// Sampled hypothesis sets (JSON lines).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypotheses: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 picks the number of CPUs. Never affects output.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub unit: TokenUnit,
    #[serde(default)]
    pub normalizer: NormalizerSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_utilities: Option<PathBuf>,
    #[serde(default)]
    pub methods: Vec<MethodConfig>,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
    #[serde(default)]
    pub correlate: CorrelateConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge: Option<MergeConfig>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            manifest: None,
            hypotheses: None,
            output_dir: default_output_dir(),
            seed: 0,
            workers: 0,
            unit: TokenUnit::Word,
            normalizer: NormalizerSpec::default(),
            embeddings: None,
            external_utilities: None,
            methods: Vec::new(),
            evaluate: EvaluateConfig::default(),
            correlate: CorrelateConfig::default(),
            simulate: None,
            noise: None,
            bench: BenchConfig::default(),
            merge: None,
            base_dir: PathBuf::new(),
        }
    }
}

/// Utility settings shared by MBR methods, correlation and simulation. Unset
/// fields inherit the run-wide normalizer and token unit.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityConfig {
    #[serde(default)]
    pub kind: UtilityKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokenization: Option<Tokenization>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalizer: Option<NormalizerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bleu: Option<BleuConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MethodConfig {
    Map(MapMethod),
    Beam(BeamMethod),
    Mbr(MbrMethod),
    MbrPruned(PrunedMethod),
    Weighted(WeightedMethod),
    Oracle(OracleMethod),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapMethod {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default)]
    pub length_normalize: bool,
}

/// Beam output produced elsewhere; index 0 of each set is the answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamMethod {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub width: usize,
    pub hypotheses: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MbrMethod {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Use the first `n` samples; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default)]
    pub utility: UtilityConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrunedMethod {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default)]
    pub utility: UtilityConfig,
    #[serde(default)]
    pub schedule: PruneSchedule,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WeightedMethod {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(flatten)]
    pub score: WeightedScoreSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleMethod {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

impl MethodConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            MethodConfig::Map(_) => "map",
            MethodConfig::Beam(_) => "beam",
            MethodConfig::Mbr(_) => "mbr",
            MethodConfig::MbrPruned(_) => "mbr_pruned",
            MethodConfig::Weighted(_) => "weighted",
            MethodConfig::Oracle(_) => "oracle",
        }
    }

    /// Sample count used from the stored set, if limited.
    pub fn n(&self) -> Option<usize> {
        match self {
            MethodConfig::Map(m) => m.n,
            MethodConfig::Beam(_) => None,
            MethodConfig::Mbr(m) => m.n,
            MethodConfig::MbrPruned(m) => m.n,
            MethodConfig::Weighted(m) => m.n,
            MethodConfig::Oracle(m) => m.n,
        }
    }

    fn set_n(&mut self, n: usize) {
        match self {
            MethodConfig::Map(m) => m.n = Some(n),
            MethodConfig::Beam(_) => {}
            MethodConfig::Mbr(m) => m.n = Some(n),
            MethodConfig::MbrPruned(m) => m.n = Some(n),
            MethodConfig::Weighted(m) => m.n = Some(n),
            MethodConfig::Oracle(m) => m.n = Some(n),
        }
    }

    pub fn label(&self) -> String {
        let explicit = match self {
            MethodConfig::Map(m) => &m.label,
            MethodConfig::Beam(m) => &m.label,
            MethodConfig::Mbr(m) => &m.label,
            MethodConfig::MbrPruned(m) => &m.label,
            MethodConfig::Weighted(m) => &m.label,
            MethodConfig::Oracle(m) => &m.label,
        };
        if let Some(l) = explicit {
            return l.clone();
        }
        match self {
            MethodConfig::Beam(b) => format!("beam{}", b.width),
            m => match m.n() {
                Some(n) => format!("{}_n{n}", m.kind()),
                None => m.kind().to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Tokenization for corpus BLEU; follows `unit` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bleu_tokenization: Option<Tokenization>,
    /// Width of the reference-length buckets.
    #[serde(default = "default_bucket_width")]
    pub bucket_width: usize,
}

fn default_bucket_width() -> usize {
    5
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            bleu_tokenization: None,
            bucket_width: default_bucket_width(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelateConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default)]
    pub utility: UtilityConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: PathBuf,
    #[serde(default = "default_grid")]
    pub grid: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_sim_sampler")]
    pub sampler: SimulationSampler,
    #[serde(default)]
    pub utility: UtilityConfig,
}

fn default_grid() -> Vec<usize> {
    vec![1, 2, 4, 8, 16, 32, 64]
}

fn default_seeds() -> usize {
    200
}

fn default_sim_sampler() -> SimulationSampler {
    SimulationSampler::Sample {
        config: SamplerConfig::ancestral(0, 64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Noise WAVs; may be combined with `noise_dir`.
    #[serde(default)]
    pub noise_paths: Vec<PathBuf>,
    /// Every `.wav` in this directory, in name order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_dir: Option<PathBuf>,
    #[serde(default)]
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
}

fn default_repetitions() -> usize {
    2
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            repetitions: default_repetitions(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeConfig {
    /// `key<TAB>utterance_id<TAB>hyp_index<TAB>value` lines.
    pub scores: PathBuf,
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    /// Keep only methods whose kind or label matches.
    pub method: Option<String>,
    pub n: Option<usize>,
    /// Keep only beam methods of this width.
    pub beam_width: Option<usize>,
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub temperature: Option<f64>,
    pub snr_db: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn parse(contents: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig =
            toml::from_str(contents).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&read_file(path)?, &base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self, name: &str) -> PathBuf {
        self.resolve(&self.output_dir).join(name)
    }

    pub fn require(&self, field: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        let p = field
            .as_ref()
            .ok_or_else(|| Error::Config(format!("`{name}` is required for this command")))?;
        let p = self.resolve(p);
        if !p.exists() {
            return Err(Error::Config(format!(
                "{name} {} does not exist",
                p.display()
            )));
        }
        Ok(p)
    }

    /// Normalizer with its rule path resolved.
    pub fn resolved_normalizer(&self, spec: &NormalizerSpec) -> NormalizerSpec {
        NormalizerSpec {
            kind: spec.kind,
            rules_path: spec.rules_path.as_ref().map(|p| self.resolve(p)),
        }
    }

    pub fn utility_spec(&self, u: &UtilityConfig) -> UtilitySpec {
        UtilitySpec {
            kind: u.kind,
            bleu: u.bleu.clone().unwrap_or_else(BleuConfig::sentence),
            normalizer: self.resolved_normalizer(u.normalizer.as_ref().unwrap_or(&self.normalizer)),
            tokenization: u.tokenization.unwrap_or(Tokenization::from_unit(self.unit)),
        }
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(m) = &o.method {
            self.methods.retain(|c| c.kind() == m || &c.label() == m);
            if self.methods.is_empty() {
                return Err(Error::Config(format!("no configured method matches {m:?}")));
            }
        }
        if let Some(w) = o.beam_width {
            self.methods
                .retain(|c| !matches!(c, MethodConfig::Beam(b) if b.width != w));
            if !self
                .methods
                .iter()
                .any(|c| matches!(c, MethodConfig::Beam(_)))
            {
                return Err(Error::Config(format!("no beam method with width {w}")));
            }
        }
        if let Some(n) = o.n {
            for m in &mut self.methods {
                m.set_n(n);
            }
            // Methods that differed only in N are now the same method.
            let mut unique: Vec<MethodConfig> = Vec::new();
            for m in self.methods.drain(..) {
                if !unique.contains(&m) {
                    unique.push(m);
                }
            }
            self.methods = unique;
            self.correlate.n = Some(n);
        }
        if let Some(a) = o.alpha {
            for m in &mut self.methods {
                if let MethodConfig::Weighted(w) = m {
                    w.score.alpha = a;
                }
            }
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(sim) = &mut self.simulate {
            if let SimulationSampler::Sample { config } = &mut sim.sampler {
                if let Some(e) = o.epsilon {
                    config.epsilon = e;
                }
                if let Some(t) = o.temperature {
                    config.temperature = t;
                }
                if let Some(seed) = o.seed {
                    config.seed = seed;
                }
            }
        }
        if let Some(snr) = o.snr_db {
            self.noise
                .as_mut()
                .ok_or_else(|| Error::Config("--snr-db needs a [noise] section".into()))?
                .snr_db = snr;
        }
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        Ok(())
    }

    /// Checks that do not need the data files.
    pub fn validate(&self) -> Result<()> {
        let mut labels = HashSet::new();
        for m in &self.methods {
            let label = m.label();
            if !labels.insert(label.clone()) {
                return Err(Error::Config(format!("duplicate method label {label:?}")));
            }
            if m.n() == Some(0) {
                return Err(Error::Config(format!("{label}: n must be positive")));
            }
            match m {
                MethodConfig::Weighted(w) => w
                    .score
                    .validate()
                    .map_err(|e| Error::Config(format!("{label}: {e}")))?,
                MethodConfig::Beam(b) if b.width == 0 => {
                    return Err(Error::Config(format!(
                        "{label}: beam width must be positive"
                    )))
                }
                _ => {}
            }
        }
        if self.evaluate.bucket_width == 0 {
            return Err(Error::Config(
                "evaluate.bucket_width must be positive".into(),
            ));
        }
        if let Some(sim) = &self.simulate {
            if let SimulationSampler::Sample { config } = &sim.sampler {
                config
                    .validate()
                    .map_err(|e| Error::Config(format!("simulate.sampler: {e}")))?;
            }
        }
        if let Some(n) = &self.noise {
            if !n.snr_db.is_finite() {
                return Err(Error::Config("noise.snr_db must be finite".into()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring `workers` and
    /// `output_dir`, which never change results.
    pub fn digest(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("workers");
            map.remove("output_dir");
        }
        let hash = Sha256::digest(value.to_string().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
manifest = "manifest.tsv"
hypotheses = "samples.jsonl"
seed = 3
normalizer = { kind = "english_rules" }

[[methods]]
kind = "map"

[[methods]]
kind = "beam"
width = 5
hypotheses = "beam5.jsonl"

[[methods]]
kind = "mbr"
n = 64

[[methods]]
kind = "mbr_pruned"
n = 64
schedule = [{ keep = 0.25, refs = 8 }, { keep = 1.0 }]

[[methods]]
kind = "weighted"
alpha = 0.05
llm_key = "llm_score"

[[methods]]
kind = "oracle"
"#;

    #[test]
    fn parses_and_labels() {
        let cfg = RunConfig::parse(SAMPLE, Path::new("/data")).unwrap();
        cfg.validate().unwrap();
        let labels: Vec<String> = cfg.methods.iter().map(MethodConfig::label).collect();
        assert_eq!(
            labels,
            [
                "map",
                "beam5",
                "mbr_n64",
                "mbr_pruned_n64",
                "weighted",
                "oracle"
            ]
        );
        assert_eq!(
            cfg.resolve(Path::new("x.tsv")),
            PathBuf::from("/data/x.tsv")
        );
        match &cfg.methods[3] {
            MethodConfig::MbrPruned(p) => assert_eq!(p.schedule, PruneSchedule::default()),
            _ => unreachable!(),
        }
        let spec = cfg.utility_spec(&UtilityConfig::default());
        assert_eq!(
            spec.normalizer.kind,
            crate::textnorm::NormalizerKind::EnglishRules
        );
    }

    #[test]
    fn rejects_unknown_keys_and_bad_schedules() {
        assert!(RunConfig::parse("manifst = \"x\"\n", Path::new(".")).is_err());
        let bad = "[[methods]]\nkind = \"mbr_pruned\"\nschedule = [{ keep = 0.5, refs = 4 }]\n";
        assert!(RunConfig::parse(bad, Path::new(".")).is_err());
        let dup = "[[methods]]\nkind = \"map\"\n[[methods]]\nkind = \"map\"\n";
        assert!(RunConfig::parse(dup, Path::new("."))
            .unwrap()
            .validate()
            .is_err());
    }

    #[test]
    fn overrides() {
        let mut cfg = RunConfig::parse(SAMPLE, Path::new(".")).unwrap();
        cfg.apply(&Overrides {
            n: Some(4),
            alpha: Some(0.5),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(cfg.methods[2].label(), "mbr_n4");
        match &cfg.methods[4] {
            MethodConfig::Weighted(w) => assert_eq!(w.score.alpha, 0.5),
            _ => unreachable!(),
        }
        let mut only = cfg.clone();
        only.apply(&Overrides {
            method: Some("oracle".into()),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(only.methods.len(), 1);
        assert!(cfg
            .clone()
            .apply(&Overrides {
                beam_width: Some(20),
                ..Default::default()
            })
            .is_err());
    }

    #[test]
    fn n_override_merges_methods_that_differ_only_in_n() {
        let src = "[[methods]]\nkind = \"mbr\"\nn = 4\n[[methods]]\nkind = \"mbr\"\nn = 16\n[[methods]]\nkind = \"map\"\n";
        let mut cfg = RunConfig::parse(src, Path::new(".")).unwrap();
        cfg.apply(&Overrides {
            n: Some(8),
            ..Default::default()
        })
        .unwrap();
        let labels: Vec<String> = cfg.methods.iter().map(MethodConfig::label).collect();
        assert_eq!(labels, ["mbr_n8", "map_n8"]);
        cfg.validate().unwrap();
    }

    #[test]
    fn digest_ignores_workers_and_output() {
        let a = RunConfig::parse(SAMPLE, Path::new(".")).unwrap();
        let mut b = a.clone();
        b.workers = 8;
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.digest(), b.digest());
        b.seed = 4;
        assert_ne!(a.digest(), b.digest());
    }
}
