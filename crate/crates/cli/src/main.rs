use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mbrkit_core::harness::{
    cmd_bench, cmd_correlate, cmd_decode, cmd_evaluate, cmd_merge_scores, cmd_mix_noise,
    cmd_simulate, regret_text, MergeConfig, Overrides, RunConfig,
};
use mbrkit_core::Error;

/// Sample-based MBR decoding, reranking and evaluation for speech-to-text.
#[derive(Parser)]
#[command(name = "mbrkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mix background noise into every manifest utterance at a fixed SNR.
    MixNoise(Common),
    /// Select one output per utterance with every configured method.
    Decode(Common),
    /// Score decode results against the manifest references.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Results file to score (default: <out>/results.jsonl).
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Correlation between candidates' MBR objectives and their error rates.
    Correlate(Common),
    /// Regret of sample-based MBR on a synthetic model.
    Simulate(Common),
    /// Time every configured method.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Attach external scores (e.g. LLM scores) to hypothesis sets.
    MergeScores {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        hypotheses: Option<PathBuf>,
        /// `key<TAB>utterance_id<TAB>hyp_index<TAB>value` lines.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML). Relative paths inside it resolve against its directory.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Keep only methods with this kind or label.
    #[arg(long)]
    method: Option<String>,
    /// Number of samples every method reads.
    #[arg(long)]
    n: Option<usize>,
    /// Keep only beam outputs of this width.
    #[arg(long)]
    beam_width: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    snr_db: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per CPU).
    #[arg(long)]
    workers: Option<usize>,
}

fn absolute(p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir().unwrap_or_default().join(p)
    }
}

impl Common {
    fn load(&self, required: bool) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None if required => return Err(Error::Config("--config is required".into())),
            None => RunConfig {
                base_dir: absolute(Path::new(".")),
                ..RunConfig::default()
            },
        };
        cfg.apply(&Overrides {
            method: self.method.clone(),
            n: self.n,
            beam_width: self.beam_width,
            alpha: self.alpha,
            epsilon: self.epsilon,
            temperature: self.temperature,
            snr_db: self.snr_db,
            seed: self.seed,
            out: self.out.as_deref().map(absolute),
            workers: self.workers,
        })?;
        Ok(cfg)
    }
}

/// Exit status: 0 success, 1 bad input or config, 2 partial failure.
fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::MixNoise(c) => {
            let out = cmd_mix_noise(&c.load(true)?)?;
            println!(
                "mixed {} utterances, {} failed; manifest: {}",
                out.written,
                out.failures.len(),
                out.manifest_path.display()
            );
            for (id, e) in &out.failures {
                eprintln!("failed {id}: {e}");
            }
            Ok(if out.failures.is_empty() { 0 } else { 2 })
        }
        Command::Decode(c) => {
            let out = cmd_decode(&c.load(true)?)?;
            println!(
                "{} results, {} utterances skipped; results: {}",
                out.results.len(),
                out.skipped.len(),
                out.results_path.display()
            );
            for (id, reason) in &out.skipped {
                eprintln!("skipped {id}: {reason}");
            }
            Ok(if out.skipped.is_empty() { 0 } else { 2 })
        }
        Command::Evaluate { common, results } => {
            let report = cmd_evaluate(&common.load(true)?, results.as_deref().map(absolute))?;
            print!("{}", report.to_text());
            Ok(0)
        }
        Command::Correlate(c) => {
            print!("{}", cmd_correlate(&c.load(true)?)?.summary());
            Ok(0)
        }
        Command::Simulate(c) => {
            print!("{}", regret_text(&cmd_simulate(&c.load(true)?)?));
            Ok(0)
        }
        Command::Bench {
            common,
            repetitions,
        } => {
            print!("{}", cmd_bench(&common.load(true)?, repetitions)?.to_text());
            Ok(0)
        }
        Command::MergeScores {
            common,
            hypotheses,
            scores,
        } => {
            let mut cfg = common.load(false)?;
            if let Some(h) = hypotheses {
                cfg.hypotheses = Some(absolute(&h));
            }
            if let Some(s) = scores {
                cfg.merge = Some(MergeConfig {
                    scores: absolute(&s),
                });
            }
            let (path, merged) = cmd_merge_scores(&cfg)?;
            println!("merged {merged} scores into {}", path.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
