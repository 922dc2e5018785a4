use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;

use super::{with_workers, write_output, RunConfig};
use crate::audio::{add_noise, read_wav, write_wav, AudioBuffer, NoiseSpec};
use crate::data::{load_manifest, write_manifest, Utterance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MixOutcome {
    pub manifest_path: PathBuf,
    pub written: usize,
    /// `(utterance_id, message)` for every utterance that could not be mixed.
    pub failures: Vec<(String, String)>,
}

fn safe_name(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn noise_spec(cfg: &RunConfig) -> Result<NoiseSpec> {
    let noise = cfg
        .noise
        .as_ref()
        .ok_or_else(|| Error::Config("a [noise] section is required".into()))?;
    let mut paths: Vec<PathBuf> = noise.noise_paths.iter().map(|p| cfg.resolve(p)).collect();
    if let Some(dir) = &noise.noise_dir {
        let dir = cfg.resolve(dir);
        let mut found: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        found.sort();
        paths.extend(found);
    }
    let spec = NoiseSpec {
        noise_paths: paths,
        snr_db: noise.snr_db,
        seed: cfg.seed,
    };
    spec.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(spec)
}

fn audio_path(manifest_dir: &Path, u: &Utterance) -> Result<PathBuf> {
    let p = u
        .audio_path
        .as_ref()
        .ok_or_else(|| Error::invalid("no audio path"))?;
    Ok(if p.is_absolute() {
        p.clone()
    } else {
        manifest_dir.join(p)
    })
}

/// Mixes one noise file into every utterance at the configured SNR. Writes
/// `wav/<id>.wav`, a manifest pointing at them, and `mix_noise.tsv` with the
/// noise file, gain and clamped-sample count per utterance. Failed
/// utterances are reported and left out of the new manifest.
pub fn cmd_mix_noise(cfg: &RunConfig) -> Result<MixOutcome> {
    cfg.validate()?;
    let manifest_path = cfg.require(&cfg.manifest, "manifest")?;
    let manifest = load_manifest(&manifest_path)?;
    let manifest_dir = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let spec = noise_spec(cfg)?;
    let noises: Vec<AudioBuffer> = spec
        .noise_paths
        .iter()
        .map(read_wav)
        .collect::<Result<_>>()
        .map_err(|e| Error::Config(format!("noise: {e}")))?;
    let out_dir = cfg.resolve(&cfg.output_dir);
    let wav_dir = out_dir.join("wav");
    fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;

    let mixed: Vec<Result<(Utterance, String)>> = with_workers(cfg.workers, || {
        manifest
            .par_iter()
            .map(|u| {
                let signal = read_wav(audio_path(&manifest_dir, u)?)?;
                let noisy = add_noise(&signal, &noises, spec.snr_db, spec.seed, &u.id)?;
                let rel = PathBuf::from("wav").join(format!("{}.wav", safe_name(&u.id)));
                let clipped = write_wav(out_dir.join(&rel), &noisy.audio)?;
                let log = format!(
                    "{}\t{}\t{:.9}\t{clipped}",
                    u.id,
                    spec.noise_paths[noisy.noise_index].display(),
                    noisy.gain
                );
                Ok((
                    Utterance {
                        audio_path: Some(rel),
                        ..u.clone()
                    },
                    log,
                ))
            })
            .collect()
    })?;

    let mut kept = Vec::new();
    let mut failures = Vec::new();
    let mut log = String::from("utterance_id\tnoise\tgain\tclipped\n");
    for (u, r) in manifest.iter().zip(mixed) {
        match r {
            Ok((utt, line)) => {
                kept.push(utt);
                let _ = writeln!(log, "{line}");
            }
            Err(e) => {
                warn!("mix-noise {}: {e}", u.id);
                failures.push((u.id.clone(), e.to_string()));
            }
        }
    }
    let new_manifest = out_dir.join("manifest.tsv");
    write_manifest(&new_manifest, &kept)?;
    write_output(cfg, "mix_noise.tsv", &log)?;
    let mut fail_tsv = String::from("utterance_id\terror\n");
    for (id, e) in &failures {
        let _ = writeln!(fail_tsv, "{id}\t{}", e.replace(['\t', '\n'], " "));
    }
    write_output(cfg, "mix_failures.tsv", &fail_tsv)?;
    Ok(MixOutcome {
        manifest_path: new_manifest,
        written: kept.len(),
        failures,
    })
}
