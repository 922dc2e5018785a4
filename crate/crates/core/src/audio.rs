//! 16-bit mono WAV I/O and noise mixing at a target signal-to-noise ratio.
//!
//! Power is the mean square over the whole buffer. Mixed buffers are kept
//! unclamped in memory; clamping happens only when writing.

use std::path::{Path, PathBuf};

use log::warn;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::draw_rng;

pub const EXPECTED_SAMPLE_RATE: u32 = 16_000;
const SCALE: f64 = 32768.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("audio samples must be finite"));
        }
        Ok(AudioBuffer {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let reject = |message: String| Error::UnsupportedWav {
        path: path.to_path_buf(),
        message,
    };
    if spec.channels != 1 {
        return Err(reject(format!("{} channels, expected mono", spec.channels)));
    }
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(reject("float samples, expected 16-bit PCM".into()));
    }
    if spec.bits_per_sample != 16 {
        return Err(reject(format!(
            "{}-bit samples, expected 16-bit PCM",
            spec.bits_per_sample
        )));
    }
    if spec.sample_rate != EXPECTED_SAMPLE_RATE {
        warn!(
            "{}: sample rate {} Hz (expected {EXPECTED_SAMPLE_RATE})",
            path.display(),
            spec.sample_rate
        );
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / SCALE))
        .collect::<std::result::Result<Vec<f64>, _>>()
        .map_err(wav_err)?;
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Writes 16-bit mono PCM and returns the number of samples that had to be
/// clamped.
pub fn write_wav(path: impl AsRef<Path>, buffer: &AudioBuffer) -> Result<usize> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    let hi = 1.0 - 1.0 / SCALE;
    let mut clipped = 0;
    for &s in &buffer.samples {
        if !(-1.0..=hi).contains(&s) {
            clipped += 1;
        }
        writer
            .write_sample((s.clamp(-1.0, hi) * SCALE) as i16)
            .map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)?;
    if clipped > 0 {
        warn!("{}: clamped {clipped} samples", path.display());
    }
    Ok(clipped)
}

/// Mean square of the samples.
pub fn signal_power(buffer: &AudioBuffer) -> Result<f64> {
    if buffer.is_empty() {
        return Err(Error::invalid("power of an empty buffer"));
    }
    Ok(buffer.samples.iter().map(|s| s * s).sum::<f64>() / buffer.len() as f64)
}

/// Crops (at a random offset) or tiles `noise` to exactly `target_len`.
pub fn fit_length(
    noise: &AudioBuffer,
    target_len: usize,
    rng: &mut impl Rng,
) -> Result<AudioBuffer> {
    if target_len == 0 {
        return Err(Error::invalid("target length must be positive"));
    }
    if noise.is_empty() {
        return Err(Error::invalid("noise buffer is empty"));
    }
    let samples = if noise.len() >= target_len {
        let offset = rng.gen_range(0..=noise.len() - target_len);
        noise.samples[offset..offset + target_len].to_vec()
    } else {
        noise
            .samples
            .iter()
            .copied()
            .cycle()
            .take(target_len)
            .collect()
    };
    Ok(AudioBuffer {
        samples,
        sample_rate: noise.sample_rate,
    })
}

/// Gain that puts `noise` at `snr_db` below `signal`.
pub fn snr_gain(signal: &AudioBuffer, noise: &AudioBuffer, snr_db: f64) -> Result<f64> {
    if !snr_db.is_finite() {
        return Err(Error::invalid(format!("SNR must be finite, got {snr_db}")));
    }
    let ps = signal_power(signal)?;
    let pn = signal_power(noise)?;
    if ps == 0.0 {
        return Err(Error::invalid("signal has zero power"));
    }
    if pn == 0.0 {
        return Err(Error::invalid("noise has zero power"));
    }
    Ok((ps / (pn * 10f64.powf(snr_db / 10.0))).sqrt())
}

pub fn mix_at_snr(signal: &AudioBuffer, noise: &AudioBuffer, snr_db: f64) -> Result<AudioBuffer> {
    if signal.len() != noise.len() {
        return Err(Error::invalid(format!(
            "length mismatch: signal {} vs noise {}",
            signal.len(),
            noise.len()
        )));
    }
    if signal.sample_rate != noise.sample_rate {
        return Err(Error::invalid(format!(
            "sample rate mismatch: signal {} vs noise {}",
            signal.sample_rate, noise.sample_rate
        )));
    }
    let g = snr_gain(signal, noise, snr_db)?;
    Ok(AudioBuffer {
        samples: signal
            .samples
            .iter()
            .zip(&noise.samples)
            .map(|(s, n)| s + g * n)
            .collect(),
        sample_rate: signal.sample_rate,
    })
}

/// `10 log10(P_signal / P_noise)`.
pub fn measured_snr_db(signal: &AudioBuffer, noise: &AudioBuffer) -> Result<f64> {
    Ok(10.0 * (signal_power(signal)? / signal_power(noise)?).log10())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub noise_paths: Vec<PathBuf>,
    pub snr_db: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.noise_paths.is_empty() {
            return Err(Error::invalid("noise spec lists no noise files"));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::invalid(format!(
                "SNR must be finite, got {}",
                self.snr_db
            )));
        }
        Ok(())
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Random stream owned by one utterance; the noise choice and crop offset
/// depend only on the seed and the id.
pub fn utterance_rng(seed: u64, utterance_id: &str) -> ChaCha8Rng {
    draw_rng(seed, fnv1a(utterance_id.as_bytes()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyUtterance {
    pub audio: AudioBuffer,
    pub noise_index: usize,
    pub gain: f64,
}

/// Picks one of `noises` uniformly, fits it to the signal and mixes.
pub fn add_noise(
    signal: &AudioBuffer,
    noises: &[AudioBuffer],
    snr_db: f64,
    seed: u64,
    utterance_id: &str,
) -> Result<NoisyUtterance> {
    if noises.is_empty() {
        return Err(Error::invalid("no noise buffers"));
    }
    let mut rng = utterance_rng(seed, utterance_id);
    let noise_index = rng.gen_range(0..noises.len());
    let noise = fit_length(&noises[noise_index], signal.len(), &mut rng)?;
    let gain = snr_gain(signal, &noise, snr_db)?;
    let audio = mix_at_snr(signal, &noise, snr_db)?;
    Ok(NoisyUtterance {
        audio,
        noise_index,
        gain,
    })
}
