//! Deterministic synthetic keyword audio. Each character of a keyword is a
//! short two-tone segment taken from `assets/char_tones.txt`, so whether an
//! utterance matches a text is decidable from the audio alone.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::manifest::{save_manifest, Example, Manifest};
use super::text::{tokenize, ALPHABET};
use super::wav::{write_wav, SAMPLE_RATE};
use super::DataError;
use crate::dsp::Waveform;

/// The shipped character-to-tone table.
pub const CHAR_TONES: &str = include_str!("../../assets/char_tones.txt");

/// `(low_hz, high_hz)` per token index.
pub fn char_tone_table() -> &'static [(f64, f64)] {
    static TABLE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let rows: Vec<(f64, f64)> = CHAR_TONES
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .map(|l| {
                let f: Vec<&str> = l.split_whitespace().collect();
                (f[1].parse().expect("low_hz"), f[2].parse().expect("high_hz"))
            })
            .collect();
        assert_eq!(rows.len(), ALPHABET.chars().count(), "tone table covers the alphabet");
        rows
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    /// Nominal duration of one character.
    pub segment_ms: f64,
    /// Peak amplitude of each of the two tones.
    pub tone_amplitude: f64,
    /// Raised-cosine ramp at both ends of every segment.
    pub ramp_ms: f64,
    /// Silence before and after the keyword.
    pub margin_ms: f64,
    pub snr_db: f64,
    /// Utterance tempo factor is drawn uniformly from `1 ± tempo_jitter`.
    pub tempo_jitter: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            segment_ms: 60.0,
            tone_amplitude: 0.25,
            ramp_ms: 5.0,
            margin_ms: 50.0,
            snr_db: 20.0,
            tempo_jitter: 0.1,
        }
    }
}

/// Renders `text` at the given tempo factor. With `noise` the utterance gets
/// white Gaussian noise at `params.snr_db` relative to its own power.
pub fn render_keyword(
    text: &str,
    params: &SynthParams,
    tempo: f64,
    noise: Option<&mut ChaCha8Rng>,
) -> Result<Waveform, DataError> {
    let tokens = tokenize(text)?;
    let table = char_tone_table();
    let sr = f64::from(SAMPLE_RATE);
    let seg = (params.segment_ms * tempo * sr / 1000.0).round() as usize;
    let ramp = ((params.ramp_ms * sr / 1000.0).round() as usize).min(seg / 2);
    let margin = (params.margin_ms * sr / 1000.0).round() as usize;
    let mut samples = vec![0.0; margin];
    for &tok in &tokens {
        let (lo, hi) = table[tok];
        for n in 0..seg {
            let t = n as f64 / sr;
            let edge = n.min(seg - 1 - n);
            let gain = if edge < ramp {
                0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            let s = (2.0 * PI * lo * t).sin() + (2.0 * PI * hi * t).sin();
            samples.push(gain * params.tone_amplitude * s);
        }
    }
    samples.extend(std::iter::repeat_n(0.0, margin));
    if let Some(rng) = noise {
        let power = samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64;
        let sigma = (power / 10f64.powf(params.snr_db / 10.0)).sqrt();
        let dist = Normal::new(0.0, sigma).map_err(|e| DataError::Invalid(e.to_string()))?;
        samples.iter_mut().for_each(|s| *s += dist.sample(rng));
    }
    Ok(Waveform::new(samples, SAMPLE_RATE))
}

fn file_stem(index: usize, keyword: &str) -> String {
    let clean: String = keyword
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    format!("{index:02}_{clean}")
}

/// Writes WAVs and `manifest.jsonl` into `out_dir` and returns the manifest.
///
/// Each keyword gets `per_keyword` positives (its own text) and
/// `round(per_keyword · negative_ratio)` negatives (its audio paired with a
/// different keyword's text). Examples are interleaved round-robin over
/// keywords, so any prefix of the manifest stays close to balanced.
pub fn synth_dataset(
    keywords: &[String],
    per_keyword: usize,
    negative_ratio: f64,
    seed: u64,
    out_dir: &Path,
    params: &SynthParams,
) -> Result<Manifest, DataError> {
    let keywords: Vec<String> = keywords.iter().map(|k| k.trim().to_lowercase()).collect();
    let mut distinct = keywords.clone();
    distinct.sort();
    distinct.dedup();
    if distinct.len() < 2 || distinct.len() != keywords.len() {
        return Err(DataError::Invalid(format!(
            "need at least 2 distinct keywords, got {keywords:?}"
        )));
    }
    for k in &keywords {
        tokenize(k)?;
    }
    if per_keyword == 0 || !(negative_ratio >= 0.0 && negative_ratio.is_finite()) {
        return Err(DataError::Invalid(format!(
            "per_keyword must be ≥ 1 and negative_ratio ≥ 0 (got {per_keyword}, {negative_ratio})"
        )));
    }
    fs::create_dir_all(out_dir).map_err(|e| DataError::io(out_dir, e))?;

    let n_neg = (per_keyword as f64 * negative_ratio).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::new();
    for j in 0..per_keyword.max(n_neg) {
        for (i, kw) in keywords.iter().enumerate() {
            for (positive, wanted) in [(true, per_keyword), (false, n_neg)] {
                if j >= wanted {
                    continue;
                }
                let tempo = 1.0 + rng.random_range(-params.tempo_jitter..=params.tempo_jitter);
                let wave = render_keyword(kw, params, tempo, Some(&mut rng))?;
                let text = if positive {
                    kw.clone()
                } else {
                    let other = (i + 1 + rng.random_range(0..keywords.len() - 1)) % keywords.len();
                    keywords[other].clone()
                };
                let tag = if positive { "pos" } else { "neg" };
                let path = out_dir.join(format!("{}_{j:04}_{tag}.wav", file_stem(i, kw)));
                write_wav(&path, &wave)?;
                examples.push(Example {
                    audio: path,
                    text,
                    label: u8::from(positive),
                    text_features: None,
                });
            }
        }
    }
    let manifest = Manifest { examples };
    save_manifest(&out_dir.join("manifest.jsonl"), &manifest)?;
    Ok(manifest)
}
