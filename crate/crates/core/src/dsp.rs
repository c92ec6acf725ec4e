//! Short-time signal processing shared by every front-end: pre-emphasis,
//! framing, Hamming windowing and the per-frame power spectrum.
//!
//! All functions are pure; filter banks and windows built here can be shared
//! read-only between threads.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("signal is empty")]
    EmptySignal,
    #[error("signal has {got} samples but a frame needs {needed}")]
    InsufficientSamples { got: usize, needed: usize },
    #[error("fft size {nfft} must be a power of two no smaller than the frame length {frame_len}")]
    BadFftSize { nfft: usize, frame_len: usize },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

/// Mono audio with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Number of samples spanning `ms` milliseconds, rounded to nearest.
    pub fn ms_to_samples(&self, ms: f64) -> usize {
        (ms * self.sample_rate as f64 / 1000.0).round() as usize
    }
}

/// `T × frame_len` block of overlapping analysis frames, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    data: Vec<f64>,
    frame_len: usize,
    hop: usize,
}

impl FrameMatrix {
    /// Builds a frame matrix from raw rows. Used mostly by tests and the
    /// PLP path, which re-frames already windowed data.
    pub fn from_rows(rows: &[Vec<f64>], hop: usize) -> Result<Self, DspError> {
        let frame_len = rows.first().map(Vec::len).unwrap_or(0);
        if frame_len == 0 || rows.iter().any(|r| r.len() != frame_len) {
            return Err(DspError::BadParameter(
                "rows must be non-empty and equally long".into(),
            ));
        }
        Ok(Self {
            data: rows.concat(),
            frame_len,
            hop,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.data.len() / self.frame_len
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.frame_len..(t + 1) * self.frame_len]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.frame_len)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// `T × (nfft/2 + 1)` power spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumMatrix {
    power: Vec<f64>,
    nfft: usize,
}

impl SpectrumMatrix {
    pub fn nfft(&self) -> usize {
        self.nfft
    }

    pub fn num_bins(&self) -> usize {
        self.nfft / 2 + 1
    }

    pub fn num_frames(&self) -> usize {
        self.power.len() / self.num_bins()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let nb = self.num_bins();
        &self.power[t * nb..(t + 1) * nb]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.power.chunks_exact(self.num_bins())
    }
}

/// First-order pre-emphasis `y[t] = x[t] - alpha * x[t-1]`, with `y[0] = x[0]`.
pub fn pre_emphasize(wave: &Waveform, alpha: f64) -> Result<Waveform, DspError> {
    if wave.is_empty() {
        return Err(DspError::EmptySignal);
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(DspError::BadParameter(format!(
            "pre-emphasis factor {alpha} outside [0, 1)"
        )));
    }
    let x = &wave.samples;
    let mut out = Vec::with_capacity(x.len());
    out.push(x[0]);
    out.extend(x.windows(2).map(|w| w[1] - alpha * w[0]));
    Ok(Waveform::new(out, wave.sample_rate))
}

/// Splits the signal into frames of `frame_len` samples every `hop` samples.
/// A trailing partial frame is dropped.
pub fn frame_signal(wave: &Waveform, frame_len: usize, hop: usize) -> Result<FrameMatrix, DspError> {
    if frame_len == 0 || hop == 0 || hop > frame_len {
        return Err(DspError::BadParameter(format!(
            "need frame_len >= 1 and 1 <= hop <= frame_len (got {frame_len}, {hop})"
        )));
    }
    let n = wave.len();
    if n < frame_len {
        return Err(DspError::InsufficientSamples {
            got: n,
            needed: frame_len,
        });
    }
    let count = (n - frame_len) / hop + 1;
    let mut data = Vec::with_capacity(count * frame_len);
    for t in 0..count {
        data.extend_from_slice(&wave.samples[t * hop..t * hop + frame_len]);
    }
    Ok(FrameMatrix {
        data,
        frame_len,
        hop,
    })
}

/// Symmetric Hamming window `0.54 - 0.46 cos(2πn/(L-1))`.
pub fn hamming_window(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / denom).cos())
        .collect()
}

pub fn apply_hamming(frames: &FrameMatrix) -> FrameMatrix {
    let window = hamming_window(frames.frame_len);
    let data = frames
        .rows()
        .flat_map(|row| row.iter().zip(&window).map(|(x, w)| x * w))
        .collect();
    FrameMatrix {
        data,
        frame_len: frames.frame_len,
        hop: frames.hop,
    }
}

/// `|DFT_nfft(frame)|²` for bins `0..=nfft/2`, zero-padding each frame.
pub fn power_spectrum(frames: &FrameMatrix, nfft: usize) -> Result<SpectrumMatrix, DspError> {
    if !nfft.is_power_of_two() || nfft < frames.frame_len {
        return Err(DspError::BadFftSize {
            nfft,
            frame_len: frames.frame_len,
        });
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(nfft);
    let bins = nfft / 2 + 1;
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut power = Vec::with_capacity(frames.num_frames() * bins);
    for row in frames.rows() {
        for (slot, &x) in buf.iter_mut().zip(row.iter().chain(std::iter::repeat(&0.0))) {
            *slot = Complex::new(x, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        power.extend(buf[..bins].iter().map(|c| c.norm_sqr()));
    }
    Ok(SpectrumMatrix { power, nfft })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_wave(n: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), 16000)
    }

    fn naive_dft_power(frame: &[f64], nfft: usize) -> Vec<f64> {
        (0..=nfft / 2)
            .map(|b| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, &x) in frame.iter().enumerate() {
                    let ang = -2.0 * PI * (b * n) as f64 / nfft as f64;
                    re += x * ang.cos();
                    im += x * ang.sin();
                }
                re * re + im * im
            })
            .collect()
    }

    #[test]
    fn pre_emphasis_formula() {
        let w = Waveform::new(vec![1.0, 1.0, 1.0], 16000);
        let y = pre_emphasize(&w, 0.97).unwrap();
        assert_eq!(y.samples[0], 1.0);
        assert!((y.samples[1] - 0.03).abs() < 1e-12);
        assert!((y.samples[2] - 0.03).abs() < 1e-12);
    }

    #[test]
    fn pre_emphasis_identity_and_oracle() {
        let w = random_wave(100, 1);
        assert_eq!(pre_emphasize(&w, 0.0).unwrap(), w);
        let y = pre_emphasize(&w, 0.97).unwrap();
        let mut expect = vec![w.samples[0]];
        for t in 1..100 {
            expect.push(w.samples[t] - 0.97 * w.samples[t - 1]);
        }
        assert_eq!(y.samples, expect);
    }

    #[test]
    fn pre_emphasis_rejects_empty() {
        let w = Waveform::new(vec![], 16000);
        assert_eq!(pre_emphasize(&w, 0.97), Err(DspError::EmptySignal));
    }

    #[test]
    fn frame_counts() {
        assert_eq!(frame_signal(&random_wave(16000, 2), 400, 160).unwrap().num_frames(), 98);
        let w = random_wave(400, 3);
        let f = frame_signal(&w, 400, 160).unwrap();
        assert_eq!(f.num_frames(), 1);
        assert_eq!(f.frame(0), &w.samples[..]);
        assert_eq!(
            frame_signal(&random_wave(399, 4), 400, 160),
            Err(DspError::InsufficientSamples { got: 399, needed: 400 })
        );
    }

    #[test]
    fn non_overlapping_frames_reconstruct_prefix() {
        let w = random_wave(1037, 5);
        let f = frame_signal(&w, 100, 100).unwrap();
        assert_eq!(f.as_slice(), &w.samples[..1000]);
    }

    #[test]
    fn hamming_endpoints_and_oracle() {
        for len in [2, 3, 400, 401] {
            let w = hamming_window(len);
            assert!((w[0] - 0.08).abs() < 1e-12);
            assert!((w[len - 1] - 0.08).abs() < 1e-12);
        }
        let ones = FrameMatrix::from_rows(&[vec![1.0; 400]], 160).unwrap();
        assert_eq!(apply_hamming(&ones).frame(0), &hamming_window(400)[..]);

        let w = random_wave(400, 6);
        let frames = frame_signal(&w, 400, 160).unwrap();
        let out = apply_hamming(&frames);
        for n in 0..400 {
            let coef = 0.54 - 0.46 * (2.0 * PI * n as f64 / 399.0).cos();
            assert!((out.frame(0)[n] - w.samples[n] * coef).abs() < 1e-15);
        }
    }

    #[test]
    fn power_spectrum_zero_and_peak() {
        let zero = FrameMatrix::from_rows(&[vec![0.0; 400]], 160).unwrap();
        assert!(power_spectrum(&zero, 512).unwrap().row(0).iter().all(|&p| p == 0.0));

        let b0 = 37;
        let cos: Vec<f64> = (0..512)
            .map(|n| (2.0 * PI * (b0 * n) as f64 / 512.0).cos())
            .collect();
        let frames = FrameMatrix::from_rows(std::slice::from_ref(&cos), 512).unwrap();
        let row = power_spectrum(&frames, 512).unwrap().row(0).to_vec();
        let argmax = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax, b0);
        let oracle = naive_dft_power(&cos, 512);
        assert_eq!(oracle.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0, b0);
    }

    #[test]
    fn power_spectrum_matches_naive_dft_and_parseval() {
        for seed in 0..5 {
            let w = random_wave(400, 10 + seed);
            let frames = frame_signal(&w, 400, 160).unwrap();
            let spec = power_spectrum(&frames, 512).unwrap();
            let row = spec.row(0);
            let oracle = naive_dft_power(&w.samples, 512);
            for (a, b) in row.iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-3), "{a} vs {b}");
            }
            // Parseval over the full (two-sided) spectrum.
            let full: f64 = row[0] + row[256] + 2.0 * row[1..256].iter().sum::<f64>();
            let energy: f64 = w.samples.iter().map(|x| x * x).sum();
            assert!((full - 512.0 * energy).abs() < 1e-8 * full);
        }
    }

    #[test]
    fn power_spectrum_sign_invariant() {
        let w = random_wave(400, 20);
        let neg = Waveform::new(w.samples.iter().map(|x| -x).collect(), 16000);
        let a = power_spectrum(&frame_signal(&w, 400, 160).unwrap(), 512).unwrap();
        let b = power_spectrum(&frame_signal(&neg, 400, 160).unwrap(), 512).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_fft_size() {
        let f = FrameMatrix::from_rows(&[vec![0.0; 400]], 160).unwrap();
        assert!(matches!(power_spectrum(&f, 256), Err(DspError::BadFftSize { .. })));
        assert!(matches!(power_spectrum(&f, 500), Err(DspError::BadFftSize { .. })));
    }
}
