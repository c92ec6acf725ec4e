//! Perceptual linear prediction, with and without RASTA filtering of the
//! critical-band trajectories.
//!
//! Per frame: power spectrum → trapezoidal critical-band integration at
//! 1-bark spacing → (RASTA: log, band-pass in time, exp) → equal-loudness
//! weighting → cube-root compression → autocorrelation by inverse DFT →
//! Levinson-Durbin AR fit → cepstral recursion.

use std::f64::consts::PI;
use std::sync::OnceLock;

use super::{config_fingerprint, FeatureError, FeatureKind, FeatureMatrix, FrontEndConfig};
use crate::dsp::Waveform;
use crate::matrix::Matrix;

pub fn hz_to_bark(f_hz: f64) -> f64 {
    6.0 * (f_hz / 600.0).asinh()
}

pub fn bark_to_hz(z: f64) -> f64 {
    600.0 * (z / 6.0).sinh()
}

/// Critical-band masking curve as a function of the distance from the band
/// centre in bark.
fn critical_band_weight(dz: f64) -> f64 {
    if !(-1.3..=2.5).contains(&dz) {
        0.0
    } else if dz < -0.5 {
        10f64.powf(2.5 * (dz + 0.5))
    } else if dz <= 0.5 {
        1.0
    } else {
        10f64.powf(-(dz - 0.5))
    }
}

/// Equal-loudness pre-emphasis at angular frequency `omega` (rad/s).
fn equal_loudness(omega: f64) -> f64 {
    let w2 = omega * omega;
    (w2 + 56.8e6) * w2 * w2 / ((w2 + 6.3e6).powi(2) * (w2 + 0.38e9))
}

struct BarkFilterbank {
    weights: Matrix,
    loudness: Vec<f64>,
}

impl BarkFilterbank {
    fn new(nfft: usize, sample_rate: u32) -> Self {
        let nyquist_bark = hz_to_bark(sample_rate as f64 / 2.0);
        let num_bands = nyquist_bark.floor() as usize + 1;
        let bins = nfft / 2 + 1;
        let bin_hz = sample_rate as f64 / nfft as f64;
        let mut weights = Matrix::zeros(num_bands, bins);
        for band in 0..num_bands {
            for b in 0..bins {
                weights.set(band, b, critical_band_weight(hz_to_bark(b as f64 * bin_hz) - band as f64));
            }
        }
        let loudness = (0..num_bands)
            .map(|band| equal_loudness(2.0 * PI * bark_to_hz(band as f64)))
            .collect();
        Self { weights, loudness }
    }

    fn num_bands(&self) -> usize {
        self.weights.rows()
    }

    fn integrate(&self, power_row: &[f64], floor: f64) -> Vec<f64> {
        self.weights
            .iter_rows()
            .map(|w| w.iter().zip(power_row).map(|(a, p)| a * p).sum::<f64>().max(floor))
            .collect()
    }
}

fn rasta_gain() -> f64 {
    static GAIN: OnceLock<f64> = OnceLock::new();
    *GAIN.get_or_init(|| {
        let peak = (0..=4096)
            .map(|i| {
                let w = PI * i as f64 / 4096.0;
                let (mut re, mut im) = (0.0, 0.0);
                for (n, b) in RASTA_NUMERATOR.iter().enumerate() {
                    re += b * (w * n as f64).cos();
                    im -= b * (w * n as f64).sin();
                }
                let (dre, dim) = (1.0 - RASTA_POLE * w.cos(), RASTA_POLE * w.sin());
                ((re * re + im * im) / (dre * dre + dim * dim)).sqrt()
            })
            .fold(0.0, f64::max);
        1.0 / peak
    })
}

const RASTA_NUMERATOR: [f64; 5] = [2.0, 1.0, 0.0, -1.0, -2.0];
const RASTA_POLE: f64 = 0.94;

/// RASTA band-pass over one band's log-energy trajectory.
///
/// The FIR section needs four frames of history, so the first four outputs
/// are zero and the recursion starts from a zero output state. A constant
/// trajectory therefore maps to zero from the start.
pub fn rasta_filter(trajectory: &[f64]) -> Vec<f64> {
    let g = rasta_gain();
    let mut out = vec![0.0; trajectory.len()];
    let mut prev = 0.0;
    for n in 4..trajectory.len() {
        let fir: f64 = RASTA_NUMERATOR
            .iter()
            .enumerate()
            .map(|(j, b)| b * trajectory[n - j])
            .sum();
        prev = g * fir + RASTA_POLE * prev;
        out[n] = prev;
    }
    out
}

/// Cube-root-compressed, loudness-weighted critical-band spectrum, one row
/// per frame. This is the spectrum the AR model is fitted to.
pub fn auditory_spectrum(wave: &Waveform, cfg: &FrontEndConfig, rasta: bool) -> Result<Matrix, FeatureError> {
    let spec = cfg.power_frames(wave)?;
    let fb = BarkFilterbank::new(cfg.nfft, wave.sample_rate);
    let bands = fb.num_bands();
    if bands < 3 {
        return Err(FeatureError::InvalidConfig(format!(
            "sample rate {} Hz gives only {bands} critical bands",
            wave.sample_rate
        )));
    }
    let mut energies = Matrix::from_rows(
        &spec.rows().map(|row| fb.integrate(row, cfg.log_floor)).collect::<Vec<_>>(),
    );
    if rasta {
        let frames = energies.rows();
        for band in 0..bands {
            let traj: Vec<f64> = (0..frames).map(|t| energies.get(t, band).ln()).collect();
            for (t, v) in rasta_filter(&traj).into_iter().enumerate() {
                energies.set(t, band, v.exp());
            }
        }
    }
    for t in 0..energies.rows() {
        let row = energies.row_mut(t);
        for (v, eql) in row.iter_mut().zip(&fb.loudness) {
            *v = (*v * eql).cbrt();
        }
        // The outermost bands are unreliable (zero loudness weight at DC,
        // truncated at Nyquist); copy their neighbours.
        row[0] = row[1];
        row[bands - 1] = row[bands - 2];
    }
    Ok(energies)
}

/// Autocorrelation lags `0..=max_lag` of the even extension of a sampled
/// one-sided spectrum.
fn autocorrelation(spectrum: &[f64], max_lag: usize) -> Vec<f64> {
    let m = spectrum.len();
    let half = (m - 1) as f64;
    let len = 2.0 * half;
    (0..=max_lag)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let mut acc = spectrum[0] + sign * spectrum[m - 1];
            for (j, s) in spectrum.iter().enumerate().take(m - 1).skip(1) {
                acc += 2.0 * s * (PI * (j * k) as f64 / half).cos();
            }
            acc / len
        })
        .collect()
}

/// All-pole model `1 / A(z)` with `A(z) = 1 + Σ a_k z^{-k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpcModel {
    /// `a_1 … a_p`.
    pub coeffs: Vec<f64>,
    /// Final prediction error power.
    pub error: f64,
}

/// Solves the Toeplitz normal equations for an order-`order` predictor.
/// Returns `None` when the autocorrelation is not positive definite.
pub fn levinson_durbin(r: &[f64], order: usize) -> Option<LpcModel> {
    if r.len() <= order || !(r[0] > 0.0) || r.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r[0];
    for i in 1..=order {
        let acc: f64 = (0..i).map(|j| a[j] * r[i - j]).sum();
        let k = -acc / err;
        if !(k.abs() < 1.0) {
            return None;
        }
        let prev = a.clone();
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
    }
    (err > 0.0).then(|| LpcModel {
        coeffs: a[1..].to_vec(),
        error: err,
    })
}

/// Cepstrum of the all-pole model: `c_0 = ln(error)`, then the standard
/// recursion `c_n = −a_n − Σ_{k<n} (k/n) c_k a_{n−k}`.
pub fn lpc_to_cepstrum(model: &LpcModel, num_ceps: usize) -> Vec<f64> {
    let p = model.coeffs.len();
    let a = |i: usize| if (1..=p).contains(&i) { model.coeffs[i - 1] } else { 0.0 };
    let mut c = vec![0.0; num_ceps];
    if num_ceps == 0 {
        return c;
    }
    c[0] = model.error.ln();
    for n in 1..num_ceps {
        let mut acc = -a(n);
        for k in 1..n {
            acc -= (k as f64 / n as f64) * c[k] * a(n - k);
        }
        c[n] = acc;
    }
    c
}

fn cepstra_from_auditory(row: &[f64], num_ceps: usize, floor: f64) -> Vec<f64> {
    let order = num_ceps - 1;
    let model = levinson_durbin(&autocorrelation(row, order), order).unwrap_or_else(|| {
        // Degenerate frame: fall back to a flat floor-level spectrum.
        let flat = vec![floor.cbrt(); row.len()];
        levinson_durbin(&autocorrelation(&flat, order), order).expect("flat spectrum is positive definite")
    });
    lpc_to_cepstrum(&model, num_ceps)
}

fn plp_features(wave: &Waveform, cfg: &FrontEndConfig, rasta: bool) -> Result<FeatureMatrix, FeatureError> {
    let aud = auditory_spectrum(wave, cfg, rasta)?;
    if cfg.num_cepstra > 2 * (aud.cols() - 1) {
        return Err(FeatureError::InvalidConfig(format!(
            "AR order {} too high for {} critical bands",
            cfg.num_cepstra - 1,
            aud.cols()
        )));
    }
    let rows: Vec<Vec<f64>> = aud
        .iter_rows()
        .map(|row| cepstra_from_auditory(row, cfg.num_cepstra, cfg.log_floor))
        .collect();
    let kind = if rasta { FeatureKind::RastaPlp } else { FeatureKind::Plp };
    Ok(FeatureMatrix::new(kind, Matrix::from_rows(&rows), config_fingerprint(kind, cfg)))
}

pub fn plp(wave: &Waveform, cfg: &FrontEndConfig) -> Result<FeatureMatrix, FeatureError> {
    plp_features(wave, cfg, false)
}

pub fn rasta_plp(wave: &Waveform, cfg: &FrontEndConfig) -> Result<FeatureMatrix, FeatureError> {
    plp_features(wave, cfg, true)
}
