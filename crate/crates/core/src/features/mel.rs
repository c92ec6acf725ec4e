use super::{config_fingerprint, FeatureError, FeatureKind, FeatureMatrix, FrontEndConfig};
use crate::dsp::{SpectrumMatrix, Waveform};
use crate::matrix::Matrix;

/// `2595 · log10(1 + f/700)`.
pub fn hz_to_mel(f_hz: f64) -> Result<f64, FeatureError> {
    if f_hz < 0.0 || f_hz.is_nan() {
        return Err(FeatureError::BadFrequency(f_hz));
    }
    Ok(2595.0 * (1.0 + f_hz / 700.0).log10())
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters over the one-sided power spectrum, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Matrix,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn num_filters(&self) -> usize {
        self.weights.rows()
    }

    /// Filter energies for one power-spectrum row.
    pub fn apply(&self, power_row: &[f64]) -> Vec<f64> {
        self.weights
            .iter_rows()
            .map(|w| w.iter().zip(power_row).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Filters with centres equally spaced on the mel scale between 0 Hz and
/// Nyquist. Each filter rises linearly from the previous centre to its own
/// and falls to the next.
pub fn mel_filterbank(num_mel: usize, nfft: usize, sample_rate: u32) -> Result<MelFilterbank, FeatureError> {
    if num_mel == 0 || nfft < 2 || sample_rate == 0 {
        return Err(FeatureError::InvalidConfig(
            "mel filterbank needs num_mel >= 1, nfft >= 2 and a positive sample rate".into(),
        ));
    }
    let nyquist = sample_rate as f64 / 2.0;
    let top = hz_to_mel(nyquist)?;
    let edges: Vec<f64> = (0..num_mel + 2)
        .map(|i| mel_to_hz(top * i as f64 / (num_mel + 1) as f64))
        .collect();
    let bins = nfft / 2 + 1;
    let bin_hz = sample_rate as f64 / nfft as f64;
    let mut weights = Matrix::zeros(num_mel, bins);
    for m in 0..num_mel {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for b in 0..bins {
            let f = b as f64 * bin_hz;
            let w = ((f - lo) / (mid - lo)).min((hi - f) / (hi - mid));
            if w > 0.0 {
                weights.set(m, b, w);
            }
        }
        if weights.row(m).iter().all(|&w| w == 0.0) {
            return Err(FeatureError::DegenerateFilter { index: m });
        }
    }
    Ok(MelFilterbank {
        weights,
        centers_hz: edges[1..=num_mel].to_vec(),
    })
}

pub(crate) fn log_mel_rows(spec: &SpectrumMatrix, fb: &MelFilterbank, floor: f64) -> Matrix {
    let rows: Vec<Vec<f64>> = spec
        .rows()
        .map(|row| fb.apply(row).into_iter().map(|e| e.max(floor).ln()).collect())
        .collect();
    Matrix::from_vec(spec.num_frames(), fb.num_filters(), rows.concat())
}

/// Log mel-filterbank energies, `T × num_mel`.
pub fn mel_spectrogram(wave: &Waveform, cfg: &FrontEndConfig) -> Result<FeatureMatrix, FeatureError> {
    let spec = cfg.power_frames(wave)?;
    let fb = mel_filterbank(cfg.num_mel, cfg.nfft, wave.sample_rate)?;
    Ok(FeatureMatrix::new(
        FeatureKind::MelSpec,
        log_mel_rows(&spec, &fb, cfg.log_floor),
        config_fingerprint(FeatureKind::MelSpec, cfg),
    ))
}
