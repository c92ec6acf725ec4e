use std::f64::consts::PI;

use super::mel::{log_mel_rows, mel_filterbank};
use super::{config_fingerprint, FeatureError, FeatureKind, FeatureMatrix, FrontEndConfig};
use crate::dsp::Waveform;
use crate::matrix::Matrix;

/// Orthonormal DCT-II basis, `num_out × len`.
fn dct_basis(len: usize, num_out: usize) -> Matrix {
    let mut basis = Matrix::zeros(num_out, len);
    let n = len as f64;
    for k in 0..num_out {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        for i in 0..len {
            basis.set(k, i, scale * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos());
        }
    }
    basis
}

/// First `num_out` coefficients of the orthonormal DCT-II of `x`.
pub fn dct2_orthonormal(x: &[f64], num_out: usize) -> Vec<f64> {
    let basis = dct_basis(x.len(), num_out);
    basis
        .iter_rows()
        .map(|b| b.iter().zip(x).map(|(a, v)| a * v).sum())
        .collect()
}

/// Cepstra from the log-mel spectrogram; with `with_deltas`, Δ and ΔΔ are
/// appended for `3 · num_cepstra` columns.
pub fn mfcc(wave: &Waveform, cfg: &FrontEndConfig, with_deltas: bool) -> Result<FeatureMatrix, FeatureError> {
    let spec = cfg.power_frames(wave)?;
    let fb = mel_filterbank(cfg.num_mel, cfg.nfft, wave.sample_rate)?;
    let log_mel = log_mel_rows(&spec, &fb, cfg.log_floor);
    let basis = dct_basis(cfg.num_mel, cfg.num_cepstra);
    let mut data = Vec::with_capacity(log_mel.rows() * cfg.num_cepstra);
    for row in log_mel.iter_rows() {
        data.extend(basis.iter_rows().map(|b| b.iter().zip(row).map(|(a, v)| a * v).sum::<f64>()));
    }
    let ceps = Matrix::from_vec(log_mel.rows(), cfg.num_cepstra, data);
    let (kind, out) = if with_deltas {
        let d1 = delta(&ceps, cfg.delta_window, 1);
        let d2 = delta(&d1, cfg.delta_window, 1);
        (FeatureKind::MfccDeltas, Matrix::hstack(&[&ceps, &d1, &d2]))
    } else {
        (FeatureKind::Mfcc, ceps)
    };
    Ok(FeatureMatrix::new(kind, out, config_fingerprint(kind, cfg)))
}

/// Regression delta `Σ_j j·(x[t+j] − x[t−j]) / (2 Σ_j j²)` over `j = 1..=half_width`,
/// with out-of-range frames clamped to the first/last frame. `order` 2 applies
/// the operator twice.
pub fn delta(feat: &Matrix, half_width: usize, order: usize) -> Matrix {
    let mut out = feat.clone();
    for _ in 0..order {
        out = delta_once(&out, half_width);
    }
    out
}

fn delta_once(x: &Matrix, half_width: usize) -> Matrix {
    let (t_len, d) = x.shape();
    if t_len == 0 || half_width == 0 {
        return Matrix::zeros(t_len, d);
    }
    let denom: f64 = 2.0 * (1..=half_width).map(|j| (j * j) as f64).sum::<f64>();
    let last = t_len as isize - 1;
    let at = |t: isize| x.row(t.clamp(0, last) as usize);
    let mut out = Matrix::zeros(t_len, d);
    for t in 0..t_len as isize {
        let row = out.row_mut(t as usize);
        for j in 1..=half_width as isize {
            let (fwd, back) = (at(t + j), at(t - j));
            for c in 0..d {
                row[c] += j as f64 * (fwd[c] - back[c]);
            }
        }
        row.iter_mut().for_each(|v| *v /= denom);
    }
    out
}
