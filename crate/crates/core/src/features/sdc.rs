use super::{sdc_fingerprint, FeatureError, FeatureKind, FeatureMatrix, SdcConfig};
use crate::matrix::Matrix;

/// Shifted delta coefficients on a log-mel base.
///
/// Row `t` of the output is `[c(t), δ(t,0), …, δ(t,k−1)]` with
/// `δ(t,i) = c(t + ip + d) − c(t + ip − d)`; frame indices outside the
/// utterance are clamped to the first/last frame.
pub fn sdc(base: &FeatureMatrix, cfg: &SdcConfig) -> Result<FeatureMatrix, FeatureError> {
    if base.kind() != FeatureKind::MelSpec {
        return Err(FeatureError::ConfigMismatch(format!(
            "SDC is stacked on the mel spectrogram, got a {} base",
            base.kind()
        )));
    }
    let out = shifted_delta(base.matrix(), cfg)?;
    Ok(FeatureMatrix::new(
        FeatureKind::Sdc,
        out,
        sdc_fingerprint(base.fingerprint(), cfg),
    ))
}

/// Untagged form of [`sdc`] on any `T × n` matrix.
pub fn shifted_delta(base: &Matrix, cfg: &SdcConfig) -> Result<Matrix, FeatureError> {
    cfg.validate()?;
    let (t_len, n) = base.shape();
    if n != cfg.n {
        return Err(FeatureError::ConfigMismatch(format!(
            "base has {n} columns but SDC config {cfg} expects {}",
            cfg.n
        )));
    }
    let width = cfg.output_dim();
    let mut out = Matrix::zeros(t_len, width);
    if t_len == 0 {
        return Ok(out);
    }
    let last = t_len - 1;
    let clamp = |i: isize| i.clamp(0, last as isize) as usize;
    for t in 0..t_len {
        let row = out.row_mut(t);
        row[..n].copy_from_slice(base.row(t));
        for i in 0..cfg.k {
            let centre = (t + i * cfg.p) as isize;
            let ahead = base.row(clamp(centre + cfg.d as isize));
            let behind = base.row(clamp(centre - cfg.d as isize));
            let block = &mut row[(i + 1) * n..(i + 2) * n];
            for ((o, a), b) in block.iter_mut().zip(ahead).zip(behind) {
                *o = a - b;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FrontEndConfig;
    use crate::features::{config_fingerprint, mel_spectrogram};
    use crate::dsp::Waveform;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent triple loop over (t, i, c) with explicit clamping.
    fn oracle(base: &Matrix, n: usize, d: usize, p: usize, k: usize) -> Vec<Vec<f64>> {
        let t_len = base.rows() as i64;
        let c = |t: i64, j: usize| base.get(t.max(0).min(t_len - 1) as usize, j);
        let mut rows = Vec::new();
        for t in 0..t_len {
            let mut row = Vec::new();
            for j in 0..n {
                row.push(c(t, j));
            }
            for i in 0..k as i64 {
                for j in 0..n {
                    let plus = c(t + i * p as i64 + d as i64, j);
                    let minus = c(t + i * p as i64 - d as i64, j);
                    row.push(plus - minus);
                }
            }
            rows.push(row);
        }
        rows
    }

    #[test]
    fn default_width_is_360() {
        assert_eq!(SdcConfig::default().output_dim(), 360);
        let base = Matrix::zeros(30, 40);
        assert_eq!(shifted_delta(&base, &SdcConfig::default()).unwrap().cols(), 360);
    }

    #[test]
    fn ramp_gives_constant_interior_blocks() {
        let g: Vec<f64> = (0..8).map(|j| 0.5 + j as f64).collect();
        let base = Matrix::from_vec(60, 8, (0..60).flat_map(|t| g.iter().map(move |x| t as f64 * x)).collect());
        for d in 1..=3 {
            let cfg = SdcConfig::new(8, d, 3, 6).unwrap();
            let out = shifted_delta(&base, &cfg).unwrap();
            for t in d..60 {
                for i in 0..cfg.k {
                    if t + i * cfg.p + d >= 60 {
                        continue;
                    }
                    let block = &out.row(t)[(i + 1) * 8..(i + 2) * 8];
                    for (b, x) in block.iter().zip(&g) {
                        assert!((b - 2.0 * d as f64 * x).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn matches_triple_loop_oracle_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let base = Matrix::from_vec(30, 40, (0..1200).map(|_| rng.random_range(-5.0..5.0)).collect());
        for d in 1..=4 {
            for k in 5..=10 {
                let cfg = SdcConfig::new(40, d, 3, k).unwrap();
                let got = shifted_delta(&base, &cfg).unwrap();
                let want = oracle(&base, 40, d, 3, k);
                for (t, row) in want.iter().enumerate() {
                    assert_eq!(got.row(t), &row[..], "d={d} k={k} t={t}");
                }
            }
        }
    }

    #[test]
    fn rejects_wrong_width_and_non_mel_base() {
        let cfg = SdcConfig::default();
        assert!(matches!(
            shifted_delta(&Matrix::zeros(10, 13), &cfg),
            Err(FeatureError::ConfigMismatch(_))
        ));
        let wrong = FeatureMatrix::new(FeatureKind::Mfcc, Matrix::zeros(10, 40), 0);
        assert!(matches!(sdc(&wrong, &cfg), Err(FeatureError::ConfigMismatch(_))));
    }

    #[test]
    fn tagged_output_from_mel() {
        let fe = FrontEndConfig::default();
        let wave = Waveform::new(vec![0.1; 16000], 16000);
        let mel = mel_spectrogram(&wave, &fe).unwrap();
        assert_eq!(mel.fingerprint(), config_fingerprint(FeatureKind::MelSpec, &fe));
        let out = sdc(&mel, &SdcConfig::default()).unwrap();
        assert_eq!((out.num_frames(), out.dim(), out.kind()), (98, 360, FeatureKind::Sdc));
    }
}
