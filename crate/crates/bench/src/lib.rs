//! Shared inputs for the benchmarks.

use kws_core::{Matrix, Waveform};

/// One second at 16 kHz: two tones plus a deterministic pseudo-noise term.
pub fn test_wave() -> Waveform {
    let samples = (0..16_000)
        .map(|i| {
            let t = i as f64 / 16_000.0;
            let tau = std::f64::consts::TAU;
            0.3 * (tau * 440.0 * t).sin() + 0.1 * (tau * 1870.0 * t).sin() + 0.02 * ((i * 7919) % 101) as f64 / 101.0
        })
        .collect();
    Waveform::new(samples, 16_000)
}

/// Smooth but non-constant `rows × cols` matrix.
pub fn test_matrix(rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|i| ((i as f64) * 0.618_034).sin()).collect(),
    )
}
