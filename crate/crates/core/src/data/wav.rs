//! 16-bit PCM mono WAV via `hound`.

use std::fs::File;
use std::io::{BufReader, Cursor};
use std::path::Path;

use hound::{SampleFormat, WavSpec};

use super::DataError;
use crate::dsp::Waveform;
use crate::io_util::write_atomic;

pub const SAMPLE_RATE: u32 = 16_000;

/// Reads a 16 kHz mono 16-bit PCM file, scaling samples by 1/32768.
pub fn read_wav(path: &Path) -> Result<Waveform, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    // Once the file is open, read failures mean a short or garbled header.
    let reader = hound::WavReader::new(BufReader::new(file)).map_err(|e| DataError::Format {
        path: path.into(),
        msg: e.to_string(),
    })?;
    let spec = reader.spec();
    let unsupported = |field, msg: String| DataError::UnsupportedFormat {
        path: path.into(),
        field,
        msg,
    };
    if spec.sample_format != SampleFormat::Int {
        return Err(unsupported("sample format", "floating-point samples; expected integer PCM".into()));
    }
    if spec.bits_per_sample != 16 {
        return Err(unsupported("bits per sample", format!("{}; expected 16", spec.bits_per_sample)));
    }
    if spec.channels != 1 {
        return Err(unsupported("channels", format!("{}; expected mono", spec.channels)));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(unsupported("sample rate", format!("{} Hz; expected {SAMPLE_RATE} Hz", spec.sample_rate)));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| DataError::Format {
            path: path.into(),
            msg: e.to_string(),
        })?;
    Ok(Waveform::new(samples, SAMPLE_RATE))
}

/// Encodes samples as 16-bit PCM: `round(x·32768)` clamped to the `i16` range.
pub fn encode_wav(wave: &Waveform) -> Vec<u8> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut buf = Cursor::new(Vec::new());
    {
        let mut w = hound::WavWriter::new(&mut buf, spec).expect("in-memory writer");
        for &s in &wave.samples {
            let v = (s * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
            w.write_sample(v).expect("in-memory write");
        }
        w.finalize().expect("in-memory finalize");
    }
    buf.into_inner()
}

pub fn write_wav(path: &Path, wave: &Waveform) -> Result<(), DataError> {
    write_atomic(path, &encode_wav(wave)).map_err(|e| DataError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Minimal RIFF writer independent of `hound`.
    fn riff(samples: &[i16], channels: u16, rate: u32) -> Vec<u8> {
        let data_len = (samples.len() * 2) as u32;
        let mut b = Vec::new();
        b.extend_from_slice(b"RIFF");
        b.extend_from_slice(&(36 + data_len).to_le_bytes());
        b.extend_from_slice(b"WAVEfmt ");
        b.extend_from_slice(&16u32.to_le_bytes());
        b.extend_from_slice(&1u16.to_le_bytes());
        b.extend_from_slice(&channels.to_le_bytes());
        b.extend_from_slice(&rate.to_le_bytes());
        b.extend_from_slice(&(rate * 2 * channels as u32).to_le_bytes());
        b.extend_from_slice(&(2 * channels).to_le_bytes());
        b.extend_from_slice(&16u16.to_le_bytes());
        b.extend_from_slice(b"data");
        b.extend_from_slice(&data_len.to_le_bytes());
        for s in samples {
            b.extend_from_slice(&s.to_le_bytes());
        }
        b
    }

    #[test]
    fn scales_samples() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        std::fs::write(&p, riff(&[0, 16384, -32768], 1, 16_000)).unwrap();
        assert_eq!(read_wav(&p).unwrap().samples, vec![0.0, 0.5, -1.0]);
    }

    #[test]
    fn rejects_stereo_and_other_rates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        std::fs::write(&p, riff(&[0, 0, 1, 1], 2, 16_000)).unwrap();
        let err = read_wav(&p).unwrap_err();
        assert!(matches!(err, DataError::UnsupportedFormat { field: "channels", .. }), "{err}");
        std::fs::write(&p, riff(&[0, 1], 1, 8_000)).unwrap();
        assert!(matches!(read_wav(&p), Err(DataError::UnsupportedFormat { field: "sample rate", .. })));
        std::fs::write(&p, b"RIFFjunk").unwrap();
        let err = read_wav(&p).unwrap_err();
        assert!(matches!(err, DataError::Format { .. }), "{err:?}");
        assert!(matches!(read_wav(&dir.path().join("missing.wav")), Err(DataError::Io { .. })));
    }

    #[test]
    fn independent_encoder_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let raw: Vec<i16> = (0..1000).map(|_| rng.random()).collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.wav");
        std::fs::write(&p, riff(&raw, 1, 16_000)).unwrap();
        let w = read_wav(&p).unwrap();
        let back: Vec<i16> = w.samples.iter().map(|s| (s * 32768.0) as i16).collect();
        assert_eq!(back, raw);
        // hound's encoding of the same samples is byte-identical to ours.
        assert_eq!(encode_wav(&w), riff(&raw, 1, 16_000));
        write_wav(&p, &w).unwrap();
        assert_eq!(read_wav(&p).unwrap(), w);
    }
}
