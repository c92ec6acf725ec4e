//! Spectral front-ends: log-mel spectrogram, MFCC (optionally with Δ/ΔΔ),
//! PLP, RASTA-PLP and shifted delta coefficients stacked on the log-mel base.

mod cepstral;
pub mod kwsf;
mod mel;
mod plp;
mod sdc;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dsp::{self, DspError, SpectrumMatrix, Waveform};
use crate::matrix::Matrix;

pub use cepstral::{dct2_orthonormal, delta, mfcc};
pub use mel::{hz_to_mel, mel_filterbank, mel_spectrogram, mel_to_hz, MelFilterbank};
pub use plp::{
    auditory_spectrum, bark_to_hz, hz_to_bark, levinson_durbin, lpc_to_cepstrum, plp,
    rasta_filter, rasta_plp, LpcModel,
};
pub use sdc::{sdc, shifted_delta};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("frequency {0} Hz is negative")]
    BadFrequency(f64),
    #[error("mel filter {index} covers no FFT bin; reduce num_mel or raise nfft")]
    DegenerateFilter { index: usize },
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Which front-end produced a [`FeatureMatrix`]. The discriminant is the
/// on-disk code used by the KWSF format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    #[serde(rename = "mel")]
    MelSpec = 0,
    Mfcc = 1,
    #[serde(rename = "mfcc-dd")]
    MfccDeltas = 2,
    Plp = 3,
    RastaPlp = 4,
    Sdc = 5,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 6] = [
        FeatureKind::MelSpec,
        FeatureKind::Mfcc,
        FeatureKind::MfccDeltas,
        FeatureKind::Plp,
        FeatureKind::RastaPlp,
        FeatureKind::Sdc,
    ];

    pub fn code(self) -> u16 {
        self as u16
    }

    pub fn from_code(code: u16) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::MelSpec => "mel",
            FeatureKind::Mfcc => "mfcc",
            FeatureKind::MfccDeltas => "mfcc-dd",
            FeatureKind::Plp => "plp",
            FeatureKind::RastaPlp => "rasta-plp",
            FeatureKind::Sdc => "sdc",
        }
    }

    /// Column count this kind produces under the given configuration.
    pub fn dim(self, cfg: &FrontEndConfig, sdc: &SdcConfig) -> usize {
        match self {
            FeatureKind::MelSpec => cfg.num_mel,
            FeatureKind::Mfcc | FeatureKind::Plp | FeatureKind::RastaPlp => cfg.num_cepstra,
            FeatureKind::MfccDeltas => 3 * cfg.num_cepstra,
            FeatureKind::Sdc => sdc.output_dim(),
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| FeatureError::InvalidConfig(format!("unknown feature kind '{s}'")))
    }
}

/// Short-time analysis parameters shared by every front-end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontEndConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub pre_emphasis: f64,
    pub nfft: usize,
    pub num_mel: usize,
    pub num_cepstra: usize,
    /// Floor applied to filter-bank energies before any logarithm.
    pub log_floor: f64,
    /// Half-width of the regression window used for Δ and ΔΔ.
    pub delta_window: usize,
}

impl Default for FrontEndConfig {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            hop_ms: 10.0,
            pre_emphasis: 0.97,
            nfft: 512,
            num_mel: 40,
            num_cepstra: 13,
            log_floor: 1e-10,
            delta_window: 2,
        }
    }
}

impl FrontEndConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: &str| Err(FeatureError::InvalidConfig(m.to_string()));
        if !(self.frame_ms > 0.0 && self.hop_ms > 0.0) {
            return bad("frame_ms and hop_ms must be positive");
        }
        if self.frame_ms <= self.hop_ms {
            return bad("frame_ms must exceed hop_ms");
        }
        if !(0.0..1.0).contains(&self.pre_emphasis) {
            return bad("pre_emphasis must lie in [0, 1)");
        }
        if self.nfft == 0 || !self.nfft.is_power_of_two() {
            return bad("nfft must be a positive power of two");
        }
        if self.num_mel == 0 || self.num_cepstra == 0 || self.delta_window == 0 {
            return bad("num_mel, num_cepstra and delta_window must be positive");
        }
        if self.num_cepstra > self.num_mel {
            return bad("num_cepstra cannot exceed num_mel");
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive");
        }
        Ok(())
    }

    pub fn frame_len(&self, sample_rate: u32) -> usize {
        (self.frame_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_len(&self, sample_rate: u32) -> usize {
        (self.hop_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    /// Frames produced for `num_samples` samples, or 0 when too short.
    pub fn num_frames(&self, num_samples: usize, sample_rate: u32) -> usize {
        let (len, hop) = (self.frame_len(sample_rate), self.hop_len(sample_rate));
        if num_samples < len {
            0
        } else {
            (num_samples - len) / hop + 1
        }
    }

    /// Pre-emphasis, framing, Hamming window and power spectrum.
    pub(crate) fn power_frames(&self, wave: &Waveform) -> Result<SpectrumMatrix, FeatureError> {
        self.validate()?;
        if wave.sample_rate == 0 {
            return Err(FeatureError::InvalidConfig("sample rate must be positive".into()));
        }
        let emphasized = dsp::pre_emphasize(wave, self.pre_emphasis)?;
        let frames = dsp::frame_signal(
            &emphasized,
            self.frame_len(wave.sample_rate),
            self.hop_len(wave.sample_rate),
        )?;
        Ok(dsp::power_spectrum(&dsp::apply_hamming(&frames), self.nfft)?)
    }
}

/// SDC parameters written `N-d-p-k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdcConfig {
    /// Base coefficients per frame.
    pub n: usize,
    /// Delay on either side of the delta centre.
    pub d: usize,
    /// Frame shift between consecutive delta blocks.
    pub p: usize,
    /// Number of stacked delta blocks.
    pub k: usize,
}

impl Default for SdcConfig {
    fn default() -> Self {
        Self { n: 40, d: 1, p: 3, k: 8 }
    }
}

impl SdcConfig {
    pub fn new(n: usize, d: usize, p: usize, k: usize) -> Result<Self, FeatureError> {
        let cfg = Self { n, d, p, k };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.n == 0 || self.d == 0 || self.p == 0 || self.k == 0 {
            return Err(FeatureError::InvalidConfig(format!(
                "SDC parameters must all be >= 1 (got {self})"
            )));
        }
        Ok(())
    }

    /// Static block plus `k` delta blocks.
    pub fn output_dim(&self) -> usize {
        self.n * (self.k + 1)
    }
}

impl fmt::Display for SdcConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{}-{}", self.n, self.d, self.p, self.k)
    }
}

impl FromStr for SdcConfig {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<usize> = s
            .split('-')
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| FeatureError::InvalidConfig(format!("bad SDC spec '{s}', expected N-d-p-k")))?;
        match parts[..] {
            [n, d, p, k] => Self::new(n, d, p, k),
            _ => Err(FeatureError::InvalidConfig(format!(
                "bad SDC spec '{s}', expected N-d-p-k"
            ))),
        }
    }
}

/// Time-major `T × D` feature matrix tagged with its producing front-end.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Matrix,
    kind: FeatureKind,
    fingerprint: u64,
}

impl FeatureMatrix {
    pub fn new(kind: FeatureKind, data: Matrix, fingerprint: u64) -> Self {
        Self {
            data,
            kind,
            fingerprint,
        }
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    /// Opaque hash of the configuration that produced this matrix.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }

    pub fn into_matrix(self) -> Matrix {
        self.data
    }

    pub fn num_frames(&self) -> usize {
        self.data.rows()
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }
}

/// Feature kind plus its full configuration; the unit the model and CLI
/// pass around.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontEnd {
    pub kind: FeatureKind,
    pub config: FrontEndConfig,
    pub sdc: SdcConfig,
}

impl Default for FrontEnd {
    fn default() -> Self {
        Self::new(FeatureKind::Sdc)
    }
}

impl FrontEnd {
    pub fn new(kind: FeatureKind) -> Self {
        Self {
            kind,
            config: FrontEndConfig::default(),
            sdc: SdcConfig::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.kind.dim(&self.config, &self.sdc)
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        self.config.validate()?;
        if self.kind == FeatureKind::Sdc {
            self.sdc.validate()?;
            if self.sdc.n != self.config.num_mel {
                return Err(FeatureError::ConfigMismatch(format!(
                    "SDC base width {} must equal num_mel {} (SDC is stacked on the log-mel spectrogram)",
                    self.sdc.n, self.config.num_mel
                )));
            }
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> u64 {
        match self.kind {
            FeatureKind::Sdc => sdc_fingerprint(
                config_fingerprint(FeatureKind::MelSpec, &self.config),
                &self.sdc,
            ),
            kind => config_fingerprint(kind, &self.config),
        }
    }

    pub fn extract(&self, wave: &Waveform) -> Result<FeatureMatrix, FeatureError> {
        self.validate()?;
        let cfg = &self.config;
        match self.kind {
            FeatureKind::MelSpec => mel_spectrogram(wave, cfg),
            FeatureKind::Mfcc => mfcc(wave, cfg, false),
            FeatureKind::MfccDeltas => mfcc(wave, cfg, true),
            FeatureKind::Plp => plp(wave, cfg),
            FeatureKind::RastaPlp => rasta_plp(wave, cfg),
            FeatureKind::Sdc => sdc(&mel_spectrogram(wave, cfg)?, &self.sdc),
        }
    }
}

fn fingerprint_of(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

pub(crate) fn config_fingerprint(kind: FeatureKind, cfg: &FrontEndConfig) -> u64 {
    fingerprint_of(&format!("{kind}|{cfg:?}"))
}

pub(crate) fn sdc_fingerprint(base: u64, sdc: &SdcConfig) -> u64 {
    fingerprint_of(&format!("{base:016x}|sdc|{sdc}"))
}
