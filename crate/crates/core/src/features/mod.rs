//! Fixed-dimension acoustic feature extraction.
//!
//! A recording is divided into exactly `segments` overlapping frames
//! (see [`frames::plan_frames`]); each frame yields either mel cepstral
//! coefficients or linearly spaced log filterbank energies, to which
//! velocity and acceleration rows plus a zero-crossing-rate row and a
//! kurtosis row are appended. The resulting matrix is (3M+2, S) for M
//! cepstral coefficients or (3B+2, S) for B filters, regardless of the
//! recording length.

mod fft;
mod filterbank;
mod frames;
mod io;
mod stats;

pub use fft::Fft;
pub use filterbank::{Dct, Filterbank, LOG_FLOOR};
pub use frames::{plan_frames, FramePlan};
pub use io::{read_feature_file, write_feature_csv, write_feature_file};
pub use stats::{append_deltas, kurtosis_frame, zcr_frame};

use crate::audio::{AudioClip, ClassLabel};
use crate::error::{Error, Result};

/// Cepstral coefficient counts accepted without an override.
pub const MFCC_COUNTS: [usize; 5] = [13, 26, 39, 52, 65];
/// Linear filter counts accepted without an override.
pub const FBANK_COUNTS: [usize; 9] = [40, 60, 80, 100, 120, 140, 160, 180, 200];
/// Frame lengths (samples) accepted without an override.
pub const FRAME_LENGTHS: [usize; 4] = [512, 1024, 2048, 4096];
/// Segment counts accepted without an override.
pub const SEGMENT_COUNTS: [usize; 5] = [70, 100, 120, 150, 200];

/// Spectral feature family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FeatureKind {
    /// Mel cepstral coefficients; `coeffs` per frame.
    Mfcc { coeffs: usize },
    /// Linearly spaced log filterbank energies; `bands` per frame.
    LinearFbank { bands: usize },
}

impl FeatureKind {
    /// Static features per frame (M or B).
    pub fn static_rows(&self) -> usize {
        match self {
            FeatureKind::Mfcc { coeffs } => *coeffs,
            FeatureKind::LinearFbank { bands } => *bands,
        }
    }
}

/// Complete extraction configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    /// Frame length in samples.
    pub frame_len: usize,
    /// Number of frames every recording is divided into.
    pub segments: usize,
    /// Sample rate the clip is expected to carry.
    pub sample_rate: u32,
}

impl FeatureConfig {
    /// Builds a configuration, accepting only values from the standard
    /// hyperparameter grid. Use [`FeatureConfig::unchecked`] to bypass.
    pub fn from_grid(
        kind: FeatureKind,
        frame_len: usize,
        segments: usize,
        sample_rate: u32,
    ) -> Result<Self> {
        let ok_kind = match kind {
            FeatureKind::Mfcc { coeffs } => MFCC_COUNTS.contains(&coeffs),
            FeatureKind::LinearFbank { bands } => FBANK_COUNTS.contains(&bands),
        };
        if !ok_kind {
            return Err(Error::Validation(format!(
                "{kind:?} is outside the standard grid (override to allow)"
            )));
        }
        if !FRAME_LENGTHS.contains(&frame_len) {
            return Err(Error::Validation(format!(
                "frame_len {frame_len} is outside the standard grid (override to allow)"
            )));
        }
        if !SEGMENT_COUNTS.contains(&segments) {
            return Err(Error::Validation(format!(
                "segments {segments} is outside the standard grid (override to allow)"
            )));
        }
        if sample_rate == 0 {
            return Err(Error::Validation("sample_rate must be positive".into()));
        }
        Ok(FeatureConfig {
            kind,
            frame_len,
            segments,
            sample_rate,
        })
    }

    /// Accepts arbitrary positive values.
    pub fn unchecked(
        kind: FeatureKind,
        frame_len: usize,
        segments: usize,
        sample_rate: u32,
    ) -> Self {
        assert!(frame_len >= 1 && segments >= 1 && sample_rate > 0);
        FeatureConfig {
            kind,
            frame_len,
            segments,
            sample_rate,
        }
    }

    /// The default configuration used for backbone pre-training:
    /// 39 MFCCs, 1024-sample frames, 150 segments at 16 kHz.
    pub fn pretrain_default() -> Self {
        FeatureConfig::unchecked(FeatureKind::Mfcc { coeffs: 39 }, 1024, 150, 16000)
    }

    /// Total rows of the final matrix: 3M+2 or 3B+2.
    pub fn rows(&self) -> usize {
        3 * self.kind.static_rows() + 2
    }

    /// One-line echo used in file headers and sidecar metadata.
    pub fn echo(&self) -> String {
        match self.kind {
            FeatureKind::Mfcc { coeffs } => format!(
                "kind=mfcc coeffs={coeffs} frame_len={} segments={} sample_rate={}",
                self.frame_len, self.segments, self.sample_rate
            ),
            FeatureKind::LinearFbank { bands } => format!(
                "kind=fbank bands={bands} frame_len={} segments={} sample_rate={}",
                self.frame_len, self.segments, self.sample_rate
            ),
        }
    }
}

/// The (3M+2, S) / (3B+2, S) feature matrix of one recording, row-major.
#[derive(Clone, Debug)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub config: FeatureConfig,
    pub subject_id: String,
    pub label: Option<ClassLabel>,
}

impl FeatureMatrix {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Column `c` (one frame) as an owned vector.
    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Row-major flattening, the representation oversampling operates on.
    pub fn flattened(&self) -> Vec<f64> {
        self.data.clone()
    }
}

/// Reusable per-frame spectral front end: Hamming window, power spectrum,
/// filterbank, optional DCT. The FFT length is the frame length rounded up
/// to a power of two.
pub struct FrameExtractor {
    window: Vec<f64>,
    fft: Fft,
    bank: Filterbank,
    dct: Option<Dct>,
    scratch_frame: Vec<f64>,
    scratch_power: Vec<f64>,
    scratch_energies: Vec<f64>,
}

impl FrameExtractor {
    pub fn new(cfg: &FeatureConfig) -> Self {
        let fft_len = cfg.frame_len.next_power_of_two();
        let fft = Fft::new(fft_len);
        let (bank, dct) = match cfg.kind {
            FeatureKind::Mfcc { coeffs } => (
                Filterbank::mel(coeffs, fft_len, cfg.sample_rate),
                Some(Dct::new(coeffs)),
            ),
            FeatureKind::LinearFbank { bands } => {
                (Filterbank::linear(bands, fft_len, cfg.sample_rate), None)
            }
        };
        FrameExtractor {
            window: hamming(cfg.frame_len),
            fft,
            bank,
            dct,
            scratch_frame: vec![0.0; cfg.frame_len],
            scratch_power: Vec::new(),
            scratch_energies: Vec::new(),
        }
    }

    /// Spectral feature vector (M or B values) of one frame.
    pub fn spectral(&mut self, frame: &[f64], out: &mut Vec<f64>) {
        assert_eq!(frame.len(), self.window.len());
        self.scratch_frame.clear();
        self.scratch_frame
            .extend(frame.iter().zip(&self.window).map(|(x, w)| x * w));
        self.fft
            .power_spectrum(&self.scratch_frame, &mut self.scratch_power);
        self.bank
            .log_energies(&self.scratch_power, &mut self.scratch_energies);
        match &self.dct {
            Some(dct) => dct.apply(&self.scratch_energies, out),
            None => {
                out.clear();
                out.extend_from_slice(&self.scratch_energies);
            }
        }
    }
}

fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (std::f64::consts::TAU * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Mel cepstral coefficients of a single frame.
pub fn mfcc_frame(frame: &[f64], coeffs: usize, sample_rate: u32) -> Vec<f64> {
    assert!(coeffs >= 1);
    let cfg = FeatureConfig::unchecked(
        FeatureKind::Mfcc { coeffs },
        frame.len(),
        1,
        sample_rate,
    );
    let mut ex = FrameExtractor::new(&cfg);
    let mut out = Vec::new();
    ex.spectral(frame, &mut out);
    out
}

/// Linearly spaced log filterbank energies of a single frame.
pub fn linear_logenergy_frame(frame: &[f64], bands: usize, sample_rate: u32) -> Vec<f64> {
    assert!(bands >= 1);
    let cfg = FeatureConfig::unchecked(
        FeatureKind::LinearFbank { bands },
        frame.len(),
        1,
        sample_rate,
    );
    let mut ex = FrameExtractor::new(&cfg);
    let mut out = Vec::new();
    ex.spectral(frame, &mut out);
    out
}

/// Extracts the full feature matrix of a clip.
///
/// The clip is expected to already carry `cfg.sample_rate`; filter
/// placement uses the configured rate either way. Column `i` of the result
/// corresponds to frame `i` of the plan.
pub fn extract_features(clip: &AudioClip, cfg: &FeatureConfig) -> FeatureMatrix {
    extract_features_from(&clip.samples, cfg, clip.subject_id.clone(), clip.label)
}

/// Same as [`extract_features`] but over a raw sample slice; used for event
/// sub-ranges of a recording.
pub fn extract_features_from(
    samples: &[f64],
    cfg: &FeatureConfig,
    subject_id: String,
    label: Option<ClassLabel>,
) -> FeatureMatrix {
    let static_rows = cfg.kind.static_rows();
    let cols = cfg.segments;
    let plan = plan_frames(samples.len(), cfg.frame_len, cfg.segments);
    let mut ex = FrameExtractor::new(cfg);

    let mut frame_buf = vec![0.0; cfg.frame_len];
    let mut spectral = Vec::with_capacity(static_rows);
    let mut static_matrix = vec![0.0; static_rows * cols];
    let mut zcr_row = vec![0.0; cols];
    let mut kurt_row = vec![0.0; cols];

    for (c, _) in plan.starts.iter().enumerate() {
        plan.fill_frame(samples, c, &mut frame_buf);
        ex.spectral(&frame_buf, &mut spectral);
        for (r, &v) in spectral.iter().enumerate() {
            static_matrix[r * cols + c] = v;
        }
        if frame_buf.len() >= 2 {
            zcr_row[c] = zcr_frame(&frame_buf);
            kurt_row[c] = kurtosis_frame(&frame_buf);
        }
    }

    let mut data = append_deltas(&static_matrix, static_rows, cols);
    data.extend_from_slice(&zcr_row);
    data.extend_from_slice(&kurt_row);

    FeatureMatrix {
        rows: 3 * static_rows + 2,
        cols,
        data,
        config: *cfg,
        subject_id,
        label,
    }
}
