use std::f64::consts::PI;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::{AudioSegment, Stft};
use crate::error::{Error, Result};

pub const MEL_BANDS: usize = 128;
pub const MEL_FRAMES: usize = 250;

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MelConfig {
    pub n_mels: usize,
    pub window: usize,
    pub hop: usize,
    /// Temporal size of the padded/truncated map.
    pub frames: usize,
    pub fmin: f64,
    /// `None` means Nyquist.
    pub fmax: Option<f64>,
    /// Mel energies are clamped to this before the log.
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_mels: MEL_BANDS,
            window: 512,
            hop: 192,
            frames: MEL_FRAMES,
            fmin: 0.0,
            fmax: None,
            log_floor: 1e-10,
        }
    }
}

/// Log-mel energies, `[n_mels x frames]`, padded with zeros or truncated in time.
#[derive(Debug, Clone, PartialEq)]
pub struct MelMap {
    pub values: Array2<f64>,
}

impl MelMap {
    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// Cepstral coefficients, `[n_coeffs x frames]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccSeries {
    pub coeffs: Array2<f64>,
}

impl MfccSeries {
    pub fn n_coeffs(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn frames(&self) -> usize {
        self.coeffs.ncols()
    }
}

/// Triangular filters with unit peak, `[n_mels x (n_fft/2 + 1)]`.
///
/// Edges are equally spaced on the mel scale between `fmin` and `fmax`; weights
/// are evaluated at the exact bin frequencies.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: f64, fmin: f64, fmax: f64) -> Array2<f64> {
    let bins = n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut fb = Array2::<f64>::zeros((n_mels, bins));
    for m in 0..n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        for b in 0..bins {
            let f = b as f64 * sample_rate / n_fft as f64;
            let w = if f > left && f <= center {
                (f - left) / (center - left)
            } else if f > center && f < right {
                (right - f) / (right - center)
            } else {
                0.0
            };
            fb[[m, b]] = w;
        }
    }
    fb
}

/// Log-mel energies of every real STFT frame (no padding).
///
/// Segments shorter than one window are zero-padded to a single frame.
pub fn log_mel_frames(seg: &AudioSegment, cfg: &MelConfig) -> Result<Array2<f64>> {
    if seg.is_empty() {
        return Err(Error::Empty("mel spectrogram of an empty segment"));
    }
    let plan = Stft::new(cfg.window, cfg.hop)?;
    let padded;
    let samples = if seg.len() < cfg.window {
        let mut v = seg.samples().to_vec();
        v.resize(cfg.window, 0.0);
        padded = v;
        &padded[..]
    } else {
        seg.samples()
    };
    let mags = plan.magnitudes(samples);
    let fmax = cfg.fmax.unwrap_or(seg.sample_rate() / 2.0);
    let fb = mel_filterbank(cfg.n_mels, cfg.window, seg.sample_rate(), cfg.fmin, fmax);
    let power = mags.mapv(|m| m * m);
    Ok(fb.dot(&power).mapv(|e| e.max(cfg.log_floor).ln()))
}

pub fn mel_spectrogram_with(seg: &AudioSegment, cfg: &MelConfig) -> Result<MelMap> {
    let frames = log_mel_frames(seg, cfg)?;
    let mut values = Array2::<f64>::zeros((cfg.n_mels, cfg.frames));
    let keep = frames.ncols().min(cfg.frames);
    values.slice_mut(s![.., ..keep]).assign(&frames.slice(s![.., ..keep]));
    Ok(MelMap { values })
}

/// 128-band log-mel map padded/truncated to 250 frames.
pub fn mel_spectrogram(seg: &AudioSegment) -> Result<MelMap> {
    mel_spectrogram_with(seg, &MelConfig::default())
}

/// Orthonormal DCT-II.
pub fn dct_ii(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let nf = n as f64;
    (0..n)
        .map(|k| {
            let sum: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * nf)).cos())
                .sum();
            let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            sum * scale
        })
        .collect()
}

pub fn mfcc_with(seg: &AudioSegment, n_coeffs: usize, cfg: &MelConfig) -> Result<MfccSeries> {
    if n_coeffs == 0 || n_coeffs > cfg.n_mels {
        return Err(Error::invalid(format!(
            "n_coeffs must be in 1..={}, got {n_coeffs}",
            cfg.n_mels
        )));
    }
    let logmel = log_mel_frames(seg, cfg)?;
    let n = cfg.n_mels;
    // Precomputed DCT-II basis, first n_coeffs rows.
    let basis = Array2::from_shape_fn((n_coeffs, n), |(k, i)| {
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        scale * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n as f64)).cos()
    });
    Ok(MfccSeries {
        coeffs: basis.dot(&logmel),
    })
}

/// MFCCs of the real (unpadded) frames.
pub fn mfcc(seg: &AudioSegment, n_coeffs: usize) -> Result<MfccSeries> {
    mfcc_with(seg, n_coeffs, &MelConfig::default())
}

/// Overlapping `frame`-long windows at `stride`, in order.
///
/// A trailing remainder shorter than `frame` is dropped. A series shorter than
/// one window yields a single zero-padded segment.
pub fn resample_mfcc(m: &MfccSeries, frame: usize, stride: usize) -> Result<Vec<MfccSeries>> {
    if frame == 0 || stride == 0 {
        return Err(Error::invalid("mfcc resampling needs frame > 0 and stride > 0"));
    }
    let total = m.frames();
    if total < frame {
        let mut coeffs = Array2::<f64>::zeros((m.n_coeffs(), frame));
        coeffs.slice_mut(s![.., ..total]).assign(&m.coeffs);
        return Ok(vec![MfccSeries { coeffs }]);
    }
    Ok((0..=(total - frame) / stride)
        .map(|k| MfccSeries {
            coeffs: m.coeffs.slice(s![.., k * stride..k * stride + frame]).to_owned(),
        })
        .collect())
}
