//! Signal-processing primitives shared by every stage of the pipeline.
//!
//! Everything here is a pure function of its inputs: no caches, no global
//! state, safe to call from any thread.

mod amplitude;
mod dtw;
mod filter;
mod mel;
mod resample;
mod stft;

pub use amplitude::{amplitude_series, pad_or_truncate, AMPLITUDE_SERIES_LEN};
pub use dtw::{dtw_distance, Cost};
pub use filter::{
    butterworth, butterworth_highpass, butterworth_lowpass, Biquad, FilterKind, Sos, DEFAULT_BUTTERWORTH_ORDER,
};
pub use mel::{
    dct_ii, hz_to_mel, log_mel_frames, mel_filterbank, mel_spectrogram, mel_spectrogram_with, mel_to_hz, mfcc,
    mfcc_with, resample_mfcc, MelConfig, MelMap, MfccSeries, MEL_BANDS, MEL_FRAMES,
};
pub use resample::{decimate, resample_to};
pub use stft::{hann, stft, Spectrogram, Stft};

use crate::error::{Error, Result};

/// Dot product with independent partial sums, so the compiler can vectorise it.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let chunks = n / 8;
    for c in 0..chunks {
        for l in 0..8 {
            acc[l] += a[c * 8 + l] * b[c * 8 + l];
        }
    }
    let mut tail = 0.0;
    for i in chunks * 8..n {
        tail += a[i] * b[i];
    }
    acc.iter().sum::<f64>() + tail
}

/// A mono audio buffer with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSegment {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl AudioSegment {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::invalid(format!("sample rate {sample_rate} must be > 0")));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn silence(len: usize, sample_rate: f64) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    /// Skips validation. Callers guarantee finite samples and a positive rate.
    pub(crate) fn from_parts(samples: Vec<f64>, sample_rate: f64) -> Self {
        debug_assert!(sample_rate > 0.0);
        Self { samples, sample_rate }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Copy of samples `[start, end)`, clamped to the buffer.
    pub fn slice(&self, start: usize, end: usize) -> AudioSegment {
        let end = end.min(self.samples.len());
        let start = start.min(end);
        Self::from_parts(self.samples[start..end].to_vec(), self.sample_rate)
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            (self.energy() / self.samples.len() as f64).sqrt()
        }
    }

    pub fn scaled(&self, gain: f64) -> AudioSegment {
        Self::from_parts(self.samples.iter().map(|x| x * gain).collect(), self.sample_rate)
    }
}
