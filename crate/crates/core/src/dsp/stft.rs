use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::AudioSegment;
use crate::error::{Error, Result};

/// Magnitude spectrogram, `[freq_bins x time_frames]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub magnitudes: Array2<f64>,
    /// Hz per frequency bin.
    pub bin_hz: f64,
    /// Seconds per frame hop.
    pub frame_s: f64,
}

impl Spectrogram {
    pub fn bins(&self) -> usize {
        self.magnitudes.nrows()
    }

    pub fn frames(&self) -> usize {
        self.magnitudes.ncols()
    }
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Reusable short-time Fourier transform plan (Hann window, no centering).
pub struct Stft {
    window: Vec<f64>,
    hop: usize,
    fft_len: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(window_len: usize, hop: usize) -> Result<Self> {
        Self::with_fft_len(window_len, hop, window_len)
    }

    /// Zero-pads each windowed frame to `fft_len` (>= `window_len`).
    pub fn with_fft_len(window_len: usize, hop: usize, fft_len: usize) -> Result<Self> {
        if hop == 0 || window_len < hop {
            return Err(Error::invalid(format!(
                "stft needs window_len >= hop > 0, got window {window_len}, hop {hop}"
            )));
        }
        if fft_len < window_len {
            return Err(Error::invalid("fft length shorter than window"));
        }
        let fft = FftPlanner::new().plan_fft_forward(fft_len);
        Ok(Self {
            window: hann(window_len),
            hop,
            fft_len,
            fft,
        })
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn fft_len(&self) -> usize {
        self.fft_len
    }

    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.window.len() {
            0
        } else {
            (len - self.window.len()) / self.hop + 1
        }
    }

    /// Full complex spectrum of every frame, `[frames][fft_len]`.
    pub fn complex_frames(&self, signal: &[Complex64]) -> Vec<Vec<Complex64>> {
        let frames = self.frame_count(signal.len());
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        (0..frames)
            .map(|f| {
                let start = f * self.hop;
                let mut buf = vec![Complex64::new(0.0, 0.0); self.fft_len];
                for (i, w) in self.window.iter().enumerate() {
                    buf[i] = signal[start + i] * *w;
                }
                self.fft.process_with_scratch(&mut buf, &mut scratch);
                buf
            })
            .collect()
    }

    /// One-sided magnitudes of a real signal, `[fft_len/2 + 1 x frames]`.
    pub fn magnitudes(&self, signal: &[f64]) -> Array2<f64> {
        let frames = self.frame_count(signal.len());
        let bins = self.fft_len / 2 + 1;
        let mut out = Array2::<f64>::zeros((bins, frames));
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft_len];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for f in 0..frames {
            let start = f * self.hop;
            buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for (i, w) in self.window.iter().enumerate() {
                buf[i].re = signal[start + i] * w;
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for b in 0..bins {
                out[[b, f]] = buf[b].norm();
            }
        }
        out
    }
}

/// Hann-windowed magnitude STFT with `floor((len - window_len) / hop) + 1` frames.
pub fn stft(seg: &AudioSegment, window_len: usize, hop: usize) -> Result<Spectrogram> {
    let plan = Stft::new(window_len, hop)?;
    if seg.len() < window_len {
        return Err(Error::SegmentTooShort {
            len: seg.len(),
            needed: window_len,
        });
    }
    Ok(Spectrogram {
        magnitudes: plan.magnitudes(seg.samples()),
        bin_hz: seg.sample_rate() / window_len as f64,
        frame_s: hop as f64 / seg.sample_rate(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, rate: f64, len: usize) -> AudioSegment {
        AudioSegment::new(
            (0..len).map(|n| (2.0 * PI * freq * n as f64 / rate).sin()).collect(),
            rate,
        )
        .unwrap()
    }

    /// Direct O(N^2) DFT of the Hann-windowed frame, independent of rustfft.
    fn direct_dft_mag(frame: &[f64], bin: usize) -> f64 {
        let n = frame.len();
        let w = hann(n);
        let (mut re, mut im) = (0.0, 0.0);
        for (k, (x, wk)) in frame.iter().zip(&w).enumerate() {
            let ang = -2.0 * PI * (bin * k) as f64 / n as f64;
            re += x * wk * ang.cos();
            im += x * wk * ang.sin();
        }
        (re * re + im * im).sqrt()
    }

    #[test]
    fn tone_peaks_at_its_bin_and_matches_direct_dft() {
        let seg = tone(1000.0, 16_000.0, 16_000);
        let spec = stft(&seg, 512, 256).unwrap();
        assert_eq!(spec.frames(), (16_000 - 512) / 256 + 1);
        let target = (1000.0 / spec.bin_hz).round() as usize;
        let high_start = (2000.0 / spec.bin_hz).ceil() as usize;
        for f in [0, 7, spec.frames() - 1] {
            let col = spec.magnitudes.column(f);
            let argmax = (0..col.len()).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap();
            assert_eq!(argmax, target);
            let worst_high = col.iter().skip(high_start).fold(0.0f64, |m, v| m.max(*v));
            assert!(col[target] >= 10.0 * worst_high);
            let frame = &seg.samples()[f * 256..f * 256 + 512];
            for bin in [0, target - 1, target, target + 1, 100] {
                let d = direct_dft_mag(frame, bin);
                assert!(
                    (d - col[bin]).abs() <= 1e-9 * (1.0 + d),
                    "bin {bin}: {d} vs {}",
                    col[bin]
                );
            }
        }
    }

    #[test]
    fn silence_gives_zero_spectrogram() {
        let spec = stft(&AudioSegment::silence(4000, 16_000.0), 512, 256).unwrap();
        assert!(spec.magnitudes.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn exactly_one_window_gives_one_frame() {
        let spec = stft(&AudioSegment::silence(512, 16_000.0), 512, 128).unwrap();
        assert_eq!(spec.frames(), 1);
        assert_eq!(spec.bins(), 257);
    }

    #[test]
    fn short_segment_is_rejected() {
        let err = stft(&AudioSegment::silence(100, 16_000.0), 512, 256).unwrap_err();
        assert!(err.to_string().starts_with("segment-too-short"));
    }

    #[test]
    fn bad_hop_is_rejected() {
        assert!(stft(&AudioSegment::silence(1000, 16_000.0), 256, 512).is_err());
        assert!(stft(&AudioSegment::silence(1000, 16_000.0), 256, 0).is_err());
    }
}
