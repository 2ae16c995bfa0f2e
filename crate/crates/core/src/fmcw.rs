//! Active ultrasonic ranging with a repeating linear chirp.
//!
//! The watch speaker transmits `x0(t) = A0 cos(2 pi f0 t + pi (B/T) t^2)`,
//! restarted every period `T`. A microphone hears `x_i(t) = A1 x0(t - t0) / A0`.
//! Mixing the two and low-passing leaves a tone at `(B/T) t0` whose amplitude is
//! `A0 A1 / 2`; reading the tone frequency off a short-time spectrum gives the
//! path delay.
//!
//! The mixer works on analytic signals. At 48 kHz the real product's sum term
//! (35-45 kHz) would alias straight into the beat band; the analytic product
//! never forms it. The in-phase output is the same low-frequency cosine the
//! real product leaves after ideal low-pass filtering.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::f64::consts::PI;

use ndarray::{s, Array2};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelName;
use crate::dsp::{butterworth, hann, pad_or_truncate, AudioSegment, FilterKind, Stft};
use crate::error::{Error, Result};

/// Linear chirp parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChirpConfig {
    /// Start frequency, Hz.
    pub f0: f64,
    /// End frequency, Hz.
    pub f1: f64,
    /// Sweep period, seconds.
    pub period: f64,
    /// Transmit amplitude.
    pub amplitude: f64,
}

impl Default for ChirpConfig {
    fn default() -> Self {
        Self {
            f0: 17_500.0,
            f1: 22_500.0,
            period: 0.05,
            amplitude: 1.0,
        }
    }
}

impl ChirpConfig {
    pub fn bandwidth(&self) -> f64 {
        self.f1 - self.f0
    }

    /// Sweep rate `B / T`, Hz per second.
    pub fn slope(&self) -> f64 {
        self.bandwidth() / self.period
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f1 > self.f0) || !(self.f0 >= 0.0) {
            return Err(Error::invalid(format!(
                "chirp needs f1 > f0 >= 0, got f0={} f1={}",
                self.f0, self.f1
            )));
        }
        if !(self.period > 0.0) {
            return Err(Error::invalid("chirp period must be > 0"));
        }
        Ok(())
    }

    /// Phase at time `tau` into the current sweep.
    #[inline]
    pub fn phase(&self, tau: f64) -> f64 {
        2.0 * PI * self.f0 * tau + PI * self.slope() * tau * tau
    }

    /// Beat frequency produced by a path delay.
    pub fn beat_frequency(&self, delay: f64) -> f64 {
        self.slope() * delay
    }

    /// Path delay implied by a beat frequency.
    pub fn delay_for_beat(&self, beat_hz: f64) -> f64 {
        beat_hz / self.slope()
    }
}

/// Receive-side processing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FmcwConfig {
    pub chirp: ChirpConfig,
    pub sample_rate: f64,
    pub lpf_cutoff: f64,
    pub lpf_order: usize,
    pub stft_window: usize,
    pub stft_hop: usize,
    /// Beat bins kept for the spectrogram map and peak search.
    pub map_bins: usize,
    /// Frames in the padded/truncated beat map.
    pub map_frames: usize,
    /// Length of each per-channel peak frequency / amplitude series.
    pub series_len: usize,
}

impl Default for FmcwConfig {
    fn default() -> Self {
        Self {
            chirp: ChirpConfig::default(),
            sample_rate: 48_000.0,
            lpf_cutoff: 4_000.0,
            lpf_order: 8,
            stft_window: 2048,
            stft_hop: 512,
            map_bins: 128,
            map_frames: 250,
            series_len: 128,
        }
    }
}

impl FmcwConfig {
    pub fn validate(&self) -> Result<()> {
        self.chirp.validate()?;
        if self.sample_rate < 2.0 * self.chirp.f1 {
            return Err(Error::UndersampledChirp {
                rate: self.sample_rate,
                f1: self.chirp.f1,
            });
        }
        if self.map_bins == 0 || self.map_bins > self.stft_window / 2 {
            return Err(Error::invalid("map_bins must be in 1..=stft_window/2"));
        }
        Ok(())
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate / self.stft_window as f64
    }
}

/// Repeated chirps of period `T`.
pub fn generate_chirp(cfg: &ChirpConfig, duration: f64, rate: f64) -> Result<AudioSegment> {
    generate_echo(cfg, 0.0, cfg.amplitude, duration, rate)
}

/// The chirp as heard over a single path with `delay` and amplitude `gain`.
pub fn generate_echo(cfg: &ChirpConfig, delay: f64, gain: f64, duration: f64, rate: f64) -> Result<AudioSegment> {
    cfg.validate()?;
    if rate < 2.0 * cfg.f1 {
        return Err(Error::UndersampledChirp { rate, f1: cfg.f1 });
    }
    let n = (duration * rate).round() as usize;
    let samples = (0..n)
        .map(|i| {
            let tau = (i as f64 / rate - delay).rem_euclid(cfg.period);
            gain * cfg.phase(tau).cos()
        })
        .collect();
    Ok(AudioSegment::from_parts(samples, rate))
}

/// Mixer output: `in_phase` is the low-passed product with the reference;
/// `quadrature` is its 90-degree companion, so `in_phase + j quadrature`
/// rotates at the signed beat frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatSignal {
    pub in_phase: Vec<f64>,
    pub quadrature: Vec<f64>,
    pub sample_rate: f64,
    /// Offset of the first reference sweep start, seconds.
    pub period_start: f64,
}

impl BeatSignal {
    pub fn samples(&self) -> &[f64] {
        &self.in_phase
    }

    pub fn len(&self) -> usize {
        self.in_phase.len()
    }

    pub fn is_empty(&self) -> bool {
        self.in_phase.is_empty()
    }

    pub fn complex(&self) -> Vec<Complex64> {
        self.in_phase
            .iter()
            .zip(&self.quadrature)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect()
    }
}

thread_local! {
    // Plans cache their twiddles, so sessions of equal length share them.
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn analytic(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    // Zero-padding to a power of two keeps the FFT fast and the ends from wrapping.
    let len = n.next_power_of_two();
    let (forward, inverse) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(len), p.plan_fft_inverse(len))
    });
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(len, Complex64::new(0.0, 0.0));
    forward.process(&mut buf);
    // Keep DC and Nyquist, double positive frequencies, drop negative ones.
    for (k, v) in buf.iter_mut().enumerate() {
        let positive = k > 0 && 2 * k < len;
        let edge = k == 0 || 2 * k == len;
        if positive {
            *v *= 2.0;
        } else if !edge {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    inverse.process(&mut buf);
    buf.truncate(n);
    let scale = 1.0 / len as f64;
    buf.iter_mut().for_each(|v| *v *= scale);
    buf
}

/// Dechirp against a reference whose sweeps start at t = 0.
pub fn dechirp(received: &AudioSegment, cfg: &FmcwConfig) -> Result<BeatSignal> {
    dechirp_aligned(received, cfg, 0.0)
}

/// Dechirp against a reference whose sweeps start at `period_start` seconds.
pub fn dechirp_aligned(received: &AudioSegment, cfg: &FmcwConfig, period_start: f64) -> Result<BeatSignal> {
    cfg.validate()?;
    if (received.sample_rate() - cfg.sample_rate).abs() > 1e-9 {
        return Err(Error::RateMismatch {
            expected: cfg.sample_rate,
            actual: received.sample_rate(),
        });
    }
    let chirp = &cfg.chirp;
    let rate = cfg.sample_rate;
    let rx = analytic(received.samples());
    let reference = |i: usize| {
        let tau = (i as f64 / rate - period_start).rem_euclid(chirp.period);
        Complex64::from_polar(chirp.amplitude, chirp.phase(tau))
    };
    // With a whole number of samples per sweep the reference repeats exactly.
    let samples_per_period = chirp.period * rate;
    let table: Option<Vec<Complex64>> = ((samples_per_period - samples_per_period.round()).abs() < 1e-9)
        .then(|| (0..samples_per_period.round() as usize).map(reference).collect());
    let (re, im): (Vec<f64>, Vec<f64>) = rx
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let x0 = match &table {
                Some(t) => t[i % t.len()],
                None => reference(i),
            };
            // reference * conj(rx) / 2 rotates at +slope * delay.
            let beat = x0 * r.conj() * 0.5;
            (beat.re, beat.im)
        })
        .unzip();
    let lpf = butterworth(FilterKind::Lowpass, cfg.lpf_order, cfg.lpf_cutoff, rate)?;
    let (re, im) = lpf.filter_pair(&re, &im);
    Ok(BeatSignal {
        in_phase: re,
        quadrature: im,
        sample_rate: rate,
        period_start,
    })
}

/// Sweep start offset in `[0, T)` seconds, by circular cross-correlation of
/// whole received periods with one reference sweep.
pub fn estimate_period_start(received: &AudioSegment, cfg: &FmcwConfig) -> Result<f64> {
    cfg.validate()?;
    let period = (cfg.chirp.period * cfg.sample_rate).round() as usize;
    let periods = received.len() / period.max(1);
    if period == 0 || periods == 0 {
        return Err(Error::SegmentTooShort {
            len: received.len(),
            needed: period,
        });
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(period);
    let inv = planner.plan_fft_inverse(period);
    let mut reference: Vec<Complex64> = (0..period)
        .map(|i| Complex64::from_polar(1.0, cfg.chirp.phase(i as f64 / cfg.sample_rate)))
        .collect();
    fwd.process(&mut reference);

    let mut score = vec![0.0f64; period];
    for p in 0..periods {
        let mut buf: Vec<Complex64> = received.samples()[p * period..(p + 1) * period]
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        fwd.process(&mut buf);
        for (b, r) in buf.iter_mut().zip(&reference) {
            *b *= r.conj();
        }
        inv.process(&mut buf);
        for (s, b) in score.iter_mut().zip(&buf) {
            *s += b.norm();
        }
    }
    let best = (0..period).max_by(|&a, &b| score[a].total_cmp(&score[b])).unwrap_or(0);
    let (l, c, r) = (
        score[(best + period - 1) % period],
        score[best],
        score[(best + 1) % period],
    );
    let denom = l - 2.0 * c + r;
    let frac = if denom.abs() > 1e-300 {
        0.5 * (l - r) / denom
    } else {
        0.0
    };
    let lag = (best as f64 + frac).rem_euclid(period as f64);
    Ok(lag / cfg.sample_rate)
}

fn parabolic_peak(mags: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 >= mags.len() {
        return i as f64;
    }
    let (l, c, r) = (mags[i - 1], mags[i], mags[i + 1]);
    let denom = l - 2.0 * c + r;
    if denom.abs() < 1e-300 {
        i as f64
    } else {
        i as f64 + (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
    }
}

/// Signed beat frequency, Hz, from spectra of whole sweeps averaged together.
///
/// The first 10% of each sweep is skipped: for a delay `t0` the first `t0`
/// seconds of a sweep still mix against the previous one.
pub fn estimate_beat_frequency(beat: &BeatSignal, cfg: &FmcwConfig) -> Result<f64> {
    let rate = beat.sample_rate;
    let period = (cfg.chirp.period * rate).round() as usize;
    let guard = period / 10;
    let seg = period - guard;
    let fft_len = 16_384usize.max(seg.next_power_of_two() * 4);
    let start0 = (beat.period_start * rate).round() as usize;
    let x = beat.complex();
    let window = hann(seg);
    let fft = FftPlanner::new().plan_fft_forward(fft_len);
    let mut power = vec![0.0f64; fft_len];
    let mut used = 0;
    // The first sweep carries the low-pass transient; skip it when possible.
    let mut start = start0 + guard;
    if start + period + seg <= x.len() {
        start += period;
    }
    while start + seg <= x.len() {
        let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
        for i in 0..seg {
            buf[i] = x[start + i] * window[i];
        }
        fft.process(&mut buf);
        for (p, b) in power.iter_mut().zip(&buf) {
            *p += b.norm_sqr();
        }
        used += 1;
        start += period;
    }
    if used == 0 {
        return Err(Error::SegmentTooShort {
            len: x.len(),
            needed: start0 + guard + seg,
        });
    }
    let limit = ((cfg.lpf_cutoff / rate) * fft_len as f64) as usize;
    // Search -limit..=limit by rotating the spectrum so negative bins precede positive.
    let ordered: Vec<f64> = (0..2 * limit + 1)
        .map(|k| power[(k + fft_len - limit) % fft_len].max(1e-300).ln())
        .collect();
    let best = (0..ordered.len())
        .max_by(|&a, &b| ordered[a].total_cmp(&ordered[b]))
        .unwrap_or(limit);
    let bin = parabolic_peak(&ordered, best) - limit as f64;
    Ok(bin * rate / fft_len as f64)
}

/// Dechirp a single received path (shared clock) and convert its beat to a delay.
pub fn estimate_delay(received: &AudioSegment, cfg: &FmcwConfig) -> Result<f64> {
    let beat = dechirp(received, cfg)?;
    Ok(cfg.chirp.delay_for_beat(estimate_beat_frequency(&beat, cfg)?))
}

/// Per-frame view of one channel's beat spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatFrames {
    /// Peak frequency per STFT frame, Hz.
    pub peak_hz: Vec<f64>,
    /// Peak amplitude per frame, in units of the beat amplitude.
    pub peak_amp: Vec<f64>,
    /// Log-magnitude map, `[map_bins x map_frames]`, zero-padded in time.
    pub map: Array2<f64>,
}

/// STFT of the beat restricted to `[0, map_bins)` bins, with per-frame peaks.
pub fn beat_spectrum(beat: &BeatSignal, cfg: &FmcwConfig) -> Result<BeatFrames> {
    let plan = Stft::new(cfg.stft_window, cfg.stft_hop)?;
    let x = beat.complex();
    if x.len() < cfg.stft_window {
        return Err(Error::SegmentTooShort {
            len: x.len(),
            needed: cfg.stft_window,
        });
    }
    let frames = plan.complex_frames(&x);
    let norm = cfg.stft_window as f64 / 2.0;
    let bins = cfg.map_bins;
    let mut map = Array2::<f64>::zeros((bins, cfg.map_frames));
    let mut peak_hz = Vec::with_capacity(frames.len());
    let mut peak_amp = Vec::with_capacity(frames.len());
    for (f, spectrum) in frames.iter().enumerate() {
        let mags: Vec<f64> = spectrum[..bins].iter().map(|c| c.norm() / norm).collect();
        let best = (0..bins).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap_or(0);
        peak_hz.push(parabolic_peak(&mags, best) * cfg.bin_hz());
        peak_amp.push(mags[best]);
        if f < cfg.map_frames {
            for (b, m) in mags.iter().enumerate() {
                map[[b, f]] = m.max(1e-10).ln();
            }
        }
    }
    Ok(BeatFrames { peak_hz, peak_amp, map })
}

/// Ultrasonic inputs for one sample, channels in `ChannelName` order.
#[derive(Debug, Clone, PartialEq)]
pub struct UltraFeatures {
    pub channels: Vec<ChannelName>,
    /// Per channel: `series_len` peak frequencies (Hz) then `series_len` peak
    /// amplitudes, concatenated across channels.
    pub f_stats: Vec<f64>,
    /// Beat spectrogram maps stacked along the frequency axis,
    /// `[channels * map_bins x map_frames]`; the trainable extractor embeds it.
    pub spectrogram: Array2<f64>,
}

/// Fixed-length per-channel statistics and the stacked beat spectrogram.
pub fn beat_features(beats: &BTreeMap<ChannelName, BeatSignal>, cfg: &FmcwConfig) -> Result<UltraFeatures> {
    if beats.is_empty() {
        return Err(Error::Empty("beat features need at least one channel"));
    }
    let per_channel: Vec<(ChannelName, BeatFrames)> = beats
        .iter()
        .map(|(name, beat)| Ok((*name, beat_spectrum(beat, cfg)?)))
        .collect::<Result<_>>()?;
    Ok(assemble_ultra(&per_channel, cfg))
}

pub(crate) fn assemble_ultra(per_channel: &[(ChannelName, BeatFrames)], cfg: &FmcwConfig) -> UltraFeatures {
    let mut f_stats = Vec::with_capacity(per_channel.len() * 2 * cfg.series_len);
    let mut spectrogram = Array2::<f64>::zeros((per_channel.len() * cfg.map_bins, cfg.map_frames));
    for (k, (_, frames)) in per_channel.iter().enumerate() {
        f_stats.extend(pad_or_truncate(&frames.peak_hz, cfg.series_len));
        f_stats.extend(pad_or_truncate(&frames.peak_amp, cfg.series_len));
        spectrogram
            .slice_mut(s![k * cfg.map_bins..(k + 1) * cfg.map_bins, ..])
            .assign(&frames.map);
    }
    UltraFeatures {
        channels: per_channel.iter().map(|(c, _)| *c).collect(),
        f_stats,
        spectrogram,
    }
}

/// Dechirp every channel against the sweep timing recovered from `timing_channel`
/// (the transmitter's own microphone when available).
pub fn dechirp_channels(
    ultra: &BTreeMap<ChannelName, AudioSegment>,
    timing_channel: ChannelName,
    cfg: &FmcwConfig,
) -> Result<BTreeMap<ChannelName, BeatSignal>> {
    let timing = ultra
        .get(&timing_channel)
        .ok_or_else(|| Error::MissingChannel(timing_channel.to_string()))?;
    let start = estimate_period_start(timing, cfg)?;
    ultra
        .iter()
        .map(|(name, seg)| Ok((*name, dechirp_aligned(seg, cfg, start)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> FmcwConfig {
        FmcwConfig::default()
    }

    #[test]
    fn undersampled_chirp_errors() {
        let err = generate_chirp(&ChirpConfig::default(), 0.1, 44_000.0).unwrap_err();
        assert!(err.to_string().starts_with("undersampled-chirp"));
    }

    #[test]
    fn zero_amplitude_is_silent() {
        let c = ChirpConfig {
            amplitude: 0.0,
            ..ChirpConfig::default()
        };
        assert!(generate_chirp(&c, 0.2, 48_000.0)
            .unwrap()
            .samples()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn one_period_is_one_sweep() {
        let c = ChirpConfig::default();
        let seg = generate_chirp(&c, c.period, 48_000.0).unwrap();
        assert_eq!(seg.len(), 2400);
        // Instantaneous frequency from phase differences rises monotonically.
        let inst: Vec<f64> = (1..seg.len())
            .map(|i| {
                let t0 = (i - 1) as f64 / 48_000.0;
                let t1 = i as f64 / 48_000.0;
                (c.phase(t1) - c.phase(t0)) * 48_000.0 / (2.0 * PI)
            })
            .collect();
        assert!(inst.windows(2).all(|w| w[1] > w[0]));
        // Finite differences read the frequency half a sample into each step.
        let at = |i: f64| 17_500.0 + c.slope() * (i - 0.5) / 48_000.0;
        assert!((inst[0] - at(1.0)).abs() < 1e-6);
        assert!((inst[inst.len() - 1] - at(2399.0)).abs() < 1e-6);
        assert!(at(2400.0) - 22_500.0 < 1.0);
    }

    #[test]
    fn rate_mismatch_errors() {
        let seg = AudioSegment::silence(4800, 96_000.0);
        assert!(matches!(dechirp(&seg, &cfg()), Err(Error::RateMismatch { .. })));
    }

    #[test]
    fn no_echo_gives_no_beat() {
        let seg = AudioSegment::silence(48_000, 48_000.0);
        let beat = dechirp(&seg, &cfg()).unwrap();
        assert!(beat.in_phase.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_delay_beats_at_dc() {
        let c = cfg();
        let rx = generate_echo(&c.chirp, 0.0, 0.5, 0.5, 48_000.0).unwrap();
        let beat = dechirp(&rx, &c).unwrap();
        let f = estimate_beat_frequency(&beat, &c).unwrap();
        assert!(f.abs() < 1.0, "{f}");
        // Amplitude A0 * A1 / 2 after the filter settles.
        let mid = &beat.in_phase[10_000..20_000];
        let level = mid.iter().map(|v| v.abs()).sum::<f64>() / mid.len() as f64;
        assert!((level - 0.25).abs() < 0.01, "{level}");
    }

    #[test]
    fn period_start_is_recovered() {
        let c = cfg();
        for offset in [0.0, 0.0123, 0.0371] {
            let rx = generate_echo(&c.chirp, offset, 0.3, 0.4, 48_000.0).unwrap();
            let est = estimate_period_start(&rx, &c).unwrap();
            let err = (est - offset).abs().min(c.chirp.period - (est - offset).abs());
            assert!(err < 1.0 / 48_000.0, "{offset}: {est}");
        }
    }
}
