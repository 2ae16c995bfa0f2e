use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::gestures::{ChannelPath, GestureAcousticModel};
use crate::channel::ChannelName;
use crate::dsp::{butterworth, AudioSegment, FilterKind};
use crate::error::{Error, Result};

/// Occlusion low-pass order.
pub const OCCLUSION_ORDER: usize = 6;
const HALF_TAPS: i64 = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Relative to the source RMS.
    pub snr_db: f64,
    pub seed: u64,
}

/// Blackman-windowed sinc interpolation of `x` delayed by `delay` samples.
/// The output is long enough to hold the whole delayed signal.
pub fn fractional_delay(x: &[f64], delay: f64) -> Vec<f64> {
    let whole = delay.floor() as i64;
    let frac = delay - whole as f64;
    let taps: Vec<f64> = (-HALF_TAPS..=HALF_TAPS)
        .map(|k| {
            let t = k as f64 - frac;
            let sinc = if t.abs() < 1e-12 {
                1.0
            } else {
                (PI * t).sin() / (PI * t)
            };
            let u = (t + HALF_TAPS as f64 + 1.0) / (2.0 * HALF_TAPS as f64 + 2.0);
            let w = 0.42 - 0.5 * (2.0 * PI * u).cos() + 0.08 * (4.0 * PI * u).cos();
            sinc * w.max(0.0)
        })
        .collect();
    let shift = whole.max(0) as usize;
    let out_len = x.len() + shift + HALF_TAPS as usize + 1;
    // Padded so every tap writes in bounds; trimmed afterwards.
    let pad = HALF_TAPS as usize;
    let mut y = vec![0.0; out_len + 2 * pad];
    for (k, &h) in taps.iter().enumerate() {
        let start = shift + k;
        for (o, &v) in y[start..start + x.len()].iter_mut().zip(x) {
            *o += h * v;
        }
    }
    y.drain(..pad);
    y.truncate(out_len);
    y
}

/// Delay, attenuate and low-pass `source` along one voice path.
pub fn apply_path(source: &AudioSegment, path: &ChannelPath) -> Result<AudioSegment> {
    let rate = source.sample_rate();
    let mut y = fractional_delay(source.samples(), path.delay * rate);
    let gain = 10f64.powf(-path.attenuation_db / 20.0);
    y.iter_mut().for_each(|v| *v *= gain);
    if let Some(cut) = path.cutoff.filter(|&c| c < 0.49 * rate) {
        y = butterworth(FilterKind::Lowpass, OCCLUSION_ORDER, cut, rate)?.filter(&y);
    }
    AudioSegment::new(y, rate)
}

/// The voice as heard on `channel` while `gam` is performed, with optional
/// white noise.
pub fn propagate(
    source: &AudioSegment,
    gam: &GestureAcousticModel,
    channel: ChannelName,
    noise: Option<NoiseSpec>,
) -> Result<AudioSegment> {
    let path = gam
        .vocal
        .get(&channel)
        .ok_or_else(|| Error::MissingChannel(channel.to_string()))?;
    let mut out = apply_path(source, path)?;
    if let Some(spec) = noise {
        let sigma = source.rms() * 10f64.powf(-spec.snr_db / 20.0);
        add_noise(out.samples_mut(), sigma, spec.seed);
    }
    Ok(out)
}

pub(crate) fn add_noise(x: &mut [f64], sigma: f64, seed: u64) {
    if sigma <= 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
    for v in x.iter_mut() {
        *v += normal.sample(&mut rng);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_delay_is_a_shift() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 * 0.3).sin()).collect();
        let y = fractional_delay(&x, 5.0);
        for i in 0..100 {
            assert!((y[i + 5] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn attenuation_scales_rms() {
        let x: Vec<f64> = (0..48_000).map(|i| (i as f64 * 0.05).sin() * 0.5).collect();
        let src = AudioSegment::new(x, 48_000.0).unwrap();
        let path = ChannelPath {
            delay: 0.0,
            attenuation_db: 6.0,
            cutoff: None,
        };
        let out = apply_path(&src, &path).unwrap();
        let ratio = out.rms() * (out.len() as f64 / src.len() as f64).sqrt() / src.rms();
        assert!((ratio - 0.501).abs() < 0.005, "{ratio}");
    }
}
