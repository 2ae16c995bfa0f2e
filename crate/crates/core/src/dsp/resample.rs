use std::f64::consts::PI;

use super::AudioSegment;
use crate::error::{Error, Result};

const TAPS_PER_PHASE: usize = 40;
const KAISER_BETA: f64 = 8.6;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Kaiser-windowed sinc lowpass, unit DC gain.
fn lowpass_fir(taps: usize, cutoff: f64) -> Vec<f64> {
    let center = (taps - 1) as f64 / 2.0;
    let norm = bessel_i0(KAISER_BETA);
    let mut h: Vec<f64> = (0..taps)
        .map(|n| {
            let t = n as f64 - center;
            let sinc = if t == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * t).sin() / (PI * t)
            };
            let r = t / center;
            let w = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / norm;
            sinc * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Integer-factor decimation with a zero-phase polyphase FIR.
///
/// Only every `factor`-th output of the anti-alias filter is computed. Output
/// length is `ceil(len / factor)`.
pub fn decimate(seg: &AudioSegment, factor: usize) -> Result<AudioSegment> {
    if factor == 0 {
        return Err(Error::invalid("decimation factor must be >= 1"));
    }
    if factor == 1 {
        return Ok(seg.clone());
    }
    let taps = TAPS_PER_PHASE * factor + 1;
    // Passband edge at 45% of the output rate.
    let h = lowpass_fir(taps, 0.45 / factor as f64);
    let center = (taps - 1) / 2;
    // Reversed so each output is a forward dot product.
    let hr: Vec<f64> = h.iter().rev().copied().collect();
    let x = seg.samples();
    let n = x.len();
    let out_len = n.div_ceil(factor);
    let out = (0..out_len)
        .map(|m| {
            let pos = m * factor;
            // y[m] = sum_k h[k] x[pos + center - k]
            //      = sum_j hr[j] x[pos + j - center]
            let j_lo = center.saturating_sub(pos);
            let j_hi = (n + center - pos).min(taps);
            let x0 = pos + j_lo - center;
            super::dot(&hr[j_lo..j_hi], &x[x0..x0 + (j_hi - j_lo)])
        })
        .collect();
    Ok(AudioSegment::from_parts(out, seg.sample_rate() / factor as f64))
}

/// Resample to `target_rate`, which must divide the current rate.
pub fn resample_to(seg: &AudioSegment, target_rate: f64) -> Result<AudioSegment> {
    let ratio = seg.sample_rate() / target_rate;
    let factor = ratio.round();
    if factor < 1.0 || (ratio - factor).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "only integer decimation is supported: {} Hz -> {target_rate} Hz",
            seg.sample_rate()
        )));
    }
    decimate(seg, factor as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, rate: f64, n: usize) -> AudioSegment {
        AudioSegment::new(
            (0..n).map(|i| (2.0 * PI * freq * i as f64 / rate).sin()).collect(),
            rate,
        )
        .unwrap()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn passband_tone_survives_with_phase_intact() {
        let src = tone(1000.0, 48_000.0, 48_000);
        let out = resample_to(&src, 16_000.0).unwrap();
        assert_eq!(out.len(), 16_000);
        assert_eq!(out.sample_rate(), 16_000.0);
        let reference = tone(1000.0, 16_000.0, 16_000);
        let mid = 200..15_800;
        let err: f64 = out.samples()[mid.clone()]
            .iter()
            .zip(&reference.samples()[mid])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn out_of_band_tone_is_rejected() {
        let out = resample_to(&tone(12_000.0, 48_000.0, 48_000), 16_000.0).unwrap();
        assert!(rms(&out.samples()[200..15_800]) < 1e-3);
    }

    #[test]
    fn non_integer_ratio_errors() {
        assert!(resample_to(&tone(100.0, 44_100.0, 100), 16_000.0).is_err());
    }

    #[test]
    fn output_length_rounds_up() {
        let out = decimate(&AudioSegment::silence(10, 48_000.0), 3).unwrap();
        assert_eq!(out.len(), 4);
    }
}
