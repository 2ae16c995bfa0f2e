//! Butterworth IIR design as cascaded second-order sections.
//!
//! Analog prototype poles are mapped through the bilinear transform with the
//! cutoff prewarped, so the digital response is exactly -3.01 dB at the cutoff.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::AudioSegment;
use crate::error::{Error, Result};

pub const DEFAULT_BUTTERWORTH_ORDER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Lowpass,
    Highpass,
}

/// `H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + self.b[1] * z_inv + self.b[2] * z2) / (1.0 + self.a[0] * z_inv + self.a[1] * z2)
    }
}

/// A cascade of biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
    pub sample_rate: f64,
}

impl Sos {
    /// Causal filtering (transposed direct form II per section).
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            let [b0, b1, b2] = s.b;
            let [a1, a2] = s.a;
            let (mut z1, mut z2) = (0.0, 0.0);
            for v in y.iter_mut() {
                let input = *v;
                let out = b0 * input + z1;
                z1 = b1 * input - a1 * out + z2;
                z2 = b2 * input - a2 * out;
                *v = out;
            }
        }
        y
    }

    /// Filters two signals of equal length in one pass.
    pub fn filter_pair(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        debug_assert_eq!(x.len(), y.len());
        let (mut u, mut v) = (x.to_vec(), y.to_vec());
        for s in &self.sections {
            let [b0, b1, b2] = s.b;
            let [a1, a2] = s.a;
            let (mut p1, mut p2, mut q1, mut q2) = (0.0, 0.0, 0.0, 0.0);
            for (a, b) in u.iter_mut().zip(v.iter_mut()) {
                let (ia, ib) = (*a, *b);
                let oa = b0 * ia + p1;
                let ob = b0 * ib + q1;
                p1 = b1 * ia - a1 * oa + p2;
                q1 = b1 * ib - a1 * ob + q2;
                p2 = b2 * ia - a2 * oa;
                q2 = b2 * ib - a2 * ob;
                *a = oa;
                *b = ob;
            }
        }
        (u, v)
    }

    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / self.sample_rate;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn magnitude_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.response(freq_hz).norm().log10()
    }
}

/// Digital Butterworth filter of the given order.
pub fn butterworth(kind: FilterKind, order: usize, cutoff_hz: f64, sample_rate: f64) -> Result<Sos> {
    if order == 0 {
        return Err(Error::invalid("butterworth order must be >= 1"));
    }
    let nyquist = sample_rate / 2.0;
    if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
        return Err(Error::invalid(format!(
            "cutoff {cutoff_hz} Hz must lie in (0, {nyquist}) Hz"
        )));
    }
    let k = 2.0 * sample_rate;
    let wc = k * (PI * cutoff_hz / sample_rate).tan();
    let mut sections = Vec::with_capacity(order.div_ceil(2));

    for i in 0..order / 2 {
        // Conjugate pole pair: s^2 + a1 s + a0 with a0 = wc^2.
        let theta = PI * (2 * i + order + 1) as f64 / (2 * order) as f64;
        let a1 = -2.0 * wc * theta.cos();
        let a0 = wc * wc;
        let d0 = k * k + a1 * k + a0;
        let d1 = 2.0 * (a0 - k * k);
        let d2 = k * k - a1 * k + a0;
        let b = match kind {
            FilterKind::Lowpass => [a0, 2.0 * a0, a0],
            FilterKind::Highpass => [k * k, -2.0 * k * k, k * k],
        };
        sections.push(Biquad {
            b: [b[0] / d0, b[1] / d0, b[2] / d0],
            a: [d1 / d0, d2 / d0],
        });
    }
    if order % 2 == 1 {
        let d0 = k + wc;
        let d1 = wc - k;
        let b = match kind {
            FilterKind::Lowpass => [wc, wc, 0.0],
            FilterKind::Highpass => [k, -k, 0.0],
        };
        sections.push(Biquad {
            b: [b[0] / d0, b[1] / d0, 0.0],
            a: [d1 / d0, 0.0],
        });
    }
    Ok(Sos { sections, sample_rate })
}

fn apply(seg: &AudioSegment, kind: FilterKind, cutoff_hz: f64, order: usize) -> Result<AudioSegment> {
    let sos = butterworth(kind, order, cutoff_hz, seg.sample_rate())?;
    Ok(AudioSegment::from_parts(sos.filter(seg.samples()), seg.sample_rate()))
}

pub fn butterworth_highpass(seg: &AudioSegment, cutoff_hz: f64, order: usize) -> Result<AudioSegment> {
    apply(seg, FilterKind::Highpass, cutoff_hz, order)
}

pub fn butterworth_lowpass(seg: &AudioSegment, cutoff_hz: f64, order: usize) -> Result<AudioSegment> {
    apply(seg, FilterKind::Lowpass, cutoff_hz, order)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minus_three_db_at_cutoff() {
        for order in [1, 2, 3, 4, 8] {
            for kind in [FilterKind::Lowpass, FilterKind::Highpass] {
                let sos = butterworth(kind, order, 17_500.0, 48_000.0).unwrap();
                let db = sos.magnitude_db(17_500.0);
                assert!((db + 3.0103).abs() < 1e-6, "{kind:?} order {order}: {db}");
            }
        }
    }

    #[test]
    fn passband_gain_is_unity() {
        let hp = butterworth(FilterKind::Highpass, 8, 17_500.0, 48_000.0).unwrap();
        assert!((hp.response(23_999.0).norm() - 1.0).abs() < 1e-6);
        let lp = butterworth(FilterKind::Lowpass, 8, 4_000.0, 48_000.0).unwrap();
        assert!((lp.response(0.0).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lowpass_and_highpass_are_power_complementary() {
        let lp = butterworth(FilterKind::Lowpass, 8, 17_500.0, 48_000.0).unwrap();
        let hp = butterworth(FilterKind::Highpass, 8, 17_500.0, 48_000.0).unwrap();
        for f in [100.0, 5_000.0, 17_000.0, 17_500.0, 18_000.0, 23_000.0] {
            let p = lp.response(f).norm_sqr() + hp.response(f).norm_sqr();
            assert!((p - 1.0).abs() < 1e-9, "{f}: {p}");
        }
    }

    #[test]
    fn dc_is_removed_by_highpass() {
        let seg = AudioSegment::new(vec![0.7; 48_000], 48_000.0).unwrap();
        let out = butterworth_highpass(&seg, 17_500.0, 8).unwrap();
        assert_eq!(out.len(), seg.len());
        let tail = &out.samples()[4_800..];
        let rms = (tail.iter().map(|x| x * x).sum::<f64>() / tail.len() as f64).sqrt();
        assert!(rms < 1e-6, "{rms}");
    }

    #[test]
    fn cutoff_at_or_above_nyquist_errors() {
        assert!(butterworth(FilterKind::Highpass, 8, 24_000.0, 48_000.0).is_err());
        assert!(butterworth(FilterKind::Highpass, 8, 30_000.0, 48_000.0).is_err());
        assert!(butterworth(FilterKind::Highpass, 0, 1_000.0, 48_000.0).is_err());
        assert!(butterworth(FilterKind::Highpass, 8, 0.0, 48_000.0).is_err());
    }

    #[test]
    fn filtering_is_linear() {
        let x: Vec<f64> = (0..5000).map(|i| ((i * 7919) % 1000) as f64 / 500.0 - 1.0).collect();
        let sos = butterworth(FilterKind::Highpass, 8, 17_500.0, 48_000.0).unwrap();
        let y = sos.filter(&x);
        let alpha = -3.7;
        let xs: Vec<f64> = x.iter().map(|v| v * alpha).collect();
        let ys = sos.filter(&xs);
        for (a, b) in y.iter().zip(&ys) {
            assert!((a * alpha - b).abs() <= 1e-9 * (a * alpha).abs().max(1e-12));
        }
    }
}
