use super::{GestureSample, PreprocessConfig, RawSample, SampleMeta};
use crate::dsp::{butterworth, resample_to, AudioSegment, FilterKind};
use crate::error::{Error, Result};

/// Complementary Butterworth pair at `cutoff`: `(low, high)` at the input rate.
pub fn band_split(seg: &AudioSegment, cutoff: f64, order: usize) -> Result<(AudioSegment, AudioSegment)> {
    let rate = seg.sample_rate();
    let lp = butterworth(FilterKind::Lowpass, order, cutoff, rate)?;
    let hp = butterworth(FilterKind::Highpass, order, cutoff, rate)?;
    Ok((
        AudioSegment::from_parts(lp.filter(seg.samples()), rate),
        AudioSegment::from_parts(hp.filter(seg.samples()), rate),
    ))
}

/// Ultrasonic band at the native rate, vocal band resampled to `cfg.vocal_rate`.
pub fn split_bands(sample: &RawSample, meta: &SampleMeta, cfg: &PreprocessConfig) -> Result<GestureSample> {
    if sample.channels.is_empty() {
        return Err(Error::Empty("sample without channels"));
    }
    let mut vocal = std::collections::BTreeMap::new();
    let mut ultra = std::collections::BTreeMap::new();
    for (&name, seg) in &sample.channels {
        let (low, high) = band_split(seg, cfg.band_cutoff, cfg.band_order)?;
        vocal.insert(name, resample_to(&low, cfg.vocal_rate)?);
        ultra.insert(name, high);
    }
    Ok(GestureSample {
        vocal,
        ultra,
        imu_window: sample.imu.clone(),
        label: meta.label,
        user_id: meta.user_id,
        command_id: meta.command_id,
        posture: meta.posture,
        start: sample.start,
        end: sample.end,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    fn tone(f: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * f * i as f64 / 48_000.0).sin()).collect()
    }

    fn tail_energy(x: &[f64]) -> f64 {
        x[x.len() / 4..].iter().map(|v| v * v).sum()
    }

    #[test]
    fn tones_land_in_their_bands() {
        let n = 48_000;
        let lo = tone(1_000.0, n);
        let hi = tone(20_000.0, n);
        let mix: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| a + b).collect();
        let (l, h) = band_split(&AudioSegment::new(mix, 48_000.0).unwrap(), 17_500.0, 8).unwrap();
        let (el, eh) = (tail_energy(&lo), tail_energy(&hi));
        // Low band keeps the 1 kHz tone and rejects the 20 kHz one, and vice versa.
        let (l_only, _) = band_split(&AudioSegment::new(lo, 48_000.0).unwrap(), 17_500.0, 8).unwrap();
        let (_, h_only) = band_split(&AudioSegment::new(hi, 48_000.0).unwrap(), 17_500.0, 8).unwrap();
        assert!(tail_energy(l_only.samples()) >= 0.99 * el);
        assert!(tail_energy(h_only.samples()) >= 0.99 * eh);
        assert!(tail_energy(l.samples()) < 1.02 * el);
        assert!(tail_energy(h.samples()) < 1.02 * eh);
    }

    #[test]
    fn noise_energy_is_conserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..96_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let seg = AudioSegment::new(x, 48_000.0).unwrap();
        let (l, h) = band_split(&seg, 17_500.0, 8).unwrap();
        let ratio = (l.energy() + h.energy()) / seg.energy();
        assert!((0.95..=1.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn cutoff_tone_splits_evenly() {
        let seg = AudioSegment::new(tone(17_500.0, 48_000), 48_000.0).unwrap();
        let (l, h) = band_split(&seg, 17_500.0, 8).unwrap();
        let total = tail_energy(seg.samples());
        let db = |e: f64| 10.0 * (e / total).log10();
        assert!((db(tail_energy(l.samples())) + 3.01).abs() < 0.3);
        assert!((db(tail_energy(h.samples())) + 3.01).abs() < 0.3);
    }
}
