use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::{butterworth, AudioSegment, FilterKind};
use crate::error::{Error, Result};

/// The twenty voice commands read during recording.
pub const COMMANDS: [&str; 20] = [
    "Text Mom.",
    "Read my messages.",
    "Who is calling?",
    "Set an alarm for eight o'clock.",
    "Pay with Apple Pay.",
    "Transfer 20 yuan to Amy.",
    "Remind me to pick up the clothes.",
    "What is my plan today?",
    "Play my favorite song.",
    "Turn on the living room lights.",
    "Turn the temperature up to 24 degrees.",
    "Show the photos taken today.",
    "Find the popular restaurants nearby.",
    "What is the latest movie?",
    "How to take a holiday on National Day?",
    "Buy train tickets to Beijing.",
    "How is the weather today?",
    "Open Voice Memos.",
    "How to go to the nearest metro station?",
    "Countdown 20 minutes.",
];

pub const VOICE_RATE: f64 = 48_000.0;

/// Speaker traits shared by every utterance of one simulated user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoiceProfile {
    /// Mean fundamental frequency, Hz.
    pub pitch: f64,
    /// Formant scale (vocal tract length), around 1.
    pub formant_scale: f64,
    /// Peak amplitude of the dry source.
    pub level: f64,
}

impl Default for VoiceProfile {
    fn default() -> Self {
        Self {
            pitch: 140.0,
            formant_scale: 1.0,
            level: 0.25,
        }
    }
}

impl VoiceProfile {
    pub fn random(rng: &mut impl Rng) -> Self {
        Self {
            pitch: rng.random_range(100.0..220.0),
            formant_scale: rng.random_range(0.9..1.15),
            level: rng.random_range(0.2..0.3),
        }
    }
}

pub fn command_text(command_id: u8) -> Result<&'static str> {
    COMMANDS
        .get((command_id as usize).wrapping_sub(1))
        .copied()
        .ok_or_else(|| Error::invalid(format!("unknown command {command_id}")))
}

fn syllables(text: &str) -> usize {
    // Vowel groups, a rough syllable count; numerals read as two syllables.
    let mut count = 0;
    let mut prev_vowel = false;
    for c in text.chars() {
        let v = "aeiouyAEIOUY".contains(c);
        if v && !prev_vowel {
            count += 1;
        }
        if c.is_ascii_digit() && !prev_vowel {
            count += 1;
        }
        prev_vowel = v || c.is_ascii_digit();
    }
    count.max(1)
}

/// Vowel formant triplets, Hz.
const VOWELS: [[f64; 3]; 5] = [
    [730.0, 1090.0, 2440.0],
    [530.0, 1840.0, 2480.0],
    [270.0, 2290.0, 3010.0],
    [570.0, 840.0, 2410.0],
    [300.0, 870.0, 2240.0],
];

fn resonator(freq: f64, bw: f64, rate: f64) -> ([f64; 3], [f64; 2]) {
    let r = (-PI * bw / rate).exp();
    let theta = 2.0 * PI * freq / rate;
    let a1 = -2.0 * r * theta.cos();
    let a2 = r * r;
    // Unit gain at the centre frequency.
    let g = (1.0 - r) * (1.0 - 2.0 * r * (2.0 * theta).cos() + r * r).sqrt();
    ([g, 0.0, 0.0], [a1, a2])
}

pub fn synth_voice(command_id: u8, seed: u64) -> Result<AudioSegment> {
    synth_voice_with(command_id, seed, &VoiceProfile::default())
}

/// Formant-filtered glottal pulse train, one vowel per syllable, 1.5 to 3.5 s
/// long and band-limited to 100 Hz to 6 kHz.
pub fn synth_voice_with(command_id: u8, seed: u64, profile: &VoiceProfile) -> Result<AudioSegment> {
    let text = command_text(command_id)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((command_id as u64) << 40));
    let n_syl = syllables(text);
    let duration = (0.16 * n_syl as f64 + rng.random_range(0.7..1.1)).clamp(1.5, 3.5);
    let rate = VOICE_RATE;
    let n = (duration * rate).round() as usize;

    let syl_len = duration / n_syl as f64;
    let vowels: Vec<usize> = (0..n_syl).map(|_| rng.random_range(0..VOWELS.len())).collect();
    let accents: Vec<f64> = (0..n_syl).map(|_| rng.random_range(0.6..1.0)).collect();
    let vibrato = rng.random_range(4.0..6.0);
    let drift = rng.random_range(-0.15..0.05);

    // Band-limited pulses: a short Hann-windowed sinc at each glottal closure.
    let mut source = vec![0.0; n];
    let half = 16i64;
    let mut t = 0.0;
    while t < duration {
        let u = t / duration;
        let f0 = profile.pitch * (1.0 + drift * u) * (1.0 + 0.02 * (2.0 * PI * vibrato * t).sin());
        let centre = t * rate;
        let base = centre.floor() as i64;
        for k in -half..=half {
            let idx = base + k;
            if idx < 0 || idx >= n as i64 {
                continue;
            }
            let x = idx as f64 - centre;
            let w = 0.5 + 0.5 * (PI * x / (half as f64 + 1.0)).cos();
            let cut = 0.25;
            let s = if x.abs() < 1e-12 {
                1.0
            } else {
                (PI * cut * x).sin() / (PI * cut * x) * cut
            };
            source[idx as usize] += w * s;
        }
        t += 1.0 / f0;
    }

    // Parallel vowel formants, coefficients refreshed every 10 ms.
    let block = (0.010 * rate) as usize;
    let mut out = vec![0.0; n];
    let mut state = [[0.0f64; 2]; 3];
    for start in (0..n).step_by(block) {
        let t = start as f64 / rate;
        let s = ((t / syl_len) as usize).min(n_syl - 1);
        let next = (s + 1).min(n_syl - 1);
        let frac = (t / syl_len - s as f64).clamp(0.0, 1.0);
        let blend = if frac > 0.8 { (frac - 0.8) / 0.2 } else { 0.0 };
        for (f, st) in state.iter_mut().enumerate() {
            let freq = profile.formant_scale * (VOWELS[vowels[s]][f] * (1.0 - blend) + VOWELS[vowels[next]][f] * blend);
            let (b, a) = resonator(freq, 80.0 + 40.0 * f as f64, rate);
            let weight = [1.0, 0.6, 0.3][f];
            for i in start..(start + block).min(n) {
                let y = b[0] * source[i] - a[0] * st[0] - a[1] * st[1];
                st[1] = st[0];
                st[0] = y;
                out[i] += weight * y;
            }
        }
    }

    // Syllable envelope never fully closes inside the utterance.
    for (i, v) in out.iter_mut().enumerate() {
        let t = i as f64 / rate;
        let s = ((t / syl_len) as usize).min(n_syl - 1);
        let phase = t / syl_len - s as f64;
        let env = accents[s] * (0.35 + 0.65 * (PI * phase).sin().powi(2));
        let fade = (t / 0.02).min((duration - t) / 0.02).clamp(0.0, 1.0);
        *v *= env * fade;
    }

    let hp = butterworth(FilterKind::Highpass, 4, 100.0, rate)?;
    let lp = butterworth(FilterKind::Lowpass, 8, 6_000.0, rate)?;
    let mut y = lp.filter(&hp.filter(&out));
    let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = profile.level / peak;
        y.iter_mut().for_each(|v| *v *= g);
    }
    AudioSegment::new(y, rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let a = synth_voice(4, 9).unwrap();
        let b = synth_voice(4, 9).unwrap();
        assert_eq!(a, b);
        for id in 1..=20 {
            let v = synth_voice(id, 1).unwrap();
            assert!((1.5..=3.5).contains(&v.duration()), "{id}: {}", v.duration());
        }
        assert!(synth_voice(0, 1).is_err());
        assert!(synth_voice(21, 1).is_err());
    }
}
