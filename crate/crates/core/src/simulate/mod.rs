//! Synthetic sessions with known ground truth: a clap, ten ticked utterances
//! spoken while a gesture is held, the watch chirp heard on every microphone,
//! and the ring IMU on its own clock.

mod gestures;
mod imu;
mod propagate;
mod voice;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use gestures::{gesture_models, ChannelPath, GestureAcousticModel, UltraPath};
pub use imu::{imu_track, quat_angle_deg, quat_from_euler_deg, synth_imu, ClapSpike, Motion, Quat, GRAVITY};
pub use propagate::{apply_path, fractional_delay, propagate, NoiseSpec, OCCLUSION_ORDER};
pub use voice::{command_text, synth_voice, synth_voice_with, VoiceProfile, COMMANDS, VOICE_RATE};

use crate::channel::ChannelName;
use crate::dsp::AudioSegment;
use crate::error::{Error, Result};
use crate::fmcw::ChirpConfig;
use crate::gesture::{GestureLabel, Posture};
use crate::preprocess::{ImuStream, MultiChannelRecording};

/// Samples per session.
pub const UTTERANCES_PER_SESSION: usize = 10;

/// SplitMix64 over a base seed and a list of tags.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut z = base;
    for &t in tags.iter().chain(std::iter::once(&0x5eed)) {
        z = z.wrapping_add(t).wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub sample_rate: f64,
    pub snr_db: f64,
    pub confusable: bool,
    /// Fraction of each between-gesture gap kept when `confusable` is set.
    pub confusable_shrink: f64,
    pub user_gain_jitter_db: f64,
    pub user_delay_jitter: f64,
    pub user_attitude_jitter_deg: f64,
    pub sample_gain_jitter_db: f64,
    pub sample_delay_jitter: f64,
    pub sample_attitude_jitter_deg: f64,
    pub chirp: ChirpConfig,
    pub clap_level: f64,
    /// Fixed IMU clock offset, seconds; drawn from `[-max, max]` when `None`.
    pub imu_offset: Option<f64>,
    pub imu_offset_max: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            sample_rate: 48_000.0,
            snr_db: 30.0,
            confusable: false,
            confusable_shrink: 0.3,
            user_gain_jitter_db: 3.0,
            user_delay_jitter: 0.2e-3,
            user_attitude_jitter_deg: 8.0,
            sample_gain_jitter_db: 1.0,
            sample_delay_jitter: 0.05e-3,
            sample_attitude_jitter_deg: 3.0,
            chirp: ChirpConfig::default(),
            clap_level: 0.4,
            imu_offset: None,
            imu_offset_max: 0.3,
        }
    }
}

/// What one session records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub user_id: u32,
    pub session: u32,
    pub label: GestureLabel,
    pub commands: Vec<u8>,
    pub posture: Posture,
    /// Overrides the configured SNR when set.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl SessionPlan {
    /// Ten commands drawn without replacement from the twenty.
    pub fn random(user_id: u32, session: u32, label: GestureLabel, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1, user_id as u64, session as u64]));
        let mut pool: Vec<u8> = (1..=COMMANDS.len() as u8).collect();
        let mut commands = Vec::with_capacity(UTTERANCES_PER_SESSION);
        for _ in 0..UTTERANCES_PER_SESSION {
            let i = rng.random_range(0..pool.len());
            commands.push(pool.swap_remove(i));
        }
        let posture = if rng.random_bool(0.5) {
            Posture::Standing
        } else {
            Posture::Sitting
        };
        Self {
            user_id,
            session,
            label,
            commands,
            posture,
            snr_db: None,
            seed,
        }
    }
}

/// One user and gesture per session, sessions in label order.
pub fn default_plans(users: u32, seed: u64) -> Vec<SessionPlan> {
    (0..users)
        .flat_map(|u| GestureLabel::all().map(move |label| SessionPlan::random(u, label.id() as u32, label, seed)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTruth {
    pub tick: f64,
    pub command_id: u8,
    /// Utterance on the recorder clock, seconds.
    pub utterance: [f64; 2],
    pub vocal: BTreeMap<ChannelName, ChannelPath>,
    pub ultra: BTreeMap<ChannelName, UltraPath>,
    pub attitude: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub user_id: u32,
    pub session: u32,
    pub label: GestureLabel,
    pub posture: Posture,
    pub clap_time: f64,
    /// IMU timestamp minus recorder time for the same instant.
    pub imu_offset: f64,
    pub duration: f64,
    pub samples: Vec<SampleTruth>,
}

impl GroundTruth {
    pub fn ticks(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.tick).collect()
    }
}

/// Per-user traits, identical across that user's sessions.
struct UserTraits {
    voice: VoiceProfile,
    gain_db: BTreeMap<ChannelName, f64>,
    delay: BTreeMap<ChannelName, f64>,
    cutoff_scale: BTreeMap<ChannelName, f64>,
    ultra_delay: BTreeMap<ChannelName, f64>,
    attitude: [f64; 3],
}

impl UserTraits {
    fn new(seed: u64, user: u32, cfg: &SimConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[2, user as u64]));
        let voice = VoiceProfile::random(&mut rng);
        let mut sym = |r: f64| if r > 0.0 { rng.random_range(-r..r) } else { 0.0 };
        let mut gain_db = BTreeMap::new();
        let mut delay = BTreeMap::new();
        let mut cutoff_scale = BTreeMap::new();
        let mut ultra_delay = BTreeMap::new();
        for c in ChannelName::ALL {
            gain_db.insert(c, sym(cfg.user_gain_jitter_db));
            delay.insert(c, sym(cfg.user_delay_jitter));
            cutoff_scale.insert(c, 1.0 + sym(0.1));
            let d = if c == ChannelName::Watch {
                0.0
            } else {
                sym(cfg.user_delay_jitter)
            };
            ultra_delay.insert(c, d);
        }
        let a = cfg.user_attitude_jitter_deg;
        let attitude = [sym(a), sym(a), sym(a)];
        Self {
            voice,
            gain_db,
            delay,
            cutoff_scale,
            ultra_delay,
            attitude,
        }
    }
}

const MIN_ULTRA_DELAY: f64 = 0.05e-3;
/// Samples between updates of the moving chirp path.
const PATH_UPDATE: usize = 16;

fn jittered_vocal(
    p: &ChannelPath,
    user: &UserTraits,
    c: ChannelName,
    rng: &mut ChaCha8Rng,
    cfg: &SimConfig,
) -> ChannelPath {
    let g = cfg.sample_gain_jitter_db;
    let d = cfg.sample_delay_jitter;
    ChannelPath {
        delay: (p.delay + user.delay[&c] + if d > 0.0 { rng.random_range(-d..d) } else { 0.0 }).clamp(0.0, 5e-3),
        attenuation_db: (p.attenuation_db + user.gain_db[&c] + if g > 0.0 { rng.random_range(-g..g) } else { 0.0 })
            .clamp(0.0, 30.0),
        cutoff: p.cutoff.map(|f| f * user.cutoff_scale[&c]),
    }
}

fn jittered_ultra(
    p: &UltraPath,
    user: &UserTraits,
    c: ChannelName,
    rng: &mut ChaCha8Rng,
    cfg: &SimConfig,
) -> UltraPath {
    if c == ChannelName::Watch {
        return *p;
    }
    let d = cfg.sample_delay_jitter;
    UltraPath {
        delay: (p.delay + user.ultra_delay[&c] + if d > 0.0 { rng.random_range(-d..d) } else { 0.0 })
            .max(MIN_ULTRA_DELAY),
        gain: p.gain,
    }
}

/// One chirp period sampled finely enough for linear interpolation.
struct ChirpTable {
    values: Vec<f64>,
    step: f64,
    period: f64,
}

impl ChirpTable {
    const OVERSAMPLE: f64 = 64.0;

    fn new(chirp: &ChirpConfig, rate: f64) -> Self {
        let step = 1.0 / (rate * Self::OVERSAMPLE);
        let n = (chirp.period / step).ceil() as usize;
        let values = (0..=n)
            .map(|i| chirp.amplitude * chirp.phase((i as f64 * step).min(chirp.period)).cos())
            .collect();
        Self {
            values,
            step,
            period: chirp.period,
        }
    }

    fn at(&self, t: f64) -> f64 {
        let cycles = t / self.period;
        let pos = (cycles - cycles.floor()) * self.period / self.step;
        let i = (pos as usize).min(self.values.len() - 2);
        let frac = pos - i as f64;
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }
}

/// Gain of the clap on each microphone.
fn clap_gain(c: ChannelName) -> f64 {
    match c {
        ChannelName::LeInner | ChannelName::ReInner => 0.25,
        ChannelName::Watch | ChannelName::Ring => 1.4,
        _ => 1.0,
    }
}

/// Render one session and its ground truth.
pub fn make_session(plan: &SessionPlan, cfg: &SimConfig) -> Result<(MultiChannelRecording, GroundTruth)> {
    if plan.commands.is_empty() {
        return Err(Error::Empty("session plan without commands"));
    }
    for &c in &plan.commands {
        command_text(c)?;
    }
    cfg.chirp.validate()?;
    let rate = cfg.sample_rate;
    let user = UserTraits::new(plan.seed, plan.user_id, cfg);
    let models = gesture_models(cfg.confusable, cfg.confusable_shrink);
    let gam = &models[plan.label.index()];
    let rest = &models[GestureLabel::EMPTY.index()];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(plan.seed, &[3, plan.user_id as u64, plan.session as u64]));

    let clap_time = 1.0 + rng.random_range(0.0..0.2);
    let imu_offset = cfg
        .imu_offset
        .unwrap_or_else(|| rng.random_range(-cfg.imu_offset_max..=cfg.imu_offset_max));

    // Timeline and voices.
    let mut t = clap_time + 1.0 + rng.random_range(0.0..0.3);
    let mut voices = Vec::with_capacity(plan.commands.len());
    let mut samples = Vec::with_capacity(plan.commands.len());
    let mut motions = Vec::with_capacity(plan.commands.len());
    let moves = gam.attitude != [0.0; 3];
    for (k, &cmd) in plan.commands.iter().enumerate() {
        let tick = t;
        let onset = tick + rng.random_range(0.6..0.8);
        let voice_seed = derive_seed(plan.seed, &[4, plan.user_id as u64, plan.session as u64, k as u64]);
        let voice = synth_voice_with(cmd, voice_seed, &user.voice)?;
        let offset_samples = (onset * rate).round() as usize;
        let onset = offset_samples as f64 / rate;
        let end = onset + voice.duration();
        let vocal = ChannelName::ALL
            .iter()
            .map(|&c| (c, jittered_vocal(&gam.vocal[&c], &user, c, &mut rng, cfg)))
            .collect();
        let ultra = ChannelName::ALL
            .iter()
            .map(|&c| (c, jittered_ultra(&gam.ultra[&c], &user, c, &mut rng, cfg)))
            .collect();
        let a = cfg.sample_attitude_jitter_deg;
        let attitude = if moves {
            [0, 1, 2].map(|i| gam.attitude[i] + user.attitude[i] + rng.random_range(-a..=a))
        } else {
            [0.0; 3]
        };
        if moves {
            motions.push(Motion {
                start: tick + 0.1,
                rise: 0.45,
                hold_until: end + 0.15,
                fall: 0.45,
                target: quat_from_euler_deg(attitude),
            });
        }
        samples.push(SampleTruth {
            tick,
            command_id: cmd,
            utterance: [onset, end],
            vocal,
            ultra,
            attitude,
        });
        voices.push((offset_samples, voice));
        t = end + rng.random_range(0.7..0.9);
    }
    let duration = t;
    let n = (duration * rate).round() as usize;

    let mut channels: BTreeMap<ChannelName, Vec<f64>> = ChannelName::ALL.iter().map(|&c| (c, vec![0.0; n])).collect();

    // Clap: a short decaying noise burst.
    let clap_len = (0.03 * rate) as usize;
    let clap_start = (clap_time * rate).round() as usize;
    let mut clap_rng =
        ChaCha8Rng::seed_from_u64(derive_seed(plan.seed, &[5, plan.user_id as u64, plan.session as u64]));
    let burst: Vec<f64> = (0..clap_len)
        .map(|i| {
            let env = (-(i as f64) / (0.004 * rate)).exp();
            cfg.clap_level * env * clap_rng.random_range(-1.0..1.0)
        })
        .collect();
    for (&c, buf) in channels.iter_mut() {
        let g = clap_gain(c);
        for (i, b) in burst.iter().enumerate() {
            buf[clap_start + i] += g * b;
        }
    }

    // Voices along each path.
    for ((offset, voice), truth) in voices.iter().zip(&samples) {
        for (&c, buf) in channels.iter_mut() {
            let heard = apply_path(voice, &truth.vocal[&c])?;
            for (i, v) in heard.samples().iter().enumerate() {
                if let Some(slot) = buf.get_mut(offset + i) {
                    *slot += v;
                }
            }
        }
    }

    // Chirp from the watch, with path delay following the hand.
    let rest_ultra: BTreeMap<ChannelName, UltraPath> = ChannelName::ALL
        .iter()
        .map(|&c| {
            let p = rest.ultra[&c];
            let d = if c == ChannelName::Watch {
                p.delay
            } else {
                (p.delay + user.ultra_delay[&c]).max(MIN_ULTRA_DELAY)
            };
            (c, UltraPath { delay: d, gain: p.gain })
        })
        .collect();
    let slot_motion: Vec<Motion> = samples
        .iter()
        .map(|s| Motion {
            start: s.tick + 0.1,
            rise: 0.45,
            hold_until: s.utterance[1] + 0.15,
            fall: 0.45,
            target: [1.0, 0.0, 0.0, 0.0],
        })
        .collect();
    let chirp = &cfg.chirp;
    let table = ChirpTable::new(chirp, rate);
    for (&c, buf) in channels.iter_mut() {
        let wander_phase = rng.random_range(0.0..std::f64::consts::TAU);
        let r = rest_ultra[&c];
        let held: Vec<UltraPath> = samples.iter().map(|s| s.ultra[&c]).collect();
        let wander = if c == ChannelName::Watch { 0.0 } else { 0.01e-3 };
        let mut slot = 0usize;
        let (mut delay, mut gain) = (r.delay, r.gain);
        for (i, v) in buf.iter_mut().enumerate() {
            let t = i as f64 / rate;
            // Path parameters move slowly; refresh them every few samples.
            if i % PATH_UPDATE == 0 {
                while slot + 1 < slot_motion.len() && t >= slot_motion[slot + 1].start {
                    slot += 1;
                }
                let (s, _, _) = slot_motion[slot].progress(t);
                let g = held[slot];
                delay =
                    r.delay + s * (g.delay - r.delay) + wander * (std::f64::consts::TAU * 0.5 * t + wander_phase).sin();
                gain = r.gain + s * (g.gain - r.gain);
            }
            *v += gain * table.at(t - delay);
        }
    }

    // Sensor noise, a fixed level below the dry voice.
    let snr = plan.snr_db.unwrap_or(cfg.snr_db);
    let reference = voices.first().map_or(0.1, |(_, v)| v.rms());
    let sigma = reference * 10f64.powf(-snr / 20.0);
    let mut audio = BTreeMap::new();
    for (c, mut buf) in channels {
        propagate::add_noise(
            &mut buf,
            sigma,
            derive_seed(
                plan.seed,
                &[6, plan.user_id as u64, plan.session as u64, c.index() as u64],
            ),
        );
        audio.insert(c, AudioSegment::new(buf, rate)?);
    }

    let imu: ImuStream = imu_track(
        &motions,
        Some(ClapSpike {
            time: clap_time,
            peak: 80.0,
        }),
        duration,
        imu_offset,
        derive_seed(plan.seed, &[7, plan.user_id as u64, plan.session as u64]),
    );
    let ticks = samples.iter().map(|s| s.tick).collect();
    let rec = MultiChannelRecording::new(audio, imu, ticks)?;
    let truth = GroundTruth {
        user_id: plan.user_id,
        session: plan.session,
        label: plan.label,
        posture: plan.posture,
        clap_time,
        imu_offset,
        duration,
        samples,
    };
    Ok((rec, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn session_protocol() {
        let plan = SessionPlan::random(0, 3, GestureLabel::COVER_MOUTH_WITH_PALM, 7);
        let (rec, truth) = make_session(&plan, &SimConfig::default()).unwrap();
        assert_eq!(rec.ticks.len(), 10);
        assert_eq!(truth.samples.len(), 10);
        assert_eq!(rec.channels.len(), 6);
        for s in &truth.samples {
            assert!(s.tick < s.utterance[0] && s.utterance[0] < s.utterance[1]);
        }
        let peak = rec
            .channels
            .values()
            .flat_map(|c| c.samples().iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak < 1.0, "{peak}");
    }

    #[test]
    fn seeds_separate_users() {
        let a = make_session(
            &SessionPlan::random(0, 0, GestureLabel::CALLING, 1),
            &SimConfig::default(),
        )
        .unwrap();
        let mut plan = SessionPlan::random(0, 0, GestureLabel::CALLING, 1);
        plan.user_id = 1;
        let b = make_session(&plan, &SimConfig::default()).unwrap();
        assert_ne!(a.0.channels[&ChannelName::ReOuter], b.0.channels[&ChannelName::ReOuter]);
    }

    #[test]
    fn derive_seed_depends_on_every_tag() {
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_ne!(derive_seed(1, &[2]), derive_seed(2, &[2]));
    }
}
