use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelName;
use crate::gesture::GestureLabel;

/// Mouth-to-microphone path of the voice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelPath {
    /// Seconds.
    pub delay: f64,
    pub attenuation_db: f64,
    /// Occlusion low-pass cutoff, Hz; `None` for an open path.
    pub cutoff: Option<f64>,
}

/// Watch-to-microphone path of the chirp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UltraPath {
    pub delay: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureAcousticModel {
    pub label: GestureLabel,
    pub vocal: BTreeMap<ChannelName, ChannelPath>,
    pub ultra: BTreeMap<ChannelName, UltraPath>,
    /// Ring attitude while the gesture is held: roll, pitch, yaw in degrees.
    pub attitude: [f64; 3],
}

/// Inner microphones hear the voice through the head.
const BONE_CUTOFF: f64 = 2_000.0;
/// Direct path from the watch speaker to its own microphone.
const WATCH_SELF: UltraPath = UltraPath {
    delay: 0.02e-3,
    gain: 0.15,
};
/// Cutoff used in place of an open path when shrinking toward the mean.
const OPEN_CUTOFF: f64 = 16_000.0;

type Vocal = (f64, f64, f64);

// (attenuation dB, delay ms, cutoff Hz or 0 for open)
#[rustfmt::skip]
const TABLE: [([Vocal; 4], [f64; 3], [f64; 3]); 9] = [
    //   le_outer            re_outer              watch               ring                 ultra le,re,ring ms   roll pitch yaw
    ([(12.0, 0.45, 0.0), (15.0, 0.45, 5000.0), (10.0, 0.50, 0.0), (11.0, 0.45, 6000.0)], [0.90, 0.25, 0.15], [80.0, 30.0, 0.0]),
    ([(12.0, 0.45, 0.0), (14.0, 0.47, 4000.0), (8.0, 0.35, 0.0), (3.0, 0.15, 0.0)], [1.00, 0.35, 0.20], [90.0, 0.0, 20.0]),
    ([(12.0, 0.45, 0.0), (13.0, 0.45, 6000.0), (9.0, 0.40, 0.0), (7.0, 0.30, 3000.0)], [0.95, 0.45, 0.25], [40.0, 70.0, 0.0]),
    ([(20.0, 0.50, 1200.0), (20.0, 0.50, 1200.0), (6.0, 0.25, 1500.0), (0.0, 0.05, 2500.0)], [0.60, 0.55, 0.30], [0.0, 90.0, 0.0]),
    ([(12.0, 0.45, 0.0), (22.0, 0.50, 1500.0), (12.0, 0.55, 0.0), (12.0, 0.50, 0.0)], [0.85, 0.12, 0.35], [100.0, -20.0, 0.0]),
    ([(13.0, 0.45, 7000.0), (13.0, 0.45, 7000.0), (8.0, 0.30, 0.0), (4.0, 0.15, 5000.0)], [0.65, 0.60, 0.20], [0.0, 60.0, -30.0]),
    ([(10.0, 0.42, 0.0), (18.0, 0.48, 2500.0), (7.0, 0.30, 0.0), (3.0, 0.10, 0.0)], [0.75, 0.50, 0.25], [20.0, 80.0, 30.0]),
    ([(16.0, 0.48, 2500.0), (16.0, 0.48, 2500.0), (9.0, 0.30, 3000.0), (2.0, 0.08, 3500.0)], [0.62, 0.58, 0.18], [-30.0, 100.0, 0.0]),
    ([(12.0, 0.45, 0.0), (12.0, 0.45, 0.0), (18.0, 1.50, 0.0), (19.0, 1.60, 0.0)], [1.90, 1.80, 0.30], [0.0, 0.0, 0.0]),
];

fn ultra_gain(delay_ms: f64, scale: f64) -> f64 {
    scale / (1.0 + delay_ms)
}

fn build(label: usize, vocal4: [Vocal; 4], ultra3: [f64; 3], attitude: [f64; 3]) -> GestureAcousticModel {
    let path = |(att, delay_ms, cut): Vocal| ChannelPath {
        delay: delay_ms * 1e-3,
        attenuation_db: att,
        cutoff: (cut > 0.0).then_some(cut),
    };
    let mut vocal = BTreeMap::new();
    vocal.insert(ChannelName::LeOuter, path(vocal4[0]));
    vocal.insert(ChannelName::ReOuter, path(vocal4[1]));
    vocal.insert(ChannelName::Watch, path(vocal4[2]));
    vocal.insert(ChannelName::Ring, path(vocal4[3]));
    let covers_right_ear = label == GestureLabel::COVER_EAR_WITH_ARCHED_PALM.index();
    vocal.insert(
        ChannelName::LeInner,
        ChannelPath {
            delay: 0.1e-3,
            attenuation_db: 6.0,
            cutoff: Some(BONE_CUTOFF),
        },
    );
    vocal.insert(
        ChannelName::ReInner,
        ChannelPath {
            delay: 0.1e-3,
            // A sealed ear canal boosts bone-conducted sound.
            attenuation_db: if covers_right_ear { 3.0 } else { 6.0 },
            cutoff: Some(BONE_CUTOFF),
        },
    );

    let [le, re, ring] = ultra3;
    let mut ultra = BTreeMap::new();
    let outer = |d: f64| UltraPath {
        delay: d * 1e-3,
        gain: ultra_gain(d, 0.04),
    };
    let inner = |d: f64| UltraPath {
        delay: (d + 0.05) * 1e-3,
        gain: ultra_gain(d, 0.004),
    };
    ultra.insert(ChannelName::LeOuter, outer(le));
    ultra.insert(ChannelName::ReOuter, outer(re));
    ultra.insert(ChannelName::LeInner, inner(le));
    ultra.insert(ChannelName::ReInner, inner(re));
    ultra.insert(ChannelName::Watch, WATCH_SELF);
    ultra.insert(
        ChannelName::Ring,
        UltraPath {
            delay: ring * 1e-3,
            gain: ultra_gain(ring, 0.06),
        },
    );
    GestureAcousticModel {
        label: GestureLabel::new(label as u8).expect("table covers the nine labels"),
        vocal,
        ultra,
        attitude,
    }
}

/// The nine default gesture models. With `confusable`, every parameter is
/// pulled toward the across-gesture mean, keeping only `shrink` of its gap.
pub fn gesture_models(confusable: bool, shrink: f64) -> Vec<GestureAcousticModel> {
    let base: Vec<GestureAcousticModel> = TABLE
        .iter()
        .enumerate()
        .map(|(i, (v, u, a))| build(i, *v, *u, *a))
        .collect();
    if !confusable {
        return base;
    }
    let k = shrink.clamp(0.0, 1.0);
    let n = base.len() as f64;
    let pull = |values: Vec<f64>| -> Vec<f64> {
        let mean = values.iter().sum::<f64>() / n;
        values.iter().map(|v| mean + k * (v - mean)).collect()
    };
    let mut out = base.clone();
    for name in ChannelName::ALL {
        let att = pull(base.iter().map(|m| m.vocal[&name].attenuation_db).collect());
        let delay = pull(base.iter().map(|m| m.vocal[&name].delay).collect());
        let cut = pull(
            base.iter()
                .map(|m| m.vocal[&name].cutoff.unwrap_or(OPEN_CUTOFF).ln())
                .collect(),
        );
        let udelay = pull(base.iter().map(|m| m.ultra[&name].delay).collect());
        let ugain = pull(base.iter().map(|m| m.ultra[&name].gain).collect());
        for (i, m) in out.iter_mut().enumerate() {
            let p = m.vocal.get_mut(&name).expect("all channels present");
            p.attenuation_db = att[i];
            p.delay = delay[i];
            p.cutoff = Some(cut[i].exp());
            let u = m.ultra.get_mut(&name).expect("all channels present");
            u.delay = udelay[i];
            u.gain = ugain[i];
        }
    }
    for axis in 0..3 {
        let a = pull(base.iter().map(|m| m.attitude[axis]).collect());
        for (m, v) in out.iter_mut().zip(a) {
            m.attitude[axis] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameters_in_range() {
        for confusable in [false, true] {
            for m in gesture_models(confusable, 0.3) {
                for p in m.vocal.values() {
                    assert!((0.0..=5e-3).contains(&p.delay));
                    assert!((0.0..=30.0).contains(&p.attenuation_db));
                }
                assert_eq!(m.vocal.len(), 6);
                assert_eq!(m.ultra.len(), 6);
            }
        }
    }

    #[test]
    fn models_are_pairwise_distinct() {
        let models = gesture_models(false, 1.0);
        for i in 0..models.len() {
            for j in i + 1..models.len() {
                assert_ne!(models[i].vocal, models[j].vocal, "{i} {j}");
            }
        }
    }

    #[test]
    fn confusable_shrinks_gaps() {
        let a = gesture_models(false, 0.3);
        let b = gesture_models(true, 0.3);
        let spread = |ms: &[GestureAcousticModel]| {
            let v: Vec<f64> = ms
                .iter()
                .map(|m| m.vocal[&ChannelName::ReOuter].attenuation_db)
                .collect();
            v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
        };
        assert!((spread(&b) - 0.3 * spread(&a)).abs() < 1e-9);
    }
}
