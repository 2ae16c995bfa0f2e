use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::gestures::gesture_models;
use crate::gesture::GestureLabel;
use crate::preprocess::{ImuFrame, ImuStream, IMU_RATE};

pub const GRAVITY: f64 = 9.81;

/// Unit quaternion `(w, x, y, z)`.
pub type Quat = [f64; 4];

pub fn quat_from_euler_deg(angles: [f64; 3]) -> Quat {
    let [r, p, y] = angles.map(|a| a.to_radians() / 2.0);
    let (sr, cr) = r.sin_cos();
    let (sp, cp) = p.sin_cos();
    let (sy, cy) = y.sin_cos();
    [
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ]
}

/// Rotation angle between two attitudes, degrees.
pub fn quat_angle_deg(a: Quat, b: Quat) -> f64 {
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    (2.0 * dot.abs().min(1.0).acos()).to_degrees()
}

fn axis_angle(q: Quat) -> ([f64; 3], f64) {
    let w = q[0].clamp(-1.0, 1.0);
    let angle = 2.0 * w.acos();
    let s = (1.0 - w * w).sqrt();
    if s < 1e-12 {
        ([1.0, 0.0, 0.0], 0.0)
    } else {
        ([q[1] / s, q[2] / s, q[3] / s], angle)
    }
}

fn from_axis_angle(axis: [f64; 3], angle: f64) -> Quat {
    let (s, c) = (angle / 2.0).sin_cos();
    [c, axis[0] * s, axis[1] * s, axis[2] * s]
}

/// `v` expressed in the body frame of attitude `q`.
fn to_body(q: Quat, v: [f64; 3]) -> [f64; 3] {
    let [w, x, y, z] = q;
    // Rotate by the conjugate: R^T v.
    let r = [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ];
    [0, 1, 2].map(|i| (0..3).map(|j| r[j][i] * v[j]).sum())
}

/// Minimum-jerk reach to a held pose and back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Motion {
    pub start: f64,
    pub rise: f64,
    pub hold_until: f64,
    pub fall: f64,
    pub target: Quat,
}

impl Motion {
    /// Progress toward the target and its first two time derivatives.
    pub fn progress(&self, t: f64) -> (f64, f64, f64) {
        let min_jerk = |u: f64, dur: f64| {
            let s = u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
            let ds = 30.0 * u * u * (1.0 - u) * (1.0 - u) / dur;
            let dds = (60.0 * u - 180.0 * u * u + 120.0 * u * u * u) / (dur * dur);
            (s, ds, dds)
        };
        if t <= self.start {
            (0.0, 0.0, 0.0)
        } else if t < self.start + self.rise {
            min_jerk((t - self.start) / self.rise, self.rise)
        } else if t <= self.hold_until {
            (1.0, 0.0, 0.0)
        } else if t < self.hold_until + self.fall {
            let (s, ds, dds) = min_jerk((t - self.hold_until) / self.fall, self.fall);
            (1.0 - s, -ds, -dds)
        } else {
            (0.0, 0.0, 0.0)
        }
    }
}

/// Impulsive acceleration of a clap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClapSpike {
    pub time: f64,
    pub peak: f64,
}

/// 200 Hz stream over true time `[0, duration)`, timestamps shifted by `offset`.
pub fn imu_track(motions: &[Motion], clap: Option<ClapSpike>, duration: f64, offset: f64, seed: u64) -> ImuStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let accel_noise = Normal::new(0.0, 0.04).expect("valid sigma");
    let gyro_noise = Normal::new(0.0, 0.01).expect("valid sigma");
    let tremor_hz = rng.random_range(8.0..12.0);
    let n = (duration * IMU_RATE).floor() as usize;
    let rows = (0..n)
        .map(|k| {
            let t = k as f64 / IMU_RATE;
            let active = motions.iter().find(|m| t > m.start && t < m.hold_until + m.fall);
            let (quat, gyro_axis, lin) = match active {
                Some(m) => {
                    let (s, ds, dds) = m.progress(t);
                    let (axis, angle) = axis_angle(m.target);
                    let q = from_axis_angle(axis, angle * s);
                    let reach = 0.4 * (angle.to_degrees() / 90.0).min(1.25);
                    let lin = [0.6 * reach * dds, 0.0, 0.8 * reach * dds];
                    (q, axis.map(|a| a * angle * ds), lin)
                }
                None => ([1.0, 0.0, 0.0, 0.0], [0.0; 3], [0.0; 3]),
            };
            let mut world = [lin[0], lin[1], lin[2] + GRAVITY];
            if let Some(c) = clap {
                let d = t - c.time - 0.006;
                world[0] += c.peak * (-d * d / (2.0 * 0.006 * 0.006)).exp();
            }
            let a = to_body(quat, world);
            let tremor = 0.02 * (2.0 * PI * tremor_hz * t).sin();
            ImuFrame {
                t: t + offset,
                accel: [0, 1, 2].map(|i| a[i] + accel_noise.sample(&mut rng)),
                gyro: [0, 1, 2].map(|i| gyro_axis[i] + tremor + gyro_noise.sample(&mut rng)),
                quat,
            }
        })
        .collect();
    ImuStream { rows }
}

/// A 3-s ring recording: rest, reach, then hold the label's attitude.
pub fn synth_imu(label: GestureLabel, seed: u64) -> ImuStream {
    let model = &gesture_models(false, 1.0)[label.index()];
    let motions = if model.attitude == [0.0; 3] {
        Vec::new()
    } else {
        vec![Motion {
            start: 0.5,
            rise: 0.45,
            hold_until: 10.0,
            fall: 0.45,
            target: quat_from_euler_deg(model.attitude),
        }]
    };
    imu_track(&motions, None, 3.0, 0.0, seed)
}
