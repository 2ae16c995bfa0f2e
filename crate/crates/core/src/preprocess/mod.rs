//! Raw session recordings to segmented, trimmed, band-separated samples.
//!
//! The pipeline runs clap synchronisation, tick segmentation, energy VAD
//! trimming and the vocal/ultrasound band split, in that order.

mod bands;
mod segment;
mod sync;
mod vad;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use bands::{band_split, split_bands};
pub use segment::{segment_by_ticks, RawSample};
pub use sync::{align_channels, align_channels_with_shift, detect_sync_peak, sync_channel, SyncConfig, SyncSource};
pub use vad::{vad_bounds, vad_channel, vad_trim, VadConfig};

use crate::channel::ChannelName;
use crate::dsp::{AudioSegment, DEFAULT_BUTTERWORTH_ORDER};
use crate::error::{Error, Result};
use crate::gesture::{GestureLabel, Posture};

/// One IMU report: acceleration (m/s^2), angular velocity (rad/s) and the
/// attitude quaternion `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuFrame {
    pub t: f64,
    pub accel: [f64; 3],
    pub gyro: [f64; 3],
    pub quat: [f64; 4],
}

impl ImuFrame {
    /// Values in window order: accel xyz, gyro xyz, quat wxyz.
    pub fn values(&self) -> [f64; 10] {
        let [ax, ay, az] = self.accel;
        let [gx, gy, gz] = self.gyro;
        let [qw, qx, qy, qz] = self.quat;
        [ax, ay, az, gx, gy, gz, qw, qx, qy, qz]
    }
}

pub const IMU_RATE: f64 = 200.0;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImuStream {
    pub rows: Vec<ImuFrame>,
}

impl ImuStream {
    pub fn new(rows: Vec<ImuFrame>) -> Result<Self> {
        let s = Self { rows };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.windows(2).any(|w| w[1].t < w[0].t) {
            return Err(Error::invalid("imu timestamps must be monotone"));
        }
        for (i, r) in self.rows.iter().enumerate() {
            let norm = r.quat.iter().map(|q| q * q).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-3 {
                return Err(Error::invalid(format!("imu quaternion {i} has norm {norm}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows with `start <= t < end`.
    pub fn slice_time(&self, start: f64, end: f64) -> ImuStream {
        let lo = self.rows.partition_point(|r| r.t < start);
        let hi = self.rows.partition_point(|r| r.t < end);
        ImuStream {
            rows: self.rows[lo..hi.max(lo)].to_vec(),
        }
    }

    pub fn shifted(&self, dt: f64) -> ImuStream {
        ImuStream {
            rows: self.rows.iter().map(|r| ImuFrame { t: r.t + dt, ..*r }).collect(),
        }
    }

    /// Index of the row whose timestamp is closest to `t`.
    pub fn nearest_index(&self, t: f64) -> Option<usize> {
        if self.rows.is_empty() {
            return None;
        }
        let i = self.rows.partition_point(|r| r.t < t);
        if i == 0 {
            Some(0)
        } else if i == self.rows.len() {
            Some(i - 1)
        } else if (self.rows[i].t - t).abs() < (t - self.rows[i - 1].t).abs() {
            Some(i)
        } else {
            Some(i - 1)
        }
    }
}

/// Hardware-synchronised audio channels plus the IMU stream and annotation
/// ticks of one recording session.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelRecording {
    pub channels: BTreeMap<ChannelName, AudioSegment>,
    pub imu: ImuStream,
    /// Annotation times, seconds on the recorder clock.
    pub ticks: Vec<f64>,
}

impl MultiChannelRecording {
    pub fn new(channels: BTreeMap<ChannelName, AudioSegment>, imu: ImuStream, ticks: Vec<f64>) -> Result<Self> {
        let rec = Self { channels, imu, ticks };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        let mut it = self.channels.values();
        let first = it.next().ok_or(Error::Empty("recording without audio channels"))?;
        for seg in it {
            if seg.sample_rate() != first.sample_rate() || seg.len() != first.len() {
                return Err(Error::dims("audio channels differ in rate or length"));
            }
        }
        if self.ticks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("ticks must be strictly increasing"));
        }
        self.imu.validate()
    }

    pub fn sample_rate(&self) -> f64 {
        self.channels.values().next().map_or(0.0, |s| s.sample_rate())
    }

    pub fn duration(&self) -> f64 {
        self.channels.values().next().map_or(0.0, |s| s.duration())
    }

    pub fn channel(&self, name: ChannelName) -> Result<&AudioSegment> {
        self.channels
            .get(&name)
            .ok_or_else(|| Error::MissingChannel(name.to_string()))
    }
}

/// Who recorded what, per segmented sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub user_id: u32,
    pub label: GestureLabel,
    pub command_id: u8,
    pub posture: Posture,
}

/// A trimmed utterance with vocal (<= cutoff, resampled) and ultrasonic
/// (>= cutoff, native rate) views of every channel.
#[derive(Debug, Clone, PartialEq)]
pub struct GestureSample {
    pub vocal: BTreeMap<ChannelName, AudioSegment>,
    pub ultra: BTreeMap<ChannelName, AudioSegment>,
    pub imu_window: ImuStream,
    pub label: GestureLabel,
    pub user_id: u32,
    pub command_id: u8,
    pub posture: Posture,
    /// Trimmed span on the recorder clock, seconds.
    pub start: f64,
    pub end: f64,
}

impl GestureSample {
    pub fn channels(&self) -> impl Iterator<Item = ChannelName> + '_ {
        self.vocal.keys().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub sync: SyncConfig,
    pub vad: VadConfig,
    pub band_cutoff: f64,
    pub band_order: usize,
    pub vocal_rate: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            sync: SyncConfig::default(),
            vad: VadConfig::default(),
            band_cutoff: 17_500.0,
            band_order: DEFAULT_BUTTERWORTH_ORDER,
            vocal_rate: 16_000.0,
        }
    }
}

/// Full preprocessing of one session. `commands[i]` is the command read after tick `i`.
pub fn preprocess_session(
    rec: &MultiChannelRecording,
    user_id: u32,
    label: GestureLabel,
    posture: Posture,
    commands: &[u8],
    cfg: &PreprocessConfig,
) -> Result<Vec<GestureSample>> {
    if commands.len() != rec.ticks.len() {
        return Err(Error::dims(format!(
            "{} commands for {} ticks",
            commands.len(),
            rec.ticks.len()
        )));
    }
    let aligned = align_channels(rec, &cfg.sync)?;
    segment_by_ticks(&aligned)?
        .iter()
        .map(|raw| {
            let trimmed = vad_trim(raw, &cfg.vad)?;
            let meta = SampleMeta {
                user_id,
                label,
                command_id: commands[raw.index],
                posture,
            };
            split_bands(&trimmed, &meta, cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(t: f64) -> ImuFrame {
        ImuFrame {
            t,
            accel: [0.0, 0.0, 9.81],
            gyro: [0.0; 3],
            quat: [1.0, 0.0, 0.0, 0.0],
        }
    }

    #[test]
    fn imu_validation() {
        assert!(ImuStream::new(vec![frame(0.0), frame(0.005)]).is_ok());
        assert!(ImuStream::new(vec![frame(0.1), frame(0.0)]).is_err());
        let mut bad = frame(0.0);
        bad.quat = [0.9, 0.0, 0.0, 0.0];
        assert!(ImuStream::new(vec![bad]).is_err());
    }

    #[test]
    fn recording_validation() {
        let mut ch = BTreeMap::new();
        ch.insert(ChannelName::ReOuter, AudioSegment::silence(100, 48_000.0));
        ch.insert(ChannelName::LeOuter, AudioSegment::silence(101, 48_000.0));
        assert!(MultiChannelRecording::new(ch.clone(), ImuStream::default(), vec![0.0]).is_err());
        ch.insert(ChannelName::LeOuter, AudioSegment::silence(100, 48_000.0));
        assert!(MultiChannelRecording::new(ch.clone(), ImuStream::default(), vec![0.0, 0.0]).is_err());
        assert!(MultiChannelRecording::new(ch, ImuStream::default(), vec![0.0, 0.001]).is_ok());
    }

    #[test]
    fn nearest_index_picks_closest() {
        let s = ImuStream::new((0..10).map(|i| frame(i as f64 * 0.005)).collect()).unwrap();
        assert_eq!(s.nearest_index(-1.0), Some(0));
        assert_eq!(s.nearest_index(0.0124), Some(2));
        assert_eq!(s.nearest_index(0.0126), Some(3));
        assert_eq!(s.nearest_index(5.0), Some(9));
        assert_eq!(s.slice_time(0.01, 0.02).len(), 2);
    }
}
