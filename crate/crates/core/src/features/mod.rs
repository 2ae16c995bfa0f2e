//! Per-sample inputs of the vocal, ultrasonic and IMU branches.
//!
//! [`SampleFeatures`] holds everything that does not depend on the sensor
//! combination; [`FeatureBundle`] is the slice of it one (combination,
//! selector) pair consumes.

mod bundle;
mod vocal;

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use bundle::{read_bundle, write_bundle, BundleHeader, FeatureBundle, UltraInput, VocalInput};
pub use vocal::{
    mfcc_segments, pairwise_mfcc_distances, pairwise_mfcc_similarity, reference_channel, segment_distance, similarity,
    vocal_difference_frame,
};

use crate::channel::ChannelName;
use crate::combo::{ModelSelector, SensorCombo};
use crate::dsp::{amplitude_series, mel_spectrogram_with, Cost, MelConfig, AMPLITUDE_SERIES_LEN};
use crate::error::{Error, Result};
use crate::fmcw::{beat_spectrum, dechirp_channels, FmcwConfig};
use crate::gesture::{GestureLabel, Posture};
use crate::preprocess::{GestureSample, ImuStream};

/// Values per IMU frame: accel xyz, gyro xyz, quaternion wxyz.
pub const IMU_VALUES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub mel: MelConfig,
    pub n_mfcc: usize,
    pub mfcc_frame: usize,
    pub mfcc_stride: usize,
    pub dtw_cost: Cost,
    pub amp_window: usize,
    pub amp_stride: usize,
    pub fmcw: FmcwConfig,
    pub imu_frames: usize,
    /// Average-pooling factors (rows, columns) applied to every map before it
    /// reaches an extractor.
    pub map_pool: [usize; 2],
    /// Channel whose own chirp fixes the sweep timing.
    pub timing_channel: ChannelName,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            mel: MelConfig::default(),
            n_mfcc: 13,
            mfcc_frame: 20,
            mfcc_stride: 10,
            dtw_cost: Cost::Euclidean,
            amp_window: 200,
            amp_stride: 200,
            fmcw: FmcwConfig::default(),
            imu_frames: 400,
            map_pool: [8, 10],
            timing_channel: ChannelName::Watch,
        }
    }
}

impl FeatureConfig {
    /// Short digest of the serialized configuration.
    pub fn hash(&self) -> String {
        config_hash(self)
    }

    pub fn pooled_shape(&self, rows: usize, cols: usize) -> (usize, usize) {
        (
            rows.div_ceil(self.map_pool[0].max(1)),
            cols.div_ceil(self.map_pool[1].max(1)),
        )
    }
}

pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("configs serialize");
    let digest = Sha256::digest(&json);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Block means; edge blocks average only the cells they cover.
pub fn avg_pool(map: ArrayView2<f64>, pool: [usize; 2]) -> Array2<f64> {
    let (ph, pw) = (pool[0].max(1), pool[1].max(1));
    let (h, w) = map.dim();
    let (oh, ow) = (h.div_ceil(ph), w.div_ceil(pw));
    Array2::from_shape_fn((oh, ow), |(i, j)| {
        let block = map.slice(ndarray::s![
            i * ph..((i + 1) * ph).min(h),
            j * pw..((j + 1) * pw).min(w)
        ]);
        block.mean().unwrap_or(0.0)
    })
}

/// The central `frames` IMU frames, zero-padded evenly when shorter,
/// flattened frame by frame.
pub fn imu_window(stream: &ImuStream, frames: usize) -> Result<Vec<f64>> {
    if stream.is_empty() {
        return Err(Error::Empty("imu stream"));
    }
    let n = stream.len();
    let mut out = vec![0.0; frames * IMU_VALUES];
    let (src, dst, count) = if n >= frames {
        ((n - frames) / 2, 0, frames)
    } else {
        (0, (frames - n) / 2, n)
    };
    for k in 0..count {
        let v = stream.rows[src + k].values();
        out[(dst + k) * IMU_VALUES..(dst + k + 1) * IMU_VALUES].copy_from_slice(&v);
    }
    Ok(out)
}

/// Combination-independent features of one sample. Maps are already pooled.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFeatures {
    pub label: GestureLabel,
    pub user_id: u32,
    pub command_id: u8,
    pub posture: Posture,
    pub mel: BTreeMap<ChannelName, Array2<f32>>,
    pub amp: BTreeMap<ChannelName, Vec<f32>>,
    /// DTW distance per unordered pair `(a, b)` with `a < b`.
    pub mfcc_distance: BTreeMap<(ChannelName, ChannelName), f64>,
    pub beat_map: BTreeMap<ChannelName, Array2<f32>>,
    /// Peak-frequency series then peak-amplitude series.
    pub beat_stats: BTreeMap<ChannelName, Vec<f32>>,
    pub imu: Option<Vec<f32>>,
}

fn to_f32(values: impl IntoIterator<Item = f64>) -> Vec<f32> {
    values.into_iter().map(|v| v as f32).collect()
}

/// Compute every per-channel feature of `sample`. Ultrasonic features need the
/// timing channel; without it they are left empty.
pub fn sample_features(sample: &GestureSample, cfg: &FeatureConfig) -> Result<SampleFeatures> {
    let mut mel = BTreeMap::new();
    let mut amp = BTreeMap::new();
    for (&c, seg) in &sample.vocal {
        let m = mel_spectrogram_with(seg, &cfg.mel)?;
        mel.insert(c, avg_pool(m.values.view(), cfg.map_pool).mapv(|v| v as f32));
        let a = amplitude_series(seg, cfg.amp_window, cfg.amp_stride);
        debug_assert_eq!(a.len(), AMPLITUDE_SERIES_LEN);
        amp.insert(c, to_f32(a));
    }
    let mfcc_distance = if sample.vocal.len() >= 2 {
        pairwise_mfcc_distances(&sample.vocal, cfg)?.into_iter().collect()
    } else {
        BTreeMap::new()
    };

    let mut beat_map = BTreeMap::new();
    let mut beat_stats = BTreeMap::new();
    if sample.ultra.contains_key(&cfg.timing_channel) {
        let beats = dechirp_channels(&sample.ultra, cfg.timing_channel, &cfg.fmcw)?;
        for (c, beat) in &beats {
            let frames = beat_spectrum(beat, &cfg.fmcw)?;
            beat_map.insert(*c, avg_pool(frames.map.view(), cfg.map_pool).mapv(|v| v as f32));
            let n = cfg.fmcw.series_len;
            let mut stats = crate::dsp::pad_or_truncate(&frames.peak_hz, n);
            stats.extend(crate::dsp::pad_or_truncate(&frames.peak_amp, n));
            beat_stats.insert(*c, to_f32(stats));
        }
    }

    let imu = if sample.imu_window.is_empty() {
        None
    } else {
        Some(to_f32(imu_window(&sample.imu_window, cfg.imu_frames)?))
    };
    Ok(SampleFeatures {
        label: sample.label,
        user_id: sample.user_id,
        command_id: sample.command_id,
        posture: sample.posture,
        mel,
        amp,
        mfcc_distance,
        beat_map,
        beat_stats,
        imu,
    })
}

/// Restrict `sample` to the channels of `combo` and extract the features the
/// selector needs.
pub fn extract_bundle(
    sample: &GestureSample,
    combo: SensorCombo,
    selector: ModelSelector,
    cfg: &FeatureConfig,
) -> Result<FeatureBundle> {
    selector.check(combo)?;
    let keep = combo.channels();
    let mut restricted = GestureSample {
        vocal: BTreeMap::new(),
        ultra: BTreeMap::new(),
        imu_window: ImuStream::default(),
        ..sample.clone()
    };
    for c in &keep {
        let v = sample
            .vocal
            .get(c)
            .ok_or_else(|| Error::MissingChannel(c.to_string()))?;
        restricted.vocal.insert(*c, v.clone());
        if selector.uses_ultra() {
            let u = sample
                .ultra
                .get(c)
                .ok_or_else(|| Error::MissingChannel(c.to_string()))?;
            restricted.ultra.insert(*c, u.clone());
        }
    }
    if selector.uses_imu() {
        restricted.imu_window = sample.imu_window.clone();
    }
    let feats = sample_features(&restricted, cfg)?;
    FeatureBundle::from_features(&feats, combo, selector)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::ImuFrame;

    fn stream(n: usize) -> ImuStream {
        ImuStream {
            rows: (0..n)
                .map(|i| ImuFrame {
                    t: i as f64 / 200.0,
                    accel: [i as f64, 0.0, 0.0],
                    gyro: [0.0; 3],
                    quat: [1.0, 0.0, 0.0, 0.0],
                })
                .collect(),
        }
    }

    #[test]
    fn imu_window_shapes() {
        for n in [100, 400, 600] {
            assert_eq!(imu_window(&stream(n), 400).unwrap().len(), 4000);
        }
        let w = imu_window(&stream(600), 400).unwrap();
        assert_eq!(w[0], 100.0);
        let w = imu_window(&stream(100), 400).unwrap();
        assert!(w[..150 * 10].iter().all(|&v| v == 0.0));
        assert_eq!(w[150 * 10 + 6], 1.0);
        assert!(w[250 * 10..].iter().all(|&v| v == 0.0));
        assert!(imu_window(&ImuStream::default(), 400).is_err());
    }

    #[test]
    fn pooling_averages_blocks() {
        let m = Array2::from_shape_fn((4, 5), |(i, j)| (i * 5 + j) as f64);
        let p = avg_pool(m.view(), [2, 2]);
        assert_eq!(p.dim(), (2, 3));
        assert_eq!(p[[0, 0]], 3.0);
        assert_eq!(p[[0, 2]], 6.5);
    }
}
