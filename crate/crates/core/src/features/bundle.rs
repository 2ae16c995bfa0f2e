use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use super::{reference_channel, SampleFeatures};
use crate::combo::{ModelSelector, SensorCombo};
use crate::error::{Error, Result};
use crate::gesture::GestureLabel;

#[derive(Debug, Clone, PartialEq)]
pub struct VocalInput {
    /// Pooled difference planes then the reference plane, `[planes, rows, cols]`.
    pub map: Array3<f32>,
    /// Amplitude series of every channel, concatenated.
    pub amp: Vec<f32>,
    /// Pairwise MFCC DTW distances; similarities need the fold's scale.
    pub mfcc_distance: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UltraInput {
    /// Pooled beat maps, one plane per channel.
    pub map: Array3<f32>,
    pub stats: Vec<f32>,
}

/// What one (combination, selector) pair reads from a sample. Branches the
/// selector does not use are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub combo: SensorCombo,
    pub selector: ModelSelector,
    pub label: GestureLabel,
    pub user_id: u32,
    pub vocal: Option<VocalInput>,
    pub ultra: Option<UltraInput>,
    pub imu: Option<Vec<f32>>,
}

fn stack(planes: &[&Array2<f32>]) -> Result<Array3<f32>> {
    let views: Vec<_> = planes.iter().map(|p| p.view().insert_axis(Axis(0))).collect();
    ndarray::concatenate(Axis(0), &views).map_err(|e| Error::dims(e.to_string()))
}

impl FeatureBundle {
    pub fn from_features(f: &SampleFeatures, combo: SensorCombo, selector: ModelSelector) -> Result<Self> {
        selector.check(combo)?;
        let channels = combo.channels();
        let missing = |c: &crate::ChannelName| Error::MissingChannel(c.to_string());
        let vocal = if selector.uses_vocal() {
            let reference = reference_channel(f.mel.keys(), combo)?;
            let m_ref = &f.mel[&reference];
            let mut planes = Vec::with_capacity(channels.len());
            for c in channels.iter().filter(|&&c| c != reference) {
                let m = f.mel.get(c).ok_or_else(|| missing(c))?;
                planes.push(m - m_ref);
            }
            planes.push(m_ref.clone());
            let refs: Vec<&Array2<f32>> = planes.iter().collect();
            let mut amp = Vec::new();
            for c in &channels {
                amp.extend_from_slice(f.amp.get(c).ok_or_else(|| missing(c))?);
            }
            let mut mfcc_distance = Vec::new();
            for (i, a) in channels.iter().enumerate() {
                for b in &channels[i + 1..] {
                    let d = f
                        .mfcc_distance
                        .get(&(*a, *b))
                        .ok_or_else(|| Error::MissingChannel(format!("{a}/{b}")))?;
                    mfcc_distance.push(*d as f32);
                }
            }
            Some(VocalInput {
                map: stack(&refs)?,
                amp,
                mfcc_distance,
            })
        } else {
            None
        };
        let ultra = if selector.uses_ultra() {
            let mut planes = Vec::with_capacity(channels.len());
            let mut stats = Vec::new();
            for c in &channels {
                planes.push(f.beat_map.get(c).ok_or_else(|| missing(c))?);
                stats.extend_from_slice(f.beat_stats.get(c).ok_or_else(|| missing(c))?);
            }
            Some(UltraInput {
                map: stack(&planes)?,
                stats,
            })
        } else {
            None
        };
        let imu = if selector.uses_imu() {
            Some(f.imu.clone().ok_or_else(|| Error::MissingChannel("imu".into()))?)
        } else {
            None
        };
        Ok(Self {
            combo,
            selector,
            label: f.label,
            user_id: f.user_id,
            vocal,
            ultra,
            imu,
        })
    }

    /// Named arrays in a fixed order with their shapes.
    pub fn arrays(&self) -> Vec<(&'static str, Vec<usize>, Vec<f32>)> {
        let mut out = Vec::new();
        if let Some(v) = &self.vocal {
            out.push(("vocal_map", v.map.shape().to_vec(), v.map.iter().copied().collect()));
            out.push(("vocal_amp", vec![v.amp.len()], v.amp.clone()));
            out.push((
                "vocal_mfcc_distance",
                vec![v.mfcc_distance.len()],
                v.mfcc_distance.clone(),
            ));
        }
        if let Some(u) = &self.ultra {
            out.push(("ultra_map", u.map.shape().to_vec(), u.map.iter().copied().collect()));
            out.push(("ultra_stats", vec![u.stats.len()], u.stats.clone()));
        }
        if let Some(i) = &self.imu {
            out.push(("imu", vec![i.len()], i.clone()));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the binary file, in values.
    pub offset: usize,
}

/// JSON sidecar describing a bundle's binary payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleHeader {
    pub version: u32,
    pub combo: SensorCombo,
    pub selector: ModelSelector,
    pub label: GestureLabel,
    pub user_id: u32,
    pub config_hash: String,
    pub arrays: Vec<ArrayEntry>,
}

const BUNDLE_VERSION: u32 = 1;

/// Writes `<stem>.bin` (little-endian f32) and `<stem>.json`.
pub fn write_bundle(stem: &Path, bundle: &FeatureBundle, config_hash: &str) -> Result<()> {
    let mut payload = Vec::new();
    let mut arrays = Vec::new();
    let mut offset = 0;
    for (name, shape, values) in bundle.arrays() {
        arrays.push(ArrayEntry {
            name: name.to_string(),
            shape,
            offset,
        });
        offset += values.len();
        for v in values {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = BundleHeader {
        version: BUNDLE_VERSION,
        combo: bundle.combo,
        selector: bundle.selector,
        label: bundle.label,
        user_id: bundle.user_id,
        config_hash: config_hash.to_string(),
        arrays,
    };
    fs::write(stem.with_extension("bin"), payload)?;
    fs::write(stem.with_extension("json"), serde_json::to_vec_pretty(&header)?)?;
    Ok(())
}

pub fn read_bundle(stem: &Path) -> Result<(FeatureBundle, BundleHeader)> {
    let header: BundleHeader = serde_json::from_slice(&fs::read(stem.with_extension("json"))?)?;
    if header.version != BUNDLE_VERSION {
        return Err(Error::dataset(stem, format!("bundle version {}", header.version)));
    }
    let bytes = fs::read(stem.with_extension("bin"))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::dataset(stem, "payload is not a whole number of f32 values"));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let get = |name: &str| -> Result<Option<(Vec<usize>, Vec<f32>)>> {
        let Some(e) = header.arrays.iter().find(|e| e.name == name) else {
            return Ok(None);
        };
        let len: usize = e.shape.iter().product();
        let slice = values
            .get(e.offset..e.offset + len)
            .ok_or_else(|| Error::dataset(stem, format!("array {name} runs past the payload")))?;
        Ok(Some((e.shape.clone(), slice.to_vec())))
    };
    let map3 = |shape: Vec<usize>, v: Vec<f32>| -> Result<Array3<f32>> {
        if shape.len() != 3 {
            return Err(Error::dims(format!("map shape {shape:?}")));
        }
        Array3::from_shape_vec((shape[0], shape[1], shape[2]), v).map_err(|e| Error::dims(e.to_string()))
    };
    let vocal = match (get("vocal_map")?, get("vocal_amp")?, get("vocal_mfcc_distance")?) {
        (Some((s, m)), Some((_, amp)), Some((_, d))) => Some(VocalInput {
            map: map3(s, m)?,
            amp,
            mfcc_distance: d,
        }),
        _ => None,
    };
    let ultra = match (get("ultra_map")?, get("ultra_stats")?) {
        (Some((s, m)), Some((_, stats))) => Some(UltraInput {
            map: map3(s, m)?,
            stats,
        }),
        _ => None,
    };
    let imu = get("imu")?.map(|(_, v)| v);
    let bundle = FeatureBundle {
        combo: header.combo,
        selector: header.selector,
        label: header.label,
        user_id: header.user_id,
        vocal,
        ultra,
        imu,
    };
    Ok((bundle, header))
}
