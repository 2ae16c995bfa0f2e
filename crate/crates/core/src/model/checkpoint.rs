//! Checkpoint container: magic, version, a JSON header (architecture,
//! normalisation, fusion weights, training log, tensor shapes), then every
//! tensor as little-endian f32.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::TensorShape;
use super::net::{ExtractorConfig, MapBranch, Mlp, State};
use super::normalize::{Normalizer, StatNorm};
use super::train::{EpochLog, Fusion, FusionModel};
use super::FusionWeights;
use crate::combo::{ModelSelector, SensorCombo};
use crate::error::{Error, Result};
use crate::gesture::GestureLabel;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"VAHFCKPT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapArch {
    pub input: [usize; 3],
    pub extractor: ExtractorConfig,
    pub stats_len: usize,
    pub head: Vec<usize>,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArch {
    pub sizes: Vec<usize>,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub config_hash: String,
    pub combo: SensorCombo,
    pub selector: ModelSelector,
    pub classes: Vec<GestureLabel>,
    pub norm: Normalizer,
    pub vocal: Option<MapArch>,
    pub ultra: Option<MapArch>,
    pub imu: Option<MlpArch>,
    pub fusion_weights: Option<FusionWeights>,
    pub fusion_norm: Option<StatNorm>,
    pub fusion_head: Option<MlpArch>,
    pub tensors: Vec<TensorShape>,
    pub log: Vec<EpochLog>,
}

fn map_arch(m: &MapBranch<f32>) -> MapArch {
    let head: Vec<usize> = std::iter::once(m.head.inputs())
        .chain(m.head.layers.iter().map(|l| l.outputs()))
        .collect();
    MapArch {
        input: m.extractor.input,
        extractor: ExtractorConfig {
            widths: m.extractor.blocks.iter().map(|b| b.conv.outputs()).collect(),
            embedding: m.extractor.embedding_len(),
        },
        stats_len: m.stats_len,
        head,
        dropout: m.head.dropout,
    }
}

fn mlp_arch(m: &Mlp<f32>) -> MlpArch {
    MlpArch {
        sizes: std::iter::once(m.inputs())
            .chain(m.layers.iter().map(|l| l.outputs()))
            .collect(),
        dropout: m.dropout,
    }
}

fn build_map(a: &MapArch, rng: &mut ChaCha8Rng) -> Result<MapBranch<f32>> {
    let classes = *a.head.last().ok_or_else(|| Error::Checkpoint("empty head".into()))?;
    let hidden = &a.head[1..a.head.len() - 1];
    let b = MapBranch::new(a.input, a.stats_len, &a.extractor, hidden, classes, a.dropout, rng)?;
    if b.feature_len() != a.head[0] {
        return Err(Error::Checkpoint("head input does not match extractor".into()));
    }
    Ok(b)
}

/// Tensors of every network in the model, in checkpoint order.
fn tensors_mut(model: &mut FusionModel) -> Vec<(String, &mut Array2<f32>)> {
    let mut groups: Vec<(&str, Vec<&mut Array2<f32>>)> = Vec::new();
    if let Some(v) = &mut model.vocal {
        groups.push(("vocal", v.state_mut()));
    }
    if let Some(u) = &mut model.ultra {
        groups.push(("ultra", u.state_mut()));
    }
    if let Some(i) = &mut model.imu {
        groups.push(("imu", i.state_mut()));
    }
    if let Fusion::Feature { head, .. } = &mut model.fusion {
        groups.push(("fusion", head.state_mut()));
    }
    groups
        .into_iter()
        .flat_map(|(prefix, ts)| {
            ts.into_iter()
                .enumerate()
                .map(move |(i, t)| (format!("{prefix}.{i}"), t))
        })
        .collect()
}

pub fn save_checkpoint(path: &Path, model: &FusionModel) -> Result<()> {
    let mut model = model.clone();
    let (fusion_weights, fusion_norm, fusion_head) = match &model.fusion {
        Fusion::Single => (None, None, None),
        Fusion::Logit(w) => (Some(*w), None, None),
        Fusion::Feature { norm, head } => (None, Some(norm.clone()), Some(mlp_arch(head))),
    };
    let mut header = CheckpointHeader {
        version: CHECKPOINT_VERSION,
        config_hash: model.config_hash.clone(),
        combo: model.combo,
        selector: model.selector,
        classes: model.classes.clone(),
        norm: model.norm.clone(),
        vocal: model.vocal.as_ref().map(map_arch),
        ultra: model.ultra.as_ref().map(map_arch),
        imu: model.imu.as_ref().map(mlp_arch),
        fusion_weights,
        fusion_norm,
        fusion_head,
        tensors: Vec::new(),
        log: model.log.clone(),
    };
    let mut payload = Vec::new();
    for (name, t) in tensors_mut(&mut model) {
        header.tensors.push(TensorShape {
            name,
            shape: [t.nrows(), t.ncols()],
        });
        for v in t.iter() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let json = serde_json::to_vec(&header)?;
    let mut bytes = Vec::with_capacity(16 + json.len() + payload.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&json);
    bytes.extend_from_slice(&payload);
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<FusionModel> {
    let bytes = fs::read(path)?;
    let bad = |m: &str| Error::Checkpoint(format!("{}: {m}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fusion = match (&header.fusion_weights, &header.fusion_head) {
        (Some(w), None) => Fusion::Logit(*w),
        (None, Some(a)) => Fusion::Feature {
            norm: header
                .fusion_norm
                .clone()
                .ok_or_else(|| bad("fusion head without normaliser"))?,
            head: Mlp::new(&a.sizes, a.dropout, &mut rng)?,
        },
        (None, None) => Fusion::Single,
        (Some(_), Some(_)) => return Err(bad("both fusion kinds present")),
    };
    let mut model = FusionModel {
        combo: header.combo,
        selector: header.selector,
        config_hash: header.config_hash.clone(),
        classes: header.classes.clone(),
        norm: header.norm.clone(),
        vocal: header.vocal.as_ref().map(|a| build_map(a, &mut rng)).transpose()?,
        ultra: header.ultra.as_ref().map(|a| build_map(a, &mut rng)).transpose()?,
        imu: header
            .imu
            .as_ref()
            .map(|a| Mlp::new(&a.sizes, a.dropout, &mut rng))
            .transpose()?,
        fusion,
        log: header.log.clone(),
    };
    let payload = &bytes[16 + hlen..];
    let mut offset = 0;
    let targets = tensors_mut(&mut model);
    if targets.len() != header.tensors.len() {
        return Err(bad("tensor count does not match architecture"));
    }
    for ((name, t), shape) in targets.into_iter().zip(&header.tensors) {
        if name != shape.name || [t.nrows(), t.ncols()] != shape.shape {
            return Err(bad(&format!("tensor {} does not match architecture", shape.name)));
        }
        let n = t.len();
        let raw = payload
            .get(offset * 4..(offset + n) * 4)
            .ok_or_else(|| bad("truncated payload"))?;
        for (v, c) in t.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        }
        offset += n;
    }
    if offset * 4 != payload.len() {
        return Err(bad("trailing bytes after tensors"));
    }
    Ok(model)
}
