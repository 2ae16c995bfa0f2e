//! Trainable classifiers: the map extractor, MLP heads, logit- and
//! feature-level fusion, and the training loop.

mod checkpoint;
pub mod layers;
pub mod net;
mod normalize;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader, CHECKPOINT_VERSION};
pub use layers::Scalar;
pub use net::{Extractor, ExtractorConfig, MapBranch, Mlp};
pub use normalize::{MapNorm, Normalizer, StatNorm};
pub use train::{
    assemble, branch_inputs, predict, predict_batch, train, train_branch, BranchInputs, BranchKind, BranchNet,
    EpochLog, Fusion, FusionModel, TrainedBranch,
};

/// Number of gesture classes every head emits.
pub const CLASSES: usize = crate::gesture::GestureLabel::COUNT;

/// Stop before `max_epochs` once the training loss has settled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EarlyStop {
    /// Never stop before this epoch.
    pub min_epochs: usize,
    /// Stop when the epoch's mean training loss falls below this.
    pub loss_below: f64,
    /// Stop after this many epochs without a `min_delta` improvement.
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self {
            min_epochs: 10,
            loss_below: 0.02,
            patience: 8,
            min_delta: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub dropout: f64,
    pub lr0: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Linear ramp over the first ten epochs; without it the rate starts at `lr0`.
    pub warmup: bool,
    /// Autoencoder epochs that initialise each extractor; 0 means random init.
    pub warm_start_epochs: usize,
    pub extractor: ExtractorConfig,
    pub hidden: Vec<usize>,
    pub early_stop: Option<EarlyStop>,
    /// Full-batch steps for learning the logit-fusion weights.
    pub fusion_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            dropout: 0.5,
            lr0: 0.01,
            momentum: 0.9,
            batch_size: 32,
            seed: 0,
            warmup: true,
            warm_start_epochs: 5,
            extractor: ExtractorConfig::default(),
            hidden: vec![512, 512],
            early_stop: Some(EarlyStop::default()),
            fusion_steps: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("max_epochs and batch_size must be positive"));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be positive", self.lr0)));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("momentum and dropout must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Learning rate for 1-based epoch `n`.
pub fn lr_at(n: usize, cfg: &TrainConfig) -> Result<f64> {
    if n < 1 {
        return Err(Error::invalid("epochs are counted from 1"));
    }
    Ok(if n <= 10 {
        if cfg.warmup {
            0.1 * n as f64 * cfg.lr0
        } else {
            cfg.lr0
        }
    } else {
        0.97f64.powi((n - 10) as i32) * cfg.lr0
    })
}

/// Weights of the vocal, ultrasound and IMU logits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl FusionWeights {
    /// `1 / k` for each of the `k` active branches, 0 for the rest.
    pub fn for_active(active: [bool; 3]) -> Result<Self> {
        let k = active.iter().filter(|&&x| x).count();
        if k == 0 {
            return Err(Error::invalid("logit fusion needs an active branch"));
        }
        let w = |on: bool| if on { 1.0 / k as f64 } else { 0.0 };
        Ok(Self {
            a: w(active[0]),
            b: w(active[1]),
            c: w(active[2]),
        })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }
}

/// Weighted sum of per-branch logits. Absent branches pass an all-zero vector.
pub fn fuse_logits<T: Scalar>(l_v: &[T], l_u: &[T], l_i: &[T], w: &FusionWeights) -> Result<Vec<T>> {
    for (name, l) in [("vocal", l_v), ("ultrasound", l_u), ("imu", l_i)] {
        if l.len() != CLASSES {
            return Err(Error::dims(format!(
                "{name} logits have {} entries, need {CLASSES}",
                l.len()
            )));
        }
    }
    let [a, b, c] = w.as_array().map(layers::c::<T>);
    Ok((0..CLASSES).map(|k| a * l_v[k] + b * l_u[k] + c * l_i[k]).collect())
}

/// Concatenates (vocal, ultrasound, imu) features and runs the fusion head.
/// Absent branches pass an empty slice.
pub fn fuse_features<T: Scalar>(f_v: &[T], f_u: &[T], f_i: &[T], head: &Mlp<T>) -> Result<Vec<T>> {
    let total = f_v.len() + f_u.len() + f_i.len();
    if total != head.inputs() {
        return Err(Error::dims(format!(
            "fusion head takes {} features, got {total}",
            head.inputs()
        )));
    }
    let mut x = Vec::with_capacity(total);
    x.extend_from_slice(f_v);
    x.extend_from_slice(f_u);
    x.extend_from_slice(f_i);
    let x = ndarray::Array2::from_shape_vec((1, total), x).map_err(|e| Error::dims(e.to_string()))?;
    Ok(head.forward(&x)?.into_raw_vec_and_offset().0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_matches_formula() {
        let cfg = TrainConfig::default();
        let lr0 = cfg.lr0;
        assert_eq!(lr_at(1, &cfg).unwrap(), 0.1 * lr0);
        assert!((lr_at(10, &cfg).unwrap() - lr0).abs() < 1e-15);
        assert!((lr_at(11, &cfg).unwrap() - 0.97 * lr0).abs() < 1e-15);
        assert!(lr_at(0, &cfg).is_err());
        let flat = TrainConfig { warmup: false, ..cfg };
        assert_eq!(lr_at(3, &flat).unwrap(), lr0);
    }

    #[test]
    fn fusion_weight_init() {
        let w = FusionWeights::for_active([true, false, true]).unwrap();
        assert_eq!(w.as_array(), [0.5, 0.0, 0.5]);
        assert!(FusionWeights::for_active([false; 3]).is_err());
    }

    #[test]
    fn logit_fusion_cases() {
        let v: Vec<f64> = (0..9).map(|i| i as f64 - 3.0).collect();
        let u: Vec<f64> = (0..9).map(|i| (i * i) as f64).collect();
        let z = vec![0.0; 9];
        let only_v = FusionWeights { a: 1.0, b: 0.0, c: 0.0 };
        assert_eq!(fuse_logits(&v, &u, &z, &only_v).unwrap(), v);
        let none = FusionWeights { a: 0.0, b: 0.0, c: 0.0 };
        assert_eq!(fuse_logits(&v, &u, &u, &none).unwrap(), z);
        assert!(fuse_logits(&v[..8], &u, &z, &only_v).is_err());
    }
}
