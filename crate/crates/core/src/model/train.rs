use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{c, dropout_mask, softmax_cross_entropy, Linear, Maps, Param};
use super::net::{Extractor, MapBranch, Mlp};
use super::normalize::{vocal_stats_raw, Normalizer, StatNorm};
use super::{lr_at, FusionWeights, TrainConfig, CLASSES};
use crate::combo::{ModelSelector, SensorCombo};
use crate::error::{Error, Result};
use crate::features::FeatureBundle;
use crate::gesture::GestureLabel;
use crate::simulate::derive_seed;

/// Evaluation forwards run in chunks of this many samples.
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchKind {
    Vocal,
    Ultra,
    Imu,
}

impl BranchKind {
    pub const ALL: [BranchKind; 3] = [BranchKind::Vocal, BranchKind::Ultra, BranchKind::Imu];

    pub fn as_str(self) -> &'static str {
        match self {
            BranchKind::Vocal => "vocal",
            BranchKind::Ultra => "ultra",
            BranchKind::Imu => "imu",
        }
    }

    pub fn used_by(selector: ModelSelector) -> Vec<BranchKind> {
        let on = [selector.uses_vocal(), selector.uses_ultra(), selector.uses_imu()];
        Self::ALL
            .into_iter()
            .zip(on)
            .filter(|(_, u)| *u)
            .map(|(k, _)| k)
            .collect()
    }

    /// Seed for a branch. The IMU branch reads the same ring stream in every
    /// combination, so its seed ignores the combination.
    pub fn seed(self, base: u64, combo: SensorCombo) -> u64 {
        match self {
            BranchKind::Imu => derive_seed(base, &[2]),
            k => derive_seed(base, &[k as u64, combo as u64 + 1]),
        }
    }
}

/// Normalised training inputs of one branch, sample-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchInputs {
    pub kind: BranchKind,
    pub n: usize,
    /// `[planes, rows, cols]`; `None` for the IMU branch.
    pub map_shape: Option<[usize; 3]>,
    pub maps: Vec<f32>,
    pub stats_len: usize,
    pub stats: Vec<f32>,
    pub labels: Vec<usize>,
}

impl BranchInputs {
    fn map_len(&self) -> usize {
        self.map_shape.map_or(0, |s| s.iter().product())
    }

    fn batch_maps(&self, idx: &[usize]) -> Result<Maps<f32>> {
        let [p, h, w] = self.map_shape.ok_or_else(|| Error::dims("branch has no maps"))?;
        let len = self.map_len();
        let rows: Vec<&[f32]> = idx.iter().map(|&i| &self.maps[i * len..(i + 1) * len]).collect();
        Maps::from_samples(&rows, p, h, w)
    }

    fn batch_stats(&self, idx: &[usize]) -> Array2<f32> {
        let k = self.stats_len;
        Array2::from_shape_fn((idx.len(), k), |(r, j)| self.stats[idx[r] * k + j])
    }

    fn batch_map_rows(&self, idx: &[usize]) -> Array2<f32> {
        let k = self.map_len();
        Array2::from_shape_fn((idx.len(), k), |(r, j)| self.maps[idx[r] * k + j])
    }

    fn batch_labels(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }
}

/// Builds normalised inputs for `kind` from bundles.
pub fn branch_inputs(bundles: &[FeatureBundle], kind: BranchKind, norm: &Normalizer) -> Result<BranchInputs> {
    let n = bundles.len();
    let mut maps = Vec::new();
    let mut stats = Vec::new();
    let mut map_shape = None;
    let missing = || Error::MissingChannel(kind.as_str().into());
    let unfitted = || Error::invalid(format!("normaliser has no {} statistics", kind.as_str()));
    for b in bundles {
        match kind {
            BranchKind::Vocal => {
                let v = b.vocal.as_ref().ok_or_else(missing)?;
                let mn = norm.vocal_map.as_ref().ok_or_else(unfitted)?;
                mn.apply(&v.map, &mut maps)?;
                map_shape = Some(mn.shape);
                let sn = norm.vocal_stats.as_ref().ok_or_else(unfitted)?;
                sn.apply(&vocal_stats_raw(v, norm.tau), &mut stats)?;
            }
            BranchKind::Ultra => {
                let u = b.ultra.as_ref().ok_or_else(missing)?;
                let mn = norm.ultra_map.as_ref().ok_or_else(unfitted)?;
                mn.apply(&u.map, &mut maps)?;
                map_shape = Some(mn.shape);
                norm.ultra_stats
                    .as_ref()
                    .ok_or_else(unfitted)?
                    .apply(&u.stats, &mut stats)?;
            }
            BranchKind::Imu => {
                let x = b.imu.as_ref().ok_or_else(missing)?;
                norm.imu.as_ref().ok_or_else(unfitted)?.apply(x, &mut stats)?;
            }
        }
    }
    Ok(BranchInputs {
        kind,
        n,
        map_shape,
        maps,
        stats_len: stats.len().checked_div(n).unwrap_or(0),
        stats,
        labels: bundles.iter().map(|b| b.label.index()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub stage: String,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BranchNet {
    Map(MapBranch<f32>),
    Imu(Mlp<f32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedBranch {
    pub kind: BranchKind,
    pub net: BranchNet,
    pub log: Vec<EpochLog>,
}

impl TrainedBranch {
    fn map_branch(&self) -> Option<&MapBranch<f32>> {
        match &self.net {
            BranchNet::Map(m) => Some(m),
            BranchNet::Imu(_) => None,
        }
    }

    fn imu(&self) -> Option<&Mlp<f32>> {
        match &self.net {
            BranchNet::Imu(m) => Some(m),
            BranchNet::Map(_) => None,
        }
    }

    fn eval_chunks(
        &self,
        inputs: &BranchInputs,
        f: impl Fn(&BranchNet, &BranchInputs, &[usize]) -> Result<Array2<f32>>,
    ) -> Result<Array2<f32>> {
        let idx: Vec<usize> = (0..inputs.n).collect();
        let parts: Vec<Array2<f32>> = idx
            .chunks(EVAL_CHUNK)
            .map(|ch| f(&self.net, inputs, ch))
            .collect::<Result<_>>()?;
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        concatenate(Axis(0), &views).map_err(|e| Error::dims(e.to_string()))
    }

    /// Eval-mode logits, `[N, CLASSES]`.
    pub fn logits(&self, inputs: &BranchInputs) -> Result<Array2<f32>> {
        self.eval_chunks(inputs, |net, x, ch| match net {
            BranchNet::Map(m) => m.forward(&x.batch_maps(ch)?, &x.batch_stats(ch)),
            BranchNet::Imu(m) => m.forward(&x.batch_stats(ch)),
        })
    }

    /// Eval-mode branch features used by feature-level fusion.
    pub fn features(&self, inputs: &BranchInputs) -> Result<Array2<f32>> {
        self.eval_chunks(inputs, |net, x, ch| match net {
            BranchNet::Map(m) => m.features(&x.batch_maps(ch)?, &x.batch_stats(ch)),
            BranchNet::Imu(m) => m.hidden(&x.batch_stats(ch)),
        })
    }
}

trait Trainer {
    /// Accumulates gradients for one batch; returns (mean loss, correct predictions).
    fn batch(&mut self, idx: &[usize], rng: &mut ChaCha8Rng) -> Result<(f64, usize)>;
    fn params(&mut self) -> Vec<&mut Param<f32>>;
}

fn correct(logits: &Array2<f32>, labels: &[usize]) -> usize {
    logits
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &l)| argmax(row.iter().copied(), 0..row.len()) == l)
        .count()
}

/// Index of the largest value among `allowed`; ties go to the lowest index.
fn argmax(values: impl Iterator<Item = f32>, allowed: impl Iterator<Item = usize>) -> usize {
    let v: Vec<f32> = values.collect();
    let mut best: Option<usize> = None;
    for k in allowed {
        if best.is_none_or(|b| v[k] > v[b]) {
            best = Some(k);
        }
    }
    best.unwrap_or(0)
}

struct MapTrainer<'a> {
    net: &'a mut MapBranch<f32>,
    data: &'a BranchInputs,
}

impl Trainer for MapTrainer<'_> {
    fn batch(&mut self, idx: &[usize], rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
        let labels = self.data.batch_labels(idx);
        let (logits, cache) = self
            .net
            .forward_train(&self.data.batch_maps(idx)?, &self.data.batch_stats(idx), rng)?;
        let (loss, d) = softmax_cross_entropy(&logits, &labels)?;
        self.net.backward(&cache, &d);
        Ok((loss as f64, correct(&logits, &labels)))
    }

    fn params(&mut self) -> Vec<&mut Param<f32>> {
        self.net.params_mut()
    }
}

struct MlpTrainer<'a> {
    net: &'a mut Mlp<f32>,
    x: &'a Array2<f32>,
    labels: &'a [usize],
}

impl Trainer for MlpTrainer<'_> {
    fn batch(&mut self, idx: &[usize], rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
        let x = self.x.select(Axis(0), idx);
        let labels: Vec<usize> = idx.iter().map(|&i| self.labels[i]).collect();
        let mask = dropout_mask(x.dim(), self.net.dropout, rng);
        let (logits, cache) = self.net.forward_masked(&x, mask)?;
        let (loss, d) = softmax_cross_entropy(&logits, &labels)?;
        self.net.backward(&cache, &d);
        Ok((loss as f64, correct(&logits, &labels)))
    }

    fn params(&mut self) -> Vec<&mut Param<f32>> {
        self.net.params_mut()
    }
}

/// Reconstructs the normalised input map from the embedding.
struct AutoencoderTrainer<'a> {
    extractor: &'a mut Extractor<f32>,
    decoder: Linear<f32>,
    data: &'a BranchInputs,
}

impl Trainer for AutoencoderTrainer<'_> {
    fn batch(&mut self, idx: &[usize], _rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
        let (emb, cache) = self.extractor.forward_train(&self.data.batch_maps(idx)?)?;
        let recon = self.decoder.forward(&emb)?;
        let diff = recon - self.data.batch_map_rows(idx);
        let count = diff.len() as f32;
        let loss = diff.iter().map(|d| d * d).sum::<f32>() / count;
        let d_recon = diff * (2.0 / count);
        let d_emb = self.decoder.backward(&emb, &d_recon);
        self.extractor.backward(&cache, &d_emb);
        Ok((loss as f64, 0))
    }

    fn params(&mut self) -> Vec<&mut Param<f32>> {
        let mut p = self.extractor.params_mut();
        p.extend(self.decoder.params_mut());
        p
    }
}

fn fit(
    trainer: &mut dyn Trainer,
    n: usize,
    epochs: usize,
    lr: &dyn Fn(usize) -> Result<f64>,
    cfg: &TrainConfig,
    stage: &str,
    early: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EpochLog>> {
    if n == 0 {
        return Err(Error::Empty("training split"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = Vec::with_capacity(epochs);
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    for epoch in 1..=epochs {
        let rate = lr(epoch)?;
        order.shuffle(rng);
        let (mut total, mut hits) = (0.0, 0);
        for idx in order.chunks(cfg.batch_size) {
            for p in trainer.params() {
                p.zero_grad();
            }
            let (loss, ok) = trainer.batch(idx, rng)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged(epoch));
            }
            total += loss * idx.len() as f64;
            hits += ok;
            let (r, m) = (c::<f32>(rate), c::<f32>(cfg.momentum));
            for p in trainer.params() {
                p.step(r, m);
            }
        }
        let loss = total / n as f64;
        log.push(EpochLog {
            stage: stage.to_string(),
            epoch,
            lr: rate,
            loss,
            accuracy: hits as f64 / n as f64,
        });
        if let (true, Some(es)) = (early, &cfg.early_stop) {
            if loss < best - es.min_delta {
                best = loss;
                since_best = 0;
            } else {
                since_best += 1;
            }
            if epoch >= es.min_epochs && (loss < es.loss_below || since_best >= es.patience) {
                break;
            }
        }
    }
    Ok(log)
}

/// Trains one branch classifier on its own cross-entropy.
pub fn train_branch(inputs: &BranchInputs, cfg: &TrainConfig, seed: u64) -> Result<TrainedBranch> {
    cfg.validate()?;
    if inputs.n == 0 {
        return Err(Error::Empty("training split"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schedule = |n: usize| lr_at(n, cfg);
    let stage = inputs.kind.as_str();
    let mut log = Vec::new();
    let net = match inputs.map_shape {
        Some(shape) => {
            let mut net = MapBranch::new(
                shape,
                inputs.stats_len,
                &cfg.extractor,
                &cfg.hidden,
                CLASSES,
                cfg.dropout,
                &mut rng,
            )?;
            if cfg.warm_start_epochs > 0 {
                let decoder = Linear::new(net.extractor.embedding_len(), shape.iter().product(), &mut rng);
                let mut ae = AutoencoderTrainer {
                    extractor: &mut net.extractor,
                    decoder,
                    data: inputs,
                };
                let flat = |_: usize| Ok(cfg.lr0);
                let stage = format!("{stage}-autoencoder");
                log.extend(fit(
                    &mut ae,
                    inputs.n,
                    cfg.warm_start_epochs,
                    &flat,
                    cfg,
                    &stage,
                    false,
                    &mut rng,
                )?);
                // Fresh momentum for the supervised phase.
                for p in net.extractor.params_mut() {
                    p.velocity.fill(0.0);
                }
            }
            let mut t = MapTrainer {
                net: &mut net,
                data: inputs,
            };
            log.extend(fit(
                &mut t,
                inputs.n,
                cfg.max_epochs,
                &schedule,
                cfg,
                stage,
                true,
                &mut rng,
            )?);
            BranchNet::Map(net)
        }
        None => {
            let mut sizes = vec![inputs.stats_len];
            sizes.extend_from_slice(&cfg.hidden);
            sizes.push(CLASSES);
            let mut net = Mlp::new(&sizes, cfg.dropout, &mut rng)?;
            let x = Array2::from_shape_vec((inputs.n, inputs.stats_len), inputs.stats.clone())
                .map_err(|e| Error::dims(e.to_string()))?;
            let mut t = MlpTrainer {
                net: &mut net,
                x: &x,
                labels: &inputs.labels,
            };
            log.extend(fit(
                &mut t,
                inputs.n,
                cfg.max_epochs,
                &schedule,
                cfg,
                stage,
                true,
                &mut rng,
            )?);
            BranchNet::Imu(net)
        }
    };
    Ok(TrainedBranch {
        kind: inputs.kind,
        net,
        log,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Fusion {
    Single,
    Logit(FusionWeights),
    Feature { norm: StatNorm, head: Mlp<f32> },
}

/// A trained (combination, selector) classifier with frozen eval weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub combo: SensorCombo,
    pub selector: ModelSelector,
    pub config_hash: String,
    /// Labels seen in training; predictions are restricted to them.
    pub classes: Vec<GestureLabel>,
    pub norm: Normalizer,
    pub vocal: Option<MapBranch<f32>>,
    pub ultra: Option<MapBranch<f32>>,
    pub imu: Option<Mlp<f32>>,
    pub fusion: Fusion,
    pub log: Vec<EpochLog>,
}

fn learn_logit_weights(
    logits: &[Option<Array2<f32>>; 3],
    labels: &[usize],
    cfg: &TrainConfig,
    log: &mut Vec<EpochLog>,
) -> Result<FusionWeights> {
    let active = [logits[0].is_some(), logits[1].is_some(), logits[2].is_some()];
    let mut w = FusionWeights::for_active(active)?.as_array();
    let mut v = [0.0f64; 3];
    let n = labels.len();
    let fused = |w: &[f64; 3]| -> Array2<f64> {
        let mut z = Array2::<f64>::zeros((n, CLASSES));
        for (k, l) in logits.iter().enumerate() {
            if let Some(l) = l {
                z.scaled_add(w[k], &l.mapv(|x| x as f64));
            }
        }
        z
    };
    for step in 1..=cfg.fusion_steps {
        let (loss, d) = softmax_cross_entropy(&fused(&w), labels)?;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged(step));
        }
        for (k, l) in logits.iter().enumerate() {
            if let Some(l) = l {
                let g: f64 = d.iter().zip(l.iter()).map(|(a, &b)| a * b as f64).sum();
                v[k] = cfg.momentum * v[k] + g;
                w[k] -= cfg.lr0 * v[k];
            }
        }
        if step == cfg.fusion_steps {
            log.push(EpochLog {
                stage: "fusion-weights".into(),
                epoch: step,
                lr: cfg.lr0,
                loss,
                accuracy: correct(&fused(&w).mapv(|x| x as f32), labels) as f64 / n as f64,
            });
        }
    }
    let [a, b, c] = w;
    Ok(FusionWeights { a, b, c })
}

fn concat_features(parts: &[Array2<f32>]) -> Result<Array2<f32>> {
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    let joined = concatenate(Axis(1), &views).map_err(|e| Error::dims(e.to_string()))?;
    Ok(joined.as_standard_layout().into_owned())
}

fn normalise_rows(x: &Array2<f32>, norm: &StatNorm) -> Result<Array2<f32>> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.rows() {
        norm.apply(row.as_slice().expect("standard layout"), &mut out)?;
    }
    Array2::from_shape_vec(x.dim(), out).map_err(|e| Error::dims(e.to_string()))
}

/// Builds the `selector` model from already-trained branches. `inputs` are the
/// normalised training inputs of those branches; the fusion stage is fitted
/// on them with the branches frozen.
pub fn assemble(
    combo: SensorCombo,
    selector: ModelSelector,
    norm: &Normalizer,
    branches: &[&TrainedBranch],
    inputs: &[&BranchInputs],
    cfg: &TrainConfig,
) -> Result<FusionModel> {
    selector.check(combo)?;
    let find = |k: BranchKind| -> Result<(&TrainedBranch, &BranchInputs)> {
        let b = branches
            .iter()
            .find(|b| b.kind == k)
            .ok_or_else(|| Error::MissingChannel(format!("{} branch", k.as_str())))?;
        let x = inputs
            .iter()
            .find(|x| x.kind == k)
            .ok_or_else(|| Error::MissingChannel(format!("{} inputs", k.as_str())))?;
        Ok((b, x))
    };
    let kinds = BranchKind::used_by(selector);
    let used: Vec<(&TrainedBranch, &BranchInputs)> = kinds.iter().map(|&k| find(k)).collect::<Result<_>>()?;
    let labels = &used[0].1.labels;
    let mut classes: Vec<GestureLabel> = GestureLabel::all().filter(|l| labels.contains(&l.index())).collect();
    classes.dedup();
    let mut log: Vec<EpochLog> = used.iter().flat_map(|(b, _)| b.log.clone()).collect();

    let fusion = if kinds.len() == 1 {
        Fusion::Single
    } else if selector.fuses_features() {
        let feats: Vec<Array2<f32>> = used.iter().map(|(b, x)| b.features(x)).collect::<Result<_>>()?;
        let f = concat_features(&feats)?;
        let fnorm = StatNorm::fit(f.rows().into_iter().map(|r| r.to_slice().expect("standard layout")))?;
        let z = normalise_rows(&f, &fnorm)?;
        let seed = derive_seed(cfg.seed, &[0xf05e, combo as u64 + 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![z.ncols()];
        sizes.extend_from_slice(&cfg.hidden);
        sizes.push(CLASSES);
        let mut head = Mlp::new(&sizes, cfg.dropout, &mut rng)?;
        let mut t = MlpTrainer {
            net: &mut head,
            x: &z,
            labels,
        };
        let schedule = |n: usize| lr_at(n, cfg);
        log.extend(fit(
            &mut t,
            z.nrows(),
            cfg.max_epochs,
            &schedule,
            cfg,
            "fusion-head",
            true,
            &mut rng,
        )?);
        Fusion::Feature { norm: fnorm, head }
    } else {
        let mut logits: [Option<Array2<f32>>; 3] = [None, None, None];
        for (b, x) in &used {
            logits[b.kind as usize] = Some(b.logits(x)?);
        }
        Fusion::Logit(learn_logit_weights(&logits, labels, cfg, &mut log)?)
    };

    let get = |k: BranchKind| used.iter().find(|(b, _)| b.kind == k).map(|(b, _)| *b);
    Ok(FusionModel {
        combo,
        selector,
        config_hash: String::new(),
        classes,
        norm: norm.clone(),
        vocal: get(BranchKind::Vocal).and_then(|b| b.map_branch().cloned()),
        ultra: get(BranchKind::Ultra).and_then(|b| b.map_branch().cloned()),
        imu: get(BranchKind::Imu).and_then(|b| b.imu().cloned()),
        fusion,
        log,
    })
}

/// Trains the bundles' (combination, selector) model end to end.
pub fn train(bundles: &[FeatureBundle], cfg: &TrainConfig) -> Result<FusionModel> {
    cfg.validate()?;
    let first = bundles.first().ok_or(Error::Empty("training split"))?;
    let (combo, selector) = (first.combo, first.selector);
    if let Some(b) = bundles.iter().find(|b| b.combo != combo || b.selector != selector) {
        return Err(Error::ModeMismatch(format!(
            "bundle for {}/{} in a {}/{} training set",
            b.combo.as_str(),
            b.selector.as_str(),
            combo.as_str(),
            selector.as_str()
        )));
    }
    let norm = Normalizer::fit(bundles)?;
    let kinds = BranchKind::used_by(selector);
    let inputs: Vec<BranchInputs> = kinds
        .iter()
        .map(|&k| branch_inputs(bundles, k, &norm))
        .collect::<Result<_>>()?;
    let branches: Vec<TrainedBranch> = inputs
        .iter()
        .map(|x| train_branch(x, cfg, x.kind.seed(cfg.seed, combo)))
        .collect::<Result<_>>()?;
    assemble(
        combo,
        selector,
        &norm,
        &branches.iter().collect::<Vec<_>>(),
        &inputs.iter().collect::<Vec<_>>(),
        cfg,
    )
}

impl FusionModel {
    fn branch(&self, kind: BranchKind) -> Option<TrainedBranch> {
        let net = match kind {
            BranchKind::Vocal => BranchNet::Map(self.vocal.clone()?),
            BranchKind::Ultra => BranchNet::Map(self.ultra.clone()?),
            BranchKind::Imu => BranchNet::Imu(self.imu.clone()?),
        };
        Some(TrainedBranch {
            kind,
            net,
            log: Vec::new(),
        })
    }

    /// Eval-mode logits for every bundle, `[N, CLASSES]`.
    pub fn logits(&self, bundles: &[FeatureBundle]) -> Result<Array2<f32>> {
        for b in bundles {
            if b.combo != self.combo {
                return Err(Error::ModeMismatch(format!(
                    "model for {} given a {} bundle",
                    self.combo.as_str(),
                    b.combo.as_str()
                )));
            }
        }
        let kinds = BranchKind::used_by(self.selector);
        let mut parts = Vec::with_capacity(kinds.len());
        for &k in &kinds {
            let branch = self
                .branch(k)
                .ok_or_else(|| Error::Checkpoint(format!("model lacks its {} branch", k.as_str())))?;
            let x = branch_inputs(bundles, k, &self.norm)?;
            parts.push((k, branch, x));
        }
        match &self.fusion {
            Fusion::Single => parts[0].1.logits(&parts[0].2),
            Fusion::Logit(w) => {
                let ws = w.as_array();
                let mut z = Array2::<f32>::zeros((bundles.len(), CLASSES));
                for (k, b, x) in &parts {
                    z.scaled_add(ws[*k as usize] as f32, &b.logits(x)?);
                }
                Ok(z)
            }
            Fusion::Feature { norm, head } => {
                let feats: Vec<Array2<f32>> = parts.iter().map(|(_, b, x)| b.features(x)).collect::<Result<_>>()?;
                head.forward(&normalise_rows(&concat_features(&feats)?, norm)?)
            }
        }
    }

    fn decide(&self, row: &[f32]) -> GestureLabel {
        let allowed: Vec<usize> = if self.classes.is_empty() {
            (0..CLASSES).collect()
        } else {
            self.classes.iter().map(|l| l.index()).collect()
        };
        let k = argmax(row.iter().copied(), allowed.into_iter());
        GestureLabel::new(k as u8).expect("class index in range")
    }
}

/// Label and logits for one bundle.
pub fn predict(model: &FusionModel, bundle: &FeatureBundle) -> Result<(GestureLabel, Vec<f32>)> {
    Ok(predict_batch(model, std::slice::from_ref(bundle))?
        .pop()
        .expect("one prediction per bundle"))
}

pub fn predict_batch(model: &FusionModel, bundles: &[FeatureBundle]) -> Result<Vec<(GestureLabel, Vec<f32>)>> {
    if bundles.is_empty() {
        return Ok(Vec::new());
    }
    let z = model.logits(bundles)?;
    Ok(z.rows()
        .into_iter()
        .map(|r| {
            let row = r.to_vec();
            (model.decide(&row), row)
        })
        .collect())
}
