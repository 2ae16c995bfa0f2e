//! Leave-one-user-out evaluation over (combination, selector) cells.
//!
//! Within a fold, every selector of a combination is assembled from one set of
//! branch classifiers. Branch seeds depend only on the fold, the combination
//! and the branch, so a shared branch is the same network a separate run
//! would have trained.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::combo::{ModelSelector, SensorCombo};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::features::{FeatureBundle, SampleFeatures};
use crate::gesture::GestureLabel;
use crate::model::{
    assemble, branch_inputs, predict_batch, train_branch, BranchInputs, BranchKind, Normalizer, TrainConfig,
    TrainedBranch, CLASSES,
};
use crate::simulate::derive_seed;

/// Counts indexed `[true][predicted]`.
pub type Confusion = Vec<Vec<u32>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub test_user: u32,
    pub train_users: Vec<u32>,
    pub test_samples: usize,
    pub accuracy: f64,
    pub confusion: Confusion,
    /// MFCC similarity scale fitted on the training users, when vocal is used.
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub combo: SensorCombo,
    pub selector: ModelSelector,
    /// Labels of the task; all nine for the full grid.
    pub classes: Vec<GestureLabel>,
    pub mean: f64,
    pub sd: f64,
    pub folds: Vec<FoldResult>,
}

impl CellResult {
    fn from_folds(
        combo: SensorCombo,
        selector: ModelSelector,
        classes: Vec<GestureLabel>,
        folds: Vec<FoldResult>,
    ) -> Self {
        let (mean, sd) = mean_sd(&folds.iter().map(|f| f.accuracy).collect::<Vec<_>>());
        Self {
            combo,
            selector,
            classes,
            mean,
            sd,
            folds,
        }
    }

    /// Sum of the per-fold confusion matrices.
    pub fn total_confusion(&self) -> Confusion {
        let mut total = vec![vec![0u32; CLASSES]; CLASSES];
        for f in &self.folds {
            for (t, row) in f.confusion.iter().enumerate() {
                for (p, &c) in row.iter().enumerate() {
                    total[t][p] += c;
                }
            }
        }
        total
    }
}

/// Mean and sample standard deviation.
pub fn mean_sd(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (0.0, 0.0);
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub train: TrainConfig,
    pub exec: Exec,
}

/// Every selector the combination allows, in selector order.
pub fn valid_selectors(combo: SensorCombo) -> Vec<ModelSelector> {
    ModelSelector::ALL.into_iter().filter(|s| s.valid_for(combo)).collect()
}

/// A selector whose bundles carry every branch the combination allows.
fn carrier(combo: SensorCombo) -> ModelSelector {
    [ModelSelector::AllF, ModelSelector::VU, ModelSelector::V]
        .into_iter()
        .find(|s| s.valid_for(combo))
        .expect("vocal is valid everywhere")
}

pub fn users(features: &[SampleFeatures]) -> Vec<u32> {
    features
        .iter()
        .map(|f| f.user_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn fold_seed(seed: u64, user: u32) -> u64 {
    derive_seed(seed, &[0xf01d, user as u64])
}

fn bundles(features: &[&SampleFeatures], combo: SensorCombo) -> Result<Vec<FeatureBundle>> {
    let sel = carrier(combo);
    features
        .iter()
        .map(|f| FeatureBundle::from_features(f, combo, sel))
        .collect()
}

/// One held-out user and one combination, for each of `selectors`.
pub fn run_fold(
    features: &[SampleFeatures],
    test_user: u32,
    combo: SensorCombo,
    selectors: &[ModelSelector],
    classes: &[GestureLabel],
    cfg: &TrainConfig,
) -> Result<Vec<FoldResult>> {
    let in_task: Vec<&SampleFeatures> = features.iter().filter(|f| classes.contains(&f.label)).collect();
    let (test, train): (Vec<&SampleFeatures>, Vec<&SampleFeatures>) =
        in_task.into_iter().partition(|f| f.user_id == test_user);
    if train.is_empty() || test.is_empty() {
        return Err(Error::Empty("fold without training or test samples"));
    }
    let train_users: Vec<u32> = train
        .iter()
        .map(|f| f.user_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let seed = fold_seed(cfg.seed, test_user);
    let train_b = bundles(&train, combo)?;
    let test_b = bundles(&test, combo)?;
    let norm = Normalizer::fit(&train_b)?;
    let kinds: BTreeSet<BranchKind> = selectors.iter().flat_map(|s| BranchKind::used_by(*s)).collect();
    let mut inputs: BTreeMap<BranchKind, BranchInputs> = BTreeMap::new();
    let mut trained: BTreeMap<BranchKind, TrainedBranch> = BTreeMap::new();
    for &k in &kinds {
        let x = branch_inputs(&train_b, k, &norm)?;
        trained.insert(k, train_branch(&x, cfg, k.seed(seed, combo))?);
        inputs.insert(k, x);
    }
    let fold_cfg = TrainConfig { seed, ..cfg.clone() };
    let mut out = Vec::with_capacity(selectors.len());
    for &sel in selectors {
        let kinds = BranchKind::used_by(sel);
        let b: Vec<&TrainedBranch> = kinds.iter().map(|k| &trained[k]).collect();
        let x: Vec<&BranchInputs> = kinds.iter().map(|k| &inputs[k]).collect();
        let model = assemble(combo, sel, &norm, &b, &x, &fold_cfg)?;
        let preds = predict_batch(&model, &test_b)?;
        let mut confusion = vec![vec![0u32; CLASSES]; CLASSES];
        for ((p, _), b) in preds.iter().zip(&test_b) {
            confusion[b.label.index()][p.index()] += 1;
        }
        let hits: u32 = (0..CLASSES).map(|k| confusion[k][k]).sum();
        out.push(FoldResult {
            test_user,
            train_users: train_users.clone(),
            test_samples: test_b.len(),
            accuracy: 100.0 * hits as f64 / test_b.len() as f64,
            confusion,
            tau: if sel.uses_vocal() { norm.tau } else { None },
        });
    }
    Ok(out)
}

/// Runs `cells` over every fold and regroups the results per cell. The unit
/// of parallel work is one (fold, combination) pair.
pub fn evaluate_cells(
    features: &[SampleFeatures],
    cells: &[(SensorCombo, Vec<ModelSelector>)],
    classes: &[GestureLabel],
    cfg: &EvalConfig,
) -> Result<Vec<CellResult>> {
    for (combo, sels) in cells {
        for s in sels {
            s.check(*combo)?;
        }
    }
    let users = users(features);
    if users.len() < 2 {
        return Err(Error::invalid("leave-one-user-out needs at least two users"));
    }
    let jobs: Vec<(usize, u32)> = (0..cells.len())
        .flat_map(|c| users.iter().map(move |&u| (c, u)))
        .collect();
    let done = cfg.exec.try_map(&jobs, |&(c, u)| {
        let (combo, sels) = &cells[c];
        run_fold(features, u, *combo, sels, classes, &cfg.train)
    })?;
    let mut done = done.into_iter();
    let mut results = Vec::new();
    for (combo, sels) in cells {
        let per_user: Vec<Vec<FoldResult>> = done.by_ref().take(users.len()).collect();
        for (i, &sel) in sels.iter().enumerate() {
            let folds = per_user.iter().map(|f| f[i].clone()).collect();
            results.push(CellResult::from_folds(*combo, sel, classes.to_vec(), folds));
        }
    }
    Ok(results)
}

pub fn louo_cv(
    features: &[SampleFeatures],
    combo: SensorCombo,
    selector: ModelSelector,
    cfg: &EvalConfig,
) -> Result<CellResult> {
    let all: Vec<GestureLabel> = GestureLabel::all().collect();
    Ok(evaluate_cells(features, &[(combo, vec![selector])], &all, cfg)?.remove(0))
}

/// Every valid cell of the combination x selector grid.
pub fn grid(features: &[SampleFeatures], cfg: &EvalConfig) -> Result<Vec<CellResult>> {
    let cells: Vec<(SensorCombo, Vec<ModelSelector>)> =
        SensorCombo::ALL.into_iter().map(|c| (c, valid_selectors(c))).collect();
    let all: Vec<GestureLabel> = GestureLabel::all().collect();
    evaluate_cells(features, &cells, &all, cfg)
}

/// The three signature gestures of the reduced set.
pub const REDUCED_SET: [GestureLabel; 3] = [
    GestureLabel::COVER_MOUTH_WITH_PALM,
    GestureLabel::COVER_EAR_WITH_ARCHED_PALM,
    GestureLabel::PALM_BESIDE_NOSE_AND_MOUTH,
];

/// `subset` plus the empty gesture as one classification task.
pub fn reduced_gesture_eval(
    features: &[SampleFeatures],
    combo: SensorCombo,
    subset: &[GestureLabel],
    selector: ModelSelector,
    cfg: &EvalConfig,
) -> Result<CellResult> {
    if subset.is_empty() {
        return Err(Error::Empty("reduced gesture subset"));
    }
    if let Some(g) = subset.iter().find(|g| !REDUCED_SET.contains(g)) {
        return Err(Error::invalid(format!("{} is not in the reduced set", g.name())));
    }
    let mut classes: Vec<GestureLabel> = subset.to_vec();
    classes.push(GestureLabel::EMPTY);
    classes.sort();
    classes.dedup();
    Ok(evaluate_cells(features, &[(combo, vec![selector])], &classes, cfg)?.remove(0))
}

/// The four reduced-set tasks: each signature gesture against empty, then all three.
pub fn reduced_tasks() -> Vec<Vec<GestureLabel>> {
    let mut tasks: Vec<Vec<GestureLabel>> = REDUCED_SET.iter().map(|g| vec![*g]).collect();
    tasks.push(REDUCED_SET.to_vec());
    tasks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

/// The ablation variants of a training config, in report order.
pub fn ablation_variants(base: &TrainConfig) -> Vec<(&'static str, TrainConfig)> {
    vec![
        (
            "No Optimization",
            TrainConfig {
                warm_start_epochs: 0,
                dropout: 0.0,
                warmup: false,
                ..base.clone()
            },
        ),
        (
            "No Pretraining",
            TrainConfig {
                warm_start_epochs: 0,
                ..base.clone()
            },
        ),
        (
            "No Dropout",
            TrainConfig {
                dropout: 0.0,
                ..base.clone()
            },
        ),
        (
            "No Warm-up",
            TrainConfig {
                warmup: false,
                ..base.clone()
            },
        ),
        ("Full Model", base.clone()),
    ]
}

/// One row per variant on the chosen cell, all with the same seed and folds.
pub fn ablation_run(
    features: &[SampleFeatures],
    combo: SensorCombo,
    selector: ModelSelector,
    cfg: &EvalConfig,
) -> Result<Vec<AblationRow>> {
    ablation_variants(&cfg.train)
        .into_iter()
        .map(|(name, train)| {
            let r = louo_cv(features, combo, selector, &EvalConfig { train, exec: cfg.exec })?;
            Ok(AblationRow {
                name: name.to_string(),
                mean: r.mean,
                sd: r.sd,
            })
        })
        .collect()
}

/// Highest-mean cell of a combination; ties go to the earlier selector.
pub fn best_selector(grid: &[CellResult], combo: SensorCombo) -> Option<ModelSelector> {
    grid.iter()
        .filter(|c| c.combo == combo)
        .fold(None::<&CellResult>, |best, c| match best {
            Some(b) if b.mean >= c.mean => Some(b),
            _ => Some(c),
        })
        .map(|c| c.selector)
}
