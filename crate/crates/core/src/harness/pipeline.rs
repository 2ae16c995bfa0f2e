use std::path::Path;

use super::dataset::{
    list_samples, list_sessions, read_sample, read_session, sample_dir, write_sample, write_session, SessionMeta,
};
use crate::error::Result;
use crate::exec::Exec;
use crate::features::{sample_features, FeatureConfig, SampleFeatures};
use crate::preprocess::{preprocess_session, MultiChannelRecording, PreprocessConfig};
use crate::simulate::{make_session, SessionPlan, SimConfig};

pub fn session_meta(plan: &SessionPlan) -> SessionMeta {
    SessionMeta {
        user_id: plan.user_id,
        session: plan.session,
        label: plan.label,
        posture: plan.posture,
        commands: plan.commands.clone(),
    }
}

/// Preprocess one recording and extract features for every sample.
pub fn session_features(
    meta: &SessionMeta,
    rec: &MultiChannelRecording,
    pre: &PreprocessConfig,
    feat: &FeatureConfig,
) -> Result<Vec<SampleFeatures>> {
    preprocess_session(rec, meta.user_id, meta.label, meta.posture, &meta.commands, pre)?
        .iter()
        .map(|s| sample_features(s, feat))
        .collect()
}

/// Simulates every plan and keeps only the features, so the audio of one
/// session at a time is alive per worker.
pub fn simulate_features(
    plans: &[SessionPlan],
    sim: &SimConfig,
    pre: &PreprocessConfig,
    feat: &FeatureConfig,
    exec: Exec,
) -> Result<Vec<SampleFeatures>> {
    let per_session = exec.try_map(plans, |plan| {
        let (rec, _) = make_session(plan, sim)?;
        session_features(&session_meta(plan), &rec, pre, feat)
    })?;
    Ok(per_session.into_iter().flatten().collect())
}

/// Simulates every plan into `root`.
pub fn simulate_dataset(root: &Path, plans: &[SessionPlan], sim: &SimConfig, exec: Exec) -> Result<()> {
    exec.try_map(plans, |plan| {
        let (rec, truth) = make_session(plan, sim)?;
        write_session(root, &session_meta(plan), &rec, Some(&truth)).map(|_| ())
    })?;
    Ok(())
}

/// Reads, preprocesses and featurises every session under `root`.
pub fn dataset_features(
    root: &Path,
    pre: &PreprocessConfig,
    feat: &FeatureConfig,
    exec: Exec,
) -> Result<Vec<SampleFeatures>> {
    let dirs = list_sessions(root)?;
    let per_session = exec.try_map(&dirs, |dir| {
        let (meta, rec) = read_session(dir)?;
        session_features(&meta, &rec, pre, feat)
    })?;
    Ok(per_session.into_iter().flatten().collect())
}

/// Segments every session under `root` into `out`; returns the sample count.
pub fn preprocess_dataset(root: &Path, out: &Path, pre: &PreprocessConfig, exec: Exec) -> Result<usize> {
    let dirs = list_sessions(root)?;
    let counts = exec.try_map(&dirs, |dir| {
        let (meta, rec) = read_session(dir)?;
        let samples = preprocess_session(&rec, meta.user_id, meta.label, meta.posture, &meta.commands, pre)?;
        for (i, s) in samples.iter().enumerate() {
            write_sample(&sample_dir(out, meta.user_id, meta.session, i), s)?;
        }
        Ok::<_, crate::error::Error>(samples.len())
    })?;
    Ok(counts.into_iter().sum())
}

/// Features of every sample in a preprocessed tree.
pub fn samples_features(root: &Path, feat: &FeatureConfig, exec: Exec) -> Result<Vec<SampleFeatures>> {
    let dirs = list_samples(root)?;
    exec.try_map(&dirs, |dir| sample_features(&read_sample(dir)?, feat))
}
