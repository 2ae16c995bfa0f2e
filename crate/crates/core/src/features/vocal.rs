use std::collections::BTreeMap;

use ndarray::{s, Array2};

use super::FeatureConfig;
use crate::channel::ChannelName;
use crate::combo::SensorCombo;
use crate::dsp::{dtw_distance, mfcc_with, resample_mfcc, AudioSegment, MelMap, MfccSeries};
use crate::error::{Error, Result};

/// The microphone every other mel map is compared against: the right inner
/// one when the combination uses inner microphones, the right outer otherwise.
pub fn reference_channel<'a, I>(channels: I, combo: SensorCombo) -> Result<ChannelName>
where
    I: IntoIterator<Item = &'a ChannelName>,
{
    let wanted = if combo.contains(ChannelName::ReInner) {
        ChannelName::ReInner
    } else {
        ChannelName::ReOuter
    };
    if channels.into_iter().any(|&c| c == wanted) {
        Ok(wanted)
    } else {
        Err(Error::MissingChannel(wanted.to_string()))
    }
}

/// Planes `m_i - m_ref` for every non-reference channel in name order, then
/// `m_ref` itself, stacked along the band axis.
pub fn vocal_difference_frame(maps: &BTreeMap<ChannelName, MelMap>, reference: ChannelName) -> Result<Array2<f64>> {
    let m_ref = maps
        .get(&reference)
        .ok_or_else(|| Error::MissingChannel(reference.to_string()))?;
    let (bands, frames) = m_ref.shape();
    if let Some((name, m)) = maps.iter().find(|(_, m)| m.shape() != (bands, frames)) {
        return Err(Error::dims(format!(
            "mel map for {name} is {:?}, reference is {:?}",
            m.shape(),
            (bands, frames)
        )));
    }
    let mut out = Array2::zeros((maps.len() * bands, frames));
    let mut k = 0;
    for (name, m) in maps {
        if *name == reference {
            continue;
        }
        out.slice_mut(s![k * bands..(k + 1) * bands, ..])
            .assign(&(&m.values - &m_ref.values));
        k += 1;
    }
    out.slice_mut(s![k * bands..(k + 1) * bands, ..]).assign(&m_ref.values);
    Ok(out)
}

/// 20-frame MFCC segments of one channel, time-major for DTW.
pub fn mfcc_segments(seg: &AudioSegment, cfg: &FeatureConfig) -> Result<Vec<Array2<f64>>> {
    let series = mfcc_with(seg, cfg.n_mfcc, &cfg.mel)?;
    Ok(resample_mfcc(&series, cfg.mfcc_frame, cfg.mfcc_stride)?
        .into_iter()
        .map(|m: MfccSeries| m.coeffs.t().to_owned())
        .collect())
}

/// Mean DTW distance between segment `k` of one channel and segment `k` of
/// the other, over the segments both have.
pub fn segment_distance(a: &[Array2<f64>], b: &[Array2<f64>], cfg: &FeatureConfig) -> Result<f64> {
    let n = a.len().min(b.len());
    if n == 0 {
        return Err(Error::Empty("no MFCC segments to compare"));
    }
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        total += dtw_distance(x.view(), y.view(), cfg.dtw_cost)?;
    }
    Ok(total / n as f64)
}

/// Distances for every unordered channel pair, pairs in name order.
pub fn pairwise_mfcc_distances(
    channels: &BTreeMap<ChannelName, AudioSegment>,
    cfg: &FeatureConfig,
) -> Result<Vec<((ChannelName, ChannelName), f64)>> {
    if channels.len() < 2 {
        return Err(Error::invalid("pairwise similarity needs at least two channels"));
    }
    let segs: Vec<(ChannelName, Vec<Array2<f64>>)> = channels
        .iter()
        .map(|(&c, seg)| Ok((c, mfcc_segments(seg, cfg)?)))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(segs.len() * (segs.len() - 1) / 2);
    for i in 0..segs.len() {
        for j in i + 1..segs.len() {
            let d = segment_distance(&segs[i].1, &segs[j].1, cfg)?;
            out.push(((segs[i].0, segs[j].0), d));
        }
    }
    Ok(out)
}

pub fn similarity(distance: f64, tau: f64) -> f64 {
    (-distance / tau.max(f64::MIN_POSITIVE)).exp()
}

/// `exp(-d / tau)` for every channel pair; `n + 1` channels give `n(n+1)/2` values.
pub fn pairwise_mfcc_similarity(
    channels: &BTreeMap<ChannelName, AudioSegment>,
    tau: f64,
    cfg: &FeatureConfig,
) -> Result<Vec<f64>> {
    Ok(pairwise_mfcc_distances(channels, cfg)?
        .into_iter()
        .map(|(_, d)| similarity(d, tau))
        .collect())
}
