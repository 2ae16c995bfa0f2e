use serde::{Deserialize, Serialize};

use super::RawSample;
use crate::channel::ChannelName;
use crate::dsp::{butterworth_lowpass, AudioSegment};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VadConfig {
    /// Frame length and hop, seconds.
    pub frame: f64,
    pub hop: f64,
    /// Span at each end used to estimate the noise floor, seconds.
    pub edge: f64,
    /// Percentile of frame energies that also bounds the floor from above.
    pub floor_percentile: f64,
    pub margin_db: f64,
    /// Speech band limit applied before measuring energy; keeps the chirp out.
    pub band_limit: f64,
    /// Samples whose loudest frame stays below this level are treated as silent.
    pub silence_dbfs: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            frame: 0.020,
            hop: 0.010,
            edge: 0.100,
            floor_percentile: 10.0,
            margin_db: 6.0,
            band_limit: 8_000.0,
            silence_dbfs: -90.0,
        }
    }
}

/// Channel that drives trimming: the right inner microphone when present,
/// then the right outer one, then whatever comes first.
pub fn vad_channel<'a, I>(names: I) -> Option<ChannelName>
where
    I: IntoIterator<Item = &'a ChannelName>,
{
    let names: Vec<ChannelName> = names.into_iter().copied().collect();
    [ChannelName::ReInner, ChannelName::ReOuter]
        .into_iter()
        .find(|c| names.contains(c))
        .or_else(|| names.first().copied())
}

fn frame_db(x: &[f64], frame: usize, hop: usize) -> Vec<f64> {
    if x.len() < frame {
        let e = x.iter().map(|v| v * v).sum::<f64>() / frame as f64;
        return vec![10.0 * (e + 1e-12).log10()];
    }
    (0..=(x.len() - frame) / hop)
        .map(|k| {
            let w = &x[k * hop..k * hop + frame];
            let e = w.iter().map(|v| v * v).sum::<f64>() / frame as f64;
            10.0 * (e + 1e-12).log10()
        })
        .collect()
}

fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (p / 100.0 * (v.len() - 1) as f64).round() as usize;
    v[pos.min(v.len() - 1)]
}

/// Active span `[start, end)` in samples of `seg`.
pub fn vad_bounds(seg: &AudioSegment, cfg: &VadConfig) -> Result<(usize, usize)> {
    if seg.is_empty() {
        return Err(Error::NoVoiceActivity);
    }
    let rate = seg.sample_rate();
    let band = if cfg.band_limit < rate / 2.0 {
        butterworth_lowpass(seg, cfg.band_limit, 8)?
    } else {
        seg.clone()
    };
    let frame = ((cfg.frame * rate).round() as usize).max(1);
    let hop = ((cfg.hop * rate).round() as usize).max(1);
    let db = frame_db(band.samples(), frame, hop);
    let peak = db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak < cfg.silence_dbfs {
        return Err(Error::NoVoiceActivity);
    }
    let edge = ((cfg.edge * rate).round() as usize).saturating_sub(frame) / hop + 1;
    let edge = edge.min(db.len());
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let floor = mean(&db[..edge])
        .min(mean(&db[db.len() - edge..]))
        .min(percentile(&db, cfg.floor_percentile));
    if peak - floor < cfg.margin_db {
        // Stationary content: nothing distinguishes silence from activity.
        return Ok((0, seg.len()));
    }
    let threshold = floor + cfg.margin_db;
    let first = db.iter().position(|&v| v > threshold).ok_or(Error::NoVoiceActivity)?;
    let last = db.iter().rposition(|&v| v > threshold).ok_or(Error::NoVoiceActivity)?;
    let start = if first == 0 { 0 } else { first * hop };
    let end = if last + 1 == db.len() {
        seg.len()
    } else {
        (last * hop + frame).min(seg.len())
    };
    Ok((start, end))
}

/// Drop the silent ends of every channel and the IMU rows outside the kept span.
pub fn vad_trim(sample: &RawSample, cfg: &VadConfig) -> Result<RawSample> {
    let name = vad_channel(sample.channels.keys())
        .ok_or_else(|| Error::MissingChannel("no vocal reference channel".into()))?;
    let (a, b) = vad_bounds(&sample.channels[&name], cfg)?;
    let rate = sample.sample_rate();
    let start = sample.start + a as f64 / rate;
    let end = sample.start + b as f64 / rate;
    let imu = match (sample.imu.nearest_index(start), sample.imu.nearest_index(end)) {
        (Some(i), Some(j)) => super::ImuStream {
            rows: sample.imu.rows[i..=j].to_vec(),
        },
        _ => sample.imu.clone(),
    };
    Ok(RawSample {
        index: sample.index,
        channels: sample.channels.iter().map(|(&n, s)| (n, s.slice(a, b))).collect(),
        imu,
        start,
        end,
    })
}
