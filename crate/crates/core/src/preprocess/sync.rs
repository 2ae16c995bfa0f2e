use serde::{Deserialize, Serialize};

use super::{ImuStream, MultiChannelRecording};
use crate::channel::ChannelName;
use crate::dsp::AudioSegment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyncConfig {
    /// Envelope window, seconds.
    pub window: f64,
    /// Threshold is `median + mad_k * MAD` of the envelope.
    pub mad_k: f64,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            window: 0.010,
            mad_k: 8.0,
        }
    }
}

pub enum SyncSource<'a> {
    Audio(&'a AudioSegment),
    Imu(&'a ImuStream),
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Time of the first local maximum of `env` above `median + k * MAD`.
fn first_peak(env: &[f64], times: &[f64], k: f64) -> Result<f64> {
    if env.is_empty() {
        return Err(Error::NoSyncEvent);
    }
    let mut scratch = env.to_vec();
    let med = median(&mut scratch);
    let mut dev: Vec<f64> = env.iter().map(|v| (v - med).abs()).collect();
    let mad = median(&mut dev);
    let threshold = med + k * mad;
    let mut i = env
        .iter()
        .position(|&v| v > threshold && v > 0.0)
        .ok_or(Error::NoSyncEvent)?;
    while i + 1 < env.len() && env[i + 1] > env[i] {
        i += 1;
    }
    Ok(times[i])
}

/// Clap time, seconds: the first local maximum of a short-window envelope that
/// clears an adaptive threshold. Audio uses windowed RMS; the IMU uses the
/// mean deviation of the acceleration magnitude from its median, which
/// ignores how gravity projects onto a rotating sensor.
pub fn detect_sync_peak(source: SyncSource<'_>, cfg: &SyncConfig) -> Result<f64> {
    match source {
        SyncSource::Audio(seg) => {
            let win = ((cfg.window * seg.sample_rate()).round() as usize).max(1);
            let x = seg.samples();
            let count = x.len() / win;
            let env: Vec<f64> = (0..count)
                .map(|k| {
                    let w = &x[k * win..(k + 1) * win];
                    (w.iter().map(|v| v * v).sum::<f64>() / win as f64).sqrt()
                })
                .collect();
            let times: Vec<f64> = (0..count)
                .map(|k| (k as f64 + 0.5) * win as f64 / seg.sample_rate())
                .collect();
            first_peak(&env, &times, cfg.mad_k)
        }
        SyncSource::Imu(imu) => {
            if imu.rows.len() < 2 {
                return Err(Error::NoSyncEvent);
            }
            let norms: Vec<f64> = imu
                .rows
                .iter()
                .map(|r| r.accel.iter().map(|a| a * a).sum::<f64>().sqrt())
                .collect();
            let mut scratch = norms.clone();
            let center = median(&mut scratch);
            let dt = (imu.rows[imu.rows.len() - 1].t - imu.rows[0].t) / (imu.rows.len() - 1) as f64;
            let win = ((cfg.window / dt.max(1e-9)).round() as usize).max(1);
            let count = imu.rows.len() / win;
            let dev: Vec<f64> = norms.iter().map(|n| (n - center).abs()).collect();
            let env: Vec<f64> = (0..count)
                .map(|k| dev[k * win..(k + 1) * win].iter().sum::<f64>() / win as f64)
                .collect();
            let times: Vec<f64> = (0..count)
                .map(|k| {
                    let rows = &imu.rows[k * win..(k + 1) * win];
                    rows.iter().map(|r| r.t).sum::<f64>() / win as f64
                })
                .collect();
            first_peak(&env, &times, cfg.mad_k)
        }
    }
}

/// Audio channel used to find the clap.
pub fn sync_channel(rec: &MultiChannelRecording) -> Result<ChannelName> {
    const PREFERENCE: [ChannelName; 6] = [
        ChannelName::ReOuter,
        ChannelName::LeOuter,
        ChannelName::Watch,
        ChannelName::Ring,
        ChannelName::ReInner,
        ChannelName::LeInner,
    ];
    PREFERENCE
        .into_iter()
        .find(|c| rec.channels.contains_key(c))
        .ok_or_else(|| Error::MissingChannel("no audio channel for synchronisation".into()))
}

/// Shift IMU timestamps so its clap coincides with the audio clap. Returns the
/// aligned recording and the applied shift in seconds.
pub fn align_channels_with_shift(
    rec: &MultiChannelRecording,
    cfg: &SyncConfig,
) -> Result<(MultiChannelRecording, f64)> {
    let audio = rec.channel(sync_channel(rec)?)?;
    let t_audio = detect_sync_peak(SyncSource::Audio(audio), cfg)?;
    let t_imu = detect_sync_peak(SyncSource::Imu(&rec.imu), cfg)?;
    let shift = t_audio - t_imu;
    Ok((
        MultiChannelRecording {
            channels: rec.channels.clone(),
            imu: rec.imu.shifted(shift),
            ticks: rec.ticks.clone(),
        },
        shift,
    ))
}

pub fn align_channels(rec: &MultiChannelRecording, cfg: &SyncConfig) -> Result<MultiChannelRecording> {
    align_channels_with_shift(rec, cfg).map(|(r, _)| r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn impulses(at: &[f64], secs: f64) -> AudioSegment {
        let rate = 48_000.0;
        let mut x = vec![0.0; (secs * rate) as usize];
        for &t in at {
            let i = (t * rate) as usize;
            for k in 0..240 {
                x[i + k] = 0.9 * (-(k as f64) / 60.0).exp() * if k % 2 == 0 { 1.0 } else { -1.0 };
            }
        }
        AudioSegment::new(x, rate).unwrap()
    }

    #[test]
    fn finds_an_injected_impulse() {
        let t = detect_sync_peak(SyncSource::Audio(&impulses(&[2.0], 4.0)), &SyncConfig::default()).unwrap();
        assert!((t - 2.0).abs() <= 0.025, "{t}");
    }

    #[test]
    fn first_of_two_impulses_wins() {
        let t = detect_sync_peak(SyncSource::Audio(&impulses(&[1.0, 3.0], 4.0)), &SyncConfig::default()).unwrap();
        assert!((t - 1.0).abs() <= 0.025, "{t}");
    }

    #[test]
    fn silence_has_no_sync_event() {
        let err = detect_sync_peak(
            SyncSource::Audio(&AudioSegment::silence(48_000, 48_000.0)),
            &SyncConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "no-sync-event");
    }
}
