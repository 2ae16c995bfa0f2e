//! On-disk layout: `root/user_<id>/session_<k>/` holding one 16-bit mono WAV
//! per channel, `imu.csv`, `ticks.json`, `meta.json` and, for simulated
//! sessions, `ground_truth.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::ChannelName;
use crate::dsp::AudioSegment;
use crate::error::{Error, Result};
use crate::gesture::{GestureLabel, Posture};
use crate::preprocess::{GestureSample, ImuFrame, ImuStream, MultiChannelRecording};
use crate::simulate::GroundTruth;

pub const IMU_HEADER: [&str; 11] = ["t", "ax", "ay", "az", "gx", "gy", "gz", "qw", "qx", "qy", "qz"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub user_id: u32,
    pub session: u32,
    pub label: GestureLabel,
    pub posture: Posture,
    /// Command spoken after each tick.
    pub commands: Vec<u8>,
}

pub fn session_dir(root: &Path, user_id: u32, session: u32) -> PathBuf {
    root.join(format!("user_{user_id}")).join(format!("session_{session}"))
}

pub fn write_wav(path: &Path, seg: &AudioSegment) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: seg.sample_rate().round() as u32,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| Error::dataset(path, e.to_string()))?;
    for &v in seg.samples() {
        let q = (v.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16;
        w.write_sample(q).map_err(|e| Error::dataset(path, e.to_string()))?;
    }
    w.finalize().map_err(|e| Error::dataset(path, e.to_string()))
}

pub fn read_wav(path: &Path) -> Result<AudioSegment> {
    let mut r = hound::WavReader::open(path).map_err(|e| Error::dataset(path, e.to_string()))?;
    let spec = r.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::dataset(path, "expected 16-bit PCM mono"));
    }
    let samples = r
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / i16::MAX as f64))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::dataset(path, e.to_string()))?;
    AudioSegment::new(samples, spec.sample_rate as f64)
}

pub fn write_imu(path: &Path, imu: &ImuStream) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::dataset(path, e.to_string()))?;
    w.write_record(IMU_HEADER)
        .map_err(|e| Error::dataset(path, e.to_string()))?;
    for r in &imu.rows {
        let vals: Vec<String> = std::iter::once(r.t).chain(r.values()).map(|v| v.to_string()).collect();
        w.write_record(&vals).map_err(|e| Error::dataset(path, e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_imu(path: &Path) -> Result<ImuStream> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::dataset(path, e.to_string()))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::dataset(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != IMU_HEADER {
        return Err(Error::dataset(path, format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::dataset(path, e.to_string()))?;
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::dataset(path, format!("row {}: {e}", i + 1)))?;
        if v.len() != IMU_HEADER.len() {
            return Err(Error::dataset(path, format!("row {} has {} fields", i + 1, v.len())));
        }
        rows.push(ImuFrame {
            t: v[0],
            accel: [v[1], v[2], v[3]],
            gyro: [v[4], v[5], v[6]],
            quat: [v[7], v[8], v[9], v[10]],
        });
    }
    ImuStream::new(rows).map_err(|e| Error::dataset(path, e.to_string()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::dataset(path, e.to_string()))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::dataset(path, e.to_string()))
}

pub fn write_session(
    root: &Path,
    meta: &SessionMeta,
    rec: &MultiChannelRecording,
    truth: Option<&GroundTruth>,
) -> Result<PathBuf> {
    let dir = session_dir(root, meta.user_id, meta.session);
    fs::create_dir_all(&dir)?;
    for (name, seg) in &rec.channels {
        write_wav(&dir.join(format!("{name}.wav")), seg)?;
    }
    write_imu(&dir.join("imu.csv"), &rec.imu)?;
    write_json(&dir.join("ticks.json"), &rec.ticks)?;
    write_json(&dir.join("meta.json"), meta)?;
    if let Some(t) = truth {
        write_json(&dir.join("ground_truth.json"), t)?;
    }
    Ok(dir)
}

pub fn read_session(dir: &Path) -> Result<(SessionMeta, MultiChannelRecording)> {
    let meta: SessionMeta = read_json(&dir.join("meta.json"))?;
    let ticks: Vec<f64> = read_json(&dir.join("ticks.json"))?;
    let mut channels = BTreeMap::new();
    for name in ChannelName::ALL {
        let path = dir.join(format!("{name}.wav"));
        if path.exists() {
            channels.insert(name, read_wav(&path)?);
        }
    }
    let imu = read_imu(&dir.join("imu.csv"))?;
    let rec = MultiChannelRecording::new(channels, imu, ticks).map_err(|e| Error::dataset(dir, e.to_string()))?;
    if meta.commands.len() != rec.ticks.len() {
        return Err(Error::dataset(dir, "meta.json commands do not match ticks.json"));
    }
    Ok((meta, rec))
}

pub fn read_ground_truth(dir: &Path) -> Result<Option<GroundTruth>> {
    let path = dir.join("ground_truth.json");
    if !path.exists() {
        return Ok(None);
    }
    read_json(&path).map(Some)
}

fn numbered_dirs(parent: &Path, prefix: &str) -> Result<Vec<(u32, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(parent).map_err(|e| Error::dataset(parent, e.to_string()))? {
        let entry = entry?;
        let name = entry.file_name();
        let Some(id) = name
            .to_str()
            .and_then(|n| n.strip_prefix(prefix))
            .and_then(|n| n.parse().ok())
        else {
            continue;
        };
        if entry.file_type()?.is_dir() {
            out.push((id, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

/// Session directories in (user, session) order.
pub fn list_sessions(root: &Path) -> Result<Vec<PathBuf>> {
    if !root.is_dir() {
        return Err(Error::dataset(root, "dataset root does not exist"));
    }
    let mut out = Vec::new();
    for (_, user) in numbered_dirs(root, "user_")? {
        out.extend(numbered_dirs(&user, "session_")?.into_iter().map(|(_, p)| p));
    }
    if out.is_empty() {
        return Err(Error::dataset(root, "no user_<id>/session_<k> directories"));
    }
    Ok(out)
}

pub fn sample_dir(root: &Path, user_id: u32, session: u32, index: usize) -> PathBuf {
    session_dir(root, user_id, session).join(format!("sample_{index}"))
}

/// Sample directories of a preprocessed tree, in (user, session, sample) order.
pub fn list_samples(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for session in list_sessions(root)? {
        out.extend(numbered_dirs(&session, "sample_")?.into_iter().map(|(_, p)| p));
    }
    if out.is_empty() {
        return Err(Error::dataset(root, "no sample_<i> directories"));
    }
    Ok(out)
}

/// Per-sample metadata written next to the sample's audio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetaFile {
    pub label: GestureLabel,
    pub user_id: u32,
    pub command_id: u8,
    pub posture: Posture,
    pub start: f64,
    pub end: f64,
}

pub fn write_sample(dir: &Path, s: &GestureSample) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, seg) in &s.vocal {
        write_wav(&dir.join(format!("vocal_{name}.wav")), seg)?;
    }
    for (name, seg) in &s.ultra {
        write_wav(&dir.join(format!("ultra_{name}.wav")), seg)?;
    }
    write_imu(&dir.join("imu.csv"), &s.imu_window)?;
    write_json(
        &dir.join("sample.json"),
        &SampleMetaFile {
            label: s.label,
            user_id: s.user_id,
            command_id: s.command_id,
            posture: s.posture,
            start: s.start,
            end: s.end,
        },
    )
}

pub fn read_sample(dir: &Path) -> Result<GestureSample> {
    let m: SampleMetaFile = read_json(&dir.join("sample.json"))?;
    let mut vocal = BTreeMap::new();
    let mut ultra = BTreeMap::new();
    for name in ChannelName::ALL {
        let v = dir.join(format!("vocal_{name}.wav"));
        if v.exists() {
            vocal.insert(name, read_wav(&v)?);
        }
        let u = dir.join(format!("ultra_{name}.wav"));
        if u.exists() {
            ultra.insert(name, read_wav(&u)?);
        }
    }
    Ok(GestureSample {
        vocal,
        ultra,
        imu_window: read_imu(&dir.join("imu.csv"))?,
        label: m.label,
        user_id: m.user_id,
        command_id: m.command_id,
        posture: m.posture,
        start: m.start,
        end: m.end,
    })
}
