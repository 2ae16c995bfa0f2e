use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureBundle;

const STD_FLOOR: f64 = 1e-6;

fn finish(sum: Vec<f64>, sq: Vec<f64>, count: f64) -> (Vec<f32>, Vec<f32>) {
    sum.iter()
        .zip(&sq)
        .map(|(&s, &q)| {
            let mean = s / count;
            let std = (q / count - mean * mean).max(0.0).sqrt();
            (mean as f32, if std < STD_FLOOR { 1.0 } else { std as f32 })
        })
        .unzip()
}

/// Per-dimension z-scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatNorm {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl StatNorm {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f32]>) -> Result<Self> {
        let mut rows = rows.into_iter().peekable();
        let dim = rows.peek().map(|r| r.len()).ok_or(Error::Empty("normalisation rows"))?;
        let (mut sum, mut sq, mut n) = (vec![0.0; dim], vec![0.0; dim], 0usize);
        for r in rows {
            if r.len() != dim {
                return Err(Error::dims(format!("row of {} values, expected {dim}", r.len())));
            }
            for (k, &v) in r.iter().enumerate() {
                sum[k] += v as f64;
                sq[k] += (v as f64) * (v as f64);
            }
            n += 1;
        }
        let (mean, std) = finish(sum, sq, n as f64);
        Ok(Self { mean, std })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn apply(&self, x: &[f32], out: &mut Vec<f32>) -> Result<()> {
        if x.len() != self.len() {
            return Err(Error::dims(format!("{} statistics, expected {}", x.len(), self.len())));
        }
        out.extend(x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s));
        Ok(())
    }
}

/// Per-plane standardisation of stacked maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapNorm {
    pub shape: [usize; 3],
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl MapNorm {
    pub fn fit<'a>(maps: impl IntoIterator<Item = &'a ndarray::Array3<f32>>) -> Result<Self> {
        let mut maps = maps.into_iter().peekable();
        let first = maps.peek().ok_or(Error::Empty("normalisation maps"))?;
        let shape: [usize; 3] = [first.dim().0, first.dim().1, first.dim().2];
        let planes = shape[0];
        let (mut sum, mut sq, mut n) = (vec![0.0; planes], vec![0.0; planes], 0usize);
        for m in maps {
            if m.shape() != shape {
                return Err(Error::dims(format!("map {:?}, expected {shape:?}", m.shape())));
            }
            for (p, plane) in m.outer_iter().enumerate() {
                for &v in plane.iter() {
                    sum[p] += v as f64;
                    sq[p] += (v as f64) * (v as f64);
                }
            }
            n += shape[1] * shape[2];
        }
        let (mean, std) = finish(sum, sq, n as f64);
        Ok(Self { shape, mean, std })
    }

    pub fn apply(&self, m: &ndarray::Array3<f32>, out: &mut Vec<f32>) -> Result<()> {
        if m.shape() != self.shape {
            return Err(Error::dims(format!("map {:?}, expected {:?}", m.shape(), self.shape)));
        }
        for (p, plane) in m.outer_iter().enumerate() {
            let (mu, s) = (self.mean[p], self.std[p]);
            out.extend(plane.iter().map(|v| (v - mu) / s));
        }
        Ok(())
    }
}

/// Everything fitted on a training fold before any network sees the data.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Normalizer {
    pub vocal_map: Option<MapNorm>,
    pub vocal_stats: Option<StatNorm>,
    /// Scale of the MFCC distance-to-similarity map.
    pub tau: Option<f64>,
    pub ultra_map: Option<MapNorm>,
    pub ultra_stats: Option<StatNorm>,
    pub imu: Option<StatNorm>,
}

/// Median of all pairwise MFCC distances in the set.
pub fn fit_tau(bundles: &[FeatureBundle]) -> Option<f64> {
    let mut d: Vec<f64> = bundles
        .iter()
        .filter_map(|b| b.vocal.as_ref())
        .flat_map(|v| v.mfcc_distance.iter().map(|&x| x as f64))
        .collect();
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len() / 2;
    let med = if d.len() % 2 == 1 {
        d[m]
    } else {
        0.5 * (d[m - 1] + d[m])
    };
    Some(if med > 0.0 { med } else { 1.0 })
}

/// Vocal side statistics: amplitude series then MFCC similarities.
pub fn vocal_stats_raw(v: &crate::features::VocalInput, tau: Option<f64>) -> Vec<f32> {
    let tau = tau.unwrap_or(1.0);
    let mut out = v.amp.clone();
    out.extend(
        v.mfcc_distance
            .iter()
            .map(|&d| crate::features::similarity(d as f64, tau) as f32),
    );
    out
}

impl Normalizer {
    /// Fits every branch present in the bundles.
    pub fn fit(bundles: &[FeatureBundle]) -> Result<Self> {
        let first = bundles.first().ok_or(Error::Empty("training split"))?;
        let mut out = Normalizer::default();
        if first.vocal.is_some() {
            let vocal: Vec<_> = bundles
                .iter()
                .map(|b| b.vocal.as_ref().ok_or_else(|| Error::MissingChannel("vocal".into())))
                .collect::<Result<_>>()?;
            out.tau = fit_tau(bundles);
            out.vocal_map = Some(MapNorm::fit(vocal.iter().map(|v| &v.map))?);
            let raw: Vec<Vec<f32>> = vocal.iter().map(|v| vocal_stats_raw(v, out.tau)).collect();
            out.vocal_stats = Some(StatNorm::fit(raw.iter().map(|r| r.as_slice()))?);
        }
        if first.ultra.is_some() {
            let ultra: Vec<_> = bundles
                .iter()
                .map(|b| {
                    b.ultra
                        .as_ref()
                        .ok_or_else(|| Error::MissingChannel("ultrasound".into()))
                })
                .collect::<Result<_>>()?;
            out.ultra_map = Some(MapNorm::fit(ultra.iter().map(|u| &u.map))?);
            out.ultra_stats = Some(StatNorm::fit(ultra.iter().map(|u| u.stats.as_slice()))?);
        }
        if first.imu.is_some() {
            let imu: Vec<_> = bundles
                .iter()
                .map(|b| b.imu.as_deref().ok_or_else(|| Error::MissingChannel("imu".into())))
                .collect::<Result<_>>()?;
            out.imu = Some(StatNorm::fit(imu)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_scores_have_zero_mean_unit_std() {
        let rows = [vec![1.0f32, 5.0, 2.0], vec![3.0, 5.0, 4.0], vec![5.0, 5.0, 9.0]];
        let n = StatNorm::fit(rows.iter().map(|r| r.as_slice())).unwrap();
        assert_eq!(n.std[1], 1.0);
        let mut z = Vec::new();
        for r in &rows {
            n.apply(r, &mut z).unwrap();
        }
        for k in 0..3 {
            let col: Vec<f32> = z.iter().skip(k).step_by(3).copied().collect();
            let mean: f32 = col.iter().sum::<f32>() / 3.0;
            assert!(mean.abs() < 1e-6);
        }
        assert!((z[0] + 1.2247449).abs() < 1e-5);
    }
}
