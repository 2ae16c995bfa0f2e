use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Local distance between two aligned vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cost {
    #[default]
    Euclidean,
    /// Sum of absolute differences (L1).
    Absolute,
    SquaredEuclidean,
}

impl Cost {
    #[inline]
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Cost::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Cost::Absolute => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Cost::SquaredEuclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
        }
    }
}

/// Minimal cumulative cost over monotone alignments with steps (1,0), (0,1), (1,1).
///
/// Rows of `a` and `b` are time steps; both must have the same number of columns.
pub fn dtw_distance(a: ArrayView2<f64>, b: ArrayView2<f64>, cost: Cost) -> Result<f64> {
    let (n, da) = a.dim();
    let (m, db) = b.dim();
    if n == 0 || m == 0 {
        return Err(Error::Empty("dtw over an empty sequence"));
    }
    if da != db {
        return Err(Error::dims(format!("dtw vector dims differ: {da} vs {db}")));
    }
    let rows_a: Vec<Vec<f64>> = a.rows().into_iter().map(|r| r.to_vec()).collect();
    let rows_b: Vec<Vec<f64>> = b.rows().into_iter().map(|r| r.to_vec()).collect();

    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![f64::INFINITY; m];
    for (i, ra) in rows_a.iter().enumerate() {
        for (j, rb) in rows_b.iter().enumerate() {
            let c = cost.eval(ra, rb);
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(cur[j - 1]).min(prev[j - 1]),
            };
            cur[j] = c + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}
