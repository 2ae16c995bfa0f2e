use super::AudioSegment;

pub const AMPLITUDE_SERIES_LEN: usize = 250;

/// Copy into a vector of exactly `len`, zero-padding or truncating the tail.
pub fn pad_or_truncate(values: &[f64], len: usize) -> Vec<f64> {
    let mut out = values[..values.len().min(len)].to_vec();
    out.resize(len, 0.0);
    out
}

/// Per-window RMS over full windows, padded/truncated to 250 entries.
pub fn amplitude_series(seg: &AudioSegment, win: usize, stride: usize) -> Vec<f64> {
    let x = seg.samples();
    if win == 0 || stride == 0 || x.len() < win {
        return vec![0.0; AMPLITUDE_SERIES_LEN];
    }
    let count = (x.len() - win) / stride + 1;
    let series: Vec<f64> = (0..count.min(AMPLITUDE_SERIES_LEN))
        .map(|k| {
            let w = &x[k * stride..k * stride + win];
            (w.iter().map(|v| v * v).sum::<f64>() / win as f64).sqrt()
        })
        .collect();
    pad_or_truncate(&series, AMPLITUDE_SERIES_LEN)
}
