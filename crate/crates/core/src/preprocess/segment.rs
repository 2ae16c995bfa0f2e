use std::collections::BTreeMap;

use super::{ImuStream, MultiChannelRecording};
use crate::channel::ChannelName;
use crate::dsp::AudioSegment;
use crate::error::{Error, Result};

/// One tick-delimited slice of a session, before trimming and band split.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    /// Position of the opening tick within the session.
    pub index: usize,
    pub channels: BTreeMap<ChannelName, AudioSegment>,
    pub imu: ImuStream,
    /// Span on the recorder clock, seconds.
    pub start: f64,
    pub end: f64,
}

impl RawSample {
    pub fn sample_rate(&self) -> f64 {
        self.channels.values().next().map_or(0.0, |s| s.sample_rate())
    }

    pub fn len(&self) -> usize {
        self.channels.values().next().map_or(0, |s| s.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sample `i` covers `[tick_i, tick_{i+1})`, the last one runs to the end of
/// the recording. Audio and IMU are cut at the same instants.
pub fn segment_by_ticks(rec: &MultiChannelRecording) -> Result<Vec<RawSample>> {
    if rec.ticks.is_empty() {
        return Err(Error::Empty("session without ticks"));
    }
    let duration = rec.duration();
    let rate = rec.sample_rate();
    if let Some(&tick) = rec.ticks.iter().find(|&&t| !(0.0..duration).contains(&t)) {
        return Err(Error::TickOutOfRange { tick, duration });
    }
    let total = (duration * rate).round() as usize;
    let bounds: Vec<usize> = rec
        .ticks
        .iter()
        .map(|t| ((t * rate).round() as usize).min(total))
        .chain(std::iter::once(total))
        .collect();
    Ok(bounds
        .windows(2)
        .enumerate()
        .map(|(index, w)| {
            let (a, b) = (w[0], w[1]);
            let start = a as f64 / rate;
            let end = b as f64 / rate;
            RawSample {
                index,
                channels: rec
                    .channels
                    .iter()
                    .map(|(&name, seg)| (name, seg.slice(a, b)))
                    .collect(),
                imu: rec.imu.slice_time(start, end),
                start,
                end,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recording(secs: f64, ticks: Vec<f64>) -> MultiChannelRecording {
        let rate = 1_000.0;
        let n = (secs * rate) as usize;
        let mut ch = BTreeMap::new();
        ch.insert(
            ChannelName::ReOuter,
            AudioSegment::new((0..n).map(|i| i as f64 / n as f64).collect(), rate).unwrap(),
        );
        MultiChannelRecording::new(ch, ImuStream::default(), ticks).unwrap()
    }

    #[test]
    fn ten_ticks_partition_the_tail() {
        let ticks: Vec<f64> = (0..10).map(|i| 3.0 + 5.5 * i as f64).collect();
        let rec = recording(60.0, ticks.clone());
        let samples = segment_by_ticks(&rec).unwrap();
        assert_eq!(samples.len(), 10);
        assert_eq!(samples[0].start, ticks[0]);
        assert_eq!(samples[9].end, 60.0);
        for w in samples.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
        let covered: usize = samples.iter().map(|s| s.len()).sum();
        assert_eq!(covered, 57_000);
    }

    #[test]
    fn single_tick_at_zero_is_whole_recording() {
        let rec = recording(2.0, vec![0.0]);
        let samples = segment_by_ticks(&rec).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(
            samples[0].channels[&ChannelName::ReOuter],
            rec.channels[&ChannelName::ReOuter]
        );
    }

    #[test]
    fn tick_past_end_is_rejected() {
        let rec = recording(2.0, vec![0.5, 2.5]);
        let err = segment_by_ticks(&rec).unwrap_err();
        assert!(err.to_string().starts_with("tick-out-of-range"), "{err}");
    }
}
