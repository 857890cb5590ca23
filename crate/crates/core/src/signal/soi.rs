use serde::{Deserialize, Serialize};

use super::{AudioTrace, SignalOfInterest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoiConfig {
    /// Normalized magnitude an impact must exceed.
    pub threshold: f64,
    /// Seconds kept before the first over-threshold sample.
    pub pre: f64,
    /// Seconds kept after it.
    pub post: f64,
}

impl Default for SoiConfig {
    fn default() -> Self {
        Self {
            threshold: 0.999,
            pre: 0.01,
            post: 0.3,
        }
    }
}

impl SoiConfig {
    pub fn window(&self) -> f64 {
        self.pre + self.post
    }
}

/// Finds every impact in the trace.
///
/// Each detection is the first sample whose magnitude exceeds the threshold;
/// the window `[t - pre, t + post]` is cropped around it and further
/// detections are suppressed for one full window so one tap yields one SOI.
pub fn detect_soi(trace: &AudioTrace, config: &SoiConfig) -> Vec<SignalOfInterest> {
    detect_soi_in(trace, 0..trace.len(), config)
}

/// Like [`detect_soi`], searching for onsets only inside `range`. Windows may
/// extend past the range; they are clipped only at the trace bounds.
pub fn detect_soi_in(
    trace: &AudioTrace,
    range: std::ops::Range<usize>,
    config: &SoiConfig,
) -> Vec<SignalOfInterest> {
    let sr = trace.sample_rate();
    let samples = trace.samples();
    let pre = (config.pre * sr).round() as usize;
    let post = (config.post * sr).round() as usize;
    let end = range.end.min(samples.len());

    let mut out = Vec::new();
    let mut i = range.start;
    while i < end {
        if samples[i].abs() <= config.threshold {
            i += 1;
            continue;
        }
        let lo = i.saturating_sub(pre);
        let hi = (i + post).min(samples.len() - 1);
        let mut soi = SignalOfInterest::from_samples(
            samples[lo..=hi].to_vec(),
            sr,
            trace.time_at(lo),
            trace.time_at(i),
        );
        soi.clipped = lo + pre != i || hi != i + post;
        out.push(soi);
        i += pre + post + 1;
    }
    out
}
