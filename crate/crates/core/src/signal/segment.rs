use serde::{Deserialize, Serialize};

use super::AudioTrace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    /// Interval length in seconds. Should exceed half the time between taps.
    pub interval_length: f64,
    /// An interval is relevant when its peak magnitude exceeds this.
    pub relevance_threshold: f64,
    /// Moving-RMS window used to build each region's envelope, seconds.
    pub envelope_window: f64,
    /// Regions whose envelope maximum lies this many standard deviations
    /// above the mean of the other regions are rejected as noise.
    pub outlier_sigmas: f64,
    /// Lower bound on the standard deviation, as a fraction of the mean, so
    /// that a set of near-identical taps does not reject ordinary spread.
    pub min_sigma_fraction: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            interval_length: 0.75,
            relevance_threshold: 0.3,
            envelope_window: 0.05,
            outlier_sigmas: 3.0,
            min_sigma_fraction: 0.1,
        }
    }
}

impl SegmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.interval_length > 0.0) {
            return Err(Error::InvalidParameter("interval length must be positive".into()));
        }
        if !(self.relevance_threshold >= 0.0) {
            return Err(Error::InvalidParameter("relevance threshold must be nonnegative".into()));
        }
        if !(self.envelope_window > 0.0) || !(self.outlier_sigmas > 0.0) || self.min_sigma_fraction < 0.0 {
            return Err(Error::InvalidParameter("envelope parameters must be positive".into()));
        }
        Ok(())
    }
}

/// Half-open sample range `[start, end)` covering whole intervals
/// `first_interval..=last_interval` (the last one may be partial).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntervalRange {
    pub start: usize,
    pub end: usize,
    pub first_interval: usize,
    pub last_interval: usize,
}

impl IntervalRange {
    pub fn contains(&self, sample: usize) -> bool {
        sample >= self.start && sample < self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RejectionReason {
    /// Envelope maximum beyond `mean + k·σ` of the remaining regions.
    EnvelopeOutlier { envelope_max: f64, limit: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedInterval {
    pub range: IntervalRange,
    pub reason: RejectionReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSegmentation {
    pub interval_length: f64,
    pub interval_samples: usize,
    /// Padded, merged regions that survived envelope screening.
    pub relevant_intervals: Vec<IntervalRange>,
    pub rejected_intervals: Vec<RejectedInterval>,
    /// Set when the trace was shorter than a single interval.
    pub short_trace: bool,
}

/// Splits a trace into fixed intervals, keeps the ones whose peak exceeds the
/// relevance threshold, pads each by one interval on both sides, merges
/// overlapping pads, and discards regions whose envelope is an outlier.
pub fn segment_intervals(trace: &AudioTrace, config: &SegmentConfig) -> Result<IntervalSegmentation> {
    config.validate()?;
    let n = ((config.interval_length * trace.sample_rate()).round() as usize).max(1);
    let mut out = IntervalSegmentation {
        interval_length: config.interval_length,
        interval_samples: n,
        relevant_intervals: Vec::new(),
        rejected_intervals: Vec::new(),
        short_trace: false,
    };
    let samples = trace.samples();
    if samples.len() < n {
        log::warn!(
            "trace of {} samples is shorter than one {} s interval",
            samples.len(),
            config.interval_length
        );
        out.short_trace = true;
        return Ok(out);
    }

    let count = samples.len().div_ceil(n);
    let relevant: Vec<usize> = (0..count)
        .filter(|&k| {
            let chunk = &samples[k * n..((k + 1) * n).min(samples.len())];
            chunk.iter().any(|s| s.abs() > config.relevance_threshold)
        })
        .collect();

    let mut regions: Vec<IntervalRange> = Vec::new();
    for k in relevant {
        let first = k.saturating_sub(1);
        let last = (k + 1).min(count - 1);
        match regions.last_mut() {
            Some(r) if first <= r.last_interval => r.last_interval = r.last_interval.max(last),
            _ => regions.push(IntervalRange {
                start: 0,
                end: 0,
                first_interval: first,
                last_interval: last,
            }),
        }
    }
    for r in &mut regions {
        r.start = r.first_interval * n;
        r.end = ((r.last_interval + 1) * n).min(samples.len());
    }

    let window = ((config.envelope_window * trace.sample_rate()).round() as usize).max(1);
    let maxima: Vec<f64> = regions
        .iter()
        .map(|r| envelope_max(&samples[r.start..r.end], window))
        .collect();

    for (i, region) in regions.into_iter().enumerate() {
        match outlier_limit(&maxima, i, config) {
            Some(limit) if maxima[i] > limit => out.rejected_intervals.push(RejectedInterval {
                range: region,
                reason: RejectionReason::EnvelopeOutlier {
                    envelope_max: maxima[i],
                    limit,
                },
            }),
            _ => out.relevant_intervals.push(region),
        }
    }
    Ok(out)
}

/// Maximum of the moving RMS over `window` samples.
fn envelope_max(samples: &[f64], window: usize) -> f64 {
    let w = window.min(samples.len()).max(1);
    let mut acc: f64 = samples[..w].iter().map(|s| s * s).sum();
    let mut best = acc;
    for i in w..samples.len() {
        acc += samples[i] * samples[i] - samples[i - w] * samples[i - w];
        best = best.max(acc);
    }
    (best.max(0.0) / w as f64).sqrt()
}

/// `mean + k·σ` of every envelope maximum except the one at `skip`, or `None`
/// when fewer than two other regions exist to form the statistic.
fn outlier_limit(maxima: &[f64], skip: usize, config: &SegmentConfig) -> Option<f64> {
    let others: Vec<f64> = maxima
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != skip)
        .map(|(_, m)| *m)
        .collect();
    if others.len() < 2 {
        return None;
    }
    let mean = others.iter().sum::<f64>() / others.len() as f64;
    let var = others.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / others.len() as f64;
    let sigma = var.sqrt().max(config.min_sigma_fraction * mean);
    Some(mean + config.outlier_sigmas * sigma)
}
