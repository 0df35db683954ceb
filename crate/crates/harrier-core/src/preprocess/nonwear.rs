//! Non-wear detection: prolonged stretches of near-zero movement
//! variance are treated as device-off time and excluded.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Recording;
use crate::time::MICROS_PER_SEC;

/// Rule parameters: a chunk of `window_s` seconds is stationary when
/// every axis has standard deviation below `sd_threshold_g`; a run of
/// stationary chunks spanning at least `min_duration_s` is non-wear.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct NonwearRule {
    pub sd_threshold_g: f64,
    pub min_duration_s: f64,
    pub window_s: f64,
}

impl Default for NonwearRule {
    fn default() -> Self {
        NonwearRule {
            sd_threshold_g: 0.015, // 15 mg
            min_duration_s: 5400.0, // 90 min
            window_s: 10.0,
        }
    }
}

/// Half-open interval `[start, end)` in epoch microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeInterval {
    pub start_micros: i64,
    pub end_micros: i64,
}

impl TimeInterval {
    pub fn duration_secs(&self) -> f64 {
        (self.end_micros - self.start_micros) as f64 / MICROS_PER_SEC as f64
    }
}

/// Per-axis population standard deviations over one chunk.
pub(crate) fn chunk_axis_sd(samples: &[[f64; 3]]) -> [f64; 3] {
    let n = samples.len() as f64;
    let mut mean = [0.0; 3];
    for s in samples {
        for a in 0..3 {
            mean[a] += s[a];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = [0.0; 3];
    for s in samples {
        for a in 0..3 {
            let d = s[a] - mean[a];
            var[a] += d * d;
        }
    }
    [
        (var[0] / n).sqrt(),
        (var[1] / n).sqrt(),
        (var[2] / n).sqrt(),
    ]
}

/// Chunks the recording into consecutive non-overlapping windows of
/// `window_s` seconds and flags the stationary ones. A trailing partial
/// chunk is ignored. Returns (chunk_samples, flags).
pub(crate) fn stationary_chunks(recording: &Recording, rule: &NonwearRule) -> (usize, Vec<bool>) {
    let chunk_len = (rule.window_s * recording.sample_rate_hz).round() as usize;
    if chunk_len == 0 {
        return (0, Vec::new());
    }
    let n_chunks = recording.len() / chunk_len;
    let flags = (0..n_chunks)
        .map(|c| {
            let sd = chunk_axis_sd(&recording.samples[c * chunk_len..(c + 1) * chunk_len]);
            sd.iter().all(|&s| s < rule.sd_threshold_g)
        })
        .collect();
    (chunk_len, flags)
}

/// Detects non-wear intervals: maximal runs of consecutive stationary
/// chunks spanning at least the rule's minimum duration, reported as
/// `[start, end)` in recording time.
pub fn detect_nonwear(recording: &Recording, rule: &NonwearRule) -> Vec<TimeInterval> {
    let (chunk_len, flags) = stationary_chunks(recording, rule);
    let mut intervals = Vec::new();
    let mut run_start: Option<usize> = None;
    for c in 0..=flags.len() {
        let stationary = c < flags.len() && flags[c];
        match (stationary, run_start) {
            (true, None) => run_start = Some(c),
            (false, Some(start)) => {
                let span_s = ((c - start) * chunk_len) as f64 / recording.sample_rate_hz;
                if span_s >= rule.min_duration_s {
                    intervals.push(TimeInterval {
                        start_micros: recording.sample_time_micros(start * chunk_len),
                        end_micros: recording.t0_micros
                            + ((c * chunk_len) as f64 * MICROS_PER_SEC as f64
                                / recording.sample_rate_hz)
                                .round() as i64,
                    });
                }
                run_start = None;
            }
            _ => {}
        }
    }
    intervals
}

/// Marks samples inside the given intervals as excluded. Intervals must
/// be non-overlapping and within the recording span; downstream
/// windowing skips any window overlapping an excluded sample.
pub fn remove_nonwear(recording: &Recording, intervals: &[TimeInterval]) -> Result<Recording> {
    let mut sorted: Vec<TimeInterval> = intervals.to_vec();
    sorted.sort_by_key(|iv| iv.start_micros);
    for w in sorted.windows(2) {
        if w[1].start_micros < w[0].end_micros {
            return Err(Error::Input(format!(
                "overlapping non-wear intervals at {} us",
                w[1].start_micros
            )));
        }
    }
    for iv in &sorted {
        if iv.end_micros < iv.start_micros {
            return Err(Error::Input("interval with negative duration".into()));
        }
    }
    let mut out = recording.clone();
    if sorted.is_empty() {
        return Ok(out);
    }
    let mut mask = out
        .excluded
        .take()
        .unwrap_or_else(|| vec![false; recording.len()]);
    for iv in &sorted {
        for (i, flag) in mask.iter_mut().enumerate() {
            let t = recording.sample_time_micros(i);
            if t >= iv.start_micros && t < iv.end_micros {
                *flag = true;
            }
        }
    }
    out.excluded = Some(mask);
    Ok(out)
}
