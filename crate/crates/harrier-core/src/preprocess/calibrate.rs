//! Per-axis gain/offset auto-calibration so that stationary readings
//! lie on the 1 g sphere.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ingest::Recording;
use crate::preprocess::nonwear::{chunk_axis_sd, NonwearRule};

/// Outcome of an auto-calibration attempt. When `applied` is false the
/// recording is returned unchanged (not enough stationary data, poor
/// axis diversity, or a fit outside the acceptance bounds).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub gain: [f64; 3],
    pub offset: [f64; 3],
    pub iterations: usize,
    /// RMS deviation of stationary chunk means from the unit sphere, in
    /// g, after (or without, if not applied) calibration.
    pub final_residual: f64,
    pub applied: bool,
    pub n_stationary: usize,
}

const MIN_STATIONARY_CHUNKS: usize = 10;
const DIVERSITY_G: f64 = 0.3;
const GAIN_BOUNDS: (f64, f64) = (0.5, 1.5);
const MAX_OFFSET_G: f64 = 0.5;
const MAX_ITERATIONS: usize = 1000;
const CONVERGENCE_EPS: f64 = 1e-9;

fn sphere_residual(points: &[[f64; 3]]) -> f64 {
    let sum: f64 = points
        .iter()
        .map(|p| {
            let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            (norm - 1.0) * (norm - 1.0)
        })
        .sum();
    (sum / points.len() as f64).sqrt()
}

/// Mean (x, y, z) of each stationary 10 s chunk (same stationarity rule
/// as non-wear detection, without any duration requirement).
fn stationary_chunk_means(recording: &Recording, rule: &NonwearRule) -> Vec<[f64; 3]> {
    let chunk_len = (rule.window_s * recording.sample_rate_hz).round() as usize;
    if chunk_len == 0 {
        return Vec::new();
    }
    let mut means = Vec::new();
    for c in 0..recording.len() / chunk_len {
        let chunk = &recording.samples[c * chunk_len..(c + 1) * chunk_len];
        let sd = chunk_axis_sd(chunk);
        if sd.iter().all(|&s| s < rule.sd_threshold_g) {
            let mut m = [0.0; 3];
            for s in chunk {
                for a in 0..3 {
                    m[a] += s[a];
                }
            }
            for v in &mut m {
                *v /= chunk.len() as f64;
            }
            means.push(m);
        }
    }
    means
}

fn axis_diversity_ok(points: &[[f64; 3]]) -> bool {
    (0..3).all(|a| {
        points.iter().any(|p| p[a] > DIVERSITY_G) && points.iter().any(|p| p[a] < -DIVERSITY_G)
    })
}

/// Iterative fit: project the current calibrated points onto the unit
/// sphere, then per axis solve ordinary least squares of those targets
/// on the current values, accumulating gain and offset. Stops when the
/// residual improves by less than 1e-9 or after 1000 iterations.
fn fit_gain_offset(points: &[[f64; 3]]) -> ([f64; 3], [f64; 3], usize, f64) {
    let n = points.len() as f64;
    let mut gain = [1.0; 3];
    let mut offset = [0.0; 3];
    let mut current: Vec<[f64; 3]> = points.to_vec();
    let mut residual = sphere_residual(&current);
    let mut iterations = 0;

    for _ in 0..MAX_ITERATIONS {
        iterations += 1;
        // Nearest unit-sphere point per chunk mean.
        let targets: Vec<[f64; 3]> = current
            .iter()
            .map(|p| {
                let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                if norm > 0.0 {
                    [p[0] / norm, p[1] / norm, p[2] / norm]
                } else {
                    [0.0, 0.0, 1.0]
                }
            })
            .collect();
        for a in 0..3 {
            let mean_x: f64 = current.iter().map(|p| p[a]).sum::<f64>() / n;
            let mean_t: f64 = targets.iter().map(|t| t[a]).sum::<f64>() / n;
            let mut sxx = 0.0;
            let mut sxt = 0.0;
            for (p, t) in current.iter().zip(&targets) {
                let dx = p[a] - mean_x;
                sxx += dx * dx;
                sxt += dx * (t[a] - mean_t);
            }
            let slope = if sxx > 0.0 { sxt / sxx } else { 1.0 };
            let intercept = mean_t - slope * mean_x;
            for p in &mut current {
                p[a] = slope * p[a] + intercept;
            }
            gain[a] *= slope;
            offset[a] = slope * offset[a] + intercept;
        }
        let new_residual = sphere_residual(&current);
        let improved = residual - new_residual;
        residual = new_residual;
        if improved < CONVERGENCE_EPS {
            break;
        }
    }
    (gain, offset, iterations, residual)
}

/// Auto-calibrates a (filtered, uniform-rate) recording. Returns the
/// possibly rescaled recording plus a report; non-application is
/// reported, never raised.
pub fn autocalibrate(recording: &Recording) -> Result<(Recording, CalibrationReport)> {
    let rule = NonwearRule::default();
    let points = stationary_chunk_means(recording, &rule);
    let baseline_residual = if points.is_empty() {
        f64::NAN
    } else {
        sphere_residual(&points)
    };
    let mut report = CalibrationReport {
        gain: [1.0; 3],
        offset: [0.0; 3],
        iterations: 0,
        final_residual: baseline_residual,
        applied: false,
        n_stationary: points.len(),
    };
    if points.len() < MIN_STATIONARY_CHUNKS || !axis_diversity_ok(&points) {
        return Ok((recording.clone(), report));
    }

    let (gain, offset, iterations, residual) = fit_gain_offset(&points);
    report.iterations = iterations;

    let bounds_ok = gain
        .iter()
        .all(|&g| g >= GAIN_BOUNDS.0 && g <= GAIN_BOUNDS.1)
        && offset.iter().all(|&o| o.abs() <= MAX_OFFSET_G);
    if !bounds_ok || residual > baseline_residual || !residual.is_finite() {
        return Ok((recording.clone(), report));
    }

    report.gain = gain;
    report.offset = offset;
    report.final_residual = residual;
    report.applied = true;

    let mut out = recording.clone();
    for s in &mut out.samples {
        for a in 0..3 {
            s[a] = gain[a] * s[a] + offset[a];
        }
    }
    Ok((out, report))
}
