//! Handcrafted per-window features: moments, correlations, orientation
//! angles, spectral shape, and peak statistics of the signal norm.
//!
//! The ordered 63-feature list is a frozen, versioned manifest (see
//! `docs/feature-manifest.md`); order stability within a major release
//! is part of the contract. Degenerate inputs (zero variance, empty
//! spectrum) produce the documented fallback values, never NaN or
//! infinity.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::preprocess::Window;

/// Version tag of the feature manifest; persisted models embed it.
pub const FEATURE_MANIFEST_VERSION: &str = "v1";

pub const N_FEATURES: usize = 63;

/// Feature identifiers in output order.
pub static FEATURE_NAMES: [&str; N_FEATURES] = [
    "x_mean",
    "x_sd",
    "x_skew",
    "x_kurtosis",
    "x_min",
    "x_max",
    "y_mean",
    "y_sd",
    "y_skew",
    "y_kurtosis",
    "y_min",
    "y_max",
    "z_mean",
    "z_sd",
    "z_skew",
    "z_kurtosis",
    "z_min",
    "z_max",
    "v_mean",
    "v_sd",
    "v_skew",
    "v_kurtosis",
    "v_min",
    "v_max",
    "v_q25",
    "v_median",
    "v_q75",
    "corr_xy",
    "corr_xz",
    "corr_yz",
    "autocorr_x",
    "autocorr_y",
    "autocorr_z",
    "autocorr_v",
    "roll_mean",
    "roll_sd",
    "pitch_mean",
    "pitch_sd",
    "yaw_mean",
    "yaw_sd",
    "dominant_freq_hz",
    "dominant_power",
    "second_dominant_freq_hz",
    "second_dominant_power",
    "spectral_entropy",
    "total_power",
    "band_power_0.3_1",
    "band_power_1_3",
    "band_power_3_5",
    "band_power_5_8",
    "band_power_8_15",
    "peak_count",
    "peak_prominence_mean",
    "v_mad",
    "v_iqr",
    "v_range",
    "v_mean_crossings",
    "power_x",
    "power_y",
    "power_z",
    "enmo_mean",
    "enmo_sd",
    "band_power_walk",
];

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: [f64; N_FEATURES],
}

impl FeatureVector {
    pub fn names() -> &'static [&'static str; N_FEATURES] {
        &FEATURE_NAMES
    }
}

struct Moments {
    mean: f64,
    sd: f64,
    skew: f64,
    kurtosis: f64,
    min: f64,
    max: f64,
}

fn moments(series: &[f64]) -> Moments {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in series {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
        min = min.min(v);
        max = max.max(v);
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let sd = m2.sqrt();
    // Zero-variance fallbacks keep every feature finite.
    let (skew, kurtosis) = if m2 > 0.0 && m2.is_finite() {
        (m3 / (m2 * sd), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    Moments {
        mean,
        sd,
        skew,
        kurtosis,
        min,
        max,
    }
}

/// Linear-interpolation quantile on a pre-sorted slice.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        saa += dx * dx;
        sbb += dy * dy;
        sab += dx * dy;
    }
    if saa > 0.0 && sbb > 0.0 {
        sab / (saa.sqrt() * sbb.sqrt())
    } else {
        0.0
    }
}

fn lag1_autocorr(series: &[f64]) -> f64 {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let denom: f64 = series.iter().map(|&v| (v - mean) * (v - mean)).sum();
    if denom <= 0.0 {
        return 0.0;
    }
    let num: f64 = series
        .windows(2)
        .map(|w| (w[0] - mean) * (w[1] - mean))
        .sum();
    num / denom
}

fn mean_sd(series: &[f64]) -> (f64, f64) {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

struct Spectrum {
    dominant_freq: f64,
    dominant_power: f64,
    second_freq: f64,
    second_power: f64,
    entropy: f64,
    total_power: f64,
    bands: [f64; 6],
}

const BAND_EDGES: [(f64, f64); 6] = [
    (0.3, 1.0),
    (1.0, 3.0),
    (3.0, 5.0),
    (5.0, 8.0),
    (8.0, 15.0),
    (0.6, 2.5), // walking band
];

/// Single FFT over the mean-removed, Hann-tapered norm series.
/// One-sided power normalized by window length; DC excluded.
fn spectrum(v: &[f64], sample_rate_hz: f64) -> Spectrum {
    let n = v.len();
    let zero = Spectrum {
        dominant_freq: 0.0,
        dominant_power: 0.0,
        second_freq: 0.0,
        second_power: 0.0,
        entropy: 0.0,
        total_power: 0.0,
        bands: [0.0; 6],
    };
    if n < 4 {
        return zero;
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let w = 0.5
                * (1.0
                    - (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos());
            Complex::new((x - mean) * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let k_max = n / 2;
    let power: Vec<f64> = (1..=k_max).map(|k| buf[k].norm_sqr() / n as f64).collect();
    let total: f64 = power.iter().sum();
    if !(total > 1e-24) || !total.is_finite() {
        return zero;
    }
    let freq_of = |k: usize| k as f64 * sample_rate_hz / n as f64; // k is 1-based bin
    let mut dom = 0usize; // index into power (bin dom+1)
    for (i, &p) in power.iter().enumerate() {
        if p > power[dom] {
            dom = i;
        }
    }
    let mut second: Option<usize> = None;
    for (i, &p) in power.iter().enumerate() {
        if i + 1 >= dom && i <= dom + 1 {
            continue; // skip the dominant bin and its direct neighbors
        }
        if second.is_none_or(|s| p > power[s]) {
            second = Some(i);
        }
    }
    let entropy = -power
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| {
            let q = p / total;
            q * q.ln()
        })
        .sum::<f64>();
    let mut bands = [0.0; 6];
    for (i, &p) in power.iter().enumerate() {
        let f = freq_of(i + 1);
        for (b, &(lo, hi)) in BAND_EDGES.iter().enumerate() {
            if f >= lo && f < hi {
                bands[b] += p;
            }
        }
    }
    Spectrum {
        dominant_freq: freq_of(dom + 1),
        dominant_power: power[dom],
        second_freq: second.map(|s| freq_of(s + 1)).unwrap_or(0.0),
        second_power: second.map(|s| power[s]).unwrap_or(0.0),
        entropy,
        total_power: total,
        bands,
    }
}

/// Peaks of `v` above mean + 1 SD (strict local maxima) and their mean
/// prominence: height above the higher of the two bases reached before
/// a taller value on each side.
fn peak_stats(v: &[f64], mean: f64, sd: f64) -> (f64, f64) {
    let threshold = mean + sd;
    let mut count = 0usize;
    let mut prominence_sum = 0.0;
    for i in 1..v.len().saturating_sub(1) {
        if !(v[i] > v[i - 1] && v[i] > v[i + 1] && v[i] > threshold) {
            continue;
        }
        let mut left_base = v[i];
        let mut j = i;
        while j > 0 {
            j -= 1;
            if v[j] > v[i] {
                break;
            }
            left_base = left_base.min(v[j]);
        }
        let mut right_base = v[i];
        let mut j = i;
        while j + 1 < v.len() {
            j += 1;
            if v[j] > v[i] {
                break;
            }
            right_base = right_base.min(v[j]);
        }
        count += 1;
        prominence_sum += v[i] - left_base.max(right_base);
    }
    let mean_prominence = if count > 0 {
        prominence_sum / count as f64
    } else {
        0.0
    };
    (count as f64, mean_prominence)
}

/// Computes the 63-feature vector for one window.
pub fn extract_features(window: &Window) -> FeatureVector {
    let n = window.samples.len();
    assert!(n > 0, "window has no samples");
    let x: Vec<f64> = window.samples.iter().map(|s| s[0]).collect();
    let y: Vec<f64> = window.samples.iter().map(|s| s[1]).collect();
    let z: Vec<f64> = window.samples.iter().map(|s| s[2]).collect();
    let v: Vec<f64> = window
        .samples
        .iter()
        .map(|s| s[0].hypot(s[1]).hypot(s[2]))
        .collect();
    let enmo: Vec<f64> = v.iter().map(|&m| (m - 1.0).max(0.0)).collect();

    let mx = moments(&x);
    let my = moments(&y);
    let mz = moments(&z);
    let mv = moments(&v);

    let mut sorted_v = v.clone();
    sorted_v.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let q25 = quantile_sorted(&sorted_v, 0.25);
    let median = quantile_sorted(&sorted_v, 0.5);
    let q75 = quantile_sorted(&sorted_v, 0.75);

    let roll: Vec<f64> = window.samples.iter().map(|s| s[1].atan2(s[2])).collect();
    let pitch: Vec<f64> = window
        .samples
        .iter()
        .map(|s| (-s[0]).atan2(s[1].hypot(s[2])))
        .collect();
    let yaw: Vec<f64> = window.samples.iter().map(|s| s[1].atan2(s[0])).collect();
    let (roll_mean, roll_sd) = mean_sd(&roll);
    let (pitch_mean, pitch_sd) = mean_sd(&pitch);
    let (yaw_mean, yaw_sd) = mean_sd(&yaw);

    let spec = spectrum(&v, window.sample_rate_hz);
    let (peak_count, peak_prominence) = peak_stats(&v, mv.mean, mv.sd);

    let v_mad = v.iter().map(|&m| (m - mv.mean).abs()).sum::<f64>() / n as f64;
    let crossings = v
        .windows(2)
        .filter(|w| (w[0] - mv.mean) * (w[1] - mv.mean) < 0.0)
        .count() as f64;
    let power_axis = |axis: &[f64]| axis.iter().map(|&a| a * a).sum::<f64>() / n as f64;
    let (enmo_mean, enmo_sd) = mean_sd(&enmo);

    let values = [
        mx.mean,
        mx.sd,
        mx.skew,
        mx.kurtosis,
        mx.min,
        mx.max,
        my.mean,
        my.sd,
        my.skew,
        my.kurtosis,
        my.min,
        my.max,
        mz.mean,
        mz.sd,
        mz.skew,
        mz.kurtosis,
        mz.min,
        mz.max,
        mv.mean,
        mv.sd,
        mv.skew,
        mv.kurtosis,
        mv.min,
        mv.max,
        q25,
        median,
        q75,
        pearson(&x, &y),
        pearson(&x, &z),
        pearson(&y, &z),
        lag1_autocorr(&x),
        lag1_autocorr(&y),
        lag1_autocorr(&z),
        lag1_autocorr(&v),
        roll_mean,
        roll_sd,
        pitch_mean,
        pitch_sd,
        yaw_mean,
        yaw_sd,
        spec.dominant_freq,
        spec.dominant_power,
        spec.second_freq,
        spec.second_power,
        spec.entropy,
        spec.total_power,
        spec.bands[0],
        spec.bands[1],
        spec.bands[2],
        spec.bands[3],
        spec.bands[4],
        peak_count,
        peak_prominence,
        v_mad,
        quantile_sorted(&sorted_v, 0.75) - q25,
        mv.max - mv.min,
        crossings,
        power_axis(&x),
        power_axis(&y),
        power_axis(&z),
        enmo_mean,
        enmo_sd,
        spec.bands[5],
    ];
    FeatureVector { values }
}
