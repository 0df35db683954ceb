//! Butterworth low-pass design and zero-phase (forward-backward)
//! filtering in cascaded second-order sections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Recording;

/// Low-pass filter parameters. Applied forward then backward, so the
/// net phase is zero and the effective magnitude response is squared.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSpec {
    pub cutoff_hz: f64,
    pub order: usize,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            cutoff_hz: 20.0,
            order: 4,
        }
    }
}

/// One biquad, denominator monic: b0 + b1 z^-1 + b2 z^-2 over
/// 1 + a1 z^-1 + a2 z^-2. First-order sections have b2 = a2 = 0.
#[derive(Debug, Clone, Copy)]
struct Section {
    b: [f64; 3],
    a: [f64; 2],
}

impl Section {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Steady-state internal state (direct form II transposed) for a
    /// constant unit input, so constant signals pass without transient.
    fn unit_step_state(&self) -> [f64; 2] {
        let y = self.dc_gain();
        [
            self.b[1] + self.b[2] - (self.a[0] + self.a[1]) * y,
            self.b[2] - self.a[1] * y,
        ]
    }
}

/// A designed filter: cascade of second-order sections.
#[derive(Debug, Clone)]
pub struct ButterworthLowpass {
    sections: Vec<Section>,
    order: usize,
}

impl ButterworthLowpass {
    /// Bilinear-transform design of an order-`n` Butterworth low-pass.
    pub fn design(spec: FilterSpec, sample_rate_hz: f64) -> Result<Self> {
        let nyquist = sample_rate_hz / 2.0;
        if !(spec.cutoff_hz > 0.0) || spec.cutoff_hz >= nyquist {
            return Err(Error::FilterDesign(format!(
                "cutoff {} Hz must lie in (0, {}) Hz at {} Hz sampling",
                spec.cutoff_hz, nyquist, sample_rate_hz
            )));
        }
        if spec.order == 0 {
            return Err(Error::FilterDesign("filter order must be >= 1".into()));
        }
        let n = spec.order;
        // Pre-warped analog cutoff; prototype poles on the unit circle
        // in the left half plane, mapped through the bilinear transform.
        let wc = (std::f64::consts::PI * spec.cutoff_hz / sample_rate_hz).tan();
        let mut sections = Vec::with_capacity(n.div_ceil(2));
        for k in 0..n / 2 {
            let theta = std::f64::consts::PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            let (sr, si) = (wc * theta.cos(), wc * theta.sin());
            // z = (1 + s) / (1 - s) for s = sr + i*si
            let denom = (1.0 - sr) * (1.0 - sr) + si * si;
            let zr = (1.0 - sr * sr - si * si) / denom;
            let zi = 2.0 * si / denom;
            let a1 = -2.0 * zr;
            let a2 = zr * zr + zi * zi;
            let scale = (1.0 + a1 + a2) / 4.0; // unit DC gain, zeros at z = -1
            sections.push(Section {
                b: [scale, 2.0 * scale, scale],
                a: [a1, a2],
            });
        }
        if n % 2 == 1 {
            let s = -wc; // the real prototype pole
            let z = (1.0 + s) / (1.0 - s);
            let scale = (1.0 - z) / 2.0;
            sections.push(Section {
                b: [scale, scale, 0.0],
                a: [-z, 0.0],
            });
        }
        Ok(ButterworthLowpass { sections, order: n })
    }

    /// Single-pass magnitude response at `freq_hz` (for `sample_rate_hz`
    /// the filter was designed for), from the warped analytic form.
    pub fn magnitude(&self, freq_hz: f64, sample_rate_hz: f64, cutoff_hz: f64) -> f64 {
        let wf = (std::f64::consts::PI * freq_hz / sample_rate_hz).tan();
        let wc = (std::f64::consts::PI * cutoff_hz / sample_rate_hz).tan();
        1.0 / (1.0 + (wf / wc).powi(2 * self.order as i32)).sqrt()
    }

    /// One pass over `x` with initial conditions scaled for `x[0]`.
    fn filter_once(&self, x: &mut [f64]) {
        let x0 = x[0];
        let mut states: Vec<[f64; 2]> = Vec::with_capacity(self.sections.len());
        let mut gain_in = 1.0;
        for sec in &self.sections {
            let zi = sec.unit_step_state();
            states.push([zi[0] * gain_in * x0, zi[1] * gain_in * x0]);
            gain_in *= sec.dc_gain();
        }
        for v in x.iter_mut() {
            let mut acc = *v;
            for (sec, st) in self.sections.iter().zip(states.iter_mut()) {
                let y = sec.b[0] * acc + st[0];
                st[0] = sec.b[1] * acc - sec.a[0] * y + st[1];
                st[1] = sec.b[2] * acc - sec.a[1] * y;
                acc = y;
            }
            *v = acc;
        }
    }

    /// Forward-backward application with odd reflection padding of
    /// 3×order samples at each end. Output length equals input length.
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pad = 3 * self.order;
        if x.len() <= pad {
            return Err(Error::InsufficientData(format!(
                "signal of {} samples is too short for reflection padding of {}",
                x.len(),
                pad
            )));
        }
        let n = x.len();
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in 0..pad {
            ext.push(2.0 * x[0] - x[pad - i]);
        }
        ext.extend_from_slice(x);
        for i in 0..pad {
            ext.push(2.0 * x[n - 1] - x[n - 2 - i]);
        }
        self.filter_once(&mut ext);
        ext.reverse();
        self.filter_once(&mut ext);
        ext.reverse();
        Ok(ext[pad..pad + n].to_vec())
    }
}

/// Filters each axis of a recording independently with a zero-phase
/// Butterworth low-pass. Length, timestamps, and annotations are
/// preserved.
pub fn lowpass(recording: &Recording, spec: FilterSpec) -> Result<Recording> {
    let filter = ButterworthLowpass::design(spec, recording.sample_rate_hz)?;
    let n = recording.len();
    let mut axes = [
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    ];
    for s in &recording.samples {
        axes[0].push(s[0]);
        axes[1].push(s[1]);
        axes[2].push(s[2]);
    }
    let filtered: Vec<Vec<f64>> = axes
        .iter()
        .map(|axis| filter.filtfilt(axis))
        .collect::<Result<_>>()?;
    let samples = (0..n)
        .map(|i| [filtered[0][i], filtered[1][i], filtered[2][i]])
        .collect();
    Ok(Recording {
        participant_id: recording.participant_id.clone(),
        sample_rate_hz: recording.sample_rate_hz,
        t0_micros: recording.t0_micros,
        samples,
        annotations: recording.annotations.clone(),
        labels: recording.labels.clone(),
        excluded: recording.excluded.clone(),
    })
}
