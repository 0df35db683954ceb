//! Cutting a recording into fixed-duration, majority-labeled windows.

use crate::error::{Error, Result};
use crate::ingest::Recording;
use crate::label::{IntensityLabel, ALL_LABELS, N_CLASSES};

/// Fraction of a window's samples that must carry an annotation for the
/// majority label to count as ground truth.
pub const LABEL_COVERAGE_THRESHOLD: f64 = 0.5;

/// A fixed-duration slice of the tri-axial signal: the unit of
/// classification.
#[derive(Debug, Clone)]
pub struct Window {
    pub participant_id: String,
    /// Start of the window, epoch microseconds.
    pub start_micros: i64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub samples: Vec<[f64; 3]>,
    /// Majority intensity label; `None` when the annotated fraction of
    /// the window is below the coverage threshold.
    pub label: Option<IntensityLabel>,
    /// Fraction of window samples carrying the majority label.
    pub label_coverage: f64,
}

/// Splits a recording into consecutive non-overlapping windows aligned
/// to the recording start. Windows overlapping excluded samples are
/// dropped, as is a trailing partial window. The window label is the
/// most frequent per-sample label, ties broken by canonical index
/// order; a window annotated on less than half its samples stays
/// unlabeled (kept for inference, excluded from supervised training).
pub fn make_windows(recording: &Recording, duration_s: f64) -> Result<Vec<Window>> {
    if !(duration_s > 0.0) {
        return Err(Error::Config(format!(
            "window duration {duration_s} s must be positive"
        )));
    }
    let exact = duration_s * recording.sample_rate_hz;
    let per_window = exact.round();
    if per_window < 1.0 || (exact - per_window).abs() > 1e-6 * per_window.max(1.0) {
        return Err(Error::Config(format!(
            "window duration {duration_s} s is not a positive multiple of the {} Hz sample period",
            recording.sample_rate_hz
        )));
    }
    let per_window = per_window as usize;

    let mut windows = Vec::with_capacity(recording.len() / per_window);
    for w in 0..recording.len() / per_window {
        let lo = w * per_window;
        let hi = lo + per_window;
        if (lo..hi).any(|i| recording.is_excluded(i)) {
            continue;
        }
        let (label, label_coverage) = match &recording.labels {
            None => (None, 0.0),
            Some(labels) => {
                let mut counts = [0usize; N_CLASSES];
                let mut annotated = 0usize;
                for l in labels[lo..hi].iter().flatten() {
                    counts[l.index()] += 1;
                    annotated += 1;
                }
                if annotated == 0 {
                    (None, 0.0)
                } else {
                    let mut best = 0;
                    for c in 1..N_CLASSES {
                        if counts[c] > counts[best] {
                            best = c;
                        }
                    }
                    let coverage = counts[best] as f64 / per_window as f64;
                    let annotated_fraction = annotated as f64 / per_window as f64;
                    if annotated_fraction < LABEL_COVERAGE_THRESHOLD {
                        (None, coverage)
                    } else {
                        (Some(ALL_LABELS[best]), coverage)
                    }
                }
            }
        };
        windows.push(Window {
            participant_id: recording.participant_id.clone(),
            start_micros: recording.sample_time_micros(lo),
            duration_s,
            sample_rate_hz: recording.sample_rate_hz,
            samples: recording.samples[lo..hi].to_vec(),
            label,
            label_coverage,
        });
    }
    Ok(windows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const RATE: f64 = 100.0;

    fn recording(n: usize, labels: Option<Vec<Option<IntensityLabel>>>) -> Recording {
        Recording {
            participant_id: "p".into(),
            sample_rate_hz: RATE,
            t0_micros: 0,
            samples: vec![[0.0, 0.0, 1.0]; n],
            annotations: None,
            labels,
            excluded: None,
        }
    }

    fn label_run(spec: &[(IntensityLabel, usize)]) -> Vec<Option<IntensityLabel>> {
        let mut out = Vec::new();
        for &(l, n) in spec {
            out.extend(std::iter::repeat(Some(l)).take(n));
        }
        out
    }

    #[test]
    fn ninety_seconds_gives_three_sleep_windows() {
        let n = 9000;
        let rec = recording(n, Some(label_run(&[(IntensityLabel::Sleep, n)])));
        let windows = make_windows(&rec, 30.0).unwrap();
        assert_eq!(windows.len(), 3);
        for (i, w) in windows.iter().enumerate() {
            assert_eq!(w.samples.len(), 3000);
            assert_eq!(w.label, Some(IntensityLabel::Sleep));
            assert_eq!(w.start_micros, i as i64 * 30_000_000);
            assert!((w.label_coverage - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn majority_label_wins() {
        // 16 s sedentary + 14 s light in a 30 s window.
        let labels = label_run(&[(IntensityLabel::Sedentary, 1600), (IntensityLabel::Light, 1400)]);
        let rec = recording(3000, Some(labels));
        let windows = make_windows(&rec, 30.0).unwrap();
        assert_eq!(windows.len(), 1);
        assert_eq!(windows[0].label, Some(IntensityLabel::Sedentary));
        assert!((windows[0].label_coverage - 1600.0 / 3000.0).abs() < 1e-12);
    }

    #[test]
    fn sparse_annotation_leaves_window_unlabeled() {
        // 10 s annotated, 20 s missing: coverage 1/3 < 0.5.
        let mut labels = vec![Some(IntensityLabel::Sleep); 1000];
        labels.extend(std::iter::repeat(None).take(2000));
        let rec = recording(3000, Some(labels));
        let windows = make_windows(&rec, 30.0).unwrap();
        assert_eq!(windows.len(), 1);
        assert_eq!(windows[0].label, None);
    }

    #[test]
    fn ties_break_by_canonical_order() {
        let labels = label_run(&[(IntensityLabel::Light, 1500), (IntensityLabel::Sedentary, 1500)]);
        let rec = recording(3000, Some(labels));
        let windows = make_windows(&rec, 30.0).unwrap();
        assert_eq!(windows[0].label, Some(IntensityLabel::Sedentary));
    }

    #[test]
    fn trailing_partial_window_is_dropped() {
        let rec = recording(3000 + 1234, None);
        let windows = make_windows(&rec, 30.0).unwrap();
        assert_eq!(windows.len(), 1);
    }

    #[test]
    fn excluded_samples_drop_the_window() {
        let mut rec = recording(9000, Some(label_run(&[(IntensityLabel::Sleep, 9000)])));
        let mut mask = vec![false; 9000];
        mask[4000] = true; // inside the second window
        rec.excluded = Some(mask);
        let windows = make_windows(&rec, 30.0).unwrap();
        assert_eq!(windows.len(), 2);
        assert_eq!(windows[0].start_micros, 0);
        assert_eq!(windows[1].start_micros, 60_000_000);
    }

    #[test]
    fn full_span_exclusion_gives_zero_windows() {
        let mut rec = recording(9000, None);
        rec.excluded = Some(vec![true; 9000]);
        assert!(make_windows(&rec, 30.0).unwrap().is_empty());
    }

    #[test]
    fn window_count_is_floor_of_span_over_duration() {
        for n in [2999, 3000, 8999, 9000, 9001, 12345] {
            let rec = recording(n, None);
            let windows = make_windows(&rec, 30.0).unwrap();
            assert_eq!(windows.len(), n / 3000, "n={n}");
        }
    }

    #[test]
    fn non_multiple_duration_is_config_error() {
        let rec = recording(3000, None);
        // 0.7205 s at 100 Hz is 72.05 samples.
        assert!(matches!(
            make_windows(&rec, 0.7205),
            Err(Error::Config(_))
        ));
        assert!(matches!(make_windows(&rec, -3.0), Err(Error::Config(_))));
    }

    #[test]
    fn rerunning_gives_identical_labels() {
        let labels = label_run(&[
            (IntensityLabel::Sleep, 1500),
            (IntensityLabel::Mvpa, 1500),
            (IntensityLabel::Light, 3000),
        ]);
        let rec = recording(6000, Some(labels));
        let a = make_windows(&rec, 30.0).unwrap();
        let b = make_windows(&rec, 30.0).unwrap();
        let la: Vec<_> = a.iter().map(|w| w.label).collect();
        let lb: Vec<_> = b.iter().map(|w| w.label).collect();
        assert_eq!(la, lb);
        assert_eq!(la, vec![Some(IntensityLabel::Sleep), Some(IntensityLabel::Light)]);
    }
}
