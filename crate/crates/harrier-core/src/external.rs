//! Externally produced per-window class probabilities (e.g. from a
//! deep model), so smoothing, sleep correction, and evaluation can run
//! on any upstream classifier.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hmm::LabeledSequence;
use crate::label::{argmax_label, N_CLASSES};
use crate::preprocess::Window;
use crate::time::{parse_timestamp, TimeFormat};

/// Row-sum tolerance: rows within it are renormalized, beyond it the
/// file is rejected.
const ROW_SUM_TOLERANCE: f64 = 1e-2;

#[derive(Debug, Clone)]
pub struct ExternalPredictions {
    pub participant_id: String,
    pub times_micros: Vec<i64>,
    pub probs: Vec<[f64; N_CLASSES]>,
    pub source_tag: String,
}

pub const PREDICTION_COLUMNS: [&str; 6] = ["pid", "time", "p_sleep", "p_sedentary", "p_light", "p_mvpa"];

/// Parses an external-predictions CSV (`pid,time,p_sleep,p_sedentary,
/// p_light,p_mvpa`) from any reader. All rows must belong to one
/// participant; rows whose probabilities sum outside [0.99, 1.01] or
/// contain negatives are rejected with the row number.
pub fn parse_external_predictions(
    reader: impl Read,
    source_tag: &str,
) -> Result<ExternalPredictions> {
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv.headers()?.clone();
    let mut idx = [0usize; 6];
    for (k, name) in PREDICTION_COLUMNS.iter().enumerate() {
        idx[k] = headers
            .iter()
            .position(|h| h.trim() == *name)
            .ok_or_else(|| Error::Schema(format!("missing column {name:?} in predictions file")))?;
    }

    let mut pid: Option<String> = None;
    let mut times = Vec::new();
    let mut probs = Vec::new();
    let mut time_format = TimeFormat::Auto;
    for (row, record) in csv.records().enumerate() {
        let record = record?;
        let get = |i: usize| record.get(idx[i]).unwrap_or("").trim();
        let row_pid = get(0).to_string();
        match &pid {
            None => pid = Some(row_pid),
            Some(existing) if *existing != row_pid => {
                return Err(Error::Validation {
                    row: row + 1,
                    message: format!(
                        "mixed participants in one predictions file: {existing:?} vs {row_pid:?}"
                    ),
                });
            }
            _ => {}
        }
        if row == 0 {
            let first = get(1);
            time_format = if !first.is_empty()
                && first.chars().all(|c| c.is_ascii_digit() || c == '-')
            {
                TimeFormat::EpochMillis
            } else {
                TimeFormat::Iso8601
            };
        }
        let t = parse_timestamp(get(1), time_format)?;
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(Error::Ordering { row: row + 1 });
            }
        }
        let mut p = [0.0f64; N_CLASSES];
        for c in 0..N_CLASSES {
            let raw = get(2 + c);
            p[c] = raw.parse().map_err(|_| Error::Validation {
                row: row + 1,
                message: format!("bad probability {raw:?}"),
            })?;
            if !p[c].is_finite() || p[c] < 0.0 {
                return Err(Error::Validation {
                    row: row + 1,
                    message: format!("negative or non-finite probability {}", p[c]),
                });
            }
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::Validation {
                row: row + 1,
                message: format!("probability row sums to {sum}, outside [0.99, 1.01]"),
            });
        }
        for v in &mut p {
            *v /= sum;
        }
        times.push(t);
        probs.push(p);
    }
    if times.is_empty() {
        return Err(Error::EmptyInput("predictions file has no rows".into()));
    }
    Ok(ExternalPredictions {
        participant_id: pid.unwrap_or_default(),
        times_micros: times,
        probs,
        source_tag: source_tag.to_string(),
    })
}

pub fn load_external_predictions(path: &Path) -> Result<ExternalPredictions> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(display.clone(), e))?;
    parse_external_predictions(file, &display)
}

/// Joins predictions onto windows by (participant, start time) with a
/// ±0.5 s tolerance. Windows without a matching prediction are left
/// out of the resulting sequence (they cannot be smoothed); zero
/// matches is an error.
pub fn align_predictions(
    preds: &ExternalPredictions,
    windows: &[Window],
) -> Result<LabeledSequence> {
    const TOL_MICROS: i64 = 500_000;
    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.sort_by_key(|&i| windows[i].start_micros);

    let mut times = Vec::new();
    let mut true_labels = Vec::new();
    let mut pred_labels = Vec::new();
    let mut probs = Vec::new();
    for &w in &order {
        let window = &windows[w];
        if window.participant_id != preds.participant_id {
            continue;
        }
        // Predictions are sorted by time; binary search the window start.
        let pos = preds.times_micros.partition_point(|&t| t < window.start_micros);
        let mut best: Option<usize> = None;
        for cand in [pos.wrapping_sub(1), pos] {
            if let Some(&t) = preds.times_micros.get(cand) {
                if (t - window.start_micros).abs() <= TOL_MICROS
                    && best.is_none_or(|b| {
                        (t - window.start_micros).abs()
                            < (preds.times_micros[b] - window.start_micros).abs()
                    })
                {
                    best = Some(cand);
                }
            }
        }
        let Some(hit) = best else { continue };
        times.push(window.start_micros);
        true_labels.push(window.label);
        pred_labels.push(argmax_label(&preds.probs[hit]));
        probs.push(preds.probs[hit]);
    }
    if times.is_empty() {
        return Err(Error::Alignment(format!(
            "no prediction rows matched windows of participant {:?}",
            preds.participant_id
        )));
    }
    let seq = LabeledSequence {
        participant_id: preds.participant_id.clone(),
        times_micros: times,
        true_labels: Some(true_labels),
        pred_labels,
        pred_probs: Some(probs),
    };
    seq.validate()?;
    Ok(seq)
}
