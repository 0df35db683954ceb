//! Post-hoc sleep-block correction: classified sleep must come in
//! blocks of at least one hour; shorter runs become sedentary.

use crate::error::Result;
use crate::hmm::{contiguous_segments, LabeledSequence};
use crate::label::IntensityLabel;

/// Rewrites maximal runs of consecutive sleep labels shorter than
/// `min_block_s` to sedentary. Runs are evaluated within one contiguous
/// segment; use [`sleep_block_correction_sequence`] for gap-aware
/// handling. A run of exactly `min_block_s` is kept ("at least").
pub fn sleep_block_correction(
    labels: &[IntensityLabel],
    window_duration_s: f64,
    min_block_s: f64,
) -> Vec<IntensityLabel> {
    let mut out = labels.to_vec();
    let mut i = 0;
    while i < out.len() {
        if out[i] != IntensityLabel::Sleep {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < out.len() && out[j] == IntensityLabel::Sleep {
            j += 1;
        }
        let run_s = (j - i) as f64 * window_duration_s;
        if run_s < min_block_s {
            for l in &mut out[i..j] {
                *l = IntensityLabel::Sedentary;
            }
        }
        i = j;
    }
    out
}

/// Gap-aware variant: time gaps break runs, so sleep on either side of
/// a recording gap is judged per segment.
pub fn sleep_block_correction_sequence(
    seq: &LabeledSequence,
    window_duration_s: f64,
    min_block_s: f64,
    expected_gap_s: f64,
    tolerance_s: f64,
) -> Result<LabeledSequence> {
    seq.validate()?;
    let mut out = seq.clone();
    for segment in contiguous_segments(&seq.times_micros, expected_gap_s, tolerance_s) {
        let corrected =
            sleep_block_correction(&seq.pred_labels[segment.clone()], window_duration_s, min_block_s);
        out.pred_labels[segment].copy_from_slice(&corrected);
    }
    Ok(out)
}
