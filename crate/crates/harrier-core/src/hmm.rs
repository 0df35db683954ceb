//! Hidden Markov smoothing of window label sequences: prior,
//! transition, and emission estimation from training data, plus
//! Viterbi decoding with gap-aware segmentation.

use std::io::{BufRead, BufReader, Read};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{IntensityLabel, ALL_LABELS, N_CLASSES};
use crate::time::MICROS_PER_SEC;

/// Smoothing floor added to every trained matrix cell before row
/// normalization; keeps all Viterbi paths representable.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Tolerance when checking the expected inter-window gap, in seconds.
pub const DEFAULT_GAP_TOLERANCE_S: f64 = 0.5;

/// Prior vector, transition matrix `A[i][j] = P(state j | state i)`,
/// and emission matrix `E[i][j] = P(observed label j | true state i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmParams {
    pub prior: [f64; N_CLASSES],
    pub transition: [[f64; N_CLASSES]; N_CLASSES],
    pub emission: [[f64; N_CLASSES]; N_CLASSES],
}

fn check_stochastic(row: &[f64; N_CLASSES], what: &str) -> Result<()> {
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Input(format!("{what} sums to {sum}, expected 1")));
    }
    for &v in row {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Input(format!("{what} has non-positive entry {v}")));
        }
    }
    Ok(())
}

impl HmmParams {
    pub fn validate(&self) -> Result<()> {
        check_stochastic(&self.prior, "prior")?;
        for (i, row) in self.transition.iter().enumerate() {
            check_stochastic(row, &format!("transition row {i}"))?;
        }
        for (i, row) in self.emission.iter().enumerate() {
            check_stochastic(row, &format!("emission row {i}"))?;
        }
        Ok(())
    }
}

/// One participant's per-window label sequence with timestamps.
#[derive(Debug, Clone)]
pub struct LabeledSequence {
    pub participant_id: String,
    /// Window start times, strictly increasing, epoch microseconds.
    pub times_micros: Vec<i64>,
    pub true_labels: Option<Vec<Option<IntensityLabel>>>,
    pub pred_labels: Vec<IntensityLabel>,
    pub pred_probs: Option<Vec<[f64; N_CLASSES]>>,
}

impl LabeledSequence {
    pub fn len(&self) -> usize {
        self.times_micros.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_micros.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times_micros.len();
        if self.pred_labels.len() != n
            || self.true_labels.as_ref().is_some_and(|t| t.len() != n)
            || self.pred_probs.as_ref().is_some_and(|p| p.len() != n)
        {
            return Err(Error::Shape {
                expected: format!("{n} entries in every array"),
                got: "mismatched sequence arrays".into(),
            });
        }
        for (i, w) in self.times_micros.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(Error::Ordering { row: i + 1 });
            }
        }
        Ok(())
    }
}

/// Splits index range `0..times.len()` at every inter-window gap that
/// differs from the expected gap by more than the tolerance.
pub fn contiguous_segments(
    times: &[i64],
    expected_gap_s: f64,
    tolerance_s: f64,
) -> Vec<Range<usize>> {
    let expected = (expected_gap_s * MICROS_PER_SEC as f64).round() as i64;
    let tol = (tolerance_s * MICROS_PER_SEC as f64).round() as i64;
    let mut segments = Vec::new();
    let mut start = 0usize;
    for i in 1..times.len() {
        if (times[i] - times[i - 1] - expected).abs() > tol {
            segments.push(start..i);
            start = i;
        }
    }
    if start < times.len() {
        segments.push(start..times.len());
    }
    segments
}

fn floor_and_normalize(row: &mut [f64; N_CLASSES], epsilon: f64) {
    let sum: f64 = row.iter().sum();
    if sum > 0.0 {
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    for v in row.iter_mut() {
        *v += epsilon;
    }
    let total = 1.0 + N_CLASSES as f64 * epsilon;
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Prior = empirical distribution of the pooled true training labels,
/// floored and renormalized.
pub fn train_prior(labels: &[IntensityLabel], epsilon: f64) -> Result<[f64; N_CLASSES]> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("no labels for prior training".into()));
    }
    let mut row = [0.0f64; N_CLASSES];
    for l in labels {
        row[l.index()] += 1.0;
    }
    floor_and_normalize(&mut row, epsilon);
    Ok(row)
}

/// Counts label transitions whose inter-window gap matches the
/// expected spacing within tolerance, adds the two manual sleep and
/// sedentary pseudo-transitions per participant, and row-normalizes
/// with the smoothing floor. Rows of states never seen fall back to
/// uniform before flooring.
pub fn train_transition(
    sequences: &[LabeledSequence],
    expected_gap_s: f64,
    tolerance_s: f64,
    epsilon: f64,
) -> Result<[[f64; N_CLASSES]; N_CLASSES]> {
    let expected = (expected_gap_s * MICROS_PER_SEC as f64).round() as i64;
    let tol = (tolerance_s * MICROS_PER_SEC as f64).round() as i64;
    let mut counts = [[0.0f64; N_CLASSES]; N_CLASSES];
    let mut observed = 0usize;
    for seq in sequences {
        seq.validate()?;
        let truth = seq.true_labels.as_ref().ok_or_else(|| {
            Error::Input(format!(
                "sequence for {} has no true labels",
                seq.participant_id
            ))
        })?;
        for t in 0..seq.len().saturating_sub(1) {
            let gap_ok = (seq.times_micros[t + 1] - seq.times_micros[t] - expected).abs() <= tol;
            if !gap_ok {
                continue;
            }
            if let (Some(a), Some(b)) = (truth[t], truth[t + 1]) {
                counts[a.index()][b.index()] += 1.0;
                observed += 1;
            }
        }
        // Annotated sleep blocks sit apart from daytime labels in time,
        // so sleep boundary transitions are added manually.
        counts[IntensityLabel::Sleep.index()][IntensityLabel::Sedentary.index()] += 1.0;
        counts[IntensityLabel::Sedentary.index()][IntensityLabel::Sleep.index()] += 1.0;
    }
    if observed == 0 {
        return Err(Error::DegenerateTraining(
            "no gap-valid transitions in training sequences".into(),
        ));
    }
    let mut matrix = [[0.0f64; N_CLASSES]; N_CLASSES];
    for i in 0..N_CLASSES {
        let mut row = counts[i];
        if row.iter().sum::<f64>() == 0.0 {
            row = [1.0 / N_CLASSES as f64; N_CLASSES];
        }
        floor_and_normalize(&mut row, epsilon);
        matrix[i] = row;
    }
    Ok(matrix)
}

/// Emission row i = mean predicted probability vector over training
/// samples whose true label is i (the normalized cross-tabulation of
/// truth against classifier output). Rows with no samples fall back to
/// the identity row, then all rows are floored and renormalized.
pub fn train_emission(
    true_labels: &[IntensityLabel],
    pred_probs: &[[f64; N_CLASSES]],
    epsilon: f64,
) -> Result<[[f64; N_CLASSES]; N_CLASSES]> {
    if true_labels.len() != pred_probs.len() {
        return Err(Error::Shape {
            expected: format!("{} probability rows", true_labels.len()),
            got: format!("{}", pred_probs.len()),
        });
    }
    if true_labels.is_empty() {
        return Err(Error::DegenerateTraining(
            "no labeled samples for emission training".into(),
        ));
    }
    for (i, row) in pred_probs.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::Validation {
                row: i,
                message: format!("probability row sums to {sum}"),
            });
        }
    }
    let mut sums = [[0.0f64; N_CLASSES]; N_CLASSES];
    let mut counts = [0usize; N_CLASSES];
    for (l, p) in true_labels.iter().zip(pred_probs) {
        let i = l.index();
        counts[i] += 1;
        for j in 0..N_CLASSES {
            sums[i][j] += p[j];
        }
    }
    let mut matrix = [[0.0f64; N_CLASSES]; N_CLASSES];
    for i in 0..N_CLASSES {
        let mut row = if counts[i] > 0 {
            std::array::from_fn(|j| sums[i][j] / counts[i] as f64)
        } else {
            let mut identity = [0.0; N_CLASSES];
            identity[i] = 1.0;
            identity
        };
        floor_and_normalize(&mut row, epsilon);
        matrix[i] = row;
    }
    Ok(matrix)
}

/// Most likely hidden state sequence for the observed labels, in log
/// space; ties break toward the lower canonical state index.
pub fn viterbi(obs: &[IntensityLabel], params: &HmmParams) -> Result<Vec<IntensityLabel>> {
    params.validate()?;
    if obs.is_empty() {
        return Err(Error::EmptyInput("empty observation sequence".into()));
    }
    let n = obs.len();
    let ln = |v: f64| v.ln();
    let mut delta = [0.0f64; N_CLASSES];
    for s in 0..N_CLASSES {
        delta[s] = ln(params.prior[s]) + ln(params.emission[s][obs[0].index()]);
    }
    let mut back: Vec<[u8; N_CLASSES]> = Vec::with_capacity(n.saturating_sub(1));
    for t in 1..n {
        let mut next = [0.0f64; N_CLASSES];
        let mut ptr = [0u8; N_CLASSES];
        for s in 0..N_CLASSES {
            let mut best_prev = 0usize;
            let mut best = delta[0] + ln(params.transition[0][s]);
            for p in 1..N_CLASSES {
                let cand = delta[p] + ln(params.transition[p][s]);
                if cand > best {
                    best = cand;
                    best_prev = p;
                }
            }
            next[s] = best + ln(params.emission[s][obs[t].index()]);
            ptr[s] = best_prev as u8;
        }
        delta = next;
        back.push(ptr);
    }
    let mut last = 0usize;
    for s in 1..N_CLASSES {
        if delta[s] > delta[last] {
            last = s;
        }
    }
    let mut path = vec![0usize; n];
    path[n - 1] = last;
    for t in (0..n - 1).rev() {
        path[t] = back[t][path[t + 1]] as usize;
    }
    Ok(path.into_iter().map(|s| ALL_LABELS[s]).collect())
}

/// Splits the sequence at inter-window gaps that do not match the
/// expected spacing, Viterbi-decodes each contiguous segment
/// independently, and reassembles.
pub fn smooth_sequence(
    seq: &LabeledSequence,
    params: &HmmParams,
    expected_gap_s: f64,
    tolerance_s: f64,
) -> Result<LabeledSequence> {
    seq.validate()?;
    let mut smoothed = Vec::with_capacity(seq.len());
    for segment in contiguous_segments(&seq.times_micros, expected_gap_s, tolerance_s) {
        smoothed.extend(viterbi(&seq.pred_labels[segment], params)?);
    }
    Ok(LabeledSequence {
        participant_id: seq.participant_id.clone(),
        times_micros: seq.times_micros.clone(),
        true_labels: seq.true_labels.clone(),
        pred_labels: smoothed,
        pred_probs: seq.pred_probs.clone(),
    })
}

const PARAMS_MAGIC: &str = "harrier-hmm v1";

/// Writes params as a versioned plain-text matrix file (prior line,
/// four transition lines, four emission lines; 15 significant digits).
pub fn params_to_string(params: &HmmParams) -> String {
    let mut out = String::from(PARAMS_MAGIC);
    out.push('\n');
    let mut push_row = |row: &[f64; N_CLASSES]| {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&format!("{v:.15e}"));
        }
        out.push('\n');
    };
    push_row(&params.prior);
    for row in &params.transition {
        push_row(row);
    }
    for row in &params.emission {
        push_row(row);
    }
    out
}

/// Parses and validates a params file.
pub fn params_from_reader(reader: impl Read) -> Result<HmmParams> {
    let mut lines = BufReader::new(reader).lines();
    let magic = lines
        .next()
        .ok_or_else(|| Error::Parse("empty hmm params file".into()))?
        .map_err(|e| Error::Parse(e.to_string()))?;
    if magic.trim() != PARAMS_MAGIC {
        return Err(Error::Parse(format!("bad params header {magic:?}")));
    }
    let mut rows: Vec<[f64; N_CLASSES]> = Vec::with_capacity(9);
    for line in lines {
        let line = line.map_err(|e| Error::Parse(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split_ascii_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad number {tok:?} in params file")))
            })
            .collect::<Result<_>>()?;
        if values.len() != N_CLASSES {
            return Err(Error::Parse(format!(
                "expected {N_CLASSES} values per row, got {}",
                values.len()
            )));
        }
        if rows.len() == 9 {
            return Err(Error::Parse("too many rows in params file".into()));
        }
        rows.push([values[0], values[1], values[2], values[3]]);
    }
    if rows.len() != 9 {
        return Err(Error::Parse(format!("expected 9 rows, got {}", rows.len())));
    }
    let params = HmmParams {
        prior: rows[0],
        transition: [rows[1], rows[2], rows[3], rows[4]],
        emission: [rows[5], rows[6], rows[7], rows[8]],
    };
    params.validate()?;
    Ok(params)
}

pub fn save_params(params: &HmmParams, path: &Path) -> Result<()> {
    std::fs::write(path, params_to_string(params))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_params(path: &Path) -> Result<HmmParams> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    params_from_reader(file).map_err(|e| match e {
        Error::Parse(msg) => Error::format(path.display().to_string(), msg),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::IntensityLabel::{Light, Mvpa, Sedentary, Sleep};
    use crate::label::ALL_LABELS;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const EPS: f64 = DEFAULT_EPSILON;

    fn seq(
        pid: &str,
        gap_s: &[f64],
        truth: Vec<IntensityLabel>,
    ) -> LabeledSequence {
        let mut times = vec![0i64];
        for g in gap_s {
            times.push(times.last().unwrap() + (g * 1e6) as i64);
        }
        LabeledSequence {
            participant_id: pid.into(),
            times_micros: times,
            pred_labels: truth.clone(),
            true_labels: Some(truth.into_iter().map(Some).collect()),
            pred_probs: None,
        }
    }

    #[test]
    fn prior_counts_frequencies_with_floor() {
        let p = train_prior(&[Sleep, Sleep, Light, Light], EPS).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p[0] - 0.5).abs() < 1e-5);
        assert!((p[2] - 0.5).abs() < 1e-5);
        assert!(p[1] > 0.0 && p[1] < 1e-5);

        let p = train_prior(&[Sedentary; 10], EPS).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[1] > 1.0 - 1e-5);
        for c in [0, 2, 3] {
            assert!(p[c] > 0.0 && p[c] < 1e-5);
        }

        assert!(matches!(train_prior(&[], EPS), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn prior_matches_cohort_scale_distribution() {
        // 36/40/20/5% class mix (the spec tolerance is ±0.01 because
        // the rounded percentages sum to 101).
        let mut labels = Vec::new();
        labels.extend(std::iter::repeat(Sleep).take(36));
        labels.extend(std::iter::repeat(Sedentary).take(40));
        labels.extend(std::iter::repeat(Light).take(20));
        labels.extend(std::iter::repeat(Mvpa).take(5));
        let p = train_prior(&labels, EPS).unwrap();
        for (got, want) in p.iter().zip([0.36, 0.40, 0.20, 0.05]) {
            assert!((got - want).abs() <= 0.01, "{got} vs {want}");
        }
    }

    #[test]
    fn transition_counting_with_manual_additions() {
        // Single participant, 30 s spacing throughout.
        let s = seq("p1", &[30.0, 30.0], vec![Sleep, Sleep, Sedentary]);
        let m = train_transition(&[s], 30.0, 0.5, 0.0).unwrap();
        // Raw counts: sleep->sleep 1, sleep->sedentary 1 (+1 manual),
        // sedentary->sleep 0 (+1 manual). Sleep row = (1, 2, 0, 0)/3.
        assert!((m[0][0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((m[0][1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((m[1][0] - 1.0).abs() < 1e-12, "sedentary row is the manual count only");
    }

    #[test]
    fn gap_invalid_transition_is_dropped() {
        // 60 s gap between windows 1 and 2 drops sleep->sedentary; the
        // manual pseudo-counts remain.
        let s = seq("p1", &[30.0, 60.0], vec![Sleep, Sleep, Sedentary]);
        let m = train_transition(&[s], 30.0, 0.5, 0.0).unwrap();
        // Sleep row counts: observed sleep->sleep 1, manual sleep->sed 1.
        assert!((m[0][0] - 0.5).abs() < 1e-12);
        assert!((m[0][1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn manual_counts_are_per_participant() {
        let a = seq("p1", &[30.0], vec![Light, Light]);
        let b = seq("p2", &[30.0], vec![Light, Light]);
        let m = train_transition(&[a, b], 30.0, 0.5, 0.0).unwrap();
        // Each participant contributes one manual count in each sleep
        // and sedentary cell: rows are (0,2,0,0) and (2,0,0,0).
        assert!((m[0][1] - 1.0).abs() < 1e-12);
        assert!((m[1][0] - 1.0).abs() < 1e-12);
        // Light row: 2 observed light->light.
        assert!((m[2][2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_valid_transitions_is_degenerate() {
        let s = seq("p1", &[90.0], vec![Sleep, Sedentary]);
        assert!(matches!(
            train_transition(&[s], 30.0, 0.5, EPS),
            Err(Error::DegenerateTraining(_))
        ));
    }

    #[test]
    fn emission_identity_uniform_and_mean() {
        // Perfect classifier: one-hot rows at the truth.
        let truth = vec![Sleep, Sedentary, Light, Mvpa];
        let probs: Vec<[f64; 4]> = (0..4)
            .map(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 }))
            .collect();
        let e = train_emission(&truth, &probs, EPS).unwrap();
        for i in 0..4 {
            assert!(e[i][i] > 0.999);
        }

        // Uniform classifier.
        let probs = vec![[0.25; 4]; 4];
        let e = train_emission(&truth, &probs, EPS).unwrap();
        for row in &e {
            for v in row {
                assert!((v - 0.25).abs() < 1e-9);
            }
        }

        // Arithmetic mean: true [sleep, sleep], probs averaging (0.7, 0.3, 0, 0).
        let e = train_emission(
            &[Sleep, Sleep],
            &[[0.8, 0.2, 0.0, 0.0], [0.6, 0.4, 0.0, 0.0]],
            EPS,
        )
        .unwrap();
        assert!((e[0][0] - 0.6999982000072).abs() < 1e-12);
        assert!((e[0][1] - 0.2999998000008).abs() < 1e-12);
        assert!((e[0][2] - 9.99996000016e-7).abs() < 1e-15);
        assert!((e[0][3] - 9.99996000016e-7).abs() < 1e-15);
        // Unseen rows fall back to identity.
        assert!(e[3][3] > 0.999);
    }

    #[test]
    fn emission_one_hot_equals_confusion_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth: Vec<IntensityLabel> = (0..200)
            .map(|_| ALL_LABELS[rng.random_range(0..4)])
            .collect();
        let preds: Vec<IntensityLabel> = truth
            .iter()
            .map(|&t| {
                if rng.random_range(0.0..1.0) < 0.7 {
                    t
                } else {
                    ALL_LABELS[rng.random_range(0..4)]
                }
            })
            .collect();
        let one_hot: Vec<[f64; 4]> = preds
            .iter()
            .map(|p| std::array::from_fn(|j| if p.index() == j { 1.0 } else { 0.0 }))
            .collect();
        let e = train_emission(&truth, &one_hot, 0.0).unwrap();
        // Row-normalized confusion matrix of the hard predictions.
        let mut confusion = [[0.0f64; 4]; 4];
        for (t, p) in truth.iter().zip(&preds) {
            confusion[t.index()][p.index()] += 1.0;
        }
        for i in 0..4 {
            let total: f64 = confusion[i].iter().sum();
            if total == 0.0 {
                continue;
            }
            for j in 0..4 {
                assert!((e[i][j] - confusion[i][j] / total).abs() < 1e-12);
            }
        }
    }

    fn random_params(rng: &mut ChaCha8Rng) -> HmmParams {
        let mut row = || -> [f64; 4] {
            let mut arr: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
            floor_and_normalize(&mut arr, DEFAULT_EPSILON);
            arr
        };
        HmmParams {
            prior: row(),
            transition: [row(), row(), row(), row()],
            emission: [row(), row(), row(), row()],
        }
    }

    /// Exhaustive maximization over all state sequences; returns the
    /// best path (first in iteration order) and its log probability.
    fn brute_force(obs: &[IntensityLabel], params: &HmmParams) -> (Vec<usize>, f64) {
        let n = obs.len();
        let total = 4usize.pow(n as u32);
        let mut best_path = Vec::new();
        let mut best = f64::NEG_INFINITY;
        for code in 0..total {
            let mut states = Vec::with_capacity(n);
            let mut c = code;
            for _ in 0..n {
                states.push(c % 4);
                c /= 4;
            }
            let mut lp = params.prior[states[0]].ln()
                + params.emission[states[0]][obs[0].index()].ln();
            for t in 1..n {
                lp += params.transition[states[t - 1]][states[t]].ln()
                    + params.emission[states[t]][obs[t].index()].ln();
            }
            if lp > best {
                best = lp;
                best_path = states;
            }
        }
        (best_path, best)
    }

    fn path_log_prob(path: &[IntensityLabel], obs: &[IntensityLabel], params: &HmmParams) -> f64 {
        let mut lp = params.prior[path[0].index()].ln()
            + params.emission[path[0].index()][obs[0].index()].ln();
        for t in 1..obs.len() {
            lp += params.transition[path[t - 1].index()][path[t].index()].ln()
                + params.emission[path[t].index()][obs[t].index()].ln();
        }
        lp
    }

    #[test]
    fn identity_emission_returns_observations() {
        let near_identity: [[f64; 4]; 4] = std::array::from_fn(|i| {
            let mut row = [0.0; 4];
            row[i] = 1.0;
            floor_and_normalize(&mut row, EPS);
            row
        });
        let params = HmmParams {
            prior: [0.25; 4],
            transition: [[0.25; 4]; 4],
            emission: near_identity,
        };
        let obs = vec![Sleep, Light, Mvpa, Sedentary, Light, Sleep];
        assert_eq!(viterbi(&obs, &params).unwrap(), obs);
    }

    #[test]
    fn length_three_matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let params = random_params(&mut rng);
            let obs: Vec<IntensityLabel> =
                (0..3).map(|_| ALL_LABELS[rng.random_range(0..4)]).collect();
            let got = viterbi(&obs, &params).unwrap();
            let (want, want_lp) = brute_force(&obs, &params);
            let got_idx: Vec<usize> = got.iter().map(|l| l.index()).collect();
            assert_eq!(got_idx, want, "params {params:?} obs {obs:?}");
            assert!((path_log_prob(&got, &obs, &params) - want_lp).abs() < 1e-12);
        }
    }

    #[test]
    fn sticky_chain_smooths_single_flicker() {
        let sticky = |stay: f64| -> [[f64; 4]; 4] {
            std::array::from_fn(|i| {
                std::array::from_fn(|j| if i == j { stay } else { (1.0 - stay) / 3.0 })
            })
        };
        let params = HmmParams {
            prior: [0.25; 4],
            transition: sticky(0.99),
            emission: sticky(0.9),
        };
        let mut obs = vec![Sleep; 21];
        obs[10] = Light;
        let smoothed = viterbi(&obs, &params).unwrap();
        assert_eq!(smoothed, vec![Sleep; 21]);
    }

    #[test]
    fn viterbi_path_at_least_as_probable_as_raw_observations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let params = random_params(&mut rng);
            let obs: Vec<IntensityLabel> = (0..rng.random_range(1..12))
                .map(|_| ALL_LABELS[rng.random_range(0..4)])
                .collect();
            let path = viterbi(&obs, &params).unwrap();
            assert!(
                path_log_prob(&path, &obs, &params)
                    >= path_log_prob(&obs, &obs, &params) - 1e-12
            );
        }
    }

    #[test]
    fn permutation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let perm = [2usize, 0, 3, 1];
        for _ in 0..50 {
            let params = random_params(&mut rng);
            let mut permuted = params.clone();
            for i in 0..4 {
                permuted.prior[perm[i]] = params.prior[i];
                for j in 0..4 {
                    permuted.transition[perm[i]][perm[j]] = params.transition[i][j];
                    permuted.emission[perm[i]][perm[j]] = params.emission[i][j];
                }
            }
            let obs: Vec<IntensityLabel> =
                (0..8).map(|_| ALL_LABELS[rng.random_range(0..4)]).collect();
            let obs_perm: Vec<IntensityLabel> = obs
                .iter()
                .map(|l| ALL_LABELS[perm[l.index()]])
                .collect();
            let base = viterbi(&obs, &params).unwrap();
            let mapped: Vec<IntensityLabel> = base
                .iter()
                .map(|l| ALL_LABELS[perm[l.index()]])
                .collect();
            assert_eq!(viterbi(&obs_perm, &permuted).unwrap(), mapped);
        }
    }

    #[test]
    fn smoothing_splits_at_gaps() {
        let params = HmmParams {
            prior: [0.25; 4],
            transition: std::array::from_fn(|i| {
                std::array::from_fn(|j| if i == j { 0.97 } else { 0.01 })
            }),
            emission: std::array::from_fn(|i| {
                std::array::from_fn(|j| if i == j { 0.91 } else { 0.03 })
            }),
        };
        // Contiguous: same as one viterbi call.
        let mut s = seq("p", &[30.0; 9], vec![Sleep; 10]);
        s.pred_labels[4] = Mvpa;
        let smoothed = smooth_sequence(&s, &params, 30.0, 0.5).unwrap();
        assert_eq!(smoothed.pred_labels, viterbi(&s.pred_labels, &params).unwrap());

        // A 5-minute gap: two independent decodes.
        let gaps = [30.0, 30.0, 300.0, 30.0, 30.0];
        let mut s = seq("p", &gaps, vec![Light; 6]);
        s.pred_labels = vec![Light, Light, Mvpa, Sleep, Sleep, Sleep];
        let smoothed = smooth_sequence(&s, &params, 30.0, 0.5).unwrap();
        let left = viterbi(&s.pred_labels[..3], &params).unwrap();
        let right = viterbi(&s.pred_labels[3..], &params).unwrap();
        let manual: Vec<IntensityLabel> = left.into_iter().chain(right).collect();
        assert_eq!(smoothed.pred_labels, manual);
    }

    #[test]
    fn single_window_segment_is_prior_times_emission_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let params = random_params(&mut rng);
            let obs = [ALL_LABELS[rng.random_range(0..4)]];
            let got = viterbi(&obs, &params).unwrap();
            let mut best = 0;
            for s in 1..4 {
                let score = params.prior[s] * params.emission[s][obs[0].index()];
                if score > params.prior[best] * params.emission[best][obs[0].index()] {
                    best = s;
                }
            }
            assert_eq!(got[0].index(), best);
        }
    }

    #[test]
    fn params_round_trip_and_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let params = random_params(&mut rng);
        let text = params_to_string(&params);
        let back = params_from_reader(text.as_bytes()).unwrap();
        for i in 0..4 {
            assert!((params.prior[i] - back.prior[i]).abs() < 1e-14);
            for j in 0..4 {
                assert!((params.transition[i][j] - back.transition[i][j]).abs() < 1e-14);
                assert!((params.emission[i][j] - back.emission[i][j]).abs() < 1e-14);
            }
        }
        assert!(params_from_reader("junk".as_bytes()).is_err());
        let bad = text.replace(PARAMS_MAGIC, "harrier-hmm v9");
        assert!(params_from_reader(bad.as_bytes()).is_err());
        // A params file with a non-stochastic row fails validation.
        let mut broken = params.clone();
        broken.prior[0] += 0.5;
        assert!(params_from_reader(params_to_string(&broken).as_bytes()).is_err());
    }
}
