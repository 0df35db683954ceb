//! Reading recordings, annotation mapping, subject metadata, and
//! resampling onto uniform grids.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::IntensityLabel;
use crate::time::{parse_timestamp, TimeFormat, MICROS_PER_SEC};

/// Column layout of a recording CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub time_column: String,
    pub x_column: String,
    pub y_column: String,
    pub z_column: String,
    pub annotation_column: String,
    pub time_format: TimeFormat,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            time_column: "time".into(),
            x_column: "x".into(),
            y_column: "y".into(),
            z_column: "z".into(),
            annotation_column: "annotation".into(),
            time_format: TimeFormat::Auto,
        }
    }
}

/// One participant's tri-axial series on a uniform grid, in units of g.
/// Immutable once constructed; all transforms return a new `Recording`.
#[derive(Debug, Clone)]
pub struct Recording {
    pub participant_id: String,
    pub sample_rate_hz: f64,
    /// Time of the first sample, microseconds since the Unix epoch.
    pub t0_micros: i64,
    pub samples: Vec<[f64; 3]>,
    /// Raw annotation strings as read from file, `None` entries missing.
    pub annotations: Option<Vec<Option<String>>>,
    /// Mapped intensity labels (set by [`map_annotations`]).
    pub labels: Option<Vec<Option<IntensityLabel>>>,
    /// Per-sample exclusion mask (set by non-wear removal).
    pub excluded: Option<Vec<bool>>,
}

impl Recording {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Timestamp of sample `i` in epoch microseconds.
    pub fn sample_time_micros(&self, i: usize) -> i64 {
        self.t0_micros + (i as f64 * MICROS_PER_SEC as f64 / self.sample_rate_hz).round() as i64
    }

    /// Total covered span in seconds (first to one-past-last sample).
    pub fn span_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn is_excluded(&self, i: usize) -> bool {
        self.excluded.as_ref().is_some_and(|m| m[i])
    }
}

/// Timestamped series as read from file, before any regularity check.
#[derive(Debug, Clone)]
pub struct RawSeries {
    pub participant_id: String,
    pub times_micros: Vec<i64>,
    pub samples: Vec<[f64; 3]>,
    pub annotations: Option<Vec<Option<String>>>,
}

fn median_i64(values: &mut [i64]) -> f64 {
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] as f64 + values[n / 2] as f64) / 2.0
    }
}

impl RawSeries {
    /// Converts to a uniform recording, inferring the sample rate as the
    /// reciprocal of the median inter-sample gap. Any gap deviating from
    /// the median by more than 1% is an irregular-sampling error.
    pub fn into_recording(self) -> Result<Recording> {
        if self.samples.is_empty() {
            return Err(Error::EmptyInput(format!(
                "recording {} has no samples",
                self.participant_id
            )));
        }
        if self.samples.len() < 2 {
            return Err(Error::InsufficientData(
                "need at least 2 samples to infer a sample rate".into(),
            ));
        }
        let mut gaps: Vec<i64> = self.times_micros.windows(2).map(|w| w[1] - w[0]).collect();
        let median = median_i64(&mut gaps);
        for (i, w) in self.times_micros.windows(2).enumerate() {
            let gap = (w[1] - w[0]) as f64;
            if (gap - median).abs() > 0.01 * median {
                return Err(Error::IrregularSampling(format!(
                    "gap of {:.3} ms at row {} deviates more than 1% from the median {:.3} ms; \
                     resample to recover a uniform grid",
                    gap / 1e3,
                    i + 1,
                    median / 1e3
                )));
            }
        }
        Ok(Recording {
            participant_id: self.participant_id,
            sample_rate_hz: MICROS_PER_SEC as f64 / median,
            t0_micros: self.times_micros[0],
            samples: self.samples,
            annotations: self.annotations,
            labels: None,
            excluded: None,
        })
    }

    /// Linear interpolation of each axis onto a uniform grid at
    /// `target_hz` spanning the raw time range. Annotations are carried
    /// by nearest neighbor in time.
    pub fn resampled(&self, target_hz: f64) -> Result<Recording> {
        if !(target_hz > 0.0) || !target_hz.is_finite() {
            return Err(Error::Input(format!("target rate {target_hz} must be positive")));
        }
        if self.samples.len() < 2 {
            return Err(Error::InsufficientData(
                "need at least 2 samples to resample".into(),
            ));
        }
        let t0 = self.times_micros[0];
        let t_last = *self.times_micros.last().unwrap();
        let step = MICROS_PER_SEC as f64 / target_hz;
        let n_out = ((t_last - t0) as f64 / step + 1e-9).floor() as usize + 1;

        let mut samples = Vec::with_capacity(n_out);
        let mut annotations = self
            .annotations
            .as_ref()
            .map(|_| Vec::with_capacity(n_out));
        let mut src = 0usize; // invariant: times[src] <= t < times[src+1]
        for k in 0..n_out {
            let t = t0 + (k as f64 * step).round() as i64;
            while src + 2 < self.times_micros.len() && self.times_micros[src + 1] <= t {
                src += 1;
            }
            let (tl, tr) = (self.times_micros[src], self.times_micros[src + 1]);
            let value = if t == tl {
                self.samples[src]
            } else if t >= tr {
                self.samples[src + 1]
            } else {
                let w = (t - tl) as f64 / (tr - tl) as f64;
                let (a, b) = (self.samples[src], self.samples[src + 1]);
                [
                    a[0] + w * (b[0] - a[0]),
                    a[1] + w * (b[1] - a[1]),
                    a[2] + w * (b[2] - a[2]),
                ]
            };
            samples.push(value);
            if let (Some(out), Some(raw)) = (annotations.as_mut(), self.annotations.as_ref()) {
                let nearest = if t - tl <= tr - t { src } else { src + 1 };
                out.push(raw[nearest].clone());
            }
        }
        Ok(Recording {
            participant_id: self.participant_id.clone(),
            sample_rate_hz: target_hz,
            t0_micros: t0,
            samples,
            annotations,
            labels: None,
            excluded: None,
        })
    }
}

fn participant_id_from_path(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string_lossy().into_owned())
}

/// Reads a timestamped recording CSV without enforcing grid regularity.
/// The participant id is the file stem.
pub fn read_recording_raw(path: &Path, schema: &CsvSchema) -> Result<RawSeries> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::format(&display, e.to_string()))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::format(&display, e.to_string()))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name:?} in {display}")))
    };
    let time_idx = col(&schema.time_column)?;
    let x_idx = col(&schema.x_column)?;
    let y_idx = col(&schema.y_column)?;
    let z_idx = col(&schema.z_column)?;
    let ann_idx = headers
        .iter()
        .position(|h| h.trim() == schema.annotation_column);

    let mut times = Vec::new();
    let mut samples = Vec::new();
    let mut annotations: Option<Vec<Option<String>>> = ann_idx.map(|_| Vec::new());
    let mut resolved_format = schema.time_format;

    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let field = |idx: usize| -> Result<&str> {
            record
                .get(idx)
                .ok_or_else(|| Error::Validation {
                    row: row + 1,
                    message: format!("row has only {} fields", record.len()),
                })
        };
        if resolved_format == TimeFormat::Auto && row == 0 {
            let first = field(time_idx)?.trim();
            resolved_format = if !first.is_empty()
                && first.chars().all(|c| c.is_ascii_digit() || c == '-')
            {
                TimeFormat::EpochMillis
            } else {
                TimeFormat::Iso8601
            };
        }
        let t = parse_timestamp(field(time_idx)?, resolved_format)?;
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(Error::Ordering { row: row + 1 });
            }
        }
        let axis = |idx: usize, name: &str| -> Result<f64> {
            let raw = field(idx)?;
            let v: f64 = raw.trim().parse().map_err(|_| Error::Validation {
                row: row + 1,
                message: format!("bad {name} value {raw:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Validation {
                    row: row + 1,
                    message: format!("non-finite {name} value"),
                });
            }
            Ok(v)
        };
        times.push(t);
        samples.push([
            axis(x_idx, "x")?,
            axis(y_idx, "y")?,
            axis(z_idx, "z")?,
        ]);
        if let (Some(out), Some(idx)) = (annotations.as_mut(), ann_idx) {
            let raw = field(idx)?.trim();
            out.push(if raw.is_empty() { None } else { Some(raw.to_string()) });
        }
    }
    if times.is_empty() {
        return Err(Error::EmptyInput(format!("{display} has no data rows")));
    }
    Ok(RawSeries {
        participant_id: participant_id_from_path(path),
        times_micros: times,
        samples,
        annotations,
    })
}

/// Reads a recording CSV and enforces a uniform grid (1% gap rule).
pub fn read_recording_csv(path: &Path, schema: &CsvSchema) -> Result<Recording> {
    read_recording_raw(path, schema)?.into_recording()
}

/// Table from normalized raw annotation string to intensity label.
/// Lookup is exact match on the trimmed, case-folded string.
#[derive(Debug, Clone, Default)]
pub struct LabelMapping {
    map: BTreeMap<String, IntensityLabel>,
}

fn normalize_annotation(s: &str) -> String {
    s.trim().to_lowercase()
}

impl LabelMapping {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, raw: &str, label: IntensityLabel) -> Result<()> {
        let key = normalize_annotation(raw);
        if let Some(&existing) = self.map.get(&key) {
            if existing != label {
                return Err(Error::MappingConflict {
                    annotation: raw.to_string(),
                    first: existing.to_string(),
                    second: label.to_string(),
                });
            }
            return Ok(());
        }
        self.map.insert(key, label);
        Ok(())
    }

    pub fn lookup(&self, raw: &str) -> Option<IntensityLabel> {
        self.map.get(&normalize_annotation(raw)).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Loads a label-mapping CSV with header `annotation,label`.
pub fn load_label_mapping(path: &Path) -> Result<LabelMapping> {
    let display = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(&display, e.to_string()))?;
    let headers = reader.headers()?.clone();
    let ann_idx = headers
        .iter()
        .position(|h| h.trim() == "annotation")
        .ok_or_else(|| Error::Schema(format!("missing column \"annotation\" in {display}")))?;
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == "label")
        .ok_or_else(|| Error::Schema(format!("missing column \"label\" in {display}")))?;

    let mut mapping = LabelMapping::new();
    for record in reader.records() {
        let record = record?;
        let raw = record.get(ann_idx).unwrap_or("");
        let label = IntensityLabel::from_str(record.get(label_idx).unwrap_or(""))?;
        mapping.insert(raw, label)?;
    }
    Ok(mapping)
}

/// Age bands used for subgroup reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeBand {
    #[serde(rename = "18-29")]
    From18To29,
    #[serde(rename = "30-37")]
    From30To37,
    #[serde(rename = "37-52")]
    From37To52,
    #[serde(rename = "53+")]
    From53,
}

pub const ALL_AGE_BANDS: [AgeBand; 4] = [
    AgeBand::From18To29,
    AgeBand::From30To37,
    AgeBand::From37To52,
    AgeBand::From53,
];

impl AgeBand {
    pub fn name(self) -> &'static str {
        match self {
            AgeBand::From18To29 => "18-29",
            AgeBand::From30To37 => "30-37",
            AgeBand::From37To52 => "37-52",
            AgeBand::From53 => "53+",
        }
    }
}

impl fmt::Display for AgeBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgeBand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "18-29" => Ok(AgeBand::From18To29),
            "30-37" => Ok(AgeBand::From30To37),
            "37-52" => Ok(AgeBand::From37To52),
            "53+" => Ok(AgeBand::From53),
            other => Err(Error::Parse(format!("unknown age band {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
}

impl Sex {
    pub fn name(self) -> &'static str {
        match self {
            Sex::Female => "female",
            Sex::Male => "male",
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Sex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "female" | "f" => Ok(Sex::Female),
            "male" | "m" => Ok(Sex::Male),
            other => Err(Error::Parse(format!("unknown sex {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectMeta {
    pub participant_id: String,
    pub age_band: AgeBand,
    pub sex: Sex,
}

/// Loads subject metadata with header `pid,age_band,sex`.
pub fn load_subject_meta(path: &Path) -> Result<Vec<SubjectMeta>> {
    let display = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(&display, e.to_string()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name:?} in {display}")))
    };
    let pid_idx = col("pid")?;
    let age_idx = col("age_band")?;
    let sex_idx = col("sex")?;

    let mut out: Vec<SubjectMeta> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let meta = SubjectMeta {
            participant_id: record.get(pid_idx).unwrap_or("").trim().to_string(),
            age_band: record.get(age_idx).unwrap_or("").parse()?,
            sex: record.get(sex_idx).unwrap_or("").parse()?,
        };
        if let Some(prev) = out.iter().find(|m| m.participant_id == meta.participant_id) {
            if *prev != meta {
                return Err(Error::Input(format!(
                    "conflicting metadata rows for participant {:?}",
                    meta.participant_id
                )));
            }
            continue;
        }
        out.push(meta);
    }
    Ok(out)
}

/// Replaces raw annotations with mapped intensity labels. Missing
/// markers pass through; an unmapped string is an error naming it.
/// Sample values, counts, and timestamps are never touched.
pub fn map_annotations(mut recording: Recording, mapping: &LabelMapping) -> Result<Recording> {
    let annotations = recording
        .annotations
        .take()
        .ok_or_else(|| Error::Input("recording has no annotations to map".into()))?;
    let mut labels = Vec::with_capacity(annotations.len());
    for raw in &annotations {
        labels.push(match raw {
            None => None,
            Some(s) => Some(
                mapping
                    .lookup(s)
                    .ok_or_else(|| Error::UnmappedAnnotation(s.clone()))?,
            ),
        });
    }
    recording.labels = Some(labels);
    Ok(recording)
}

/// Resamples a uniform recording onto a new uniform grid via linear
/// interpolation; labels, raw annotations, and the exclusion mask are
/// carried by nearest neighbor. Idempotent on an already-matching grid.
pub fn resample(recording: &Recording, target_hz: f64) -> Result<Recording> {
    if !(target_hz > 0.0) || !target_hz.is_finite() {
        return Err(Error::Input(format!("target rate {target_hz} must be positive")));
    }
    if recording.len() < 2 {
        return Err(Error::InsufficientData(
            "need at least 2 samples to resample".into(),
        ));
    }
    let times: Vec<i64> = (0..recording.len())
        .map(|i| recording.sample_time_micros(i))
        .collect();
    let raw = RawSeries {
        participant_id: recording.participant_id.clone(),
        times_micros: times.clone(),
        samples: recording.samples.clone(),
        annotations: recording.annotations.clone(),
    };
    let mut out = raw.resampled(target_hz)?;

    // Nearest-neighbor carry of labels and exclusion mask.
    if recording.labels.is_some() || recording.excluded.is_some() {
        let mut labels = recording.labels.as_ref().map(|_| Vec::with_capacity(out.len()));
        let mut excluded = recording.excluded.as_ref().map(|_| Vec::with_capacity(out.len()));
        let mut src = 0usize;
        for k in 0..out.len() {
            let t = out.sample_time_micros(k);
            while src + 2 < times.len() && times[src + 1] <= t {
                src += 1;
            }
            let nearest = if t - times[src] <= times[src + 1] - t { src } else { src + 1 };
            if let (Some(v), Some(l)) = (labels.as_mut(), recording.labels.as_ref()) {
                v.push(l[nearest]);
            }
            if let (Some(v), Some(m)) = (excluded.as_mut(), recording.excluded.as_ref()) {
                v.push(m[nearest]);
            }
        }
        out.labels = labels;
        out.excluded = excluded;
    }
    Ok(out)
}
