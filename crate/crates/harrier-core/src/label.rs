//! The four activity-intensity classes and their canonical ordering.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Number of intensity classes.
pub const N_CLASSES: usize = 4;

/// Coarse activity-intensity class. The canonical index order
/// (sleep=0, sedentary=1, light=2, mvpa=3) is a stable contract used
/// everywhere: matrix layouts, tie-breaking, file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntensityLabel {
    Sleep,
    Sedentary,
    Light,
    Mvpa,
}

pub const ALL_LABELS: [IntensityLabel; N_CLASSES] = [
    IntensityLabel::Sleep,
    IntensityLabel::Sedentary,
    IntensityLabel::Light,
    IntensityLabel::Mvpa,
];

impl IntensityLabel {
    /// Canonical index: sleep=0, sedentary=1, light=2, mvpa=3.
    pub fn index(self) -> usize {
        match self {
            IntensityLabel::Sleep => 0,
            IntensityLabel::Sedentary => 1,
            IntensityLabel::Light => 2,
            IntensityLabel::Mvpa => 3,
        }
    }

    pub fn from_index(index: usize) -> Option<IntensityLabel> {
        ALL_LABELS.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            IntensityLabel::Sleep => "sleep",
            IntensityLabel::Sedentary => "sedentary",
            IntensityLabel::Light => "light",
            IntensityLabel::Mvpa => "mvpa",
        }
    }
}

impl fmt::Display for IntensityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IntensityLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_lowercase().as_str() {
            "sleep" => Ok(IntensityLabel::Sleep),
            "sedentary" => Ok(IntensityLabel::Sedentary),
            "light" => Ok(IntensityLabel::Light),
            "mvpa" => Ok(IntensityLabel::Mvpa),
            other => Err(Error::Parse(format!("unknown intensity label {other:?}"))),
        }
    }
}

/// Argmax over a 4-vector of class scores with ties broken toward the
/// lower canonical index.
pub fn argmax_label(scores: &[f64; N_CLASSES]) -> IntensityLabel {
    let mut best = 0;
    for i in 1..N_CLASSES {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    ALL_LABELS[best]
}
