//! Classification of wrist-worn accelerometer data into four
//! activity-intensity classes (sleep, sedentary, light,
//! moderate-vigorous), via a preprocessing chain, handcrafted window
//! features, a random forest, hidden-Markov smoothing, and sleep-block
//! correction — plus the cross-validation and agreement-statistics
//! harness around it. Externally produced per-window probabilities can
//! be substituted for the in-process classifier.

pub mod error;
pub mod external;
pub mod features;
pub mod forest;
pub mod hmm;
pub mod ingest;
pub mod label;
pub mod postprocess;
pub mod preprocess;
pub mod time;

pub use error::{Error, Result};
pub use label::{IntensityLabel, ALL_LABELS, N_CLASSES};
