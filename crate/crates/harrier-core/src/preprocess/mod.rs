//! Signal conditioning: low-pass filtering, non-wear removal,
//! auto-calibration, and windowing.

mod calibrate;
mod filter;
mod nonwear;
mod persist;
mod window;

pub use calibrate::{autocalibrate, CalibrationReport};
pub use filter::{lowpass, ButterworthLowpass, FilterSpec};
pub use nonwear::{detect_nonwear, remove_nonwear, NonwearRule, TimeInterval};
pub use persist::{
    parse_windows_index, read_windows_files, read_windows_from, sanitize_pid, write_windows_files,
};
pub use window::{make_windows, Window, LABEL_COVERAGE_THRESHOLD};
