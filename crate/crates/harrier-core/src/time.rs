//! Timestamp handling. Times are kept internally as microseconds since
//! the Unix epoch (i64), which keeps gap arithmetic exact for every
//! sample rate we care about.

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Microseconds per second.
pub const MICROS_PER_SEC: i64 = 1_000_000;

/// How timestamps are written in CSV files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeFormat {
    /// Decide per file from the first data row: integers are epoch
    /// milliseconds, anything else must parse as ISO-8601.
    #[default]
    Auto,
    /// Integer milliseconds since the Unix epoch.
    EpochMillis,
    /// ISO-8601 / RFC 3339, e.g. `2024-03-01T22:00:00.000000Z`.
    Iso8601,
}

pub fn parse_timestamp(s: &str, format: TimeFormat) -> Result<i64> {
    let s = s.trim();
    match format {
        TimeFormat::Auto => {
            if s.chars().all(|c| c.is_ascii_digit() || c == '-') && !s.is_empty() {
                parse_timestamp(s, TimeFormat::EpochMillis)
            } else {
                parse_timestamp(s, TimeFormat::Iso8601)
            }
        }
        TimeFormat::EpochMillis => {
            let ms: i64 = s
                .parse()
                .map_err(|_| Error::Parse(format!("bad epoch-millisecond timestamp {s:?}")))?;
            ms.checked_mul(1000)
                .ok_or_else(|| Error::Parse(format!("timestamp {s:?} out of range")))
        }
        TimeFormat::Iso8601 => {
            if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
                return Ok(dt.with_timezone(&Utc).timestamp_micros());
            }
            // Naive timestamps ("2024-03-01 22:00:00.5", T or space) are UTC.
            for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
                if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
                    return Ok(naive.and_utc().timestamp_micros());
                }
            }
            Err(Error::Parse(format!("unrecognized timestamp {s:?}")))
        }
    }
}

/// Formats a timestamp for CSV output. `EpochMillis` requires the value
/// to be millisecond-aligned; `Auto` behaves like `Iso8601`.
pub fn format_timestamp(micros: i64, format: TimeFormat) -> String {
    match format {
        TimeFormat::EpochMillis => {
            debug_assert!(micros % 1000 == 0, "sub-millisecond timestamp written as epoch ms");
            (micros.div_euclid(1000)).to_string()
        }
        TimeFormat::Iso8601 | TimeFormat::Auto => {
            let dt = Utc.timestamp_micros(micros).single().expect("timestamp in range");
            dt.format("%Y-%m-%dT%H:%M:%S%.6fZ").to_string()
        }
    }
}

pub fn micros_to_secs(micros: i64) -> f64 {
    micros as f64 / MICROS_PER_SEC as f64
}

pub fn secs_to_micros(secs: f64) -> i64 {
    (secs * MICROS_PER_SEC as f64).round() as i64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_millis_round_trip() {
        let t = parse_timestamp("1700000000123", TimeFormat::Auto).unwrap();
        assert_eq!(t, 1_700_000_000_123_000);
        assert_eq!(format_timestamp(t, TimeFormat::EpochMillis), "1700000000123");
    }

    #[test]
    fn iso_round_trip() {
        let t = parse_timestamp("2024-03-01T22:00:00.500Z", TimeFormat::Auto).unwrap();
        let s = format_timestamp(t, TimeFormat::Iso8601);
        assert_eq!(parse_timestamp(&s, TimeFormat::Iso8601).unwrap(), t);
    }

    #[test]
    fn iso_with_offset_and_naive() {
        let a = parse_timestamp("2024-03-01T23:00:00+01:00", TimeFormat::Iso8601).unwrap();
        let b = parse_timestamp("2024-03-01 22:00:00", TimeFormat::Iso8601).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_timestamp("not-a-time", TimeFormat::Auto).is_err());
        assert!(parse_timestamp("", TimeFormat::EpochMillis).is_err());
    }
}
