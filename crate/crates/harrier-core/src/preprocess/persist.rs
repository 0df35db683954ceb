//! Windows interchange files: a per-participant index CSV plus a plain
//! text sidecar holding the raw sample blocks. Values round-trip in g
//! at better than 9 significant digits.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::label::IntensityLabel;
use crate::preprocess::window::Window;

const SIDECAR_MAGIC: &str = "harrier-windows v1";

/// Makes a participant id safe to embed in a file name.
pub fn sanitize_pid(pid: &str) -> String {
    pid.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes one participant's windows as `<csv_path>` (index) and
/// `<sidecar_path>` (sample blocks). All windows must share the same
/// participant, duration, and rate.
pub fn write_windows_files(windows: &[Window], csv_path: &Path, sidecar_path: &Path) -> Result<()> {
    if windows.is_empty() {
        return Err(Error::EmptyInput("no windows to write".into()));
    }
    let pid = &windows[0].participant_id;
    let rate = windows[0].sample_rate_hz;
    let duration = windows[0].duration_s;
    let per_window = windows[0].samples.len();
    for w in windows {
        if w.participant_id != *pid
            || w.sample_rate_hz != rate
            || w.duration_s != duration
            || w.samples.len() != per_window
        {
            return Err(Error::Input(
                "windows files hold one participant at one rate and duration".into(),
            ));
        }
    }

    let mut index = csv::Writer::from_path(csv_path)?;
    index.write_record(["pid", "start_us", "label", "coverage"])?;
    for w in windows {
        index.write_record([
            pid.as_str(),
            &w.start_micros.to_string(),
            w.label.map(|l| l.name()).unwrap_or(""),
            &format!("{:.6}", w.label_coverage),
        ])?;
    }
    index.flush().map_err(|e| Error::io(csv_path.display().to_string(), e))?;

    let file = std::fs::File::create(sidecar_path)
        .map_err(|e| Error::io(sidecar_path.display().to_string(), e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<std::fs::File>, s: &str| -> Result<()> {
        out.write_all(s.as_bytes())
            .map_err(|e| Error::io(sidecar_path.display().to_string(), e))
    };
    write(
        &mut out,
        &format!(
            "{SIDECAR_MAGIC} pid={} rate_hz={:.6} duration_s={:.3} n_windows={} samples_per_window={}\n",
            sanitize_pid(pid),
            rate,
            duration,
            windows.len(),
            per_window
        ),
    )?;
    let mut line = String::with_capacity(per_window * 3 * 18);
    for w in windows {
        line.clear();
        for (i, s) in w.samples.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&format!("{:.9e} {:.9e} {:.9e}", s[0], s[1], s[2]));
        }
        line.push('\n');
        write(&mut out, &line)?;
    }
    out.flush()
        .map_err(|e| Error::io(sidecar_path.display().to_string(), e))
}

/// Parses the index CSV from any reader. Returns rows of
/// (pid, start_us, label, coverage).
pub fn parse_windows_index(
    reader: impl Read,
) -> Result<Vec<(String, i64, Option<IntensityLabel>, f64)>> {
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name:?} in windows index")))
    };
    let pid_idx = col("pid")?;
    let start_idx = col("start_us")?;
    let label_idx = col("label")?;
    let cov_idx = col("coverage")?;
    let mut rows = Vec::new();
    for (row, record) in csv.records().enumerate() {
        let record = record?;
        let get = |i: usize| record.get(i).unwrap_or("").trim();
        let start: i64 = get(start_idx).parse().map_err(|_| Error::Validation {
            row: row + 1,
            message: format!("bad start_us {:?}", get(start_idx)),
        })?;
        let label = match get(label_idx) {
            "" => None,
            s => Some(IntensityLabel::from_str(s)?),
        };
        let coverage: f64 = get(cov_idx).parse().map_err(|_| Error::Validation {
            row: row + 1,
            message: format!("bad coverage {:?}", get(cov_idx)),
        })?;
        if !(0.0..=1.0).contains(&coverage) {
            return Err(Error::Validation {
                row: row + 1,
                message: format!("coverage {coverage} outside [0, 1]"),
            });
        }
        rows.push((get(pid_idx).to_string(), start, label, coverage));
    }
    Ok(rows)
}

struct SidecarHeader {
    rate_hz: f64,
    duration_s: f64,
    n_windows: usize,
    samples_per_window: usize,
}

fn parse_sidecar_header(line: &str, source: &str) -> Result<SidecarHeader> {
    let rest = line
        .strip_prefix(SIDECAR_MAGIC)
        .ok_or_else(|| Error::format(source, "bad magic line"))?;
    let mut rate_hz = None;
    let mut duration_s = None;
    let mut n_windows = None;
    let mut samples_per_window = None;
    for token in rest.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| Error::format(source, format!("bad header token {token:?}")))?;
        match key {
            "rate_hz" => rate_hz = value.parse::<f64>().ok(),
            "duration_s" => duration_s = value.parse::<f64>().ok(),
            "n_windows" => n_windows = value.parse::<usize>().ok(),
            "samples_per_window" => samples_per_window = value.parse::<usize>().ok(),
            "pid" => {}
            _ => return Err(Error::format(source, format!("unknown header key {key:?}"))),
        }
    }
    let header = SidecarHeader {
        rate_hz: rate_hz.ok_or_else(|| Error::format(source, "missing rate_hz"))?,
        duration_s: duration_s.ok_or_else(|| Error::format(source, "missing duration_s"))?,
        n_windows: n_windows.ok_or_else(|| Error::format(source, "missing n_windows"))?,
        samples_per_window: samples_per_window
            .ok_or_else(|| Error::format(source, "missing samples_per_window"))?,
    };
    if !(header.rate_hz > 0.0 && header.rate_hz.is_finite()) {
        return Err(Error::format(source, "rate_hz must be positive"));
    }
    if !(header.duration_s > 0.0 && header.duration_s.is_finite()) {
        return Err(Error::format(source, "duration_s must be positive"));
    }
    // Guards unreasonable allocation requests from corrupt headers; the
    // per-line value count is checked against this while streaming.
    if header.samples_per_window == 0 || header.samples_per_window > 10_000_000 {
        return Err(Error::format(source, "samples_per_window out of range"));
    }
    Ok(header)
}

/// Reads one participant's windows back from an index reader and a
/// sidecar reader. `source` labels error messages.
pub fn read_windows_from(
    index: impl Read,
    sidecar: impl Read,
    source: &str,
) -> Result<Vec<Window>> {
    let rows = parse_windows_index(index)?;
    let mut lines = BufReader::new(sidecar).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::format(source, "empty sidecar"))?
        .map_err(|e| Error::io(source.to_string(), e))?;
    let header = parse_sidecar_header(&header_line, source)?;
    if rows.len() != header.n_windows {
        return Err(Error::format(
            source,
            format!(
                "index has {} rows but sidecar declares {} windows",
                rows.len(),
                header.n_windows
            ),
        ));
    }

    let mut windows = Vec::with_capacity(rows.len());
    for (i, (pid, start, label, coverage)) in rows.into_iter().enumerate() {
        let line = lines
            .next()
            .ok_or_else(|| Error::format(source, format!("sidecar truncated at window {i}")))?
            .map_err(|e| Error::io(source.to_string(), e))?;
        let mut samples = Vec::with_capacity(header.samples_per_window);
        let mut triple = [0.0f64; 3];
        let mut axis = 0usize;
        for tok in line.split_ascii_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::format(source, format!("bad sample value {tok:?}")))?;
            if !v.is_finite() {
                return Err(Error::format(source, "non-finite sample value"));
            }
            triple[axis] = v;
            axis += 1;
            if axis == 3 {
                if samples.len() == header.samples_per_window {
                    return Err(Error::format(source, format!("window {i} has extra samples")));
                }
                samples.push(triple);
                axis = 0;
            }
        }
        if axis != 0 || samples.len() != header.samples_per_window {
            return Err(Error::format(
                source,
                format!(
                    "window {i} has {} samples, expected {}",
                    samples.len(),
                    header.samples_per_window
                ),
            ));
        }
        windows.push(Window {
            participant_id: pid,
            start_micros: start,
            duration_s: header.duration_s,
            sample_rate_hz: header.rate_hz,
            samples,
            label,
            label_coverage: coverage,
        });
    }
    if lines.next().is_some() {
        return Err(Error::format(source, "sidecar has trailing lines"));
    }
    Ok(windows)
}

/// Path-based wrapper over [`read_windows_from`].
pub fn read_windows_files(csv_path: &Path, sidecar_path: &Path) -> Result<Vec<Window>> {
    let index = std::fs::File::open(csv_path)
        .map_err(|e| Error::io(csv_path.display().to_string(), e))?;
    let sidecar = std::fs::File::open(sidecar_path)
        .map_err(|e| Error::io(sidecar_path.display().to_string(), e))?;
    read_windows_from(index, sidecar, &sidecar_path.display().to_string())
}
