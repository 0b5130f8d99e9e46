//! Readings CSV, session manifests, dataset directories and window CSVs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use solstep_core::ingest::{
    group_streams, synchronize, DeviceStream, Placement, RawReading, SessionManifest, SyncedRecording,
};
use solstep_core::matrix::Matrix;
use solstep_core::synthgen::GeneratedSession;
use solstep_core::Error as CoreError;

use crate::error::{io_err, Error, Result};

pub const READINGS_HEADER: [&str; 4] = ["device_id", "placement", "timestamp_s", "adc_counts"];

#[derive(Debug, Serialize, Deserialize)]
struct ReadingRow {
    device_id: String,
    placement: String,
    timestamp_s: f64,
    adc_counts: i64,
}

fn csv_err(line: u64, message: impl Into<String>) -> Error {
    Error::Csv {
        line,
        message: message.into(),
    }
}

/// Parses the readings CSV into one stream per device, in order of first
/// appearance. Errors carry the 1-based file line.
pub fn parse_readings(bytes: &[u8]) -> Result<Vec<DeviceStream>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let header = reader.headers().map_err(|e| csv_err(1, e.to_string()))?.clone();
    if header.iter().ne(READINGS_HEADER) {
        return Err(csv_err(
            1,
            format!("expected header '{}', found '{}'", READINGS_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut readings = Vec::new();
    let mut lines = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row: ReadingRow = record
            .deserialize(Some(&header))
            .map_err(|e| csv_err(line, e.to_string()))?;
        let placement: Placement = row.placement.parse().map_err(|e: String| csv_err(line, e))?;
        if !(0..=i64::from(solstep_core::ADC_MAX)).contains(&row.adc_counts) {
            return Err(csv_err(line, format!("adc count {} outside 0..=1023", row.adc_counts)));
        }
        readings.push(RawReading {
            device_id: row.device_id,
            placement,
            timestamp_s: row.timestamp_s,
            adc_counts: row.adc_counts as u16,
        });
        lines.push(line);
    }
    group_streams(readings).map_err(|e| match &e {
        CoreError::AdcRange { row, .. }
        | CoreError::NonMonotoneTimestamp { row, .. }
        | CoreError::PlacementChanged { row, .. }
        | CoreError::NonFiniteTimestamp { row } => {
            let text = e.to_string();
            let message = text.split_once(": ").map_or(text.as_str(), |(_, m)| m);
            csv_err(lines[*row], message)
        }
        _ => e.into(),
    })
}

/// Writes readings under the standard header.
pub fn write_readings(path: &Path, readings: &[RawReading]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format {
        path: path.into(),
        message: e.to_string(),
    })?;
    let fail = |e: csv::Error| Error::Format {
        path: path.into(),
        message: e.to_string(),
    };
    for r in readings {
        w.serialize(ReadingRow {
            device_id: r.device_id.clone(),
            placement: r.placement.code().to_string(),
            timestamp_s: r.timestamp_s,
            adc_counts: i64::from(r.adc_counts),
        })
        .map_err(fail)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_manifest(path: &Path) -> Result<SessionManifest> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let manifest: SessionManifest = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.into(),
        message: e.to_string(),
    })?;
    manifest.validate().map_err(|e| Error::from(e).in_file(path))?;
    Ok(manifest)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.into(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// One session on disk: `<stem>.csv` readings beside `<stem>.json` manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionFiles {
    pub readings: PathBuf,
    pub manifest: PathBuf,
}

pub fn write_session(dir: &Path, session: &GeneratedSession) -> Result<SessionFiles> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let stem = session.name();
    let files = SessionFiles {
        readings: dir.join(format!("{stem}.csv")),
        manifest: dir.join(format!("{stem}.json")),
    };
    write_readings(&files.readings, &session.readings)?;
    write_json(&files.manifest, &session.manifest)?;
    Ok(files)
}

/// Sessions found under `path`: a directory of readings CSVs, or a single
/// readings CSV. Every CSV needs its manifest.
pub fn find_sessions(path: &Path) -> Result<Vec<SessionFiles>> {
    let csvs = if path.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(path)
            .map_err(io_err(path))?
            .map(|e| e.map(|e| e.path()).map_err(io_err(path)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        v.sort();
        v
    } else if path.exists() {
        vec![path.to_path_buf()]
    } else {
        return Err(Error::Io {
            path: path.into(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        });
    };
    if csvs.is_empty() {
        return Err(Error::Format {
            path: path.into(),
            message: "no readings CSV files".into(),
        });
    }
    csvs.into_iter()
        .map(|readings| {
            let manifest = readings.with_extension("json");
            if !manifest.is_file() {
                return Err(Error::Format {
                    path: manifest,
                    message: format!("manifest missing for {}", readings.display()),
                });
            }
            Ok(SessionFiles { readings, manifest })
        })
        .collect()
}

pub fn load_session(files: &SessionFiles, rate_hz: f64) -> Result<SyncedRecording> {
    let bytes = fs::read(&files.readings).map_err(io_err(&files.readings))?;
    let streams = parse_readings(&bytes).map_err(|e| e.in_file(&files.readings))?;
    let manifest = read_manifest(&files.manifest)?;
    synchronize(&streams, rate_hz, manifest).map_err(|e| Error::from(e).in_file(&files.readings))
}

/// Loads and synchronizes every session under each path.
pub fn load_recordings(paths: &[PathBuf], rate_hz: f64) -> Result<Vec<SyncedRecording>> {
    if paths.is_empty() {
        return Err(Error::Config("no dataset paths given".into()));
    }
    let mut out = Vec::new();
    for p in paths {
        for files in find_sessions(p)? {
            out.push(load_session(&files, rate_hz)?);
        }
    }
    Ok(out)
}

/// A window given as CSV: a header of placement codes, then one row of
/// volts per scan.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowCsv {
    pub placements: Vec<Placement>,
    pub values: Matrix,
}

pub fn parse_window_csv(bytes: &[u8]) -> Result<WindowCsv> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let header = reader.headers().map_err(|e| csv_err(1, e.to_string()))?.clone();
    let placements = header
        .iter()
        .map(|h| h.parse::<Placement>().map_err(|e| csv_err(1, e)))
        .collect::<Result<Vec<_>>>()?;
    if placements.is_empty() {
        return Err(csv_err(1, "header names no placements"));
    }
    for (i, p) in placements.iter().enumerate() {
        if placements[..i].contains(p) {
            return Err(csv_err(1, format!("placement {p} repeated")));
        }
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| csv_err(line, format!("'{field}' is not a number")))?;
            if !v.is_finite() {
                return Err(csv_err(line, format!("non-finite value '{field}'")));
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(csv_err(1, "window has no rows"));
    }
    Ok(WindowCsv {
        values: Matrix::from_vec(rows, placements.len(), data),
        placements,
    })
}

pub fn write_window_csv(path: &Path, placements: &[Placement], values: &Matrix) -> Result<()> {
    let mut text = placements.iter().map(|p| p.code()).collect::<Vec<_>>().join(",");
    text.push('\n');
    for row in values.iter_rows() {
        text.push_str(&row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
        text.push('\n');
    }
    fs::write(path, text).map_err(io_err(path))
}
