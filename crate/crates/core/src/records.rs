//! Versioned CSV records: per-mesh simulation reports, preference pairs and
//! toy-run trajectories.
//!
//! Every file starts with a fixed header whose first column is `version`, and
//! every row repeats the version it was written with. Readers reject unknown
//! headers and versions. Floats are written with 17 significant digits.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{DatasetScores, ScoreEntry};
use crate::preference::toy::TrajectoryPoint;
use crate::preference::{PreferencePair, SampleRecord};

pub const REPORT_VERSION: u32 = 1;
pub const PAIRS_VERSION: u32 = 1;
pub const TRAJECTORY_VERSION: u32 = 1;

pub const REPORT_HEADER: [&str; 10] = [
    "version",
    "prompt_id",
    "sample_id",
    "file",
    "mesh_volume",
    "support_volume",
    "nsv",
    "risky_count",
    "risky_area",
    "watertight",
];
pub const PAIRS_HEADER: [&str; 8] = [
    "version", "prompt_id", "winner_id", "loser_id", "nsv_w", "nsv_l", "delta_r", "offset",
];
pub const TRAJECTORY_HEADER: [&str; 4] = ["version", "step", "mean_nsv", "loss"];

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("unexpected header {found:?}, expected {expected:?}")]
    Header { found: Vec<String>, expected: Vec<String> },
    #[error("row {row}: unsupported version {version}")]
    Version { row: usize, version: u32 },
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub prompt_id: String,
    pub sample_id: String,
    pub file: String,
    pub mesh_volume: f64,
    pub support_volume: f64,
    pub nsv: f64,
    pub risky_count: usize,
    pub risky_area: f64,
    pub watertight: bool,
}

impl ReportRow {
    pub fn score(&self) -> ScoreEntry {
        ScoreEntry {
            prompt_id: self.prompt_id.clone(),
            sample_id: self.sample_id.clone(),
            mesh_volume: self.mesh_volume,
            support_volume: self.support_volume,
            nsv: self.nsv,
        }
    }

    pub fn sample(&self) -> SampleRecord {
        SampleRecord::new(self.prompt_id.clone(), self.sample_id.clone(), self.nsv)
    }
}

pub fn scores_from_rows(rows: &[ReportRow]) -> DatasetScores {
    DatasetScores::new(rows.iter().map(ReportRow::score).collect())
}

fn write_table<W: Write>(
    out: W,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<(), RecordError> {
    let mut writer = csv::WriterBuilder::new().from_writer(out);
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

fn read_table<R: Read, T: for<'de> Deserialize<'de>>(
    input: R,
    header: &[&str],
    version: u32,
) -> Result<Vec<T>, RecordError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let found: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(RecordError::Header {
            found,
            expected: header.iter().map(|s| s.to_string()).collect(),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row_version: u32 = record
            .get(0)
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(0);
        if row_version != version {
            return Err(RecordError::Version { row: i + 1, version: row_version });
        }
        let fields: csv::StringRecord = record.iter().skip(1).collect();
        rows.push(fields.deserialize(None)?);
    }
    Ok(rows)
}

pub fn write_report_csv<W: Write>(out: W, rows: &[ReportRow]) -> Result<(), RecordError> {
    write_table(
        out,
        &REPORT_HEADER,
        rows.iter().map(|r| {
            vec![
                REPORT_VERSION.to_string(),
                r.prompt_id.clone(),
                r.sample_id.clone(),
                r.file.clone(),
                format_float(r.mesh_volume),
                format_float(r.support_volume),
                format_float(r.nsv),
                r.risky_count.to_string(),
                format_float(r.risky_area),
                r.watertight.to_string(),
            ]
        }),
    )
}

pub fn read_report_csv<R: Read>(input: R) -> Result<Vec<ReportRow>, RecordError> {
    read_table(input, &REPORT_HEADER, REPORT_VERSION)
}

pub fn write_pairs<W: Write>(out: W, pairs: &[PreferencePair]) -> Result<(), RecordError> {
    write_table(
        out,
        &PAIRS_HEADER,
        pairs.iter().map(|p| {
            vec![
                PAIRS_VERSION.to_string(),
                p.prompt_id.clone(),
                p.winner_id.clone(),
                p.loser_id.clone(),
                format_float(p.nsv_w),
                format_float(p.nsv_l),
                format_float(p.delta_r),
                format_float(p.offset),
            ]
        }),
    )
}

pub fn read_pairs<R: Read>(input: R) -> Result<Vec<PreferencePair>, RecordError> {
    read_table(input, &PAIRS_HEADER, PAIRS_VERSION)
}

pub fn write_trajectory<W: Write>(out: W, points: &[TrajectoryPoint]) -> Result<(), RecordError> {
    write_table(
        out,
        &TRAJECTORY_HEADER,
        points.iter().map(|p| {
            vec![
                TRAJECTORY_VERSION.to_string(),
                p.step.to_string(),
                format_float(p.mean_nsv),
                format_float(p.loss),
            ]
        }),
    )
}

pub fn read_trajectory<R: Read>(input: R) -> Result<Vec<TrajectoryPoint>, RecordError> {
    read_table(input, &TRAJECTORY_HEADER, TRAJECTORY_VERSION)
}
