//! Trajectory CSV ingestion: `t,lat,lon` or `t,cell` rows, one trajectory per
//! blank-line-separated block (or per file), optionally time-resampled and
//! snapped onto the grid.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::grid::{CellIndex, GridMap};
use crate::markov::Trajectory;

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("row {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("no usable rows after filtering")]
    EmptyAfterFilter,
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub trajectories: Vec<Trajectory>,
    /// Rows outside the grid, dropped with a count instead of failing.
    pub dropped_rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RowFormat {
    LatLon,
    Cell,
}

#[derive(Debug, Clone, Copy)]
struct RawRow {
    t: f64,
    a: f64,
    b: f64,
    format: RowFormat,
}

pub fn ingest_trajectories(
    path: &Path,
    grid: &GridMap,
    resample_seconds: Option<f64>,
) -> Result<IngestReport, IngestError> {
    let text = fs::read_to_string(path).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    ingest_from_str(&text, grid, resample_seconds)
}

pub fn ingest_from_str(
    text: &str,
    grid: &GridMap,
    resample_seconds: Option<f64>,
) -> Result<IngestReport, IngestError> {
    let mut report = IngestReport::default();
    let mut block: Vec<RawRow> = Vec::new();
    let mut format: Option<RowFormat> = None;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() {
            flush_block(&mut block, grid, resample_seconds, &mut report);
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if idx == 0 || format.is_none() {
            if let Some(f) = header_format(&fields) {
                format = Some(f);
                continue;
            }
        }
        if header_format(&fields).is_some() {
            // repeated header starts a new block
            flush_block(&mut block, grid, resample_seconds, &mut report);
            continue;
        }
        let format = format.unwrap_or(RowFormat::LatLon);
        let row = parse_row(&fields, format, line_no)?;
        block.push(row);
    }
    flush_block(&mut block, grid, resample_seconds, &mut report);

    if report.trajectories.is_empty() {
        return Err(IngestError::EmptyAfterFilter);
    }
    Ok(report)
}

fn header_format(fields: &[&str]) -> Option<RowFormat> {
    match fields {
        ["t", "lat", "lon"] => Some(RowFormat::LatLon),
        ["t", "cell"] => Some(RowFormat::Cell),
        _ => None,
    }
}

fn parse_row(fields: &[&str], format: RowFormat, line: usize) -> Result<RawRow, IngestError> {
    let parse = |s: &str, what: &str| {
        s.parse::<f64>().map_err(|_| IngestError::ParseError {
            line,
            message: format!("cannot parse {what} from `{s}`"),
        })
    };
    match format {
        RowFormat::LatLon => {
            if fields.len() != 3 {
                return Err(IngestError::ParseError {
                    line,
                    message: format!("expected 3 fields t,lat,lon, got {}", fields.len()),
                });
            }
            Ok(RawRow {
                t: parse(fields[0], "timestamp")?,
                a: parse(fields[1], "latitude")?,
                b: parse(fields[2], "longitude")?,
                format,
            })
        }
        RowFormat::Cell => {
            if fields.len() != 2 {
                return Err(IngestError::ParseError {
                    line,
                    message: format!("expected 2 fields t,cell, got {}", fields.len()),
                });
            }
            Ok(RawRow { t: parse(fields[0], "timestamp")?, a: parse(fields[1], "cell")?, b: 0.0, format })
        }
    }
}

fn flush_block(
    block: &mut Vec<RawRow>,
    grid: &GridMap,
    resample_seconds: Option<f64>,
    report: &mut IngestReport,
) {
    if block.is_empty() {
        return;
    }
    let mut rows = std::mem::take(block);
    rows.sort_by(|x, y| x.t.partial_cmp(&y.t).unwrap());
    let sampled = match resample_seconds {
        Some(step) if step > 0.0 => resample_nearest(&rows, step),
        _ => rows,
    };
    let mut cells = Vec::with_capacity(sampled.len());
    for row in &sampled {
        match row.format {
            RowFormat::LatLon => match grid.locate(row.a, row.b) {
                Ok(cell) => cells.push(cell),
                Err(_) => report.dropped_rows += 1,
            },
            RowFormat::Cell => {
                let idx = row.a as usize;
                if row.a >= 0.0 && row.a.fract() == 0.0 && idx < grid.len() {
                    cells.push(CellIndex(idx));
                } else {
                    report.dropped_rows += 1;
                }
            }
        }
    }
    if !cells.is_empty() {
        report.trajectories.push(Trajectory::new(cells).expect("non-empty"));
    }
}

/// Nearest sample to each step boundary t0, t0+Δ, t0+2Δ, …
fn resample_nearest(rows: &[RawRow], step: f64) -> Vec<RawRow> {
    let t0 = rows[0].t;
    let t_last = rows[rows.len() - 1].t;
    let steps = ((t_last - t0) / step).floor() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut cursor = 0usize;
    for k in 0..=steps {
        let target = t0 + k as f64 * step;
        while cursor + 1 < rows.len()
            && (rows[cursor + 1].t - target).abs() <= (rows[cursor].t - target).abs()
        {
            cursor += 1;
        }
        out.push(rows[cursor]);
    }
    out
}
