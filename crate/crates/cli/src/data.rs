//! CSV I/O. Data files have the header `t,y_1,…,y_D`, an empty field marks a
//! missing value, and `#` lines carry provenance metadata.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lfm_core::kalman::TimeGrid;

use crate::error::{CliError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance written as comment lines at the top of every output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub seed: u64,
    pub config_hash: String,
}

impl Header {
    fn lines(&self) -> [String; 3] {
        [format!("# lfm {VERSION}"), format!("# seed: {}", self.seed), format!("# config_sha256: {}", self.config_hash)]
    }

    /// Reads the comment block written by [`write_table`].
    pub fn read(path: &Path) -> Result<Header> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut seed = None;
        let mut config_hash = None;
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            if let Some(v) = line.strip_prefix("# seed: ") {
                seed = v.trim().parse().ok();
            } else if let Some(v) = line.strip_prefix("# config_sha256: ") {
                config_hash = Some(v.trim().to_string());
            }
        }
        match (seed, config_hash) {
            (Some(seed), Some(config_hash)) => Ok(Header { seed, config_hash }),
            _ => Err(CliError::Data(format!("{} has no provenance header", path.display()))),
        }
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn format_cell(v: Option<f64>) -> String {
    v.map(format_value).unwrap_or_default()
}

/// Writes a header comment block, a column header and one row per entry.
pub fn write_table<I>(path: &Path, header: &Header, columns: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<Option<f64>>>,
{
    let io = |e: std::io::Error| CliError::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for line in header.lines() {
        writeln!(out, "{line}").map_err(io)?;
    }
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CliError::io(path, std::io::Error::other(e));
    w.write_record(columns).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.into_iter().map(format_cell)).map_err(csv_err)?;
    }
    w.flush().map_err(io)
}

/// A parsed table: column names and rows of optional values.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

pub fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(file);
    let data_err = |msg: String| CliError::Data(format!("{}: {msg}", path.display()));
    let columns: Vec<String> =
        reader.headers().map_err(|e| data_err(e.to_string()))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| data_err(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .iter()
            .enumerate()
            .map(|(j, field)| {
                if field.is_empty() {
                    Ok(None)
                } else {
                    field
                        .parse::<f64>()
                        .map(Some)
                        .map_err(|_| data_err(format!("line {line}, column `{}`: cannot parse `{field}`", columns[j])))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(Table { columns, rows })
}

/// Column names of a data file with `d` outputs.
pub fn data_columns(d: usize) -> Vec<String> {
    std::iter::once("t".to_string()).chain((1..=d).map(|i| format!("y_{i}"))).collect()
}

/// Reads a data file with `d` outputs into a time grid.
pub fn read_data(path: &Path, d: usize) -> Result<TimeGrid> {
    let table = read_table(path)?;
    let err = |msg: String| CliError::Data(format!("{}: {msg}", path.display()));
    let expected = data_columns(d);
    if table.columns != expected {
        return Err(err(format!("header is `{}`, expected `{}`", table.columns.join(","), expected.join(","))));
    }
    if table.rows.is_empty() {
        return Err(err("no data rows".to_string()));
    }
    let mut times = Vec::with_capacity(table.rows.len());
    let mut observations = Vec::with_capacity(table.rows.len());
    for (k, row) in table.rows.into_iter().enumerate() {
        let row_no = k + 1;
        let t = row[0].ok_or_else(|| err(format!("data row {row_no}: missing time")))?;
        if !t.is_finite() {
            return Err(err(format!("data row {row_no}: non-finite time {t}")));
        }
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(err(format!("data row {row_no}: time {t} does not increase (previous {prev})")));
            }
        }
        if row[1..].iter().flatten().any(|v| !v.is_finite()) {
            return Err(err(format!("data row {row_no}: non-finite observation")));
        }
        times.push(t);
        observations.push(row[1..].to_vec());
    }
    TimeGrid::new(times, observations).map_err(|e| err(e.to_string()))
}

pub fn write_data(path: &Path, header: &Header, grid: &TimeGrid) -> Result<()> {
    let rows = grid
        .times()
        .iter()
        .zip(grid.observations())
        .map(|(&t, y)| std::iter::once(Some(t)).chain(y.iter().copied()).collect());
    write_table(path, header, &data_columns(grid.obs_dim()), rows)
}

/// `dir/stem.ext` → `dir/stem_suffix.ext`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{suffix}"),
    };
    path.with_file_name(name)
}
