//! CSV tables with `#`-prefixed run-header lines.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::engine::EventLog;
use crate::error::OutputError;

/// A metric table row with a fixed column order.
pub trait Row: Serialize + DeserializeOwned {
    const COLUMNS: &'static [&'static str];
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> OutputError + '_ {
    move |source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes header comment lines, the column row, then one line per record.
pub fn write_rows<T: Row, W: Write>(
    w: W,
    header: &[String],
    rows: &[T],
    path: &Path,
) -> Result<(), OutputError> {
    let mut w = w;
    for line in header {
        writeln!(w, "# {line}").map_err(io_err(path))?;
    }
    let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    csv.write_record(T::COLUMNS).map_err(csv_err(path))?;
    for r in rows {
        csv.serialize(r).map_err(csv_err(path))?;
    }
    csv.flush().map_err(io_err(path))
}

pub fn write_csv<T: Row>(path: &Path, header: &[String], rows: &[T]) -> Result<(), OutputError> {
    let f = File::create(path).map_err(io_err(path))?;
    write_rows(BufWriter::new(f), header, rows, path)
}

/// Header lines (without the `# `) and rows.
pub fn parse_rows<T: Row, R: Read>(
    mut r: R,
    path: &Path,
) -> Result<(Vec<String>, Vec<T>), OutputError> {
    let mut text = String::new();
    r.read_to_string(&mut text).map_err(io_err(path))?;
    let header = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(|l| l.trim_start_matches('#').trim_start().to_owned())
        .collect();
    let mut csv = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let rows = csv
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(csv_err(path))?;
    Ok((header, rows))
}

pub fn read_csv<T: Row>(path: &Path) -> Result<(Vec<String>, Vec<T>), OutputError> {
    let f = File::open(path).map_err(io_err(path))?;
    parse_rows(f, path)
}

pub fn write_event_log(path: &Path, log: &EventLog) -> Result<(), OutputError> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    log.write_csv(&mut w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}
