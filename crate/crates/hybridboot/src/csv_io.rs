//! CSV tables: header row, UTF-8, RFC 4180 quoting.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use hybridboot_core::table::{ColumnKind, Table};

use crate::error::{Error, Result};

fn csv_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Parses CSV text. Row numbers in errors count the header as row 1.
pub fn parse_csv(text: impl Read, path: &Path, hints: &[(String, ColumnKind)]) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text);
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if names.is_empty() || names.iter().all(|n| n.is_empty()) {
        return Err(csv_error(path, "missing header row"));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e.to_string()))?;
        if record.len() != names.len() {
            return Err(csv_error(
                path,
                format!("row {}: {} cells, header has {}", i + 2, record.len(), names.len()),
            ));
        }
        rows.push(record.iter().map(str::to_owned).collect());
    }
    Table::new(names, rows, hints).map_err(|e| csv_error(path, e.to_string()))
}

pub fn load_csv(path: impl AsRef<Path>, hints: &[(String, ColumnKind)]) -> Result<Table> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(file, path, hints)
}

/// Header plus rows; quoting only where a cell needs it.
pub fn encode_csv(table: &Table) -> Vec<u8> {
    let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
    let io = "writing to memory cannot fail";
    writer.write_record(table.names()).expect(io);
    for row in table.rows() {
        writer.write_record(row).expect(io);
    }
    writer.into_inner().expect(io)
}

pub fn write_csv(table: &Table, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode_csv(table)).map_err(|e| Error::io(path, e))
}
