use std::io::{Read, Write};

use super::{Cell, DataTable, InferOptions};
use crate::error::{Error, Result};

/// Load a headed CSV file with default inference options.
pub fn load_csv<R: Read>(source: R) -> Result<DataTable> {
    load_csv_with(source, InferOptions::default())
}

pub fn load_csv_with<R: Read>(source: R, opts: InferOptions) -> Result<DataTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Schema("missing header row".into()));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::Structural {
                row: i + 1,
                expected: header.len(),
                found: record.len(),
            });
        }
        rows.push(record.iter().map(str::to_string).collect());
    }
    DataTable::from_records(&header, &rows, opts)
}

/// Write the table as CSV. Output is byte-stable for a given table; missing
/// cells are written empty and numbers in shortest round-trip form.
pub fn export_csv<W: Write>(table: &DataTable, sink: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    writer.write_record(table.columns().iter().map(|c| c.name()))?;
    let mut record = Vec::with_capacity(table.columns().len());
    for row in 0..table.n_rows() {
        record.clear();
        for col in table.columns() {
            record.push(match col.cell(row) {
                Cell::Num(v) => format_number(v),
                Cell::Cat(s) => s.to_string(),
                Cell::Missing => String::new(),
            });
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

pub(crate) fn format_number(v: f64) -> String {
    // Display is the shortest representation that parses back to the same bits.
    format!("{}", v + 0.0)
}
