//! Waveform CSV: `time,<name>,...` header, one row per sample, `\n` endings.

use std::io::{Read, Write};

use thiserror::Error;
use unisim_core::WaveformSet;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("row {row}: `{text}` is not a number")]
    Number { row: usize, text: String },
    #[error("first column must be `time`")]
    MissingTime,
}

/// Shortest decimal that reads back to the same bits: plain or exponent
/// notation, whichever is shorter (plain on ties).
pub fn format_value(v: f64) -> String {
    let plain = format!("{v}");
    let exp = format!("{v:e}");
    if exp.len() < plain.len() {
        exp
    } else {
        plain
    }
}

pub fn write_waveforms<W: Write>(wf: &WaveformSet, destination: W) -> Result<(), CsvError> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(destination);
    out.write_record(std::iter::once("time").chain(wf.names.iter().map(String::as_str)))?;
    let mut row = Vec::with_capacity(wf.names.len() + 1);
    for (k, t) in wf.time.iter().enumerate() {
        row.clear();
        row.push(format_value(*t));
        row.extend(wf.columns.iter().map(|c| format_value(c[k])));
        out.write_record(&row)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_waveforms<R: Read>(source: R) -> Result<WaveformSet, CsvError> {
    let mut input = csv::ReaderBuilder::new().from_reader(source);
    let header = input.headers()?.clone();
    let mut fields = header.iter();
    if fields.next() != Some("time") {
        return Err(CsvError::MissingTime);
    }
    let names: Vec<String> = fields.map(str::to_string).collect();
    let mut wf = WaveformSet {
        time: Vec::new(),
        columns: vec![Vec::new(); names.len()],
        names,
    };
    for (row, record) in input.records().enumerate() {
        let record = record?;
        for (k, text) in record.iter().enumerate() {
            let v: f64 = text.parse().map_err(|_| CsvError::Number {
                row: row + 1,
                text: text.to_string(),
            })?;
            match k {
                0 => wf.time.push(v),
                _ => wf.columns[k - 1].push(v),
            }
        }
    }
    Ok(wf)
}
