//! Dyad CSV files.
//!
//! The header is fixed:
//!
//! ```text
//! distance_km,contiguity,major_power_count,allied,democracy_score,econ_interdependence,capability,label
//! ```
//!
//! Booleans are `0`/`1`, labels are `war` or `peace`, lines end in LF.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use countermachine_core::{DataError, DyadRecord, Label};
use thiserror::Error;

pub const HEADER: [&str; 8] = [
    "distance_km",
    "contiguity",
    "major_power_count",
    "allied",
    "democracy_score",
    "econ_interdependence",
    "capability",
    "label",
];

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: String,
        message: String,
    },
    #[error("line {line}, column {column}: value {value} is out of range")]
    Range {
        line: u64,
        column: &'static str,
        value: String,
    },
}

fn parse_err(line: u64, column: &str, message: impl Into<String>) -> CsvError {
    CsvError::Parse {
        line,
        column: column.to_owned(),
        message: message.into(),
    }
}

fn check_header(headers: &csv::StringRecord) -> Result<(), CsvError> {
    for (i, want) in HEADER.iter().enumerate() {
        match headers.get(i) {
            Some(got) if got == *want => {}
            _ if !headers.iter().any(|h| h == *want) => {
                return Err(parse_err(1, want, format!("missing column `{want}`")))
            }
            Some(got) => {
                return Err(parse_err(
                    1,
                    want,
                    format!("expected `{want}` at position {}, found `{got}`", i + 1),
                ))
            }
            None => unreachable!("present columns have a position"),
        }
    }
    if let Some(extra) = headers.get(HEADER.len()) {
        return Err(parse_err(1, extra, format!("unexpected column `{extra}`")));
    }
    Ok(())
}

fn real(field: &str, line: u64, column: &'static str) -> Result<f64, CsvError> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_err(line, column, format!("`{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(CsvError::Range {
            line,
            column,
            value: field.to_owned(),
        });
    }
    Ok(v)
}

fn small_int(field: &str, line: u64, column: &'static str, max: u8) -> Result<u8, CsvError> {
    let v: i64 = field
        .trim()
        .parse()
        .map_err(|_| parse_err(line, column, format!("`{field}` is not an integer")))?;
    u8::try_from(v)
        .ok()
        .filter(|&v| v <= max)
        .ok_or_else(|| CsvError::Range {
            line,
            column,
            value: field.to_owned(),
        })
}

fn record(rec: &csv::StringRecord, line: u64) -> Result<DyadRecord, CsvError> {
    if rec.len() != HEADER.len() {
        return Err(parse_err(
            line,
            HEADER.get(rec.len()).copied().unwrap_or("label"),
            format!("expected {} fields, found {}", HEADER.len(), rec.len()),
        ));
    }
    let label = match rec[7].trim() {
        "war" => Label::War,
        "peace" => Label::Peace,
        other => return Err(parse_err(line, "label", format!("`{other}` is not war or peace"))),
    };
    let r = DyadRecord {
        distance_km: real(&rec[0], line, HEADER[0])?,
        contiguity: small_int(&rec[1], line, HEADER[1], 1)? == 1,
        major_power_count: small_int(&rec[2], line, HEADER[2], 2)?,
        allied: small_int(&rec[3], line, HEADER[3], 1)? == 1,
        democracy_score: real(&rec[4], line, HEADER[4])?,
        econ_interdependence: real(&rec[5], line, HEADER[5])?,
        capability: real(&rec[6], line, HEADER[6])?,
        label,
    };
    r.validate(0).map_err(|e| match e {
        DataError::Range { field, .. } => {
            let col = HEADER.iter().position(|h| *h == field).unwrap_or(0);
            CsvError::Range {
                line,
                column: HEADER[col],
                value: rec[col].to_owned(),
            }
        }
        other => parse_err(line, "", other.to_string()),
    })?;
    Ok(r)
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<DyadRecord>, CsvError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(1, "", e.to_string()))?
        .clone();
    check_header(&headers)?;
    let mut out = Vec::new();
    let mut rec = csv::StringRecord::new();
    loop {
        let line = rdr.position().line();
        match rdr.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {
                let line = rec.position().map_or(line, |p| p.line());
                out.push(record(&rec, line)?);
            }
            Err(e) => {
                let line = e.position().map_or(line, |p| p.line());
                return Err(parse_err(line, "", e.to_string()));
            }
        }
    }
    Ok(out)
}

pub fn write_records<W: Write>(output: W, records: &[DyadRecord]) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(output);
    w.write_record(HEADER)?;
    let bit = |b: bool| if b { "1" } else { "0" };
    for r in records {
        w.write_record([
            r.distance_km.to_string().as_str(),
            bit(r.contiguity),
            r.major_power_count.to_string().as_str(),
            bit(r.allied),
            r.democracy_score.to_string().as_str(),
            r.econ_interdependence.to_string().as_str(),
            r.capability.to_string().as_str(),
            r.label.to_string().as_str(),
        ])?;
    }
    w.flush()
}

pub fn load_csv(path: &Path) -> Result<Vec<DyadRecord>, CsvError> {
    let file = File::open(path).map_err(|source| CsvError::Io {
        path: path.to_owned(),
        source,
    })?;
    read_records(std::io::BufReader::new(file))
}

pub fn save_csv(path: &Path, records: &[DyadRecord]) -> Result<(), CsvError> {
    let io = |source| CsvError::Io {
        path: path.to_owned(),
        source,
    };
    let file = File::create(path).map_err(io)?;
    write_records(std::io::BufWriter::new(file), records).map_err(io)
}
