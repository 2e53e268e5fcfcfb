//! CSV ingestion and output. Missing entries are spelled with an NA token.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::DataMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_NA: &str = "NA";

/// Formats a value with 17 significant digits, enough to round-trip any f64.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn load_csv(path: impl AsRef<Path>, na_token: &str) -> Result<DataMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, na_token).map_err(|e| match e {
        Error::Csv { source, .. } => Error::Csv {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// Parses a header row followed by numeric rows. Reported row and column
/// numbers are 1-based data positions (the header is row 0).
pub fn read_csv<R: Read>(reader: R, na_token: &str) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let csv_err = |source| Error::Csv {
        path: "<input>".into(),
        source,
    };
    let col_names: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let n_cols = col_names.len();

    let mut values = Vec::new();
    let mut mask = Vec::new();
    let mut n_rows = 0;
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        n_rows += 1;
        if record.len() != n_cols {
            return Err(Error::RaggedRow {
                row: n_rows,
                expected: n_cols,
                found: record.len(),
            });
        }
        for (c, field) in record.iter().enumerate() {
            if field == na_token {
                values.push(f64::NAN);
                mask.push(true);
                continue;
            }
            match field.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    values.push(v);
                    mask.push(false);
                }
                _ => {
                    return Err(Error::Parse {
                        row: n_rows,
                        col: c + 1,
                        field: field.to_string(),
                    })
                }
            }
        }
    }

    let m = DataMatrix::new(n_rows, n_cols, values, mask, col_names)?;
    m.require_observed(1)?;
    Ok(m)
}

pub fn write_csv(m: &DataMatrix, path: impl AsRef<Path>, na_token: &str) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = File::create(path).map_err(io_err)?;
    write_csv_to(m, &mut file, na_token).map_err(|e| match e {
        Error::Csv { source, .. } => Error::Csv {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })?;
    file.flush().map_err(io_err)
}

pub fn write_csv_to<W: Write>(m: &DataMatrix, writer: W, na_token: &str) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let csv_err = |source| Error::Csv {
        path: "<output>".into(),
        source,
    };
    wtr.write_record(m.col_names()).map_err(csv_err)?;
    let mut row = Vec::with_capacity(m.n_cols());
    for r in 0..m.n_rows() {
        row.clear();
        row.extend((0..m.n_cols()).map(|c| match m.get(r, c) {
            Some(v) => format_value(v),
            None => na_token.to_string(),
        }));
        wtr.write_record(&row).map_err(csv_err)?;
    }
    wtr.flush().map_err(|source| Error::Io {
        path: "<output>".into(),
        source,
    })
}

/// Writes 0-based `(row, col)` positions under a `row,col` header.
pub fn write_positions(positions: &[(usize, usize)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = String::from("row,col\n");
    for (r, c) in positions {
        out.push_str(&format!("{r},{c}\n"));
    }
    std::fs::write(path, out).map_err(io_err)
}

pub fn load_positions(path: impl AsRef<Path>) -> Result<Vec<(usize, usize)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines();
    match lines.next().map(str::trim) {
        Some("row,col") => {}
        other => {
            return Err(Error::Shape(format!(
                "{}: expected header \"row,col\", found {:?}",
                path.display(),
                other.unwrap_or("")
            )))
        }
    }
    let mut positions = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let parse = |s: Option<&str>, col: usize| {
            let s = s.unwrap_or("").trim();
            s.parse::<usize>().map_err(|_| Error::Parse {
                row: i + 1,
                col,
                field: s.to_string(),
            })
        };
        let mut fields = line.split(',');
        let r = parse(fields.next(), 1)?;
        let c = parse(fields.next(), 2)?;
        if let Some(extra) = fields.next() {
            return Err(Error::Parse {
                row: i + 1,
                col: 3,
                field: extra.to_string(),
            });
        }
        positions.push((r, c));
    }
    Ok(positions)
}
