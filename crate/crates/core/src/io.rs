//! CSV matrices and atomic file output.
//!
//! Format: UTF-8, comma-separated, `.` decimal point, one sample per row,
//! optional single header row. Numbers are written with 17 significant
//! digits so that reading a file back reproduces every value exactly.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{KseError, Result};
use crate::matrix::Matrix;

/// Formats a value with 17 significant digits.
pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `bytes` to a temporary file in the destination directory and
/// renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| KseError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| KseError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| KseError::io(path, e))?;
    tmp.persist(path).map_err(|e| KseError::io(path, e.error))?;
    Ok(())
}

pub fn matrix_to_csv(m: &Matrix, header: Option<&[String]>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for i in 0..m.rows() {
        for (j, &v) in m.row(i).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", format_number(v));
        }
        out.push('\n');
    }
    out
}

pub fn write_csv_matrix(path: &Path, m: &Matrix, header: Option<&[String]>) -> Result<()> {
    write_atomic(path, matrix_to_csv(m, header).as_bytes())
}

/// Writes a single column of values.
pub fn write_csv_column(path: &Path, values: &[f64], header: Option<&str>) -> Result<()> {
    let m = Matrix::from_vec(values.len(), 1, values.to_vec())?;
    let h = header.map(|h| vec![h.to_string()]);
    write_csv_matrix(path, &m, h.as_deref())
}

/// Reads a numeric CSV into a matrix. Errors name the 1-based row and column
/// of the offending cell.
pub fn read_csv_matrix(path: &Path, has_header: bool) -> Result<Matrix> {
    let bytes = fs::read(path).map_err(|e| KseError::io(path, e))?;
    parse_csv_matrix(&bytes, has_header, path)
}

fn parse_csv_matrix(bytes: &[u8], has_header: bool, path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut data = Vec::new();
    let mut cols: Option<usize> = None;
    let mut rows = 0usize;
    let row_offset = if has_header { 2 } else { 1 };
    for (r, record) in reader.records().enumerate() {
        let row = r + row_offset;
        let record = record.map_err(|e| KseError::Parse {
            path: path.to_path_buf(),
            row,
            col: 0,
            message: e.to_string(),
        })?;
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(KseError::Parse {
                    path: path.to_path_buf(),
                    row,
                    col: record.len().min(c) + 1,
                    message: format!("expected {c} columns, found {}", record.len()),
                })
            }
            _ => {}
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| KseError::Parse {
                path: path.to_path_buf(),
                row,
                col: c + 1,
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(KseError::Parse {
                    path: path.to_path_buf(),
                    row,
                    col: c + 1,
                    message: format!("'{cell}' is not finite"),
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    if rows == 0 {
        return Err(KseError::Parse {
            path: path.to_path_buf(),
            row: row_offset,
            col: 1,
            message: "file contains no data rows".into(),
        });
    }
    Matrix::from_vec(rows, cols, data)
}

/// Reads a one-column file of labels (integers or reals).
pub fn read_labels(path: &Path, has_header: bool) -> Result<Vec<f64>> {
    let m = read_csv_matrix(path, has_header)?;
    if m.cols() != 1 {
        return Err(KseError::Parse {
            path: path.to_path_buf(),
            row: 1,
            col: 2,
            message: format!("label file must have one column, found {}", m.cols()),
        });
    }
    Ok(m.into_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = Matrix::from_rows(&[[0.1, -1.0 / 3.0, 1e-300], [std::f64::consts::PI, 12345.678, -0.0]]).unwrap();
        write_csv_matrix(&path, &m, Some(&["a".into(), "b".into(), "c".into()])).unwrap();
        let back = read_csv_matrix(&path, true).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn passthrough_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.csv");
        let text: String = (0..100).map(|i| format!("{i},{}.5,-{i}\n", i * 2)).collect();
        fs::write(&path, text).unwrap();
        let m = read_csv_matrix(&path, false).unwrap();
        assert_eq!((m.rows(), m.cols()), (100, 3));
        assert_eq!(m[(7, 1)], 14.5);
    }

    #[test]
    fn parse_error_names_cell() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "1,2\n3,abc\n").unwrap();
        match read_csv_matrix(&path, false).unwrap_err() {
            KseError::Parse { row, col, message, .. } => {
                assert_eq!((row, col), (2, 2));
                assert!(message.contains("abc"));
            }
            other => panic!("unexpected error {other}"),
        }
        fs::write(&path, "x,y\n1,2\n3\n").unwrap();
        assert!(matches!(read_csv_matrix(&path, true), Err(KseError::Parse { row: 3, .. })));
        assert!(matches!(
            read_csv_matrix(&dir.path().join("missing.csv"), false),
            Err(KseError::Io { .. })
        ));
    }
}
