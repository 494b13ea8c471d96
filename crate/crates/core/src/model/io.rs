//! Flat binary (little-endian f64, row-major, no header) and CSV export.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Matrix;

pub fn write_f64_le(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_f64_le(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::invalid(format!(
            "binary vector file length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn write_matrix_le(path: impl AsRef<Path>, a: &Matrix) -> Result<()> {
    write_f64_le(path, a.as_slice())
}

pub fn read_matrix_le(path: impl AsRef<Path>, rows: usize, cols: usize) -> Result<Matrix> {
    Matrix::from_row_major(rows, cols, read_f64_le(path)?)
}

/// One value per line under a `value` header.
pub fn write_vector_csv(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["value"])?;
    for v in values {
        w.write_record([v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One matrix row per CSV record, no header.
pub fn write_matrix_csv(path: impl AsRef<Path>, a: &Matrix) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for i in 0..a.rows() {
        w.write_record(a.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
