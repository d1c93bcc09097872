//! Matrix file formats.
//!
//! CSV carries a header row and values printed with 17 significant
//! digits, so a write/read round trip reproduces every f64 exactly. The
//! binary container is two little-endian u64 (rows, cols) followed by
//! row-major little-endian f64 payload; it exists for large matrices
//! where CSV is wasteful.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::{CliError, CliResult};

/// Matrix serialization format selected by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Binary,
}

impl MatrixFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MatrixFormat::Csv => "csv",
            MatrixFormat::Binary => "bin",
        }
    }
}

fn open_err(path: &Path, err: std::io::Error) -> CliError {
    CliError::Validation(format!("{}: {err}", path.display()))
}

fn write_err(path: &Path, err: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {err}", path.display()))
}

/// Write a matrix as CSV with the given column header.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>, header: &[String]) -> CliResult<()> {
    if header.len() != m.ncols() {
        return Err(CliError::Runtime(format!(
            "{}: header has {} names for {} columns",
            path.display(),
            header.len(),
            m.ncols()
        )));
    }
    let file = File::create(path).map_err(|e| write_err(path, e))?;
    let mut out = BufWriter::new(file);
    let mut line = header.join(",");
    line.push('\n');
    out.write_all(line.as_bytes()).map_err(|e| write_err(path, e))?;
    for i in 0..m.nrows() {
        let mut row = String::new();
        for j in 0..m.ncols() {
            if j > 0 {
                row.push(',');
            }
            // 17 significant digits: lossless for f64.
            row.push_str(&format!("{:.16e}", m[(i, j)]));
        }
        row.push('\n');
        out.write_all(row.as_bytes()).map_err(|e| write_err(path, e))?;
    }
    out.flush().map_err(|e| write_err(path, e))
}

/// Read a CSV matrix; returns the values and the header names. Parse
/// failures carry the 1-based line number.
pub fn read_matrix_csv(path: &Path) -> CliResult<(DMatrix<f64>, Vec<String>)> {
    let file = File::open(path).map_err(|e| open_err(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();
    let header: Vec<String> = match lines.next() {
        Some((_, Ok(line))) => line.split(',').map(|s| s.trim().to_string()).collect(),
        Some((_, Err(e))) => return Err(open_err(path, e)),
        None => {
            return Err(CliError::Validation(format!(
                "{}: empty file",
                path.display()
            )))
        }
    };
    let ncols = header.len();
    let mut values: Vec<f64> = Vec::new();
    let mut nrows = 0usize;
    for (idx, line) in lines {
        let line = line.map_err(|e| open_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != ncols {
            return Err(CliError::Validation(format!(
                "{}:{}: expected {} fields, found {}",
                path.display(),
                idx + 1,
                ncols,
                fields.len()
            )));
        }
        for field in fields {
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::Validation(format!(
                    "{}:{}: cannot parse '{}' as a number",
                    path.display(),
                    idx + 1,
                    field.trim()
                ))
            })?;
            values.push(v);
        }
        nrows += 1;
    }
    if nrows == 0 {
        return Err(CliError::Validation(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok((DMatrix::from_row_slice(nrows, ncols, &values), header))
}

/// Write the binary container: rows, cols as little-endian u64 then the
/// row-major little-endian f64 payload.
pub fn write_matrix_binary(path: &Path, m: &DMatrix<f64>) -> CliResult<()> {
    let file = File::create(path).map_err(|e| write_err(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(&(m.nrows() as u64).to_le_bytes())
        .map_err(|e| write_err(path, e))?;
    out.write_all(&(m.ncols() as u64).to_le_bytes())
        .map_err(|e| write_err(path, e))?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.write_all(&m[(i, j)].to_le_bytes())
                .map_err(|e| write_err(path, e))?;
        }
    }
    out.flush().map_err(|e| write_err(path, e))
}

/// Read the binary container written by [`write_matrix_binary`].
pub fn read_matrix_binary(path: &Path) -> CliResult<DMatrix<f64>> {
    let file = File::open(path).map_err(|e| open_err(path, e))?;
    let mut input = BufReader::new(file);
    let mut word = [0u8; 8];
    input.read_exact(&mut word).map_err(|e| open_err(path, e))?;
    let rows = u64::from_le_bytes(word) as usize;
    input.read_exact(&mut word).map_err(|e| open_err(path, e))?;
    let cols = u64::from_le_bytes(word) as usize;
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            input.read_exact(&mut word).map_err(|e| open_err(path, e))?;
            m[(i, j)] = f64::from_le_bytes(word);
        }
    }
    Ok(m)
}

/// Write a matrix in the requested format, appending the extension.
pub fn write_matrix(
    dir: &Path,
    stem: &str,
    m: &DMatrix<f64>,
    header: &[String],
    format: MatrixFormat,
) -> CliResult<std::path::PathBuf> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    match format {
        MatrixFormat::Csv => write_matrix_csv(&path, m, header)?,
        MatrixFormat::Binary => write_matrix_binary(&path, m)?,
    }
    Ok(path)
}

/// Read a matrix stored by [`write_matrix`], trying CSV then binary.
pub fn read_matrix_auto(dir: &Path, stem: &str) -> CliResult<DMatrix<f64>> {
    let csv = dir.join(format!("{stem}.csv"));
    if csv.exists() {
        return Ok(read_matrix_csv(&csv)?.0);
    }
    let bin = dir.join(format!("{stem}.bin"));
    if bin.exists() {
        return read_matrix_binary(&bin);
    }
    Err(CliError::Validation(format!(
        "missing matrix file: {} (or .bin)",
        csv.display()
    )))
}

/// Column headers c1..cN with the given prefix.
pub fn default_header(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// Boolean holdout mask as a 0/1 CSV.
pub fn write_mask_csv(path: &Path, mask: &nalgebra::DMatrix<bool>) -> CliResult<()> {
    let as_f64 = DMatrix::from_fn(mask.nrows(), mask.ncols(), |i, j| {
        if mask[(i, j)] {
            1.0
        } else {
            0.0
        }
    });
    write_matrix_csv(path, &as_f64, &default_header("m", mask.ncols()))
}

/// Read a 0/1 CSV as a boolean mask.
pub fn read_mask_csv(path: &Path) -> CliResult<nalgebra::DMatrix<bool>> {
    let (m, _) = read_matrix_csv(path)?;
    for (idx, v) in m.iter().enumerate() {
        if *v != 0.0 && *v != 1.0 {
            return Err(CliError::Validation(format!(
                "{}: mask entry {idx} is {v}, expected 0 or 1",
                path.display()
            )));
        }
    }
    Ok(DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] == 1.0))
}

/// Serialize a JSON document with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| write_err(path, e))
}
