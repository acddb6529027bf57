//! Matrix and table file formats.
//!
//! Dense matrices are stored either as CSV (one row per line) or in a
//! little-endian binary layout: a 16-byte header (`b"MSLB"`, `u32` n,
//! `u32` flags, 4 reserved zero bytes) followed by `n²` `f64` values in
//! row-major order. Sparse symmetric matrices use Matrix Market coordinate
//! files. Floats are written in Rust's shortest round-trip form.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use mslbm_core::linalg::SymMatrix;

use crate::error::{CliError, CliResult};

pub const BINARY_MAGIC: &[u8; 4] = b"MSLB";
pub const BINARY_HEADER_LEN: usize = 16;
/// Header flag: the stored matrix is symmetric.
pub const FLAG_SYMMETRIC: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixFormat {
    DenseCsv,
    DenseBinary,
    MatrixMarket,
}

impl MatrixFormat {
    /// Guesses from the extension: `.csv`, `.bin` or `.mtx`.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(MatrixFormat::DenseCsv),
            "bin" => Some(MatrixFormat::DenseBinary),
            "mtx" => Some(MatrixFormat::MatrixMarket),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            MatrixFormat::DenseCsv => "csv",
            MatrixFormat::DenseBinary => "bin",
            MatrixFormat::MatrixMarket => "mtx",
        }
    }
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn csv_reader(path: &Path) -> CliResult<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(open(path)?))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let location = e.position().map_or("unknown position".to_string(), |p| format!("line {}", p.line()));
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        kind => CliError::parse(path, location, format!("{kind:?}")),
    }
}

/// Reads the records of a headerless CSV file together with their line numbers.
fn read_records(path: &Path) -> CliResult<Vec<(u64, csv::StringRecord)>> {
    let mut reader = csv_reader(path)?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec));
    }
    Ok(out)
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: u64, field: &str, what: &str) -> CliResult<T> {
    field
        .parse()
        .map_err(|_| CliError::parse(path, format!("line {line}"), format!("invalid {what} {field:?}")))
}

/// A rectangular dense matrix, one row per line.
pub fn read_dense_csv(path: &Path) -> CliResult<DMatrix<f64>> {
    let records = read_records(path)?;
    let ncols = records.first().map_or(0, |r| r.1.len());
    let mut values = Vec::with_capacity(records.len() * ncols);
    for (line, rec) in &records {
        for field in rec {
            values.push(parse_field::<f64>(path, *line, field, "number")?);
        }
    }
    Ok(DMatrix::from_row_slice(records.len(), ncols, &values))
}

pub fn write_dense_csv(path: &Path, m: &DMatrix<f64>) -> CliResult<()> {
    let mut w = create(path)?;
    let mut line = String::new();
    for i in 0..m.nrows() {
        line.clear();
        for j in 0..m.ncols() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&fmt_f64(m[(i, j)]));
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(|e| CliError::io(path, e))?;
    }
    finish(w, path)
}

pub fn write_binary(path: &Path, m: &DMatrix<f64>, flags: u32) -> CliResult<()> {
    if !m.is_square() {
        return Err(CliError::Config(format!("binary format stores square matrices, got {}x{}", m.nrows(), m.ncols())));
    }
    let n = u32::try_from(m.nrows()).map_err(|_| CliError::Config("matrix too large for binary format".into()))?;
    let mut w = create(path)?;
    let mut buf = Vec::with_capacity(BINARY_HEADER_LEN + 8 * m.len());
    buf.extend_from_slice(BINARY_MAGIC);
    buf.extend_from_slice(&n.to_le_bytes());
    buf.extend_from_slice(&flags.to_le_bytes());
    buf.extend_from_slice(&[0u8; 4]);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(|e| CliError::io(path, e))?;
    finish(w, path)
}

/// Returns the matrix and its header flags.
pub fn read_binary(path: &Path) -> CliResult<(DMatrix<f64>, u32)> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes).map_err(|e| CliError::io(path, e))?;
    if bytes.len() < BINARY_HEADER_LEN {
        return Err(CliError::parse(path, format!("byte {}", bytes.len()), "truncated header"));
    }
    if &bytes[0..4] != BINARY_MAGIC {
        return Err(CliError::parse(path, "byte 0", "bad magic, expected \"MSLB\""));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let n = word(4) as usize;
    let flags = word(8);
    let expected = BINARY_HEADER_LEN + 8 * n * n;
    if bytes.len() != expected {
        return Err(CliError::parse(
            path,
            format!("byte {}", bytes.len().min(expected)),
            format!("header declares n = {n} ({expected} bytes), file has {} bytes", bytes.len()),
        ));
    }
    let values: Vec<f64> = bytes[BINARY_HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((DMatrix::from_row_slice(n, n, &values), flags))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmField {
    Real,
    Integer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmSymmetry {
    General,
    Symmetric,
}

/// Contents of a Matrix Market coordinate file, with 0-based indices.
#[derive(Debug, Clone, PartialEq)]
pub struct MmCoordinate {
    pub nrows: usize,
    pub ncols: usize,
    pub field: MmField,
    pub symmetry: MmSymmetry,
    pub entries: Vec<(usize, usize, f64)>,
}

impl MmCoordinate {
    /// Dense symmetric expansion; each stored entry is mirrored. In a
    /// symmetric file either triangle may be given, but not both.
    pub fn to_sym(&self, path: &Path) -> CliResult<SymMatrix> {
        if self.nrows != self.ncols {
            return Err(CliError::parse(path, "line 1", "matrix is not square"));
        }
        let n = self.nrows;
        let mut m = DMatrix::zeros(n, n);
        let mut seen = DMatrix::from_element(n, n, false);
        for &(i, j, v) in &self.entries {
            if seen[(i, j)] {
                return Err(CliError::parse(path, "data", format!("entry ({}, {}) given twice", i + 1, j + 1)));
            }
            seen[(i, j)] = true;
            m[(i, j)] = v;
            if self.symmetry == MmSymmetry::Symmetric {
                seen[(j, i)] = true;
                m[(j, i)] = v;
            }
        }
        SymMatrix::new(m).map_err(|e| CliError::parse(path, "data", e.to_string()))
    }
}

pub fn read_matrix_market(path: &Path) -> CliResult<MmCoordinate> {
    let reader = BufReader::new(open(path)?);
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let at = |line: usize| format!("line {line}");

    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::parse(path, "line 1", "empty file"))?;
    let header = header.map_err(|e| CliError::io(path, e))?;
    let words: Vec<String> = header.split_whitespace().map(|w| w.to_ascii_lowercase()).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" || words[2] != "coordinate" {
        return Err(CliError::parse(path, "line 1", "expected \"%%MatrixMarket matrix coordinate <field> <symmetry>\""));
    }
    let field = match words[3].as_str() {
        "real" => MmField::Real,
        "integer" => MmField::Integer,
        other => return Err(CliError::parse(path, "line 1", format!("unsupported field {other:?}"))),
    };
    let symmetry = match words[4].as_str() {
        "general" => MmSymmetry::General,
        "symmetric" => MmSymmetry::Symmetric,
        other => return Err(CliError::parse(path, "line 1", format!("unsupported symmetry {other:?}"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut entries = Vec::new();
    for (line_no, line) in lines {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let Some((nrows, ncols, nnz)) = size else {
            if parts.len() != 3 {
                return Err(CliError::parse(path, at(line_no), "expected \"rows cols entries\""));
            }
            let p = |s: &str| parse_field::<usize>(path, line_no as u64, s, "size");
            size = Some((p(parts[0])?, p(parts[1])?, p(parts[2])?));
            entries.reserve(size.unwrap().2);
            continue;
        };
        if parts.len() != 3 {
            return Err(CliError::parse(path, at(line_no), "expected \"row col value\""));
        }
        let i: usize = parse_field(path, line_no as u64, parts[0], "row index")?;
        let j: usize = parse_field(path, line_no as u64, parts[1], "column index")?;
        if i == 0 || j == 0 || i > nrows || j > ncols {
            return Err(CliError::parse(path, at(line_no), format!("index ({i}, {j}) outside {nrows}x{ncols}")));
        }
        let v = match field {
            MmField::Real => parse_field::<f64>(path, line_no as u64, parts[2], "value")?,
            MmField::Integer => parse_field::<i64>(path, line_no as u64, parts[2], "integer value")? as f64,
        };
        if !v.is_finite() {
            return Err(CliError::parse(path, at(line_no), "non-finite value"));
        }
        if entries.len() == nnz {
            return Err(CliError::parse(path, at(line_no), format!("more than the declared {nnz} entries")));
        }
        entries.push((i - 1, j - 1, v));
    }
    let (nrows, ncols, nnz) = size.ok_or_else(|| CliError::parse(path, "end of file", "missing size line"))?;
    if entries.len() != nnz {
        return Err(CliError::parse(
            path,
            "end of file",
            format!("declared {nnz} entries, found {}", entries.len()),
        ));
    }
    Ok(MmCoordinate {
        nrows,
        ncols,
        field,
        symmetry,
        entries,
    })
}

/// Writes a symmetric `n × n` matrix given by its entries with `i ≤ j`;
/// they are stored in the lower triangle as the format prescribes.
pub fn write_matrix_market(path: &Path, n: usize, upper: &[(usize, usize, f64)]) -> CliResult<()> {
    let mut w = create(path)?;
    let mut text = String::from("%%MatrixMarket matrix coordinate real symmetric\n");
    text.push_str(&format!("{n} {n} {}\n", upper.len()));
    for &(i, j, v) in upper {
        let (r, c) = (i.max(j), i.min(j));
        text.push_str(&format!("{} {} {}\n", r + 1, c + 1, fmt_f64(v)));
    }
    w.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))?;
    finish(w, path)
}

fn upper_nonzeros(m: &SymMatrix) -> Vec<(usize, usize, f64)> {
    let n = m.dim();
    let mut out = Vec::new();
    for j in 0..n {
        for i in 0..=j {
            // keeps -0.0 so the round trip is bitwise
            if m[(i, j)].to_bits() != 0 {
                out.push((i, j, m[(i, j)]));
            }
        }
    }
    out
}

pub fn read_matrix(path: &Path, format: MatrixFormat) -> CliResult<SymMatrix> {
    match format {
        MatrixFormat::DenseCsv => {
            SymMatrix::new(read_dense_csv(path)?).map_err(|e| CliError::parse(path, "data", e.to_string()))
        }
        MatrixFormat::DenseBinary => {
            SymMatrix::new(read_binary(path)?.0).map_err(|e| CliError::parse(path, "data", e.to_string()))
        }
        MatrixFormat::MatrixMarket => read_matrix_market(path)?.to_sym(path),
    }
}

/// [`read_matrix`] with the format taken from the extension.
pub fn read_matrix_auto(path: &Path) -> CliResult<SymMatrix> {
    let format = MatrixFormat::from_path(path).ok_or_else(|| {
        CliError::Config(format!("cannot tell the format of {} (use .csv, .bin or .mtx)", path.display()))
    })?;
    read_matrix(path, format)
}

pub fn write_matrix(path: &Path, m: &SymMatrix, format: MatrixFormat) -> CliResult<()> {
    match format {
        MatrixFormat::DenseCsv => write_dense_csv(path, m.matrix()),
        MatrixFormat::DenseBinary => write_binary(path, m.matrix(), FLAG_SYMMETRIC),
        MatrixFormat::MatrixMarket => write_matrix_market(path, m.dim(), &upper_nonzeros(m)),
    }
}

/// One label per line.
pub fn read_labels(path: &Path) -> CliResult<Vec<usize>> {
    read_records(path)?
        .iter()
        .map(|(line, rec)| {
            if rec.len() != 1 {
                return Err(CliError::parse(path, format!("line {line}"), "expected one label per line"));
            }
            parse_field(path, *line, &rec[0], "label")
        })
        .collect()
}

pub fn write_labels(path: &Path, labels: &[usize]) -> CliResult<()> {
    let mut w = create(path)?;
    let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
    w.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))?;
    finish(w, path)
}

/// One number per line.
pub fn read_column(path: &Path) -> CliResult<Vec<f64>> {
    let m = read_dense_csv(path)?;
    if m.ncols() > 1 {
        return Err(CliError::parse(path, "line 1", "expected a single column"));
    }
    Ok(m.iter().copied().collect())
}

pub fn write_column(path: &Path, values: &[f64]) -> CliResult<()> {
    write_dense_csv(path, &DMatrix::from_column_slice(values.len(), 1, values))
}

/// Vertex pairs `i,j` (0-based).
pub fn read_pairs(path: &Path) -> CliResult<Vec<(usize, usize)>> {
    read_records(path)?
        .iter()
        .map(|(line, rec)| {
            if rec.len() != 2 {
                return Err(CliError::parse(path, format!("line {line}"), "expected \"i,j\""));
            }
            Ok((parse_field(path, *line, &rec[0], "vertex id")?, parse_field(path, *line, &rec[1], "vertex id")?))
        })
        .collect()
}

/// Valued pairs `i,j,value`.
pub fn read_valued_pairs(path: &Path) -> CliResult<Vec<(usize, usize, f64)>> {
    read_records(path)?
        .iter()
        .map(|(line, rec)| {
            if rec.len() != 3 {
                return Err(CliError::parse(path, format!("line {line}"), "expected \"i,j,value\""));
            }
            Ok((
                parse_field(path, *line, &rec[0], "vertex id")?,
                parse_field(path, *line, &rec[1], "vertex id")?,
                parse_field(path, *line, &rec[2], "value")?,
            ))
        })
        .collect()
}

/// Labeled pairs `i,j,label` with label `1`/`0` or `true`/`false`.
pub fn read_labeled_pairs(path: &Path) -> CliResult<Vec<(usize, usize, bool)>> {
    read_records(path)?
        .iter()
        .map(|(line, rec)| {
            if rec.len() != 3 {
                return Err(CliError::parse(path, format!("line {line}"), "expected \"i,j,label\""));
            }
            let label = match &rec[2] {
                "1" | "true" => true,
                "0" | "false" => false,
                other => {
                    return Err(CliError::parse(path, format!("line {line}"), format!("invalid label {other:?}")));
                }
            };
            Ok((parse_field(path, *line, &rec[0], "vertex id")?, parse_field(path, *line, &rec[1], "vertex id")?, label))
        })
        .collect()
}

pub fn write_pairs(path: &Path, pairs: &[(usize, usize)]) -> CliResult<()> {
    let mut w = create(path)?;
    let text: String = pairs.iter().map(|(i, j)| format!("{i},{j}\n")).collect();
    w.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))?;
    finish(w, path)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable report");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(path, format!("line {} column {}", e.line(), e.column()), e.to_string()))
}
