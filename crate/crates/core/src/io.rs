//! Matrix file formats: Matrix Market coordinate, CSV, and raw little-endian binary.
//!
//! * Matrix Market: `%%MatrixMarket matrix coordinate real general`, 1-based `i j value`
//!   entries; omitted entries are zero. `integer`/`pattern` fields, `symmetric` storage and
//!   the dense `array` layout are accepted on read.
//! * CSV: first line is `rows,cols`, then one matrix row per line.
//! * Binary: `rows: u64 LE`, `cols: u64 LE`, then `rows·cols` `f64 LE` values row-major.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixFormat {
    MatrixMarket,
    Csv,
    Binary,
}

impl MatrixFormat {
    /// Guesses the format from a file extension (`mtx`, `csv`, `bin`).
    pub fn from_path(path: &Path) -> Option<MatrixFormat> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "mtx" | "mm" => Some(MatrixFormat::MatrixMarket),
            "csv" => Some(MatrixFormat::Csv),
            "bin" | "f64" => Some(MatrixFormat::Binary),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            MatrixFormat::MatrixMarket => "mtx",
            MatrixFormat::Csv => "csv",
            MatrixFormat::Binary => "bin",
        }
    }
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mtx" | "mm" | "matrix-market" | "matrix_market" | "matrixmarket" => {
                Ok(MatrixFormat::MatrixMarket)
            }
            "csv" => Ok(MatrixFormat::Csv),
            "bin" | "binary" | "raw" => Ok(MatrixFormat::Binary),
            other => Err(Error::invalid(format!("unknown matrix format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    /// Reject files containing negative entries (NMF inputs).
    pub require_nonnegative: bool,
}

pub fn read_matrix(path: impl AsRef<Path>, format: MatrixFormat) -> Result<DenseMatrix> {
    read_matrix_with(path, format, ReadOptions::default())
}

pub fn read_matrix_with(
    path: impl AsRef<Path>,
    format: MatrixFormat,
    opts: ReadOptions,
) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let m = match format {
        MatrixFormat::MatrixMarket => read_matrix_market(reader, path)?,
        MatrixFormat::Csv => read_csv(reader, path)?,
        MatrixFormat::Binary => read_binary(reader, path)?,
    };
    if opts.require_nonnegative {
        if let Some(pos) = m.as_slice().iter().position(|v| *v < 0.0) {
            let c = m.cols().max(1);
            return Err(Error::Validation(format!(
                "{}: negative entry {} at ({}, {}) in a nonnegative-required input",
                path.display(),
                m.as_slice()[pos],
                pos / c,
                pos % c
            )));
        }
    }
    Ok(m)
}

pub fn write_matrix(m: &DenseMatrix, path: impl AsRef<Path>, format: MatrixFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = match format {
        MatrixFormat::MatrixMarket => write_matrix_market(m, &mut w),
        MatrixFormat::Csv => write_csv(m, &mut w),
        MatrixFormat::Binary => write_binary(m, &mut w),
    };
    res.and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        location: location.into(),
        message: message.into(),
    }
}

fn parse_f64(tok: &str, path: &Path, line: usize) -> Result<f64> {
    let v: f64 = tok
        .trim()
        .parse()
        .map_err(|_| parse_err(path, format!("line {line}"), format!("invalid number '{tok}'")))?;
    if !v.is_finite() {
        return Err(parse_err(
            path,
            format!("line {line}"),
            format!("non-finite value '{tok}'"),
        ));
    }
    Ok(v)
}

fn parse_usize(tok: &str, path: &Path, line: usize) -> Result<usize> {
    tok.trim()
        .parse()
        .map_err(|_| parse_err(path, format!("line {line}"), format!("invalid count '{tok}'")))
}

#[derive(PartialEq)]
enum MmField {
    Real,
    Pattern,
}

fn read_matrix_market<R: BufRead>(reader: R, path: &Path) -> Result<DenseMatrix> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, "line 1", "empty file"))?;
    let header = header.map_err(|e| Error::io(path, e))?;
    let tokens: Vec<String> = header
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(
            path,
            "line 1",
            "expected '%%MatrixMarket matrix <layout> <field> <symmetry>'",
        ));
    }
    let coordinate = match tokens[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(parse_err(path, "line 1", format!("unsupported layout '{other}'"))),
    };
    let field = match tokens[3].as_str() {
        "real" | "double" | "integer" => MmField::Real,
        "pattern" if coordinate => MmField::Pattern,
        other => return Err(parse_err(path, "line 1", format!("unsupported field '{other}'"))),
    };
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => {
            return Err(parse_err(
                path,
                "line 1",
                format!("unsupported symmetry '{other}'"),
            ))
        }
    };

    let mut body = lines.filter_map(|(idx, l)| match l {
        Ok(s) => {
            let t = s.trim();
            if t.is_empty() || t.starts_with('%') {
                None
            } else {
                Some(Ok((idx + 1, t.to_string())))
            }
        }
        Err(e) => Some(Err(Error::io(path, e))),
    });

    let (size_line, size) = body
        .next()
        .ok_or_else(|| parse_err(path, "end of file", "missing size line"))??;
    let dims: Vec<&str> = size.split_whitespace().collect();
    let expected = if coordinate { 3 } else { 2 };
    if dims.len() != expected {
        return Err(parse_err(
            path,
            format!("line {size_line}"),
            format!("size line needs {expected} integers"),
        ));
    }
    let rows = parse_usize(dims[0], path, size_line)?;
    let cols = parse_usize(dims[1], path, size_line)?;
    let mut m = DenseMatrix::zeros(rows, cols);

    if coordinate {
        let nnz = parse_usize(dims[2], path, size_line)?;
        let mut seen = 0usize;
        for item in body {
            let (ln, line) = item?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            let want = if field == MmField::Pattern { 2 } else { 3 };
            if toks.len() < want {
                return Err(parse_err(
                    path,
                    format!("line {ln}"),
                    format!("expected {want} fields"),
                ));
            }
            let i = parse_usize(toks[0], path, ln)?;
            let j = parse_usize(toks[1], path, ln)?;
            if i == 0 || j == 0 || i > rows || j > cols {
                return Err(parse_err(
                    path,
                    format!("line {ln}"),
                    format!("index ({i}, {j}) outside {rows}x{cols}"),
                ));
            }
            let v = if field == MmField::Pattern {
                1.0
            } else {
                parse_f64(toks[2], path, ln)?
            };
            let cur = m.get(i - 1, j - 1);
            m.set(i - 1, j - 1, cur + v);
            if symmetric && i != j {
                let cur = m.get(j - 1, i - 1);
                m.set(j - 1, i - 1, cur + v);
            }
            seen += 1;
        }
        if seen != nnz {
            return Err(parse_err(
                path,
                "end of file",
                format!("header declares {nnz} entries, found {seen}"),
            ));
        }
    } else {
        // dense array layout is column-major
        let mut k = 0usize;
        for item in body {
            let (ln, line) = item?;
            for tok in line.split_whitespace() {
                if k >= rows * cols {
                    return Err(parse_err(path, format!("line {ln}"), "too many values"));
                }
                let (i, j) = (k % rows, k / rows);
                m.set(i, j, parse_f64(tok, path, ln)?);
                k += 1;
            }
        }
        if k != rows * cols {
            return Err(parse_err(
                path,
                "end of file",
                format!("expected {} values, found {k}", rows * cols),
            ));
        }
    }
    Ok(m)
}

fn write_matrix_market<W: Write>(m: &DenseMatrix, w: &mut W) -> std::io::Result<()> {
    let nnz = m.as_slice().iter().filter(|v| **v != 0.0).count();
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", m.rows(), m.cols(), nnz)?;
    for i in 0..m.rows() {
        for (j, v) in m.row(i).iter().enumerate() {
            if *v != 0.0 {
                writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
            }
        }
    }
    Ok(())
}

fn read_csv<R: BufRead>(reader: R, path: &Path) -> Result<DenseMatrix> {
    let mut lines = reader
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|s| (i + 1, s)).map_err(|e| Error::io(path, e)))
        .filter(|r| !matches!(r, Ok((_, s)) if s.trim().is_empty()));
    let (hl, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, "line 1", "empty file"))??;
    let dims: Vec<&str> = header.split(',').collect();
    if dims.len() != 2 {
        return Err(parse_err(path, format!("line {hl}"), "header must be 'rows,cols'"));
    }
    let rows = parse_usize(dims[0], path, hl)?;
    let cols = parse_usize(dims[1], path, hl)?;
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen_rows = 0usize;
    for item in lines {
        let (ln, line) = item?;
        if seen_rows == rows {
            return Err(parse_err(path, format!("line {ln}"), "more rows than declared"));
        }
        let before = data.len();
        for tok in line.split(',') {
            data.push(parse_f64(tok, path, ln)?);
        }
        if data.len() - before != cols {
            return Err(parse_err(
                path,
                format!("line {ln}"),
                format!("expected {cols} values, found {}", data.len() - before),
            ));
        }
        seen_rows += 1;
    }
    if seen_rows != rows {
        return Err(parse_err(
            path,
            "end of file",
            format!("declared {rows} rows, found {seen_rows}"),
        ));
    }
    DenseMatrix::from_vec(rows, cols, data)
}

fn write_csv<W: Write>(m: &DenseMatrix, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{},{}", m.rows(), m.cols())?;
    for i in 0..m.rows() {
        let mut first = true;
        for v in m.row(i) {
            if !first {
                w.write_all(b",")?;
            }
            // shortest representation that round-trips exactly
            write!(w, "{v:?}")?;
            first = false;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn read_binary<R: Read>(mut reader: R, path: &Path) -> Result<DenseMatrix> {
    let mut header = [0u8; 16];
    reader
        .read_exact(&mut header)
        .map_err(|_| parse_err(path, "offset 0", "truncated 16-byte header"))?;
    let rows = u64::from_le_bytes(header[..8].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(header[8..].try_into().unwrap()) as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| parse_err(path, "offset 0", "dimension overflow"))?;
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() != count * 8 {
        return Err(parse_err(
            path,
            format!("offset {}", 16 + bytes.len().min(count * 8)),
            format!(
                "payload has {} bytes, {rows}x{cols} needs {}",
                bytes.len(),
                count * 8
            ),
        ));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(k) = data.iter().position(|v| !v.is_finite()) {
        return Err(parse_err(
            path,
            format!("offset {}", 16 + 8 * k),
            "non-finite value",
        ));
    }
    DenseMatrix::from_vec(rows, cols, data)
}

fn write_binary<W: Write>(m: &DenseMatrix, w: &mut W) -> std::io::Result<()> {
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for v in m.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Resolves an explicit format or falls back to the file extension.
pub fn resolve_format(path: &Path, explicit: Option<MatrixFormat>) -> Result<MatrixFormat> {
    explicit
        .or_else(|| MatrixFormat::from_path(path))
        .ok_or_else(|| {
            Error::invalid(format!(
                "cannot infer matrix format of {}; pass --format",
                path.display()
            ))
        })
}

/// `dir/stem.ext` for the given format.
pub fn matrix_path(dir: &Path, stem: &str, format: MatrixFormat) -> PathBuf {
    dir.join(format!("{stem}.{}", format.extension()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn p() -> PathBuf {
        PathBuf::from("mem")
    }

    #[test]
    fn mm_omitted_entries_are_zero() {
        let text = "%%MatrixMarket matrix coordinate real general\n% comment\n3 2 2\n1 1 1.5\n3 2 -2\n";
        let m = read_matrix_market(Cursor::new(text), &p()).unwrap();
        assert_eq!(m, DenseMatrix::from_rows(&[&[1.5, 0.0], &[0.0, 0.0], &[0.0, -2.0]]));
    }

    #[test]
    fn mm_reports_line_numbers() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 x 1.0\n";
        let err = read_matrix_market(Cursor::new(text), &p()).unwrap_err();
        match err {
            Error::Parse { location, .. } => assert_eq!(location, "line 3"),
            e => panic!("unexpected {e}"),
        }
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n";
        assert!(read_matrix_market(Cursor::new(text), &p()).is_err());
    }

    #[test]
    fn mm_symmetric_and_array() {
        let sym = "%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 1\n2 1 3\n";
        let m = read_matrix_market(Cursor::new(sym), &p()).unwrap();
        assert_eq!(m, DenseMatrix::from_rows(&[&[1.0, 3.0], &[3.0, 0.0]]));
        let arr = "%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n";
        let m = read_matrix_market(Cursor::new(arr), &p()).unwrap();
        assert_eq!(m, DenseMatrix::from_rows(&[&[1.0, 3.0], &[2.0, 4.0]]));
    }

    #[test]
    fn csv_errors() {
        assert!(read_csv(Cursor::new("2,2\n1,2\n3\n"), &p()).is_err());
        assert!(read_csv(Cursor::new("2,2\n1,2\n"), &p()).is_err());
        assert!(read_csv(Cursor::new("1,2\n1,nan\n"), &p()).is_err());
        let m = read_csv(Cursor::new("1,2\n1,2.5\n"), &p()).unwrap();
        assert_eq!(m.as_slice(), &[1.0, 2.5]);
    }

    #[test]
    fn binary_truncation_reports_offset() {
        let mut buf = Vec::new();
        write_binary(&DenseMatrix::identity(2), &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        let err = read_binary(Cursor::new(buf), &p()).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(read_binary(Cursor::new(vec![0u8; 5]), &p()).is_err());
    }

    #[test]
    fn format_names() {
        assert_eq!("csv".parse::<MatrixFormat>().unwrap(), MatrixFormat::Csv);
        assert_eq!(
            MatrixFormat::from_path(Path::new("a/b.mtx")),
            Some(MatrixFormat::MatrixMarket)
        );
        assert!("xlsx".parse::<MatrixFormat>().is_err());
    }
}
