//! Matrix files.
//!
//! Text: a header line `rows cols`, then one whitespace-separated row per line.
//! Binary: two little-endian `u64` dimensions (rows, cols) followed by row-major
//! little-endian `f64` values.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;

use crate::error::{CdsError, Result};

pub fn read_text_matrix<R: BufRead>(reader: R) -> Result<DMatrix<f64>> {
    let mut lines = reader
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));

    let (hline, header) = match lines.next() {
        Some((n, l)) => (n, l?),
        None => {
            return Err(CdsError::Parse {
                line: 1,
                message: "missing `rows cols` header".into(),
            })
        }
    };
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| CdsError::Parse {
            line: hline,
            message: format!("bad header: {e}"),
        })?;
    let [rows, cols] = dims[..] else {
        return Err(CdsError::Parse {
            line: hline,
            message: format!("header needs two integers, found {}", dims.len()),
        });
    };

    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (lineno, line) in lines {
        let line = line?;
        if seen == rows {
            return Err(CdsError::Parse {
                line: lineno,
                message: format!("more than {rows} data rows"),
            });
        }
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| CdsError::Parse {
                line: lineno,
                message: format!("not a number: `{tok}`"),
            })?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(CdsError::Parse {
                line: lineno,
                message: format!("expected {cols} values, found {}", data.len() - before),
            });
        }
        seen += 1;
    }
    if seen != rows {
        return Err(CdsError::Parse {
            line: hline,
            message: format!("header declares {rows} rows, found {seen}"),
        });
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn write_text_matrix<W: Write>(mut w: W, m: &DMatrix<f64>) -> Result<()> {
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

pub fn read_binary_matrix<R: Read>(mut r: R) -> Result<DMatrix<f64>> {
    let header = |e: std::io::Error| CdsError::Parse {
        line: 0,
        message: format!("truncated dimension header: {e}"),
    };
    let rows = r.read_u64::<LittleEndian>().map_err(header)? as usize;
    let cols = r.read_u64::<LittleEndian>().map_err(header)? as usize;
    let count = rows.checked_mul(cols).ok_or_else(|| CdsError::Parse {
        line: 0,
        message: "dimension overflow".into(),
    })?;
    let mut data = vec![0.0; count];
    r.read_f64_into::<LittleEndian>(&mut data)
        .map_err(|_| CdsError::DimensionMismatch {
            expected: format!("{count} values for {rows}x{cols}"),
            found: "fewer values".into(),
        })?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(CdsError::DimensionMismatch {
            expected: format!("{count} values for {rows}x{cols}"),
            found: format!("{} trailing bytes", rest.len()),
        });
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn write_binary_matrix<W: Write>(mut w: W, m: &DMatrix<f64>) -> Result<()> {
    w.write_u64::<LittleEndian>(m.nrows() as u64)?;
    w.write_u64::<LittleEndian>(m.ncols() as u64)?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_f64::<LittleEndian>(m[(i, j)])?;
        }
    }
    Ok(())
}

/// Reads a matrix, choosing the binary reader for `.bin` files and the text reader otherwise.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let file = File::open(path)?;
    if is_binary(path) {
        read_binary_matrix(BufReader::new(file))
    } else {
        read_text_matrix(BufReader::new(file))
    }
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    if is_binary(path) {
        write_binary_matrix(&mut w, m)?;
    } else {
        write_text_matrix(&mut w, m)?;
    }
    w.flush()?;
    Ok(())
}

/// Whitespace-separated nonnegative integers, e.g. class labels.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    parse_labels(&std::fs::read_to_string(path)?)
}

pub fn parse_labels(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        for tok in line.split_whitespace() {
            out.push(tok.parse().map_err(|_| CdsError::Parse {
                line: i + 1,
                message: format!("not a label: `{tok}`"),
            })?);
        }
    }
    Ok(out)
}

/// Parses a comma-separated index list such as `1,4,7`. Empty input gives an empty list.
pub fn parse_index_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse().map_err(|_| CdsError::Parse {
                line: 1,
                message: format!("not an index: `{t}`"),
            })
        })
        .collect()
}

fn is_binary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bin")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -2.5, 3.0, 0.0, 1e-300, 7.25]);
        let mut buf = Vec::new();
        write_text_matrix(&mut buf, &m).unwrap();
        assert_eq!(read_text_matrix(&buf[..]).unwrap(), m);
    }

    #[test]
    fn binary_round_trip() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, f64::MIN_POSITIVE]);
        let mut buf = Vec::new();
        write_binary_matrix(&mut buf, &m).unwrap();
        assert_eq!(buf.len(), 16 + 6 * 8);
        assert_eq!(&buf[..8], &3u64.to_le_bytes());
        assert_eq!(&buf[16..24], &1.0f64.to_le_bytes());
        assert_eq!(&buf[24..32], &2.0f64.to_le_bytes());
        assert_eq!(read_binary_matrix(&buf[..]).unwrap(), m);
    }

    #[test]
    fn text_rejects_dimension_mismatch() {
        let err = read_text_matrix("2 2\n1 2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, CdsError::Parse { line: 3, .. }), "{err}");
        assert!(read_text_matrix("3 1\n1\n2\n".as_bytes()).is_err());
        assert!(read_text_matrix("1 1\n1\n2\n".as_bytes()).is_err());
        assert!(read_text_matrix("1 1\nx\n".as_bytes()).is_err());
        assert!(read_text_matrix("".as_bytes()).is_err());
    }

    #[test]
    fn binary_rejects_dimension_mismatch() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let mut buf = Vec::new();
        write_binary_matrix(&mut buf, &m).unwrap();
        assert!(read_binary_matrix(&buf[..buf.len() - 8]).is_err());
        let mut longer = buf.clone();
        longer.extend_from_slice(&0.0f64.to_le_bytes());
        assert!(read_binary_matrix(&longer[..]).is_err());
        assert!(read_binary_matrix(&buf[..4]).is_err());
    }

    #[test]
    fn file_dispatch_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_row_slice(1, 2, &[0.5, 0.25]);
        for name in ["m.txt", "m.bin"] {
            let p = dir.path().join(name);
            write_matrix(&p, &m).unwrap();
            assert_eq!(read_matrix(&p).unwrap(), m);
        }
    }

    #[test]
    fn index_and_label_lists() {
        assert_eq!(parse_index_list("1, 4,7").unwrap(), vec![1, 4, 7]);
        assert!(parse_index_list("").unwrap().is_empty());
        assert!(parse_index_list("1,a").is_err());
        assert_eq!(parse_labels("0 1\n2\n").unwrap(), vec![0, 1, 2]);
    }
}
