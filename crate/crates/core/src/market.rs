//! Matrix Market (.mtx) reading and writing.
//!
//! Supports the coordinate and array formats with a real field and
//! general/symmetric symmetry. Symmetric storage is expanded to both
//! triangles on read; duplicates are summed. Values are written with
//! Rust's shortest round-trip float formatting, so write-then-read is
//! bit-exact on values.

use crate::error::{Error, Result};
use crate::sparse::CsrOperator;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<CsrOperator> {
    let file = std::fs::File::open(path.as_ref())?;
    let name = path
        .as_ref()
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned());
    let mut op = read_matrix_market(BufReader::new(file))?;
    op.name = name;
    Ok(op)
}

pub fn save_matrix_market(path: impl AsRef<Path>, a: &CsrOperator) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_matrix_market(BufWriter::new(file), a)
}

pub fn read_matrix_market<R: Read>(reader: BufReader<R>) -> Result<CsrOperator> {
    let mut lines = reader.lines().enumerate();

    let first = match lines.next() {
        Some((_, Ok(l))) => l,
        Some((no, Err(e))) => return Err(parse_err(no + 1, &e.to_string())),
        None => return Err(parse_err(1, "empty file")),
    };
    let header: Vec<String> = first.split_whitespace().map(str::to_lowercase).collect();
    if header.len() != 5 || header[0] != "%%matrixmarket" || header[1] != "matrix" {
        return Err(parse_err(1, "expected %%MatrixMarket matrix header"));
    }
    let format = header[2].as_str();
    let field = header[3].as_str();
    let symmetry = header[4].as_str();
    if format != "coordinate" && format != "array" {
        return Err(Error::UnsupportedField(format.to_string()));
    }
    if field != "real" && field != "integer" {
        return Err(Error::UnsupportedField(field.to_string()));
    }
    let symmetric = match symmetry {
        "general" => false,
        "symmetric" => true,
        other => return Err(Error::UnsupportedField(other.to_string())),
    };

    // Skip comments and blank lines up to the size line.
    let mut size_line: Option<(usize, String)> = None;
    for (no, line) in lines.by_ref() {
        let line = line.map_err(|e| parse_err(no + 1, &e.to_string()))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        size_line = Some((no + 1, t.to_string()));
        break;
    }
    let (size_no, size_line) = size_line.ok_or_else(|| parse_err(0, "missing size line"))?;
    let dims: Vec<usize> = size_line
        .split_whitespace()
        .map(|tok| {
            tok.parse::<usize>()
                .map_err(|_| parse_err(size_no, "bad size entry"))
        })
        .collect::<Result<_>>()?;

    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    if format == "coordinate" {
        if dims.len() != 3 {
            return Err(parse_err(
                size_no,
                "coordinate size line needs rows cols nnz",
            ));
        }
        let (rows, cols, nnz) = (dims[0], dims[1], dims[2]);
        if rows != cols {
            return Err(parse_err(size_no, "only square matrices are supported"));
        }
        let mut seen = 0usize;
        for (no, line) in lines {
            let line = line.map_err(|e| parse_err(no + 1, &e.to_string()))?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('%') {
                continue;
            }
            let toks: Vec<&str> = t.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(parse_err(no + 1, "expected `row col value`"));
            }
            let i: usize = toks[0]
                .parse()
                .map_err(|_| parse_err(no + 1, "bad row index"))?;
            let j: usize = toks[1]
                .parse()
                .map_err(|_| parse_err(no + 1, "bad column index"))?;
            let v: f64 = toks[2]
                .parse()
                .map_err(|_| parse_err(no + 1, "bad value"))?;
            if i == 0 || j == 0 || i > rows || j > cols {
                return Err(parse_err(no + 1, "index out of range (1-based)"));
            }
            if symmetric && j > i {
                return Err(parse_err(
                    no + 1,
                    "symmetric file stores the lower triangle",
                ));
            }
            triplets.push((i - 1, j - 1, v));
            if symmetric && i != j {
                triplets.push((j - 1, i - 1, v));
            }
            seen += 1;
        }
        if seen != nnz {
            return Err(parse_err(
                size_no,
                &format!("declared {nnz} entries, found {seen}"),
            ));
        }
        CsrOperator::from_triplets(rows, &triplets)
    } else {
        if dims.len() != 2 {
            return Err(parse_err(size_no, "array size line needs rows cols"));
        }
        let (rows, cols) = (dims[0], dims[1]);
        if rows != cols {
            return Err(parse_err(size_no, "only square matrices are supported"));
        }
        // Column-major dense listing; symmetric files list the lower triangle.
        let mut values = Vec::new();
        for (no, line) in lines {
            let line = line.map_err(|e| parse_err(no + 1, &e.to_string()))?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('%') {
                continue;
            }
            for tok in t.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| parse_err(no + 1, "bad value"))?;
                values.push(v);
            }
        }
        let expected = if symmetric {
            rows * (rows + 1) / 2
        } else {
            rows * cols
        };
        if values.len() != expected {
            return Err(parse_err(
                0,
                &format!("expected {expected} array values, found {}", values.len()),
            ));
        }
        let mut it = values.into_iter();
        if symmetric {
            for j in 0..cols {
                for i in j..rows {
                    let v = it.next().unwrap();
                    if v != 0.0 {
                        triplets.push((i, j, v));
                        if i != j {
                            triplets.push((j, i, v));
                        }
                    }
                }
            }
        } else {
            for j in 0..cols {
                for i in 0..rows {
                    let v = it.next().unwrap();
                    if v != 0.0 {
                        triplets.push((i, j, v));
                    }
                }
            }
        }
        CsrOperator::from_triplets(rows, &triplets)
    }
}

pub fn write_matrix_market<W: Write>(mut w: W, a: &CsrOperator) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.n(), a.n(), a.nnz())?;
    for i in 0..a.n() {
        for (j, v) in a.row(i) {
            writeln!(w, "{} {} {}", i + 1, j + 1, v)?;
        }
    }
    Ok(())
}

fn parse_err(line: usize, msg: &str) -> Error {
    Error::Parse {
        line,
        msg: msg.to_string(),
    }
}
