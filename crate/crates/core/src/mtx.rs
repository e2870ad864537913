//! Matrix Market I/O: sparse `coordinate` (general or symmetric) and dense
//! `array` storage of real matrices.
//!
//! Values are written with Rust's shortest round-trip formatting, so a
//! write/read cycle reproduces every `f64` bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sparse::{CscMatrix, SymmetricSparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

struct Header {
    layout: Layout,
    symmetry: Symmetry,
    pattern: bool,
}

/// Either storage read back from a file.
#[derive(Debug, Clone)]
pub enum MtxMatrix {
    Sparse(CscMatrix),
    Dense(DMatrix<f64>),
}

impl MtxMatrix {
    pub fn into_csc(self) -> CscMatrix {
        match self {
            MtxMatrix::Sparse(m) => m,
            MtxMatrix::Dense(d) => CscMatrix::from_dense(&d),
        }
    }

    pub fn into_dense(self) -> DMatrix<f64> {
        match self {
            MtxMatrix::Sparse(m) => m.to_dense(),
            MtxMatrix::Dense(d) => d,
        }
    }
}

fn parse_header(line: &str, path: &Path) -> Result<Header> {
    let err = |msg: &str| Error::MatrixMarket { path: path.into(), line: 1, msg: msg.into() };
    let tokens: Vec<String> = line.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(err("missing `%%MatrixMarket matrix` banner"));
    }
    let layout = match tokens[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(err(&format!("unsupported format `{other}`"))),
    };
    let pattern = match tokens[3].as_str() {
        "real" | "integer" | "double" => false,
        "pattern" if layout == Layout::Coordinate => true,
        other => return Err(err(&format!("unsupported field `{other}`"))),
    };
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(err(&format!("unsupported symmetry `{other}`"))),
    };
    Ok(Header { layout, symmetry, pattern })
}

pub fn parse(text: &str, path: &Path) -> Result<MtxMatrix> {
    let mut lines = text.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => parse_header(l, path)?,
        None => return Err(Error::MatrixMarket { path: path.into(), line: 1, msg: "empty file".into() }),
    };
    let mut body = lines
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('%'));
    let bad = |line: usize, msg: String| Error::MatrixMarket { path: path.into(), line, msg };
    let num = |line: usize, tok: Option<&str>| -> Result<f64> {
        let tok = tok.ok_or_else(|| bad(line, "missing value".into()))?;
        tok.parse::<f64>().map_err(|_| bad(line, format!("invalid number `{tok}`")))
    };
    let idx = |line: usize, tok: Option<&str>| -> Result<usize> {
        let tok = tok.ok_or_else(|| bad(line, "missing index".into()))?;
        tok.parse::<usize>().map_err(|_| bad(line, format!("invalid index `{tok}`")))
    };

    let (size_line, size) = body.next().ok_or_else(|| bad(1, "missing size line".into()))?;
    let mut size_tokens = size.split_whitespace();
    let nrows = idx(size_line, size_tokens.next())?;
    let ncols = idx(size_line, size_tokens.next())?;

    match header.layout {
        Layout::Coordinate => {
            let nnz = idx(size_line, size_tokens.next())?;
            let mut triplets = Vec::with_capacity(nnz * 2);
            for _ in 0..nnz {
                let (ln, l) = body.next().ok_or_else(|| bad(size_line, "fewer entries than declared".into()))?;
                let mut t = l.split_whitespace();
                let r = idx(ln, t.next())?;
                let c = idx(ln, t.next())?;
                let v = if header.pattern { 1.0 } else { num(ln, t.next())? };
                if r == 0 || c == 0 || r > nrows || c > ncols {
                    return Err(bad(ln, format!("entry ({r}, {c}) outside {nrows}x{ncols}")));
                }
                triplets.push((r - 1, c - 1, v));
                if header.symmetry == Symmetry::Symmetric && r != c {
                    triplets.push((c - 1, r - 1, v));
                }
            }
            Ok(MtxMatrix::Sparse(CscMatrix::from_triplets(nrows, ncols, &triplets)?))
        }
        Layout::Array => {
            let mut m = DMatrix::zeros(nrows, ncols);
            for c in 0..ncols {
                let start = if header.symmetry == Symmetry::Symmetric { c } else { 0 };
                for r in start..nrows {
                    let (ln, l) = body.next().ok_or_else(|| bad(size_line, "fewer entries than declared".into()))?;
                    let v = num(ln, l.split_whitespace().next())?;
                    m[(r, c)] = v;
                    if header.symmetry == Symmetry::Symmetric {
                        m[(c, r)] = v;
                    }
                }
            }
            Ok(MtxMatrix::Dense(m))
        }
    }
}

pub fn read(path: &Path) -> Result<MtxMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, path)
}

/// Reads a square matrix and enforces symmetry (general files are checked
/// and symmetrized).
pub fn read_symmetric(path: &Path) -> Result<SymmetricSparseMatrix> {
    SymmetricSparseMatrix::new(read(path)?.into_csc())
}

pub fn read_dense(path: &Path) -> Result<DMatrix<f64>> {
    Ok(read(path)?.into_dense())
}

pub fn format_symmetric(m: &SymmetricSparseMatrix) -> String {
    let entries: Vec<_> = m.csc().triplets().filter(|(r, c, _)| r >= c).collect();
    let mut s = String::from("%%MatrixMarket matrix coordinate real symmetric\n");
    let _ = writeln!(s, "{} {} {}", m.n(), m.n(), entries.len());
    for (r, c, v) in entries {
        let _ = writeln!(s, "{} {} {:e}", r + 1, c + 1, v);
    }
    s
}

pub fn format_dense(m: &DMatrix<f64>) -> String {
    let mut s = String::from("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(s, "{} {}", m.nrows(), m.ncols());
    for v in m.iter() {
        let _ = writeln!(s, "{v:e}");
    }
    s
}

pub fn write_symmetric(path: &Path, m: &SymmetricSparseMatrix) -> Result<()> {
    fs::write(path, format_symmetric(m)).map_err(|e| Error::io(path, e))
}

pub fn write_dense(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, format_dense(m)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("test.mtx")
    }

    #[test]
    fn reads_symmetric_coordinate() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n% comment\n3 3 4\n1 1 2.0\n2 1 -1\n2 2 2\n3 3 1e0\n";
        let m = parse(text, p()).unwrap().into_dense();
        assert_eq!(m, DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, 0.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn general_asymmetric_file_is_rejected_as_symmetric() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 2 1.0\n2 1 2.0\n";
        let m = parse(text, p()).unwrap().into_csc();
        assert!(SymmetricSparseMatrix::new(m).is_err());
    }

    #[test]
    fn malformed_inputs_carry_line_numbers() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n";
        match parse(text, p()) {
            Err(Error::MatrixMarket { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse("hello\n", p()).is_err());
        assert!(parse("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n", p()).is_err());
    }

    #[test]
    fn dense_round_trip_is_bitwise() {
        let m = DMatrix::from_fn(4, 3, |i, j| ((i * 7 + j) as f64).sqrt() / 3.0 - 1e-300 * j as f64);
        let back = parse(&format_dense(&m), p()).unwrap().into_dense();
        assert_eq!(m, back);
    }

    #[test]
    fn symmetric_round_trip() {
        let d = DMatrix::from_row_slice(3, 3, &[1.0 / 3.0, 0.1, 0.0, 0.1, 2.0, -7.5, 0.0, -7.5, 1e-17]);
        let s = SymmetricSparseMatrix::from_dense(&d).unwrap();
        let back = SymmetricSparseMatrix::new(parse(&format_symmetric(&s), p()).unwrap().into_csc()).unwrap();
        assert_eq!(s, back);
    }
}
