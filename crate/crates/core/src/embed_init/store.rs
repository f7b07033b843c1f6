//! Flat binary matrix files and their vocabulary sidecars.
//!
//! Layout: three little-endian `u64` words (magic, rows, cols) followed by
//! `rows * cols` little-endian `f64` values in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::Matrix;

/// `b"KGSTMAT1"` read as a little-endian word.
pub const MATRIX_MAGIC: u64 = u64::from_le_bytes(*b"KGSTMAT1");

pub fn save_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + 8 * m.len());
    buf.extend_from_slice(&MATRIX_MAGIC.to_le_bytes());
    buf.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: &Path) -> Result<Matrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::Artifact {
        path: path.to_path_buf(),
        msg,
    };
    if bytes.len() < 24 {
        return Err(bad(format!("{} bytes is too short for a header", bytes.len())));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().expect("8 bytes"));
    if word(0) != MATRIX_MAGIC {
        return Err(bad("wrong magic number".into()));
    }
    let (rows, cols) = (word(1) as usize, word(2) as usize);
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(24))
        .ok_or_else(|| bad(format!("{rows}x{cols} overflows")))?;
    if bytes.len() != expected {
        return Err(bad(format!(
            "{rows}x{cols} matrix needs {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let data = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// One `index<TAB>name` line per row.
pub fn save_sidecar(path: &Path, names: &[String]) -> Result<()> {
    let mut out = Vec::new();
    for (i, n) in names.iter().enumerate() {
        writeln!(out, "{i}\t{n}").expect("write to vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_sidecar(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut names = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let (idx, name) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: "expected index<TAB>name".into(),
        })?;
        if idx.parse::<usize>().ok() != Some(i) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected row index {i}, found `{idx}`"),
            });
        }
        names.push(name.to_owned());
    }
    Ok(names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matrix_round_trip(rows in 0usize..6, cols in 0usize..6, seed in any::<u64>()) {
            let mut rng = crate::numcore::Rng::new(seed);
            let data = (0..rows * cols).map(|_| rng.uniform(-1e6, 1e6)).collect();
            let m = Matrix::from_vec(rows, cols, data).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("m.bin");
            save_matrix(&p, &m).unwrap();
            prop_assert_eq!(load_matrix(&p).unwrap(), m);
        }
    }

    #[test]
    fn header_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        save_matrix(&p, &Matrix::from_rows(&[vec![1.5, -2.0, 0.0]])).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..8], b"KGSTMAT1");
        assert_eq!(bytes[8..16], 1u64.to_le_bytes());
        assert_eq!(bytes[16..24], 3u64.to_le_bytes());
        assert_eq!(bytes[24..32], 1.5f64.to_le_bytes());
        assert_eq!(bytes.len(), 24 + 3 * 8);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        save_matrix(&p, &Matrix::zeros(2, 2)).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(load_matrix(&p), Err(Error::Artifact { .. })));
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("names.tsv");
        let names = vec!["usa".to_string(), "uk".to_string()];
        save_sidecar(&p, &names).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "0\tusa\n1\tuk\n");
        assert_eq!(load_sidecar(&p).unwrap(), names);
    }
}
