//! Flat binary parameter checkpoint.
//!
//! Layout: the magic string `CMDF1`, then for each named parameter
//! `name_len: u32 LE`, the UTF-8 name, `rows: u32 LE`, `cols: u32 LE`, and
//! `rows * cols` row-major 64-bit little-endian floats. Parameters are stored
//! and restored in order, so round trips are bit-exact.

use super::Matrix;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 5] = b"CMDF1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected `CMDF1`")]
    BadMagic,
    #[error("truncated checkpoint while reading {what}")]
    Truncated { what: String },
    #[error("parameter name is not valid UTF-8")]
    BadName,
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("parameter `{name}` has shape {rows}x{cols}, expected {want_rows}x{want_cols}")]
    ShapeMismatch { name: String, rows: usize, cols: usize, want_rows: usize, want_cols: usize },
    #[error("checkpoint metadata: {0}")]
    BadMeta(String),
}

pub fn save_params(path: &Path, params: &[(String, Matrix)]) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    for (name, m) in params {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(m.nrows() as u32).to_le_bytes())?;
        w.write_all(&(m.ncols() as u32).to_le_bytes())?;
        for v in m.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<Vec<(String, Matrix)>, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(|_| CheckpointError::BadMagic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut out = Vec::new();
    loop {
        let mut lenbuf = [0u8; 4];
        match r.read_exact(&mut lenbuf) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let name_len = u32::from_le_bytes(lenbuf) as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)
            .map_err(|_| CheckpointError::Truncated { what: "parameter name".into() })?;
        let name = String::from_utf8(name_bytes).map_err(|_| CheckpointError::BadName)?;
        let mut dim = [0u8; 4];
        r.read_exact(&mut dim)
            .map_err(|_| CheckpointError::Truncated { what: format!("`{name}` row count") })?;
        let rows = u32::from_le_bytes(dim) as usize;
        r.read_exact(&mut dim)
            .map_err(|_| CheckpointError::Truncated { what: format!("`{name}` column count") })?;
        let cols = u32::from_le_bytes(dim) as usize;
        let mut data = Vec::with_capacity(rows * cols);
        let mut fbuf = [0u8; 8];
        for _ in 0..rows * cols {
            r.read_exact(&mut fbuf).map_err(|_| CheckpointError::Truncated {
                what: format!("`{name}` data ({rows}x{cols})"),
            })?;
            data.push(f64::from_le_bytes(fbuf));
        }
        let m = Matrix::from_shape_vec((rows, cols), data)
            .expect("length matches rows*cols by construction");
        out.push((name, m));
    }
    Ok(out)
}
