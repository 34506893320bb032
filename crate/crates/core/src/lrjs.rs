//! The LRJS binary matrix format.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "LRJS"
//! 4       2     version (u16 LE, currently 1)
//! 6       1     dtype (0 = real64, 1 = complex128 interleaved re/im)
//! 7       8     rows (u64 LE)
//! 15      8     cols (u64 LE)
//! 23      ...   row-major little-endian f64 payload
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{check_finite_complex, check_finite_real, ComplexMatrix, RealMatrix};

pub const MAGIC: [u8; 4] = *b"LRJS";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 23;

const DTYPE_REAL: u8 = 0;
const DTYPE_COMPLEX: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Matrix {
    Real(RealMatrix),
    Complex(ComplexMatrix),
}

impl Matrix {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Matrix::Real(m) => m.shape(),
            Matrix::Complex(m) => m.shape(),
        }
    }

    pub fn into_real(self) -> Result<RealMatrix> {
        match self {
            Matrix::Real(m) => Ok(m),
            Matrix::Complex(_) => Err(Error::InvalidArgument("expected a real64 LRJS matrix".into())),
        }
    }

    pub fn into_complex(self) -> Result<ComplexMatrix> {
        match self {
            Matrix::Complex(m) => Ok(m),
            Matrix::Real(_) => Err(Error::InvalidArgument(
                "expected a complex128 LRJS matrix".into(),
            )),
        }
    }
}

impl From<RealMatrix> for Matrix {
    fn from(m: RealMatrix) -> Self {
        Matrix::Real(m)
    }
}

impl From<ComplexMatrix> for Matrix {
    fn from(m: ComplexMatrix) -> Self {
        Matrix::Complex(m)
    }
}

pub fn encode(m: &Matrix) -> Result<Vec<u8>> {
    let (rows, cols) = m.shape();
    let (dtype, width) = match m {
        Matrix::Real(x) => {
            check_finite_real(x)?;
            (DTYPE_REAL, 8)
        }
        Matrix::Complex(x) => {
            check_finite_complex(x)?;
            (DTYPE_COMPLEX, 16)
        }
    };
    let mut buf = Vec::with_capacity(HEADER_LEN + rows * cols * width);
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(dtype);
    buf.extend_from_slice(&(rows as u64).to_le_bytes());
    buf.extend_from_slice(&(cols as u64).to_le_bytes());
    for r in 0..rows {
        for c in 0..cols {
            match m {
                Matrix::Real(x) => buf.extend_from_slice(&x[(r, c)].to_le_bytes()),
                Matrix::Complex(x) => {
                    buf.extend_from_slice(&x[(r, c)].re.to_le_bytes());
                    buf.extend_from_slice(&x[(r, c)].im.to_le_bytes());
                }
            }
        }
    }
    Ok(buf)
}

pub fn decode(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < 4 {
        let mut found = [0u8; 4];
        found[..bytes.len()].copy_from_slice(bytes);
        return Err(Error::BadMagic(found));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dtype = bytes[6];
    let rows = u64::from_le_bytes(bytes[7..15].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[15..23].try_into().unwrap());
    let width: u64 = match dtype {
        DTYPE_REAL => 8,
        DTYPE_COMPLEX => 16,
        other => return Err(Error::UnknownDtype(other)),
    };
    let payload = &bytes[HEADER_LEN..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(width))
        .ok_or_else(|| Error::InvalidArgument(format!("header dimensions {rows}x{cols} overflow")))?;
    if payload.len() as u64 != expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len() as u64,
        });
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let f = |i: usize| f64::from_le_bytes(payload[8 * i..8 * i + 8].try_into().unwrap());
    let m = match dtype {
        DTYPE_REAL => {
            let x = RealMatrix::from_fn(rows, cols, |r, c| f(r * cols + c));
            check_finite_real(&x)?;
            Matrix::Real(x)
        }
        _ => {
            let x = ComplexMatrix::from_fn(rows, cols, |r, c| {
                let i = 2 * (r * cols + c);
                Complex64::new(f(i), f(i + 1))
            });
            check_finite_complex(&x)?;
            Matrix::Complex(x)
        }
    };
    Ok(m)
}

pub fn write_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let bytes = encode(m)?;
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    file.flush()?;
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

/// Convenience wrapper: read a file that must hold a real matrix.
pub fn read_real(path: impl AsRef<Path>) -> Result<RealMatrix> {
    read_matrix(path)?.into_real()
}

pub fn read_complex(path: impl AsRef<Path>) -> Result<ComplexMatrix> {
    read_matrix(path)?.into_complex()
}
