//! Reader and writer for 2-D float arrays in the NPY container.
//!
//! Only little-endian `<f4` / `<f8` payloads in C order are accepted; `f4`
//! values are widened to `f64` on load.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

const MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

struct Header {
    dtype: Dtype,
    fortran_order: bool,
    shape: Vec<usize>,
}

pub fn load_npy(path: &Path) -> Result<Matrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_npy(&bytes)
}

pub fn parse_npy(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(Error::Format("missing NPY magic sequence".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (header_len, header_start) = match major {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(Error::Format("truncated NPY preamble".into()));
            }
            let len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]);
            (len as usize, 12)
        }
        _ => {
            return Err(Error::Format(format!(
                "unsupported NPY version {major}.{minor}"
            )))
        }
    };
    let payload_start = header_start + header_len;
    if bytes.len() < payload_start {
        return Err(Error::Format("truncated NPY header".into()));
    }
    let header_text = std::str::from_utf8(&bytes[header_start..payload_start])
        .map_err(|_| Error::Format("NPY header is not valid text".into()))?;
    let header = parse_header(header_text)?;

    if header.fortran_order {
        return Err(Error::UnsupportedLayout(
            "fortran_order=True arrays are not supported".into(),
        ));
    }
    let [rows, cols] = header.shape[..] else {
        return Err(Error::Shape(format!(
            "expected a 2-D array, header declares {} dimensions",
            header.shape.len()
        )));
    };

    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("NPY shape overflows".into()))?;
    let width = header.dtype.width();
    let payload = &bytes[payload_start..];
    if payload.len() != count * width {
        return Err(Error::Format(format!(
            "payload holds {} bytes, shape ({rows}, {cols}) needs {}",
            payload.len(),
            count * width
        )));
    }
    let data: Vec<f64> = match header.dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
    };
    Matrix::from_vec(rows, cols, data)
}

/// Parses the Python-literal header dict, e.g.
/// `{'descr': '<f4', 'fortran_order': False, 'shape': (2, 3), }`.
fn parse_header(text: &str) -> Result<Header> {
    let body = text
        .trim()
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .ok_or_else(|| Error::Format(format!("malformed NPY header {text:?}")))?;

    let mut dtype = None;
    let mut fortran_order = None;
    let mut shape = None;
    let mut rest = body.trim();
    while !rest.is_empty() {
        let (key, after_key) = take_quoted(rest)?;
        let after_colon = after_key
            .trim_start()
            .strip_prefix(':')
            .ok_or_else(|| Error::Format(format!("expected ':' after key {key:?}")))?
            .trim_start();
        let remaining = match key {
            "descr" => {
                let (descr, r) = take_quoted(after_colon)?;
                dtype = Some(match descr {
                    "<f4" => Dtype::F32,
                    "<f8" => Dtype::F64,
                    other => {
                        return Err(Error::Format(format!(
                            "unsupported dtype {other:?}, expected '<f4' or '<f8'"
                        )))
                    }
                });
                r
            }
            "fortran_order" => {
                if let Some(r) = after_colon.strip_prefix("False") {
                    fortran_order = Some(false);
                    r
                } else if let Some(r) = after_colon.strip_prefix("True") {
                    fortran_order = Some(true);
                    r
                } else {
                    return Err(Error::Format("fortran_order must be True or False".into()));
                }
            }
            "shape" => {
                let inner = after_colon
                    .strip_prefix('(')
                    .ok_or_else(|| Error::Format("shape must be a tuple".into()))?;
                let close = inner
                    .find(')')
                    .ok_or_else(|| Error::Format("unterminated shape tuple".into()))?;
                let dims = inner[..close]
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<usize>()
                            .map_err(|_| Error::Format(format!("bad shape entry {s:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                shape = Some(dims);
                &inner[close + 1..]
            }
            other => return Err(Error::Format(format!("unexpected header key {other:?}"))),
        };
        rest = remaining.trim_start();
        rest = rest.strip_prefix(',').unwrap_or(rest).trim_start();
    }

    match (dtype, fortran_order, shape) {
        (Some(dtype), Some(fortran_order), Some(shape)) => Ok(Header {
            dtype,
            fortran_order,
            shape,
        }),
        _ => Err(Error::Format(
            "NPY header must declare descr, fortran_order and shape".into(),
        )),
    }
}

fn take_quoted(s: &str) -> Result<(&str, &str)> {
    let quote = s
        .chars()
        .next()
        .filter(|c| *c == '\'' || *c == '"')
        .ok_or_else(|| Error::Format(format!("expected quoted string at {s:?}")))?;
    let body = &s[1..];
    let end = body
        .find(quote)
        .ok_or_else(|| Error::Format("unterminated string in NPY header".into()))?;
    Ok((&body[..end], &body[end + 1..]))
}

/// Writes `matrix` as a version 1.0 `<f8` C-order NPY file.
pub fn write_npy(path: &Path, matrix: &Matrix) -> Result<()> {
    let mut header = format!(
        "{{'descr': '<f8', 'fortran_order': False, 'shape': ({}, {}), }}",
        matrix.rows(),
        matrix.cols()
    );
    // preamble + header + '\n' must be a multiple of 64 bytes
    let unpadded = MAGIC.len() + 2 + 2 + header.len() + 1;
    header.push_str(&" ".repeat((64 - unpadded % 64) % 64));
    header.push('\n');

    let mut out = Vec::with_capacity(10 + header.len() + matrix.as_slice().len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in matrix.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }

    crate::write_atomic(path, &out)
}
