//! Binary and text file formats.
//!
//! All binary formats are a four-byte magic, little-endian `u32` header
//! fields and a little-endian `f32` payload:
//!
//! | magic  | header           | payload                       |
//! |--------|------------------|-------------------------------|
//! | `DBF1` | `p q r s t`      | `p*s` values in `[D,r,s,t]`   |
//! | `DBMT` | `rows cols`      | row-major matrix              |
//! | `DBT3` | `c h w`          | channel-major tensor          |
//!
//! Values are stored as `f32`, so writing rounds and reading widens.

use std::fs;
use std::path::{Path, PathBuf};

use crate::chain::{format_chain, parse_chain, ChainSpec};
use crate::conv::Tensor3;
use crate::dense::DenseMatrix;
use crate::error::{DebutError, Result};
use crate::factor::{DebutFactor, FactorShape};
use crate::kernels::DebutChain;

pub const FACTOR_MAGIC: &[u8; 4] = b"DBF1";
pub const MATRIX_MAGIC: &[u8; 4] = b"DBMT";
pub const TENSOR_MAGIC: &[u8; 4] = b"DBT3";

/// Name of the chain description inside a fitted-chain directory.
pub const CHAIN_FILE_NAME: &str = "chain.txt";

fn encode(magic: &[u8; 4], header: &[usize], values: &[f64]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(4 + 4 * (header.len() + values.len()));
    out.extend_from_slice(magic);
    for &h in header {
        let h = u32::try_from(h).map_err(|_| DebutError::Format(format!("header value {h} exceeds u32")))?;
        out.extend_from_slice(&h.to_le_bytes());
    }
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

/// Splits a buffer into its header fields and widened payload, checking the
/// magic and that the payload holds exactly `payload_len(header)` values.
fn decode(
    bytes: &[u8],
    magic: &[u8; 4],
    header_len: usize,
    payload_len: impl Fn(&[usize]) -> Option<usize>,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let name = String::from_utf8_lossy(magic);
    if bytes.len() < 4 || &bytes[..4] != magic {
        return Err(DebutError::Format(format!("missing {name} magic")));
    }
    let body = &bytes[4..];
    if body.len() < 4 * header_len {
        return Err(DebutError::Format(format!("truncated {name} header")));
    }
    let word = |i: usize| u32::from_le_bytes(body[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    let header: Vec<usize> = (0..header_len).map(|i| word(i) as usize).collect();
    let n = payload_len(&header).ok_or_else(|| DebutError::Format(format!("{name} header overflows")))?;
    let payload = &body[4 * header_len..];
    if payload.len() != 4 * n {
        return Err(DebutError::Format(format!(
            "{name} payload has {} bytes, expected {}",
            payload.len(),
            4 * n
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok((header, values))
}

pub fn encode_factor(f: &DebutFactor) -> Result<Vec<u8>> {
    let FactorShape { p, q, r, s, t } = f.shape();
    encode(FACTOR_MAGIC, &[p, q, r, s, t], f.values())
}

pub fn decode_factor(bytes: &[u8]) -> Result<DebutFactor> {
    let (h, values) = decode(bytes, FACTOR_MAGIC, 5, |h| h[0].checked_mul(h[3]))?;
    let shape = FactorShape::new(h[0], h[1], h[2], h[3], h[4])?;
    DebutFactor::from_values(shape, values)
}

pub fn encode_matrix(m: &DenseMatrix) -> Result<Vec<u8>> {
    encode(MATRIX_MAGIC, &[m.rows(), m.cols()], m.data())
}

pub fn decode_matrix(bytes: &[u8]) -> Result<DenseMatrix> {
    let (h, values) = decode(bytes, MATRIX_MAGIC, 2, |h| h[0].checked_mul(h[1]))?;
    DenseMatrix::from_vec(h[0], h[1], values)
}

pub fn encode_tensor(x: &Tensor3) -> Result<Vec<u8>> {
    let (c, h, w) = x.dims();
    encode(TENSOR_MAGIC, &[c, h, w], x.data())
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor3> {
    let (h, values) = decode(bytes, TENSOR_MAGIC, 3, |h| h[0].checked_mul(h[1])?.checked_mul(h[2]))?;
    Tensor3::from_vec(h[0], h[1], h[2], values)
}

pub fn write_factor(path: impl AsRef<Path>, f: &DebutFactor) -> Result<()> {
    Ok(fs::write(path, encode_factor(f)?)?)
}

pub fn read_factor(path: impl AsRef<Path>) -> Result<DebutFactor> {
    decode_factor(&fs::read(path)?)
}

pub fn write_matrix(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    Ok(fs::write(path, encode_matrix(m)?)?)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    decode_matrix(&fs::read(path)?)
}

pub fn write_tensor(path: impl AsRef<Path>, x: &Tensor3) -> Result<()> {
    Ok(fs::write(path, encode_tensor(x)?)?)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor3> {
    decode_tensor(&fs::read(path)?)
}

/// Comma-separated rows, no header. Values use the shortest round-trip
/// representation.
pub fn matrix_to_csv(m: &DenseMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<DenseMatrix> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for tok in line.split(',') {
            let v: f64 = tok.trim().parse().map_err(|_| DebutError::Parse {
                line: n + 1,
                message: format!("not a number: {:?}", tok.trim()),
            })?;
            data.push(v);
        }
        let width = data.len() - before;
        if *cols.get_or_insert(width) != width {
            return Err(DebutError::Parse {
                line: n + 1,
                message: format!("row has {width} values, expected {}", cols.unwrap_or(0)),
            });
        }
        rows += 1;
    }
    DenseMatrix::from_vec(rows, cols.unwrap_or(0), data)
}

/// Reads a matrix, detecting the binary format by its magic and falling back
/// to CSV.
pub fn read_matrix_any(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(MATRIX_MAGIC) {
        return decode_matrix(&bytes);
    }
    let text = String::from_utf8(bytes).map_err(|_| DebutError::Format("matrix file is neither DBMT nor UTF-8 CSV".into()))?;
    matrix_from_csv(&text)
}

pub fn read_chain_file(path: impl AsRef<Path>) -> Result<ChainSpec> {
    parse_chain(&fs::read_to_string(path)?)
}

/// File name of factor `idx` (0 = rightmost) in a fitted-chain directory.
pub fn factor_file_name(idx: usize) -> String {
    format!("factor_{:02}.dbf1", idx + 1)
}

/// Writes `chain.txt` plus one DBF1 file per factor, numbered from the
/// rightmost factor at 1.
pub fn write_chain_dir(dir: impl AsRef<Path>, c: &DebutChain) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CHAIN_FILE_NAME), format!("{}\n", format_chain(&c.spec())))?;
    let mut written = Vec::with_capacity(c.len());
    for (idx, f) in c.factors().iter().enumerate() {
        let path = dir.join(factor_file_name(idx));
        write_factor(&path, f)?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_chain_dir(dir: impl AsRef<Path>) -> Result<DebutChain> {
    let dir = dir.as_ref();
    let spec = read_chain_file(dir.join(CHAIN_FILE_NAME))?;
    let mut factors = Vec::with_capacity(spec.len());
    for (idx, shape) in spec.factors().iter().enumerate() {
        let f = read_factor(dir.join(factor_file_name(idx)))?;
        if f.shape() != *shape {
            return Err(DebutError::ShapeMismatch(format!(
                "{} holds {} but the chain expects {}",
                factor_file_name(idx),
                f.shape(),
                shape
            )));
        }
        factors.push(f);
    }
    DebutChain::new(factors)
}

/// `half_sweep,relative_error` lines with a header.
pub fn error_history_csv(history: &[f64]) -> String {
    let mut out = String::from("half_sweep,relative_error\n");
    for (i, e) in history.iter().enumerate() {
        out.push_str(&format!("{},{e}\n", i + 1));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::InitScheme;

    fn butterfly() -> DebutChain {
        let spec = parse_chain("16 <-(2,2,8)- 16 <-(2,2,4)- 16 <-(2,2,2)- 16 <-(2,2,1)- 16").unwrap();
        DebutChain::random(&spec, InitScheme::Bipolar, 3)
    }

    #[test]
    fn factor_bytes_layout() {
        let f = DebutFactor::new(2, 2, 2, 2, 1, Some(vec![1.0, -2.0, 0.5, 4.0])).unwrap();
        let bytes = encode_factor(&f).unwrap();
        assert_eq!(&bytes[..4], b"DBF1");
        assert_eq!(bytes.len(), 4 + 20 + 16);
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        assert_eq!(&bytes[20..24], &1u32.to_le_bytes());
        assert_eq!(&bytes[28..32], &(-2.0f32).to_le_bytes());
        assert_eq!(decode_factor(&bytes).unwrap(), f);
    }

    #[test]
    fn decode_rejects_bad_input() {
        let f = DebutFactor::zeros(FactorShape::new(4, 4, 2, 2, 1).unwrap());
        let mut bytes = encode_factor(&f).unwrap();
        assert!(matches!(decode_matrix(&bytes), Err(DebutError::Format(_))));
        bytes.pop();
        assert!(matches!(decode_factor(&bytes), Err(DebutError::Format(_))));
        assert!(matches!(decode_factor(b"DBF1\x01"), Err(DebutError::Format(_))));
        let mut bad_shape = encode(FACTOR_MAGIC, &[6, 6, 2, 2, 2], &[0.0; 12]).unwrap();
        assert!(matches!(decode_factor(&bad_shape), Err(DebutError::Shape(_))));
        bad_shape.clear();
        assert!(decode_factor(&bad_shape).is_err());
    }

    #[test]
    fn matrix_and_tensor_round_trip() {
        let m = DenseMatrix::from_fn(3, 5, |i, j| (i as f64) - 0.25 * j as f64);
        assert_eq!(decode_matrix(&encode_matrix(&m).unwrap()).unwrap(), m);
        let x = Tensor3::from_vec(2, 1, 3, vec![1.0, 2.0, 3.0, -1.0, 0.0, 0.5]).unwrap();
        assert_eq!(decode_tensor(&encode_tensor(&x).unwrap()).unwrap(), x);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let m = DenseMatrix::from_fn(2, 3, |i, j| 0.1 * (i * 3 + j) as f64 - 1.0 / 3.0);
        assert_eq!(matrix_from_csv(&matrix_to_csv(&m)).unwrap(), m);
        assert!(matches!(matrix_from_csv("1,2\n3\n"), Err(DebutError::Parse { line: 2, .. })));
        assert!(matches!(matrix_from_csv("1,x\n"), Err(DebutError::Parse { line: 1, .. })));
    }

    #[test]
    fn chain_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = butterfly();
        let files = write_chain_dir(dir.path(), &c).unwrap();
        assert_eq!(files.len(), 4);
        assert!(files[0].ends_with("factor_01.dbf1"));
        assert_eq!(read_chain_dir(dir.path()).unwrap(), c);
        assert_eq!(
            read_chain_file(dir.path().join(CHAIN_FILE_NAME)).unwrap(),
            c.spec()
        );

        fs::write(dir.path().join(CHAIN_FILE_NAME), "16 <-(4,4,1)- 16").unwrap();
        assert!(matches!(read_chain_dir(dir.path()), Err(DebutError::ShapeMismatch(_))));
    }

    #[test]
    fn any_matrix_reader() {
        let dir = tempfile::tempdir().unwrap();
        let m = DenseMatrix::from_fn(2, 2, |i, j| (i + 2 * j) as f64);
        write_matrix(dir.path().join("m.bin"), &m).unwrap();
        fs::write(dir.path().join("m.csv"), matrix_to_csv(&m)).unwrap();
        assert_eq!(read_matrix_any(dir.path().join("m.bin")).unwrap(), m);
        assert_eq!(read_matrix_any(dir.path().join("m.csv")).unwrap(), m);
    }

    #[test]
    fn history_csv() {
        assert_eq!(error_history_csv(&[0.5, 0.25]), "half_sweep,relative_error\n1,0.5\n2,0.25\n");
    }
}
