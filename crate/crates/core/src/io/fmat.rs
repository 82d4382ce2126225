//! `FMAT`: magic bytes, u32 LE rows, u32 LE cols, then rows·cols f32 LE
//! values in row-major (time-major) order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const FMAT_MAGIC: &[u8; 4] = b"FMAT";
const HEADER: usize = 12;

pub fn encode_fmat<T: Scalar>(m: &Matrix<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 4 * m.len());
    out.extend_from_slice(FMAT_MAGIC);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for &v in m.as_slice() {
        let v = v.to_f32().unwrap_or(f32::NAN);
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_fmat<T: Scalar>(bytes: &[u8]) -> Result<Matrix<T>> {
    let bad = |reason: String| Error::Format { format: "FMAT", reason };
    if bytes.len() < HEADER {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != FMAT_MAGIC {
        return Err(bad(format!("bad magic {:?}", &bytes[..4])));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| bad(format!("{rows}x{cols} overflows")))?;
    let body = &bytes[HEADER..];
    if body.len() != expected {
        return Err(bad(format!(
            "{rows}x{cols} needs {expected} payload bytes, found {}",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| T::lit(f64::from(f32::from_le_bytes(c.try_into().unwrap()))))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

pub fn read_fmat<T: Scalar>(path: &Path) -> Result<Matrix<T>> {
    decode_fmat(&fs::read(path)?)
}

pub fn write_fmat<T: Scalar>(path: &Path, m: &Matrix<T>) -> Result<()> {
    super::write_atomic(path, &encode_fmat(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_bit_exact() {
        let m = Matrix::from_rows(&[vec![1.0f32, -2.0], vec![0.5, 3.25], vec![0.0, 1e-3]]).unwrap();
        let b = encode_fmat(&m);
        assert_eq!(&b[..4], b"FMAT");
        assert_eq!(&b[4..8], &[3, 0, 0, 0]);
        assert_eq!(&b[8..12], &[2, 0, 0, 0]);
        assert_eq!(&b[12..16], &1.0f32.to_le_bytes());
        assert_eq!(&b[16..20], &(-2.0f32).to_le_bytes());
        assert_eq!(b.len(), 12 + 24);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let m = Matrix::<f32>::zeros(2, 2);
        let mut b = encode_fmat(&m);
        assert!(decode_fmat::<f32>(&b[..b.len() - 1]).is_err());
        b[0] = b'X';
        assert!(decode_fmat::<f32>(&b).is_err());
        assert!(decode_fmat::<f32>(b"FMA").is_err());
    }

    proptest! {
        #[test]
        fn f32_payload_round_trips(rows in 0usize..6, cols in 0usize..6, seed in any::<u64>()) {
            let mut s = seed;
            let m = Matrix::from_fn(rows, cols, |_, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 40) as f32 / 1000.0 - 8000.0
            });
            let back: Matrix<f32> = decode_fmat(&encode_fmat(&m)).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
