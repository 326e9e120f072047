//! `.gpe2` binary field files.
//!
//! Layout, all little-endian:
//!
//! | bytes | content                    |
//! |-------|----------------------------|
//! | 4     | magic `b"GPE2"`            |
//! | 2     | format version (`u16` = 1) |
//! | 4     | `N` (`u32`)                |
//! | 8     | `L` (`f64`)                |
//! | 8     | `omega` (`f64`)            |
//! | 8·N²  | values, row-major `f64`    |

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarField};

pub const MAGIC: &[u8; 4] = b"GPE2";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 8 + 8;

pub fn encode_field(field: &ScalarField) -> Vec<u8> {
    let grid = field.grid();
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * grid.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(grid.points() as u32).to_le_bytes());
    buf.extend_from_slice(&grid.half_width().to_le_bytes());
    buf.extend_from_slice(&grid.omega().to_le_bytes());
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

/// Decodes a field. The header grid is rebuilt with [`Grid2D::relaxed`]
/// since Gaussian-frame files legitimately violate the truncation rule.
pub fn decode_field(bytes: &[u8]) -> std::result::Result<ScalarField, String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("file has {} bytes, header needs {HEADER_LEN}", bytes.len()));
    }
    if &bytes[..4] != MAGIC {
        return Err("bad magic, expected GPE2".into());
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let n = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let half_width = f64::from_le_bytes(bytes[10..18].try_into().unwrap());
    let omega = f64::from_le_bytes(bytes[18..26].try_into().unwrap());
    let grid = Grid2D::relaxed(half_width, n, omega).map_err(|e| e.to_string())?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * grid.len() {
        return Err(format!(
            "payload has {} bytes, expected {} for N = {n}",
            body.len(),
            8 * grid.len()
        ));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ScalarField::from_values(grid, values).map_err(|e| e.to_string())
}

pub fn write_field(path: impl AsRef<Path>, field: &ScalarField) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode_field(field)).map_err(|e| Error::io(path, e))
}

pub fn read_field(path: impl AsRef<Path>) -> Result<ScalarField> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_field(&bytes).map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let grid = Grid2D::new(8.0, 17, 2.25).unwrap();
        let f = ScalarField::from_fn(grid, |x, y| x - 2.0 * y);
        let bytes = encode_field(&f);
        assert_eq!(&bytes[..4], b"GPE2");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..10], &[17, 0, 0, 0]);
        assert_eq!(&bytes[10..18], &8.0f64.to_le_bytes());
        assert_eq!(&bytes[18..26], &2.25f64.to_le_bytes());
        assert_eq!(bytes.len(), 26 + 8 * 17 * 17);
        let k = 26 + 8 * grid.index(3, 4);
        assert_eq!(&bytes[k..k + 8], &f.at(3, 4).to_le_bytes());
    }

    #[test]
    fn rejects_corrupt_input() {
        let grid = Grid2D::new(8.0, 17, 1.0).unwrap();
        let bytes = encode_field(&ScalarField::zeros(grid));
        assert!(decode_field(&bytes[..10]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_field(&bad).unwrap_err().contains("magic"));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(decode_field(&bad).unwrap_err().contains("version"));
        assert!(decode_field(&bytes[..bytes.len() - 8]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid2D::new(8.0, 33, 1.0).unwrap();
        let f = ScalarField::from_fn(grid, |x, y| (x * y).sin());
        let path = dir.path().join("f.gpe2");
        write_field(&path, &f).unwrap();
        assert_eq!(read_field(&path).unwrap(), f);
        assert!(matches!(
            read_field(dir.path().join("missing.gpe2")),
            Err(Error::Io { .. })
        ));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(vals in proptest::collection::vec(-1e300f64..1e300, 16 * 16),
                                   half_width in 0.1f64..100.0, omega in 0.01f64..50.0) {
            let grid = Grid2D::relaxed(half_width, 16, omega).unwrap();
            let f = ScalarField::from_values(grid, vals).unwrap();
            let back = decode_field(&encode_field(&f)).unwrap();
            prop_assert_eq!(back.grid(), f.grid());
            for (a, b) in back.values().iter().zip(f.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
