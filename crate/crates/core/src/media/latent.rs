use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::RealArray;

pub const LATENT_MAGIC: &[u8; 5] = b"ALAT1";
const HEADER_LEN: usize = 5 + 8;

/// Encodes a 2-D array as an `.alat` container.
pub fn latent_to_bytes(latent: &RealArray) -> Result<Vec<u8>> {
    if latent.ndim() != 2 {
        return Err(Error::InvalidShape {
            shape: latent.shape().to_vec(),
            reason: "latent files hold 2-D arrays".into(),
        });
    }
    let mut out = Vec::with_capacity(HEADER_LEN + latent.len() * 8);
    out.extend_from_slice(LATENT_MAGIC);
    for &d in latent.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in latent.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn latent_from_bytes(bytes: &[u8], path: &Path) -> Result<RealArray> {
    if bytes.len() < 5 || &bytes[..5] != LATENT_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "ALAT1",
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let rows = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let expected = (HEADER_LEN + rows * cols * 8) as u64;
    if (bytes.len() as u64) < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len() as u64,
        });
    }
    let data = bytes[HEADER_LEN..expected as usize]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    RealArray::new(vec![rows, cols], data)
}

pub fn write_latent(latent: &RealArray, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, latent_to_bytes(latent)?).map_err(|e| Error::io(path, e))
}

pub fn read_latent(path: impl AsRef<Path>) -> Result<RealArray> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    latent_from_bytes(&bytes, path)
}
