//! Binary feature cache.
//!
//! Layout: magic "CSFM" | version u32 LE | n_frames u32 LE | n_bins u32 LE |
//! reserved u64 | row-major float32 LE payload. The 24-byte header makes a
//! frames x bins matrix occupy exactly `24 + frames * bins * 4` bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

const MAGIC: &[u8; 4] = b"CSFM";
const VERSION: u32 = 1;

/// Write a feature matrix to `path` in the cache format.
pub fn cache_write(fm: &FeatureMatrix, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(fm.n_frames as u32).to_le_bytes())?;
    w.write_all(&(fm.n_bins as u32).to_le_bytes())?;
    w.write_all(&0u64.to_le_bytes())?;
    for &v in &fm.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a feature matrix from the cache format; the round trip is bit-exact.
pub fn cache_read(path: &Path) -> Result<FeatureMatrix> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 24];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format(format!("{}: truncated header", path.display())))?;
    if &header[0..4] != MAGIC {
        return Err(Error::Format(format!("{}: bad magic number", path.display())));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!(
            "{}: cache version {version}, expected {VERSION}",
            path.display()
        )));
    }
    let n_frames = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let n_bins = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;

    let mut payload = vec![0u8; n_frames * n_bins * 4];
    r.read_exact(&mut payload)
        .map_err(|_| Error::Format(format!("{}: truncated payload", path.display())))?;
    let values = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(FeatureMatrix { values, n_frames, n_bins })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csfm");
        let fm = FeatureMatrix {
            values: (0..64).map(|i| (i as f32).sin() * 17.25).collect(),
            n_frames: 8,
            n_bins: 8,
        };
        cache_write(&fm, &path).unwrap();
        let back = cache_read(&path).unwrap();
        assert_eq!(back, fm);
    }

    #[test]
    fn file_size_arithmetic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csfm");
        let fm = FeatureMatrix::new(938, 128);
        cache_write(&fm, &path).unwrap();
        let size = std::fs::metadata(&path).unwrap().len();
        assert_eq!(size, 24 + 938 * 128 * 4);
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csfm");
        let fm = FeatureMatrix::new(4, 4);
        cache_write(&fm, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(cache_read(&path), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csfm");
        let fm = FeatureMatrix::new(2, 2);
        cache_write(&fm, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(cache_read(&path), Err(Error::Format(_))));
    }
}
