//! Content hashing and the optional on-disk cache for Gram matrices.
//!
//! Cache files live under the directory named by `SLABRES_CACHE_DIR`; when
//! the variable is unset the cache is purely in-memory.

use nalgebra::DMatrix;
use std::io::{Read, Write};
use std::path::PathBuf;

/// FNV-1a 64-bit hasher; deterministic across platforms and runs.
pub struct Fnv(u64);

impl Fnv {
    pub fn new() -> Self {
        Fnv(0xcbf29ce484222325)
    }

    pub fn write_bytes(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }

    pub fn write_u64(&mut self, v: u64) {
        self.write_bytes(&v.to_le_bytes());
    }

    pub fn write_f64(&mut self, v: f64) {
        self.write_u64(v.to_bits());
    }

    pub fn write_str(&mut self, s: &str) {
        self.write_bytes(s.as_bytes());
        self.write_bytes(&[0xff]);
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv {
    fn default() -> Self {
        Self::new()
    }
}

pub const CACHE_ENV: &str = "SLABRES_CACHE_DIR";

fn cache_path(hash: u64) -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).map(|dir| PathBuf::from(dir).join(format!("s0-{hash:016x}.bin")))
}

const MAGIC: &[u8; 8] = b"SLABGRM1";

/// Try to load a cached matrix for this content hash.
pub fn load_matrix(hash: u64) -> Option<DMatrix<f64>> {
    let path = cache_path(hash)?;
    let mut file = std::fs::File::open(path).ok()?;
    let mut header = [0u8; 24];
    file.read_exact(&mut header).ok()?;
    if &header[0..8] != MAGIC {
        return None;
    }
    let rows = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
    if rows.checked_mul(cols).map(|n| n * 8)? > 1 << 32 {
        return None;
    }
    let mut data = vec![0u8; rows * cols * 8];
    file.read_exact(&mut data).ok()?;
    let values: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Some(DMatrix::from_column_slice(rows, cols, &values))
}

/// Persist a matrix under this content hash (best effort).
pub fn store_matrix(hash: u64, m: &DMatrix<f64>) {
    let Some(path) = cache_path(hash) else {
        return;
    };
    if let Some(dir) = path.parent() {
        let _ = std::fs::create_dir_all(dir);
    }
    let write = || -> std::io::Result<()> {
        let mut file = std::fs::File::create(&path)?;
        file.write_all(MAGIC)?;
        file.write_all(&(m.nrows() as u64).to_le_bytes())?;
        file.write_all(&(m.ncols() as u64).to_le_bytes())?;
        for v in m.as_slice() {
            file.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    };
    let _ = write();
}
