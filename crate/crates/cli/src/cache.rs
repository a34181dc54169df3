//! On-disk cache of reduced resolvent sweeps.
//!
//! One file per key: a 16-byte header (magic, format version, first 8 bytes of the
//! payload's SHA-256) followed by little-endian f64 values.

use sha2::{Digest, Sha256};
use std::cell::Cell;
use std::fs;
use std::path::{Path, PathBuf};

const MAGIC: [u8; 4] = *b"SPTC";
const VERSION: u32 = 1;

pub struct Cache {
    dir: Option<PathBuf>,
    hits: Cell<usize>,
    misses: Cell<usize>,
}

/// Hex SHA-256 over length-prefixed parts.
pub fn key(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn f64_bytes(xs: &[f64]) -> Vec<u8> {
    xs.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn payload_tag(payload: &[u8]) -> [u8; 8] {
    let digest = Sha256::digest(payload);
    digest[..8].try_into().expect("digest has 32 bytes")
}

pub fn encode(values: &[f64]) -> Vec<u8> {
    let payload = f64_bytes(values);
    let mut out = Vec::with_capacity(16 + payload.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&payload_tag(&payload));
    out.extend_from_slice(&payload);
    out
}

/// None for anything that is not an intact file of this format.
pub fn decode(bytes: &[u8]) -> Option<Vec<f64>> {
    if bytes.len() < 16 || bytes[..4] != MAGIC || bytes[4..8] != VERSION.to_le_bytes() {
        return None;
    }
    let payload = &bytes[16..];
    if payload.len() % 8 != 0 || bytes[8..16] != payload_tag(payload) {
        return None;
    }
    Some(payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

impl Cache {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Cache { dir, hits: Cell::new(0), misses: Cell::new(0) }
    }

    pub fn disabled() -> Self {
        Self::new(None)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn load(&self, key: &str) -> Option<Vec<f64>> {
        let dir = self.dir.as_ref()?;
        let found = fs::read(dir.join(format!("{key}.bin"))).ok().and_then(|b| decode(&b));
        match found {
            Some(_) => self.hits.set(self.hits.get() + 1),
            None => self.misses.set(self.misses.get() + 1),
        }
        found
    }

    /// Write through a temporary file so readers never see a partial entry.
    pub fn store(&self, key: &str, values: &[f64]) -> std::io::Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!("{key}.tmp"));
        fs::write(&tmp, encode(values))?;
        fs::rename(tmp, dir.join(format!("{key}.bin")))
    }

    pub fn stats(&self) -> (usize, usize) {
        (self.hits.get(), self.misses.get())
    }
}
