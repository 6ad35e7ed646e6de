//! Binary cache of sieved count vectors, one file per entry.
//!
//! Entries are keyed by `(N, h, m, convention version, code version)`; the
//! filename is a hash of that key. A sha256 checksum over the whole record
//! guards the payload: any mismatch — checksum, magic, version or key — is
//! a miss, never a silent reuse, and the entry is recomputed. Writes go to
//! a temporary file in the same directory followed by an atomic rename.

use crate::config::hash_hex16;
use primespan_core::sieve::{CountVector, IntervalSpec};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 4] = b"PSC1";

/// Bumped whenever the subinterval convention changes (half-open
/// subintervals, window start at `n - floor(m*h/2)`).
pub const CONVENTION_VERSION: u32 = 1;

fn code_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// A directory of cached count vectors.
#[derive(Debug, Clone)]
pub struct CountCache {
    dir: PathBuf,
}

impl CountCache {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(CountCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_path(&self, spec: &IntervalSpec) -> PathBuf {
        let key = format!(
            "v{}|{}|n={}|h={}|m={}",
            CONVENTION_VERSION,
            code_version(),
            spec.n(),
            spec.h(),
            spec.m()
        );
        self.dir.join(format!("{}.counts", hash_hex16(key.as_bytes())))
    }

    /// Fetches a cached vector; any corruption or key mismatch is a miss.
    pub fn get(&self, spec: &IntervalSpec) -> Option<CountVector> {
        let bytes = std::fs::read(self.entry_path(spec)).ok()?;
        decode(&bytes, spec)
    }

    /// Stores a vector atomically. I/O errors are returned so callers can
    /// degrade to warn-and-continue; the cache is an optimization only.
    pub fn put(&self, counts: &CountVector) -> std::io::Result<()> {
        let final_path = self.entry_path(counts.spec());
        let tmp_path = final_path.with_extension(format!("tmp.{}", std::process::id()));
        let bytes = encode(counts);
        {
            let mut tmp = std::fs::File::create(&tmp_path)?;
            tmp.write_all(&bytes)?;
            tmp.sync_all()?;
        }
        std::fs::rename(&tmp_path, &final_path)
    }
}

fn encode(counts: &CountVector) -> Vec<u8> {
    let spec = counts.spec();
    let version = code_version().as_bytes();
    let mut out = Vec::with_capacity(64 + version.len() + 4 * counts.counts().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CONVENTION_VERSION.to_le_bytes());
    out.extend_from_slice(&(version.len() as u32).to_le_bytes());
    out.extend_from_slice(version);
    out.extend_from_slice(&spec.n().to_le_bytes());
    out.extend_from_slice(&spec.h().to_le_bytes());
    out.extend_from_slice(&spec.m().to_le_bytes());
    out.extend_from_slice(&(counts.counts().len() as u64).to_le_bytes());
    for &c in counts.counts() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        if end > self.buf.len() {
            return None;
        }
        let head = &self.buf[self.pos..end];
        self.pos = end;
        Some(head)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn exhausted(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn decode(bytes: &[u8], want: &IntervalSpec) -> Option<CountVector> {
    if bytes.len() < 32 {
        return None;
    }
    let (body, checksum) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != checksum {
        return None;
    }

    let mut r = Reader { buf: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return None;
    }
    if r.u32()? != CONVENTION_VERSION {
        return None;
    }
    let ver_len = r.u32()? as usize;
    if r.take(ver_len)? != code_version().as_bytes() {
        return None;
    }
    let (n, h, m) = (r.u64()?, r.u64()?, r.u64()?);
    if n != want.n() || h != want.h() || m != want.m() {
        return None;
    }
    let len = r.u64()? as usize;
    if len != m as usize {
        return None;
    }
    let mut counts = Vec::with_capacity(len);
    for _ in 0..len {
        counts.push(r.u32()?);
    }
    if !r.exhausted() {
        return None;
    }
    CountVector::new(*want, counts).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use primespan_core::sieve::subinterval_counts;

    fn sample() -> CountVector {
        let spec = IntervalSpec::new(1_000_000, 100, 50).unwrap();
        subinterval_counts(&spec)
    }

    #[test]
    fn round_trip_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CountCache::open(dir.path()).unwrap();
        let counts = sample();
        assert!(cache.get(counts.spec()).is_none());
        cache.put(&counts).unwrap();
        let back = cache.get(counts.spec()).unwrap();
        assert_eq!(back, counts);
        // The stored record is deterministic.
        assert_eq!(encode(&counts), encode(&back));
    }

    #[test]
    fn corrupted_entries_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CountCache::open(dir.path()).unwrap();
        let counts = sample();
        cache.put(&counts).unwrap();
        let path = cache.entry_path(counts.spec());
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        assert!(cache.get(counts.spec()).is_none());
    }

    #[test]
    fn key_mismatch_misses() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CountCache::open(dir.path()).unwrap();
        let counts = sample();
        cache.put(&counts).unwrap();
        let other = IntervalSpec::new(1_000_000, 100, 49).unwrap();
        assert!(cache.get(&other).is_none());
        // Same key, different convention version: rewrite the field and
        // watch it miss despite a valid checksum.
        let path = cache.entry_path(counts.spec());
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
        let body_len = bytes.len() - 32;
        let digest = Sha256::digest(&bytes[..body_len]);
        bytes[body_len..].copy_from_slice(&digest);
        std::fs::write(&path, &bytes).unwrap();
        assert!(cache.get(counts.spec()).is_none());
    }
}
