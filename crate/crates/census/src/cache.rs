//! Prime tables on disk: flat little-endian u64 with a digest header.
//!
//! Layout: magic `PTAB0001`, limit, count, 32-byte SHA-256 of the payload, payload.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use euler_twist::primes::{sieve_primes, PrimeTable};
use euler_twist::{Error, Result};
use sha2::{Digest, Sha256};

const MAGIC: &[u8; 8] = b"PTAB0001";
const HEADER: usize = 8 + 8 + 8 + 32;

pub fn table_path(dir: &Path, limit: u64) -> PathBuf {
    dir.join(format!("primes-{limit}.bin"))
}

fn encode(table: &PrimeTable) -> Vec<u8> {
    let mut payload = Vec::with_capacity(table.len() * 8);
    for p in table.primes() {
        payload.extend_from_slice(&p.to_le_bytes());
    }
    let digest = Sha256::digest(&payload);
    let mut out = Vec::with_capacity(HEADER + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&table.limit().to_le_bytes());
    out.extend_from_slice(&(table.len() as u64).to_le_bytes());
    out.extend_from_slice(&digest);
    out.extend_from_slice(&payload);
    out
}

fn decode(bytes: &[u8], limit: u64) -> Option<(PrimeTable, String)> {
    if bytes.len() < HEADER || &bytes[..8] != MAGIC {
        return None;
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
    let (stored, count) = (word(8), word(16) as usize);
    let payload = &bytes[HEADER..];
    if stored != limit || payload.len() != count * 8 {
        return None;
    }
    let digest = Sha256::digest(payload);
    if digest.as_slice() != &bytes[24..56] {
        return None;
    }
    let primes = payload
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let table = PrimeTable::from_parts(limit, primes).ok()?;
    Some((table, hex(&digest)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheState {
    Hit,
    Rebuilt,
    Disabled,
}

/// Loads the table for `limit` from `dir`, sieving and storing it when absent or damaged.
/// Returns the table, the payload digest and whether the cache was used.
pub fn load_or_build(dir: Option<&Path>, limit: u64) -> Result<(PrimeTable, String, CacheState)> {
    let Some(dir) = dir else {
        let t = sieve_primes(limit)?;
        let d = hex(&Sha256::digest(&encode(&t)[HEADER..]));
        return Ok((t, d, CacheState::Disabled));
    };
    let path = table_path(dir, limit);
    if let Ok(bytes) = fs::read(&path) {
        if let Some((t, d)) = decode(&bytes, limit) {
            return Ok((t, d, CacheState::Hit));
        }
    }
    let table = sieve_primes(limit)?;
    let bytes = encode(&table);
    fs::create_dir_all(dir)?;
    // Single writer: write a private temp file, then rename over the target.
    let tmp = dir.join(format!(".primes-{limit}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::Io(e)
    })?;
    let d = hex(&bytes[24..56]);
    Ok((table, d, CacheState::Rebuilt))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let (a, da, s) = load_or_build(Some(dir.path()), 10_000).unwrap();
        assert_eq!(s, CacheState::Rebuilt);
        let (b, db, s) = load_or_build(Some(dir.path()), 10_000).unwrap();
        assert_eq!(s, CacheState::Hit);
        assert_eq!((a.primes(), &da), (b.primes(), &db));
        let path = table_path(dir.path(), 10_000);
        let mut bytes = fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        fs::write(&path, bytes).unwrap();
        let (c, dc, s) = load_or_build(Some(dir.path()), 10_000).unwrap();
        assert_eq!(s, CacheState::Rebuilt);
        assert_eq!((c.primes(), &dc), (a.primes(), &da));
        let (_, _, s) = load_or_build(Some(dir.path()), 20_000).unwrap();
        assert_eq!(s, CacheState::Rebuilt);
        let (_, dd, s) = load_or_build(None, 10_000).unwrap();
        assert_eq!((s, dd), (CacheState::Disabled, da));
    }
}
