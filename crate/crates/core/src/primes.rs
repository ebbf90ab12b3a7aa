//! Segmented sieve and the immutable prime table shared by every estimator.

use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

const SEGMENT: usize = 1 << 18;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimeTable {
    limit: u64,
    primes: Vec<u64>,
}

impl PrimeTable {
    /// Wraps an explicit prime list; used when restoring a cached table.
    pub fn from_parts(limit: u64, primes: Vec<u64>) -> Result<Self> {
        if primes.windows(2).any(|w| w[0] >= w[1]) || primes.last().is_some_and(|&p| p > limit) {
            return Err(Error::Domain(
                "prime list not sorted or exceeds limit".into(),
            ));
        }
        Ok(Self { limit, primes })
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn len(&self) -> usize {
        self.primes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primes.is_empty()
    }

    /// π(x) restricted to the table.
    pub fn count_upto(&self, x: f64) -> usize {
        if x < 2.0 {
            return 0;
        }
        let xi = x.floor() as u64;
        self.primes.partition_point(|&p| p <= xi)
    }

    /// Primes in (lo, hi].
    pub fn range(&self, lo: f64, hi: f64) -> &[u64] {
        let a = self.count_upto(lo);
        let b = self.count_upto(hi);
        &self.primes[a..b.max(a)]
    }

    pub fn contains(&self, n: u64) -> bool {
        self.primes.binary_search(&n).is_ok()
    }
}

/// All primes up to `limit`.
pub fn sieve_primes(limit: u64) -> Result<PrimeTable> {
    if limit < 2 {
        return Err(Error::EmptyDomain(format!("sieve limit {limit} < 2")));
    }
    let root = (limit as f64).sqrt() as u64 + 1;
    let small = small_odd_primes(root);
    let mut primes = Vec::with_capacity(estimate_count(limit));
    primes.push(2);

    // Odd-only segments: index i stands for lo + 2i.
    let mut lo = 3u64;
    let mut flags = vec![true; SEGMENT];
    while lo <= limit {
        let span = (((limit - lo) / 2 + 1) as usize).min(SEGMENT);
        let hi = lo + 2 * (span as u64 - 1);
        flags[..span].fill(true);
        for &p in &small {
            if p * p > hi {
                break;
            }
            let mut start = (p * p).max(lo.div_ceil(p) * p);
            if start % 2 == 0 {
                start += p;
            }
            let mut i = ((start - lo) / 2) as usize;
            while i < span {
                flags[i] = false;
                i += p as usize;
            }
        }
        primes.extend(
            flags[..span]
                .iter()
                .enumerate()
                .filter(|(_, &f)| f)
                .map(|(i, _)| lo + 2 * i as u64),
        );
        lo = hi + 2;
    }
    Ok(PrimeTable { limit, primes })
}

fn small_odd_primes(limit: u64) -> Vec<u64> {
    let n = limit as usize + 1;
    let mut comp = vec![false; n];
    let mut out = Vec::new();
    let mut i = 3;
    while i < n {
        if !comp[i] {
            out.push(i as u64);
            let mut j = i * i;
            while j < n {
                comp[j] = true;
                j += 2 * i;
            }
        }
        i += 2;
    }
    out
}

fn estimate_count(limit: u64) -> usize {
    let x = limit as f64;
    if x < 20.0 {
        return 8;
    }
    (1.26 * x / x.ln()) as usize
}

static SHARED: OnceLock<Mutex<Option<Arc<PrimeTable>>>> = OnceLock::new();

/// A process-wide table covering at least `limit`; rebuilt only when a larger one is asked for.
pub fn shared_table(limit: u64) -> Result<Arc<PrimeTable>> {
    let cell = SHARED.get_or_init(|| Mutex::new(None));
    let mut guard = cell.lock().expect("prime cache poisoned");
    if let Some(t) = guard.as_ref() {
        if t.limit >= limit {
            return Ok(Arc::clone(t));
        }
    }
    let t = Arc::new(sieve_primes(limit)?);
    *guard = Some(Arc::clone(&t));
    Ok(t)
}

/// A table restricted to `limit`, sliced from a shared larger one when available.
pub fn table_upto(limit: u64) -> Result<PrimeTable> {
    let t = shared_table(limit)?;
    let n = t.count_upto(limit as f64);
    Ok(PrimeTable {
        limit,
        primes: t.primes[..n].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::is_prime;
    use proptest::prelude::*;

    fn eratosthenes(limit: usize) -> Vec<u64> {
        let mut is = vec![true; limit + 1];
        is[0] = false;
        is[1] = false;
        let mut i = 2;
        while i * i <= limit {
            if is[i] {
                for j in (i * i..=limit).step_by(i) {
                    is[j] = false;
                }
            }
            i += 1;
        }
        (0..=limit).filter(|&k| is[k]).map(|k| k as u64).collect()
    }

    #[test]
    fn tiny_limits() {
        assert_eq!(sieve_primes(10).unwrap().primes(), &[2, 3, 5, 7]);
        assert_eq!(sieve_primes(2).unwrap().primes(), &[2]);
        assert_eq!(sieve_primes(3).unwrap().primes(), &[2, 3]);
        assert!(matches!(sieve_primes(1), Err(Error::EmptyDomain(_))));
    }

    #[test]
    fn million_matches_plain_sieve_and_trial_division() {
        let t = sieve_primes(1_000_000).unwrap();
        assert_eq!(t.len(), 78_498);
        assert_eq!(t.primes(), eratosthenes(1_000_000).as_slice());
        for &p in t.primes().iter().step_by(997) {
            assert!(is_prime(p));
        }
    }

    #[test]
    fn counting_and_ranges() {
        let t = sieve_primes(100).unwrap();
        assert_eq!(t.count_upto(10.5), 4);
        assert_eq!(t.count_upto(1.0), 0);
        assert_eq!(t.range(10.0, 20.0), &[11, 13, 17, 19]);
        assert!(t.contains(97) && !t.contains(91));
    }

    proptest! {
        #[test]
        fn sieve_agrees_with_reference(limit in 2usize..20_000) {
            let t = sieve_primes(limit as u64).unwrap();
            let want = eratosthenes(limit);
            prop_assert_eq!(t.primes(), want.as_slice());
        }
    }
}
