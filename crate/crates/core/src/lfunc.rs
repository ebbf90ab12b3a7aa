//! Dirichlet L-values, prime zeta sums and character prime sums.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::arith::{gcd, mobius};
use crate::character::DirichletCharacter;
use crate::error::{Error, Result};
use crate::primes::PrimeTable;
use crate::special::{hurwitz_zeta, log_zeta_real, zeta, Bounded};

/// Primes below this are summed explicitly before taking a principal logarithm of the rest.
pub const LOG_HEAD: u64 = 100_000;

pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// p^{-s}.
pub fn prime_power_neg(p: u64, s: Complex64) -> Complex64 {
    (-s * (p as f64).ln()).exp()
}

/// L(s, χ) = q^{-s} Σ_a χ(a) ζ(s, a/q).
pub fn dirichlet_l(chi: &DirichletCharacter, s: Complex64) -> Result<Bounded> {
    let q = chi.modulus();
    if q == 1 {
        return zeta(s);
    }
    let qs = (-s * (q as f64).ln()).exp();
    let mut value = c64(0.0, 0.0);
    let mut err = 0.0;
    for a in 1..q {
        if gcd(a, q) != 1 {
            continue;
        }
        let h = hurwitz_zeta(s, a as f64 / q as f64)?;
        value += chi.value(a) * h.value;
        err += h.err;
    }
    Ok(Bounded {
        value: value * qs,
        err: err * qs.norm(),
    })
}

/// Σ_{p ≤ x} -log(1 − χ(p) p^{-s}).
pub fn log_euler_head(chi: &DirichletCharacter, s: Complex64, primes: &[u64]) -> Complex64 {
    primes
        .par_iter()
        .map(|&p| {
            let c = chi.value(p);
            if c.norm_sqr() == 0.0 {
                c64(0.0, 0.0)
            } else {
                -(c64(1.0, 0.0) - c * prime_power_neg(p, s)).ln()
            }
        })
        .sum()
}

/// log L(s, χ) on the branch continuous from σ → ∞ (the Euler-product logarithm).
pub fn log_dirichlet_l(
    chi: &DirichletCharacter,
    s: Complex64,
    table: &PrimeTable,
) -> Result<Complex64> {
    if s.re <= 1.0 {
        return Err(Error::Domain(format!("Re s = {} ≤ 1", s.re)));
    }
    let l = dirichlet_l(chi, s)?.value;
    if s.re >= 2.0 {
        return Ok(l.ln());
    }
    let head = table.range(0.0, LOG_HEAD.min(table.limit()) as f64);
    let h = log_euler_head(chi, s, head);
    Ok(h + (l * (-h).exp()).ln())
}

/// Below this real part log L is summed over the small primes directly.
const DIRECT_LOG_RE: f64 = 12.0;
const DIRECT_LOG_PRIMES: [u64; 15] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47];

/// log L(w, χ) for Re w ≥ 12 from the primes below 50; the rest is under 2·50^{1−Re w}/(Re w − 1).
pub fn log_l_direct(chi: &DirichletCharacter, w: Complex64) -> Result<Bounded> {
    if w.re < DIRECT_LOG_RE {
        return Err(Error::Domain(format!(
            "direct log L needs Re w ≥ {DIRECT_LOG_RE}, got {}",
            w.re
        )));
    }
    let value = DIRECT_LOG_PRIMES
        .iter()
        .map(|&p| {
            let c = chi.value(p);
            if c.norm_sqr() == 0.0 {
                c64(0.0, 0.0)
            } else {
                -(c64(1.0, 0.0) - c * prime_power_neg(p, w)).ln()
            }
        })
        .sum();
    let err = 2.0 * 50f64.powf(1.0 - w.re) / (w.re - 1.0);
    Ok(Bounded { value, err })
}

/// Σ_p p^{-σ} through Σ_k μ(k)/k · log ζ(kσ).
pub fn prime_zeta(sigma: f64) -> Result<f64> {
    if sigma <= 1.0 {
        return Err(Error::Domain(format!(
            "prime zeta needs σ > 1, got {sigma}"
        )));
    }
    let mut total = 0.0;
    let mut k = 1u64;
    while 2f64.powf(-(k as f64) * sigma) > 1e-19 {
        let mu = mobius(k);
        if mu != 0 {
            total += mu as f64 / k as f64 * log_zeta_real(k as f64 * sigma)?;
        }
        k += 1;
    }
    Ok(total)
}

/// Σ_{p ≤ x} p^{-σ} over the table.
pub fn prime_head_sum(sigma: f64, primes: &[u64]) -> f64 {
    primes.par_iter().map(|&p| (p as f64).powf(-sigma)).sum()
}

/// Σ_{p > x} p^{-σ} for x within the table.
pub fn prime_zeta_tail(sigma: f64, table: &PrimeTable, x: f64) -> Result<f64> {
    if x > table.limit() as f64 {
        return Err(Error::Domain(format!(
            "cut {x} beyond table limit {}",
            table.limit()
        )));
    }
    let head = prime_head_sum(sigma, table.range(0.0, x));
    Ok((prime_zeta(sigma)? - head).max(0.0))
}

/// Σ_p χ(p) p^{-s} through Σ_k μ(k)/k · log L(ks, χ^k).
pub fn prime_character_sum(
    chi: &DirichletCharacter,
    s: Complex64,
    table: &PrimeTable,
) -> Result<Complex64> {
    if s.re <= 1.0 {
        return Err(Error::Domain(format!("Re s = {} ≤ 1", s.re)));
    }
    let mut total = c64(0.0, 0.0);
    let mut k = 1u64;
    while 2f64.powf(-(k as f64) * s.re) > 1e-19 {
        let mu = mobius(k);
        if mu != 0 {
            let ks = s * k as f64;
            let log_l = if k == 1 {
                log_dirichlet_l(chi, ks, table)?
            } else if ks.re >= DIRECT_LOG_RE {
                log_l_direct(&chi.pow(k), ks)?.value
            } else {
                dirichlet_l(&chi.pow(k), ks)?.value.ln()
            };
            total += log_l * (mu as f64 / k as f64);
        }
        k += 1;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::character::character_table;
    use crate::primes::sieve_primes;
    use std::f64::consts::PI;

    #[test]
    fn l_values_mod_four_and_five() {
        // L(2, χ_{-4}) is Catalan's constant.
        let chi = character_table(4)
            .unwrap()
            .into_iter()
            .find(|c| !c.is_principal())
            .unwrap();
        let v = dirichlet_l(&chi, c64(2.0, 0.0)).unwrap();
        assert!((v.value.re - 0.915_965_594_177_219).abs() < 1e-14);
        let t = character_table(5).unwrap();
        let p = dirichlet_l(&t[0], c64(2.0, 0.0)).unwrap().value.re;
        assert!((p - PI * PI / 6.0 * (1.0 - 1.0 / 25.0)).abs() < 1e-14);
    }

    #[test]
    fn prime_zeta_two_against_direct_sum() {
        let table = sieve_primes(1_000_000).unwrap();
        let direct = prime_head_sum(2.0, table.primes());
        let p2 = prime_zeta(2.0).unwrap();
        assert!((p2 - 0.452_247_420_041_065_5).abs() < 1e-14);
        assert!(p2 - direct >= 0.0 && p2 - direct < 1e-6);
    }

    #[test]
    fn character_prime_sum_matches_head_plus_small_tail() {
        let table = sieve_primes(2_000_000).unwrap();
        let chi = &character_table(5).unwrap()[1];
        let s = c64(2.0, 3.0);
        let exact = prime_character_sum(chi, s, &table).unwrap();
        let head: Complex64 = table
            .primes()
            .iter()
            .map(|&p| chi.value(p) * prime_power_neg(p, s))
            .sum();
        assert!((exact - head).norm() < 1e-6);
    }

    #[test]
    fn log_l_is_continuous_in_sigma() {
        let table = sieve_primes(200_000).unwrap();
        let chi = &character_table(5).unwrap()[1];
        let mut prev = log_dirichlet_l(chi, c64(2.0, 40.0), &table).unwrap();
        for i in 1..=40 {
            let s = c64(2.0 - 0.024 * i as f64, 40.0);
            let cur = log_dirichlet_l(chi, s, &table).unwrap();
            assert!((cur - prev).norm() < 0.5, "jump at {s}");
            assert!(((cur.exp() - dirichlet_l(chi, s).unwrap().value) / cur.exp()).norm() < 1e-10);
            prev = cur;
        }
    }

    #[test]
    fn direct_log_matches_hurwitz_route() {
        let chi = &character_table(5).unwrap()[1];
        for w in [c64(12.0, 0.0), c64(13.5, 400.0)] {
            let d = log_l_direct(chi, w).unwrap();
            let h = dirichlet_l(chi, w).unwrap().value.ln();
            assert!((d.value - h).norm() <= d.err + 1e-15);
        }
        assert!(log_l_direct(chi, c64(2.0, 0.0)).is_err());
    }

    #[test]
    fn prime_zeta_against_log_pole() {
        for k in 1..=4 {
            let sigma = 1.0 + 10f64.powi(-k);
            let r = prime_zeta(sigma).unwrap() / -(sigma - 1.0).ln();
            assert!(r > 0.8 && r < 1.3, "{sigma}: {r}");
        }
        assert!(prime_zeta(1.0).is_err());
    }
}
