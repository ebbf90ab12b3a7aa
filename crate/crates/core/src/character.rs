//! Dirichlet characters with exact values stored as exponents of a root of unity.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::arith::{euler_phi, factorize, gcd, mul_mod, pow_mod, primitive_root_prime_power};
use crate::error::{Error, Result};

/// Marks residues not coprime to the modulus.
const ZERO: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DirichletCharacter {
    modulus: u64,
    /// Index within `character_table(modulus)`.
    index: usize,
    /// Values are exp(2πi e / order_base); `order_base` = φ(q).
    order_base: u64,
    exps: Vec<u32>,
}

impl DirichletCharacter {
    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// Exponent e with χ(n) = exp(2πi e/φ(q)), or `None` when gcd(n,q) > 1.
    pub fn exponent(&self, n: u64) -> Option<u64> {
        let e = self.exps[(n % self.modulus) as usize];
        (e != ZERO).then_some(e as u64)
    }

    pub fn order_base(&self) -> u64 {
        self.order_base
    }

    pub fn value(&self, n: u64) -> Complex64 {
        match self.exponent(n) {
            None => Complex64::new(0.0, 0.0),
            Some(e) => root_of_unity(e, self.order_base),
        }
    }

    pub fn value_i64(&self, n: i64) -> Complex64 {
        self.value(n.rem_euclid(self.modulus as i64) as u64)
    }

    pub fn is_principal(&self) -> bool {
        self.exps.iter().all(|&e| e == 0 || e == ZERO)
    }

    pub fn is_real(&self) -> bool {
        let b = self.order_base as u32;
        self.exps
            .iter()
            .all(|&e| e == ZERO || (2 * e as u64) % b as u64 == 0)
    }

    /// Multiplicative order of χ in the character group.
    pub fn order(&self) -> u64 {
        let g = self
            .exps
            .iter()
            .filter(|&&e| e != ZERO)
            .fold(self.order_base, |acc, &e| gcd(acc, e as u64));
        self.order_base / g
    }

    /// χ^k, with the same modulus; index is recomputed against the table convention.
    pub fn pow(&self, k: u64) -> DirichletCharacter {
        let b = self.order_base;
        let exps = self
            .exps
            .iter()
            .map(|&e| {
                if e == ZERO {
                    ZERO
                } else {
                    ((e as u64 * (k % b)) % b) as u32
                }
            })
            .collect();
        self.with_exps(exps)
    }

    pub fn conj(&self) -> DirichletCharacter {
        let b = self.order_base;
        let exps = self
            .exps
            .iter()
            .map(|&e| {
                if e == ZERO {
                    ZERO
                } else {
                    ((b - e as u64) % b) as u32
                }
            })
            .collect();
        self.with_exps(exps)
    }

    pub fn mul(&self, other: &DirichletCharacter) -> Result<DirichletCharacter> {
        if self.modulus != other.modulus {
            return Err(Error::Domain("characters with different moduli".into()));
        }
        let b = self.order_base;
        let exps = self
            .exps
            .iter()
            .zip(&other.exps)
            .map(|(&a, &c)| {
                if a == ZERO {
                    ZERO
                } else {
                    ((a as u64 + c as u64) % b) as u32
                }
            })
            .collect();
        Ok(self.with_exps(exps))
    }

    fn with_exps(&self, exps: Vec<u32>) -> DirichletCharacter {
        let group = CyclicDecomposition::new(self.modulus);
        let index = group.index_of(&exps);
        DirichletCharacter {
            modulus: self.modulus,
            index,
            order_base: self.order_base,
            exps,
        }
    }
}

pub fn root_of_unity(e: u64, n: u64) -> Complex64 {
    let e = e % n;
    // Exact values on the axes keep quartic characters free of rounding noise.
    if (4 * e) % n == 0 {
        return match 4 * e / n {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
    }
    Complex64::from_polar(1.0, TAU * e as f64 / n as f64)
}

/// Generators and orders of (Z/qZ)* lifted through CRT.
struct CyclicDecomposition {
    q: u64,
    gens: Vec<u64>,
    orders: Vec<u64>,
}

impl CyclicDecomposition {
    fn new(q: u64) -> Self {
        let mut gens = Vec::new();
        let mut orders = Vec::new();
        for (p, e) in factorize(q) {
            let pe = p.pow(e);
            let local: Vec<(u64, u64)> = if p == 2 {
                match e {
                    1 => vec![],
                    2 => vec![(3, 2)],
                    _ => vec![(pe - 1, 2), (5, pe / 4)],
                }
            } else {
                vec![(primitive_root_prime_power(p, e), euler_phi(pe))]
            };
            for (g, ord) in local {
                gens.push(crt_lift(g, pe, q));
                orders.push(ord);
            }
        }
        Self { q, gens, orders }
    }

    /// Discrete-log table: for each residue, the exponent vector w.r.t. the generators.
    fn logs(&self) -> Vec<Option<Vec<u64>>> {
        let mut table = vec![None; self.q as usize];
        let total: u64 = self.orders.iter().product();
        for idx in 0..total {
            let digits = self.digits(idx);
            let n = digits
                .iter()
                .zip(&self.gens)
                .fold(1 % self.q, |acc, (&a, &g)| {
                    mul_mod(acc, pow_mod(g, a, self.q), self.q)
                });
            table[n as usize] = Some(digits);
        }
        if self.q == 1 {
            table[0] = Some(vec![]);
        }
        table
    }

    fn digits(&self, mut idx: u64) -> Vec<u64> {
        self.orders
            .iter()
            .map(|&o| {
                let d = idx % o;
                idx /= o;
                d
            })
            .collect()
    }

    /// Recovers the mixed-radix character index from an exponent table.
    fn index_of(&self, exps: &[u32]) -> usize {
        let phi = euler_phi(self.q);
        let mut idx = 0u64;
        let mut radix = 1u64;
        for (g, &o) in self.gens.iter().zip(&self.orders) {
            let e = exps[(*g % self.q) as usize] as u64;
            let j = e * o / phi;
            idx += j * radix;
            radix *= o;
        }
        idx as usize
    }
}

fn crt_lift(g: u64, pe: u64, q: u64) -> u64 {
    let rest = q / pe;
    // x ≡ g mod pe, x ≡ 1 mod rest.
    (0..pe)
        .map(|k| 1 + k * rest)
        .find(|x| x % pe == g % pe)
        .unwrap_or(1)
        % q.max(1)
}

/// All φ(q) characters modulo q; index 0 is principal.
pub fn character_table(q: u64) -> Result<Vec<DirichletCharacter>> {
    if q == 0 {
        return Err(Error::Domain("modulus must be positive".into()));
    }
    let group = CyclicDecomposition::new(q);
    let phi = euler_phi(q);
    let logs = group.logs();
    let count: u64 = group.orders.iter().product();
    debug_assert_eq!(count, phi);
    let mut out = Vec::with_capacity(phi as usize);
    for idx in 0..count {
        let js = group.digits(idx);
        let exps = logs
            .iter()
            .map(|l| match l {
                None => ZERO,
                Some(a) => {
                    let s: u64 = a
                        .iter()
                        .zip(&js)
                        .zip(&group.orders)
                        .map(|((&ai, &ji), &o)| ai * ji % o * (phi / o))
                        .sum();
                    (s % phi) as u32
                }
            })
            .collect();
        out.push(DirichletCharacter {
            modulus: q,
            index: idx as usize,
            order_base: phi,
            exps,
        });
    }
    Ok(out)
}
