//! Elementary integer arithmetic used by the character and prime machinery.

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

pub fn lcm(a: u64, b: u64) -> u64 {
    if a == 0 || b == 0 {
        0
    } else {
        a / gcd(a, b) * b
    }
}

pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Prime factorization by trial division, as `(p, e)` pairs in increasing `p`.
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    if n < 2 {
        return out;
    }
    let mut p = 2u64;
    while p * p <= n {
        if n % p == 0 {
            let mut e = 0;
            while n % p == 0 {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let f = factorize(n);
    f.len() == 1 && f[0].1 == 1
}

pub fn euler_phi(n: u64) -> u64 {
    if n == 0 {
        return 0;
    }
    factorize(n)
        .iter()
        .fold(n, |acc, &(p, _)| acc / p * (p - 1))
}

/// Möbius function.
pub fn mobius(n: u64) -> i32 {
    if n == 0 {
        return 0;
    }
    let f = factorize(n);
    if f.iter().any(|&(_, e)| e > 1) {
        0
    } else if f.len() % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Smallest primitive root modulo an odd prime power `p^e`.
pub fn primitive_root_prime_power(p: u64, e: u32) -> u64 {
    assert!(p > 2, "odd prime required");
    let phi_p = p - 1;
    let divisors: Vec<u64> = factorize(phi_p).into_iter().map(|(r, _)| r).collect();
    let g = (2..p)
        .find(|&g| divisors.iter().all(|&r| pow_mod(g, phi_p / r, p) != 1))
        .expect("every prime has a primitive root");
    if e == 1 {
        return g;
    }
    // g generates mod p^e unless g^(p-1) = 1 mod p^2.
    if pow_mod(g, p - 1, p * p) == 1 {
        g + p
    } else {
        g
    }
}

/// Jacobi symbol (a/n) for odd positive n.
pub fn jacobi(a: i64, n: u64) -> i32 {
    assert!(n % 2 == 1, "Jacobi symbol needs odd modulus");
    let mut a = a.rem_euclid(n as i64) as u64;
    let mut n = n;
    let mut result = 1;
    while a != 0 {
        while a % 2 == 0 {
            a /= 2;
            let r = n % 8;
            if r == 3 || r == 5 {
                result = -result;
            }
        }
        std::mem::swap(&mut a, &mut n);
        if a % 4 == 3 && n % 4 == 3 {
            result = -result;
        }
        a %= n;
    }
    if n == 1 {
        result
    } else {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_and_mobius_small_values() {
        let phis = [1, 1, 2, 2, 4, 2, 6, 4, 6, 4];
        for (i, &want) in phis.iter().enumerate() {
            assert_eq!(euler_phi(i as u64 + 1), want);
        }
        let mus = [1, -1, -1, 0, -1, 1, -1, 0, 0, 1];
        for (i, &want) in mus.iter().enumerate() {
            assert_eq!(mobius(i as u64 + 1), want);
        }
    }

    #[test]
    fn primitive_roots_generate() {
        for &(p, e) in &[(3u64, 1u32), (5, 1), (7, 2), (11, 1), (13, 3), (29, 2)] {
            let q = p.pow(e);
            let g = primitive_root_prime_power(p, e);
            let order = (1..=q).find(|&k| pow_mod(g, k, q) == 1).unwrap();
            assert_eq!(order, euler_phi(q), "g={g} mod {q}");
        }
    }

    #[test]
    fn jacobi_matches_euler_criterion_for_primes() {
        for &p in &[3u64, 5, 7, 11, 13, 101] {
            for a in 1..p {
                let e = pow_mod(a, (p - 1) / 2, p);
                let want = if e == 1 { 1 } else { -1 };
                assert_eq!(jacobi(a as i64, p), want);
            }
            assert_eq!(jacobi(p as i64, p), 0);
        }
    }
}
