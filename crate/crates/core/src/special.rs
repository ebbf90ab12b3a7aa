//! Hurwitz zeta by Euler–Maclaurin summation with an explicit remainder bound.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// B_2, B_4, …, B_30.
const BERNOULLI: [f64; 15] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
    8553103.0 / 6.0,
    -23749461029.0 / 870.0,
    8615841276005.0 / 14322.0,
];

const TERMS: usize = 14;

/// Value together with an absolute error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounded {
    pub value: Complex64,
    pub err: f64,
}

/// ζ(s, a) = Σ_{n≥0} (n+a)^{-s} for a > 0, s ≠ 1.
pub fn hurwitz_zeta(s: Complex64, a: f64) -> Result<Bounded> {
    if a <= 0.0 || !a.is_finite() {
        return Err(Error::Domain(format!(
            "Hurwitz parameter {a} must be positive"
        )));
    }
    if (s - 1.0).norm() < 1e-14 {
        return Err(Error::Domain("pole at s = 1".into()));
    }
    if s.re <= 2.0 - (2 * TERMS) as f64 {
        return Err(Error::Domain(format!("Re s = {} too far left", s.re)));
    }
    let big = (2.0 * (s.norm() + 2.0 * TERMS as f64) / std::f64::consts::PI).ceil();
    let n = (big as usize).max(8);

    let mut head = Complex64::new(0.0, 0.0);
    let mut mag = 0.0;
    for k in 0..n {
        let term = (-s * (k as f64 + a).ln()).exp();
        mag += term.norm();
        head += term;
    }
    let x = n as f64 + a;
    let lx = x.ln();
    let xs = (-s * lx).exp();
    let integral = xs * x / (s - 1.0);
    let mut total = head + integral + 0.5 * xs;

    // T_k = B_{2k}/(2k)! · s(s+1)…(s+2k−2) · x^{-s-2k+1}
    let mut rising = s;
    let mut fact = 2.0;
    let mut xpow = xs / x;
    let mut last = 0.0;
    for k in 1..=TERMS {
        let t = rising * xpow * (BERNOULLI[k - 1] / fact);
        total += t;
        mag += t.norm();
        last = t.norm();
        if k < TERMS {
            rising *= (s + (2 * k - 1) as f64) * (s + (2 * k) as f64);
            fact *= ((2 * k + 1) * (2 * k + 2)) as f64;
            xpow /= x * x;
        }
    }
    // Remainder no larger than the next term times |s+2K+1|/(σ+2K+1); next term ≈ last·|s+2K|²/(2πx)².
    let k2 = (2 * TERMS) as f64;
    let growth = (s + k2 - 1.0).norm() * (s + k2).norm() / (std::f64::consts::TAU * x).powi(2);
    let tail = last * growth * (s + k2 + 1.0).norm() / (s.re + k2 + 1.0);
    let rounding = 2.2e-16 * (s.im.abs() * lx + 1.0) * (mag + integral.norm() + xs.norm()) * 4.0;
    Ok(Bounded {
        value: total,
        err: tail + rounding,
    })
}

/// Riemann ζ(s).
pub fn zeta(s: Complex64) -> Result<Bounded> {
    hurwitz_zeta(s, 1.0)
}

/// log ζ(x) for real x > 1, accurate also when ζ(x) − 1 is tiny.
pub fn log_zeta_real(x: f64) -> Result<f64> {
    if x <= 1.0 {
        return Err(Error::Domain(format!("log ζ needs x > 1, got {x}")));
    }
    let rest = hurwitz_zeta(Complex64::new(x, 0.0), 2.0)?.value.re;
    Ok(rest.ln_1p())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zeta_even_values() {
        let z2 = zeta(c(2.0, 0.0)).unwrap();
        assert!((z2.value.re - PI * PI / 6.0).abs() < 1e-14);
        let z4 = zeta(c(4.0, 0.0)).unwrap();
        assert!((z4.value.re - PI.powi(4) / 90.0).abs() < 1e-14);
    }

    #[test]
    fn zeta_first_zero_and_known_value() {
        let rho = c(0.5, 14.134725141734693);
        let z = zeta(rho).unwrap();
        assert!(z.value.norm() < 1e-10, "{z:?}");
        // ζ(1+i) from high-precision tables.
        let v = zeta(c(1.0, 1.0)).unwrap().value;
        assert!((v - c(0.5821580597520036, -0.9268485643308071)).norm() < 1e-13);
    }

    #[test]
    fn hurwitz_direct_series_oracle() {
        // ζ(2, 2/5) against a slowly summed series with integral tail.
        let a = 0.4;
        let n = 200_000;
        let mut s = 0.0;
        for k in (0..n).rev() {
            s += 1.0 / ((k as f64 + a) * (k as f64 + a));
        }
        let x = n as f64 + a;
        s += 1.0 / x + 0.5 / (x * x) + 1.0 / (3.0 * x * x * x);
        let h = hurwitz_zeta(c(2.0, 0.0), a).unwrap();
        assert!((h.value.re - s).abs() < 1e-12);
        assert!(h.err < 1e-13);
    }

    #[test]
    fn shift_relation_in_parameter() {
        // ζ(s,a) = a^{-s} + ζ(s,a+1)
        for &(re, im) in &[(1.3, 50.0), (1.01, 200.0), (2.5, -7.0)] {
            let s = c(re, im);
            let lhs = hurwitz_zeta(s, 0.3).unwrap().value;
            let rhs = (-s * 0.3f64.ln()).exp() + hurwitz_zeta(s, 1.3).unwrap().value;
            assert!((lhs - rhs).norm() < 1e-11, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn error_bound_covers_observed_error() {
        let s = c(1.2, 300.0);
        let h = hurwitz_zeta(s, 0.4).unwrap();
        let alt = (-s * 0.4f64.ln()).exp() + hurwitz_zeta(s, 1.4).unwrap().value;
        assert!((h.value - alt).norm() <= 2.0 * h.err + 1e-15);
    }

    #[test]
    fn log_zeta_large_argument() {
        let v = log_zeta_real(30.0).unwrap();
        assert!((v - (2f64.powi(-30) + 3f64.powi(-30))).abs() < 1e-18);
        assert!(log_zeta_real(1.0).is_err());
    }
}
