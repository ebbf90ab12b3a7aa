//! Completely multiplicative twists φ, twisted evaluation, the Kronecker lift from a twisted zero
//! to genuine ones, and argument-principle zero counts on rectangles.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arith::{euler_phi, factorize, gcd};
use crate::character::{character_table, DirichletCharacter};
use crate::error::{Error, Result};
use crate::euler::{linear_fit, EulerFunction, Kind};
use crate::lfunc::{c64, log_l_direct, prime_character_sum, prime_power_neg};
use crate::phase::{wrap_angle, PhaseAssignment};
use crate::poly::Combination;
use crate::primes::PrimeTable;
use crate::special::Bounded;

#[derive(Debug, Clone, PartialEq)]
enum Rule {
    /// t_p = t0 for p ≤ y, tabulated on (y, cap], 0 beyond.
    Phases {
        t0: f64,
        y: f64,
        primes: Vec<u64>,
        t: Vec<f64>,
    },
    /// φ(p) = e^{i·angles[p mod k]}; primes dividing k are untouched.
    Residue { k: u64, angles: Vec<f64> },
}

/// A unimodular completely multiplicative function, fixed by its values at primes.
#[derive(Debug, Clone, PartialEq)]
pub struct TwistFunction {
    pub label: String,
    rule: Rule,
}

impl TwistFunction {
    pub fn identity() -> Self {
        Self {
            label: "identity".into(),
            rule: Rule::Phases {
                t0: 0.0,
                y: 0.0,
                primes: vec![],
                t: vec![],
            },
        }
    }

    pub fn from_prime_phases(
        label: impl Into<String>,
        t0: f64,
        y: f64,
        primes: Vec<u64>,
        t: Vec<f64>,
    ) -> Result<Self> {
        if primes.len() != t.len() || primes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain(
                "phase table must be sorted and aligned".into(),
            ));
        }
        if t.iter().any(|x| !x.is_finite()) || !t0.is_finite() {
            return Err(Error::Domain("phases must be finite".into()));
        }
        Ok(Self {
            label: label.into(),
            rule: Rule::Phases { t0, y, primes, t },
        })
    }

    /// φ(p) = e^{i·angles[p mod k]}.
    pub fn residue_rule(label: impl Into<String>, k: u64, angles: Vec<f64>) -> Result<Self> {
        if k < 2 || angles.len() as u64 != k {
            return Err(Error::Domain(format!("need one angle per residue mod {k}")));
        }
        Ok(Self {
            label: label.into(),
            rule: Rule::Residue { k, angles },
        })
    }

    /// φ(p) = i on primes that are quadratic non-residues mod k, 1 otherwise.
    pub fn davenport_heilbronn(k: u64) -> Result<Self> {
        Self::quadratic_rotation(k, PI / 2.0).map(|mut f| {
            f.label = format!("i on non-residues mod {k}");
            f
        })
    }

    /// φ(p) = e^{iθ} on quadratic non-residues mod k.
    pub fn quadratic_rotation(k: u64, theta: f64) -> Result<Self> {
        let residues: Vec<bool> = (0..k).map(|r| (1..k).any(|x| x * x % k == r)).collect();
        let angles = (0..k)
            .map(|r| {
                if gcd(r, k) == 1 && !residues[r as usize] {
                    theta
                } else {
                    0.0
                }
            })
            .collect();
        Self::residue_rule(format!("e^(i{theta}) on non-residues mod {k}"), k, angles)
    }

    /// φ(p) = e^{i·angle(p)}.
    pub fn angle(&self, p: u64) -> f64 {
        match &self.rule {
            Rule::Phases { t0, y, primes, t } => {
                let tp = if (p as f64) <= *y {
                    *t0
                } else {
                    primes.binary_search(&p).map(|i| t[i]).unwrap_or(0.0)
                };
                -tp * (p as f64).ln()
            }
            Rule::Residue { k, angles } => angles[(p % k) as usize],
        }
    }

    /// t_p with φ(p) = p^{-it_p}; tabulated values are returned as stored.
    pub fn phase(&self, p: u64) -> f64 {
        match &self.rule {
            Rule::Phases { t0, y, primes, t } => {
                if (p as f64) <= *y {
                    *t0
                } else {
                    primes.binary_search(&p).map(|i| t[i]).unwrap_or(0.0)
                }
            }
            Rule::Residue { .. } => -wrap_angle(self.angle(p)) / (p as f64).ln(),
        }
    }

    pub fn at_prime(&self, p: u64) -> Complex64 {
        Complex64::from_polar(1.0, self.angle(p))
    }

    /// φ(n) from the factorisation of n; modulus 1 by construction.
    pub fn at(&self, n: u64) -> Complex64 {
        let a: f64 = factorize(n)
            .iter()
            .map(|&(p, e)| e as f64 * wrap_angle(self.angle(p)))
            .sum();
        Complex64::from_polar(1.0, a)
    }

    pub fn is_identity(&self) -> bool {
        match &self.rule {
            Rule::Phases { t0, t, .. } => *t0 == 0.0 && t.iter().all(|&x| x == 0.0),
            Rule::Residue { angles, .. } => angles.iter().all(|&x| x == 0.0),
        }
    }

    /// Largest prime carrying a tabulated phase (or y), if the twist is finitely supported.
    pub fn support_cap(&self) -> Option<f64> {
        match &self.rule {
            Rule::Phases { y, primes, .. } => {
                Some(primes.last().map_or(*y, |&p| (p as f64).max(*y)))
            }
            Rule::Residue { .. } => None,
        }
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        match &self.rule {
            Rule::Phases { t0, y, primes, t } => {
                h.update(b"phases");
                h.update(t0.to_le_bytes());
                h.update(y.to_le_bytes());
                for (p, x) in primes.iter().zip(t) {
                    h.update(p.to_le_bytes());
                    h.update(x.to_le_bytes());
                }
            }
            Rule::Residue { k, angles } => {
                h.update(b"residue");
                h.update(k.to_le_bytes());
                for a in angles {
                    h.update(a.to_le_bytes());
                }
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// φ(p) = p^{-it_p} with t_p from the assignment on (y, P], t0 on p ≤ y and 0 beyond P.
pub fn twist_from_phases(phases: &PhaseAssignment, t0: f64, y: f64) -> Result<TwistFunction> {
    if phases.y > y + 1e-12 {
        return Err(Error::Precondition(format!(
            "phases start above {} but the twist needs them from {y}",
            phases.y
        )));
    }
    let keep: Vec<usize> = (0..phases.primes.len())
        .filter(|&i| phases.primes[i] as f64 > y)
        .collect();
    TwistFunction::from_prime_phases(
        format!("phases σ={} y={y} P={}", phases.sigma, phases.cap),
        t0,
        y,
        keep.iter().map(|&i| phases.primes[i]).collect(),
        keep.iter().map(|&i| phases.t[i]).collect(),
    )
}

/// log F^φ(s): the local factors at p become F_p(s + it_p).
pub fn log_twisted_euler(
    f: &EulerFunction,
    phi: &TwistFunction,
    s: Complex64,
    table: &PrimeTable,
) -> Result<Bounded> {
    if s.re <= 1.0 {
        return Err(Error::Domain(format!("Re s = {} ≤ 1", s.re)));
    }
    match &phi.rule {
        Rule::Phases { .. } => {
            let cap = phi.support_cap().unwrap_or(0.0);
            if cap > table.limit() as f64 {
                return Err(Error::Domain(format!(
                    "twist support {cap} beyond table limit {}",
                    table.limit()
                )));
            }
            let pairs: Vec<(Complex64, Complex64)> = table
                .range(0.0, cap)
                .par_iter()
                .map(|&p| {
                    Ok((
                        f.local_log(p, s + c64(0.0, phi.phase(p)))?,
                        f.local_log(p, s)?,
                    ))
                })
                .collect::<Result<_>>()?;
            let (mut tw, mut un) = (c64(0.0, 0.0), c64(0.0, 0.0));
            for (a, b) in pairs {
                tw += a;
                un += b;
            }
            let full = f.log_eval(s, table)?;
            let err = match f.kind() {
                Kind::LProduct(_) => 1e-13 * (1.0 + full.norm() + un.norm()),
                Kind::Stream(_) => f.tail_bound(s.re, table.limit() as f64, table)?,
            };
            Ok(Bounded {
                value: full - un + tw,
                err,
            })
        }
        Rule::Residue { k, angles } => match f.kind() {
            Kind::LProduct(chars) => {
                let mut value = c64(0.0, 0.0);
                let mut err = 0.0;
                for chi in chars {
                    let b = log_residue_twisted_l(chi, *k, angles, s, table)?;
                    value += b.value;
                    err += b.err;
                }
                Ok(Bounded { value, err })
            }
            Kind::Stream(_) => Err(Error::Domain(
                "residue-class twists need functions built from characters".into(),
            )),
        },
    }
}

fn log_residue_twisted_l(
    chi: &DirichletCharacter,
    k: u64,
    angles: &[f64],
    s: Complex64,
    table: &PrimeTable,
) -> Result<Bounded> {
    ResidueSums::new(k, s, table)?.log_twisted(chi, angles)
}

/// Prime sums P_ψ(ms) for the characters ψ mod k, reused across twists that are constant on
/// residue classes.
#[derive(Debug, Clone)]
pub struct ResidueSums {
    k: u64,
    s: Complex64,
    chars: Vec<DirichletCharacter>,
    /// sums[m−1][ψ] for m below `direct_from`.
    sums: Vec<Vec<Complex64>>,
    direct_from: u32,
    m_end: u32,
}

/// Primes summed directly once Re(ms) ≥ 12.
const DIRECT_PRIMES: [u64; 15] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47];

impl ResidueSums {
    pub fn new(k: u64, s: Complex64, table: &PrimeTable) -> Result<Self> {
        if s.re <= 1.0 {
            return Err(Error::Domain(format!("Re s = {} ≤ 1", s.re)));
        }
        let chars = character_table(k)?;
        let mut m_end = 1u32;
        while 2f64.powf(-(m_end as f64) * s.re) > 1e-18 {
            m_end += 1;
        }
        let direct_from = (1..m_end)
            .find(|&m| s.re * m as f64 >= 12.0)
            .unwrap_or(m_end);
        let sums = (1..direct_from)
            .into_par_iter()
            .map(|m| {
                chars
                    .iter()
                    .map(|psi| prime_character_sum(psi, s * m as f64, table))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            k,
            s,
            chars,
            sums,
            direct_from,
            m_end,
        })
    }

    /// log Π_p (1 − χ(p)φ(p) p^{-s})^{-1} = Σ_m (1/m) Σ_ψ ĝ_m(ψ) P_ψ(ms), where
    /// g_m(r) = (χ(r) φ(r))^m is expanded in the characters ψ mod k.
    pub fn log_twisted(&self, chi: &DirichletCharacter, angles: &[f64]) -> Result<Bounded> {
        let k = self.k;
        if chi.modulus() != k || angles.len() as u64 != k {
            return Err(Error::Domain(format!(
                "character mod {} with a twist mod {k}",
                chi.modulus()
            )));
        }
        let phik = euler_phi(k) as f64;
        let residues: Vec<u64> = (1..k).filter(|&r| gcd(r, k) == 1).collect();
        let base: Vec<Complex64> = residues
            .iter()
            .map(|&r| chi.value(r) * Complex64::from_polar(1.0, angles[r as usize]))
            .collect();
        let mut value = c64(0.0, 0.0);
        let mut err = 0.0;
        for m in 1..self.m_end {
            if m < self.direct_from {
                for (psi, sum) in self.chars.iter().zip(&self.sums[m as usize - 1]) {
                    let coef: Complex64 = residues
                        .iter()
                        .zip(&base)
                        .map(|(&r, b)| b.powu(m) * psi.value(r).conj())
                        .sum::<Complex64>()
                        / phik;
                    value += coef * sum / m as f64;
                }
            } else {
                // Direct sum over small primes, with the log L bound for the rest.
                let w = self.s * m as f64;
                let mut v = c64(0.0, 0.0);
                for p in DIRECT_PRIMES {
                    if gcd(p, k) == 1 {
                        let g = (chi.value(p)
                            * Complex64::from_polar(1.0, angles[(p % k) as usize]))
                        .powu(m);
                        v += g * prime_power_neg(p, w);
                    }
                }
                value += v / m as f64;
                err += log_l_direct(chi, w)?.err / m as f64;
            }
        }
        // Remaining m: Σ_{m>M} ζ_P(mσ)/m ≤ 2·2^{-Mσ}.
        err += 2.0 * 2f64.powf(-(self.m_end as f64) * self.s.re) + 1e-13 * (1.0 + value.norm());
        Ok(Bounded { value, err })
    }
}

/// F^φ(s) = Σ_i D_i^φ(s) Π_j F_j^φ(s)^{α_ij}.
pub fn eval_twisted_combination(
    comb: &Combination,
    phi: &TwistFunction,
    s: Complex64,
    table: &PrimeTable,
) -> Result<Bounded> {
    if s.re <= 1.0 {
        return Err(Error::Domain(format!("Re s = {} ≤ 1", s.re)));
    }
    if phi.is_identity() {
        return comb.eval(s, table);
    }
    let logs = comb
        .family
        .iter()
        .map(|f| log_twisted_euler(f, phi, s, table))
        .collect::<Result<Vec<_>>>()?;
    comb.combine_logs(s, &logs, Some(phi))
}

/// Targets θ_p ∈ [0, 2π) for t·log p, with weights, over the window [a, a + len].
#[derive(Debug, Clone, Serialize)]
pub struct LiftTarget {
    pub primes: Vec<u64>,
    pub theta: Vec<f64>,
    pub weights: Vec<f64>,
    pub a: f64,
    pub len: f64,
}

impl LiftTarget {
    pub fn new(
        primes: Vec<u64>,
        theta: Vec<f64>,
        weights: Vec<f64>,
        a: f64,
        len: f64,
    ) -> Result<Self> {
        if primes.len() != theta.len() || primes.len() != weights.len() {
            return Err(Error::Domain("lift target arrays differ in length".into()));
        }
        if !(len > 0.0) {
            return Err(Error::Domain(format!("empty lift window of length {len}")));
        }
        let theta = theta.iter().map(|x| x.rem_euclid(TAU)).collect();
        Ok(Self {
            primes,
            theta,
            weights,
            a,
            len,
        })
    }

    /// p^{-it} ≈ φ(p) for p ≤ p_eff, weighted by K·p^{-σ0}.
    pub fn from_twist(
        phi: &TwistFunction,
        p_eff: u64,
        sigma0: f64,
        k: f64,
        table: &PrimeTable,
        a: f64,
        len: f64,
    ) -> Result<Self> {
        let primes = table.range(0.0, p_eff as f64).to_vec();
        let theta = primes.iter().map(|&p| -phi.angle(p)).collect();
        let weights = primes
            .iter()
            .map(|&p| k * (p as f64).powf(-sigma0))
            .collect();
        Self::new(primes, theta, weights, a, len)
    }

    /// max_p w_p · dist(t log p − θ_p, 2πℤ).
    pub fn discrepancy(&self, t: f64) -> f64 {
        self.primes
            .iter()
            .zip(&self.theta)
            .zip(&self.weights)
            .map(|((&p, th), w)| w * wrap_angle(t * (p as f64).ln() - th).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftCandidate {
    pub t: f64,
    pub discrepancy: f64,
}

/// Candidates kept per chunk and returned overall.
const LIFT_KEEP: usize = 48;

/// Grid search over the window with golden-section refinement of the best local minima.
pub fn kronecker_lift(target: &LiftTarget, step: f64) -> Result<Vec<LiftCandidate>> {
    if !(step > 0.0) || !(target.len > 0.0) {
        return Err(Error::Domain(
            "lift needs a positive step and window".into(),
        ));
    }
    let n = (target.len / step).ceil() as usize + 1;
    let at = |i: usize| (target.a + i as f64 * step).min(target.a + target.len);
    let chunk = 1 << 15;
    let mut minima: Vec<(f64, usize)> = (0..n.div_ceil(chunk))
        .into_par_iter()
        .flat_map_iter(|c| {
            let lo = c * chunk;
            let hi = ((c + 1) * chunk).min(n);
            let d: Vec<f64> = (lo.saturating_sub(1)..(hi + 1).min(n))
                .map(|i| target.discrepancy(at(i)))
                .collect();
            let off = if lo == 0 { 0 } else { 1 };
            let mut local: Vec<(f64, usize)> = (lo..hi)
                .filter(|&i| {
                    let j = i - lo + off;
                    let left = if i == 0 { f64::INFINITY } else { d[j - 1] };
                    let right = if i + 1 >= n { f64::INFINITY } else { d[j + 1] };
                    d[j] <= left && d[j] <= right
                })
                .map(|i| (d[i - lo + off], i))
                .collect();
            local.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            local.truncate(LIFT_KEEP);
            local
        })
        .collect();
    minima.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    minima.truncate(LIFT_KEEP);
    let lo_t = target.a;
    let hi_t = target.a + target.len;
    let mut out: Vec<LiftCandidate> = minima
        .par_iter()
        .map(|&(_, i)| {
            let t = golden_min(
                |x| target.discrepancy(x),
                (at(i) - step).max(lo_t),
                (at(i) + step).min(hi_t),
                at(i),
            );
            LiftCandidate {
                t,
                discrepancy: target.discrepancy(t),
            }
        })
        .collect();
    out.sort_by(|a, b| {
        a.discrepancy
            .total_cmp(&b.discrepancy)
            .then(a.t.total_cmp(&b.t))
    });
    let mut kept: Vec<LiftCandidate> = Vec::new();
    for c in out {
        if kept.iter().all(|k| (k.t - c.t).abs() > step) {
            kept.push(c);
        }
    }
    Ok(kept)
}

/// Golden-section minimum on [a, b]; never worse than `start`.
fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, start: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let m = 0.5 * (a + b);
    if f(m) <= f(start) {
        m
    } else {
        start
    }
}

/// σ1 < σ < σ2, A < t < A + T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub sigma1: f64,
    pub sigma2: f64,
    pub a: f64,
    pub t: f64,
}

impl Rectangle {
    pub fn new(sigma1: f64, sigma2: f64, a: f64, t: f64) -> Result<Self> {
        if !(sigma1 > 1.0 && sigma2 > sigma1 && t > 0.0) {
            return Err(Error::Domain(format!(
                "rectangle [{sigma1}, {sigma2}] × [{a}, {a}+{t}] is not inside σ > 1"
            )));
        }
        Ok(Self {
            sigma1,
            sigma2,
            a,
            t,
        })
    }

    pub fn centered(s: Complex64, width: f64, height: f64) -> Result<Self> {
        Self::new(
            s.re - width / 2.0,
            s.re + width / 2.0,
            s.im - height / 2.0,
            height,
        )
    }

    pub fn contains(&self, s: Complex64) -> bool {
        s.re > self.sigma1 && s.re < self.sigma2 && s.im > self.a && s.im < self.a + self.t
    }

    fn corners(&self) -> [Complex64; 5] {
        let (x1, x2, y1, y2) = (self.sigma1, self.sigma2, self.a, self.a + self.t);
        [
            c64(x1, y1),
            c64(x2, y1),
            c64(x2, y2),
            c64(x1, y2),
            c64(x1, y1),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub sigma0: f64,
    pub twist_digest: String,
    pub lift_t: f64,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroCertificate {
    pub rect: Rectangle,
    pub winding: i64,
    pub boundary_min: f64,
    /// Smallest boundary spacing used.
    pub step: f64,
    /// Largest evaluation error bound met on the boundary.
    pub error_budget: f64,
    pub samples: usize,
    pub provenance: Option<Provenance>,
}

impl ZeroCertificate {
    /// A positive count is only admissible when the boundary stays 10× clear of the error budget.
    pub fn is_sound(&self) -> bool {
        self.winding >= 0 && (self.winding == 0 || self.boundary_min >= 10.0 * self.error_budget)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}

pub type Evaluator<'a> = dyn Fn(Complex64) -> Result<Bounded> + Sync + 'a;

/// Smallest allowed spacing relative to the requested step.
const MAX_HALVINGS: u32 = 24;

/// Argument principle on the rectangle boundary, halving the spacing wherever consecutive
/// arguments differ by π/2 or more.
pub fn count_zeros_rectangle(
    f: &Evaluator<'_>,
    rect: &Rectangle,
    step: f64,
) -> Result<ZeroCertificate> {
    count_zeros_traced(f, rect, step, false).map(|(c, _)| c)
}

/// As [`count_zeros_rectangle`], also returning (s, accumulated argument) along the boundary.
pub fn count_zeros_traced(
    f: &Evaluator<'_>,
    rect: &Rectangle,
    step: f64,
    keep_trace: bool,
) -> Result<(ZeroCertificate, Vec<(Complex64, f64)>)> {
    if !(step > 0.0) {
        return Err(Error::Domain("boundary step must be positive".into()));
    }
    let corners = rect.corners();
    let mut total = 0.0;
    let mut min_mod = f64::INFINITY;
    let mut budget: f64 = 0.0;
    let mut min_step = f64::INFINITY;
    let mut samples = 0usize;
    let mut trace = Vec::new();
    for e in 0..4 {
        let (z0, z1) = (corners[e], corners[e + 1]);
        let len = (z1 - z0).norm();
        let n = (len / step).ceil().max(1.0) as usize;
        let pts: Vec<Complex64> = (0..=n)
            .map(|i| z0 + (z1 - z0) * (i as f64 / n as f64))
            .collect();
        let vals: Vec<Bounded> = pts.par_iter().map(|&s| f(s)).collect::<Result<_>>()?;
        for v in &vals {
            min_mod = min_mod.min(v.value.norm());
            budget = budget.max(v.err);
        }
        samples += vals.len();
        for i in 0..n {
            // Depth-first refinement keeps the samples in boundary order.
            let mut stack = vec![(pts[i], vals[i], pts[i + 1], vals[i + 1], 0u32)];
            while let Some((a, fa, b, fb, depth)) = stack.pop() {
                let d = (fb.value / fa.value).arg();
                if !d.is_finite() {
                    return Err(Error::Inconclusive(format!(
                        "function vanishes on the boundary near {a}"
                    )));
                }
                if d.abs() < PI / 2.0 {
                    total += d;
                    min_step = min_step.min((b - a).norm());
                    if keep_trace {
                        trace.push((b, total));
                    }
                    continue;
                }
                if depth >= MAX_HALVINGS {
                    return Err(Error::RefineStep(format!(
                        "argument jumps by {d:.3} between {a} and {b} after {depth} halvings"
                    )));
                }
                let mid = 0.5 * (a + b);
                let fm = f(mid)?;
                samples += 1;
                min_mod = min_mod.min(fm.value.norm());
                budget = budget.max(fm.err);
                stack.push((mid, fm, b, fb, depth + 1));
                stack.push((a, fa, mid, fm, depth + 1));
            }
        }
    }
    let w = total / TAU;
    let winding = w.round() as i64;
    let cert = ZeroCertificate {
        rect: *rect,
        winding,
        boundary_min: min_mod,
        step: min_step,
        error_budget: budget,
        samples,
        provenance: None,
    };
    if min_mod < 10.0 * budget {
        return Err(Error::Inconclusive(format!(
            "boundary minimum {min_mod:.3e} within 10× of the error budget {budget:.3e}"
        )));
    }
    if (w - winding as f64).abs() > 0.1 || winding < 0 {
        return Err(Error::Inconclusive(format!(
            "argument variation {w:.4} turns is not a non-negative integer"
        )));
    }
    Ok((cert, trace))
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowCount {
    pub index: usize,
    pub a: f64,
    pub count: Option<i64>,
    pub note: String,
    pub certificate: Option<ZeroCertificate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanResult {
    pub band: (f64, f64),
    pub window_length: f64,
    pub windows: Vec<WindowCount>,
    /// Slope of the cumulative count over conclusive windows against the window index.
    pub slope: Option<f64>,
}

impl ScanResult {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        out.write_record(["window_index", "A", "count"])
            .map_err(io)?;
        for c in &self.windows {
            let count = c
                .count
                .map_or("inconclusive".to_string(), |n| n.to_string());
            out.write_record([c.index.to_string(), format!("{}", c.a), count])
                .map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn conclusive_counts(&self) -> Vec<i64> {
        self.windows.iter().filter_map(|w| w.count).collect()
    }
}

/// Zero counts on [σ1, σ2] × [a + kT, a + (k+1)T] for k < n.
pub fn zero_density_scan(
    f: &Evaluator<'_>,
    band: (f64, f64),
    a: f64,
    window_length: f64,
    n: usize,
    step: f64,
) -> Result<ScanResult> {
    let rects = (0..n)
        .map(|k| Rectangle::new(band.0, band.1, a + k as f64 * window_length, window_length))
        .collect::<Result<Vec<_>>>()?;
    let windows: Vec<WindowCount> = rects
        .par_iter()
        .enumerate()
        .map(|(k, r)| match count_zeros_rectangle(f, r, step) {
            Ok(c) => WindowCount {
                index: k,
                a: r.a,
                count: Some(c.winding),
                note: String::new(),
                certificate: Some(c),
            },
            Err(e) => WindowCount {
                index: k,
                a: r.a,
                count: None,
                note: e.to_string(),
                certificate: None,
            },
        })
        .collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut cum = 0.0;
    for w in &windows {
        if let Some(c) = w.count {
            cum += c as f64;
            xs.push(w.index as f64);
            ys.push(cum);
        }
    }
    let slope = if xs.len() >= 2 {
        Some(linear_fit(&xs, &ys).slope)
    } else {
        None
    };
    Ok(ScanResult {
        band,
        window_length,
        windows,
        slope,
    })
}

/// Newton's method in s with a centred-difference derivative.
pub fn newton_zero(
    f: &Evaluator<'_>,
    start: Complex64,
    tol: f64,
    max_iter: usize,
) -> Result<Complex64> {
    let mut s = start;
    let h = 1e-6;
    for _ in 0..max_iter {
        let v = f(s)?.value;
        if v.norm() <= tol {
            return Ok(s);
        }
        let d = (f(s + h)?.value - f(s - h)?.value) / (2.0 * h);
        if d.norm() == 0.0 {
            break;
        }
        let mut step = v / d;
        // Damping keeps the iterate in σ > 1.
        while s.re - step.re <= 1.0 + 1e-9 && step.norm() > 1e-14 {
            step *= 0.5;
        }
        if step.norm() > 1.0 {
            step /= step.norm();
        }
        s -= step;
    }
    let v = f(s)?.value.norm();
    if v <= tol {
        Ok(s)
    } else {
        Err(Error::Solver {
            msg: format!("Newton from {start} did not converge"),
            residual: v,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::euler::make_dirichlet_l;
    use crate::poly::CombinationPolynomial;
    use crate::primes::shared_table;
    use proptest::prelude::*;

    fn mod5() -> Vec<EulerFunction> {
        let c = character_table(5).unwrap();
        vec![make_dirichlet_l(&c[1]), make_dirichlet_l(&c[2])]
    }

    fn difference() -> Combination {
        let p = CombinationPolynomial::parse("1:1,0 | 1 0\n1:-1,0 | 0 1\n").unwrap();
        Combination::new(p, mod5()).unwrap()
    }

    /// Σ_{p ≤ limit} −log(1 − χ(p)φ(p)p^{-s}).
    fn direct_twisted_log(
        chi: &DirichletCharacter,
        phi: &TwistFunction,
        s: Complex64,
        t: &PrimeTable,
        limit: f64,
    ) -> Complex64 {
        t.range(0.0, limit)
            .iter()
            .map(|&p| -(1.0 - chi.value(p) * phi.at_prime(p) * prime_power_neg(p, s)).ln())
            .sum()
    }

    #[test]
    fn zero_phases_reproduce_the_untwisted_log() {
        let t = shared_table(1_000_000).unwrap();
        let phi = TwistFunction::from_prime_phases("zero", 0.0, 10.5, vec![11, 13], vec![0.0, 0.0])
            .unwrap();
        assert!(phi.is_identity());
        for f in mod5() {
            let s = c64(1.1, 7.0);
            let a = log_twisted_euler(&f, &phi, s, &t).unwrap();
            assert!((a.value - f.log_eval(s, &t).unwrap()).norm() < 1e-13);
        }
        let comb = difference();
        let s = c64(1.2, 3.0);
        let a = eval_twisted_combination(&comb, &TwistFunction::identity(), s, &t).unwrap();
        assert_eq!(a.value, comb.eval(s, &t).unwrap().value);
    }

    #[test]
    fn phases_are_periodic_and_multiplicative() {
        let period = TAU / 2f64.ln();
        let phi = TwistFunction::from_prime_phases("p", period, 2.5, vec![3], vec![0.4]).unwrap();
        assert!((phi.at(2) - 1.0).norm() < 1e-12);
        assert!((phi.at(12) - phi.at(2) * phi.at(2) * phi.at(3)).norm() < 1e-12);
        assert!((phi.at(3) - Complex64::from_polar(1.0, -0.4 * 3f64.ln())).norm() < 1e-12);
        assert_eq!(phi.at(5), c64(1.0, 0.0));
        assert_eq!(phi.phase(2), period);
        assert_eq!(phi.support_cap(), Some(3.0));
    }

    #[test]
    fn phase_twist_matches_direct_product() {
        let t = shared_table(1_000_000).unwrap();
        let primes: Vec<u64> = t.range(10.5, 200.0).to_vec();
        let ts: Vec<f64> = primes.iter().map(|&p| (p as f64).sqrt().sin()).collect();
        let phi = TwistFunction::from_prime_phases("p", 2.3, 10.5, primes, ts).unwrap();
        let chars = character_table(5).unwrap();
        let s = c64(2.5, 1.0);
        for (f, chi) in mod5().iter().zip([&chars[1], &chars[2]]) {
            let a = log_twisted_euler(f, &phi, s, &t).unwrap();
            let b = direct_twisted_log(chi, &phi, s, &t, 1e6);
            assert!((a.value - b).norm() < 1e-11, "{} vs {}", a.value, b);
        }
    }

    #[test]
    fn residue_twist_matches_direct_product() {
        let t = shared_table(1_000_000).unwrap();
        let phi = TwistFunction::davenport_heilbronn(5).unwrap();
        assert!((phi.at_prime(2) - c64(0.0, 1.0)).norm() < 1e-15);
        assert_eq!(phi.at_prime(11), c64(1.0, 0.0));
        let chars = character_table(5).unwrap();
        let cut = crate::lfunc::prime_zeta_tail(2.5, &t, 1e6).unwrap();
        for chi in &chars {
            let f = make_dirichlet_l(chi);
            let s = c64(2.5, 4.0);
            let a = log_twisted_euler(&f, &phi, s, &t).unwrap();
            let b = direct_twisted_log(chi, &phi, s, &t, 1e6);
            assert!(
                (a.value - b).norm() < 1e-12 + a.err + cut,
                "{} vs {}",
                a.value,
                b
            );
            // Near the line: direct product up to 10^6 plus Σ_{p>10^6} p^{-1.2} ≤ 0.03.
            let s = c64(1.2, 4.0);
            let a = log_twisted_euler(&f, &phi, s, &t).unwrap();
            let b = direct_twisted_log(chi, &phi, s, &t, 1e6);
            assert!((a.value - b).norm() < 0.03 + a.err);
        }
    }

    #[test]
    fn twisting_a_product_twists_each_factor() {
        let t = shared_table(1_000_000).unwrap();
        let chars = character_table(5).unwrap();
        let prod = EulerFunction::product_of_l("L1 L2", vec![chars[1].clone(), chars[2].clone()]);
        let phi = TwistFunction::quadratic_rotation(5, 0.7).unwrap();
        let s = c64(1.3, 2.0);
        let whole = log_twisted_euler(&prod, &phi, s, &t).unwrap();
        let parts: Complex64 = mod5()
            .iter()
            .map(|f| log_twisted_euler(f, &phi, s, &t).unwrap().value)
            .sum();
        assert!((whole.value - parts).norm() < 1e-12);
    }

    #[test]
    fn lift_on_one_prime_finds_the_period() {
        let target = LiftTarget::new(vec![2], vec![0.0], vec![1.0], 0.0, 20.0).unwrap();
        let c = kronecker_lift(&target, 0.01).unwrap();
        let period = TAU / 2f64.ln();
        for want in [0.0, period, 2.0 * period] {
            assert!(
                c.iter()
                    .any(|x| (x.t - want).abs() < 1e-6 && x.discrepancy < 1e-6),
                "{want}"
            );
        }
    }

    #[test]
    fn lift_with_zero_targets_starts_at_zero() {
        let target =
            LiftTarget::new(vec![2, 3, 5], vec![0.0; 3], vec![1.0; 3], 0.0, 100.0).unwrap();
        let c = kronecker_lift(&target, 0.01).unwrap();
        assert_eq!(c[0].t, 0.0);
        assert_eq!(c[0].discrepancy, 0.0);
    }

    #[test]
    fn lift_on_two_primes_gets_close() {
        let target = LiftTarget::new(vec![2, 3], vec![1.0, 2.0], vec![1.0, 1.0], 0.0, 1e4).unwrap();
        let c = kronecker_lift(&target, 1e-3).unwrap();
        assert!(c[0].discrepancy < 0.1, "{:?}", c[0]);
        assert!((c[0].discrepancy - target.discrepancy(c[0].t)).abs() < 1e-15);
    }

    #[test]
    fn zeta_and_a_product_have_no_zeros() {
        let t = shared_table(1_000_000).unwrap();
        let zeta = make_dirichlet_l(&character_table(1).unwrap()[0]);
        let f = |s: Complex64| zeta.eval(s, &t);
        let c =
            count_zeros_rectangle(&f, &Rectangle::new(1.1, 1.2, 0.0, 10.0).unwrap(), 0.05).unwrap();
        assert_eq!(c.winding, 0);
        assert!(c.is_sound());
        let fam = mod5();
        let g = |s: Complex64| -> Result<Bounded> {
            let (a, b) = (fam[0].eval(s, &t)?, fam[1].eval(s, &t)?);
            Ok(Bounded {
                value: a.value * b.value,
                err: a.err * b.value.norm() + b.err * (a.value.norm() + a.err),
            })
        };
        let c = count_zeros_rectangle(&g, &Rectangle::new(1.05, 1.3, 0.0, 20.0).unwrap(), 0.05)
            .unwrap();
        assert_eq!(c.winding, 0);
    }

    #[test]
    fn windings_add_across_a_split() {
        let t = shared_table(1_000_000).unwrap();
        let comb = difference();
        let f = |s: Complex64| comb.eval(s, &t);
        let whole =
            count_zeros_rectangle(&f, &Rectangle::new(1.02, 1.07, 18.4, 0.1).unwrap(), 2e-3)
                .unwrap();
        let low = count_zeros_rectangle(&f, &Rectangle::new(1.02, 1.07, 18.4, 0.03).unwrap(), 2e-3)
            .unwrap();
        let high =
            count_zeros_rectangle(&f, &Rectangle::new(1.02, 1.07, 18.43, 0.07).unwrap(), 2e-3)
                .unwrap();
        assert_eq!(whole.winding, 1);
        assert_eq!(low.winding + high.winding, whole.winding);
        assert_eq!(high.winding, 1);
        assert!(whole.is_sound());
        let z = newton_zero(&f, c64(1.05, 18.4), 1e-13, 50).unwrap();
        assert!((z - c64(1.04269810405337, 18.4545663097055)).norm() < 1e-9);
        assert!(whole.rect.contains(z));
    }

    #[test]
    fn soundness_gate_rejects_thin_margins() {
        let mut c = ZeroCertificate {
            rect: Rectangle::new(1.1, 1.2, 0.0, 1.0).unwrap(),
            winding: 1,
            boundary_min: 1e-6,
            step: 1e-3,
            error_budget: 1e-6,
            samples: 10,
            provenance: None,
        };
        assert!(!c.is_sound());
        c.boundary_min = 1e-5;
        assert!(c.is_sound());
        c.winding = 0;
        c.boundary_min = 0.0;
        assert!(c.is_sound());
        let back: ZeroCertificate = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let flat = |_: Complex64| {
            Ok(Bounded {
                value: c64(1e-9, 0.0),
                err: 1e-9,
            })
        };
        assert!(matches!(
            count_zeros_rectangle(&flat, &Rectangle::new(1.1, 1.2, 0.0, 1.0).unwrap(), 0.1),
            Err(Error::Inconclusive(_))
        ));
    }

    #[test]
    fn scan_csv_marks_inconclusive_windows() {
        let f = |s: Complex64| {
            let v = s - c64(1.15, 2.5);
            Ok(Bounded {
                value: v,
                err: if s.im > 4.0 { 1.0 } else { 1e-12 },
            })
        };
        let r = zero_density_scan(&f, (1.1, 1.2), 0.0, 2.0, 3, 0.01).unwrap();
        assert_eq!(r.windows[0].count, Some(0));
        assert_eq!(r.windows[1].count, Some(1));
        assert_eq!(r.windows[2].count, None);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "window_index,A,count");
        assert!(text.lines().nth(3).unwrap().ends_with("inconclusive"));
        assert_eq!(r.slope, Some(1.0));
    }

    #[test]
    fn twist_from_assignment_keeps_phases_above_y() {
        use crate::euler::Family;
        use crate::phase::{euler_phases, PhaseProblem};
        let t = shared_table(1_000_000).unwrap();
        let fam = Family::audited(mod5(), 1e6, &t).unwrap();
        let problem = PhaseProblem::new(&fam, 1.5, 1000, 1.2, &t).unwrap();
        let targets: Vec<Complex64> = fam
            .members
            .iter()
            .map(|f| {
                f.eval(c64(1.2, 0.0), &t).unwrap().value / f.tail_factor(1.2, 1000.0, &t).unwrap()
            })
            .collect();
        let a = euler_phases(&problem, &fam, &targets, None, 1e-10, 100).unwrap();
        let phi = twist_from_phases(&a, 0.0, 1.5).unwrap();
        assert_eq!(phi.support_cap(), Some(997.0));
        // Untwisted targets: the twisted values are the untwisted ones.
        for f in &fam.members {
            let v = log_twisted_euler(f, &phi, c64(1.2, 0.0), &t).unwrap().value;
            assert!((v.exp() - f.eval(c64(1.2, 0.0), &t).unwrap().value).norm() < 1e-8);
        }
        assert!(twist_from_phases(&a, 0.0, 1.0).is_err());
        assert_eq!(
            phi.digest(),
            twist_from_phases(&a, 0.0, 1.5).unwrap().digest()
        );
        assert_ne!(phi.digest(), TwistFunction::identity().digest());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn twists_are_unimodular(n in 1u64..1_000_000, t0 in -50.0f64..50.0, theta in -PI..PI) {
            let a = TwistFunction::from_prime_phases("p", t0, 30.5, vec![31, 37], vec![0.3, -1.7]).unwrap();
            let b = TwistFunction::quadratic_rotation(7, theta).unwrap();
            prop_assert!((a.at(n).norm() - 1.0).abs() < 1e-12);
            prop_assert!((b.at(n).norm() - 1.0).abs() < 1e-12);
        }
    }
}
