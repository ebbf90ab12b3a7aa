//! Polynomial combinations Σ_i D_i(s) Π_j F_j(s)^{α_ij} with p-finite coefficients D_i, the shift
//! absorbing the local factors at p ≤ y, annulus roots and their continuation in σ, and the
//! synthesis of a twisted zero together with a lifted, certified genuine zero.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arith::factorize;
use crate::error::{Error, Result, StageExt};
use crate::euler::{EulerFunction, Family, ORTHOGONALITY_TOL};
use crate::lfunc::{c64, prime_zeta_tail};
use crate::phase::{euler_phases, wrap_angle, PhaseProblem, SolverConfig};
use crate::primes::PrimeTable;
use crate::special::Bounded;
use crate::twist::{
    count_zeros_rectangle, eval_twisted_combination, kronecker_lift, newton_zero,
    twist_from_phases, LiftTarget, Provenance, Rectangle, TwistFunction, ZeroCertificate,
};

/// Σ c(n) n^{-s} over n built from finitely many primes, plus a bound on any omitted part at σ ≥ 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PFiniteSeries {
    terms: Vec<(u64, Complex64)>,
    pub tail_bound: f64,
}

impl PFiniteSeries {
    pub fn new(terms: Vec<(u64, Complex64)>, tail_bound: f64) -> Result<Self> {
        let mut merged: Vec<(u64, Complex64)> = Vec::new();
        let mut sorted = terms;
        sorted.sort_by_key(|t| t.0);
        for (n, c) in sorted {
            if n == 0 {
                return Err(Error::Domain("Dirichlet series index 0".into()));
            }
            match merged.last_mut() {
                Some(last) if last.0 == n => last.1 += c,
                _ => merged.push((n, c)),
            }
        }
        merged.retain(|t| t.1.norm() > 0.0);
        if merged.is_empty() {
            return Err(Error::Domain(
                "coefficient series is identically zero".into(),
            ));
        }
        if !(tail_bound >= 0.0) {
            return Err(Error::Domain("tail bound must be non-negative".into()));
        }
        Ok(Self {
            terms: merged,
            tail_bound,
        })
    }

    pub fn constant(c: Complex64) -> Result<Self> {
        Self::new(vec![(1, c)], 0.0)
    }

    /// "n:re,im;n:re,im;…".
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Parse { line: 0, msg };
        let mut terms = Vec::new();
        for item in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let (n, c) = item
                .split_once(':')
                .ok_or_else(|| bad(format!("term `{item}` lacks `n:`")))?;
            let (re, im) = c
                .split_once(',')
                .ok_or_else(|| bad(format!("term `{item}` lacks `re,im`")))?;
            let n: u64 = n
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad index `{n}`")))?;
            let re: f64 = re
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad real part `{re}`")))?;
            let im: f64 = im
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad imaginary part `{im}`")))?;
            terms.push((n, c64(re, im)));
        }
        Self::new(terms, 0.0)
    }

    pub fn terms(&self) -> &[(u64, Complex64)] {
        &self.terms
    }

    pub fn is_constant(&self) -> bool {
        self.terms.len() == 1 && self.terms[0].0 == 1 && self.tail_bound == 0.0
    }

    pub fn support_primes(&self) -> Vec<u64> {
        let set: BTreeSet<u64> = self
            .terms
            .iter()
            .flat_map(|(n, _)| factorize(*n).into_iter().map(|f| f.0))
            .collect();
        set.into_iter().collect()
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.terms
            .iter()
            .map(|&(n, c)| c * (-s * (n as f64).ln()).exp())
            .sum()
    }

    /// Σ c(n) φ(n) n^{-s}.
    pub fn eval_twisted(&self, phi: &TwistFunction, s: Complex64) -> Complex64 {
        self.terms
            .iter()
            .map(|&(n, c)| c * phi.at(n) * (-s * (n as f64).ln()).exp())
            .sum()
    }

    /// Σ |c(n)| n^{-σ} + tail.
    pub fn abs_sum(&self, sigma: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(n, c)| c.norm() * (n as f64).powf(-sigma))
            .sum::<f64>()
            + self.tail_bound
    }

    pub fn to_text(&self) -> String {
        self.terms
            .iter()
            .map(|(n, c)| format!("{n}:{},{}", c.re, c.im))
            .collect::<Vec<_>>()
            .join(";")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolyTerm {
    pub coeff: PFiniteSeries,
    pub exps: Vec<u32>,
}

/// P(X_1, …, X_N; s) = Σ_i D_i(s) Π_j X_j^{α_ij}.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombinationPolynomial {
    pub n_vars: usize,
    pub terms: Vec<PolyTerm>,
}

impl CombinationPolynomial {
    pub fn new(n_vars: usize, terms: Vec<PolyTerm>) -> Result<Self> {
        if terms.is_empty() || n_vars == 0 {
            return Err(Error::Domain(
                "polynomial needs at least one term and one variable".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for t in &terms {
            if t.exps.len() != n_vars {
                return Err(Error::Domain(format!(
                    "exponent tuple {:?} for {n_vars} variables",
                    t.exps
                )));
            }
            if !seen.insert(t.exps.clone()) {
                return Err(Error::Domain(format!(
                    "exponent tuple {:?} repeated",
                    t.exps
                )));
            }
        }
        Ok(Self { n_vars, terms })
    }

    /// One term per line: "n:re,im;… | α_1 … α_N". Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut terms = Vec::new();
        let mut n_vars = None;
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Error::Parse { line: k + 1, msg };
            let (coeff, exps) = line
                .split_once('|')
                .ok_or_else(|| at("missing `|`".into()))?;
            let coeff = PFiniteSeries::parse(coeff).map_err(|e| match e {
                Error::Parse { msg, .. } => at(msg),
                other => at(other.to_string()),
            })?;
            let exps: Vec<u32> = exps
                .split_whitespace()
                .map(|e| e.parse().map_err(|_| at(format!("bad exponent `{e}`"))))
                .collect::<Result<_>>()?;
            match n_vars {
                None => n_vars = Some(exps.len()),
                Some(n) if n != exps.len() => {
                    return Err(at(format!("{} exponents, expected {n}", exps.len())))
                }
                _ => {}
            }
            terms.push(PolyTerm { coeff, exps });
        }
        let n = n_vars.ok_or(Error::Parse {
            line: 0,
            msg: "no terms".into(),
        })?;
        Self::new(n, terms).map_err(|e| Error::Parse {
            line: 0,
            msg: e.to_string(),
        })
    }

    pub fn to_text(&self) -> String {
        self.terms
            .iter()
            .map(|t| {
                let e: Vec<String> = t.exps.iter().map(|a| a.to_string()).collect();
                format!("{} | {}\n", t.coeff.to_text(), e.join(" "))
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_monomial(&self) -> bool {
        self.terms.len() == 1
    }

    pub fn support_primes(&self) -> Vec<u64> {
        let set: BTreeSet<u64> = self
            .terms
            .iter()
            .flat_map(|t| t.coeff.support_primes())
            .collect();
        set.into_iter().collect()
    }

    /// Σ_i d_i Π_j x_j^{α_ij}.
    pub fn eval_with(&self, d: &[Complex64], x: &[Complex64]) -> Complex64 {
        self.terms
            .iter()
            .zip(d)
            .map(|(t, di)| di * monomial(&t.exps, x))
            .sum()
    }
}

fn monomial(exps: &[u32], x: &[Complex64]) -> Complex64 {
    exps.iter().zip(x).map(|(&a, xj)| xj.powu(a)).product()
}

/// A polynomial bound to the Euler products it combines.
#[derive(Debug, Clone)]
pub struct Combination {
    pub poly: CombinationPolynomial,
    pub family: Vec<EulerFunction>,
}

impl Combination {
    pub fn new(poly: CombinationPolynomial, family: Vec<EulerFunction>) -> Result<Self> {
        if poly.n_vars != family.len() {
            return Err(Error::Domain(format!(
                "{} variables for {} functions",
                poly.n_vars,
                family.len()
            )));
        }
        Ok(Self { poly, family })
    }

    /// Σ_i D_i(s) Π_j F_j(s)^{α_ij}.
    pub fn eval(&self, s: Complex64, table: &PrimeTable) -> Result<Bounded> {
        if s.re <= 1.0 {
            return Err(Error::Domain(format!("Re s = {} ≤ 1", s.re)));
        }
        let vals = self
            .family
            .iter()
            .map(|f| f.eval(s, table))
            .collect::<Result<Vec<_>>>()?;
        let mut value = c64(0.0, 0.0);
        let mut err = 0.0;
        let mut mag = 0.0;
        for t in &self.poly.terms {
            let d = t.coeff.eval(s);
            let mono = monomial(&t.exps, &vals.iter().map(|v| v.value).collect::<Vec<_>>());
            let hi: f64 = t
                .exps
                .iter()
                .zip(&vals)
                .map(|(&a, v)| (v.value.norm() + v.err).powi(a as i32))
                .product();
            let lo: f64 = t
                .exps
                .iter()
                .zip(&vals)
                .map(|(&a, v)| v.value.norm().powi(a as i32))
                .product();
            value += d * mono;
            err += d.norm() * (hi - lo) + t.coeff.tail_bound * hi;
            mag += (d * mono).norm();
        }
        Ok(Bounded {
            value,
            err: err + 1e-15 * mag,
        })
    }

    /// Combines log F_j (possibly twisted) into the polynomial value.
    pub fn combine_logs(
        &self,
        s: Complex64,
        logs: &[Bounded],
        twist: Option<&TwistFunction>,
    ) -> Result<Bounded> {
        let mut value = c64(0.0, 0.0);
        let mut err = 0.0;
        let mut mag = 0.0;
        for t in &self.poly.terms {
            let d = match twist {
                Some(phi) => t.coeff.eval_twisted(phi, s),
                None => t.coeff.eval(s),
            };
            let l: Complex64 = t
                .exps
                .iter()
                .zip(logs)
                .map(|(&a, b)| b.value * a as f64)
                .sum();
            let e: f64 = t
                .exps
                .iter()
                .zip(logs)
                .map(|(&a, b)| b.err * a as f64)
                .sum();
            let mono = l.exp();
            value += d * mono;
            err += d.norm() * mono.norm() * e.exp_m1() + t.coeff.tail_bound * mono.norm() * e.exp();
            mag += (d * mono).norm();
        }
        Ok(Bounded {
            value,
            err: err + 1e-14 * mag,
        })
    }

    pub fn k_max(&self) -> f64 {
        self.family.iter().map(|f| f.k_bound()).fold(0.0, f64::max)
    }
}

/// Bound on |F(σ0 + it) − F^φ(σ0)| from how far p^{-it} is from φ(p) at each prime.
pub fn transfer_bound(
    comb: &Combination,
    phi: &TwistFunction,
    sigma0: f64,
    t: f64,
    table: &PrimeTable,
) -> Result<f64> {
    let s = c64(sigma0, 0.0);
    let twisted = comb
        .family
        .iter()
        .map(|f| crate::twist::log_twisted_euler(f, phi, s, table))
        .collect::<Result<Vec<_>>>()?;
    let cap = phi
        .support_cap()
        .unwrap_or(table.limit() as f64)
        .min(table.limit() as f64);
    let mut dl = Vec::with_capacity(comb.family.len());
    for f in &comb.family {
        let (d, k) = (f.degree() as f64, f.k_bound());
        let mut total = 0.0;
        for &p in table.range(0.0, cap) {
            let x = k * (p as f64).powf(-sigma0);
            if x >= 1.0 {
                return Err(Error::Domain(format!(
                    "local factor at {p} not absolutely convergent at σ = {sigma0}"
                )));
            }
            let delta = wrap_angle(-t * (p as f64).ln() - phi.angle(p)).abs();
            total += d * delta * x / (1.0 - x);
        }
        // Beyond the table cap φ = 1 and p^{-it} is arbitrary: twice the log of the majorant.
        total += 2.0 * d * k * prime_zeta_tail(sigma0, table, cap)? * 1.01;
        dl.push(total);
    }
    let mut bound = 0.0;
    for term in &comb.poly.terms {
        let l: f64 = term
            .exps
            .iter()
            .zip(&twisted)
            .map(|(&a, b)| b.value.re * a as f64)
            .sum();
        let e: f64 = term
            .exps
            .iter()
            .zip(&twisted)
            .zip(&dl)
            .map(|((&a, b), d)| (b.err + d) * a as f64)
            .sum();
        let mono = l.exp();
        let dphi: f64 = term
            .coeff
            .terms()
            .iter()
            .map(|&(n, c)| {
                c.norm()
                    * (n as f64).powf(-sigma0)
                    * (phi.at(n) - Complex64::from_polar(1.0, -t * (n as f64).ln())).norm()
            })
            .sum();
        bound += term.coeff.abs_sum(sigma0) * mono * e.exp_m1() + dphi * mono * e.exp();
    }
    Ok(bound)
}

/// Q̃(X; s) = Σ_i D̃_i(s) Π_j X_j^{α_ij}, D̃_i = D_i · Π_j Π_{p≤y} F_{j,p}^{α_ij}.
#[derive(Debug, Clone)]
pub struct ShiftedPolynomial {
    pub y: f64,
    pub poly: CombinationPolynomial,
    family: Vec<EulerFunction>,
    small_primes: Vec<u64>,
}

pub fn shift_polynomial(
    p: &CombinationPolynomial,
    family: &[EulerFunction],
    y: f64,
) -> Result<ShiftedPolynomial> {
    if p.n_vars != family.len() {
        return Err(Error::Domain(format!(
            "{} variables for {} functions",
            p.n_vars,
            family.len()
        )));
    }
    if y.fract() == 0.0 || y < 1.0 {
        return Err(Error::Precondition(format!(
            "y = {y} must be a non-integer ≥ 1"
        )));
    }
    if let Some(q) = p.support_primes().into_iter().find(|&q| q as f64 > y) {
        return Err(Error::Precondition(format!(
            "coefficient support prime {q} exceeds y = {y}"
        )));
    }
    let small_primes = (2..=y.floor() as u64)
        .filter(|&n| crate::arith::is_prime(n))
        .collect();
    Ok(ShiftedPolynomial {
        y,
        poly: p.clone(),
        family: family.to_vec(),
        small_primes,
    })
}

impl ShiftedPolynomial {
    pub fn len(&self) -> usize {
        self.poly.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poly.is_empty()
    }

    pub fn n_vars(&self) -> usize {
        self.poly.n_vars
    }

    /// Π_{p≤y} F_{j,p}(s) for each j.
    pub fn small_factors(&self, s: Complex64) -> Result<Vec<Complex64>> {
        self.family
            .iter()
            .map(|f| {
                self.small_primes
                    .iter()
                    .map(|&p| f.local_factor(p, s))
                    .product::<Result<Complex64>>()
            })
            .collect()
    }

    /// D̃_i(s); defined for Re s ≥ 1.
    pub fn coefficients(&self, s: Complex64) -> Result<Vec<Complex64>> {
        if s.re < 1.0 {
            return Err(Error::Domain(format!("Re s = {} < 1", s.re)));
        }
        let small = self.small_factors(s)?;
        Ok(self
            .poly
            .terms
            .iter()
            .map(|t| t.coeff.eval(s) * monomial(&t.exps, &small))
            .collect())
    }

    pub fn eval(&self, x: &[Complex64], s: Complex64) -> Result<Complex64> {
        Ok(self.poly.eval_with(&self.coefficients(s)?, x))
    }

    /// tol · (1 + Σ_i |D̃_i| R^{Σα_i}).
    pub fn residual_scale(&self, d: &[Complex64], r: f64) -> f64 {
        1.0 + self
            .poly
            .terms
            .iter()
            .zip(d)
            .map(|(t, di)| di.norm() * r.powi(t.exps.iter().sum::<u32>() as i32))
            .sum::<f64>()
    }
}

/// Sample count of the coarse t grid.
const T0_GRID: usize = 400;

/// t0 with min_i |D̃_i(1 + it0)| ≥ θ; θ defaults to 10⁻³ · min_i max_t |D̃_i(1 + it)|.
pub fn find_t0(q: &ShiftedPolynomial, t_lo: f64, t_hi: f64, floor: Option<f64>) -> Result<f64> {
    if !(t_hi >= t_lo) {
        return Err(Error::Domain(format!(
            "empty search range [{t_lo}, {t_hi}]"
        )));
    }
    if let Some(f) = floor {
        if !(f > 0.0) {
            return Err(Error::Domain("floor θ must be positive".into()));
        }
    }
    let mods = |t: f64| -> Result<Vec<f64>> {
        Ok(q.coefficients(c64(1.0, t))?
            .iter()
            .map(|d| d.norm())
            .collect())
    };
    let grid: Vec<f64> = (0..=T0_GRID)
        .map(|k| t_lo + (t_hi - t_lo) * k as f64 / T0_GRID as f64)
        .collect();
    let vals = grid.iter().map(|&t| mods(t)).collect::<Result<Vec<_>>>()?;
    let theta = match floor {
        Some(f) => f,
        None => {
            let m = q.len();
            1e-3 * (0..m)
                .map(|i| vals.iter().map(|v| v[i]).fold(0.0, f64::max))
                .fold(f64::INFINITY, f64::min)
        }
    };
    let min_of = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    if min_of(&vals[0]) >= theta {
        return Ok(t_lo);
    }
    let prod = |t: f64| -> f64 { mods(t).map(|v| v.iter().product()).unwrap_or(0.0) };
    let best = (0..grid.len())
        .max_by(|&a, &b| {
            vals[a]
                .iter()
                .product::<f64>()
                .total_cmp(&vals[b].iter().product::<f64>())
        })
        .expect("grid is non-empty");
    let h = (t_hi - t_lo) / T0_GRID as f64;
    let (mut a, mut b) = ((grid[best] - h).max(t_lo), (grid[best] + h).min(t_hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if prod(c) >= prod(d) {
            b = d;
        } else {
            a = c;
        }
    }
    for t in [0.5 * (a + b), grid[best]] {
        if min_of(&mods(t)?) >= theta {
            return Ok(t);
        }
    }
    if let Some(k) = (0..grid.len()).find(|&k| min_of(&vals[k]) >= theta) {
        return Ok(grid[k]);
    }
    Err(Error::Search(format!(
        "no t in [{t_lo}, {t_hi}] keeps every shifted coefficient above {theta:.3e}; widen the range or lower θ"
    )))
}

/// Roots of Σ_e c_e x^e by Aberth iteration.
pub fn polynomial_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::Domain("zero polynomial".into()));
    }
    let mut c = coeffs.to_vec();
    while c.len() > 1 && c.last().is_some_and(|x| x.norm() <= 1e-14 * scale) {
        c.pop();
    }
    let deg = c.len() - 1;
    if deg == 0 {
        return Ok(vec![]);
    }
    let lead = c[deg];
    let a: Vec<Complex64> = c.iter().map(|x| x / lead).collect();
    let radius = 1.0 + a[..deg].iter().map(|x| x.norm()).fold(0.0, f64::max);
    let eval = |z: Complex64| -> (Complex64, Complex64) {
        let mut p = c64(0.0, 0.0);
        let mut dp = c64(0.0, 0.0);
        for k in (0..=deg).rev() {
            dp = dp * z + p;
            p = p * z + a[k];
        }
        (p, dp)
    };
    let mut z: Vec<Complex64> = (0..deg)
        .map(|k| Complex64::from_polar(0.5 * radius, TAU * k as f64 / deg as f64 + 0.4))
        .collect();
    for _ in 0..500 {
        let mut moved: f64 = 0.0;
        for k in 0..deg {
            let (p, dp) = eval(z[k]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let sum: Complex64 = (0..deg)
                .filter(|&j| j != k)
                .map(|j| (z[k] - z[j]).inv())
                .sum();
            let w = ratio / (c64(1.0, 0.0) - ratio * sum);
            if w.is_finite() {
                z[k] -= w;
                moved = moved.max(w.norm() / (1.0 + z[k].norm()));
            }
        }
        if moved < 1e-16 {
            break;
        }
    }
    for r in z.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = eval(*r);
            if dp.norm() > 0.0 && (p / dp).is_finite() {
                *r -= p / dp;
            }
        }
    }
    Ok(z)
}

#[derive(Debug, Clone, Serialize)]
pub struct AnnulusRoot {
    pub x: Vec<Complex64>,
    pub residual: f64,
    /// Smallest power of two ≥ 2 with 2/R ≤ |x_j| ≤ R/2.
    pub r: f64,
    pub method: String,
}

#[derive(Debug, Clone, Serialize)]
pub enum RootOutcome {
    /// One term: no zeros for σ > 1 can come from the polynomial.
    Monomial,
    Root(AnnulusRoot),
}

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    pub tol: f64,
    pub seed: u64,
    pub slices: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            seed: 0,
            slices: 64,
        }
    }
}

fn smallest_radius(x: &[Complex64], r: f64) -> f64 {
    let mut big = 2f64.max(r);
    big = 2f64.powi(big.log2().ceil() as i32);
    while x
        .iter()
        .any(|z| z.norm() < 2.0 / big || z.norm() > big / 2.0)
    {
        big *= 2.0;
    }
    big
}

/// Min-norm Newton in log coordinates from `start` onto {Q̃(·; s) = 0}.
fn project_log(
    q: &ShiftedPolynomial,
    d: &[Complex64],
    start: &[Complex64],
    tol_abs: f64,
) -> Option<Vec<Complex64>> {
    let mut u: Vec<Complex64> = start.iter().map(|x| x.ln()).collect();
    for _ in 0..100 {
        let x: Vec<Complex64> = u.iter().map(|v| v.exp()).collect();
        let val = q.poly.eval_with(d, &x);
        if val.norm() <= tol_abs {
            return Some(x);
        }
        let g: Vec<Complex64> = (0..u.len())
            .map(|j| {
                q.poly
                    .terms
                    .iter()
                    .zip(d)
                    .map(|(t, di)| di * t.exps[j] as f64 * monomial(&t.exps, &x))
                    .sum()
            })
            .collect();
        let gn: f64 = g.iter().map(|z| z.norm_sqr()).sum();
        if gn == 0.0 || !gn.is_finite() {
            return None;
        }
        for (uj, gj) in u.iter_mut().zip(&g) {
            *uj -= gj.conj() * val / gn;
        }
    }
    let x: Vec<Complex64> = u.iter().map(|v| v.exp()).collect();
    (q.poly.eval_with(d, &x).norm() <= tol_abs).then_some(x)
}

/// Coefficients in x_v of Q̃ with the other coordinates fixed.
fn univariate(q: &ShiftedPolynomial, d: &[Complex64], x: &[Complex64], v: usize) -> Vec<Complex64> {
    let deg = q.poly.terms.iter().map(|t| t.exps[v]).max().unwrap_or(0) as usize;
    let mut c = vec![c64(0.0, 0.0); deg + 1];
    for (t, di) in q.poly.terms.iter().zip(d) {
        let rest: Complex64 = (0..x.len())
            .filter(|&j| j != v)
            .map(|j| x[j].powu(t.exps[j]))
            .product();
        c[t.exps[v] as usize] += di * rest;
    }
    c
}

/// A root with all coordinates non-zero, by projection from `anchor` or by slicing.
pub fn annulus_root(
    q: &ShiftedPolynomial,
    s0: Complex64,
    r: f64,
    anchor: Option<&[Complex64]>,
    opts: &RootOptions,
) -> Result<RootOutcome> {
    if q.len() == 1 {
        return Ok(RootOutcome::Monomial);
    }
    if r < 2.0 {
        return Err(Error::Domain(format!("R = {r} < 2")));
    }
    let d = q.coefficients(s0)?;
    if let Some(i) = d.iter().position(|x| x.norm() == 0.0) {
        return Err(Error::Precondition(format!(
            "shifted coefficient {} vanishes at {s0}",
            i + 1
        )));
    }
    let n = q.n_vars();
    let finish = |x: Vec<Complex64>, method: &str| -> AnnulusRoot {
        let big = smallest_radius(&x, r);
        let residual = q.poly.eval_with(&d, &x).norm();
        AnnulusRoot {
            x,
            residual,
            r: big,
            method: method.into(),
        }
    };
    if let Some(a) = anchor {
        if a.len() != n || a.iter().any(|z| z.norm() == 0.0) {
            return Err(Error::Domain(
                "anchor must have one non-zero entry per variable".into(),
            ));
        }
        let tol_abs = opts.tol * q.residual_scale(&d, smallest_radius(a, r));
        if let Some(x) = project_log(q, &d, a, tol_abs) {
            return Ok(RootOutcome::Root(finish(x, "projection")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for slice in 0..opts.slices {
        let base: Vec<Complex64> = if slice == 0 {
            vec![c64(1.0, 0.0); n]
        } else {
            let lr = (r / 2.0).ln();
            (0..n)
                .map(|_| {
                    Complex64::from_polar(
                        rng.gen_range(-lr..lr).exp(),
                        rng.gen_range(-TAU / 2.0..TAU / 2.0),
                    )
                })
                .collect()
        };
        for v in 0..n {
            let c = univariate(q, &d, &base, v);
            if c.len() < 2 {
                continue;
            }
            let mut roots = polynomial_roots(&c)?;
            roots.retain(|z| z.norm() > 1e-8 && z.is_finite());
            roots.sort_by(|a, b| a.norm().ln().abs().total_cmp(&b.norm().ln().abs()));
            for z in roots {
                let mut x = base.clone();
                x[v] = z;
                let tol_abs = opts.tol * q.residual_scale(&d, smallest_radius(&x, r));
                if q.poly.eval_with(&d, &x).norm() <= tol_abs {
                    return Ok(RootOutcome::Root(finish(x, "slice")));
                }
            }
        }
    }
    Err(Error::Search(format!(
        "no root with non-zero coordinates after {} slices",
        opts.slices
    )))
}

#[derive(Debug, Clone, Serialize)]
pub struct RootPath {
    /// Coordinate moved by the tracker; the others stay fixed.
    pub free: usize,
    pub points: Vec<(f64, Vec<Complex64>)>,
}

impl RootPath {
    pub fn last(&self) -> &(f64, Vec<Complex64>) {
        self.points.last().expect("path has its start point")
    }

    /// Point at σ (tracked grid values only).
    pub fn at(&self, sigma: f64) -> Option<&Vec<Complex64>> {
        self.points
            .iter()
            .find(|(s, _)| (s - sigma).abs() < 1e-12)
            .map(|p| &p.1)
    }
}

/// Tracks the root in σ at fixed t0: Newton in one coordinate, Δσ = 10⁻³ with halving.
pub fn continue_root_in_sigma(
    q: &ShiftedPolynomial,
    x_start: &[Complex64],
    t0: f64,
    sigma_from: f64,
    sigma_to: f64,
    r: f64,
    tol: f64,
) -> Result<RootPath> {
    let s0 = c64(sigma_from, t0);
    let d0 = q.coefficients(s0)?;
    let n = q.n_vars();
    let free = (0..n)
        .max_by(|&a, &b| {
            let ga = univariate_derivative(q, &d0, x_start, a).norm() * x_start[a].norm();
            let gb = univariate_derivative(q, &d0, x_start, b).norm() * x_start[b].norm();
            ga.total_cmp(&gb)
        })
        .expect("at least one variable");
    let mut points = vec![(sigma_from, x_start.to_vec())];
    let dir = if sigma_to < sigma_from { -1.0 } else { 1.0 };
    let mut sigma = sigma_from;
    let mut x = x_start.to_vec();
    let mut h = 1e-3;
    while (sigma_to - sigma) * dir > 1e-15 {
        let next = if ((sigma_to - sigma) * dir) <= h {
            sigma_to
        } else {
            sigma + dir * h
        };
        let d = q.coefficients(c64(next, t0))?;
        let tol_abs = tol * q.residual_scale(&d, r);
        let mut z = x.clone();
        let mut ok = false;
        for _ in 0..40 {
            let c = univariate(q, &d, &z, free);
            let (p, dp) = horner(&c, z[free]);
            if p.norm() <= tol_abs {
                ok = true;
                break;
            }
            if dp.norm() == 0.0 {
                break;
            }
            z[free] -= p / dp;
        }
        let inside = z.iter().all(|v| v.norm() >= 1.0 / r && v.norm() <= r);
        if ok && inside && (z[free] - x[free]).norm() < 0.5 * x[free].norm().max(1e-3) {
            sigma = next;
            x = z;
            points.push((sigma, x.clone()));
            h = (h * 2.0).min(1e-3);
        } else {
            h *= 0.5;
            if h < 1e-9 {
                return Err(if ok && !inside {
                    Error::AnnulusExit { sigma: next }
                } else {
                    Error::Solver {
                        msg: format!("root tracking failed near σ = {next}"),
                        residual: f64::NAN,
                    }
                });
            }
        }
    }
    Ok(RootPath { free, points })
}

fn horner(c: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = c64(0.0, 0.0);
    let mut dp = c64(0.0, 0.0);
    for k in (0..c.len()).rev() {
        dp = dp * z + p;
        p = p * z + c[k];
    }
    (p, dp)
}

fn univariate_derivative(
    q: &ShiftedPolynomial,
    d: &[Complex64],
    x: &[Complex64],
    v: usize,
) -> Complex64 {
    horner(&univariate(q, d, x, v), x[v]).1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub solver: SolverConfig,
    /// Every coefficient prime is ≤ y; phases t0 apply on p ≤ y.
    pub shift_y: f64,
    /// Grid tried for σ0, from the top down.
    pub sigma_grid: Vec<f64>,
    pub t_range: (f64, f64),
    pub theta_floor: Option<f64>,
    pub r: f64,
    pub root_tol: f64,
    pub twisted_tol: f64,
    pub lift_window: (f64, f64),
    pub lift_step: f64,
    /// Primes constrained by the lift.
    pub p_eff: u64,
    pub newton_candidates: usize,
    pub rect_width: f64,
    pub cert_step: f64,
    /// Move σ0 to the real part of the lifted zero and re-solve the twist there.
    pub reanchor: bool,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig {
                y: 1.5,
                sigma: 1.25,
                ..SolverConfig::default()
            },
            shift_y: 1.5,
            sigma_grid: vec![
                1.25, 1.2, 1.15, 1.1, 1.08, 1.06, 1.05, 1.04, 1.03, 1.02, 1.01,
            ],
            t_range: (0.0, 50.0),
            theta_floor: None,
            r: 2.0,
            root_tol: 1e-12,
            twisted_tol: 1e-6,
            lift_window: (0.0, 500.0),
            lift_step: 0.01,
            p_eff: 30,
            newton_candidates: 48,
            rect_width: 0.02,
            cert_step: 1e-3,
            reanchor: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub stage: String,
    pub note: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct LiftOutcome {
    pub candidate_t: f64,
    pub discrepancy: f64,
    /// |F(σ0 + i·candidate_t)| before refinement.
    pub candidate_value: f64,
    /// Genuine zero reached from the candidate.
    pub zero: Complex64,
    pub value_at_lift: f64,
    pub transfer_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TwistedZero {
    pub sigma0: f64,
    pub t0: f64,
    pub root: Vec<Complex64>,
    pub twist_digest: String,
    pub twisted_value: f64,
    pub euler_residual: f64,
    pub lift: Option<LiftOutcome>,
    pub certificate: Option<ZeroCertificate>,
    /// Why the certificate is missing, when it is.
    pub certificate_note: String,
    #[serde(skip)]
    pub twist: Option<TwistFunction>,
}

#[derive(Debug, Clone, Serialize)]
pub enum Verdict {
    Monomial { note: String },
    TwistedZero(Box<TwistedZero>),
}

#[derive(Debug, Clone, Serialize)]
pub struct Synthesis {
    pub verdict: Verdict,
    pub stages: Vec<StageRecord>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.stage(name)
}

/// Either the monomial verdict or a twisted zero at some σ0, lifted and certified where possible.
pub fn synthesize_zero(
    p: &CombinationPolynomial,
    family: &Family,
    cfg: &SynthesisConfig,
    table: &PrimeTable,
) -> Result<Synthesis> {
    let mut stages = Vec::new();
    let mut note = |stage: &str, note: String| {
        stages.push(StageRecord {
            stage: stage.into(),
            note,
        })
    };
    stage(
        "audit",
        family
            .estimate
            .check_orthogonal(ORTHOGONALITY_TOL)
            .map_err(|e| Error::Precondition(e.to_string())),
    )?;
    let comb = stage(
        "combine",
        Combination::new(p.clone(), family.members.clone()),
    )?;
    if p.is_monomial() {
        let c = &p.terms[0].coeff;
        let tail: f64 = c
            .terms()
            .iter()
            .skip(1)
            .map(|(n, z)| z.norm() / *n as f64)
            .sum();
        let lead = if c.terms()[0].0 == 1 {
            c.terms()[0].1.norm()
        } else {
            0.0
        };
        let msg = if c.is_constant() || lead > tail {
            "monomial: non-vanishing for σ > 1".to_string()
        } else {
            "monomial: any zeros for σ > 1 are zeros of the coefficient series".to_string()
        };
        note("monomial", msg.clone());
        return Ok(Synthesis {
            verdict: Verdict::Monomial { note: msg },
            stages,
        });
    }

    let q = stage("shift", shift_polynomial(p, &family.members, cfg.shift_y))?;
    let t0 = stage(
        "find_t0",
        find_t0(&q, cfg.t_range.0, cfg.t_range.1, cfg.theta_floor),
    )?;
    note("find_t0", format!("t0 = {t0}"));
    let sigma_top = cfg
        .sigma_grid
        .first()
        .copied()
        .ok_or(Error::Domain("empty σ grid".into()))?;
    let s_top = c64(sigma_top, t0);
    let small = q.small_factors(s_top)?;
    let anchor = family
        .members
        .iter()
        .zip(&small)
        .map(|(f, sm)| Ok(f.eval(s_top, table)?.value / sm))
        .collect::<Result<Vec<_>>>()?;
    let opts = RootOptions {
        tol: cfg.root_tol,
        seed: cfg.solver.seed,
        ..RootOptions::default()
    };
    let root = match stage(
        "annulus_root",
        annulus_root(&q, s_top, cfg.r, Some(&anchor), &opts),
    )? {
        RootOutcome::Root(r) => r,
        RootOutcome::Monomial => unreachable!("monomials return above"),
    };
    note(
        "annulus_root",
        format!(
            "{} root, residual {:.2e}, R = {}",
            root.method, root.residual, root.r
        ),
    );
    let sigma_low = cfg.sigma_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let path = stage(
        "continue_root",
        continue_root_in_sigma(&q, &root.x, t0, sigma_top, sigma_low, root.r, cfg.root_tol),
    )?;

    // Largest σ on the grid at which the Euler targets are reachable.
    let solver = &cfg.solver;
    let mut found = None;
    let mut last_err = None;
    for &sigma in &cfg.sigma_grid {
        let Some(x) = path
            .points
            .iter()
            .min_by(|a, b| (a.0 - sigma).abs().total_cmp(&(b.0 - sigma).abs()))
            .map(|p| p.1.clone())
        else {
            continue;
        };
        let problem = PhaseProblem::new(family, cfg.shift_y, solver.prime_cap, sigma, table)?;
        let targets = family
            .members
            .iter()
            .zip(&x)
            .map(|(f, xj)| Ok(xj / f.tail_factor(sigma, solver.prime_cap as f64, table)?))
            .collect::<Result<Vec<_>>>()?;
        match euler_phases(
            &problem,
            family,
            &targets,
            None,
            solver.tol,
            solver.max_iter,
        ) {
            Ok(a) => {
                found = Some((sigma, x, problem, a));
                break;
            }
            Err(e) => {
                note("hit_euler_targets", format!("σ = {sigma}: {e}"));
                last_err = Some(e);
            }
        }
    }
    let Some((mut sigma0, mut x0, mut problem, mut assignment)) = found else {
        return Err(last_err
            .unwrap_or(Error::Search("no σ tried".into()))
            .in_stage("hit_euler_targets"));
    };
    note(
        "hit_euler_targets",
        format!("σ0 = {sigma0}, residual {:.2e}", assignment.max_residual()),
    );
    let mut t0_used = t0;
    let mut twist = stage("twist", twist_from_phases(&assignment, t0, cfg.shift_y))?;
    let mut twisted = stage(
        "verify_twisted",
        eval_twisted_combination(&comb, &twist, c64(sigma0, 0.0), table),
    )?;
    if twisted.value.norm() > cfg.twisted_tol {
        return Err(Error::Solver {
            msg: "twisted combination does not vanish".into(),
            residual: twisted.value.norm(),
        }
        .in_stage("verify_twisted"));
    }
    note(
        "verify_twisted",
        format!("|F^φ(σ0)| = {:.2e}", twisted.value.norm()),
    );

    // Lift: align p^{-it} with φ(p) on small primes, then refine to a genuine zero.
    let target = stage(
        "kronecker_lift",
        LiftTarget::from_twist(
            &twist,
            cfg.p_eff,
            sigma0,
            comb.k_max(),
            table,
            cfg.lift_window.0,
            cfg.lift_window.1 - cfg.lift_window.0,
        ),
    )?;
    let candidates = stage("kronecker_lift", kronecker_lift(&target, cfg.lift_step))?;
    let f_eval = |s: Complex64| comb.eval(s, table);
    let mut lift = None;
    for c in candidates.iter().take(cfg.newton_candidates) {
        let start = c64(sigma0, c.t);
        let Ok(z) = newton_zero(&f_eval, start, 1e-13, 60) else {
            continue;
        };
        if z.re > 1.0 && z.re <= sigma_top && z.im >= cfg.lift_window.0 && z.im <= cfg.lift_window.1
        {
            let cv = f_eval(start)?.value.norm();
            lift = Some((c.t, c.discrepancy, cv, z));
            break;
        }
    }
    let Some((cand_t, disc, cand_val, zero)) = lift else {
        note(
            "kronecker_lift",
            format!(
                "no genuine zero reached from {} candidates; twisted zero only",
                candidates.len()
            ),
        );
        let tz = TwistedZero {
            sigma0,
            t0: t0_used,
            root: x0,
            twist_digest: twist.digest(),
            twisted_value: twisted.value.norm(),
            euler_residual: assignment.max_residual(),
            lift: None,
            certificate: None,
            certificate_note: "twisted-only: lift found no genuine zero".into(),
            twist: Some(twist),
        };
        return Ok(Synthesis {
            verdict: Verdict::TwistedZero(Box::new(tz)),
            stages,
        });
    };
    note(
        "kronecker_lift",
        format!("candidate t = {cand_t:.6} (discrepancy {disc:.3e}) refined to zero {zero}"),
    );

    if cfg.reanchor && (zero.re - sigma0).abs() > 0.0 {
        // Re-solve the twist at σ0 = Re s*, seeded by p^{-it*}: the root of Q̃ at s* is the
        // vector of shifted values Π_{p>y} F_{j,p}(s*).
        let s_star = zero;
        let small = q.small_factors(s_star)?;
        let x_star = family
            .members
            .iter()
            .zip(&small)
            .map(|(f, sm)| Ok(f.eval(s_star, table)?.value / sm))
            .collect::<Result<Vec<_>>>()?;
        let new_problem =
            PhaseProblem::new(family, cfg.shift_y, solver.prime_cap, s_star.re, table)?;
        let targets = family
            .members
            .iter()
            .zip(&x_star)
            .map(|(f, xj)| Ok(xj / f.tail_factor(s_star.re, solver.prime_cap as f64, table)?))
            .collect::<Result<Vec<_>>>()?;
        let seed: Vec<f64> = new_problem
            .primes
            .iter()
            .map(|&p| wrap_angle(s_star.im * (p as f64).ln()))
            .collect();
        let a = stage(
            "reanchor",
            euler_phases(
                &new_problem,
                family,
                &targets,
                Some(&seed),
                solver.tol,
                solver.max_iter,
            ),
        )?;
        let tw = stage("reanchor", twist_from_phases(&a, s_star.im, cfg.shift_y))?;
        let val = stage(
            "reanchor",
            eval_twisted_combination(&comb, &tw, c64(s_star.re, 0.0), table),
        )?;
        if val.value.norm() > cfg.twisted_tol {
            return Err(Error::Solver {
                msg: "re-anchored twist does not vanish".into(),
                residual: val.value.norm(),
            }
            .in_stage("reanchor"));
        }
        note(
            "reanchor",
            format!(
                "σ0 moved from {sigma0} to {} with t0 = {}",
                s_star.re, s_star.im
            ),
        );
        sigma0 = s_star.re;
        t0_used = s_star.im;
        x0 = x_star;
        problem = new_problem;
        assignment = a;
        twist = tw;
        twisted = val;
    }
    let _ = &problem;
    let lift_t = zero.im;
    let value_at_lift = f_eval(c64(sigma0, lift_t))?.value.norm();
    let tb = transfer_bound(&comb, &twist, sigma0, lift_t, table).unwrap_or(f64::INFINITY);
    let rect = Rectangle::centered(c64(sigma0, lift_t), cfg.rect_width, cfg.rect_width)?;
    let (certificate, certificate_note) = match count_zeros_rectangle(&f_eval, &rect, cfg.cert_step)
    {
        Ok(mut c) => {
            c.provenance = Some(Provenance {
                sigma0,
                twist_digest: twist.digest(),
                lift_t,
                residuals: assignment.residual.clone(),
            });
            note("certify", format!("winding {}", c.winding));
            (Some(c), String::new())
        }
        Err(e) => {
            note("certify", e.to_string());
            (None, e.to_string())
        }
    };
    let tz = TwistedZero {
        sigma0,
        t0: t0_used,
        root: x0,
        twist_digest: twist.digest(),
        twisted_value: twisted.value.norm(),
        euler_residual: assignment.max_residual(),
        lift: Some(LiftOutcome {
            candidate_t: cand_t,
            discrepancy: disc,
            candidate_value: cand_val,
            zero,
            value_at_lift,
            transfer_bound: tb,
        }),
        certificate,
        certificate_note,
        twist: Some(twist),
    };
    Ok(Synthesis {
        verdict: Verdict::TwistedZero(Box::new(tz)),
        stages,
    })
}
