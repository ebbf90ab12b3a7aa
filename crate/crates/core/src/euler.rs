//! Members of the Euler-product class: local factors, truncated evaluation, axiom audits,
//! and estimation of the prime-correlation (Selberg) matrix.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::character::DirichletCharacter;
use crate::error::{Error, Result};
use crate::lfunc::{c64, dirichlet_l, log_dirichlet_l, prime_power_neg, prime_zeta_tail};
use crate::primes::PrimeTable;
use crate::special::Bounded;

pub const DEFAULT_K_MAX: usize = 8;

pub type CoeffFn = Arc<dyn Fn(u64) -> Option<Complex64> + Send + Sync>;

#[derive(Clone)]
pub enum Kind {
    /// Π_r L(s, χ_r); local roots at p are the χ_r(p).
    LProduct(Vec<DirichletCharacter>),
    /// Degree-one factors (1 − a(p) p^{-s})^{-1} from a prime coefficient stream.
    Stream(CoeffFn),
}

#[derive(Clone)]
pub struct EulerFunction {
    label: String,
    k_bound: f64,
    k_max: usize,
    kind: Kind,
}

impl fmt::Debug for EulerFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            Kind::LProduct(c) => format!(
                "L[{}]",
                c.iter()
                    .map(|x| format!("{}:{}", x.modulus(), x.index()))
                    .collect::<Vec<_>>()
                    .join(",")
            ),
            Kind::Stream(_) => "stream".into(),
        };
        f.debug_struct("EulerFunction")
            .field("label", &self.label)
            .field("k_bound", &self.k_bound)
            .field("kind", &kind)
            .finish()
    }
}

pub fn make_dirichlet_l(chi: &DirichletCharacter) -> EulerFunction {
    EulerFunction {
        label: format!("L(s,chi_{}_{})", chi.modulus(), chi.index()),
        k_bound: 1.0,
        k_max: DEFAULT_K_MAX,
        kind: Kind::LProduct(vec![chi.clone()]),
    }
}

impl EulerFunction {
    pub fn product_of_l(label: impl Into<String>, chars: Vec<DirichletCharacter>) -> Self {
        Self {
            label: label.into(),
            k_bound: chars.len() as f64,
            k_max: DEFAULT_K_MAX,
            kind: Kind::LProduct(chars),
        }
    }

    /// A degree-one stream; `k_bound` must dominate |a(p)|.
    pub fn from_stream(label: impl Into<String>, k_bound: f64, f: CoeffFn) -> Self {
        Self {
            label: label.into(),
            k_bound,
            k_max: DEFAULT_K_MAX,
            kind: Kind::Stream(f),
        }
    }

    /// a(p) = c at every prime.
    pub fn constant(label: impl Into<String>, c: Complex64) -> Self {
        Self::from_stream(label, c.norm(), Arc::new(move |_| Some(c)))
    }

    /// Reads "p,re,im" lines; a header line and blank lines are skipped.
    pub fn from_csv<R: Read>(label: impl Into<String>, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut map = HashMap::new();
        let mut bound: f64 = 0.0;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            if rec.len() != 3 {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected 3 fields, got {}", rec.len()),
                });
            }
            let Ok(p) = rec[0].parse::<u64>() else {
                if i == 0 {
                    continue;
                }
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("bad prime `{}`", &rec[0]),
                });
            };
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 1,
                    msg: format!("`{s}`: {e}"),
                })
            };
            let a = c64(parse(&rec[1])?, parse(&rec[2])?);
            bound = bound.max(a.norm());
            map.insert(p, a);
        }
        if map.is_empty() {
            return Err(Error::EmptyDomain("no coefficients in stream".into()));
        }
        let map = Arc::new(map);
        Ok(Self::from_stream(
            label,
            bound,
            Arc::new(move |p| map.get(&p).copied()),
        ))
    }

    pub fn with_k_max(mut self, k_max: usize) -> Self {
        self.k_max = k_max.max(1);
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn k_bound(&self) -> f64 {
        self.k_bound
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    /// Number of local roots per prime.
    pub fn degree(&self) -> usize {
        match &self.kind {
            Kind::LProduct(c) => c.len(),
            Kind::Stream(_) => 1,
        }
    }

    /// Bound on the modulus of each local root.
    pub fn root_bound(&self) -> f64 {
        match &self.kind {
            Kind::LProduct(_) => 1.0,
            Kind::Stream(_) => self.k_bound,
        }
    }

    /// Self-correlation forced by the construction, when it is known exactly.
    pub fn known_self_correlation(&self) -> Option<f64> {
        match &self.kind {
            Kind::LProduct(c) => {
                let mut m = 0usize;
                for a in c {
                    for b in c {
                        if a.modulus() == b.modulus() && a.index() == b.index() {
                            m += 1;
                        }
                    }
                }
                Some(m as f64)
            }
            Kind::Stream(_) => None,
        }
    }

    pub fn roots(&self, p: u64) -> Result<Vec<Complex64>> {
        match &self.kind {
            Kind::LProduct(c) => Ok(c.iter().map(|x| x.value(p)).collect()),
            Kind::Stream(f) => f(p).map(|a| vec![a]).ok_or_else(|| Error::Data {
                p,
                msg: format!("stream `{}` has no value", self.label),
            }),
        }
    }

    /// a_F(p).
    pub fn prime_coeff(&self, p: u64) -> Result<Complex64> {
        match &self.kind {
            Kind::LProduct(c) => Ok(c.iter().map(|x| x.value(p)).sum()),
            Kind::Stream(f) => f(p).ok_or_else(|| Error::Data {
                p,
                msg: format!("stream `{}` has no value", self.label),
            }),
        }
    }

    pub fn prime_coeffs(&self, primes: &[u64]) -> Result<Vec<Complex64>> {
        primes.par_iter().map(|&p| self.prime_coeff(p)).collect()
    }

    /// b_F(p^k) = Σ_r α_r^k / k.
    pub fn log_coeff(&self, p: u64, k: u32) -> Result<Complex64> {
        let k = k.max(1);
        Ok(self.roots(p)?.iter().map(|a| a.powu(k)).sum::<Complex64>() / k as f64)
    }

    /// a_F(p^e) for e = 0..=e_max: coefficients of Π_r (1 − α_r x)^{-1}.
    pub fn local_series(&self, p: u64, e_max: usize) -> Result<Vec<Complex64>> {
        let mut out = vec![c64(0.0, 0.0); e_max + 1];
        out[0] = c64(1.0, 0.0);
        for a in self.roots(p)? {
            for e in 1..=e_max {
                let prev = out[e - 1];
                out[e] += a * prev;
            }
        }
        Ok(out)
    }

    /// a_F(n) from the local factors.
    pub fn dirichlet_coeff(&self, n: u64) -> Result<Complex64> {
        if n == 0 {
            return Err(Error::Domain("n must be positive".into()));
        }
        let mut acc = c64(1.0, 0.0);
        for (p, e) in crate::arith::factorize(n) {
            acc *= self.local_series(p, e as usize)?[e as usize];
        }
        Ok(acc)
    }

    /// F_p(s) exactly.
    pub fn local_factor(&self, p: u64, s: Complex64) -> Result<Complex64> {
        let x = prime_power_neg(p, s);
        Ok(self
            .roots(p)?
            .iter()
            .map(|a| (c64(1.0, 0.0) - a * x).inv())
            .product())
    }

    /// log F_p(s) on the principal branch of each degree-one factor.
    pub fn local_log(&self, p: u64, s: Complex64) -> Result<Complex64> {
        let x = prime_power_neg(p, s);
        Ok(self
            .roots(p)?
            .iter()
            .map(|a| -(c64(1.0, 0.0) - a * x).ln())
            .sum())
    }

    /// Σ_{k ≤ k_max} b(p^k) p^{-ks} together with the dropped-tail bound.
    pub fn local_log_truncated(&self, p: u64, s: Complex64) -> Result<Bounded> {
        let x = prime_power_neg(p, s);
        let roots = self.roots(p)?;
        let mut v = c64(0.0, 0.0);
        for k in 1..=self.k_max as u32 {
            let xk = x.powu(k);
            v += roots.iter().map(|a| a.powu(k)).sum::<Complex64>() * xk / k as f64;
        }
        let r = self.root_bound() * x.norm();
        let kk = self.k_max as f64 + 1.0;
        let err = if r < 1.0 {
            self.degree() as f64 * r.powf(kk) / (kk * (1.0 - r))
        } else {
            f64::INFINITY
        };
        Ok(Bounded { value: v, err })
    }

    /// Π_{p ≤ limit} F_p(s) and a bound on |log F(s) − log value|.
    pub fn eval_truncated(
        &self,
        s: Complex64,
        prime_limit: u64,
        table: &PrimeTable,
    ) -> Result<(Complex64, f64)> {
        if s.re <= 1.0 {
            return Err(Error::Domain(format!("Re s = {} ≤ 1", s.re)));
        }
        if prime_limit < 2 {
            return Err(Error::Domain(format!("prime limit {prime_limit} < 2")));
        }
        if prime_limit > table.limit() {
            return Err(Error::Domain(format!(
                "prime limit {prime_limit} beyond table {}",
                table.limit()
            )));
        }
        let primes = table.range(0.0, prime_limit as f64);
        let log: Complex64 = primes
            .par_iter()
            .map(|&p| self.local_log(p, s))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum();
        Ok((log.exp(), self.tail_bound(s.re, prime_limit as f64, table)?))
    }

    /// Bound on |Σ_{p > x} log F_p(σ + it)|.
    pub fn tail_bound(&self, sigma: f64, x: f64, table: &PrimeTable) -> Result<f64> {
        let rho = self.root_bound();
        let d = self.degree() as f64;
        let lead = x.max(2.0).powf(-sigma) * rho;
        if lead >= 1.0 {
            return Ok(f64::INFINITY);
        }
        let x = x.min(table.limit() as f64);
        let t1 = prime_zeta_tail(sigma, table, x)?;
        let t2 = prime_zeta_tail(2.0 * sigma, table, x)?;
        // The tails come from a difference of O(1) sums; allow for its rounding.
        let slack = 1e-13 * (1.0 + t1);
        Ok(d * (rho * (t1 + slack) + rho * rho * t2 / (2.0 * (1.0 - lead))))
    }

    /// F(s) without truncation when a closed form exists, else the truncated product over the table.
    pub fn eval(&self, s: Complex64, table: &PrimeTable) -> Result<Bounded> {
        match &self.kind {
            Kind::LProduct(chars) => {
                let mut v = c64(1.0, 0.0);
                let mut rel = 0.0;
                for chi in chars {
                    let l = dirichlet_l(chi, s)?;
                    rel += l.err / l.value.norm().max(f64::MIN_POSITIVE);
                    v *= l.value;
                }
                Ok(Bounded {
                    value: v,
                    err: rel * v.norm(),
                })
            }
            Kind::Stream(_) => {
                let (v, tb) = self.eval_truncated(s, table.limit(), table)?;
                Ok(Bounded {
                    value: v,
                    err: v.norm() * (tb.exp() - 1.0),
                })
            }
        }
    }

    /// log F(s) on the Euler-product branch.
    pub fn log_eval(&self, s: Complex64, table: &PrimeTable) -> Result<Complex64> {
        match &self.kind {
            Kind::LProduct(chars) => chars.iter().map(|c| log_dirichlet_l(c, s, table)).sum(),
            Kind::Stream(_) => {
                let logs: Vec<Complex64> = table
                    .primes()
                    .par_iter()
                    .map(|&p| self.local_log(p, s))
                    .collect::<Result<_>>()?;
                Ok(logs.into_iter().sum())
            }
        }
    }

    /// F(σ)/Π_{p ≤ x} F_p(σ) for real σ: the untouched tail of the product.
    pub fn tail_factor(&self, sigma: f64, x: f64, table: &PrimeTable) -> Result<Complex64> {
        let s = c64(sigma, 0.0);
        let head: Complex64 = table
            .range(0.0, x)
            .par_iter()
            .map(|&p| self.local_log(p, s))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum();
        Ok((self.log_eval(s, table)? - head).exp())
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AxiomEntry {
    pub axiom: String,
    pub statistic: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegressionFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AxiomReport {
    pub label: String,
    pub axioms: Vec<AxiomEntry>,
    pub x_grid: Vec<f64>,
    pub e4_partial_sums: Vec<f64>,
    pub e5_fit: RegressionFit,
}

impl AxiomReport {
    pub fn all_pass(&self) -> bool {
        self.axioms.iter().all(|a| a.pass)
    }

    pub fn entry(&self, name: &str) -> Option<&AxiomEntry> {
        self.axioms.iter().find(|a| a.axiom == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Real least squares y ≈ slope·x + intercept.
pub fn linear_fit(x: &[f64], y: &[f64]) -> RegressionFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| b - (slope * a + intercept))
        .collect();
    let dof = (x.len() as f64 - 2.0).max(1.0);
    let s2 = residuals.iter().map(|r| r * r).sum::<f64>() / dof;
    let stderr = if sxx > 0.0 {
        (s2 / sxx).sqrt()
    } else {
        f64::INFINITY
    };
    RegressionFit {
        slope,
        intercept,
        stderr,
        residuals,
    }
}

/// Checks absolute convergence, local-factor consistency, the coefficient bound, the
/// higher-power budget and the log log growth of Σ|a(p)|²/p.
pub fn audit_axioms(f: &EulerFunction, x_grid: &[f64], table: &PrimeTable) -> Result<AxiomReport> {
    if x_grid.len() < 2 || x_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition(
            "x grid must be increasing with at least two points".into(),
        ));
    }
    let x_max = *x_grid.last().unwrap();
    if x_max > table.limit() as f64 || x_grid[0] < 3.0 {
        return Err(Error::Precondition(format!(
            "x grid must lie in [3, {}]",
            table.limit()
        )));
    }
    let primes = table.range(0.0, x_max);
    let coeffs = f.prime_coeffs(primes)?;
    let rho = f.root_bound();
    let d = f.degree() as f64;
    let mut axioms = Vec::new();

    // E1: Σ_{n ≤ X} |a(n)| n^{-σ} against the majorant Π_p (1 − ρ p^{-σ})^{-d}.
    let sigma1 = 1.5f64.max(rho.log2() + 0.5);
    let n1 = x_max.min(20_000.0) as u64;
    let mut stat = 0.0;
    for n in 1..=n1 {
        stat += f.dirichlet_coeff(n)?.norm() * (n as f64).powf(-sigma1);
    }
    let majorant: f64 = table
        .range(0.0, n1 as f64)
        .iter()
        .map(|&p| -d * (1.0 - rho * (p as f64).powf(-sigma1)).ln())
        .sum::<f64>()
        .exp();
    axioms.push(AxiomEntry {
        axiom: "E1".into(),
        statistic: stat,
        bound: majorant,
        pass: stat <= majorant * (1.0 + 1e-12),
    });

    // E2: exp of the truncated log series against the expanded local factor.
    let mut worst: f64 = 0.0;
    let mut budget: f64 = 0.0;
    for &p in table.range(0.0, 50.0) {
        for &s in &[c64(1.1, 0.0), c64(1.5, 7.0), c64(2.0, -30.0)] {
            let lt = f.local_log_truncated(p, s)?;
            let series = f.local_series(p, 60)?;
            let x = prime_power_neg(p, s);
            let expanded: Complex64 = series
                .iter()
                .enumerate()
                .map(|(e, c)| c * x.powu(e as u32))
                .sum();
            let direct = lt.value.exp();
            worst = worst.max(((direct - expanded) / expanded).norm());
            budget = budget.max(lt.err.exp_m1() + 1e-12);
        }
    }
    axioms.push(AxiomEntry {
        axiom: "E2".into(),
        statistic: worst,
        bound: budget,
        pass: worst <= budget,
    });

    // E3.
    let e3 = coeffs.iter().map(|a| a.norm()).fold(0.0, f64::max);
    axioms.push(AxiomEntry {
        axiom: "E3".into(),
        statistic: e3,
        bound: f.k_bound(),
        pass: e3 <= f.k_bound() * (1.0 + 1e-12),
    });

    // E4: Σ_{p ≤ x} Σ_{2 ≤ k ≤ k_max} |b(p^k)|/p^k on the grid, against d·Σ_p (ρ/p)²/(1 − ρ/p).
    let mut e4 = Vec::with_capacity(x_grid.len());
    let mut acc = 0.0;
    let mut idx = 0;
    for &x in x_grid {
        while idx < primes.len() && primes[idx] as f64 <= x {
            let p = primes[idx];
            for k in 2..=f.k_max() as u32 {
                acc += f.log_coeff(p, k)?.norm() / (p as f64).powi(k as i32);
            }
            idx += 1;
        }
        e4.push(acc);
    }
    let e4_bound = if rho < 2.0 {
        let head: f64 = primes
            .iter()
            .map(|&p| (rho / p as f64).powi(2) / (1.0 - rho / p as f64))
            .sum();
        let tail = rho * rho * prime_zeta_tail(2.0, table, x_max)? / (1.0 - rho / x_max);
        d * (head + tail)
    } else {
        f64::INFINITY
    };
    let e4_last = *e4.last().unwrap();
    axioms.push(AxiomEntry {
        axiom: "E4".into(),
        statistic: e4_last,
        bound: e4_bound,
        pass: e4_last.is_finite() && e4_last <= e4_bound,
    });

    // E5: slope of Σ_{p ≤ x} |a(p)|²/p against log log x.
    let mut s5 = Vec::with_capacity(x_grid.len());
    let mut acc = 0.0;
    let mut idx = 0;
    for &x in x_grid {
        while idx < primes.len() && primes[idx] as f64 <= x {
            acc += coeffs[idx].norm_sqr() / primes[idx] as f64;
            idx += 1;
        }
        s5.push(acc);
    }
    let ll: Vec<f64> = x_grid.iter().map(|x| x.ln().ln()).collect();
    let fit = linear_fit(&ll, &s5);
    axioms.push(AxiomEntry {
        axiom: "E5".into(),
        statistic: fit.slope,
        bound: 0.0,
        pass: fit.slope > 0.05,
    });

    Ok(AxiomReport {
        label: f.label().to_string(),
        axioms,
        x_grid: x_grid.to_vec(),
        e4_partial_sums: e4,
        e5_fit: fit,
    })
}

/// x ∈ {10³·2ʲ} up to x_max.
pub fn geometric_grid(x_max: f64) -> Vec<f64> {
    let mut g = Vec::new();
    let mut x = 1000.0;
    while x <= x_max * (1.0 + 1e-12) {
        g.push(x);
        x *= 2.0;
    }
    g
}

#[derive(Debug, Clone, Serialize)]
pub struct SelbergMatrixEstimate {
    pub labels: Vec<String>,
    pub x_grid: Vec<f64>,
    /// m_hat[i][j] as (re, im).
    pub m_hat: Vec<Vec<Complex64>>,
    pub stderr: Vec<Vec<f64>>,
}

impl SelbergMatrixEstimate {
    pub fn m(&self, i: usize, j: usize) -> Complex64 {
        self.m_hat[i][j]
    }

    /// Members whose self-correlation is not positive.
    pub fn non_positive_diagonal(&self) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.m_hat[i][i].re <= 0.05)
            .collect()
    }

    /// First pair with |m_ij| above `tol`, or a member with m_ii ≤ 0.
    pub fn check_orthogonal(&self, tol: f64) -> Result<()> {
        let n = self.labels.len();
        for i in 0..n {
            if self.m_hat[i][i].re <= tol {
                return Err(Error::NotOrthogonal {
                    i,
                    j: i,
                    m: self.m_hat[i][i].re,
                });
            }
            for j in i + 1..n {
                let m = self.m_hat[i][j].norm();
                if m > tol {
                    return Err(Error::NotOrthogonal { i, j, m });
                }
            }
        }
        Ok(())
    }
}

pub fn estimate_selberg_matrix(
    family: &[EulerFunction],
    x_max: f64,
    table: &PrimeTable,
) -> Result<SelbergMatrixEstimate> {
    if x_max < 1000.0 {
        return Err(Error::InsufficientData(format!(
            "x_max = {x_max} below 10^3"
        )));
    }
    if x_max > table.limit() as f64 {
        return Err(Error::Precondition(format!(
            "x_max {x_max} beyond table {}",
            table.limit()
        )));
    }
    let grid = geometric_grid(x_max);
    if grid.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "x_max = {x_max} gives only {} grid points",
            grid.len()
        )));
    }
    let primes = table.range(0.0, *grid.last().unwrap());
    let coeffs: Vec<Vec<Complex64>> = family
        .iter()
        .map(|f| f.prime_coeffs(primes))
        .collect::<Result<_>>()?;
    let n = family.len();
    let ll: Vec<f64> = grid.iter().map(|x| x.ln().ln()).collect();
    let mut m_hat = vec![vec![c64(0.0, 0.0); n]; n];
    let mut stderr = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut sums = Vec::with_capacity(grid.len());
            let mut acc = c64(0.0, 0.0);
            let mut idx = 0;
            for &x in &grid {
                while idx < primes.len() && primes[idx] as f64 <= x {
                    acc += coeffs[i][idx] * coeffs[j][idx].conj() / primes[idx] as f64;
                    idx += 1;
                }
                sums.push(acc);
            }
            let re = linear_fit(&ll, &sums.iter().map(|z| z.re).collect::<Vec<_>>());
            let im = linear_fit(&ll, &sums.iter().map(|z| z.im).collect::<Vec<_>>());
            m_hat[i][j] = c64(re.slope, im.slope);
            stderr[i][j] = re.stderr.hypot(im.stderr);
        }
    }
    Ok(SelbergMatrixEstimate {
        labels: family.iter().map(|f| f.label().to_string()).collect(),
        x_grid: grid,
        m_hat,
        stderr,
    })
}

/// An audited family together with the self-correlations m_j used downstream.
#[derive(Debug, Clone)]
pub struct Family {
    pub members: Vec<EulerFunction>,
    pub m: Vec<f64>,
    pub estimate: SelbergMatrixEstimate,
}

/// Off-diagonal |m| above this is treated as a correlation.
pub const ORTHOGONALITY_TOL: f64 = 0.25;

impl Family {
    /// Estimates the matrix up to `x_max`, rejects correlated families, and keeps exact
    /// self-correlations where the construction fixes them.
    pub fn audited(members: Vec<EulerFunction>, x_max: f64, table: &PrimeTable) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Precondition("empty family".into()));
        }
        let estimate = estimate_selberg_matrix(&members, x_max, table)?;
        estimate.check_orthogonal(ORTHOGONALITY_TOL)?;
        let m = members
            .iter()
            .enumerate()
            .map(|(i, f)| {
                f.known_self_correlation()
                    .unwrap_or(estimate.m_hat[i][i].re)
            })
            .collect();
        Ok(Self {
            members,
            m,
            estimate,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn k_bounds(&self) -> Vec<f64> {
        self.members.iter().map(|f| f.k_bound()).collect()
    }
}
