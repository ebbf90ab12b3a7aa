//! Phases t_p with Σ_{y<p≤P} a_j(p) p^{-(σ+it_p)} = z_j, by the block construction and by direct
//! Gauss–Newton, and the upgrade to targets for the Euler products themselves.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::uniform_delta;
use crate::error::{Error, Result};
use crate::euler::{Family, ORTHOGONALITY_TOL};
use crate::lfunc::{c64, prime_zeta_tail};
use crate::primes::PrimeTable;

const CHUNK: usize = 2048;

/// σ values tried, from the top, when looking for the largest validated window.
pub const SIGMA_SWEEP: [f64; 10] = [1.25, 1.2, 1.15, 1.1, 1.05, 1.02, 1.01, 1.005, 1.002, 1.001];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fill {
    /// Each block set gets relative density δ/(2mN)²; certificates and the window condition are enforced.
    #[default]
    Prescribed,
    /// The block sets split every eligible prime between them; certificates are only recorded.
    Exhaustive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Family size.
    pub n: usize,
    pub y: f64,
    pub sigma: f64,
    /// Bound on |z_j| for linear targets.
    pub rho: f64,
    /// Euler targets satisfy 1/R ≤ |z_j| ≤ R.
    pub r: f64,
    /// Number of matrices per half of the block construction.
    pub m: usize,
    pub prime_cap: u64,
    pub tol: f64,
    pub eta: f64,
    pub fill: Fill,
    pub density_tol: f64,
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n: 2,
            y: 10.0,
            sigma: 1.01,
            rho: 1.0,
            r: 2.0,
            m: 4,
            prime_cap: 100_000,
            tol: 1e-9,
            eta: 0.25,
            fill: Fill::Prescribed,
            density_tol: 0.02,
            seed: 0,
            restarts: 20,
            max_iter: 100,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, family_len: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Domain(m));
        if self.n == 0 || self.n != family_len {
            return bad(format!(
                "config has N = {} but the family has {family_len} members",
                self.n
            ));
        }
        if !(self.sigma > 1.0 && self.sigma <= 1.0 + self.eta + 1e-12) {
            return bad(format!("σ = {} outside (1, 1 + {}]", self.sigma, self.eta));
        }
        if self.prime_cap as f64 <= self.y {
            return bad(format!(
                "prime cap {} not above y = {}",
                self.prime_cap, self.y
            ));
        }
        if !(self.tol > 0.0) || self.rho < 1.0 || self.r < 1.0 || self.m == 0 {
            return bad("need tol > 0, ρ ≥ 1, R ≥ 1, m ≥ 1".into());
        }
        Ok(())
    }

    pub fn with_sigma(&self, sigma: f64) -> Self {
        Self {
            sigma,
            ..self.clone()
        }
    }

    /// (2mN)².
    pub fn block_scale(&self) -> f64 {
        let q = 2.0 * self.m as f64 * self.n as f64;
        q * q
    }

    /// σ grid on which the remainder bound is observed: [1, 1+η] in eight steps.
    pub fn window_grid(&self) -> Vec<f64> {
        (0..=8).map(|k| 1.0 + self.eta * k as f64 / 8.0).collect()
    }
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(x: f64) -> f64 {
    let w = x - TAU * (x / TAU).round();
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Deterministic chunked reduction of per-index vectors.
fn chunked_sum(len: usize, n: usize, f: impl Fn(usize, &mut [Complex64]) + Sync) -> Vec<Complex64> {
    let parts: Vec<Vec<Complex64>> = (0..len.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![c64(0.0, 0.0); n];
            for q in c * CHUNK..((c + 1) * CHUNK).min(len) {
                f(q, &mut acc);
            }
            acc
        })
        .collect();
    let mut out = vec![c64(0.0, 0.0); n];
    for p in parts {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub residual_per_j: Vec<f64>,
}

fn trace_entry(iteration: usize, r: &[Complex64]) -> TraceEntry {
    TraceEntry {
        iteration,
        residual_per_j: r.iter().map(|z| z.norm()).collect(),
    }
}

fn sup(r: &[Complex64]) -> f64 {
    r.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn l2(r: &[Complex64]) -> f64 {
    r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Σ_q b_jq e^{iφ_q} = target_j, solved for the angles φ.
struct PhaseSum<'a> {
    rows: &'a [Vec<Complex64>],
}

#[derive(Debug, Clone)]
struct LmOutcome {
    phi: Vec<f64>,
    trace: Vec<TraceEntry>,
    iterations: usize,
    residual: Vec<Complex64>,
}

impl PhaseSum<'_> {
    fn n(&self) -> usize {
        self.rows.len()
    }

    fn eval(&self, phi: &[f64]) -> Vec<Complex64> {
        chunked_sum(phi.len(), self.n(), |q, acc| {
            let e = Complex64::from_polar(1.0, phi[q]);
            for (j, a) in acc.iter_mut().enumerate() {
                *a += self.rows[j][q] * e;
            }
        })
    }

    fn residual(&self, phi: &[f64], target: &[Complex64]) -> Vec<Complex64> {
        self.eval(phi)
            .iter()
            .zip(target)
            .map(|(s, t)| s - t)
            .collect()
    }

    /// Real Jacobian column of unknown q: derivative i·b_q e^{iφ_q}, split into (Re; Im).
    fn column(&self, phi: &[f64], q: usize, col: &mut [f64]) {
        let n = self.n();
        let e = Complex64::from_polar(1.0, phi[q]);
        for j in 0..n {
            let be = self.rows[j][q] * e;
            col[j] = -be.im;
            col[n + j] = be.re;
        }
    }

    fn gram(&self, phi: &[f64]) -> DMatrix<f64> {
        let d = 2 * self.n();
        let parts: Vec<Vec<f64>> = (0..phi.len().div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut acc = vec![0.0; d * d];
                let mut col = vec![0.0; d];
                for q in c * CHUNK..((c + 1) * CHUNK).min(phi.len()) {
                    self.column(phi, q, &mut col);
                    for a in 0..d {
                        for b in 0..d {
                            acc[a * d + b] += col[a] * col[b];
                        }
                    }
                }
                acc
            })
            .collect();
        let mut m = DMatrix::zeros(d, d);
        for p in parts {
            for a in 0..d {
                for b in 0..d {
                    m[(a, b)] += p[a * d + b];
                }
            }
        }
        m
    }

    /// Minimum-norm damped Gauss–Newton: Δφ = −Jᵀ(JJᵀ + μI)⁻¹ r.
    fn solve(&self, target: &[Complex64], phi0: Vec<f64>, tol: f64, max_iter: usize) -> LmOutcome {
        let n = self.n();
        let mut phi = phi0;
        let mut r = self.residual(&phi, target);
        let mut trace = vec![trace_entry(0, &r)];
        let mut mu = 1e-12;
        let mut it = 0;
        while sup(&r) > tol && it < max_iter {
            let a = self.gram(&phi);
            let scale = (a.trace() / (2 * n) as f64).max(1e-300);
            let rv =
                DVector::from_iterator(2 * n, r.iter().map(|z| z.re).chain(r.iter().map(|z| z.im)));
            let mut accepted = false;
            while mu < 1e8 {
                let mut m = a.clone();
                for d in 0..2 * n {
                    m[(d, d)] += mu * scale;
                }
                let y = match m.clone().cholesky() {
                    Some(ch) => ch.solve(&rv),
                    None => match m.lu().solve(&rv) {
                        Some(y) => y,
                        None => {
                            mu *= 10.0;
                            continue;
                        }
                    },
                };
                let mut cand = phi.clone();
                cand.par_iter_mut().enumerate().for_each_init(
                    || vec![0.0; 2 * n],
                    |col, (q, c)| {
                        self.column(&phi, q, col);
                        let dot: f64 = col.iter().zip(y.iter()).map(|(u, v)| u * v).sum();
                        *c = wrap_angle(*c - dot);
                    },
                );
                let rc = self.residual(&cand, target);
                if l2(&rc) < l2(&r) {
                    phi = cand;
                    r = rc;
                    mu = (mu * 0.1).max(1e-14);
                    accepted = true;
                    break;
                }
                mu *= 10.0;
            }
            if !accepted {
                break;
            }
            it += 1;
            trace.push(trace_entry(it, &r));
        }
        LmOutcome {
            phi,
            trace,
            iterations: it,
            residual: r,
        }
    }
}

/// The truncated system over the primes in (y, P] at a fixed σ.
#[derive(Debug, Clone)]
pub struct PhaseProblem {
    pub sigma: f64,
    pub y: f64,
    pub cap: u64,
    pub primes: Vec<u64>,
    /// a_j(p), indexed [j][prime index].
    pub coeffs: Vec<Vec<Complex64>>,
    /// a_j(p) p^{-σ}.
    rows: Vec<Vec<Complex64>>,
    weights: Vec<f64>,
    tail: f64,
    k_bounds: Vec<f64>,
}

impl PhaseProblem {
    pub fn new(family: &Family, y: f64, cap: u64, sigma: f64, table: &PrimeTable) -> Result<Self> {
        if cap > table.limit() {
            return Err(Error::Domain(format!(
                "prime cap {cap} beyond table limit {}",
                table.limit()
            )));
        }
        let primes = table.range(y, cap as f64).to_vec();
        if primes.is_empty() {
            return Err(Error::Capacity(format!("no primes in ({y}, {cap}]")));
        }
        let coeffs = family
            .members
            .iter()
            .map(|f| f.prime_coeffs(&primes))
            .collect::<Result<Vec<_>>>()?;
        let tail = prime_zeta_tail(sigma, table, cap as f64)?;
        let mut out = Self {
            sigma,
            y,
            cap,
            primes,
            coeffs,
            rows: Vec::new(),
            weights: Vec::new(),
            tail,
            k_bounds: family.k_bounds(),
        };
        out.reweight(sigma);
        Ok(out)
    }

    fn reweight(&mut self, sigma: f64) {
        self.sigma = sigma;
        self.weights = self
            .primes
            .par_iter()
            .map(|&p| (p as f64).powf(-sigma))
            .collect();
        self.rows = self
            .coeffs
            .iter()
            .map(|c| c.iter().zip(&self.weights).map(|(a, w)| a * w).collect())
            .collect();
    }

    /// The same primes and coefficients at another σ.
    pub fn at_sigma(&self, sigma: f64, table: &PrimeTable) -> Result<Self> {
        let mut out = self.clone();
        out.tail = prime_zeta_tail(sigma, table, self.cap as f64)?;
        out.reweight(sigma);
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.coeffs.len()
    }

    pub fn len(&self) -> usize {
        self.primes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primes.is_empty()
    }

    pub fn weight(&self, idx: usize) -> f64 {
        self.weights[idx]
    }

    /// Σ_{y<p≤P} p^{-σ}.
    pub fn weight_sum(&self) -> f64 {
        let mut s = 0.0;
        for c in self.weights.chunks(CHUNK) {
            s += c.iter().sum::<f64>();
        }
        s
    }

    /// K_j Σ_{p>P} p^{-σ}: what the phases t_p = 0 beyond P can contribute.
    pub fn tail_bounds(&self) -> Vec<f64> {
        self.k_bounds.iter().map(|k| k * self.tail).collect()
    }

    /// Σ_p a_j(p) p^{-σ} e^{-iθ_p}.
    pub fn sums(&self, theta: &[f64]) -> Vec<Complex64> {
        let neg: Vec<f64> = theta.iter().map(|t| -t).collect();
        PhaseSum { rows: &self.rows }.eval(&neg)
    }

    /// Σ_p |a_j(p)| p^{-σ}: no phase choice reaches further.
    pub fn reach(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|z| z.norm()).sum())
            .collect()
    }

    fn assignment(
        &self,
        theta: &[f64],
        residual: Vec<f64>,
        trace: Vec<TraceEntry>,
        path: &str,
    ) -> PhaseAssignment {
        let t = theta
            .iter()
            .zip(&self.primes)
            .map(|(th, &p)| wrap_angle(*th) / (p as f64).ln())
            .collect();
        PhaseAssignment {
            sigma: self.sigma,
            y: self.y,
            cap: self.cap,
            primes: self.primes.clone(),
            t,
            residual,
            tail_bound: self.tail_bounds(),
            trace,
            path: path.into(),
        }
    }
}

/// Phases t_p for y < p ≤ P; t_p = 0 for p > P.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseAssignment {
    pub sigma: f64,
    pub y: f64,
    pub cap: u64,
    pub primes: Vec<u64>,
    /// In (−π/log p, π/log p].
    pub t: Vec<f64>,
    /// Achieved |sum − z_j| over (y, P].
    pub residual: Vec<f64>,
    /// Largest possible contribution of the primes beyond P.
    pub tail_bound: Vec<f64>,
    pub trace: Vec<TraceEntry>,
    pub path: String,
}

impl PhaseAssignment {
    /// θ_p = t_p log p.
    pub fn theta(&self) -> Vec<f64> {
        self.t
            .iter()
            .zip(&self.primes)
            .map(|(t, &p)| t * (p as f64).ln())
            .collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.residual.iter().copied().fold(0.0, f64::max)
    }

    pub fn phase_of(&self, p: u64) -> f64 {
        self.primes
            .binary_search(&p)
            .map(|i| self.t[i])
            .unwrap_or(0.0)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        out.write_record(["p", "t_p"]).map_err(io)?;
        for (p, t) in self.primes.iter().zip(&self.t) {
            out.write_record([p.to_string(), format!("{t:.17e}")])
                .map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn trace_json(&self) -> String {
        serde_json::to_string_pretty(&self.trace).expect("trace serializes")
    }
}

/// Block sets S_ik (i < 2m, k < N), leftover primes, and the markers of the construction.
#[derive(Debug, Clone)]
pub struct Partition {
    pub problem: PhaseProblem,
    pub delta: f64,
    pub fill: Fill,
    pub pairs: usize,
    /// Indices into `problem.primes`, [i][k].
    pub sets: Vec<Vec<Vec<usize>>>,
    pub directions: Vec<Vec<Vec<Complex64>>>,
    /// Σ_{S_ik} p^{-σ} / Σ_{y<p≤P} p^{-σ}.
    pub densities: Vec<Vec<f64>>,
    pub prescribed: Vec<Vec<f64>>,
    pub leftover: Vec<usize>,
    /// ε_p for block primes; 1 elsewhere.
    pub eps: Vec<Complex64>,
    m_family: Vec<f64>,
}

impl Partition {
    pub fn primes_of(&self, i: usize, k: usize) -> Vec<u64> {
        self.sets[i][k]
            .iter()
            .map(|&q| self.problem.primes[q])
            .collect()
    }

    pub fn leftover_primes(&self) -> Vec<u64> {
        self.leftover
            .iter()
            .map(|&q| self.problem.primes[q])
            .collect()
    }

    /// Σ_j u_j a_j(p)/√m_j at prime index q.
    pub fn projection(&self, u: &[Complex64], q: usize) -> Complex64 {
        (0..self.problem.n())
            .map(|j| u[j] * self.problem.coeffs[j][q] / self.m_family[j].sqrt())
            .sum()
    }
}

/// A unit w orthogonal to every vector in `vs`; returns u = conj(w).
fn orthogonal_direction(vs: &[Vec<Complex64>], n: usize) -> Vec<Complex64> {
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    for v in vs {
        let mut r = v.clone();
        for b in &basis {
            let dot: Complex64 = r.iter().zip(b).map(|(x, y)| x * y.conj()).sum();
            for (x, y) in r.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let norm = l2(&r);
        if norm > 1e-12 {
            basis.push(r.iter().map(|x| x / norm).collect());
        }
    }
    let mut best = (0.0, vec![c64(0.0, 0.0); n]);
    for e in 0..n {
        let mut r = vec![c64(0.0, 0.0); n];
        r[e] = c64(1.0, 0.0);
        for b in &basis {
            let dot = b[e].conj();
            for (x, y) in r.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let norm = l2(&r);
        if norm > best.0 {
            best = (norm, r);
        }
    }
    best.1.iter().map(|x| (x / best.0).conj()).collect()
}

/// Positions whose weights make up a fraction α of the total, spread evenly: a prime is taken
/// when that brings the running chosen weight closer to α times the weight seen so far.
fn select_weighted(weights: &[f64], alpha: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut err = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        err += alpha * w;
        if err >= 0.5 * w {
            out.push(i);
            err -= w;
        }
    }
    out
}

fn check_family(family: &Family) -> Result<()> {
    family
        .estimate
        .check_orthogonal(ORTHOGONALITY_TOL)
        .map_err(|e| Error::Precondition(e.to_string()))
}

/// The inductive choice of block sets inside the direction sets, restricted to (y, P].
pub fn build_partition(
    family: &Family,
    config: &SolverConfig,
    table: &PrimeTable,
) -> Result<Partition> {
    config.validate(family.len())?;
    check_family(family)?;
    let problem = PhaseProblem::new(family, config.y, config.prime_cap, config.sigma, table)?;
    partition_problem(problem, family, config)
}

fn partition_problem(
    problem: PhaseProblem,
    family: &Family,
    config: &SolverConfig,
) -> Result<Partition> {
    let n = problem.n();
    let pairs = config.m;
    let total = 2 * pairs * n;
    let delta = uniform_delta(&family.k_bounds(), &family.m);
    let sum_w = problem.weight_sum();
    let scale = config.block_scale() / sum_w;
    let len = problem.len();
    let mut used = vec![false; len];
    let mut eps = vec![c64(1.0, 0.0); len];
    let (mut sets, mut directions, mut densities, mut prescribed) =
        (vec![], vec![], vec![], vec![]);
    let sqrt_m: Vec<f64> = family.m.iter().map(|m| m.sqrt()).collect();

    for i in 0..2 * pairs {
        let (mut si, mut di, mut dens, mut pres) = (vec![], vec![], vec![], vec![]);
        let mut vs: Vec<Vec<Complex64>> = Vec::new();
        for k in 0..n {
            let u = if k == 0 {
                let mut e = vec![c64(0.0, 0.0); n];
                e[i % n] = c64(1.0, 0.0);
                e
            } else {
                orthogonal_direction(&vs, n)
            };
            let proj: Vec<Complex64> = (0..len)
                .into_par_iter()
                .map(|q| {
                    (0..n)
                        .map(|j| u[j] * problem.coeffs[j][q] / sqrt_m[j])
                        .sum()
                })
                .collect();
            let eligible: Vec<usize> = (0..len)
                .filter(|&q| !used[q] && proj[q].norm() >= 0.5)
                .collect();
            let label = format!("S_({},{})", i + 1, k + 1);
            if eligible.is_empty() {
                return Err(Error::Capacity(format!(
                    "{label} is empty: no unused prime in ({}, {}] has projection ≥ 1/2",
                    problem.y, problem.cap
                )));
            }
            let q_density: f64 = eligible.iter().map(|&q| problem.weights[q]).sum::<f64>() / sum_w;
            let want = match config.fill {
                Fill::Prescribed => delta / config.block_scale(),
                Fill::Exhaustive => q_density / (total - (i * n + k)) as f64,
            };
            let alpha = want / q_density;
            if alpha > 1.0 + 1e-12 {
                return Err(Error::Construction(format!(
                    "{label} needs relative density {want:.4e} but only {q_density:.4e} remains"
                )));
            }
            let w: Vec<f64> = eligible.iter().map(|&q| problem.weights[q]).collect();
            let chosen: Vec<usize> = select_weighted(&w, alpha.min(1.0))
                .into_iter()
                .map(|pos| eligible[pos])
                .collect();
            if chosen.is_empty() {
                return Err(Error::Capacity(format!(
                    "{label} is empty at prime cap {}; raise P",
                    problem.cap
                )));
            }
            let got: f64 = chosen.iter().map(|&q| problem.weights[q]).sum::<f64>() / sum_w;
            if config.fill == Fill::Prescribed && (got - want).abs() > config.density_tol {
                return Err(Error::Construction(format!(
                    "{label} has relative density {got:.4e}, prescribed {want:.4e}"
                )));
            }
            let mut v = vec![c64(0.0, 0.0); n];
            for &q in &chosen {
                used[q] = true;
                eps[q] = proj[q].conj() / proj[q].norm();
                for j in 0..n {
                    v[j] += problem.coeffs[j][q] * eps[q] * problem.weights[q] / sqrt_m[j];
                }
            }
            vs.push(v.iter().map(|x| x * scale).collect());
            si.push(chosen);
            di.push(u);
            dens.push(got);
            pres.push(want);
        }
        sets.push(si);
        directions.push(di);
        densities.push(dens);
        prescribed.push(pres);
    }
    let leftover = (0..len).filter(|&q| !used[q]).collect();
    Ok(Partition {
        problem,
        delta,
        fill: config.fill,
        pairs,
        sets,
        directions,
        densities,
        prescribed,
        leftover,
        eps,
        m_family: family.m.clone(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RemainderSigns {
    pub primes: Vec<u64>,
    pub omega: Vec<i8>,
    /// sup over the window of |(2mN)²/Σ_{y<p≤P} p^{-σ} · Σ_S ω_p a_j(p) p^{-σ}|_∞.
    pub c: f64,
    /// The same without the (2mN)² normalisation.
    pub c_raw: f64,
    /// Largest Euclidean norm of a partial sum during the greedy run at σ = 1.
    pub max_partial: f64,
    pub window: Vec<f64>,
}

/// Greedy signs in increasing p keeping the partial sums of ω_p a(p)/p small, and the observed
/// bound on the remainder over `sigma_window`.
pub fn bounded_remainder_signs(
    s: &[u64],
    family: &Family,
    sigma_window: &[f64],
    config: &SolverConfig,
    table: &PrimeTable,
) -> Result<RemainderSigns> {
    let mut primes = s.to_vec();
    primes.sort_unstable();
    let n = family.len();
    let coeffs = family
        .members
        .iter()
        .map(|f| f.prime_coeffs(&primes))
        .collect::<Result<Vec<_>>>()?;
    let mut r = vec![c64(0.0, 0.0); n];
    let mut omega = Vec::with_capacity(primes.len());
    let mut max_partial: f64 = 0.0;
    for (q, &p) in primes.iter().enumerate() {
        let inv = 1.0 / p as f64;
        let dot: f64 = (0..n)
            .map(|j| (r[j] * (coeffs[j][q] * inv).conj()).re)
            .sum();
        let w: i8 = if dot > 0.0 { -1 } else { 1 };
        for j in 0..n {
            r[j] += coeffs[j][q] * inv * w as f64;
        }
        max_partial = max_partial.max(l2(&r));
        omega.push(w);
    }
    let (mut c, mut c_raw) = (0.0f64, 0.0f64);
    let base = table.range(config.y, config.prime_cap as f64);
    for &sigma in sigma_window {
        let raw = sup(&signed_sum(&primes, &coeffs, &omega, sigma));
        let denom: f64 = base.par_iter().map(|&p| (p as f64).powf(-sigma)).sum();
        c_raw = c_raw.max(raw);
        if denom > 0.0 {
            c = c.max(raw * config.block_scale() / denom);
        }
    }
    Ok(RemainderSigns {
        primes,
        omega,
        c,
        c_raw,
        max_partial,
        window: sigma_window.to_vec(),
    })
}

fn signed_sum(
    primes: &[u64],
    coeffs: &[Vec<Complex64>],
    omega: &[i8],
    sigma: f64,
) -> Vec<Complex64> {
    chunked_sum(primes.len(), coeffs.len(), |q, acc| {
        let w = (primes[q] as f64).powf(-sigma) * omega[q] as f64;
        for (j, a) in acc.iter_mut().enumerate() {
            *a += coeffs[j][q] * w;
        }
    })
}

#[derive(Debug, Clone)]
pub struct MatrixBundle {
    pub sigma: f64,
    /// (2mN)²/Σ_{y<p≤P} p^{-σ}.
    pub scale: f64,
    pub g: Vec<DMatrix<Complex64>>,
    /// Frobenius norms.
    pub norms: Vec<f64>,
    pub dets: Vec<f64>,
    pub norm_bound: f64,
    pub det_bound: f64,
    /// Scaled remainder at σ.
    pub w: Vec<Complex64>,
    pub c: f64,
    pub failures: Vec<String>,
}

impl MatrixBundle {
    pub fn certified(&self) -> bool {
        self.failures.is_empty()
    }
}

/// g_i = diag(√m_j)·(v_i1 | … | v_iN) at σ, with the norm, determinant and remainder certificates.
pub fn assemble_matrices(
    partition: &Partition,
    family: &Family,
    sigma: f64,
    signs: &RemainderSigns,
    table: &PrimeTable,
) -> Result<MatrixBundle> {
    let prob = if (sigma - partition.problem.sigma).abs() < 1e-15 {
        partition.problem.clone()
    } else {
        partition.problem.at_sigma(sigma, table)?
    };
    if signs.primes != partition.leftover_primes() {
        return Err(Error::Precondition(
            "signs do not cover the leftover set".into(),
        ));
    }
    let n = prob.n();
    let sum_w = prob.weight_sum();
    let q = 2.0 * partition.pairs as f64 * n as f64;
    let scale = q * q / sum_w;
    let mut g = Vec::with_capacity(partition.sets.len());
    for blocks in &partition.sets {
        let mut mat = DMatrix::from_element(n, n, c64(0.0, 0.0));
        for (k, set) in blocks.iter().enumerate() {
            for &idx in set {
                let f = partition.eps[idx] * prob.weights[idx] * scale;
                for j in 0..n {
                    mat[(j, k)] += prob.coeffs[j][idx] * f;
                }
            }
        }
        g.push(mat);
    }
    let norms: Vec<f64> = g
        .iter()
        .map(|m| m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let dets: Vec<f64> = g.iter().map(|m| m.determinant().norm()).collect();
    let k2: f64 = family.k_bounds().iter().map(|k| k * k).sum();
    let delta = partition.delta;
    let norm_bound = 2.0 * delta * (n as f64 * k2).sqrt();
    let det_bound =
        (delta * delta / 8.0).powi(n as i32) * family.m.iter().map(|m| m.sqrt()).product::<f64>();
    let coeffs: Vec<Vec<Complex64>> = partition
        .problem
        .coeffs
        .iter()
        .map(|c| partition.leftover.iter().map(|&q| c[q]).collect())
        .collect();
    let w: Vec<Complex64> = signed_sum(&signs.primes, &coeffs, &signs.omega, sigma)
        .iter()
        .map(|z| z * scale)
        .collect();

    let mut failures = Vec::new();
    for (i, (&nm, &dt)) in norms.iter().zip(&dets).enumerate() {
        if nm > norm_bound {
            failures.push(format!("‖g_{}‖ = {nm:.4} > {norm_bound:.4}", i + 1));
        }
        if dt < det_bound {
            failures.push(format!("|det g_{}| = {dt:.4e} < {det_bound:.4e}", i + 1));
        }
    }
    let wn = sup(&w);
    if wn > signs.c * (1.0 + 1e-12)
        && sigma >= 1.0
        && sigma <= signs.window.iter().copied().fold(1.0, f64::max)
    {
        failures.push(format!(
            "|w_σ| = {wn:.4e} exceeds the observed bound {:.4e}",
            signs.c
        ));
    }
    if partition.fill == Fill::Prescribed && !failures.is_empty() {
        return Err(Error::SigmaWindow {
            sigma,
            reason: failures.join("; "),
        });
    }
    Ok(MatrixBundle {
        sigma,
        scale,
        g,
        norms,
        dets,
        norm_bound,
        det_bound,
        w,
        c: signs.c,
        failures,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct DecomposeOptions {
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            restarts: 20,
            seed: 0,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    /// f_ik = e^{i·phases[i][k]}.
    pub phases: Vec<Vec<f64>>,
    pub residual: f64,
    pub attempts: usize,
}

impl Decomposition {
    pub fn vectors(&self) -> Vec<Vec<Complex64>> {
        self.phases
            .iter()
            .map(|f| f.iter().map(|&a| Complex64::from_polar(1.0, a)).collect())
            .collect()
    }
}

/// Unimodular f_1..f_m with Σ_i g_i f_i = τ. The tolerance is relative to max(1, Σ_i ‖g_i‖).
pub fn unimodular_decompose(
    g: &[DMatrix<Complex64>],
    tau: &[Complex64],
    opts: &DecomposeOptions,
) -> Result<Decomposition> {
    let m = g.len();
    let n = tau.len();
    if m < 2 {
        return Err(Error::Precondition(format!(
            "need at least two matrices, got {m}"
        )));
    }
    if let Some(t) = tau.iter().find(|t| t.norm() > 1.0 + 1e-12) {
        return Err(Error::Domain(format!("|τ_j| = {} > 1", t.norm())));
    }
    for (i, gi) in g.iter().enumerate() {
        if gi.nrows() != n || gi.ncols() != n {
            return Err(Error::Domain(format!("g_{} is not {n}×{n}", i + 1)));
        }
        if gi.determinant().norm() == 0.0 {
            return Err(Error::Precondition(format!("g_{} is singular", i + 1)));
        }
    }
    let size: f64 = g
        .iter()
        .map(|m| m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .sum();
    let tol = opts.tol * size.max(1.0);
    if n == 1 && m == 2 {
        return two_circles(g[0][(0, 0)], g[1][(0, 0)], tau[0], tol);
    }
    let rows: Vec<Vec<Complex64>> = (0..n)
        .map(|j| {
            (0..m)
                .flat_map(|i| (0..n).map(move |k| (i, k)))
                .map(|(i, k)| g[i][(j, k)])
                .collect()
        })
        .collect();
    let sys = PhaseSum { rows: &rows };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best = f64::INFINITY;
    for attempt in 0..=opts.restarts {
        let phi0: Vec<f64> = if attempt == 0 {
            vec![0.0; m * n]
        } else {
            (0..m * n).map(|_| rng.gen_range(-PI..PI)).collect()
        };
        let out = sys.solve(tau, phi0, tol, opts.max_iter);
        let res = sup(&out.residual);
        best = best.min(res);
        if res <= tol {
            let phases = out.phi.chunks(n).map(|c| c.to_vec()).collect();
            return Ok(Decomposition {
                phases,
                residual: res,
                attempts: attempt + 1,
            });
        }
    }
    Err(Error::Solver {
        msg: format!(
            "no unimodular decomposition after {} starts; try a larger m",
            opts.restarts + 1
        ),
        residual: best,
    })
}

/// g1 f1 + g2 f2 = τ for scalars: intersect |x| = |g1| with |τ − x| = |g2|.
fn two_circles(g1: Complex64, g2: Complex64, tau: Complex64, tol: f64) -> Result<Decomposition> {
    let (r1, r2, d) = (g1.norm(), g2.norm(), tau.norm());
    let x = if d <= tol {
        if (r1 - r2).abs() > tol {
            return Err(Error::Solver {
                msg: "|g1| ≠ |g2| cannot cancel".into(),
                residual: (r1 - r2).abs(),
            });
        }
        g1
    } else {
        let a = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d);
        let h2 = r1 * r1 - a * a;
        if h2 < -tol * (r1 + r2 + d) {
            let gap = (d - (r1 + r2)).max((r1 - r2).abs() - d);
            return Err(Error::Solver {
                msg: "τ outside the reachable annulus".into(),
                residual: gap,
            });
        }
        tau / d * c64(a, h2.max(0.0).sqrt())
    };
    let phases = vec![vec![(x / g1).arg()], vec![((tau - x) / g2).arg()]];
    let f1 = Complex64::from_polar(1.0, phases[0][0]);
    let f2 = Complex64::from_polar(1.0, phases[1][0]);
    let residual = (g1 * f1 + g2 * f2 - tau).norm();
    Ok(Decomposition {
        phases,
        residual,
        attempts: 1,
    })
}

/// The partition, remainder signs and matrices for one (family, config), reusable across targets.
#[derive(Debug, Clone)]
pub struct PhaseSolver {
    pub config: SolverConfig,
    pub partition: Partition,
    pub signs: RemainderSigns,
    pub bundle: MatrixBundle,
}

#[derive(Debug, Clone)]
pub struct LinearSolve {
    pub constructive: PhaseAssignment,
    pub direct: PhaseAssignment,
    /// max_j |constructive sum − direct sum|.
    pub agreement: f64,
}

/// Σ_{y<p≤P} p^{-σ} ≥ ρ·max(1, C)·(2mN)², with C the unnormalised remainder bound.
pub fn window_condition(prime_sum: f64, rho: f64, c_raw: f64, block_scale: f64) -> bool {
    prime_sum >= rho * c_raw.max(1.0) * block_scale
}

impl PhaseSolver {
    pub fn new(family: &Family, config: &SolverConfig, table: &PrimeTable) -> Result<Self> {
        let partition = build_partition(family, config, table)?;
        let signs = bounded_remainder_signs(
            &partition.leftover_primes(),
            family,
            &config.window_grid(),
            config,
            table,
        )?;
        if config.fill == Fill::Prescribed {
            let sum = partition.problem.weight_sum();
            if !window_condition(sum, config.rho, signs.c_raw, config.block_scale()) {
                return Err(Error::Capacity(format!(
                    "Σ_{{{}<p≤{}}} p^-{} = {sum:.4} < ρ·C·(2mN)² = {:.4}",
                    config.y,
                    config.prime_cap,
                    config.sigma,
                    config.rho * signs.c_raw.max(1.0) * config.block_scale()
                )));
            }
        }
        let bundle = assemble_matrices(&partition, family, config.sigma, &signs, table)?;
        Ok(Self {
            config: config.clone(),
            partition,
            signs,
            bundle,
        })
    }

    pub fn problem(&self) -> &PhaseProblem {
        &self.partition.problem
    }

    fn decompose_options(&self) -> DecomposeOptions {
        DecomposeOptions {
            tol: (self.config.tol * 1e-3).max(1e-14),
            restarts: self.config.restarts,
            seed: self.config.seed,
            max_iter: self.config.max_iter.max(200),
        }
    }

    /// θ_p from f_i(τ) on the first m blocks, f_i(−w) on the rest, and ω_p on the leftover set.
    pub fn solve_constructive(&self, z: &[Complex64]) -> Result<PhaseAssignment> {
        let prob = self.problem();
        if z.len() != prob.n() {
            return Err(Error::Domain(format!(
                "target has {} entries, family has {}",
                z.len(),
                prob.n()
            )));
        }
        let b = &self.bundle;
        let pairs = self.partition.pairs;
        // Prescribed: unit normalisation. Exhaustive: the smallest one putting τ and −w in D_N.
        let k = match self.config.fill {
            Fill::Prescribed => 1.0,
            Fill::Exhaustive => {
                let raw = sup(z).max(sup(&b.w) / b.scale).max(1e-12);
                1.0 / (raw * b.scale)
            }
        };
        let g: Vec<DMatrix<Complex64>> = b.g.iter().map(|m| m * c64(k, 0.0)).collect();
        let tau: Vec<Complex64> = z.iter().map(|x| x * b.scale * k).collect();
        let minus_w: Vec<Complex64> = b.w.iter().map(|x| -x * k).collect();
        let opts = self.decompose_options();
        let first = unimodular_decompose(&g[..pairs], &tau, &opts)?;
        let second = unimodular_decompose(&g[pairs..], &minus_w, &opts)?;

        let mut theta = vec![0.0; prob.len()];
        for (i, blocks) in self.partition.sets.iter().enumerate() {
            let f = if i < pairs {
                &first.phases[i]
            } else {
                &second.phases[i - pairs]
            };
            for (kk, set) in blocks.iter().enumerate() {
                for &q in set {
                    // p^{-iθ} = ε_p f_ik.
                    theta[q] = wrap_angle(-(self.partition.eps[q].arg() + f[kk]));
                }
            }
        }
        for (&q, &w) in self.partition.leftover.iter().zip(&self.signs.omega) {
            theta[q] = if w < 0 { PI } else { 0.0 };
        }
        let s = prob.sums(&theta);
        let r: Vec<Complex64> = s.iter().zip(z).map(|(a, b)| a - b).collect();
        let res = r.iter().map(|x| x.norm()).collect();
        Ok(prob.assignment(&theta, res, vec![trace_entry(0, &r)], "constructive"))
    }

    pub fn solve(&self, z: &[Complex64]) -> Result<LinearSolve> {
        let rho = self.config.rho;
        if let Some(x) = z.iter().find(|x| x.norm() > rho) {
            return Err(Error::Domain(format!("|z_j| = {} > ρ = {rho}", x.norm())));
        }
        let constructive = self.solve_constructive(z)?;
        let direct = solve_direct(
            self.problem(),
            z,
            Some(&constructive.theta()),
            self.config.tol,
            self.config.max_iter,
        )?;
        let sc = self.problem().sums(&constructive.theta());
        let sd = self.problem().sums(&direct.theta());
        let agreement = sc
            .iter()
            .zip(&sd)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        if constructive.max_residual() > self.config.tol {
            return Err(Error::Solver {
                msg: "constructive path missed the target".into(),
                residual: constructive.max_residual(),
            });
        }
        Ok(LinearSolve {
            constructive,
            direct,
            agreement,
        })
    }
}

/// Both paths on one target; see [`PhaseSolver`] to reuse the construction.
pub fn solve_linear_phase_system(
    family: &Family,
    config: &SolverConfig,
    z: &[Complex64],
    table: &PrimeTable,
) -> Result<LinearSolve> {
    PhaseSolver::new(family, config, table)?.solve(z)
}

/// Damped Gauss–Newton on the angles alone, from `theta0` (zeros if absent).
pub fn solve_direct(
    problem: &PhaseProblem,
    z: &[Complex64],
    theta0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<PhaseAssignment> {
    if z.len() != problem.n() {
        return Err(Error::Domain(format!(
            "target has {} entries, family has {}",
            z.len(),
            problem.n()
        )));
    }
    let phi0: Vec<f64> = match theta0 {
        Some(t) if t.len() == problem.len() => t.iter().map(|x| -x).collect(),
        Some(t) => {
            return Err(Error::Domain(format!(
                "seed has {} phases for {} primes",
                t.len(),
                problem.len()
            )))
        }
        None => vec![0.0; problem.len()],
    };
    let out = PhaseSum {
        rows: &problem.rows,
    }
    .solve(z, phi0, tol, max_iter);
    let res: Vec<f64> = out.residual.iter().map(|x| x.norm()).collect();
    let worst = res.iter().copied().fold(0.0, f64::max);
    if worst > tol {
        return Err(Error::Solver {
            msg: format!("direct path stalled after {} iterations", out.iterations),
            residual: worst,
        });
    }
    let theta: Vec<f64> = out.phi.iter().map(|x| -x).collect();
    Ok(problem.assignment(&theta, res, out.trace, "direct"))
}

/// Π_{y<p≤P} F_{j,p}(σ + it_p) = z_j with 1/R ≤ |z_j| ≤ R.
pub fn hit_euler_targets(
    family: &Family,
    config: &SolverConfig,
    z: &[Complex64],
    table: &PrimeTable,
    seed: Option<&[f64]>,
) -> Result<PhaseAssignment> {
    config.validate(family.len())?;
    let r = config.r;
    if let Some(x) = z
        .iter()
        .find(|x| x.norm() < 1.0 / r - 1e-12 || x.norm() > r + 1e-12)
    {
        return Err(Error::Domain(format!(
            "|z_j| = {} outside [1/{r}, {r}]",
            x.norm()
        )));
    }
    let problem = PhaseProblem::new(family, config.y, config.prime_cap, config.sigma, table)?;
    euler_phases(&problem, family, z, seed, config.tol, config.max_iter)
}

/// Σ_p log F_{j,p}(σ + iθ_p/log p) for every j.
pub fn local_log_sums(
    problem: &PhaseProblem,
    family: &Family,
    theta: &[f64],
) -> Result<Vec<Complex64>> {
    let n = problem.n();
    let parts: Vec<Vec<Complex64>> = (0..problem.len().div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![c64(0.0, 0.0); n];
            for q in c * CHUNK..((c + 1) * CHUNK).min(problem.len()) {
                let p = problem.primes[q];
                let s = c64(problem.sigma, theta[q] / (p as f64).ln());
                for (j, f) in family.members.iter().enumerate() {
                    acc[j] += f.local_log(p, s)?;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut out = vec![c64(0.0, 0.0); n];
    for p in parts {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    Ok(out)
}

/// Fixed point on the linear targets Log z_j − (higher prime-power terms at the current phases).
/// No annulus check: callers dividing out a tail factor may pass any non-zero target.
pub fn euler_phases(
    problem: &PhaseProblem,
    family: &Family,
    z: &[Complex64],
    seed: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<PhaseAssignment> {
    if z.len() != problem.n() || z.iter().any(|x| x.norm() == 0.0) {
        return Err(Error::Domain(
            "targets must be non-zero, one per family member".into(),
        ));
    }
    let mut theta: Vec<f64> = match seed {
        Some(t) if t.len() == problem.len() => t.to_vec(),
        Some(_) => {
            return Err(Error::Domain(
                "seed length differs from the prime count".into(),
            ))
        }
        None => vec![0.0; problem.len()],
    };
    let untwisted = local_log_sums(problem, family, &vec![0.0; problem.len()])?;
    // Branch of Log z_j nearest the untwisted logarithm.
    let target: Vec<Complex64> = z
        .iter()
        .zip(&untwisted)
        .map(|(x, l)| {
            let k = ((l.im - x.arg()) / TAU).round();
            x.ln() + c64(0.0, TAU * k)
        })
        .collect();
    let rows = PhaseSum {
        rows: &problem.rows,
    };
    let mut trace = Vec::new();
    let mut best = f64::INFINITY;
    let mut stalls = 0;
    for outer in 0..60 {
        let full = local_log_sums(problem, family, &theta)?;
        let prod_res: Vec<f64> = full
            .iter()
            .zip(z)
            .map(|(l, x)| (l.exp() - x).norm())
            .collect();
        let worst = prod_res.iter().copied().fold(0.0, f64::max);
        trace.push(TraceEntry {
            iteration: outer,
            residual_per_j: prod_res.clone(),
        });
        if worst <= tol {
            return Ok(problem.assignment(&theta, prod_res, trace, "euler"));
        }
        if worst > 0.5 * best {
            stalls += 1;
            if stalls >= 4 {
                return Err(Error::Solver {
                    msg: "Euler-target iteration stalled".into(),
                    residual: worst,
                });
            }
        }
        best = best.min(worst);
        let lin = problem.sums(&theta);
        let lin_target: Vec<Complex64> = (0..problem.n())
            .map(|j| target[j] - (full[j] - lin[j]))
            .collect();
        let phi0 = theta.iter().map(|x| -x).collect();
        let out = rows.solve(&lin_target, phi0, tol * 1e-2, max_iter);
        let lin_res = sup(&out.residual);
        if lin_res > tol {
            return Err(Error::Solver {
                msg: format!("linearised target out of reach at outer step {outer}"),
                residual: lin_res,
            });
        }
        theta = out.phi.iter().map(|x| -x).collect();
    }
    Err(Error::Solver {
        msg: "Euler-target iteration did not settle".into(),
        residual: best,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaCheck {
    pub sigma: f64,
    pub prime_sum: f64,
    pub required: f64,
    pub window_ok: bool,
    pub certified: bool,
    pub note: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaWindowReport {
    pub checks: Vec<SigmaCheck>,
    /// Largest σ − 1 such that every grid σ' ≤ σ passes.
    pub eta: Option<f64>,
}

/// Sweeps σ down from 1.25, rebuilding the construction at each grid point.
pub fn discover_sigma_window(
    family: &Family,
    config: &SolverConfig,
    table: &PrimeTable,
) -> Result<SigmaWindowReport> {
    check_family(family)?;
    let mut checks = Vec::new();
    for &sigma in &SIGMA_SWEEP {
        let cfg = SolverConfig {
            sigma,
            eta: SIGMA_SWEEP[0] - 1.0,
            ..config.clone()
        };
        cfg.validate(family.len())?;
        let problem = PhaseProblem::new(family, cfg.y, cfg.prime_cap, sigma, table)?;
        let prime_sum = problem.weight_sum();
        let (window_ok, certified, required, note) = match partition_problem(problem, family, &cfg)
        {
            Ok(part) => {
                let window: Vec<f64> = cfg
                    .window_grid()
                    .into_iter()
                    .filter(|s| *s <= sigma)
                    .collect();
                let signs =
                    bounded_remainder_signs(&part.leftover_primes(), family, &window, &cfg, table)?;
                let required = cfg.rho * signs.c_raw.max(1.0) * cfg.block_scale();
                let ok = window_condition(prime_sum, cfg.rho, signs.c_raw, cfg.block_scale());
                match assemble_matrices(&part, family, sigma, &signs, table) {
                    Ok(b) => (ok, b.certified(), required, b.failures.join("; ")),
                    Err(e) => (ok, false, required, e.to_string()),
                }
            }
            Err(e) => (false, false, f64::NAN, e.to_string()),
        };
        checks.push(SigmaCheck {
            sigma,
            prime_sum,
            required,
            window_ok,
            certified,
            note,
        });
    }
    // Grid is descending; the window is the longest passing suffix.
    let mut eta = None;
    for c in checks.iter().rev() {
        if c.window_ok && c.certified {
            eta = Some(c.sigma - 1.0);
        } else {
            break;
        }
    }
    Ok(SigmaWindowReport { checks, eta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::character::character_table;
    use crate::euler::{estimate_selberg_matrix, make_dirichlet_l, EulerFunction};
    use crate::primes::{shared_table, sieve_primes};
    use proptest::prelude::*;
    use rand::Rng;
    use std::sync::Arc;

    fn mod5_family() -> Family {
        let t = shared_table(1_000_000).unwrap();
        let chars = character_table(5).unwrap();
        let members = vec![make_dirichlet_l(&chars[1]), make_dirichlet_l(&chars[2])];
        Family::audited(members, 1e6, &t).unwrap()
    }

    fn ones_family() -> Family {
        let t = shared_table(1_000_000).unwrap();
        let f = EulerFunction::from_stream("ones", 1.0, Arc::new(|_| Some(c64(1.0, 0.0))));
        Family::audited(vec![f], 1e6, &t).unwrap()
    }

    fn exhaustive() -> SolverConfig {
        SolverConfig {
            fill: Fill::Exhaustive,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn weighted_selection_tracks_the_fraction() {
        let w: Vec<f64> = (1..5000).map(|k| 1.0 / k as f64).collect();
        let total: f64 = w.iter().sum();
        for alpha in [0.25, 0.1, 3.0 / 7.0 / 64.0, 1.0] {
            let got: f64 = select_weighted(&w, alpha).iter().map(|&i| w[i]).sum();
            assert!(
                (got / total - alpha).abs() < 0.5 / total + 1e-12,
                "{alpha}: {}",
                got / total
            );
        }
        assert!(select_weighted(&w, 0.0).is_empty());
    }

    #[test]
    fn angles_wrap_into_half_open_interval() {
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(7.0) - (7.0 - TAU)).abs() < 1e-15);
        assert!(wrap_angle(-3.0 * PI) == PI);
    }

    #[test]
    fn single_stream_partition_has_quarter_densities() {
        let t = shared_table(1_000_000).unwrap();
        let fam = ones_family();
        let cfg = SolverConfig {
            n: 1,
            m: 1,
            ..SolverConfig::default()
        };
        let part = build_partition(&fam, &cfg, &t).unwrap();
        assert_eq!(part.sets.len(), 2);
        for i in 0..2 {
            assert!(
                (part.densities[i][0] - 0.25).abs() < 0.05,
                "{:?}",
                part.densities
            );
        }
    }

    #[test]
    fn equal_members_fail_the_orthogonality_precondition() {
        let t = shared_table(1_000_000).unwrap();
        let chi = &character_table(5).unwrap()[1];
        let members = vec![make_dirichlet_l(chi), make_dirichlet_l(chi)];
        let estimate = estimate_selberg_matrix(&members, 1e6, &t).unwrap();
        let fam = Family {
            members,
            m: vec![1.0, 1.0],
            estimate,
        };
        let err = build_partition(&fam, &SolverConfig::default(), &t).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)), "{err}");
    }

    #[test]
    fn mod5_partition_invariants() {
        let t = shared_table(1_000_000).unwrap();
        let fam = mod5_family();
        let cfg = SolverConfig {
            m: 2,
            ..SolverConfig::default()
        };
        let part = build_partition(&fam, &cfg, &t).unwrap();
        assert_eq!(part.sets.len(), 4);
        assert_eq!(part.sets.iter().map(|s| s.len()).sum::<usize>(), 8);
        let want = 3.0 / 7.0 / 64.0;
        let mut seen = vec![false; part.problem.len()];
        for i in 0..4 {
            for k in 0..2 {
                assert!((part.densities[i][k] - want).abs() < 0.02);
                let u = &part.directions[i][k];
                assert!((l2(u) - 1.0).abs() < 1e-12);
                for &q in &part.sets[i][k] {
                    assert!(!seen[q], "prime index {q} in two sets");
                    seen[q] = true;
                    let c = part.eps[q] * part.projection(u, q);
                    assert!(c.im.abs() < 1e-12 && c.re >= 0.5 - 1e-12);
                }
            }
        }
        for &q in &part.leftover {
            assert!(!seen[q]);
        }
    }

    #[test]
    fn later_directions_are_orthogonal_to_earlier_columns() {
        let t = shared_table(1_000_000).unwrap();
        let fam = mod5_family();
        let cfg = SolverConfig {
            m: 2,
            ..SolverConfig::default()
        };
        let part = build_partition(&fam, &cfg, &t).unwrap();
        let prob = &part.problem;
        for i in 0..4 {
            let v: Vec<Complex64> = (0..2)
                .map(|j| {
                    part.sets[i][0]
                        .iter()
                        .map(|&q| prob.coeffs[j][q] * part.eps[q] * prob.weight(q))
                        .sum()
                })
                .collect();
            let u = &part.directions[i][1];
            let dot: Complex64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            assert!(dot.norm() < 1e-12 * l2(&v).max(1.0));
        }
    }

    #[test]
    fn remainder_signs_stay_within_first_term() {
        let t = sieve_primes(100_000).unwrap();
        let fam = ones_family();
        let cfg = SolverConfig {
            n: 1,
            m: 1,
            ..SolverConfig::default()
        };
        let s = t.range(10.0, 1e5).to_vec();
        let r = bounded_remainder_signs(&s, &fam, &cfg.window_grid(), &cfg, &t).unwrap();
        assert!(r.max_partial <= 1.0 / 11.0 + 1e-15);
        let first = cfg.block_scale()
            / 11.0
            / t.range(10.0, 1e5)
                .iter()
                .map(|&p| 1.0 / p as f64)
                .sum::<f64>();
        assert!(r.c < 10.0 * first, "{} vs {first}", r.c);

        let empty = bounded_remainder_signs(&[], &fam, &cfg.window_grid(), &cfg, &t).unwrap();
        assert_eq!(empty.c, 0.0);

        let flipped: Vec<i8> = r.omega.iter().map(|w| -w).collect();
        let c = vec![vec![c64(1.0, 0.0); s.len()]];
        let a = signed_sum(&s, &c, &r.omega, 1.1);
        let b = signed_sum(&s, &c, &flipped, 1.1);
        assert!((a[0] + b[0]).norm() < 1e-15);
    }

    #[test]
    fn single_stream_matrices_meet_certificates() {
        let t = shared_table(1_000_000).unwrap();
        let fam = ones_family();
        let cfg = SolverConfig {
            n: 1,
            m: 1,
            ..SolverConfig::default()
        };
        let part = build_partition(&fam, &cfg, &t).unwrap();
        let signs =
            bounded_remainder_signs(&part.leftover_primes(), &fam, &cfg.window_grid(), &cfg, &t)
                .unwrap();
        let b = assemble_matrices(&part, &fam, cfg.sigma, &signs, &t).unwrap();
        for i in 0..2 {
            assert_eq!(b.dets[i], b.g[i][(0, 0)].norm());
            assert!(b.dets[i] >= part.delta * part.delta * fam.m[0].sqrt() / 8.0);
            assert!(b.norms[i] < b.norm_bound);
        }
    }

    #[test]
    fn unimodular_rotation_of_coefficients_keeps_certificates() {
        let t = shared_table(1_000_000).unwrap();
        let chars = character_table(5).unwrap();
        let cfg = SolverConfig {
            m: 2,
            ..SolverConfig::default()
        };
        let rot = Complex64::from_polar(1.0, 0.7);
        let c1 = chars[1].clone();
        let rotated =
            EulerFunction::from_stream("rotated", 1.0, Arc::new(move |p| Some(c1.value(p) * rot)));
        let base = mod5_family();
        let fam2 = Family {
            members: vec![rotated, base.members[1].clone()],
            ..base.clone()
        };
        let build = |f: &Family| {
            let part = build_partition(f, &cfg, &t).unwrap();
            let signs =
                bounded_remainder_signs(&part.leftover_primes(), f, &cfg.window_grid(), &cfg, &t)
                    .unwrap();
            assemble_matrices(&part, f, cfg.sigma, &signs, &t).unwrap()
        };
        let (a, b) = (build(&base), build(&fam2));
        for i in 0..4 {
            assert!((a.dets[i] - b.dets[i]).abs() < 1e-9 * a.dets[i]);
            assert!((a.norms[i] - b.norms[i]).abs() < 1e-9 * a.norms[i]);
        }
    }

    #[test]
    fn two_scalar_decompositions() {
        let one = DMatrix::from_element(1, 1, c64(1.0, 0.0));
        let g = vec![one.clone(), one];
        let d = unimodular_decompose(&g, &[c64(0.0, 0.0)], &DecomposeOptions::default()).unwrap();
        let f = d.vectors();
        assert!((f[0][0] - 1.0).norm() < 1e-15 && (f[1][0] + 1.0).norm() < 1e-15);
        // |τ| = 2 is outside D_1; the boundary case is checked on the scaled system.
        let half = DMatrix::from_element(1, 1, c64(0.5, 0.0));
        let d = unimodular_decompose(
            &[half.clone(), half],
            &[c64(1.0, 0.0)],
            &DecomposeOptions::default(),
        )
        .unwrap();
        let f = d.vectors();
        assert!((f[0][0] - 1.0).norm() < 1e-12 && (f[1][0] - 1.0).norm() < 1e-12);
        assert!(
            unimodular_decompose(&g[..1], &[c64(0.0, 0.0)], &DecomposeOptions::default()).is_err()
        );
    }

    fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<Complex64> {
        let a = DMatrix::from_fn(n, n, |_, _| {
            c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        a.qr().q()
    }

    #[test]
    fn random_decompositions_m4_n2() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g: Vec<DMatrix<Complex64>> = (0..4)
            .map(|_| random_unitary(&mut rng, 2) * c64(0.6, 0.0))
            .collect();
        let mut failures = 0;
        for _ in 0..100 {
            let tau: Vec<Complex64> = (0..2)
                .map(|_| {
                    Complex64::from_polar(rng.gen_range(0.0f64..1.0).sqrt(), rng.gen_range(-PI..PI))
                })
                .collect();
            match unimodular_decompose(&g, &tau, &DecomposeOptions::default()) {
                Ok(d) => {
                    let f = d.vectors();
                    let mut s = vec![c64(0.0, 0.0); 2];
                    for (gi, fi) in g.iter().zip(&f) {
                        for j in 0..2 {
                            s[j] += gi[(j, 0)] * fi[0] + gi[(j, 1)] * fi[1];
                        }
                    }
                    assert!(s.iter().zip(&tau).all(|(a, b)| (a - b).norm() < 1e-10));
                }
                Err(_) => failures += 1,
            }
        }
        assert_eq!(failures, 0);
    }

    #[test]
    fn untwisted_and_reflected_linear_targets() {
        let t = shared_table(1_000_000).unwrap();
        let fam = ones_family();
        let prob = PhaseProblem::new(&fam, 10.0, 100_000, 1.01, &t).unwrap();
        let zero = vec![0.0; prob.len()];
        let z = prob.sums(&zero);
        let a = solve_direct(&prob, &z, None, 1e-9, 50).unwrap();
        assert!(a.max_residual() < 1e-9);
        assert_eq!(a.trace.len(), 1);

        // t_p = π/log p gives p^{-it_p} = −1.
        let pi: Vec<f64> = vec![PI; prob.len()];
        let neg = prob.sums(&pi);
        assert!((neg[0] + z[0]).norm() < 1e-12);
        let asg = prob.assignment(&pi, vec![0.0], vec![], "exact");
        for (tp, &p) in asg.t.iter().zip(&asg.primes) {
            assert!((tp - PI / (p as f64).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn mod5_zero_target_both_paths() {
        let t = shared_table(1_000_000).unwrap();
        let fam = mod5_family();
        let cfg = exhaustive();
        let sol =
            solve_linear_phase_system(&fam, &cfg, &[c64(0.0, 0.0), c64(0.0, 0.0)], &t).unwrap();
        assert!(sol.constructive.max_residual() < 1e-6);
        assert!(sol.direct.max_residual() < 1e-6);
        assert!(sol.agreement < 10.0 * cfg.tol);
    }

    #[test]
    fn prescribed_fill_reports_capacity_at_desk_scale() {
        let t = shared_table(1_000_000).unwrap();
        let err = PhaseSolver::new(&mod5_family(), &SolverConfig::default(), &t).unwrap_err();
        assert!(matches!(err, Error::Capacity(_)), "{err}");
    }

    #[test]
    fn constructive_and_direct_agree_on_random_targets() {
        let t = shared_table(1_000_000).unwrap();
        let fam = mod5_family();
        let cfg = exhaustive();
        let solver = PhaseSolver::new(&fam, &cfg, &t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let z: Vec<Complex64> = (0..2)
                .map(|_| Complex64::from_polar(rng.gen_range(0.0..0.3), rng.gen_range(-PI..PI)))
                .collect();
            let sol = solver.solve(&z).unwrap();
            assert!(sol.constructive.max_residual() <= cfg.tol);
            assert!(sol.direct.max_residual() <= cfg.tol);
            assert!(sol.agreement <= 10.0 * cfg.tol);
        }
    }

    #[test]
    fn direct_path_is_continuous_in_the_target() {
        let t = shared_table(1_000_000).unwrap();
        let fam = mod5_family();
        let prob = PhaseProblem::new(&fam, 10.0, 100_000, 1.01, &t).unwrap();
        let z = [c64(0.3, -0.2), c64(-0.1, 0.4)];
        let a = solve_direct(&prob, &z, None, 1e-10, 100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let dz: Vec<Complex64> = (0..2)
                .map(|_| Complex64::from_polar(rng.gen_range(0.0..7e-4), rng.gen_range(-PI..PI)))
                .collect();
            let z2: Vec<Complex64> = z.iter().zip(&dz).map(|(a, b)| a + b).collect();
            let b = solve_direct(&prob, &z2, Some(&a.theta()), 1e-10, 100).unwrap();
            assert!(b.trace.len() - 1 <= 5, "{} iterations", b.trace.len() - 1);
        }
    }

    #[test]
    fn assignments_are_finite_and_serialize() {
        let t = shared_table(1_000_000).unwrap();
        let fam = mod5_family();
        let prob = PhaseProblem::new(&fam, 10.0, 100_000, 1.01, &t).unwrap();
        let a = solve_direct(&prob, &[c64(0.2, 0.1), c64(0.0, -0.3)], None, 1e-10, 100).unwrap();
        for (tp, &p) in a.t.iter().zip(&a.primes) {
            let bound = PI / (p as f64).ln();
            assert!(tp.is_finite() && *tp > -bound && *tp <= bound + 1e-15);
        }
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("p,t_p\n11,"));
        let trace: serde_json::Value = serde_json::from_str(&a.trace_json()).unwrap();
        assert!(trace[0]["residual_per_j"].as_array().unwrap().len() == 2);
    }

    #[test]
    fn euler_targets_untwisted_and_conjugate() {
        let t = shared_table(1_000_000).unwrap();
        let fam = mod5_family();
        let cfg = SolverConfig {
            r: 4.0,
            ..SolverConfig::default()
        };
        let prob = PhaseProblem::new(&fam, cfg.y, cfg.prime_cap, cfg.sigma, &t).unwrap();
        let base: Vec<Complex64> = local_log_sums(&prob, &fam, &vec![0.0; prob.len()])
            .unwrap()
            .iter()
            .map(|l| l.exp())
            .collect();
        let a = hit_euler_targets(&fam, &cfg, &base, &t, None).unwrap();
        assert!(a.t.iter().all(|&x| x == 0.0));
        assert!(a.max_residual() <= cfg.tol);

        let conj: Vec<Complex64> = base.iter().map(|x| x.conj()).collect();
        let b = hit_euler_targets(&fam, &cfg, &conj, &t, None).unwrap();
        assert!(b.max_residual() <= cfg.tol);
    }

    #[test]
    fn euler_targets_reject_points_outside_annulus() {
        let t = shared_table(1_000_000).unwrap();
        let err = hit_euler_targets(
            &mod5_family(),
            &SolverConfig::default(),
            &[c64(3.0, 0.0), c64(1.0, 0.0)],
            &t,
            None,
        );
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn window_condition_is_monotone_on_the_sweep() {
        let t = shared_table(1_000_000).unwrap();
        let fam = mod5_family();
        let cfg = SolverConfig {
            m: 1,
            y: 1.5,
            ..exhaustive()
        };
        let prob = PhaseProblem::new(&fam, cfg.y, cfg.prime_cap, 1.25, &t).unwrap();
        for c in [0.5, 1.0, 2.0] {
            for scale in [1.0, 4.0, 16.0] {
                let mut held = false;
                for &s in &SIGMA_SWEEP {
                    let ok =
                        window_condition(prob.at_sigma(s, &t).unwrap().weight_sum(), 1.0, c, scale);
                    assert!(!held || ok, "lost at σ = {s}");
                    held |= ok;
                }
            }
        }
        let report = discover_sigma_window(&fam, &SolverConfig::default(), &t).unwrap();
        assert_eq!(report.checks.len(), SIGMA_SWEEP.len());
        assert!(report.eta.is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn two_circle_solutions_are_unimodular(r1 in 0.1f64..1.0, r2 in 0.1f64..1.0, a in -PI..PI, b in -PI..PI, c in -PI..PI) {
            let tau = Complex64::from_polar(r1, a) + Complex64::from_polar(r2, b);
            prop_assume!(tau.norm() <= 1.0);
            let g1 = DMatrix::from_element(1, 1, Complex64::from_polar(r1, c));
            let g2 = DMatrix::from_element(1, 1, c64(r2, 0.0));
            let d = unimodular_decompose(&[g1, g2], &[tau], &DecomposeOptions::default()).unwrap();
            prop_assert!(d.residual < 1e-12);
        }
    }
}
