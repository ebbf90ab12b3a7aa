//! Prime subsets and their natural and Dirichlet densities, threshold sets and direction sets.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::euler::{EulerFunction, Family};
use crate::lfunc::{prime_zeta, prime_zeta_tail};
use crate::primes::PrimeTable;

/// σ values used when a lower Dirichlet density is needed and no grid is given.
pub const DEFAULT_SIGMA_GRID: [f64; 7] = [1.1, 1.05, 1.02, 1.01, 1.005, 1.002, 1.001];

/// Membership bitmap over table indices with word-level ranks.
#[derive(Debug, Clone, PartialEq, Eq)]
struct IndexSet {
    words: Vec<u64>,
    ranks: Vec<u32>,
    len: usize,
}

impl IndexSet {
    fn from_fn(n: usize, f: impl Fn(usize) -> bool + Sync) -> Self {
        let words: Vec<u64> = (0..n.div_ceil(64))
            .into_par_iter()
            .map(|w| {
                let mut bits = 0u64;
                for b in 0..64 {
                    let i = w * 64 + b;
                    if i < n && f(i) {
                        bits |= 1 << b;
                    }
                }
                bits
            })
            .collect();
        Self::from_words(words)
    }

    fn from_words(words: Vec<u64>) -> Self {
        let mut ranks = Vec::with_capacity(words.len() + 1);
        let mut acc = 0u32;
        for w in &words {
            ranks.push(acc);
            acc += w.count_ones();
        }
        ranks.push(acc);
        Self {
            words,
            ranks,
            len: acc as usize,
        }
    }

    fn contains(&self, i: usize) -> bool {
        self.words
            .get(i / 64)
            .is_some_and(|w| w >> (i % 64) & 1 == 1)
    }

    /// Members with index < i.
    fn rank(&self, i: usize) -> usize {
        let w = i / 64;
        if w >= self.words.len() {
            return self.len;
        }
        let mask = (1u64 << (i % 64)) - 1;
        self.ranks[w] as usize + (self.words[w] & mask).count_ones() as usize
    }

    fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(wi * 64 + b)
            })
        })
    }

    fn and(&self, other: &IndexSet) -> IndexSet {
        Self::from_words(
            self.words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & b)
                .collect(),
        )
    }

    fn and_not(&self, other: &IndexSet) -> IndexSet {
        Self::from_words(
            self.words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & !b)
                .collect(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct PrimeSubset {
    table: Arc<PrimeTable>,
    /// `Some(y)` when the base is exactly the primes above y.
    base_floor: Option<f64>,
    base: Arc<IndexSet>,
    members: IndexSet,
    finite: bool,
    descriptor: String,
}

impl PrimeSubset {
    /// All primes above y, as a truncation of an infinite set.
    pub fn primes_above(table: Arc<PrimeTable>, y: f64) -> Self {
        let start = table.count_upto(y);
        let base = Arc::new(IndexSet::from_fn(table.len(), |i| i >= start));
        Self {
            members: (*base).clone(),
            base,
            base_floor: Some(y),
            table,
            finite: false,
            descriptor: format!("primes > {y}"),
        }
    }

    /// {p > y : pred(p)} inside the primes above y.
    pub fn from_predicate(
        table: Arc<PrimeTable>,
        y: f64,
        descriptor: impl Into<String>,
        pred: impl Fn(u64) -> bool + Sync,
    ) -> Self {
        let all = Self::primes_above(Arc::clone(&table), y);
        let primes = table.primes();
        let members = IndexSet::from_fn(table.len(), |i| all.base.contains(i) && pred(primes[i]));
        Self {
            members,
            descriptor: descriptor.into(),
            ..all
        }
    }

    /// A genuinely finite set of primes (every entry must be in the table).
    pub fn from_list(
        table: Arc<PrimeTable>,
        primes: &[u64],
        descriptor: impl Into<String>,
    ) -> Result<Self> {
        let mut idx = Vec::with_capacity(primes.len());
        for &p in primes {
            match table.primes().binary_search(&p) {
                Ok(i) => idx.push(i),
                Err(_) => return Err(Error::Domain(format!("{p} is not a prime in the table"))),
            }
        }
        let mut words = vec![0u64; table.len().div_ceil(64)];
        for i in idx {
            words[i / 64] |= 1 << (i % 64);
        }
        let members = IndexSet::from_words(words);
        let all = Self::primes_above(Arc::clone(&table), 0.0);
        Ok(Self {
            members,
            descriptor: descriptor.into(),
            finite: true,
            ..all
        })
    }

    /// Members of `self` satisfying `pred`, measured relative to `self`.
    pub fn restrict(
        &self,
        descriptor: impl Into<String>,
        pred: impl Fn(u64) -> bool + Sync,
    ) -> Self {
        let primes = self.table.primes();
        let members = IndexSet::from_fn(self.table.len(), |i| {
            self.members.contains(i) && pred(primes[i])
        });
        Self {
            table: Arc::clone(&self.table),
            base_floor: None,
            base: Arc::new(self.members.clone()),
            members,
            finite: self.finite,
            descriptor: descriptor.into(),
        }
    }

    /// Same members, measured against the base of `other`.
    pub fn rebased(&self, other: &PrimeSubset) -> Result<Self> {
        if !Arc::ptr_eq(&self.table, &other.table) && self.table.limit() != other.table.limit() {
            return Err(Error::Domain("subsets over different tables".into()));
        }
        Ok(Self {
            members: self.members.and(&other.base),
            base: Arc::clone(&other.base),
            base_floor: other.base_floor,
            table: Arc::clone(&self.table),
            finite: self.finite,
            descriptor: self.descriptor.clone(),
        })
    }

    /// Members of `self` not in `other`, same base.
    pub fn minus(&self, other: &PrimeSubset) -> Self {
        Self {
            members: self.members.and_not(&other.members),
            ..self.clone()
        }
    }

    pub fn table(&self) -> &Arc<PrimeTable> {
        &self.table
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    pub fn base_floor(&self) -> Option<f64> {
        self.base_floor
    }

    pub fn is_finite(&self) -> bool {
        self.finite
    }

    pub fn len(&self) -> usize {
        self.members.len
    }

    pub fn is_empty(&self) -> bool {
        self.members.len == 0
    }

    pub fn base_len(&self) -> usize {
        self.base.len
    }

    pub fn contains(&self, p: u64) -> bool {
        self.table
            .primes()
            .binary_search(&p)
            .is_ok_and(|i| self.members.contains(i))
    }

    pub fn primes(&self) -> impl Iterator<Item = u64> + '_ {
        let t = self.table.primes();
        self.members.iter().map(move |i| t[i])
    }

    pub fn to_vec(&self) -> Vec<u64> {
        self.primes().collect()
    }

    /// A(x).
    pub fn count_upto(&self, x: f64) -> usize {
        self.members.rank(self.table.count_upto(x))
    }

    /// B(x) for the base.
    pub fn base_count_upto(&self, x: f64) -> usize {
        self.base.rank(self.table.count_upto(x))
    }

    /// Σ_{p ∈ A, p ≤ table limit} p^{-σ}.
    pub fn head_sum(&self, sigma: f64) -> f64 {
        dirichlet_head(&self.members, self.table.primes(), sigma)
    }

    fn base_head_sum(&self, sigma: f64) -> f64 {
        dirichlet_head(&self.base, self.table.primes(), sigma)
    }

    /// Share of all primes in (X/2, X] that are members, X the table limit.
    fn local_share(&self, set: &IndexSet) -> f64 {
        let x = self.table.limit() as f64;
        let hi = self.table.count_upto(x);
        let lo = self.table.count_upto(x / 2.0);
        if hi == lo {
            return 0.0;
        }
        (set.rank(hi) - set.rank(lo)) as f64 / (hi - lo) as f64
    }

    /// Sorted primes, one per line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "p")?;
        for p in self.primes() {
            writeln!(w, "{p}")?;
        }
        Ok(())
    }
}

fn dirichlet_head(set: &IndexSet, primes: &[u64], sigma: f64) -> f64 {
    set.words
        .par_iter()
        .enumerate()
        .map(|(wi, &w)| {
            let mut bits = w;
            let mut acc = 0.0;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                acc += (primes[wi * 64 + b] as f64).powf(-sigma);
            }
            acc
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityKind {
    Natural,
    Dirichlet,
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityEstimate {
    pub kind: DensityKind,
    pub grid: Vec<f64>,
    pub ratios: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

impl DensityEstimate {
    fn from_ratios(kind: DensityKind, grid: Vec<f64>, ratios: Vec<f64>) -> Self {
        let n = ratios.len();
        let tail = &ratios[n - n.div_ceil(3)..];
        let lower = tail
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
            .clamp(0.0, 1.0);
        let upper = tail
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
            .clamp(lower, 1.0);
        Self {
            kind,
            grid,
            ratios,
            lower,
            upper,
        }
    }

    /// Ratio at the last grid point.
    pub fn last(&self) -> f64 {
        *self.ratios.last().unwrap()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("estimate serializes")
    }
}

/// Zero-based positions ⌊n/α⌋ − 1, n = 1, 2, …, that fall inside a list of length `len`.
pub fn select_with_density(len: usize, alpha: f64) -> Vec<usize> {
    let mut out = Vec::new();
    if alpha <= 0.0 {
        return out;
    }
    let mut n = 1u64;
    loop {
        // Guards against 1/α rounding just below an integer.
        let pos = ((n as f64 / alpha) * (1.0 + 1e-15)).floor() as usize;
        n += 1;
        if pos == 0 {
            continue;
        }
        if pos > len {
            break;
        }
        out.push(pos - 1);
    }
    out
}

/// A = {q_{⌊n/α⌋} : n ≥ 1} where q_1 < q_2 < … enumerate Q.
pub fn subset_with_density(q: &PrimeSubset, alpha: f64) -> Result<PrimeSubset> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("density {alpha} outside [0, 1]")));
    }
    if q.finite && alpha > 0.0 {
        return Err(Error::Domain(
            "a finite set has no subset of positive density".into(),
        ));
    }
    let idx: Vec<usize> = q.members.iter().collect();
    let mut words = vec![0u64; q.table.len().div_ceil(64)];
    for pos in select_with_density(idx.len(), alpha) {
        let i = idx[pos];
        words[i / 64] |= 1 << (i % 64);
    }
    Ok(PrimeSubset {
        table: Arc::clone(&q.table),
        base_floor: None,
        base: Arc::new(q.members.clone()),
        members: IndexSet::from_words(words),
        finite: q.finite,
        descriptor: format!("density-{alpha} subset of ({})", q.descriptor),
    })
}

pub fn natural_density(a: &PrimeSubset, x_grid: &[f64]) -> Result<DensityEstimate> {
    if x_grid.is_empty() {
        return Err(Error::Domain("empty grid".into()));
    }
    let mut ratios = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        if x > a.table.limit() as f64 {
            return Err(Error::Domain(format!(
                "x = {x} beyond table limit {}",
                a.table.limit()
            )));
        }
        let b = a.base_count_upto(x);
        if b == 0 {
            return Err(Error::Domain(format!("base is empty up to x = {x}")));
        }
        ratios.push(a.count_upto(x) as f64 / b as f64);
    }
    Ok(DensityEstimate::from_ratios(
        DensityKind::Natural,
        x_grid.to_vec(),
        ratios,
    ))
}

/// Σ_{p∈A} p^{-σ} / Σ_{p∈B} p^{-σ}; beyond the table each set contributes its local share of
/// the exact prime tail, and a base of the form {p > y} is summed exactly.
pub fn dirichlet_density(a: &PrimeSubset, sigma_grid: &[f64]) -> Result<DensityEstimate> {
    if sigma_grid.is_empty() {
        return Err(Error::Domain("empty grid".into()));
    }
    if let Some(s) = sigma_grid.iter().find(|&&s| s <= 1.0 || s > 2.0) {
        return Err(Error::Domain(format!("σ = {s} outside (1, 2]")));
    }
    let x = a.table.limit() as f64;
    let share_a = a.local_share(&a.members);
    let share_b = a.local_share(&a.base);
    let mut ratios = Vec::with_capacity(sigma_grid.len());
    for &sigma in sigma_grid {
        let tail = prime_zeta_tail(sigma, &a.table, x)?;
        let num = a.head_sum(sigma) + share_a * tail;
        let den = match a.base_floor {
            Some(y) => {
                prime_zeta(sigma)? - crate::lfunc::prime_head_sum(sigma, a.table.range(0.0, y))
            }
            None => a.base_head_sum(sigma) + share_b * tail,
        };
        if den <= 0.0 {
            return Err(Error::Domain("empty base".into()));
        }
        // Identical sets give exactly 1.
        let r = if a.members == *a.base { 1.0 } else { num / den };
        ratios.push(r);
    }
    Ok(DensityEstimate::from_ratios(
        DensityKind::Dirichlet,
        sigma_grid.to_vec(),
        ratios,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct LogTransferReport {
    pub kappa: f64,
    pub grid: Vec<f64>,
    pub ratios: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

/// Σ_p |a(p)|² p^{-σ} / (−log(σ−1)) along the grid, compared with κ at the last point.
pub fn check_log_to_dirichlet(
    f: &EulerFunction,
    kappa: f64,
    sigma_grid: &[f64],
    table: &PrimeTable,
    tolerance: f64,
) -> Result<LogTransferReport> {
    if let Some(s) = sigma_grid.iter().find(|&&s| s <= 1.0 || s > 2.0) {
        return Err(Error::Domain(format!("σ = {s} outside (1, 2]")));
    }
    let primes = table.primes();
    let coeffs = f.prime_coeffs(primes)?;
    let x = table.limit() as f64;
    let lo = table.count_upto(x / 2.0);
    let mean_tail =
        coeffs[lo..].iter().map(|a| a.norm_sqr()).sum::<f64>() / (coeffs.len() - lo).max(1) as f64;
    let mut ratios = Vec::with_capacity(sigma_grid.len());
    for &sigma in sigma_grid {
        let head: f64 = primes
            .par_iter()
            .zip(&coeffs)
            .map(|(&p, a)| a.norm_sqr() * (p as f64).powf(-sigma))
            .sum();
        let total = head + mean_tail * prime_zeta_tail(sigma, table, x)?;
        ratios.push(total / -(sigma - 1.0).ln());
    }
    let last = *ratios
        .last()
        .ok_or_else(|| Error::Domain("empty grid".into()))?;
    let pass = if kappa > 0.0 {
        (last / kappa - 1.0).abs() < tolerance
    } else {
        last.abs() < 1e-12
    };
    Ok(LogTransferReport {
        kappa,
        grid: sigma_grid.to_vec(),
        ratios,
        tolerance,
        pass,
    })
}

#[derive(Debug, Clone)]
pub struct ThresholdSetResult {
    pub gamma: f64,
    pub kappa: f64,
    pub m: f64,
    pub set: PrimeSubset,
    pub lower_bound: f64,
    pub empirical: DensityEstimate,
}

/// (κ − (κ−γ)²)/(M² − (κ−γ)²).
pub fn threshold_bound(kappa: f64, m: f64, gamma: f64) -> Result<f64> {
    if !(kappa > 0.0 && gamma > kappa - kappa.sqrt() && gamma <= kappa) {
        return Err(Error::Domain(format!(
            "need κ−√κ < γ ≤ κ, got κ={kappa}, γ={gamma}"
        )));
    }
    if m < kappa.sqrt() {
        return Err(Error::Domain(format!("need M ≥ √κ, got M={m}")));
    }
    let c = (kappa - gamma).powi(2);
    if m * m - c <= 0.0 {
        return Err(Error::Domain("degenerate bound".into()));
    }
    Ok(((kappa - c) / (m * m - c)).min(1.0))
}

/// {p : |a(p)| ≥ κ − γ} with its guaranteed lower Dirichlet density.
pub fn threshold_set(
    f: &EulerFunction,
    kappa: f64,
    m: f64,
    gamma: f64,
    table: Arc<PrimeTable>,
) -> Result<ThresholdSetResult> {
    let lower_bound = threshold_bound(kappa, m, gamma)?;
    let coeffs = f.prime_coeffs(table.primes())?;
    if let Some((i, a)) = coeffs
        .iter()
        .enumerate()
        .find(|(_, a)| a.norm() > m * (1.0 + 1e-12))
    {
        return Err(Error::Domain(format!(
            "|a({})| = {} exceeds M = {m}",
            table.primes()[i],
            a.norm()
        )));
    }
    let cut = kappa - gamma;
    let all = PrimeSubset::primes_above(Arc::clone(&table), 0.0);
    let members = IndexSet::from_fn(table.len(), |i| coeffs[i].norm() >= cut);
    let set = PrimeSubset {
        members,
        descriptor: format!("|a(p)| >= {cut}"),
        ..all
    };
    let empirical = dirichlet_density(&set, &DEFAULT_SIGMA_GRID)?;
    Ok(ThresholdSetResult {
        gamma,
        kappa,
        m,
        set,
        lower_bound,
        empirical,
    })
}

#[derive(Debug, Clone)]
pub struct DirectionSetResult {
    pub u: Vec<Complex64>,
    pub set: PrimeSubset,
    pub delta: f64,
    pub empirical: DensityEstimate,
}

/// δ = 3/(4·max(1, Σ K_j²/m_j) − 1).
pub fn uniform_delta(k: &[f64], m: &[f64]) -> f64 {
    let s: f64 = k.iter().zip(m).map(|(k, m)| k * k / m).sum();
    3.0 / (4.0 * s.max(1.0) - 1.0)
}

/// Σ_j u_j a_j(p)/√m_j for each prime in `primes`.
pub fn projections(family: &Family, u: &[Complex64], primes: &[u64]) -> Result<Vec<Complex64>> {
    let mut out = vec![Complex64::new(0.0, 0.0); primes.len()];
    for (j, f) in family.members.iter().enumerate() {
        let c = f.prime_coeffs(primes)?;
        let w = u[j] / family.m[j].sqrt();
        out.par_iter_mut().zip(&c).for_each(|(o, a)| *o += w * a);
    }
    Ok(out)
}

pub fn check_unit(u: &[Complex64], n: usize) -> Result<()> {
    if u.len() != n {
        return Err(Error::Domain(format!(
            "direction has {} entries, family has {n}",
            u.len()
        )));
    }
    let norm: f64 = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("direction has norm {norm}")));
    }
    Ok(())
}

/// Q_u = {p > y : |Σ_j u_j a_j(p)/√m_j| ≥ 1/2}.
pub fn direction_set(
    family: &Family,
    u: &[Complex64],
    y: f64,
    table: Arc<PrimeTable>,
) -> Result<DirectionSetResult> {
    family
        .estimate
        .check_orthogonal(crate::euler::ORTHOGONALITY_TOL)
        .map_err(|e| Error::Precondition(e.to_string()))?;
    check_unit(u, family.len())?;
    let proj = projections(family, u, table.primes())?;
    let all = PrimeSubset::primes_above(Arc::clone(&table), y);
    let members = IndexSet::from_fn(table.len(), |i| {
        all.base.contains(i) && proj[i].norm() >= 0.5
    });
    let set = PrimeSubset {
        members,
        descriptor: "direction set".into(),
        ..all
    };
    let delta = uniform_delta(&family.k_bounds(), &family.m);
    let empirical = dirichlet_density(&set, &DEFAULT_SIGMA_GRID)?;
    Ok(DirectionSetResult {
        u: u.to_vec(),
        set,
        delta,
        empirical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::character::character_table;
    use crate::euler::make_dirichlet_l;
    use crate::lfunc::c64;
    use crate::primes::sieve_primes;
    use proptest::prelude::*;

    fn table(n: u64) -> Arc<PrimeTable> {
        Arc::new(sieve_primes(n).unwrap())
    }

    fn log_grid(t: &PrimeTable) -> Vec<f64> {
        let mut g = Vec::new();
        let mut x = 1000.0;
        while x <= t.limit() as f64 {
            g.push(x);
            x *= 2.0;
        }
        g
    }

    #[test]
    fn whole_and_empty_sets() {
        let t = table(1_000_000);
        let all = PrimeSubset::primes_above(Arc::clone(&t), 0.0);
        let nat = natural_density(&all, &log_grid(&t)).unwrap();
        assert_eq!((nat.lower, nat.upper), (1.0, 1.0));
        let dir = dirichlet_density(&all, &DEFAULT_SIGMA_GRID).unwrap();
        assert!(dir.ratios.iter().all(|&r| r == 1.0));
        let none = subset_with_density(&all, 0.0).unwrap();
        assert!(none.is_empty());
        let nat = natural_density(&none, &log_grid(&t)).unwrap();
        assert_eq!((nat.lower, nat.upper), (0.0, 0.0));
        let same = subset_with_density(&all, 1.0).unwrap();
        assert_eq!(same.to_vec(), all.to_vec());
    }

    #[test]
    fn finite_sets_reject_positive_density() {
        let t = table(1000);
        let f = PrimeSubset::from_list(Arc::clone(&t), &[2, 3, 5], "three").unwrap();
        assert!(subset_with_density(&f, 0.5).is_err());
        assert!(subset_with_density(&f, 0.0).is_ok());
        assert!(PrimeSubset::from_list(t, &[4], "x").is_err());
    }

    #[test]
    fn residue_class_densities() {
        let t = table(2_000_000);
        let a = PrimeSubset::from_predicate(Arc::clone(&t), 0.0, "1 mod 4", |p| p % 4 == 1);
        let nat = natural_density(&a, &log_grid(&t)).unwrap();
        assert!((nat.lower - 0.5).abs() < 0.02 && (nat.upper - 0.5).abs() < 0.02);
        // Oracle: Σ_{p ≡ 1 (4)} p^{-σ} = (P(σ) − 2^{-σ} + Σ_p χ₋₄(p) p^{-σ})/2.
        let dir = dirichlet_density(&a, &DEFAULT_SIGMA_GRID).unwrap();
        let chi = character_table(4)
            .unwrap()
            .into_iter()
            .find(|c| !c.is_principal())
            .unwrap();
        for (&sigma, &r) in DEFAULT_SIGMA_GRID.iter().zip(&dir.ratios) {
            let ps = prime_zeta(sigma).unwrap();
            let pc = crate::lfunc::prime_character_sum(&chi, c64(sigma, 0.0), &t)
                .unwrap()
                .re;
            let want = (ps - 2f64.powf(-sigma) + pc) / (2.0 * ps);
            assert!((r - want).abs() < 1e-3, "σ={sigma}: {r} vs {want}");
        }
    }

    #[test]
    fn removing_finitely_many_primes_tends_to_full_density() {
        let t = table(1_000_000);
        let a = PrimeSubset::from_predicate(Arc::clone(&t), 0.0, "p > 100", |p| p > 100);
        let grid: Vec<f64> = (2..=12).map(|k| 1.0 + 10f64.powi(-k)).collect();
        let d = dirichlet_density(&a, &grid).unwrap();
        assert!(d.ratios.windows(2).all(|w| w[1] > w[0]));
        assert!(d.last() > 0.9, "{:?}", d.ratios);
    }

    #[test]
    fn log_transfer_for_unit_and_zero_streams() {
        let t = table(1_000_000);
        let one = EulerFunction::constant("one", c64(1.0, 0.0));
        let r = check_log_to_dirichlet(&one, 1.0, &DEFAULT_SIGMA_GRID, &t, 0.2).unwrap();
        assert!(r.pass, "{:?}", r.ratios);
        let zero = EulerFunction::constant("zero", c64(0.0, 0.0));
        let r = check_log_to_dirichlet(&zero, 0.0, &DEFAULT_SIGMA_GRID, &t, 0.2).unwrap();
        assert!(r.pass && r.ratios.iter().all(|&x| x == 0.0));
        let chi = make_dirichlet_l(&character_table(5).unwrap()[1]);
        let r = check_log_to_dirichlet(&chi, 1.0, &DEFAULT_SIGMA_GRID, &t, 0.2).unwrap();
        assert!(r.pass);
    }

    #[test]
    fn threshold_bounds() {
        assert!((threshold_bound(1.0, 1.0, 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((threshold_bound(1.0, 2.0, 0.5).unwrap() - 0.2).abs() < 1e-15);
        assert!((threshold_bound(2.0, 3.0, 2.0).unwrap() - 2.0 / 9.0).abs() < 1e-15);
        assert!(threshold_bound(1.0, 1.0, 0.0).is_err());
        assert!(threshold_bound(4.0, 1.0, 3.0).is_err());
        let t = table(100_000);
        let chi = make_dirichlet_l(&character_table(1).unwrap()[0]);
        let r = threshold_set(&chi, 1.0, 1.0, 0.5, Arc::clone(&t)).unwrap();
        assert_eq!(r.set.len(), t.len());
        assert!(r.empirical.lower >= r.lower_bound - 1e-12);
    }

    #[test]
    fn direction_sets_for_characters_mod_five() {
        let t = table(1_000_000);
        let chars = character_table(5).unwrap();
        let one = Family::audited(vec![make_dirichlet_l(&chars[1])], 1e6, &t).unwrap();
        let r = direction_set(&one, &[c64(1.0, 0.0)], 0.0, Arc::clone(&t)).unwrap();
        assert_eq!(r.delta, 1.0);
        assert_eq!(r.set.len(), t.len() - 1);
        assert!(!r.set.contains(5));
        let two = Family::audited(
            vec![make_dirichlet_l(&chars[1]), make_dirichlet_l(&chars[2])],
            1e6,
            &t,
        )
        .unwrap();
        let u = [c64(0.6, 0.0), c64(0.0, 0.8)];
        let r = direction_set(&two, &u, 10.0, Arc::clone(&t)).unwrap();
        assert!((r.delta - 3.0 / 7.0).abs() < 1e-15);
        let rot = Complex64::from_polar(1.0, 1.234);
        let r2 = direction_set(&two, &[u[0] * rot, u[1] * rot], 10.0, Arc::clone(&t)).unwrap();
        assert_eq!(r.set.to_vec(), r2.set.to_vec());
        assert!(direction_set(&two, &[c64(1.0, 0.0), c64(1.0, 0.0)], 10.0, t).is_err());
    }

    #[test]
    fn subset_csv_export() {
        let t = table(30);
        let a = PrimeSubset::from_predicate(t, 10.0, "big", |_| true);
        let mut out = Vec::new();
        a.write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "p\n11\n13\n17\n19\n23\n29\n"
        );
    }

    fn sandwich_holds(a: &PrimeSubset, t: &PrimeTable) {
        let nat = natural_density(a, &log_grid(t)).unwrap();
        let dir = dirichlet_density(a, &DEFAULT_SIGMA_GRID).unwrap();
        let tol = 0.05;
        assert!(
            nat.lower <= dir.lower + tol && dir.upper <= nat.upper + tol,
            "{nat:?} {dir:?}"
        );
    }

    #[test]
    fn sandwich_on_constructed_sets() {
        let t = table(2_000_000);
        let all = PrimeSubset::primes_above(Arc::clone(&t), 0.0);
        for alpha in [0.1, 0.5, 0.9] {
            sandwich_holds(&subset_with_density(&all, alpha).unwrap(), &t);
        }
        sandwich_holds(
            &PrimeSubset::from_predicate(Arc::clone(&t), 0.0, "3 mod 5", |p| p % 5 == 3),
            &t,
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn densities_multiply(alpha in 0.05f64..1.0, beta in 0.05f64..1.0) {
            let t = table(300_000);
            let all = PrimeSubset::primes_above(Arc::clone(&t), 0.0);
            let a = subset_with_density(&all, alpha).unwrap();
            let b = subset_with_density(&a, beta).unwrap();
            let measured = b.len() as f64 / all.len() as f64;
            prop_assert!((measured - alpha * beta).abs() < 1e-3);
        }

        #[test]
        fn threshold_bound_in_unit_interval(kappa in 0.05f64..4.0, frac in 0.001f64..1.0, extra in 0.0f64..3.0) {
            let gamma = kappa - kappa.sqrt() * (1.0 - frac) ;
            let gamma = gamma.min(kappa);
            let m = kappa.sqrt() + extra;
            if let Ok(b) = threshold_bound(kappa, m, gamma) {
                prop_assert!(b > 0.0 && b <= 1.0);
            }
        }
    }
}
