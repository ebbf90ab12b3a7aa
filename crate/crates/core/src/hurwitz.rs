//! k^{-s} ζ(s, l/k) as a combination of L(s, χ), its twists by rotations on quadratic
//! non-residues, and the search for zeros in σ > 1.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{euler_phi, gcd};
use crate::character::{character_table, DirichletCharacter};
use crate::error::{Error, Result};
use crate::euler::make_dirichlet_l;
use crate::lfunc::{c64, dirichlet_l};
use crate::primes::PrimeTable;
use crate::special::{hurwitz_zeta, Bounded};
use crate::twist::{
    count_zeros_rectangle, kronecker_lift, log_twisted_euler, newton_zero, zero_density_scan,
    LiftTarget, Rectangle, ResidueSums, ScanResult, TwistFunction, ZeroCertificate,
};

/// k^{-s} ζ(s, l/k) = Σ_χ c_χ L(s, χ) with c_χ = conj(χ(l))/φ(k).
#[derive(Debug, Clone)]
pub struct HurwitzExpansion {
    pub l: u64,
    pub k: u64,
    pub terms: Vec<(DirichletCharacter, Complex64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionCheck {
    pub s: Complex64,
    pub expansion: Complex64,
    pub direct: Complex64,
    pub difference: f64,
    pub bound: f64,
}

impl HurwitzExpansion {
    pub fn new(l: u64, k: u64) -> Result<Self> {
        if !(0 < l && l < k) || gcd(l, k) != 1 {
            return Err(Error::Precondition(format!(
                "need 0 < l < k with gcd(l, k) = 1, got {l}/{k}"
            )));
        }
        let phik = euler_phi(k) as f64;
        let terms = character_table(k)?.into_iter().map(|chi| {
            let c = chi.value(l).conj() / phik;
            (chi, c)
        });
        Ok(Self {
            l,
            k,
            terms: terms.collect(),
        })
    }

    pub fn parameter(&self) -> f64 {
        self.l as f64 / self.k as f64
    }

    /// a = 1/2: ζ(s, 1/2) = (2^s − 1) ζ(s) has no zeros in σ > 1.
    pub fn is_excluded(&self) -> bool {
        2 * self.l == self.k
    }

    /// Σ_χ c_χ L(s, χ).
    pub fn eval(&self, s: Complex64) -> Result<Bounded> {
        let mut value = c64(0.0, 0.0);
        let mut err = 0.0;
        for (chi, c) in &self.terms {
            let b = dirichlet_l(chi, s)?;
            value += c * b.value;
            err += c.norm() * b.err;
        }
        Ok(Bounded { value, err })
    }

    /// k^{-s} ζ(s, l/k) from the Hurwitz function itself.
    pub fn direct(&self, s: Complex64) -> Result<Bounded> {
        let ks = (-s * (self.k as f64).ln()).exp();
        let h = hurwitz_zeta(s, self.parameter())?;
        Ok(Bounded {
            value: ks * h.value,
            err: ks.norm() * h.err,
        })
    }

    /// (l/k)^s ζ(s, l/k) = Σ_n (1 + nk/l)^{-s}: same zeros, tends to 1 as σ grows.
    pub fn normalized(&self, s: Complex64) -> Result<Bounded> {
        let ls = (s * (self.l as f64).ln()).exp();
        let b = self.direct(s)?;
        Ok(Bounded {
            value: ls * b.value,
            err: ls.norm() * b.err,
        })
    }

    pub fn check(&self, s: Complex64) -> Result<ExpansionCheck> {
        let (a, b) = (self.eval(s)?, self.direct(s)?);
        Ok(ExpansionCheck {
            s,
            expansion: a.value,
            direct: b.value,
            difference: (a.value - b.value).norm(),
            bound: a.err + b.err + 1e-14 * b.value.norm(),
        })
    }

    /// Σ_χ c_χ L^φ(s, χ) for φ constant on residue classes mod k, from precomputed sums.
    pub fn eval_class_twisted(&self, sums: &ResidueSums, angles: &[f64]) -> Result<Bounded> {
        let mut value = c64(0.0, 0.0);
        let mut err = 0.0;
        for (chi, c) in &self.terms {
            let b = sums.log_twisted(chi, angles)?;
            let e = b.value.exp();
            value += c * e;
            err += c.norm() * e.norm() * b.err.exp_m1();
        }
        Ok(Bounded { value, err })
    }

    /// Σ_χ c_χ L^φ(s, χ).
    pub fn eval_twisted(
        &self,
        phi: &TwistFunction,
        s: Complex64,
        table: &PrimeTable,
    ) -> Result<Bounded> {
        let mut value = c64(0.0, 0.0);
        let mut err = 0.0;
        for (chi, c) in &self.terms {
            let b = log_twisted_euler(&make_dirichlet_l(chi), phi, s, table)?;
            let e = b.value.exp();
            value += c * e;
            err += c.norm() * e.norm() * b.err.exp_m1();
        }
        Ok(Bounded { value, err })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DhConfig {
    pub band: (f64, f64),
    pub windows: usize,
    /// Starts refined per σ in the twisted-zero search.
    pub theta_grid: usize,
    pub seed: u64,
    pub sigma_grid: usize,
    pub lift_window: (f64, f64),
    pub lift_step: f64,
    pub p_eff: u64,
    pub newton_candidates: usize,
    pub rect_width: f64,
    pub cert_step: f64,
    pub scan_step: f64,
    /// Window length used when no zero fixes one.
    pub fallback_window: f64,
}

impl Default for DhConfig {
    fn default() -> Self {
        Self {
            band: (1.001, 1.1),
            windows: 10,
            theta_grid: 8,
            seed: 0,
            sigma_grid: 12,
            lift_window: (0.0, 1e5),
            lift_step: 0.01,
            p_eff: 30,
            newton_candidates: 48,
            rect_width: 0.02,
            cert_step: 1e-3,
            scan_step: 0.01,
            fallback_window: 100.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DhTwistedZero {
    pub sigma: f64,
    /// Rotation angle for each reduced residue class, in increasing order of the class.
    pub angles: Vec<f64>,
    pub value: f64,
    pub twist_digest: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct DhReport {
    pub l: u64,
    pub k: u64,
    pub excluded: bool,
    pub notes: Vec<String>,
    pub expansion_checks: Vec<ExpansionCheck>,
    /// |Σ c_χ L^φ(σ, χ)| for the rotation by π/2 at the band centre.
    pub quadratic_twist_value: Option<f64>,
    pub twisted_zero: Option<DhTwistedZero>,
    pub zeros: Vec<Complex64>,
    pub certificates: Vec<ZeroCertificate>,
    pub window_length: Option<f64>,
    pub scan: Option<ScanResult>,
}

impl DhReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Windows of the scan with at least one certified zero.
    pub fn windows_with_zero(&self) -> usize {
        self.scan.as_ref().map_or(0, |s| {
            s.windows
                .iter()
                .filter(|w| w.count.unwrap_or(0) >= 1)
                .count()
        })
    }
}

/// Twist rotating each reduced residue class r mod k by e^{iθ_r}.
pub fn class_rotation(k: u64, angles: &[f64]) -> Result<TwistFunction> {
    let classes: Vec<u64> = (1..k).filter(|&r| gcd(r, k) == 1).collect();
    if angles.len() != classes.len() {
        return Err(Error::Domain(format!(
            "{} angles for {} residue classes",
            angles.len(),
            classes.len()
        )));
    }
    let mut full = vec![0.0; k as usize];
    for (r, a) in classes.iter().zip(angles) {
        full[*r as usize] = *a;
    }
    TwistFunction::residue_rule(format!("class rotation mod {k}"), k, full)
}

/// Random starts per σ.
const DH_STARTS: usize = 96;

/// σ in the band and class angles θ_r with Σ_χ c_χ L^φ(σ, χ) = 0, trying the largest σ first.
pub fn find_twisted_zero(
    e: &HurwitzExpansion,
    cfg: &DhConfig,
    table: &PrimeTable,
) -> Result<Option<DhTwistedZero>> {
    use rand::{Rng, SeedableRng};
    let (lo, hi) = cfg.band;
    let n = euler_phi(e.k) as usize;
    let full = |th: &[f64]| -> Vec<f64> {
        let mut a = vec![0.0; e.k as usize];
        for (r, x) in (1..e.k).filter(|&r| gcd(r, e.k) == 1).zip(th) {
            a[r as usize] = *x;
        }
        a
    };
    let ns = cfg.sigma_grid.max(2);
    for i in (0..ns).rev() {
        let sigma = lo + (hi - lo) * (i as f64 + 0.5) / ns as f64;
        let sums = ResidueSums::new(e.k, c64(sigma, 0.0), table)?;
        let g = |_: f64, th: &[f64]| -> Result<Complex64> {
            Ok(e.eval_class_twisted(&sums, &full(th))?.value)
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed ^ i as u64);
        let starts: Vec<Vec<f64>> = (0..DH_STARTS)
            .map(|_| (0..n).map(|_| rng.gen_range(-PI..PI)).collect())
            .collect();
        let vals: Vec<f64> = starts
            .par_iter()
            .map(|th| g(sigma, th).map(|v| v.norm()))
            .collect::<Result<_>>()?;
        let mut order: Vec<usize> = (0..starts.len()).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let refined: Vec<Option<Vec<f64>>> = order
            .iter()
            .take(cfg.theta_grid.clamp(1, 16))
            .collect::<Vec<_>>()
            .par_iter()
            .map(|&&s| min_norm_newton(&|th: &[f64]| g(sigma, th), &starts[s]))
            .collect::<Result<_>>()?;
        if let Some(th) = refined.into_iter().flatten().next() {
            let th: Vec<f64> = th.iter().map(|&a| crate::phase::wrap_angle(a)).collect();
            let phi = class_rotation(e.k, &th)?;
            let value = e.eval_twisted(&phi, c64(sigma, 0.0), table)?.value.norm();
            return Ok(Some(DhTwistedZero {
                sigma,
                angles: th,
                value,
                twist_digest: phi.digest(),
            }));
        }
    }
    Ok(None)
}

/// Min-norm Newton on two real equations in the angles; Some when |g| < 10⁻¹².
fn min_norm_newton(
    g: &(dyn Fn(&[f64]) -> Result<Complex64> + Sync),
    start: &[f64],
) -> Result<Option<Vec<f64>>> {
    let mut th = start.to_vec();
    let h = 1e-6;
    for _ in 0..80 {
        let v = g(&th)?;
        if v.norm() < 1e-12 {
            return Ok(Some(th));
        }
        let mut jac = Vec::with_capacity(th.len());
        for q in 0..th.len() {
            let mut a = th.clone();
            let mut b = th.clone();
            a[q] += h;
            b[q] -= h;
            jac.push((g(&a)? - g(&b)?) / (2.0 * h));
        }
        // J Jᵀ as a 2×2 real system.
        let (mut a11, mut a12, mut a22) = (0.0, 0.0, 0.0);
        for d in &jac {
            a11 += d.re * d.re;
            a12 += d.re * d.im;
            a22 += d.im * d.im;
        }
        let mu = 1e-12 * (a11 + a22);
        let det = (a11 + mu) * (a22 + mu) - a12 * a12;
        if det.abs() < 1e-300 {
            return Ok(None);
        }
        let y1 = ((a22 + mu) * v.re - a12 * v.im) / det;
        let y2 = ((a11 + mu) * v.im - a12 * v.re) / det;
        let mut step: Vec<f64> = jac.iter().map(|d| d.re * y1 + d.im * y2).collect();
        let n = step.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.5 {
            step.iter_mut().for_each(|x| *x *= 0.5 / n);
        }
        th.iter_mut().zip(&step).for_each(|(t, s)| *t -= s);
    }
    Ok((g(&th)?.norm() < 1e-12).then_some(th))
}

/// Expansion check, twisted zero, lift to genuine zeros and the window scan.
pub fn davenport_heilbronn(l: u64, k: u64, cfg: &DhConfig, table: &PrimeTable) -> Result<DhReport> {
    let e = HurwitzExpansion::new(l, k)?;
    let mut report = DhReport {
        l,
        k,
        excluded: e.is_excluded(),
        notes: Vec::new(),
        expansion_checks: Vec::new(),
        quadratic_twist_value: None,
        twisted_zero: None,
        zeros: Vec::new(),
        certificates: Vec::new(),
        window_length: None,
        scan: None,
    };
    for s in [c64(2.0, 0.0), c64(1.5, 10.0), c64(1.05, 100.0)] {
        report.expansion_checks.push(e.check(s)?);
    }
    if e.is_excluded() {
        report
            .notes
            .push("excluded case a=1/2: ζ(s,1/2) = (2^s−1)ζ(s) has no zeros in σ > 1".into());
        return Ok(report);
    }
    let centre = 0.5 * (cfg.band.0 + cfg.band.1);
    let dh = TwistFunction::davenport_heilbronn(k)?;
    report.quadratic_twist_value = Some(e.eval_twisted(&dh, c64(centre, 0.0), table)?.value.norm());

    let Some(tz) = find_twisted_zero(&e, cfg, table)? else {
        report.notes.push(format!(
            "no twisted zero found in band ({}, {})",
            cfg.band.0, cfg.band.1
        ));
        return Ok(report);
    };
    let phi = class_rotation(k, &tz.angles)?;
    report.notes.push(format!(
        "twisted zero at σ = {:.12} with class angles {:?}",
        tz.sigma, tz.angles
    ));
    report.twisted_zero = Some(tz.clone());

    let f = |s: Complex64| e.normalized(s);
    let target = LiftTarget::from_twist(
        &phi,
        cfg.p_eff,
        tz.sigma,
        1.0,
        table,
        cfg.lift_window.0,
        cfg.lift_window.1 - cfg.lift_window.0,
    )?;
    let candidates = kronecker_lift(&target, cfg.lift_step)?;
    for c in candidates.iter().take(cfg.newton_candidates) {
        let Ok(z) = newton_zero(&f, c64(tz.sigma, c.t), 1e-13, 60) else {
            continue;
        };
        if z.re <= 1.0 || report.zeros.iter().any(|w| (w - z).norm() < 1e-6) {
            continue;
        }
        let centre = c64(z.re.max(1.0 + cfg.rect_width / 2.0 + 1e-4), z.im);
        let rect = Rectangle::centered(centre, cfg.rect_width, cfg.rect_width)?;
        match count_zeros_rectangle(&f, &rect, cfg.cert_step) {
            Ok(cert) if cert.winding >= 1 && cert.is_sound() => {
                report.zeros.push(z);
                report.certificates.push(cert);
            }
            Ok(cert) => report
                .notes
                .push(format!("zero {z} not certified: winding {}", cert.winding)),
            Err(err) => report.notes.push(format!("zero {z} not certified: {err}")),
        }
    }
    if report.zeros.is_empty() {
        report.notes.push(format!(
            "lift over t ∈ [{}, {}] reached no zero with σ > 1 from {} candidates",
            cfg.lift_window.0,
            cfg.lift_window.1,
            candidates.len().min(cfg.newton_candidates)
        ));
    }
    // Windows [A + jT0, A + (j+1)T0] with T0 the height of the lowest certified zero.
    let (len, a) = match report
        .zeros
        .iter()
        .map(|z| z.im)
        .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.min(t))))
    {
        Some(t) => {
            report.window_length = Some(t.ceil());
            (t.ceil(), 0.0)
        }
        None => (cfg.fallback_window, 0.0),
    };
    report.scan = Some(zero_density_scan(
        &f,
        cfg.band,
        a,
        len,
        cfg.windows,
        cfg.scan_step,
    )?);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primes::shared_table;

    #[test]
    fn expansion_matches_the_direct_series_at_two() {
        let e = HurwitzExpansion::new(2, 5).unwrap();
        let v = e.eval(c64(2.0, 0.0)).unwrap().value;
        // Σ_{n<N} (n + 2/5)^{-2}, tail by Euler-Maclaurin to O(N^{-4}).
        let n = 200_000;
        let a = 0.4;
        let head: f64 = (0..n).rev().map(|j| (j as f64 + a).powi(-2)).sum();
        let x = n as f64 + a;
        let series = (head + 1.0 / x + 0.5 / (x * x) + 1.0 / (6.0 * x * x * x)) / 25.0;
        assert!((v.re - series).abs() < 1e-10, "{} vs {series}", v.re);
        assert!(v.im.abs() < 1e-15);
        for c in [c64(2.0, 0.0), c64(1.3, 40.0)] {
            let k = e.check(c).unwrap();
            assert!(k.difference <= k.bound.max(1e-13), "{k:?}");
        }
    }

    #[test]
    fn coefficients_are_a_finite_fourier_transform() {
        let e = HurwitzExpansion::new(3, 7).unwrap();
        for r in 1..7u64 {
            let s: Complex64 = e.terms.iter().map(|(chi, c)| c * chi.value(r)).sum();
            let want = if r == 3 { 1.0 } else { 0.0 };
            assert!((s - want).norm() < 1e-14);
        }
        assert!(matches!(
            HurwitzExpansion::new(2, 4),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            HurwitzExpansion::new(5, 5),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn half_is_reported_as_excluded() {
        let t = shared_table(1_000_000).unwrap();
        let r = davenport_heilbronn(1, 2, &DhConfig::default(), &t).unwrap();
        assert!(r.excluded);
        assert!(r.notes[0].contains("excluded case a=1/2"));
        assert!(r.certificates.is_empty() && r.scan.is_none());
        // (2^s − 1) ζ(s) · 2^{-s}.
        let s = c64(2.0, 0.0);
        let want = (1.0 - 0.25) * PI * PI / 6.0;
        assert!((r.expansion_checks[0].expansion.re - want).abs() < 1e-13);
        assert!(r
            .expansion_checks
            .iter()
            .all(|c| c.difference <= c.bound.max(1e-13)));
        let _ = s;
    }

    #[test]
    fn identity_rotation_gives_the_untwisted_value() {
        let t = shared_table(1_000_000).unwrap();
        let e = HurwitzExpansion::new(2, 5).unwrap();
        let phi = TwistFunction::quadratic_rotation(5, 0.0).unwrap();
        let s = c64(1.2, 0.0);
        let a = e.eval_twisted(&phi, s, &t).unwrap();
        assert!((a.value - e.direct(s).unwrap().value).norm() < 1e-9 + a.err);
    }

    #[test]
    fn twisted_zero_search_is_exact_when_it_succeeds() {
        let t = shared_table(1_000_000).unwrap();
        let e = HurwitzExpansion::new(2, 5).unwrap();
        let cfg = DhConfig {
            sigma_grid: 2,
            ..DhConfig::default()
        };
        if let Some(z) = find_twisted_zero(&e, &cfg, &t).unwrap() {
            let phi = class_rotation(5, &z.angles).unwrap();
            assert!(
                e.eval_twisted(&phi, c64(z.sigma, 0.0), &t)
                    .unwrap()
                    .value
                    .norm()
                    < 1e-10
            );
            assert!(z.sigma > cfg.band.0 && z.sigma < cfg.band.1);
        }
    }
}
