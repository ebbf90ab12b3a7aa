//! One PASS/FAIL line per acceptance criterion; the test fails if any line fails.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use euler_twist::character::character_table;
use euler_twist::density::{
    check_log_to_dirichlet, direction_set, dirichlet_density, natural_density, subset_with_density,
    PrimeSubset,
};
use euler_twist::euler::{
    audit_axioms, estimate_selberg_matrix, geometric_grid, make_dirichlet_l, EulerFunction, Family,
};
use euler_twist::hurwitz::{davenport_heilbronn, DhConfig, HurwitzExpansion};
use euler_twist::lfunc::c64;
use euler_twist::phase::{hit_euler_targets, Fill, PhaseSolver, SolverConfig};
use euler_twist::poly::{
    synthesize_zero, Combination, CombinationPolynomial, SynthesisConfig, Verdict,
};
use euler_twist::primes::{sieve_primes, PrimeTable};
use euler_twist::twist::{zero_density_scan, ZeroCertificate};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Line {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
    secs: f64,
}

fn run(id: usize, name: &'static str, budget: f64, f: impl FnOnce() -> (bool, String)) -> Line {
    let start = Instant::now();
    let (pass, mut detail) = f();
    let secs = start.elapsed().as_secs_f64();
    let in_time = secs < budget;
    if !in_time {
        detail.push_str(&format!("; over the {budget} s budget"));
    }
    let line = Line {
        id,
        name,
        pass: pass && in_time,
        detail,
        secs,
    };
    println!(
        "criterion {} {}: {} ({}) [{:.1} s]",
        line.id,
        line.name,
        if line.pass { "PASS" } else { "FAIL" },
        line.detail,
        line.secs
    );
    line
}

fn mod5(idx: &[usize]) -> Vec<EulerFunction> {
    let chars = character_table(5).unwrap();
    idx.iter().map(|&i| make_dirichlet_l(&chars[i])).collect()
}

/// 5×5 grid of moduli in [1/2, 2] with golden-angle arguments.
fn annulus_targets() -> Vec<Vec<Complex64>> {
    let radii = [0.5, 0.5f64.sqrt(), 1.0, 2f64.sqrt(), 2.0];
    let golden = PI * (3.0 - 5f64.sqrt());
    let mut out = Vec::new();
    for (a, &r1) in radii.iter().enumerate() {
        for (b, &r2) in radii.iter().enumerate() {
            let k = (5 * a + b) as f64;
            out.push(vec![
                Complex64::from_polar(r1, golden * 2.0 * k),
                Complex64::from_polar(r2, golden * (2.0 * k + 1.0)),
            ]);
        }
    }
    out
}

fn solver_config() -> SolverConfig {
    SolverConfig {
        n: 2,
        y: 10.0,
        sigma: 1.01,
        prime_cap: 100_000,
        rho: 2.0,
        r: 2.0,
        ..SolverConfig::default()
    }
}

fn audit(t7: &PrimeTable) -> (bool, String) {
    let members = mod5(&[0, 1, 2, 3]);
    let grid = geometric_grid(1e7);
    let mut e3_ok = true;
    for f in &members {
        let a = audit_axioms(f, &grid, t7).unwrap();
        e3_ok &= a.entry("E3").unwrap().statistic == 1.0;
    }
    let m = estimate_selberg_matrix(&members, 1e7, t7).unwrap();
    let n = members.len();
    let selfs: Vec<f64> = (0..n).map(|i| m.m(i, i).re).collect();
    let mut cross: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                cross = cross.max(m.m(i, j).re.abs()).max(m.m(i, j).im.abs());
            }
        }
    }
    let self_ok = selfs.iter().all(|s| (0.85..=1.15).contains(s));
    let pass = e3_ok && self_ok && cross <= 0.1;
    (
        pass,
        format!("E3 max = 1: {e3_ok}; self slopes {selfs:.4?}; largest cross component {cross:.4}"),
    )
}

fn densities(t8: &Arc<PrimeTable>) -> (bool, String) {
    let base = PrimeSubset::primes_above(t8.clone(), 1.0);
    let x = t8.limit() as f64;
    let mut worst: f64 = 0.0;
    let mut seen = Vec::new();
    for alpha in [0.1, 0.3, 0.5, 0.9] {
        let sub = subset_with_density(&base, alpha).unwrap();
        let d = natural_density(&sub, &[x]).unwrap().last();
        worst = worst.max((d - alpha).abs());
        seen.push(d);
    }
    (
        worst < 0.01,
        format!("densities at 1e8 {seen:.6?}; worst deviation {worst:.2e}"),
    )
}

fn sandwich(t8: &Arc<PrimeTable>) -> (bool, String) {
    let base = PrimeSubset::primes_above(t8.clone(), 1.0);
    let sub = subset_with_density(&base, 0.5).unwrap();
    let nat = natural_density(&sub, &[t8.limit() as f64]).unwrap().last();
    let dir = dirichlet_density(&sub, &[1.001]).unwrap().last();
    let zeta = make_dirichlet_l(&character_table(1).unwrap()[0]);
    let ratio = *check_log_to_dirichlet(&zeta, 1.0, &[1.001], t8, 0.2)
        .unwrap()
        .ratios
        .last()
        .unwrap();
    let pass = (nat - dir).abs() < 0.05 && ratio > 0.8 && ratio < 1.2;
    (
        pass,
        format!(
            "natural {nat:.5}, Dirichlet {dir:.5} at σ = 1.001; log ratio for a ≡ 1 {ratio:.4}"
        ),
    )
}

fn directions(t7: &Arc<PrimeTable>) -> (bool, String) {
    let fam = Family::audited(mod5(&[1, 2]), 1e6, t7).unwrap();
    let floor = 3.0 / 7.0 - 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut lowest = f64::INFINITY;
    for _ in 0..100 {
        let raw: Vec<Complex64> = (0..2)
            .map(|_| c64(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let u: Vec<Complex64> = raw.iter().map(|z| z / norm).collect();
        let r = direction_set(&fam, &u, 10.0, t7.clone()).unwrap();
        lowest = lowest.min(r.empirical.lower);
    }
    (
        lowest >= floor,
        format!(
            "lowest lower Dirichlet density over 100 directions {lowest:.4} against {floor:.4}"
        ),
    )
}

fn phase_linear(t6: &PrimeTable) -> (bool, String) {
    let fam = Family::audited(mod5(&[1, 2]), 1e6, t6).unwrap();
    let prescribed = match PhaseSolver::new(&fam, &solver_config(), t6) {
        Ok(_) => "prescribed fill builds".to_string(),
        Err(e) => format!("prescribed fill: {e}"),
    };
    let cfg = SolverConfig {
        fill: Fill::Exhaustive,
        ..solver_config()
    };
    let solver = match PhaseSolver::new(&fam, &cfg, t6) {
        Ok(s) => s,
        Err(e) => return (false, format!("{prescribed}; exhaustive fill: {e}")),
    };
    let reach = solver.problem().reach();
    let mut ok = 0;
    let mut worst_agreement: f64 = 0.0;
    let targets = annulus_targets();
    for z in &targets {
        if let Ok(s) = solver.solve(z) {
            worst_agreement = worst_agreement.max(s.agreement);
            if s.constructive.max_residual() < 1e-6
                && s.direct.max_residual() < 1e-6
                && s.agreement < 1e-5
            {
                ok += 1;
            }
        }
    }
    (
        ok == targets.len(),
        format!(
            "{prescribed}; exhaustive fill solved {ok} of {} targets; reach per coordinate {reach:.3?}; worst agreement {worst_agreement:.1e}",
            targets.len()
        ),
    )
}

fn phase_euler(t6: &PrimeTable) -> (bool, String) {
    let fam = Family::audited(mod5(&[1, 2]), 1e6, t6).unwrap();
    let cfg = solver_config();
    let targets = annulus_targets();
    let mut ok = 0;
    for z in &targets {
        if let Ok(a) = hit_euler_targets(&fam, &cfg, z, t6, None) {
            if a.max_residual() < 1e-6 {
                ok += 1;
            }
        }
    }
    (
        ok == targets.len(),
        format!("{ok} of {} Euler targets hit to 1e-6", targets.len()),
    )
}

fn end_to_end(t6: &PrimeTable, certs: &mut Vec<ZeroCertificate>) -> (bool, String) {
    let fam = Family::audited(mod5(&[1, 2]), 1e6, t6).unwrap();
    let cfg = SynthesisConfig::default();
    let p = CombinationPolynomial::parse("1:1,0 | 1 0\n1:-1,0 | 0 1").unwrap();
    let syn = synthesize_zero(&p, &fam, &cfg, t6).unwrap();
    let (zero_ok, zero_detail) = match &syn.verdict {
        Verdict::TwistedZero(z) => {
            let lift = z.lift.as_ref().map_or(f64::INFINITY, |l| l.value_at_lift);
            let winding = z.certificate.as_ref().map_or(0, |c| c.winding);
            let width = z
                .certificate
                .as_ref()
                .map_or(f64::NAN, |c| c.rect.sigma2 - c.rect.sigma1);
            certs.extend(z.certificate.iter().cloned());
            let ok = z.sigma0 > 1.0
                && z.sigma0 <= 1.25
                && z.twisted_value < 1e-6
                && lift < 1e-3
                && winding >= 1
                && (width - 0.02).abs() < 1e-12;
            (
                ok,
                format!(
                    "σ0 = {:.6}, |F^φ(σ0)| = {:.1e}, |F| at lift {lift:.1e}, winding {winding} on width {width:.4}",
                    z.sigma0, z.twisted_value
                ),
            )
        }
        Verdict::Monomial { note } => (false, format!("X1 - X2 reported monomial: {note}")),
    };

    let m = CombinationPolynomial::parse("1:1,0 | 1 2").unwrap();
    let mono = synthesize_zero(&m, &fam, &cfg, t6).unwrap();
    let is_mono = matches!(mono.verdict, Verdict::Monomial { .. });
    let comb = Combination::new(m, mod5(&[1, 2])).unwrap();
    let f = |s: Complex64| comb.eval(s, t6);
    let scan = zero_density_scan(&f, (1.01, 1.3), 0.0, 50.0, 5, 0.01).unwrap();
    for w in &scan.windows {
        certs.extend(w.certificate.iter().filter(|c| c.winding >= 1).cloned());
    }
    let counts: Vec<Option<i64>> = scan.windows.iter().map(|w| w.count).collect();
    let free = counts.len() == 5 && counts.iter().all(|c| *c == Some(0));
    (
        zero_ok && is_mono && free,
        format!("{zero_detail}; X1 X2^2 monomial verdict {is_mono}, window counts {counts:?}"),
    )
}

/// Σ_{n ≡ 2 mod 5} n^{-2}, with the midpoint tail ∫_{M+1/2}^∞ (5x+2)^{-2} dx.
fn residue_series_at_two() -> f64 {
    let m = 200_000u64;
    let head: f64 = (0..=m).rev().map(|j| (5.0 * j as f64 + 2.0).powi(-2)).sum();
    head + 1.0 / (5.0 * (5.0 * (m as f64 + 0.5) + 2.0))
}

fn davenport_heilbronn_zeros(t6: &PrimeTable, certs: &mut Vec<ZeroCertificate>) -> (bool, String) {
    let e = HurwitzExpansion::new(2, 5).unwrap();
    let expansion = e.eval(c64(2.0, 0.0)).unwrap().value;
    let diff = (expansion - c64(residue_series_at_two(), 0.0)).norm();
    let r = davenport_heilbronn(2, 5, &DhConfig::default(), t6).unwrap();
    certs.extend(r.certificates.iter().cloned());
    if let Some(scan) = &r.scan {
        for w in &scan.windows {
            certs.extend(w.certificate.iter().filter(|c| c.winding >= 1).cloned());
        }
    }
    let hit = r.windows_with_zero();
    let windows = r.scan.as_ref().map_or(0, |s| s.windows.len());
    let genuine = r.zeros.iter().filter(|z| z.re > 1.0).count();
    let pass = diff < 1e-10
        && genuine >= 1
        && windows == 10
        && hit == windows
        && r.window_length.is_some();
    let twisted = r
        .twisted_zero
        .as_ref()
        .map_or("none".into(), |z| format!("σ = {:.6}", z.sigma));
    (
        pass,
        format!(
            "expansion at s = 2 off by {diff:.1e}; twisted zero {twisted}; certified zeros {genuine}; T0 {:?}; {hit} of {windows} windows hold a zero",
            r.window_length
        ),
    )
}

fn soundness(certs: &[ZeroCertificate]) -> (bool, String) {
    let positive: Vec<&ZeroCertificate> = certs.iter().filter(|c| c.winding >= 1).collect();
    let bad = positive
        .iter()
        .filter(|c| c.boundary_min < 10.0 * c.error_budget)
        .count();
    (
        bad == 0,
        format!(
            "{} certificates with winding ≥ 1, {bad} below 10× their error budget",
            positive.len()
        ),
    )
}

#[test]
fn acceptance() {
    let t8 = Arc::new(sieve_primes(100_000_000).unwrap());
    let t7 = Arc::new(sieve_primes(10_000_000).unwrap());
    let t6 = sieve_primes(1_000_000).unwrap();
    let mut certs = Vec::new();
    let lines = vec![
        run(1, "axiom audit", 120.0, || audit(&t7)),
        run(2, "density construction", 180.0, || densities(&t8)),
        run(3, "natural and Dirichlet densities", 120.0, || {
            sandwich(&t8)
        }),
        run(4, "direction sets", 300.0, || directions(&t7)),
        run(5, "linear phase system", 600.0, || phase_linear(&t6)),
        run(6, "Euler targets", 600.0, || phase_euler(&t6)),
        run(7, "zero synthesis", 900.0, || end_to_end(&t6, &mut certs)),
        run(8, "Hurwitz zeta at 2/5", 1200.0, || {
            davenport_heilbronn_zeros(&t6, &mut certs)
        }),
        run(9, "certificate soundness", 60.0, || soundness(&certs)),
    ];
    let failed: Vec<usize> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    println!(
        "acceptance: {} of {} criteria pass",
        lines.len() - failed.len(),
        lines.len()
    );
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
