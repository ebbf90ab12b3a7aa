//! The named experiments behind each subcommand.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use euler_twist::character::character_table;
use euler_twist::density::{
    check_log_to_dirichlet, dirichlet_density, natural_density, subset_with_density, PrimeSubset,
    DEFAULT_SIGMA_GRID,
};
use euler_twist::euler::{
    audit_axioms, estimate_selberg_matrix, geometric_grid, make_dirichlet_l, EulerFunction, Family,
};
use euler_twist::hurwitz::davenport_heilbronn;
use euler_twist::lfunc::c64;
use euler_twist::phase::{hit_euler_targets, solve_linear_phase_system};
use euler_twist::poly::{synthesize_zero, Combination, CombinationPolynomial, Verdict};
use euler_twist::primes::PrimeTable;
use euler_twist::twist::{count_zeros_traced, zero_density_scan, ScanResult};
use euler_twist::{Error, Result};
use num_complex::Complex64;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::report::{Report, EXIT_INCONCLUSIVE, EXIT_PRECONDITION, EXIT_SOLVER};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Audit,
    Densities,
    Solve,
    Synthesize,
    Dh,
    Scan,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Audit => "audit",
            Experiment::Densities => "densities",
            Experiment::Solve => "solve",
            Experiment::Synthesize => "synthesize",
            Experiment::Dh => "dh",
            Experiment::Scan => "scan",
        }
    }
}

pub struct Context {
    pub cfg: ExperimentConfig,
    pub table: Arc<PrimeTable>,
    pub table_digest: String,
    pub out: PathBuf,
}

pub fn inputs_digest(cfg: &ExperimentConfig, exp: Experiment, table_digest: &str) -> String {
    let mut h = Sha256::new();
    h.update(exp.name().as_bytes());
    h.update(cfg.canonical().as_bytes());
    h.update(table_digest.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs one experiment; the report is complete even when a stage fails.
pub fn run(ctx: &Context, exp: Experiment) -> Report {
    let digest = inputs_digest(&ctx.cfg, exp, &ctx.table_digest);
    let mut rep = Report::new(&ctx.cfg.name, exp.name(), digest, ctx.table_digest.clone());
    let start = Instant::now();
    let r = match exp {
        Experiment::Audit => audit(ctx, &mut rep),
        Experiment::Densities => densities(ctx, &mut rep),
        Experiment::Solve => solve(ctx, &mut rep),
        Experiment::Synthesize => synthesize(ctx, &mut rep),
        Experiment::Dh => dh(ctx, &mut rep),
        Experiment::Scan => scan(ctx, &mut rep),
    };
    if let Err(e) = r {
        rep.error(exp.name(), &e);
    }
    if rep.unsound() > 0 {
        rep.fail(
            "soundness",
            format!("{} certificates fail their own gate", rep.unsound()),
            EXIT_INCONCLUSIVE,
            (),
        );
    }
    rep.timing
        .insert(exp.name().into(), start.elapsed().as_secs_f64());
    rep
}

pub fn family_members(cfg: &ExperimentConfig) -> Result<Vec<EulerFunction>> {
    let chars = character_table(cfg.family.modulus)?;
    let mut out = Vec::new();
    for &i in &cfg.family.characters {
        let chi = chars.get(i).ok_or_else(|| {
            Error::Precondition(format!(
                "character {i} mod {} does not exist",
                cfg.family.modulus
            ))
        })?;
        out.push(make_dirichlet_l(chi));
    }
    for s in &cfg.family.streams {
        out.push(EulerFunction::from_csv(
            s.label.clone(),
            fs::File::open(&s.path)?,
        )?);
    }
    if out.is_empty() {
        return Err(Error::Precondition("empty family".into()));
    }
    Ok(out)
}

fn family(ctx: &Context) -> Result<Family> {
    let x = ctx.cfg.audit.x_max.min(ctx.table.limit() as f64);
    Family::audited(family_members(&ctx.cfg)?, x, &ctx.table)
}

fn combination(ctx: &Context) -> Result<Combination> {
    let poly = CombinationPolynomial::parse(&ctx.cfg.polynomial.source()?)?;
    Combination::new(poly, family_members(&ctx.cfg)?)
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("report data serializes")
}

fn write_file(dir: &Path, name: &str, body: &[u8]) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), body)?;
    Ok(())
}

fn audit(ctx: &Context, rep: &mut Report) -> Result<()> {
    let members = family_members(&ctx.cfg)?;
    let grid = geometric_grid(ctx.cfg.audit.x_max);
    let mut reports = Vec::new();
    for f in &members {
        let a = audit_axioms(f, &grid, &ctx.table)?;
        if a.all_pass() {
            rep.ok(&format!("audit:{}", f.label()), &a);
        } else {
            let failed: Vec<&str> = a
                .axioms
                .iter()
                .filter(|x| !x.pass)
                .map(|x| x.axiom.as_str())
                .collect();
            rep.fail(
                &format!("audit:{}", f.label()),
                format!("failed {}", failed.join(", ")),
                EXIT_PRECONDITION,
                &a,
            );
        }
        reports.push(a);
    }
    let m = estimate_selberg_matrix(&members, ctx.cfg.audit.x_max, &ctx.table)?;
    rep.ok("selberg_matrix", &m);
    write_file(
        &ctx.out,
        "audit.json",
        pretty(&json!({ "axioms": reports, "selberg": m })).as_bytes(),
    )
}

fn densities(ctx: &Context, rep: &mut Report) -> Result<()> {
    let base = PrimeSubset::primes_above(ctx.table.clone(), ctx.cfg.densities.above);
    let grid = geometric_grid(ctx.table.limit() as f64);
    let mut csv = String::from("alpha,kind,point,ratio\n");
    for &alpha in &ctx.cfg.densities.alphas {
        let sub = subset_with_density(&base, alpha)?;
        let nat = natural_density(&sub, &grid)?;
        let dir = dirichlet_density(&sub, &DEFAULT_SIGMA_GRID)?;
        for (kind, est) in [("natural", &nat), ("dirichlet", &dir)] {
            for (x, r) in est.grid.iter().zip(&est.ratios) {
                csv.push_str(&format!("{alpha},{kind},{x},{r}\n"));
            }
        }
        rep.ok(
            &format!("density:{alpha}"),
            json!({ "alpha": alpha, "natural": nat, "dirichlet": dir }),
        );
    }
    let zeta = make_dirichlet_l(&character_table(1)?[0]);
    let transfer = check_log_to_dirichlet(&zeta, 1.0, &DEFAULT_SIGMA_GRID, &ctx.table, 0.2)?;
    if transfer.pass {
        rep.ok("log_transfer", &transfer);
    } else {
        rep.fail(
            "log_transfer",
            "ratio outside tolerance".into(),
            EXIT_SOLVER,
            &transfer,
        );
    }
    write_file(&ctx.out, "densities.csv", csv.as_bytes())
}

fn targets(ctx: &Context) -> Vec<Complex64> {
    ctx.cfg
        .solve
        .targets
        .iter()
        .map(|t| c64(t[0], t[1]))
        .collect()
}

fn solve(ctx: &Context, rep: &mut Report) -> Result<()> {
    let fam = family(ctx)?;
    let z = targets(ctx);
    let mode = ctx.cfg.solve.mode.as_str();
    if mode != "euler" {
        match solve_linear_phase_system(&fam, &ctx.cfg.solver, &z, &ctx.table) {
            Ok(s) => {
                let mut buf = Vec::new();
                s.constructive.write_csv(&mut buf)?;
                write_file(&ctx.out, "phases_constructive.csv", &buf)?;
                let mut buf = Vec::new();
                s.direct.write_csv(&mut buf)?;
                write_file(&ctx.out, "phases_direct.csv", &buf)?;
                rep.ok(
                    "linear",
                    json!({
                        "constructive_residual": s.constructive.residual,
                        "direct_residual": s.direct.residual,
                        "agreement": s.agreement,
                        "tail_bound": s.direct.tail_bound,
                    }),
                );
            }
            Err(e) => rep.error("linear", &e),
        }
    }
    if mode != "linear" {
        match hit_euler_targets(&fam, &ctx.cfg.solver, &z, &ctx.table, None) {
            Ok(a) => {
                let mut buf = Vec::new();
                a.write_csv(&mut buf)?;
                write_file(&ctx.out, "phases_euler.csv", &buf)?;
                write_file(&ctx.out, "euler_trace.json", a.trace_json().as_bytes())?;
                rep.ok(
                    "euler",
                    json!({ "residual": a.residual, "tail_bound": a.tail_bound, "path": a.path }),
                );
            }
            Err(e) => rep.error("euler", &e),
        }
    }
    Ok(())
}

fn trace_csv(
    comb: &Combination,
    table: &PrimeTable,
    cert: &euler_twist::twist::ZeroCertificate,
) -> Result<Vec<u8>> {
    let f = |s: Complex64| comb.eval(s, table);
    let (_, trace) = count_zeros_traced(&f, &cert.rect, cert.step.max(1e-4), true)?;
    let mut out = Vec::new();
    writeln!(out, "sigma,t,accumulated_argument")?;
    for (s, a) in trace {
        writeln!(out, "{},{},{}", s.re, s.im, a)?;
    }
    Ok(out)
}

fn synthesize(ctx: &Context, rep: &mut Report) -> Result<()> {
    let fam = family(ctx)?;
    let comb = combination(ctx)?;
    let syn = synthesize_zero(&comb.poly, &fam, &ctx.cfg.synthesis, &ctx.table)?;
    for s in &syn.stages {
        rep.ok(&format!("synthesize:{}", s.stage), &s.note);
    }
    match &syn.verdict {
        Verdict::Monomial { note } => {
            rep.ok("verdict", json!({ "monomial": note }));
            let sc = &ctx.cfg.scan;
            let f = |s: Complex64| comb.eval(s, &ctx.table);
            let r = zero_density_scan(&f, sc.band, sc.a, sc.window_length, sc.windows, sc.step)?;
            record_scan(ctx, rep, &r, "monomial_scan")?;
            if r.windows.iter().any(|w| w.count.unwrap_or(0) > 0) {
                rep.fail(
                    "monomial_scan",
                    "a monomial combination reported a zero".into(),
                    EXIT_INCONCLUSIVE,
                    (),
                );
            }
        }
        Verdict::TwistedZero(z) => {
            rep.ok("verdict", z.as_ref());
            write_file(&ctx.out, "synthesis.json", pretty(&syn).as_bytes())?;
            match &z.certificate {
                Some(c) => {
                    write_file(&ctx.out, "certificate.json", c.to_json().as_bytes())?;
                    write_file(
                        &ctx.out,
                        "argument_trace.csv",
                        &trace_csv(&comb, &ctx.table, c)?,
                    )?;
                    rep.certificates.push(c.clone());
                }
                None => {
                    rep.twisted_only
                        .push(format!("σ0 = {}: {}", z.sigma0, z.certificate_note));
                    rep.raise(EXIT_INCONCLUSIVE);
                }
            }
        }
    }
    Ok(())
}

fn record_scan(ctx: &Context, rep: &mut Report, r: &ScanResult, stage: &str) -> Result<()> {
    let mut buf = Vec::new();
    r.write_csv(&mut buf)?;
    write_file(&ctx.out, &format!("{stage}.csv"), &buf)?;
    for w in &r.windows {
        if let Some(c) = &w.certificate {
            if c.winding >= 1 {
                rep.certificates.push(c.clone());
            }
        }
    }
    let counts: Vec<Option<i64>> = r.windows.iter().map(|w| w.count).collect();
    if counts.iter().any(Option::is_none) {
        let notes: Vec<&str> = r
            .windows
            .iter()
            .filter(|w| w.count.is_none())
            .map(|w| w.note.as_str())
            .collect();
        rep.fail(
            stage,
            format!("{} inconclusive windows", notes.len()),
            EXIT_INCONCLUSIVE,
            json!({ "counts": counts, "notes": notes }),
        );
    } else {
        rep.ok(stage, json!({ "counts": counts, "slope": r.slope }));
    }
    Ok(())
}

fn dh(ctx: &Context, rep: &mut Report) -> Result<()> {
    let d = &ctx.cfg.dh;
    let r = davenport_heilbronn(d.l, d.k, &d.search, &ctx.table)?;
    write_file(&ctx.out, "dh.json", r.to_json().as_bytes())?;
    let worst = r
        .expansion_checks
        .iter()
        .map(|c| c.difference)
        .fold(0.0, f64::max);
    rep.ok(
        "expansion",
        json!({ "checks": r.expansion_checks, "max_difference": worst }),
    );
    if r.excluded {
        rep.ok("excluded", &r.notes);
        return Ok(());
    }
    match &r.twisted_zero {
        Some(z) => rep.ok("twisted_zero", z),
        None => {
            rep.fail("twisted_zero", r.notes.join("; "), EXIT_SOLVER, ());
            return Ok(());
        }
    }
    rep.certificates.extend(r.certificates.iter().cloned());
    if r.zeros.is_empty() {
        rep.fail("lift", r.notes.join("; "), EXIT_INCONCLUSIVE, ());
        rep.twisted_only.push(format!(
            "twisted zero at σ = {} without a lifted zero",
            r.twisted_zero.as_ref().map_or(f64::NAN, |z| z.sigma)
        ));
    } else {
        rep.ok(
            "lift",
            json!({ "zeros": r.zeros, "window_length": r.window_length }),
        );
    }
    if let Some(scan) = &r.scan {
        let mut buf = Vec::new();
        scan.write_csv(&mut buf)?;
        write_file(&ctx.out, "dh_scan.csv", &buf)?;
        let hit = r.windows_with_zero();
        let data = json!({ "windows": scan.windows.len(), "with_zero": hit, "window_length": scan.window_length });
        if hit == scan.windows.len() {
            rep.ok("dh_scan", data);
        } else {
            rep.fail(
                "dh_scan",
                format!(
                    "{hit} of {} windows hold a certified zero",
                    scan.windows.len()
                ),
                EXIT_INCONCLUSIVE,
                data,
            );
        }
    }
    Ok(())
}

fn scan(ctx: &Context, rep: &mut Report) -> Result<()> {
    let comb = combination(ctx)?;
    let sc = &ctx.cfg.scan;
    let f = |s: Complex64| comb.eval(s, &ctx.table);
    let r = zero_density_scan(&f, sc.band, sc.a, sc.window_length, sc.windows, sc.step)?;
    record_scan(ctx, rep, &r, "scan")
}
