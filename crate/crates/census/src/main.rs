use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use zero_census::cache::load_or_build;
use zero_census::config::ExperimentConfig;
use zero_census::report::{exit_code, EXIT_PRECONDITION};
use zero_census::run::{run, Context, Experiment};

/// Zeros of polynomial combinations of Euler products in σ > 1.
#[derive(Parser)]
#[command(name = "zero-census", version)]
struct Cli {
    /// TOML experiment configuration; defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for reports and plot data.
    #[arg(long, global = true, default_value = "census-out")]
    out: PathBuf,
    /// Directory for cached prime tables.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for solver restarts.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Axiom audit and Selberg matrix of the family.
    Audit,
    /// Density-prescribed prime subsets and their density estimates.
    Densities,
    /// Phase systems for the configured targets.
    Solve,
    /// Twisted zero, lift and certificate for the configured polynomial.
    Synthesize,
    /// Hurwitz zeta at l/k: expansion, twisted zero, lift, window scan.
    Dh {
        #[arg(long)]
        l: Option<u64>,
        #[arg(long)]
        k: Option<u64>,
        #[command(flatten)]
        scan: ScanArgs,
    },
    /// Zero counts in consecutive windows for the configured polynomial.
    Scan {
        #[command(flatten)]
        scan: ScanArgs,
    },
}

#[derive(Args)]
struct ScanArgs {
    /// σ1,σ2
    #[arg(long, value_parser = parse_band)]
    band: Option<(f64, f64)>,
    #[arg(long)]
    window_length: Option<f64>,
    #[arg(long)]
    windows: Option<usize>,
    #[arg(long)]
    step: Option<f64>,
}

fn parse_band(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected σ1,σ2")?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad σ1 `{a}`"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad σ2 `{b}`"))?;
    Ok((a, b))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => match ExperimentConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(exit_code(&e) as u8);
            }
        },
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.solver.seed = seed;
        cfg.synthesis.solver.seed = seed;
        cfg.dh.search.seed = seed;
    }
    let exp = match &cli.command {
        Command::Audit => Experiment::Audit,
        Command::Densities => Experiment::Densities,
        Command::Solve => Experiment::Solve,
        Command::Synthesize => Experiment::Synthesize,
        Command::Dh { l, k, scan } => {
            if let Some(l) = l {
                cfg.dh.l = *l;
            }
            if let Some(k) = k {
                cfg.dh.k = *k;
            }
            if let Some(b) = scan.band {
                cfg.dh.search.band = b;
            }
            if let Some(w) = scan.windows {
                cfg.dh.search.windows = w;
            }
            if let Some(w) = scan.window_length {
                cfg.dh.search.fallback_window = w;
            }
            if let Some(s) = scan.step {
                cfg.dh.search.scan_step = s;
            }
            Experiment::Dh
        }
        Command::Scan { scan } => {
            if let Some(b) = scan.band {
                cfg.scan.band = b;
            }
            if let Some(w) = scan.windows {
                cfg.scan.windows = w;
            }
            if let Some(w) = scan.window_length {
                cfg.scan.window_length = w;
            }
            if let Some(s) = scan.step {
                cfg.scan.step = s;
            }
            Experiment::Scan
        }
    };
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_PRECONDITION as u8);
    }
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(EXIT_PRECONDITION as u8);
        }
    }
    let (table, table_digest, _) = match load_or_build(cli.cache.as_deref(), cfg.prime_limit) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    let ctx = Context {
        cfg,
        table: Arc::new(table),
        table_digest,
        out: cli.out.clone(),
    };
    let rep = run(&ctx, exp);
    if let Err(e) = rep.write(&ctx.out) {
        eprintln!("error: writing report: {e}");
        return ExitCode::from(EXIT_PRECONDITION as u8);
    }
    for s in &rep.stages {
        match &s.error {
            None => println!("{:<28} ok", s.stage),
            Some(e) => println!("{:<28} FAILED: {e}", s.stage),
        }
    }
    println!("report: {}", ctx.out.join("report.json").display());
    ExitCode::from(rep.exit_code as u8)
}
