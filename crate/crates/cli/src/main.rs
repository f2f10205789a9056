use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sturm_core::pipeline::{self, ScanOptions, Suite, VerifyOptions};
use sturm_core::{Numerics, ProblemConfig, ProblemSpec};

#[derive(Parser)]
#[command(name = "sturm", version, about = "Sturm attractors of axisymmetric parabolic equations")]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Problem file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "sturm-out")]
    out: PathBuf,
    /// Override `problem.lambda`.
    #[arg(long)]
    lambda: Option<f64>,
    /// Override `numerics.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Equilibria, permutation, zero numbers and connection graph.
    Analyze(Common),
    /// Equilibrium counts over a λ interval with bifurcations bisected.
    Scan {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.5)]
        lambda_min: f64,
        #[arg(long, default_value_t = 21.0)]
        lambda_max: f64,
        /// Samples, endpoints included.
        #[arg(long, default_value_t = 50)]
        steps: usize,
        /// Bisection width.
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
    /// Property suites; all of them unless `--suite` is given.
    Verify {
        #[command(flatten)]
        common: Common,
        /// monotonicity, symmetry, dropping, lyapunov, wolfrum-equivalence,
        /// heteroclinics or convergence. Repeatable.
        #[arg(long = "suite")]
        suites: Vec<String>,
    },
}

fn load(common: &Common) -> Result<ProblemSpec> {
    let config = ProblemConfig::from_path(&common.config)?;
    let mut spec = config.to_spec()?;
    if let Some(lambda) = common.lambda {
        spec = spec.with_lambda(lambda)?;
    }
    if let Some(seed) = common.seed {
        spec = spec.with_numerics(Numerics {
            seed,
            ..spec.numerics.clone()
        })?;
    }
    Ok(spec)
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
}

fn analyze(common: &Common) -> Result<u8> {
    let spec = load(common)?;
    let a = pipeline::analyze(&spec)?;
    a.write_artifacts(&common.out)
        .with_context(|| format!("writing artifacts to {}", common.out.display()))?;
    let r = &a.report;
    println!("lambda {}: {} equilibria", spec.lambda, r.count);
    for e in &r.equilibria {
        println!(
            "  {:>3}  u(0) = {:>10.6}  i = {}{}",
            e.label,
            e.u_at_0,
            e.morse_index,
            if e.hyperbolic { "" } else { "  (not hyperbolic)" }
        );
    }
    if let Some(s) = &r.sigma_cycles {
        println!("sigma {s}");
    }
    if let Some(g) = &r.graph {
        println!("{} edges, {} with index drop one", g.edges, g.index_drop_one);
    }
    for c in r.checks.iter().filter(|c| !c.passed) {
        println!("FAIL {}: {}", c.name, c.summary);
    }
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    println!("status {:?}", r.status);
    Ok(r.status.exit_code() as u8)
}

fn scan(common: &Common, opts: ScanOptions) -> Result<u8> {
    let spec = load(common)?;
    let r = pipeline::scan(&spec, &opts)?;
    let json = serde_json::to_string_pretty(&r)? + "\n";
    write(&common.out, "scan.json", &json)?;
    for e in &r.entries {
        match (&e.count, &e.error) {
            (Some(c), _) => println!("{:>10.4}  {:>3}  {}", e.lambda, c, e.sigma.as_deref().unwrap_or("-")),
            (None, Some(err)) => println!("{:>10.4}  error: {err}", e.lambda),
            (None, None) => {}
        }
    }
    for b in &r.bifurcations {
        println!("bifurcation at {:.4}: {} -> {}", b.lambda, b.count_below, b.count_above);
    }
    for (lo, hi) in &r.unresolved {
        println!("unresolved change in [{lo:.4}, {hi:.4}]");
    }
    Ok(0)
}

fn verify(common: &Common, names: &[String]) -> Result<u8> {
    let suites = names
        .iter()
        .map(|s| s.parse::<Suite>())
        .collect::<Result<Vec<_>, _>>()?;
    let spec = load(common)?;
    let r = pipeline::verify(&spec, &suites, &VerifyOptions::default())?;
    write(&common.out, "verify.json", &r.to_json())?;
    for c in &r.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.summary);
    }
    Ok(if r.passed { 0 } else { 3 })
}

fn run(cli: Cli) -> Result<u8> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .context("starting worker pool")?;
    match &cli.command {
        Command::Analyze(common) => analyze(common),
        Command::Scan {
            common,
            lambda_min,
            lambda_max,
            steps,
            tol,
        } => scan(
            common,
            ScanOptions {
                lambda_min: *lambda_min,
                lambda_max: *lambda_max,
                steps: *steps,
                tol: *tol,
            },
        ),
        Command::Verify { common, suites } => verify(common, suites),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
