use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use unduloid_cli::cache::Cache;
use unduloid_cli::pipeline::resolve_out_dir;
use unduloid_cli::plot::{emit_plots, KINDS};
use unduloid_cli::{Pipeline, RunConfig, Scope, VerificationReport};

#[derive(Parser, Debug)]
#[command(
    name = "unduloid",
    version,
    about = "Phase-field interfaces near Delaunay unduloids: solve and verify"
)]
struct Cli {
    /// TOML run configuration (defaults are used when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the configuration).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Recompute every stage and store nothing.
    #[arg(long, global = true)]
    no_cache: bool,
    /// Worker threads.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generating curves, periods and curvature checks.
    Geometry,
    /// Hill discriminants and the temperate kernel count.
    Hill,
    /// Residuals of the geometric Jacobi fields under refinement.
    Jacobi,
    /// 1D interface profiles, multiplier and coercivity.
    Profile,
    /// 2D solutions with ansatz, decay and correspondence diagnostics.
    Solve,
    /// Bloch band sweep, nondegeneracy verdict and orthogonal coercivity.
    Bloch,
    /// Every stage; writes report.json and report.txt.
    VerifyAll,
    /// Render figures from a report.
    Plot {
        #[arg(long, value_parser = KINDS)]
        kind: String,
        /// Report to read (default: <out>/report.json).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Print the summary of an existing report.
    Report {
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn read_report(path: &Path) -> Result<VerificationReport> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring the worker pool")?;
    }
    let config = load_config(cli.config.as_deref())?;
    let out = resolve_out_dir(&config, cli.config.as_deref(), cli.out.as_deref());
    let (scope, name) = match &cli.command {
        Command::Geometry => (
            Scope {
                geometry: true,
                ..Scope::NONE
            },
            "geometry",
        ),
        Command::Hill => (
            Scope {
                hill: true,
                ..Scope::NONE
            },
            "hill",
        ),
        Command::Jacobi => (
            Scope {
                jacobi: true,
                ..Scope::NONE
            },
            "jacobi",
        ),
        Command::Profile => (
            Scope {
                profile: true,
                ..Scope::NONE
            },
            "profile",
        ),
        Command::Solve => (
            Scope {
                solve: true,
                ..Scope::NONE
            },
            "solve",
        ),
        Command::Bloch => (
            Scope {
                bloch: true,
                ..Scope::NONE
            },
            "bloch",
        ),
        Command::VerifyAll => (Scope::ALL, "report"),
        Command::Plot { kind, report } => {
            let path = report.clone().unwrap_or_else(|| out.join("report.json"));
            let r = read_report(&path)?;
            let data_dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| out.clone());
            for f in emit_plots(&r, kind, &data_dir, &out)? {
                println!("{}", f.display());
            }
            return Ok(true);
        }
        Command::Report { report } => {
            let path = report.clone().unwrap_or_else(|| out.join("report.json"));
            let r = read_report(&path)?;
            print!("{}", r.summary());
            return Ok(r.all_pass);
        }
    };
    let cache = if cli.no_cache || !config.output.cache {
        Cache::disabled()
    } else {
        Cache::from_env(&out.join("cache"))
    };
    let start = Instant::now();
    let pipeline = Pipeline::new(config, cache, &out);
    let report = pipeline.run(scope)?;
    let (json, txt) = pipeline.write_report(&report, name)?;
    print!("{}", report.summary());
    eprintln!(
        "wrote {} and {} in {:.2} s (cache: {} hits, {} misses)",
        json.display(),
        txt.display(),
        start.elapsed().as_secs_f64(),
        pipeline.cache.hits(),
        pipeline.cache.misses()
    );
    Ok(report.all_pass)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
