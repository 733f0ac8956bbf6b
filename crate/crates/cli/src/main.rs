use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use dcc_core::experiment;
use dcc_core::sweep::{self, SweepSpec};
use dcc_core::RunConfig;

mod plot;

use plot::Family;

#[derive(Parser)]
#[command(
    name = "dcc-sim",
    version,
    about = "Reactive DCC CAM beaconing simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its CSV files.
    Run {
        /// Run configuration (TOML). Defaults apply when omitted.
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the cross-product described by a sweep file.
    Sweep {
        spec: PathBuf,
        /// Output directory; overrides `out_dir` from the sweep file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replaces the seed list with this single seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = default_parallelism())]
        parallelism: usize,
    },
    /// Render one figure family from a run or sweep directory as SVG.
    Plot {
        dir: PathBuf,
        #[arg(value_enum)]
        family: Family,
        /// Output file; defaults to `<dir>/<family>.svg`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a run configuration (or a sweep file with --sweep).
    ValidateConfig {
        config: PathBuf,
        #[arg(long)]
        sweep: bool,
    },
}

fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn cmd_run(config: Option<PathBuf>, seed: Option<u64>, out: PathBuf) -> Result<()> {
    let mut cfg = load_config(config.as_deref())?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let started = Instant::now();
    let res = experiment::run(&cfg, &out)?;
    let (n, jain) = res.metrics.fairness();
    eprintln!(
        "{} {} seed {}: {} vehicles, {} transmissions, jain {} ({:.1} s) -> {}",
        cfg.variant,
        cfg.density,
        cfg.seed,
        n,
        res.stats.transmissions,
        jain.map_or("undefined".to_owned(), |j| format!("{j:.4}")),
        started.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(())
}

fn cmd_sweep(
    spec: PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
    parallelism: usize,
) -> Result<()> {
    let mut spec = SweepSpec::load(&spec)?;
    if let Some(seed) = seed {
        spec.seeds = vec![seed];
    }
    let Some(out) = out.or_else(|| spec.out_dir.clone()) else {
        bail!("no output directory: pass --out or set out_dir in the sweep file");
    };
    let report = sweep::sweep(&spec, &out, parallelism)?;
    for r in report.records.iter().filter(|r| r.error.is_some()) {
        eprintln!("{}: {}", r.dir, r.error.as_deref().unwrap_or_default());
    }
    eprintln!(
        "{} runs, {} failed -> {}",
        report.records.len(),
        report.failures(),
        out.join(sweep::INDEX_FILE).display()
    );
    if report.failures() > 0 {
        bail!(
            "{} of {} runs failed",
            report.failures(),
            report.records.len()
        );
    }
    Ok(())
}

fn cmd_validate(path: PathBuf, is_sweep: bool) -> Result<()> {
    if is_sweep {
        let spec = SweepSpec::load(&path)?;
        println!("{}: ok ({} runs)", path.display(), spec.runs().len());
    } else {
        RunConfig::load(&path)?;
        println!("{}: ok", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out } => cmd_run(config, seed, out),
        Command::Sweep {
            spec,
            out,
            seed,
            parallelism,
        } => cmd_sweep(spec, out, seed, parallelism),
        Command::Plot { dir, family, out } => {
            let out = out.unwrap_or_else(|| dir.join(format!("{}.svg", family.name())));
            plot::render(&dir, family, &out)
                .with_context(|| format!("plotting {} from {}", family.name(), dir.display()))
                .map(|()| eprintln!("wrote {}", out.display()))
        }
        Command::ValidateConfig { config, sweep } => cmd_validate(config, sweep),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
