//! Cross-product sweeps over variants, densities, alphas and seeds.
//!
//! Each run is isolated: its own simulation, RNG streams and output
//! directory. The index is written only after every run has finished, in
//! cross-product order, so its content does not depend on parallelism.

use std::fmt::Write as _;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::dcc::DccVariant;
use crate::experiment;
use crate::scenario::DensityClass;

pub const INDEX_FILE: &str = "index.csv";

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid sweep: {0}")]
    Invalid(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub variants: Vec<DccVariant>,
    pub densities: Vec<DensityClass>,
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Used when no output directory is given on the command line.
    pub out_dir: Option<PathBuf>,
    /// Every other setting, shared by all runs.
    pub base: RunConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        let base = RunConfig::default();
        SweepSpec {
            variants: vec![base.variant],
            densities: vec![base.density],
            alphas: vec![base.alpha],
            seeds: vec![base.seed],
            out_dir: None,
            base,
        }
    }
}

impl SweepSpec {
    pub fn from_toml_str(s: &str) -> Result<Self, SweepError> {
        let spec: SweepSpec = toml::from_str(s).map_err(ConfigError::from)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, SweepError> {
        let text = fs::read_to_string(path).map_err(|source| SweepError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        for (name, len) in [
            ("variants", self.variants.len()),
            ("densities", self.densities.len()),
            ("alphas", self.alphas.len()),
            ("seeds", self.seeds.len()),
        ] {
            if len == 0 {
                return Err(SweepError::Invalid(format!("{name}: must not be empty")));
            }
        }
        for cfg in self.runs() {
            cfg.validate()?;
        }
        Ok(())
    }

    /// The cross-product in a fixed order: variant, density, alpha, seed.
    pub fn runs(&self) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for &variant in &self.variants {
            for &density in &self.densities {
                for &alpha in &self.alphas {
                    for &seed in &self.seeds {
                        out.push(RunConfig {
                            variant,
                            density,
                            alpha,
                            seed,
                            ..self.base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

pub fn run_dir_name(cfg: &RunConfig) -> String {
    format!(
        "{}_{}_a{:.2}_s{}",
        cfg.variant, cfg.density, cfg.alpha, cfg.seed
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub dir: String,
    pub config: RunConfig,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub records: Vec<RunRecord>,
}

impl SweepReport {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }
}

fn run_one(cfg: &RunConfig, dir: &Path) -> Option<String> {
    match catch_unwind(AssertUnwindSafe(|| experiment::run(cfg, dir))) {
        Ok(Ok(_)) => None,
        Ok(Err(e)) => Some(e.to_string()),
        Err(panic) => Some(
            panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "run panicked".to_owned()),
        ),
    }
}

/// Runs the whole cross-product with at most `parallelism` runs at once
/// and writes `index.csv` into `out_dir`.
pub fn sweep(
    spec: &SweepSpec,
    out_dir: &Path,
    parallelism: usize,
) -> Result<SweepReport, SweepError> {
    spec.validate()?;
    fs::create_dir_all(out_dir).map_err(|source| SweepError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()?;
    let runs = spec.runs();
    let records: Vec<RunRecord> = pool.install(|| {
        runs.into_par_iter()
            .map(|config| {
                let dir = run_dir_name(&config);
                let error = run_one(&config, &out_dir.join(&dir));
                RunRecord { dir, config, error }
            })
            .collect()
    });

    let mut index = String::from("run_dir,variant,density,alpha,seed,status,message\n");
    for r in &records {
        let (status, message) = match &r.error {
            None => ("ok", String::new()),
            Some(e) => ("failed", e.replace(['\n', ','], " ")),
        };
        writeln!(
            index,
            "{},{},{},{:.2},{},{},{}",
            r.dir,
            r.config.variant,
            r.config.density,
            r.config.alpha,
            r.config.seed,
            status,
            message
        )
        .unwrap();
    }
    let path = out_dir.join(INDEX_FILE);
    fs::write(&path, index).map_err(|source| SweepError::Io { path, source })?;
    Ok(SweepReport { records })
}
