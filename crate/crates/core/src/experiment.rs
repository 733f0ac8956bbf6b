//! A single configured run and its CSV output directory.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::metrics::{MetricsStore, PdrBin};
use crate::scenario::{build_highway, Role};
use crate::sim::{simulate, SimOutput, SimParams};

pub const GENERATOR: &str = concat!("dcc-core ", env!("CARGO_PKG_VERSION"));

pub const PDR_FILE: &str = "pdr_vs_distance.csv";
pub const PIR_FILE: &str = "pir_vs_distance.csv";
pub const BINS_FILE: &str = "bins_20ms.csv";
pub const FAIRNESS_FILE: &str = "fairness.csv";
pub const TRACE_FILE: &str = "controller_trace.csv";
pub const PDR_ROLE_FILE: &str = "pdr_by_role.csv";
pub const META_FILE: &str = "run_meta.toml";

/// Every file a run writes, in a fixed order.
pub const OUTPUT_FILES: [&str; 7] = [
    PDR_FILE,
    PIR_FILE,
    BINS_FILE,
    FAIRNESS_FILE,
    TRACE_FILE,
    PDR_ROLE_FILE,
    META_FILE,
];

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dcc(#[from] crate::dcc::DccError),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// Builds the scenario and simulation parameters described by `cfg`.
pub fn prepare(cfg: &RunConfig) -> Result<(crate::Scenario, SimParams), RunError> {
    let params = cfg.sim_params()?;
    let scenario = build_highway(&cfg.road(), cfg.density, cfg.heterogeneity, cfg.seed)
        .map_err(|e| RunError::Scenario(e.to_string()))?;
    Ok((scenario, params))
}

/// Runs the simulation in memory.
pub fn execute(cfg: &RunConfig) -> Result<SimOutput, RunError> {
    let (scenario, params) = prepare(cfg)?;
    Ok(simulate(scenario, params)?)
}

/// Runs `cfg` and writes every output file into `out_dir`.
pub fn run(cfg: &RunConfig, out_dir: &Path) -> Result<SimOutput, RunError> {
    let out = execute(cfg)?;
    write_outputs(cfg, &out.metrics, out_dir)?;
    Ok(out)
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<(), RunError> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|source| RunError::Io { path, source })
}

pub fn write_outputs(cfg: &RunConfig, m: &MetricsStore, out_dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(out_dir).map_err(|source| RunError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    write_file(out_dir, PDR_FILE, &pdr_csv(&m.pdr_by_distance()))?;
    write_file(out_dir, PIR_FILE, &pir_csv(m))?;
    write_file(out_dir, BINS_FILE, &bins_csv(m))?;
    write_file(out_dir, FAIRNESS_FILE, &fairness_csv(m))?;
    write_file(out_dir, TRACE_FILE, &trace_csv(m))?;
    write_file(out_dir, PDR_ROLE_FILE, &pdr_by_role_csv(m))?;
    write_file(out_dir, META_FILE, &run_meta(cfg))?;
    Ok(())
}

pub fn pdr_csv(rows: &[PdrBin]) -> String {
    let mut s = String::from("bin_center_m,generated,received,pdr\n");
    for r in rows {
        writeln!(
            s,
            "{:.1},{},{},{:.6}",
            r.bin_center_m, r.generated, r.received, r.pdr
        )
        .unwrap();
    }
    s
}

pub fn pir_csv(m: &MetricsStore) -> String {
    let mut s = String::from("bin_center_m,samples,mean_pir_s\n");
    for r in m.pir_stats() {
        writeln!(s, "{:.1},{},{:.6}", r.bin_center_m, r.samples, r.mean_pir_s).unwrap();
    }
    s
}

pub fn bins_csv(m: &MetricsStore) -> String {
    let mut s = String::from("bin_start_s,tx_count,mean_cbr\n");
    for b in m.tx_and_cbr_bins() {
        writeln!(
            s,
            "{:.3},{},{:.6}",
            b.bin_start.as_secs_f64(),
            b.tx_count,
            b.mean_cbr
        )
        .unwrap();
    }
    s
}

pub fn fairness_csv(m: &MetricsStore) -> String {
    let (n, jain) = m.fairness();
    let jain = jain.map_or_else(|| "undefined".to_owned(), |j| format!("{j:.6}"));
    format!("n_vehicles,jain\n{n},{jain}\n")
}

pub fn trace_csv(m: &MetricsStore) -> String {
    let mut s = String::from("node,t_s,cbr,cl,state,setting_ms,realized_gap_ms\n");
    for r in m.trace() {
        let gap = r
            .realized_gap_ms
            .map(|g| format!("{g:.3}"))
            .unwrap_or_default();
        writeln!(
            s,
            "{},{:.6},{:.6},{:.6},{},{:.3},{}",
            r.node,
            r.t.as_secs_f64(),
            r.cbr,
            r.cl,
            r.state,
            r.setting_ms,
            gap
        )
        .unwrap();
    }
    s
}

/// PDR by distance with receivers split into vehicles and RSUs.
pub fn pdr_by_role_csv(m: &MetricsStore) -> String {
    let mut s = String::from("role,bin_center_m,generated,received,pdr\n");
    for (role, name) in [(Role::Vehicle, "vehicle"), (Role::Rsu, "rsu")] {
        for r in m.pdr_by_distance_for(role) {
            writeln!(
                s,
                "{name},{:.1},{},{},{:.6}",
                r.bin_center_m, r.generated, r.received, r.pdr
            )
            .unwrap();
        }
    }
    s
}

/// The resolved configuration, loadable again as a run config.
pub fn run_meta(cfg: &RunConfig) -> String {
    format!(
        "# generator: {GENERATOR}\n# cam_queue_depth: 1\n# seed: {}\n{}",
        cfg.seed,
        cfg.to_toml_string()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcc::DccVariant;
    use crate::scenario::DensityClass;

    fn short(variant: DccVariant) -> RunConfig {
        RunConfig {
            variant,
            density: DensityClass::Sparse,
            sim_duration_s: 1.5,
            warmup_s: 0.5,
            ..RunConfig::default()
        }
    }

    #[test]
    fn writes_every_file_with_headers() {
        let dir = tempfile::tempdir().unwrap();
        run(&short(DccVariant::reactive(3)), dir.path()).unwrap();
        for f in OUTPUT_FILES {
            let body = fs::read_to_string(dir.path().join(f)).unwrap();
            assert!(body.ends_with('\n'), "{f}");
        }
        let bins = fs::read_to_string(dir.path().join(BINS_FILE)).unwrap();
        assert_eq!(bins.lines().count(), 1 + 50);
        assert!(bins.starts_with("bin_start_s,tx_count,mean_cbr\n0.500,"));
    }

    #[test]
    fn run_meta_reloads_to_the_same_config() {
        let cfg = short(DccVariant::reactive(4));
        let back = RunConfig::from_toml_str(&run_meta(&cfg)).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn invalid_config_is_reported_before_running() {
        let cfg = RunConfig {
            alpha: 1.3,
            ..RunConfig::default()
        };
        let err = execute(&cfg).unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
    }
}
