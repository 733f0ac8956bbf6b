//! Flat, human-editable run configuration.
//!
//! Every physical and protocol knob is a top-level TOML key with a default.
//! The fully resolved configuration is echoed into each run's `run_meta.toml`,
//! which is itself a valid configuration file.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dcc::{DccTable, DccVariant, Retrigger, REACTIVE_INTERVALS_MS, REACTIVE_THRESHOLDS};
use crate::engine::SimTime;
use crate::mac::MacParams;
use crate::metrics::MetricsConfig;
use crate::phy::{free_space_ref_loss_db, OffsetMode, RadioParams, ITS_G5_CARRIER_HZ};
use crate::scenario::{DensityClass, RoadConfig};
use crate::sim::SimParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub variant: DccVariant,
    pub density: DensityClass,
    pub heterogeneity: bool,
    pub alpha: f64,
    pub seed: u64,
    pub sim_duration_s: f64,
    pub warmup_s: f64,
    pub retrigger: Retrigger,

    pub road_length_m: f64,
    pub lanes_per_direction: u32,
    pub directions: u32,
    pub lane_width_m: f64,
    pub rsu_spacing_m: f64,

    pub cam_payload_bytes: u64,
    pub tx_power_dbm: f64,
    pub antenna_gain_dbi: f64,
    pub ed_threshold_dbm: f64,
    pub offset_mode: OffsetMode,
    pub pathloss_exponent: f64,
    pub ref_loss_db_at_1m: f64,
    pub noise_floor_dbm: f64,
    pub sinr_threshold_db: f64,
    pub preamble_us: u64,
    pub symbol_us: u64,
    pub bits_per_symbol: u64,
    pub frame_overhead_bytes: u64,

    pub slot_us: u64,
    pub sifs_us: u64,
    pub aifsn: u64,
    pub cw: u32,

    pub cbr_window_ms: u64,
    pub off_interval_ms: u64,
    pub dcc_thresholds: Vec<f64>,
    pub dcc_intervals_ms: Vec<u64>,

    pub bin_ms: u64,
    pub dist_bin_m: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let road = RoadConfig::default();
        let radio = RadioParams::default();
        let mac = MacParams::default();
        RunConfig {
            variant: DccVariant::Off,
            density: DensityClass::Dense,
            heterogeneity: false,
            alpha: 1.0,
            seed: 1,
            sim_duration_s: 10.0,
            warmup_s: 2.0,
            retrigger: Retrigger::OnChange,
            road_length_m: road.length_m,
            lanes_per_direction: road.lanes_per_direction,
            directions: road.directions,
            lane_width_m: road.lane_width_m,
            rsu_spacing_m: road.rsu_spacing_m,
            cam_payload_bytes: 400,
            tx_power_dbm: radio.tx_power_dbm,
            antenna_gain_dbi: radio.antenna_gain_dbi,
            ed_threshold_dbm: radio.ed_threshold_dbm,
            offset_mode: radio.offset_mode,
            pathloss_exponent: radio.pathloss_exponent,
            ref_loss_db_at_1m: free_space_ref_loss_db(ITS_G5_CARRIER_HZ),
            noise_floor_dbm: radio.noise_floor_dbm,
            sinr_threshold_db: radio.sinr_threshold_db,
            preamble_us: radio.preamble_us,
            symbol_us: radio.symbol_us,
            bits_per_symbol: radio.bits_per_symbol,
            frame_overhead_bytes: radio.frame_overhead_bytes,
            slot_us: mac.slot_us,
            sifs_us: mac.sifs_us,
            aifsn: mac.aifsn,
            cw: mac.cw,
            cbr_window_ms: 100,
            off_interval_ms: crate::dcc::DEFAULT_OFF_INTERVAL_MS,
            dcc_thresholds: REACTIVE_THRESHOLDS.to_vec(),
            dcc_intervals_ms: REACTIVE_INTERVALS_MS.to_vec(),
            bin_ms: 20,
            dist_bin_m: 40.0,
        }
    }
}

fn secs_to_time(s: f64) -> SimTime {
    SimTime::from_micros((s * 1e6).round() as u64)
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    // Comparisons are negated so that NaN fails them.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid(
                "alpha",
                format!("must lie in [0, 1], got {}", self.alpha),
            ));
        }
        if !(self.warmup_s >= 0.0) {
            return Err(invalid("warmup_s", "must be non-negative"));
        }
        if !(self.sim_duration_s > self.warmup_s) {
            return Err(invalid(
                "sim_duration_s",
                format!(
                    "must exceed warmup_s ({} <= {})",
                    self.sim_duration_s, self.warmup_s
                ),
            ));
        }
        self.road()
            .validate()
            .map_err(|e| invalid("road", e.to_string()))?;
        for (field, v) in [
            ("symbol_us", self.symbol_us),
            ("bits_per_symbol", self.bits_per_symbol),
            ("slot_us", self.slot_us),
            ("cbr_window_ms", self.cbr_window_ms),
            ("off_interval_ms", self.off_interval_ms),
            ("bin_ms", self.bin_ms),
        ] {
            if v == 0 {
                return Err(invalid(field, "must be positive"));
            }
        }
        if !(self.dist_bin_m > 0.0) {
            return Err(invalid("dist_bin_m", "must be positive"));
        }
        if !(self.ed_threshold_dbm < self.tx_power_dbm) {
            return Err(invalid("ed_threshold_dbm", "must be below tx_power_dbm"));
        }
        if !(self.sinr_threshold_db > 0.0) {
            return Err(invalid("sinr_threshold_db", "must be positive"));
        }
        if !(self.pathloss_exponent > 0.0) {
            return Err(invalid("pathloss_exponent", "must be positive"));
        }
        DccTable::new(&self.dcc_thresholds, &self.dcc_intervals_ms)
            .map_err(|e| invalid("dcc_thresholds", e.to_string()))?;
        Ok(())
    }

    pub fn road(&self) -> RoadConfig {
        RoadConfig {
            length_m: self.road_length_m,
            lanes_per_direction: self.lanes_per_direction,
            directions: self.directions,
            lane_width_m: self.lane_width_m,
            rsu_spacing_m: self.rsu_spacing_m,
        }
    }

    pub fn radio(&self) -> RadioParams {
        RadioParams {
            tx_power_dbm: self.tx_power_dbm,
            antenna_gain_dbi: self.antenna_gain_dbi,
            ed_threshold_dbm: self.ed_threshold_dbm,
            pathloss_exponent: self.pathloss_exponent,
            ref_loss_db_at_1m: self.ref_loss_db_at_1m,
            noise_floor_dbm: self.noise_floor_dbm,
            sinr_threshold_db: self.sinr_threshold_db,
            preamble_us: self.preamble_us,
            symbol_us: self.symbol_us,
            bits_per_symbol: self.bits_per_symbol,
            frame_overhead_bytes: self.frame_overhead_bytes,
            offset_mode: self.offset_mode,
        }
    }

    pub fn mac(&self) -> MacParams {
        MacParams {
            slot_us: self.slot_us,
            sifs_us: self.sifs_us,
            aifsn: self.aifsn,
            cw: self.cw,
        }
    }

    pub fn sim_params(&self) -> Result<SimParams, ConfigError> {
        self.validate()?;
        Ok(SimParams {
            radio: self.radio(),
            mac: self.mac(),
            variant: self.variant,
            alpha: self.alpha,
            table: DccTable::new(&self.dcc_thresholds, &self.dcc_intervals_ms)
                .map_err(|e| invalid("dcc_thresholds", e.to_string()))?,
            retrigger: self.retrigger,
            off_interval_ms: self.off_interval_ms,
            payload_bytes: self.cam_payload_bytes,
            cbr_window_us: self.cbr_window_ms * 1_000,
            metrics: MetricsConfig {
                warmup: secs_to_time(self.warmup_s),
                end: secs_to_time(self.sim_duration_s),
                bin_us: self.bin_ms * 1_000,
                dist_bin_m: self.dist_bin_m,
            },
            record_ledger: false,
        })
    }
}
