//! Static homogeneous highway: six lanes of evenly spaced vehicles plus
//! receive-only roadside units on the median.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = usize;

/// Bound of the uniform per-node sensitivity offset, in dB.
pub const MAX_SENSITIVITY_OFFSET_DB: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadConfig {
    pub length_m: f64,
    pub lanes_per_direction: u32,
    pub directions: u32,
    pub lane_width_m: f64,
    pub rsu_spacing_m: f64,
}

impl Default for RoadConfig {
    fn default() -> Self {
        RoadConfig {
            length_m: 1000.0,
            lanes_per_direction: 3,
            directions: 2,
            lane_width_m: 3.0,
            rsu_spacing_m: 100.0,
        }
    }
}

impl RoadConfig {
    pub fn lane_count(&self) -> u32 {
        self.lanes_per_direction * self.directions
    }

    /// Lane centre lines, direction by direction, bottom to top.
    pub fn lane_centers(&self) -> Vec<f64> {
        (0..self.lane_count())
            .map(|lane| (lane as f64 + 0.5) * self.lane_width_m)
            .collect()
    }

    /// Centre of the road cross-section. RSUs sit here.
    pub fn median_y(&self) -> f64 {
        self.lane_count() as f64 * self.lane_width_m / 2.0
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let positive = [
            ("length_m", self.length_m),
            ("lane_width_m", self.lane_width_m),
            ("rsu_spacing_m", self.rsu_spacing_m),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ScenarioError::NonPositive { field, value: v });
            }
        }
        if self.lane_count() == 0 {
            return Err(ScenarioError::NoLanes);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityClass {
    Sparse,
    Medium,
    Dense,
    Extreme,
}

impl DensityClass {
    pub const ALL: [DensityClass; 4] = [
        DensityClass::Sparse,
        DensityClass::Medium,
        DensityClass::Dense,
        DensityClass::Extreme,
    ];

    pub fn inter_vehicle_m(self) -> f64 {
        match self {
            DensityClass::Sparse => 100.0,
            DensityClass::Medium => 45.0,
            DensityClass::Dense => 20.0,
            DensityClass::Extreme => 10.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DensityClass::Sparse => "sparse",
            DensityClass::Medium => "medium",
            DensityClass::Dense => "dense",
            DensityClass::Extreme => "extreme",
        }
    }
}

impl fmt::Display for DensityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DensityClass {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DensityClass::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| ScenarioError::UnknownDensity(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Vehicle,
    Rsu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub role: Role,
    pub x_m: f64,
    pub y_m: f64,
    pub sensitivity_offset_db: f64,
}

impl NodeSpec {
    pub fn is_vehicle(&self) -> bool {
        self.role == Role::Vehicle
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub road: RoadConfig,
    pub density: DensityClass,
    pub seed: u64,
    /// Vehicles first (ids `0..vehicle_count`), then RSUs.
    pub nodes: Vec<NodeSpec>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("{field} must be positive (got {value})")]
    NonPositive { field: &'static str, value: f64 },
    #[error("road has no lanes")]
    NoLanes,
    #[error("unknown density class {0:?} (expected sparse, medium, dense or extreme)")]
    UnknownDensity(String),
}

/// Number of vehicles the placement rule puts on one lane.
pub fn vehicles_per_lane(length_m: f64, inter_vehicle_m: f64) -> usize {
    (length_m / inter_vehicle_m).ceil() as usize
}

/// Places vehicles at `x = k * spacing` (for `x < length`) on every lane and
/// RSUs every `rsu_spacing_m` on the median, both ends included.
pub fn build_highway(
    road: &RoadConfig,
    density: DensityClass,
    heterogeneity: bool,
    seed: u64,
) -> Result<Scenario, ScenarioError> {
    road.validate()?;
    let spacing = density.inter_vehicle_m();
    let per_lane = vehicles_per_lane(road.length_m, spacing);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut nodes = Vec::new();
    for y in road.lane_centers() {
        for k in 0..per_lane {
            nodes.push((Role::Vehicle, k as f64 * spacing, y));
        }
    }
    let median = road.median_y();
    let rsus = (road.length_m / road.rsu_spacing_m).floor() as usize + 1;
    for k in 0..rsus {
        nodes.push((Role::Rsu, k as f64 * road.rsu_spacing_m, median));
    }

    let nodes = nodes
        .into_iter()
        .enumerate()
        .map(|(id, (role, x_m, y_m))| {
            let sensitivity_offset_db = if heterogeneity {
                rng.random_range(-MAX_SENSITIVITY_OFFSET_DB..=MAX_SENSITIVITY_OFFSET_DB)
            } else {
                0.0
            };
            NodeSpec {
                id,
                role,
                x_m,
                y_m,
                sensitivity_offset_db,
            }
        })
        .collect();

    Ok(Scenario {
        road: road.clone(),
        density,
        seed,
        nodes,
    })
}

pub fn pair_distance(a: &NodeSpec, b: &NodeSpec) -> f64 {
    (a.x_m - b.x_m).hypot(a.y_m - b.y_m)
}

impl Scenario {
    pub fn vehicle_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_vehicle()).count()
    }

    pub fn rsu_count(&self) -> usize {
        self.nodes.len() - self.vehicle_count()
    }

    pub fn vehicles(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.iter().filter(|n| n.is_vehicle())
    }

    /// Renders the node list as CSV (`id,role,x_m,y_m,sensitivity_offset_db`).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,role,x_m,y_m,sensitivity_offset_db\n");
        for n in &self.nodes {
            let role = match n.role {
                Role::Vehicle => "vehicle",
                Role::Rsu => "rsu",
            };
            out.push_str(&format!(
                "{},{},{:.3},{:.3},{:.6}\n",
                n.id, role, n.x_m, n.y_m, n.sensitivity_offset_db
            ));
        }
        out
    }
}
