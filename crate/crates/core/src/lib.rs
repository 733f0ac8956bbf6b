//! Discrete-event simulator of periodic CAM beaconing on a shared ITS-G5
//! broadcast channel, with reactive decentralized congestion control.
//!
//! The building blocks are usable on their own: [`engine`] orders events,
//! [`scenario`] places nodes, [`phy`] decides channel state and receptions,
//! [`mac`] contends for the channel, [`dcc`] adapts the CAM interval and
//! [`metrics`] aggregates results. [`sim`] wires them into one run;
//! [`experiment`] and [`sweep`] add configuration files and CSV output.

pub mod config;
pub mod dcc;
pub mod engine;
pub mod experiment;
pub mod mac;
pub mod metrics;
pub mod phy;
pub mod scenario;
pub mod sim;
pub mod sweep;

pub use config::{ConfigError, RunConfig};
pub use dcc::{DccController, DccTable, DccVariant, IntervalPolicy, Retrigger, TimerPolicy};
pub use engine::{Event, EventKind, EventQueue, SimTime};
pub use mac::MacParams;
pub use metrics::{MetricsConfig, MetricsStore};
pub use phy::{OffsetMode, Outcome, RadioParams, Transmission};
pub use scenario::{build_highway, DensityClass, NodeId, NodeSpec, RoadConfig, Role, Scenario};
pub use sim::{simulate, CbrSample, SimOutput, SimParams, Simulation};
