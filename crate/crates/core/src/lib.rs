//! Frame-driven simulator of IEEE 802.16 uplink QoS scheduling.
//!
//! The base station allocates uplink bytes per connection in two phases
//! (reserved minimum, then weighted excess) and pools them per subscriber
//! station. Each station spends its pooled grant with strict priority for
//! UGS, earliest-deadline-first for rtPS and a deficit round over nrtPS and
//! BE. Two baselines are included: grant-per-connection without a station
//! scheduler, and a strict-priority station scheduler.

pub mod bs_alloc;
pub mod cli;
pub mod config;
pub mod engine;
pub mod metrics;
pub mod model;
pub mod ss_sched;
pub mod traffic;

pub use cli::{run_matrix, write_outputs, CellKey, CellReport};
pub use config::{parse_config, ScenarioConfig};
pub use bs_alloc::{AllocationResult, BandwidthRequest, GrantMap};
pub use engine::{run, RunResult, Scenario, SimMode, SimState};
pub use model::{bytes_per_frame, validate_scenario, Connection, ConnectionId, FrameConfig, Packet, QosParams, ServiceClass};
pub use traffic::{TrafficIntensity, TrafficModel};
