//! Closed-loop simulator and control library for a hydraulically actuated
//! exoskeleton ankle joint.
//!
//! The crate models the servo valve, cylinder, gas accumulator, and shank
//! pendulum ([`plant`]); a two-layer cascade regulator — a backstepping
//! position controller with online parameter adaptation ([`highlevel`]) and
//! a force controller with a combined smooth/jump basis approximator and a
//! saturation compensator ([`lowlevel`], [`funcapprox`]); and a fixed-step
//! simulation engine with trace logging and metrics ([`sim`]). Scenario
//! files, validation, and sweeps live in [`scenario`].

pub mod error;
pub mod funcapprox;
pub mod highlevel;
pub mod lowlevel;
pub mod plant;
pub mod scenario;
pub mod sim;

pub use error::{ConfigError, ConfigIssue, ModelError, SimError};
pub use scenario::{load_scenario, parse_scenario, NetParams, Scenario};
pub use sim::{run, ControllerKind, Metrics, SimConfig, SimOutput, TraceRecord};
