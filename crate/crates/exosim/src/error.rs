//! Error types shared across the simulator.

use thiserror::Error;

/// Errors raised while evaluating the plant model or controller laws.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    /// Cylinder-length radicand went non-positive: the two mount points and
    /// the joint no longer form a usable linkage at this angle.
    #[error("degenerate linkage geometry at phi = {phi} rad (radicand = {radicand})")]
    DegenerateGeometry { phi: f64, radicand: f64 },

    /// Moment-arm triangle inequality violated (acos argument outside [-1, 1]).
    #[error("degenerate moment-arm triangle (cos angle = {cos_angle})")]
    DegenerateTriangle { cos_angle: f64 },

    /// Cylinder/chamber volume term 2*V0 + (A1 - A2)*x_c went non-positive.
    #[error("chamber volume exhausted at x_c = {x_c} m")]
    VolumeExhausted { x_c: f64 },

    /// Moment arm is zero, so no cylinder force can produce the demanded torque.
    #[error("singular moment arm at phi = {phi} rad")]
    SingularMomentArm { phi: f64 },

    /// State-space gain n1 is zero; the force channel is uncontrollable.
    #[error("singular hydraulic coefficient n1")]
    SingularCoefficient,

    /// Estimator/network dimension does not match the regressor length.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Errors raised by a closed-loop simulation run.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),

    /// A state, control, or logged quantity stopped being finite.
    #[error("non-finite value in `{what}` at t = {t} s")]
    NonFinite { what: &'static str, t: f64 },

    /// An adaptive estimate crossed the divergence watchdog threshold.
    #[error("estimate `{what}` diverged (|value| = {value:e}) at t = {t} s")]
    EstimateDiverged { what: &'static str, value: f64, t: f64 },
}

/// A single configuration problem, addressed by its field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Validation failure carrying every issue found, not just the first.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid configuration ({} issue(s))", issues.len())]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl ConfigError {
    pub fn new(issues: Vec<ConfigIssue>) -> Self {
        Self { issues }
    }
}
