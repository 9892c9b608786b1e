//! Position-level backstepping controller for the leg subsystem.
//!
//! Produces the desired cylinder force from the tracking errors and the
//! current parameter estimates, and adapts the mass, inertia, Coulomb, and
//! viscous estimates online from the same error signals.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::plant::{friction_force, sgn, ReferenceSample};

/// Magnitude at which an adaptive estimate is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

/// Gains of the position controller and its adaptation laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HlGains {
    /// Virtual-control gain (1/s).
    pub k1: f64,
    /// Velocity-error gain.
    pub k2: f64,
    /// Penalty weight on the position error.
    pub rho1: f64,
    /// Penalty weight on the velocity error.
    pub rho2: f64,
    /// Inertia adaptation gain.
    pub q_j: f64,
    /// Mass adaptation gain.
    pub q_m: f64,
    /// Coulomb adaptation gain.
    pub q_c: f64,
    /// Viscous adaptation gain.
    pub q_b: f64,
    /// Flip the sign of the rho1/rho2 * e1 feedback term. The default (false)
    /// is the variant that cancels the Lyapunov cross term; the flipped form
    /// is kept selectable for comparison.
    #[serde(default)]
    pub flip_e1_term: bool,
}

impl HlGains {
    /// rho1 / rho2.
    pub fn rho12(&self) -> f64 {
        self.rho1 / self.rho2
    }
}

/// Online estimates of the uncertain leg parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HlEstimates {
    /// Estimated inertia (kg m^2).
    pub inertia: f64,
    /// Estimated mass (kg).
    pub mass: f64,
    /// Estimated Coulomb friction (N).
    pub coulomb: f64,
    /// Estimated viscous coefficient (N s/m).
    pub viscous: f64,
}

impl HlEstimates {
    pub fn zeroed() -> Self {
        Self {
            inertia: 0.0,
            mass: 0.0,
            coulomb: 0.0,
            viscous: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.inertia.is_finite()
            && self.mass.is_finite()
            && self.coulomb.is_finite()
            && self.viscous.is_finite()
    }

    /// Name and value of the first estimate past the divergence watchdog, if any.
    pub fn diverged(&self) -> Option<(&'static str, f64)> {
        let entries = [
            ("inertia", self.inertia),
            ("mass", self.mass),
            ("coulomb", self.coulomb),
            ("viscous", self.viscous),
        ];
        entries
            .into_iter()
            .find(|(_, v)| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT)
    }
}

/// Position/velocity tracking errors and the virtual control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingErrors {
    /// phi - phi_d (rad).
    pub e1: f64,
    /// phi_dot - phi_d_dot (rad/s).
    pub e1_dot: f64,
    /// k1*e1 + e1_dot (rad/s); deviation from the virtual control.
    pub e2: f64,
    /// Virtual control -k1*e1 + phi_d_dot (rad/s).
    pub v1: f64,
    /// Analytic derivative of the virtual control (rad/s^2).
    pub v1_dot: f64,
}

/// Tracking errors and virtual control for the current reference sample.
pub fn compute_errors(phi: f64, phi_dot: f64, reference: &ReferenceSample, k1: f64) -> TrackingErrors {
    let e1 = phi - reference.phi_d;
    let e1_dot = phi_dot - reference.phi_d_dot;
    TrackingErrors {
        e1,
        e1_dot,
        e2: k1 * e1 + e1_dot,
        v1: -k1 * e1 + reference.phi_d_dot,
        v1_dot: -k1 * e1_dot + reference.phi_d_ddot,
    }
}

/// Friction force predicted by the current estimates.
pub fn estimated_friction(phi_dot: f64, est: &HlEstimates) -> f64 {
    friction_force(phi_dot, est.coulomb, est.viscous)
}

/// Desired cylinder force for the force-tracking layer.
///
/// `arm` is the moment arm at the current angle; `gravity` and `com_distance`
/// are known constants (only mass and inertia are estimated).
pub fn desired_force(
    err: &TrackingErrors,
    phi: f64,
    phi_dot: f64,
    est: &HlEstimates,
    tau_hm: f64,
    gains: &HlGains,
    arm: f64,
    gravity: f64,
    com_distance: f64,
) -> Result<f64, ModelError> {
    if arm == 0.0 {
        return Err(ModelError::SingularMomentArm { phi });
    }
    let e1_sign = if gains.flip_e1_term { -1.0 } else { 1.0 };
    let f_f_hat = estimated_friction(phi_dot, est);
    Ok(-(gains.k2 * err.e2
        + e1_sign * gains.rho12() * err.e1
        + arm * f_f_hat
        + tau_hm
        - est.mass * gravity * com_distance * phi.sin()
        - est.inertia * err.v1_dot)
        / arm)
}

/// One explicit-Euler increment of the inertia and mass estimates.
///
/// Returns (d_inertia, d_mass) to be added to the running estimates.
pub fn adapt_mass_inertia(
    err: &TrackingErrors,
    phi: f64,
    gains: &HlGains,
    gravity: f64,
    com_distance: f64,
    dt: f64,
) -> (f64, f64) {
    let d_inertia = -dt * gains.rho2 * err.e2 * err.v1_dot / gains.q_j;
    let d_mass = -dt * gains.rho2 * err.e2 * gravity * com_distance * phi.sin() / gains.q_m;
    (d_inertia, d_mass)
}

/// One explicit-Euler increment of the friction estimates.
///
/// Returns (d_coulomb, d_viscous).
pub fn adapt_friction(
    err: &TrackingErrors,
    phi_dot: f64,
    gains: &HlGains,
    arm: f64,
    dt: f64,
) -> (f64, f64) {
    let d_coulomb = -dt * gains.rho2 * arm * err.e2 * sgn(phi_dot) / gains.q_c;
    let d_viscous = -dt * gains.rho2 * arm * err.e2 * phi_dot / gains.q_b;
    (d_coulomb, d_viscous)
}
