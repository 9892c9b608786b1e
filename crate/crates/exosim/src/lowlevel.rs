//! Force-tracking controller for the hydraulic subsystem.
//!
//! Turns the force error, the network estimate of the lumped nonlinearity,
//! the previous saturation residual, and the auxiliary anti-saturation state
//! into a servo current command.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::funcapprox::ApproxNet;
use crate::highlevel::HlEstimates;
use crate::plant::HydraulicCoeffs;

/// Gains of the force controller and the auxiliary compensator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlGains {
    /// Force-error gain.
    pub k3: f64,
    /// Lyapunov weight on the force error.
    pub rho3: f64,
    /// Auxiliary-state decay gain; must exceed 1/2.
    pub k_xi: f64,
    /// Dead-zone half-width for the auxiliary state (A).
    pub mu: f64,
    /// Half-width of the friction-derivative smoothing band (rad/s).
    pub epsilon0: f64,
}

/// Mutable state of the low-level layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LlState {
    /// Auxiliary saturation-compensation state (A).
    pub xi: f64,
    /// Previous-step smoothed force reference, for the backward difference.
    pub prev_f_tilde: Option<f64>,
}

impl LlState {
    pub fn new() -> Self {
        Self {
            xi: 0.0,
            prev_f_tilde: None,
        }
    }
}

impl Default for LlState {
    fn default() -> Self {
        Self::new()
    }
}

/// Closed-form boundedness constants for the force layer: a positive split
/// of the force-error decay budget plus the spool bounds. The ball radii
/// depend on ideal weight norms that are unknowable in practice, so the
/// boundedness tests use these formulas as documented shapes and check
/// finiteness plus the spool bound directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UubBounds {
    /// Splits of k3 * rho3; all positive, summing to k3 * rho3 exactly.
    pub k30: f64,
    pub k31: f64,
    pub k32: f64,
    /// Spool-velocity bound (m/s).
    pub varsigma: f64,
    /// Spool-position bound, the large-time limit of the decay envelope (m).
    pub rho_bound: f64,
}

impl UubBounds {
    /// Even split of the decay budget, with the spool bounds implied by the
    /// current limit and the valve dynamics.
    pub fn even_split(gains: &LlGains, valve_tau: f64, k_s: f64, u_max: f64, x_v0: f64) -> Self {
        let third = gains.k3 * gains.rho3 / 3.0;
        let rho_bound = x_v0.abs() + k_s * u_max;
        Self {
            k30: third,
            k31: third,
            k32: third,
            varsigma: (k_s * u_max + rho_bound) / valve_tau,
            rho_bound,
        }
    }

    /// Spool-position envelope at time `t` for an initial spool `x_v0`.
    pub fn spool_envelope(x_v0: f64, t: f64, valve_tau: f64, k_s: f64, u_max: f64) -> f64 {
        x_v0.abs() * (-t / valve_tau).exp() + k_s * u_max
    }

    /// Composite bound constant from leakage levels, ideal block norms, the
    /// spool-velocity bound, and the approximation-error bound.
    pub fn alpha1(&self, rho3: f64, valve_tau: f64, sigma: [f64; 3], w_norms: [f64; 3], eps_bar: f64) -> f64 {
        let leak: f64 = sigma
            .iter()
            .zip(&w_norms)
            .map(|(s, w)| 0.5 * s * w * w)
            .sum();
        leak + (rho3 * valve_tau * self.varsigma).powi(2) / (4.0 * self.k31)
            + (rho3 * eps_bar).powi(2) / (4.0 * self.k32)
    }

    /// Ultimate ball radius for the force error.
    pub fn e3_ball(&self, alpha1: f64) -> f64 {
        (alpha1 / self.k30).sqrt()
    }

    /// Ultimate ball radius for one weight-error block.
    pub fn weight_ball(alpha1: f64, sigma_i: f64) -> f64 {
        (2.0 * alpha1 / sigma_i).sqrt()
    }

    /// Ultimate ball radii for the position-layer errors, with the moment
    /// arm standing in for the coupling constant.
    pub fn position_balls(&self, alpha1: f64, arm: f64, k1: f64, k2: f64, k21: f64) -> (f64, f64) {
        let k_rho3 = self.k30 + self.k31 + self.k32;
        let common = arm * arm * alpha1 / (4.0 * k_rho3 * k21);
        ((common / k1).sqrt(), (common / k2).sqrt())
    }
}

/// Adaptation rates of the friction estimates, fed to the approximate
/// friction derivative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EstimateRates {
    pub coulomb: f64,
    pub viscous: f64,
}

/// Three-branch approximate derivative of the estimated friction force.
///
/// Outside the +/- epsilon0 band the branch value is
/// -+ coulomb - viscous * phi_ddot - viscous_rate * phi_dot; inside the band a
/// fixed slope (-coulomb - viscous * epsilon0) / epsilon0 stands in for the
/// sgn discontinuity. Branch boundaries: the upper branch owns phi_dot =
/// epsilon0, the middle branch owns phi_dot = -epsilon0.
pub fn friction_derivative_approx(
    phi_dot: f64,
    phi_ddot: f64,
    est: &HlEstimates,
    rates: &EstimateRates,
    epsilon0: f64,
) -> f64 {
    if phi_dot >= epsilon0 {
        -est.coulomb - est.viscous * phi_ddot - rates.viscous * phi_dot
    } else if phi_dot >= -epsilon0 {
        (-est.coulomb - est.viscous * epsilon0) / epsilon0
    } else {
        est.coulomb - est.viscous * phi_ddot - rates.viscous * phi_dot
    }
}

/// Force tracking error.
#[inline]
pub fn force_error(f_l: f64, f_l_d: f64) -> f64 {
    f_l - f_l_d
}

/// Reference value of the lumped nonlinearity in the force-error dynamics.
///
/// This is the quantity the network is asked to estimate. It is used only by
/// tests and the trace log, never by the controller itself.
pub fn f4_reference(
    coeffs: &HydraulicCoeffs,
    x_c_dot: f64,
    x3: f64,
    f_tilde_dot: f64,
    f_f_hat_dot: f64,
    p_s: f64,
    p_s_dot: f64,
) -> Result<f64, ModelError> {
    if coeffs.n1 == 0.0 {
        return Err(ModelError::SingularCoefficient);
    }
    Ok((-coeffs.n2 * x_c_dot - coeffs.n3 * x3 - f_tilde_dot - f_f_hat_dot
        + coeffs.n4 * p_s
        + coeffs.n5 * p_s_dot)
        / coeffs.n1)
}

/// Servo current command before saturation.
///
/// u = -(k3 e3 + What' chi(Z)) / k_s + delta + xi. The residual delta is
/// defined by the same-instant saturation of the final command, which makes
/// the delta term an identity on the applied current: adding it and clamping
/// reproduces the clamp of the delta-free command. Callers that resolve the
/// loop that way pass delta = 0 and let the saturation stage report the
/// residual; the parameter is kept so the published form can be evaluated
/// with any residual.
pub fn control(
    e3: f64,
    chi: &[f64],
    net: &ApproxNet,
    delta: f64,
    xi: f64,
    gains: &LlGains,
    k_s: f64,
) -> Result<f64, ModelError> {
    let estimate = net.estimate_with(chi)?;
    Ok(-(gains.k3 * e3 + estimate) / k_s + delta + xi)
}

fn aux_rate(xi: f64, delta: f64, e3: f64, gains: &LlGains, k_s: f64, rho3: f64) -> f64 {
    let drive = (rho3 * e3 * k_s * (delta + xi)).abs() + 0.5 * delta * delta;
    -gains.k_xi * xi - drive / xi - delta
}

/// One explicit-Euler step of the auxiliary state.
///
/// Inside the dead zone |xi| <= mu the state is frozen; the dead zone is what
/// keeps the 1/xi term away from zero.
pub fn aux_update(
    xi: f64,
    delta: f64,
    e3: f64,
    gains: &LlGains,
    k_s: f64,
    rho3: f64,
    dt: f64,
) -> f64 {
    if xi.abs() > gains.mu {
        xi + dt * aux_rate(xi, delta, e3, gains, k_s, rho3)
    } else {
        xi
    }
}

/// Advance the auxiliary state across one controller period, re-arming it
/// out of the dead zone when saturation is present.
///
/// The continuous-time law only ever shrinks |xi| toward the dead zone, but
/// its 1/xi term is far too stiff for a single Euler step at the controller
/// rate once the residual is large. The inner loop therefore takes Euler
/// substeps capped at half the remaining distance to zero, freezing as soon
/// as the state enters the dead zone.
pub fn integrate_aux(
    xi: f64,
    delta: f64,
    e3: f64,
    gains: &LlGains,
    k_s: f64,
    rho3: f64,
    dt: f64,
) -> f64 {
    let mut xi = xi;
    if xi.abs() <= gains.mu {
        if delta != 0.0 {
            // Re-arm so the active branch engages against the residual.
            xi = 2.0 * gains.mu * delta.signum();
        } else {
            return xi;
        }
    }

    let mut remaining = dt;
    // The cap makes |xi| shrink at most geometrically, so the active phase
    // runs out of substeps long before this limit.
    for _ in 0..256 {
        if remaining <= 0.0 || xi.abs() <= gains.mu {
            break;
        }
        let rate = aux_rate(xi, delta, e3, gains, k_s, rho3);
        if rate == 0.0 {
            break;
        }
        let cap = 0.5 * xi.abs() / rate.abs();
        let h = remaining.min(cap);
        xi += h * rate;
        remaining -= h;
    }
    xi
}
