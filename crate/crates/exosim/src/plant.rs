//! Continuous-time model of the hydraulic servo system driving one ankle
//! joint: valve, cylinder, gas accumulator, shank pendulum, linkage geometry,
//! friction, and input saturation.
//!
//! Everything here is a pure function of value types; a simulation owns its
//! [`PlantState`] exclusively.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// sgn with the sliding-surface convention sgn(0) = 0.
#[inline]
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Physical constants of the actuated joint.
///
/// Units are SI throughout. `s1_*`/`s2_*` are the coordinates of the two
/// cylinder mount points in the joint frame; `r_d1`/`r_d2` are the sides of
/// the moment-arm triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// Shank mass (kg).
    pub mass: f64,
    /// Shank inertia about the joint (kg m^2).
    pub inertia: f64,
    /// Distance from joint to shank center of mass (m).
    pub com_distance: f64,
    /// Gravitational acceleration (m/s^2).
    pub gravity: f64,
    /// Coulomb friction magnitude (N).
    pub coulomb: f64,
    /// Viscous friction coefficient (N s/m).
    pub viscous: f64,
    /// Interaction-torque stiffness (N m/rad).
    pub k_p: f64,
    /// Interaction-torque damping (N m s/rad).
    pub k_d: f64,
    /// Piston area, chamber A (m^2). Must exceed `area_2`.
    pub area_1: f64,
    /// Piston area, chamber B (m^2).
    pub area_2: f64,
    /// Effective oil bulk modulus (Pa).
    pub bulk_modulus: f64,
    /// Nominal chamber volume (m^3).
    pub chamber_volume: f64,
    /// Valve flow gain.
    pub flow_gain: f64,
    /// Valve flow-pressure coefficient.
    pub flow_pressure: f64,
    /// Internal leakage coefficient.
    pub leak_internal: f64,
    /// External leakage coefficient.
    pub leak_external: f64,
    /// Valve mechanical time constant (s).
    pub valve_tau: f64,
    /// Valve current-to-spool gain (m/A).
    pub valve_gain: f64,
    /// Cylinder length at rest (m).
    pub cyl_length_0: f64,
    /// Piston position at rest (m).
    pub piston_pos_0: f64,
    /// Mount point s1, x coordinate (m).
    pub s1_x: f64,
    /// Mount point s1, y coordinate (m).
    pub s1_y: f64,
    /// Mount point s2, x coordinate (m).
    pub s2_x: f64,
    /// Mount point s2, y coordinate (m).
    pub s2_y: f64,
    /// Moment-arm triangle side adjacent to the joint (m).
    pub r_d1: f64,
    /// Moment-arm triangle side opposite the joint (m).
    pub r_d2: f64,
    /// Lower servo current limit (A).
    pub u_min: f64,
    /// Upper servo current limit (A).
    pub u_max: f64,
}

impl PlantParams {
    /// Distance from the joint origin to mount point s1.
    pub fn r_s1(&self) -> f64 {
        self.s1_x.hypot(self.s1_y)
    }

    /// Distance from the joint origin to mount point s2.
    pub fn r_s2(&self) -> f64 {
        self.s2_x.hypot(self.s2_y)
    }

    /// Mount angle of s1: atan(a1 / -b1).
    pub fn theta_1(&self) -> f64 {
        (self.s1_x / -self.s1_y).atan()
    }

    /// Mount angle of s2: atan(a2 / b2).
    pub fn theta_2(&self) -> f64 {
        (self.s2_x / self.s2_y).atan()
    }

    /// Combined leakage term 2*K_c + 2*C_in + C_ex.
    pub fn leak_total(&self) -> f64 {
        2.0 * self.flow_pressure + 2.0 * self.leak_internal + self.leak_external
    }
}

/// Gas accumulator parameters and mode thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccumulatorParams {
    /// Polytropic exponent (> 1).
    pub adiabatic_exponent: f64,
    /// Gas volume at the high-pressure threshold (m^3).
    pub gas_volume_high: f64,
    /// Constant inlet/outlet flow through the throttle valve (m^3/s).
    pub flow: f64,
    /// High pressure threshold = pump outlet pressure (Pa).
    pub p_high: f64,
    /// Low pressure threshold (Pa).
    pub p_low: f64,
    /// Time spent recharging in pump mode before discharge restarts (s).
    pub recharge_time: f64,
}

impl AccumulatorParams {
    /// Gas volume when the pressure has dropped to `p_low`.
    pub fn gas_volume_low(&self) -> f64 {
        self.gas_volume_high * (self.p_high / self.p_low).powf(1.0 / self.adiabatic_exponent)
    }

    /// Duration of one full discharge from `p_high` to `p_low`.
    pub fn discharge_duration(&self) -> f64 {
        (self.gas_volume_low() - self.gas_volume_high) / self.flow
    }

    /// Supply pressure and its time derivative.
    ///
    /// Pump mode holds (p_high, 0); discharge mode follows the polytropic
    /// expansion from `p_high` with constant outflow, `dt_mode2` seconds
    /// after discharge began.
    pub fn pressure(&self, mode: AccumulatorMode, dt_mode2: f64) -> (f64, f64) {
        match mode {
            AccumulatorMode::Mode1 => (self.p_high, 0.0),
            AccumulatorMode::Mode2 => {
                let vol = self.gas_volume_high + self.flow * dt_mode2;
                let p = self.p_high * (self.gas_volume_high / vol).powf(self.adiabatic_exponent);
                let p_dot = -p * self.adiabatic_exponent * self.flow / vol;
                (p, p_dot)
            }
        }
    }
}

/// Accumulator working mode: pump on (charging) or accumulator discharging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccumulatorMode {
    Mode1,
    Mode2,
}

impl AccumulatorMode {
    pub fn as_index(self) -> u8 {
        match self {
            AccumulatorMode::Mode1 => 1,
            AccumulatorMode::Mode2 => 2,
        }
    }
}

/// Continuous plant state plus the discrete accumulator mode.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    /// Joint angle (rad).
    pub phi: f64,
    /// Joint angular velocity (rad/s).
    pub phi_dot: f64,
    /// Cylinder load force (N).
    pub f_l: f64,
    /// Valve spool position (m).
    pub x_v: f64,
    /// Accumulator mode.
    pub mode: AccumulatorMode,
    /// Time since discharge began; 0 while in Mode 1.
    pub dt_mode2: f64,
    /// Time spent recharging in Mode 1.
    pub recharge_elapsed: f64,
}

impl PlantState {
    /// Rest state: all-zero continuous variables, pump mode, fully charged.
    pub fn at_rest(acc: &AccumulatorParams) -> Self {
        Self {
            phi: 0.0,
            phi_dot: 0.0,
            f_l: 0.0,
            x_v: 0.0,
            mode: AccumulatorMode::Mode1,
            dt_mode2: 0.0,
            recharge_elapsed: acc.recharge_time,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.phi.is_finite() && self.phi_dot.is_finite() && self.f_l.is_finite() && self.x_v.is_finite()
    }
}

/// The five state-space coefficients of the force dynamics, evaluated at one
/// piston position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HydraulicCoeffs {
    pub n1: f64,
    pub n2: f64,
    pub n3: f64,
    pub n4: f64,
    pub n5: f64,
}

/// Cylinder length between the mount points at joint angle `phi` (law of cosines).
pub fn cylinder_length(phi: f64, params: &PlantParams) -> Result<f64, ModelError> {
    let r1 = params.r_s1();
    let r2 = params.r_s2();
    let angle = phi - params.theta_1() - params.theta_2();
    let radicand = -2.0 * r1 * r2 * angle.cos() + r1 * r1 + r2 * r2;
    if radicand <= 0.0 {
        return Err(ModelError::DegenerateGeometry { phi, radicand });
    }
    Ok(radicand.sqrt())
}

/// Analytic dl/dphi, used to turn joint velocity into piston velocity.
pub fn cylinder_length_derivative(phi: f64, params: &PlantParams) -> Result<f64, ModelError> {
    let l = cylinder_length(phi, params)?;
    let angle = phi - params.theta_1() - params.theta_2();
    Ok(params.r_s1() * params.r_s2() * angle.sin() / l)
}

/// Piston position relative to its rest position.
pub fn piston_position(phi: f64, params: &PlantParams) -> Result<f64, ModelError> {
    Ok(cylinder_length(phi, params)? - params.cyl_length_0 - params.piston_pos_0)
}

/// Moment arm for a given cylinder length.
pub fn moment_arm_from_length(l: f64, params: &PlantParams) -> Result<f64, ModelError> {
    let cos_angle = (params.r_d2 * params.r_d2 - l * l - params.r_d1 * params.r_d1)
        / (-2.0 * l * params.r_d1);
    if !(-1.0..=1.0).contains(&cos_angle) {
        return Err(ModelError::DegenerateTriangle { cos_angle });
    }
    Ok(params.r_d1 * cos_angle.acos().sin())
}

/// Moment arm converting cylinder force to joint torque at angle `phi`.
pub fn moment_arm(phi: f64, params: &PlantParams) -> Result<f64, ModelError> {
    moment_arm_from_length(cylinder_length(phi, params)?, params)
}

/// Coulomb + viscous piston friction, with sgn(0) = 0.
#[inline]
pub fn friction_force(phi_dot: f64, coulomb: f64, viscous: f64) -> f64 {
    -coulomb * sgn(phi_dot) - viscous * phi_dot
}

/// Spring-damper interaction torque between machine and human.
#[inline]
pub fn interaction_torque(e1: f64, e1_dot: f64, k_p: f64, k_d: f64) -> f64 {
    k_p * e1 + k_d * e1_dot
}

/// Clamp a commanded current to the servo limits.
///
/// Returns the applied current and the residual `delta` = applied - commanded
/// (zero when the command is feasible).
#[inline]
pub fn saturate(u_raw: f64, params: &PlantParams) -> (f64, f64) {
    if u_raw > params.u_max {
        (params.u_max, params.u_max - u_raw)
    } else if u_raw < params.u_min {
        (params.u_min, params.u_min - u_raw)
    } else {
        (u_raw, 0.0)
    }
}

/// State-space coefficients n1..n5 at piston position `x_c`.
pub fn hydraulic_coeffs(x_c: f64, params: &PlantParams) -> Result<HydraulicCoeffs, ModelError> {
    let denom = 2.0 * params.chamber_volume + (params.area_1 - params.area_2) * x_c;
    if denom <= 0.0 {
        return Err(ModelError::VolumeExhausted { x_c });
    }
    let beta = params.bulk_modulus;
    let area_sum = params.area_1 + params.area_2;
    let area_diff = params.area_2 - params.area_1;
    let leak = params.leak_total();
    Ok(HydraulicCoeffs {
        n1: 2.0 * beta * area_sum * params.flow_gain / denom,
        n2: beta * area_sum * area_sum / denom,
        n3: 2.0 * beta * leak / denom,
        n4: beta * leak * area_diff / denom,
        n5: area_diff / 2.0 - area_sum * area_sum / (2.0 * denom),
    })
}

/// Reference sample handed to the plant so the human interaction torque can
/// be evaluated against the active trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSample {
    pub phi_d: f64,
    pub phi_d_dot: f64,
    pub phi_d_ddot: f64,
}

/// Time derivative of the continuous plant variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantDeriv {
    pub phi_dot: f64,
    pub phi_ddot: f64,
    pub f_l_dot: f64,
    pub x_v_dot: f64,
}

/// Right-hand side of the plant ODE for a given applied current.
///
/// The accumulator mode and discharge clock inside `state` are treated as
/// frozen; the caller advances them between integration steps.
pub fn plant_derivative(
    state: &PlantState,
    u_applied: f64,
    reference: &ReferenceSample,
    params: &PlantParams,
    acc: &AccumulatorParams,
) -> Result<PlantDeriv, ModelError> {
    let l = cylinder_length(state.phi, params)?;
    let dl_dphi = params.r_s1() * params.r_s2()
        * (state.phi - params.theta_1() - params.theta_2()).sin()
        / l;
    let x_c = l - params.cyl_length_0 - params.piston_pos_0;
    let arm = moment_arm_from_length(l, params)?;
    let coeffs = hydraulic_coeffs(x_c, params)?;

    let friction = friction_force(state.phi_dot, params.coulomb, params.viscous);
    // tau_hm is the torque the human feels; its reaction acts on the machine
    // and restores it toward the human trajectory.
    let tau_hm = interaction_torque(
        state.phi - reference.phi_d,
        state.phi_dot - reference.phi_d_dot,
        params.k_p,
        params.k_d,
    );
    let phi_ddot = (arm * (state.f_l + friction)
        - params.mass * params.gravity * params.com_distance * state.phi.sin()
        - tau_hm)
        / params.inertia;

    let (p_s, p_s_dot) = acc.pressure(state.mode, state.dt_mode2);
    let x_c_dot = dl_dphi * state.phi_dot;
    let f_l_dot = coeffs.n1 * state.x_v - coeffs.n2 * x_c_dot - coeffs.n3 * state.f_l
        + coeffs.n4 * p_s
        + coeffs.n5 * p_s_dot;
    let x_v_dot = (params.valve_gain * u_applied - state.x_v) / params.valve_tau;

    Ok(PlantDeriv {
        phi_dot: state.phi_dot,
        phi_ddot,
        f_l_dot,
        x_v_dot,
    })
}

/// Threshold rule for the accumulator mode. One transition per call.
///
/// Mode 2 ends when the discharge pressure reaches `p_low`; Mode 1 ends once
/// the recharge time has elapsed (the pump tops the accumulator back up to
/// `p_high`, modeled as an instantaneous recharge after a configurable dwell).
pub fn update_mode(state: &PlantState, acc: &AccumulatorParams) -> PlantState {
    let mut next = state.clone();
    match state.mode {
        AccumulatorMode::Mode2 => {
            let (p_s, _) = acc.pressure(AccumulatorMode::Mode2, state.dt_mode2);
            if p_s <= acc.p_low {
                next.mode = AccumulatorMode::Mode1;
                next.dt_mode2 = 0.0;
                next.recharge_elapsed = 0.0;
            }
        }
        AccumulatorMode::Mode1 => {
            if state.recharge_elapsed >= acc.recharge_time {
                next.mode = AccumulatorMode::Mode2;
                next.dt_mode2 = 0.0;
            }
        }
    }
    next
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn friction_is_odd(v in -50.0f64..50.0, fc in 0.0f64..100.0, b in 0.0f64..10000.0) {
            prop_assert_eq!(friction_force(-v, fc, b), -friction_force(v, fc, b));
        }

        #[test]
        fn saturate_idempotent_and_consistent(u in -10.0f64..10.0) {
            let p = tests::test_params();
            let (applied, delta) = saturate(u, &p);
            prop_assert!(applied >= p.u_min && applied <= p.u_max);
            prop_assert_eq!(saturate(applied, &p), (applied, 0.0));
            prop_assert!((applied - (u + delta)).abs() <= 1e-12 * applied.abs().max(1.0));
        }

        #[test]
        fn length_derivative_tracks_finite_differences(phi in -0.19f64..0.19) {
            let p = tests::test_params();
            let h = 1e-6;
            let fd = (cylinder_length(phi + h, &p).unwrap()
                - cylinder_length(phi - h, &p).unwrap()) / (2.0 * h);
            let analytic = cylinder_length_derivative(phi, &p).unwrap();
            prop_assert!((analytic - fd).abs() <= 1e-6 * fd.abs().max(1e-3));
        }

        #[test]
        fn mode2_pressure_monotone(a in 0.0f64..20.0, b in 0.0f64..20.0) {
            let acc = AccumulatorParams {
                adiabatic_exponent: 1.4,
                gas_volume_high: 1.0e-3,
                flow: 2.0e-5,
                p_high: 5.0e6,
                p_low: 4.0e6,
                recharge_time: 0.0,
            };
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let (p_lo, _) = acc.pressure(AccumulatorMode::Mode2, lo);
            let (p_hi, _) = acc.pressure(AccumulatorMode::Mode2, hi);
            prop_assert!(p_hi <= p_lo);
        }
    }
}
