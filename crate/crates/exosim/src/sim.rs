//! Fixed-step closed-loop simulation: plant + cascade controller (or PD
//! baseline), reference generation, trace logging, and summary metrics.
//!
//! Step ordering is fixed: (1) reference sample, (2) position-layer errors
//! and desired force with the current estimates, (3) adaptation increments,
//! (4) force layer (regressor, control, saturation, auxiliary state, weight
//! update), (5) plant integration over dt with zero-order-hold current,
//! (6) accumulator mode update, (7) trace append. The plant integrates with
//! the classical 4-stage Runge-Kutta method; controller-side states advance
//! by explicit Euler. The saturation residual is resolved against the same
//! step's command (the residual term collapses into the clamp) and drives
//! only the auxiliary state.

use std::io::Write as IoWrite;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, SimError};
use crate::funcapprox::ApproxNet;
use crate::highlevel::{
    adapt_friction, adapt_mass_inertia, compute_errors, desired_force, estimated_friction,
    HlEstimates, HlGains,
};
use crate::lowlevel::{
    control, f4_reference, force_error, friction_derivative_approx, integrate_aux, EstimateRates,
    LlGains, LlState,
};
use crate::plant::{
    cylinder_length, cylinder_length_derivative, friction_force, hydraulic_coeffs,
    interaction_torque, moment_arm_from_length, plant_derivative, saturate, update_mode,
    AccumulatorMode, AccumulatorParams, PlantParams, PlantState, ReferenceSample,
};
use crate::scenario::NetParams;

/// Which controller closes the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    /// Two-layer adaptive regulator with the saturation compensator.
    Cascade,
    /// Same cascade with the auxiliary state pinned to zero.
    CascadeNoXi,
    /// PD current controller acting directly on the angle error.
    Pd,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Cascade => "cascade",
            ControllerKind::CascadeNoXi => "cascade_no_xi",
            ControllerKind::Pd => "pd",
        }
    }
}

/// Sinusoidal joint-angle reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceConfig {
    /// Amplitude (rad).
    pub amplitude: f64,
    /// Frequency (Hz).
    pub frequency: f64,
}

/// Reference angle and its first two analytic derivatives at time `t`.
pub fn reference(t: f64, cfg: &ReferenceConfig) -> ReferenceSample {
    let omega = 2.0 * std::f64::consts::PI * cfg.frequency;
    let (s, c) = (omega * t).sin_cos();
    ReferenceSample {
        phi_d: cfg.amplitude * s,
        phi_d_dot: cfg.amplitude * omega * c,
        phi_d_ddot: -cfg.amplitude * omega * omega * s,
    }
}

/// PD baseline gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
}

/// PD current command from the angle error.
#[inline]
pub fn pd_control(e1: f64, e1_dot: f64, gains: &PdGains) -> f64 {
    gains.kp * e1 + gains.kd * e1_dot
}

/// Full configuration of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Controller period and integration step (s).
    pub dt: f64,
    /// Run length (s).
    pub duration: f64,
    /// Transient excluded from the metrics window (s).
    pub transient_skip: f64,
    pub controller: ControllerKind,
    pub reference: ReferenceConfig,
    pub plant: PlantParams,
    pub accumulator: AccumulatorParams,
    pub hl_gains: HlGains,
    pub initial_estimates: HlEstimates,
    pub ll_gains: LlGains,
    pub net: NetParams,
    pub pd: PdGains,
    /// Log the full weight vector each step (otherwise only its norm).
    #[serde(default)]
    pub log_weights: bool,
}

impl SimConfig {
    pub fn steps(&self) -> usize {
        if self.duration <= 0.0 {
            return 0;
        }
        ((self.duration / self.dt) - 1e-9).ceil().max(0.0) as usize
    }
}

/// One logged step. Values are sampled at the step start, before the plant
/// integrates over the step.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub phi: f64,
    pub phi_d: f64,
    pub e1: f64,
    pub e1_dot: f64,
    pub tau_hm: f64,
    pub f_l: f64,
    pub f_l_d: f64,
    pub e3: f64,
    pub u_raw: f64,
    pub u_applied: f64,
    pub delta: f64,
    pub xi: f64,
    pub j_hat: f64,
    pub m_hat: f64,
    pub f_c_hat: f64,
    pub b_hat: f64,
    pub w_norm: f64,
    pub f4_ref: f64,
    pub f4_est: f64,
    pub p_s: f64,
    pub mode: u8,
}

impl TraceRecord {
    pub const CSV_HEADER: &'static str = "t,phi,phi_d,e1,e1_dot,tau_hm,F_L,F_L_d,e3,u_raw,\
u_applied,delta,xi,J_hat,m_hat,F_C_hat,b_hat,W_norm,f4_ref,f4_est,P_s,mode";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.phi,
            self.phi_d,
            self.e1,
            self.e1_dot,
            self.tau_hm,
            self.f_l,
            self.f_l_d,
            self.e3,
            self.u_raw,
            self.u_applied,
            self.delta,
            self.xi,
            self.j_hat,
            self.m_hat,
            self.f_c_hat,
            self.b_hat,
            self.w_norm,
            self.f4_ref,
            self.f4_est,
            self.p_s,
            self.mode
        )
    }

    /// Column value by header name, for plot selection.
    pub fn column(&self, name: &str) -> Option<f64> {
        Some(match name {
            "t" => self.t,
            "phi" => self.phi,
            "phi_d" => self.phi_d,
            "e1" => self.e1,
            "e1_dot" => self.e1_dot,
            "tau_hm" => self.tau_hm,
            "F_L" => self.f_l,
            "F_L_d" => self.f_l_d,
            "e3" => self.e3,
            "u_raw" => self.u_raw,
            "u_applied" => self.u_applied,
            "delta" => self.delta,
            "xi" => self.xi,
            "J_hat" => self.j_hat,
            "m_hat" => self.m_hat,
            "F_C_hat" => self.f_c_hat,
            "b_hat" => self.b_hat,
            "W_norm" => self.w_norm,
            "f4_ref" => self.f4_ref,
            "f4_est" => self.f4_est,
            "P_s" => self.p_s,
            "mode" => self.mode as f64,
            _ => return None,
        })
    }

    pub fn column_names() -> Vec<&'static str> {
        Self::CSV_HEADER.split(',').collect()
    }

    fn all_finite(&self) -> Option<&'static str> {
        let checks: [(&'static str, f64); 21] = [
            ("phi", self.phi),
            ("phi_d", self.phi_d),
            ("e1", self.e1),
            ("e1_dot", self.e1_dot),
            ("tau_hm", self.tau_hm),
            ("F_L", self.f_l),
            ("F_L_d", self.f_l_d),
            ("e3", self.e3),
            ("u_raw", self.u_raw),
            ("u_applied", self.u_applied),
            ("delta", self.delta),
            ("xi", self.xi),
            ("J_hat", self.j_hat),
            ("m_hat", self.m_hat),
            ("F_C_hat", self.f_c_hat),
            ("b_hat", self.b_hat),
            ("W_norm", self.w_norm),
            ("f4_ref", self.f4_ref),
            ("f4_est", self.f4_est),
            ("P_s", self.p_s),
            ("t", self.t),
        ];
        checks.iter().find(|(_, v)| !v.is_finite()).map(|(n, _)| *n)
    }
}

/// Post-transient summary of one run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub rms_e1: f64,
    pub max_abs_e1: f64,
    pub rms_tau_hm: f64,
    pub rms_e3: f64,
    /// Integral of the applied current squared over the window (A^2 s).
    pub control_effort: f64,
    /// Fraction of window steps with a nonzero saturation residual.
    pub saturation_fraction: f64,
    pub window_start: f64,
    pub window_end: f64,
}

/// Metrics over the post-transient window `t >= skip`.
pub fn compute_metrics(trace: &[TraceRecord], dt: f64, skip: f64) -> Metrics {
    let window: Vec<&TraceRecord> = trace.iter().filter(|r| r.t >= skip).collect();
    if window.is_empty() {
        return Metrics::default();
    }
    let n = window.len() as f64;
    let mut m = Metrics {
        window_start: window.first().unwrap().t,
        window_end: window.last().unwrap().t,
        ..Metrics::default()
    };
    for r in &window {
        m.rms_e1 += r.e1 * r.e1;
        m.max_abs_e1 = m.max_abs_e1.max(r.e1.abs());
        m.rms_tau_hm += r.tau_hm * r.tau_hm;
        m.rms_e3 += r.e3 * r.e3;
        m.control_effort += r.u_applied * r.u_applied * dt;
        if r.delta != 0.0 {
            m.saturation_fraction += 1.0;
        }
    }
    m.rms_e1 = (m.rms_e1 / n).sqrt();
    m.rms_tau_hm = (m.rms_tau_hm / n).sqrt();
    m.rms_e3 = (m.rms_e3 / n).sqrt();
    m.saturation_fraction /= n;
    m
}

impl Metrics {
    /// key = value lines, one metric per line.
    pub fn summary_text(&self) -> String {
        format!(
            "rms_e1 = {}\nmax_abs_e1 = {}\nrms_tau_hm = {}\nrms_e3 = {}\ncontrol_effort = {}\n\
saturation_fraction = {}\nwindow_start = {}\nwindow_end = {}\n",
            self.rms_e1,
            self.max_abs_e1,
            self.rms_tau_hm,
            self.rms_e3,
            self.control_effort,
            self.saturation_fraction,
            self.window_start,
            self.window_end
        )
    }
}

/// Completed run: full trace plus summary.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trace: Vec<TraceRecord>,
    pub metrics: Metrics,
    /// Per-step weight vectors, only populated when `log_weights` is set.
    pub weights_log: Vec<(f64, Vec<f64>)>,
}

/// Aborted run: the error plus everything logged up to the failure.
#[derive(Debug, Clone)]
pub struct SimAbort {
    pub error: SimError,
    pub trace: Vec<TraceRecord>,
    pub weights_log: Vec<(f64, Vec<f64>)>,
}

impl std::fmt::Display for SimAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "simulation aborted after {} steps: {}", self.trace.len(), self.error)
    }
}

/// One closed-loop simulation in progress.
pub struct Sim {
    cfg: SimConfig,
    state: PlantState,
    estimates: HlEstimates,
    net: ApproxNet,
    ll_state: LlState,
    step_idx: usize,
    trace: Vec<TraceRecord>,
    weights_log: Vec<(f64, Vec<f64>)>,
}

impl Sim {
    pub fn new(cfg: SimConfig) -> Self {
        let net = cfg.net.build(cfg.ll_gains.epsilon0, cfg.accumulator.p_low);
        let state = PlantState::at_rest(&cfg.accumulator);
        let estimates = cfg.initial_estimates;
        Self {
            cfg,
            state,
            estimates,
            net,
            ll_state: LlState::new(),
            step_idx: 0,
            trace: Vec::new(),
            weights_log: Vec::new(),
        }
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    pub fn estimates(&self) -> &HlEstimates {
        &self.estimates
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    /// Advance one controller period.
    pub fn step(&mut self) -> Result<(), SimError> {
        let cfg = &self.cfg;
        let dt = cfg.dt;
        let t = self.step_idx as f64 * dt;
        let plant = &cfg.plant;
        let acc = &cfg.accumulator;

        // (1) reference, (2) position-layer errors.
        let r = reference(t, &cfg.reference);
        let s = self.state.clone();
        let err = compute_errors(s.phi, s.phi_dot, &r, cfg.hl_gains.k1);
        // Torque felt by the human; the machine experiences its reaction.
        let tau_hm = interaction_torque(err.e1, err.e1_dot, plant.k_p, plant.k_d);
        let tau_on_machine = -tau_hm;

        let l = cylinder_length(s.phi, plant)?;
        let arm = moment_arm_from_length(l, plant)?;
        let x_c = l - plant.cyl_length_0 - plant.piston_pos_0;
        let coeffs = hydraulic_coeffs(x_c, plant)?;
        let x_c_dot = cylinder_length_derivative(s.phi, plant)? * s.phi_dot;
        let (p_s, p_s_dot) = acc.pressure(s.mode, s.dt_mode2);

        let cascade = matches!(
            cfg.controller,
            ControllerKind::Cascade | ControllerKind::CascadeNoXi
        );
        // Snapshot before the weight update: the log reflects the weights the
        // step's control command actually used.
        let weights_snapshot = cfg.log_weights.then(|| self.net.w_hat.clone());

        let mut rec = TraceRecord {
            t,
            phi: s.phi,
            phi_d: r.phi_d,
            e1: err.e1,
            e1_dot: err.e1_dot,
            tau_hm,
            f_l: s.f_l,
            f_l_d: 0.0,
            e3: 0.0,
            u_raw: 0.0,
            u_applied: 0.0,
            delta: 0.0,
            xi: self.ll_state.xi,
            j_hat: self.estimates.inertia,
            m_hat: self.estimates.mass,
            f_c_hat: self.estimates.coulomb,
            b_hat: self.estimates.viscous,
            w_norm: self.net.w_norm(),
            f4_ref: 0.0,
            f4_est: 0.0,
            p_s,
            mode: s.mode.as_index(),
        };

        let mut estimate_increments = (0.0, 0.0, 0.0, 0.0);
        let u_applied;

        if cascade {
            let gains = &cfg.hl_gains;
            let ll = &cfg.ll_gains;
            let f_f_hat = estimated_friction(s.phi_dot, &self.estimates);
            let f_l_d = desired_force(
                &err,
                s.phi,
                s.phi_dot,
                &self.estimates,
                tau_on_machine,
                gains,
                arm,
                plant.gravity,
                plant.com_distance,
            )?;

            // (3) adaptation increments, applied at the end of the step.
            let (d_j, d_m) =
                adapt_mass_inertia(&err, s.phi, gains, plant.gravity, plant.com_distance, dt);
            let (d_fc, d_b) = adapt_friction(&err, s.phi_dot, gains, arm, dt);
            estimate_increments = (d_j, d_m, d_fc, d_b);

            // (4) force layer.
            let e3 = force_error(s.f_l, f_l_d);
            let f_tilde = f_l_d + f_f_hat;
            let f_tilde_dot = match self.ll_state.prev_f_tilde {
                Some(prev) => (f_tilde - prev) / dt,
                None => 0.0,
            };
            let z = [
                s.f_l,
                s.phi_dot,
                f_tilde_dot,
                (p_s - cfg.net.ps_norm_center) / cfg.net.ps_norm_halfwidth,
            ];
            let chi = self.net.regressor(&z);
            let f4_est = self.net.estimate_with(&chi)?;
            // The residual is defined by the same-instant saturation of the
            // final command, so the command reduces to the clamp of the
            // delta-free law; the residual reported by `saturate` below is
            // what drives the auxiliary state.
            let u_raw = control(
                e3,
                &chi,
                &self.net,
                0.0,
                self.ll_state.xi,
                ll,
                plant.valve_gain,
            )?;
            let (u_app, delta) = saturate(u_raw, plant);
            u_applied = u_app;

            let xi_next = if cfg.controller == ControllerKind::Cascade {
                integrate_aux(self.ll_state.xi, delta, e3, ll, plant.valve_gain, ll.rho3, dt)
            } else {
                0.0
            };
            self.net.update_weights_substepped(e3, &chi, ll.rho3, dt)?;

            // Diagnostics: the reference value of the lumped nonlinearity.
            let friction = friction_force(s.phi_dot, plant.coulomb, plant.viscous);
            let phi_ddot = (arm * (s.f_l + friction)
                - plant.mass * plant.gravity * plant.com_distance * s.phi.sin()
                + tau_on_machine)
                / plant.inertia;
            let rates = EstimateRates {
                coulomb: d_fc / dt,
                viscous: d_b / dt,
            };
            let f_f_hat_dot =
                friction_derivative_approx(s.phi_dot, phi_ddot, &self.estimates, &rates, ll.epsilon0);
            let f4_ref =
                f4_reference(&coeffs, x_c_dot, s.f_l, f_tilde_dot, f_f_hat_dot, p_s, p_s_dot)?;

            rec.f_l_d = f_l_d;
            rec.e3 = e3;
            rec.u_raw = u_raw;
            rec.u_applied = u_app;
            rec.delta = delta;
            rec.f4_ref = f4_ref;
            rec.f4_est = f4_est;

            self.ll_state.xi = xi_next;
            self.ll_state.prev_f_tilde = Some(f_tilde);
        } else {
            let u_raw = pd_control(err.e1, err.e1_dot, &cfg.pd);
            let (u_app, delta) = saturate(u_raw, plant);
            u_applied = u_app;
            rec.u_raw = u_raw;
            rec.u_applied = u_app;
            rec.delta = delta;
        }

        if let Some(name) = rec.all_finite() {
            return Err(SimError::NonFinite { what: name, t });
        }

        // (5) plant integration with zero-order-hold current.
        let mut next = integrate_plant_rk4(&s, u_applied, t, dt, &cfg.reference, plant, acc)?;
        if !next.is_finite() {
            return Err(SimError::NonFinite { what: "plant state", t });
        }

        // (6) accumulator clock and mode update.
        match next.mode {
            AccumulatorMode::Mode2 => next.dt_mode2 += dt,
            AccumulatorMode::Mode1 => next.recharge_elapsed += dt,
        }
        next = update_mode(&next, acc);

        // (7) trace append, then commit the staged adaptation.
        if let Some(w) = weights_snapshot {
            self.weights_log.push((t, w));
        }
        self.trace.push(rec);
        let (d_j, d_m, d_fc, d_b) = estimate_increments;
        self.estimates.inertia += d_j;
        self.estimates.mass += d_m;
        self.estimates.coulomb += d_fc;
        self.estimates.viscous += d_b;
        if let Some((what, value)) = self.estimates.diverged() {
            return Err(SimError::EstimateDiverged { what, value, t });
        }
        if !self.net.w_norm().is_finite() {
            return Err(SimError::NonFinite { what: "W_norm", t });
        }

        self.state = next;
        self.step_idx += 1;
        Ok(())
    }

    fn finish(self) -> SimOutput {
        let metrics = compute_metrics(&self.trace, self.cfg.dt, self.cfg.transient_skip);
        SimOutput {
            trace: self.trace,
            metrics,
            weights_log: self.weights_log,
        }
    }
}

/// Classical 4-stage Runge-Kutta step of the plant with the current held
/// over the step. The discharge clock advances with the stage time so the
/// supply pressure stays continuous inside the step.
pub fn integrate_plant_rk4(
    state: &PlantState,
    u_applied: f64,
    t: f64,
    dt: f64,
    ref_cfg: &ReferenceConfig,
    plant: &PlantParams,
    acc: &AccumulatorParams,
) -> Result<PlantState, ModelError> {
    let eval = |vals: [f64; 4], offset: f64| -> Result<[f64; 4], ModelError> {
        let mut stage = state.clone();
        stage.phi = vals[0];
        stage.phi_dot = vals[1];
        stage.f_l = vals[2];
        stage.x_v = vals[3];
        if stage.mode == AccumulatorMode::Mode2 {
            stage.dt_mode2 += offset;
        }
        let r = reference(t + offset, ref_cfg);
        let d = plant_derivative(&stage, u_applied, &r, plant, acc)?;
        Ok([d.phi_dot, d.phi_ddot, d.f_l_dot, d.x_v_dot])
    };

    let y0 = [state.phi, state.phi_dot, state.f_l, state.x_v];
    let add = |y: [f64; 4], k: [f64; 4], h: f64| {
        [y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2], y[3] + h * k[3]]
    };

    let k1 = eval(y0, 0.0)?;
    let k2 = eval(add(y0, k1, 0.5 * dt), 0.5 * dt)?;
    let k3 = eval(add(y0, k2, 0.5 * dt), 0.5 * dt)?;
    let k4 = eval(add(y0, k3, dt), dt)?;

    let mut next = state.clone();
    next.phi = y0[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
    next.phi_dot = y0[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
    next.f_l = y0[2] + dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]);
    next.x_v = y0[3] + dt / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]);
    Ok(next)
}

/// Run a full simulation. On a numeric failure the trace collected so far is
/// returned alongside the error.
pub fn run(cfg: SimConfig) -> Result<SimOutput, Box<SimAbort>> {
    let steps = cfg.steps();
    let mut sim = Sim::new(cfg);
    for _ in 0..steps {
        if let Err(error) = sim.step() {
            return Err(Box::new(SimAbort {
                error,
                trace: sim.trace,
                weights_log: sim.weights_log,
            }));
        }
    }
    Ok(sim.finish())
}

/// Write the trace as CSV (header row plus one row per step).
pub fn write_trace_csv<W: IoWrite>(trace: &[TraceRecord], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{}", TraceRecord::CSV_HEADER)?;
    for rec in trace {
        writeln!(out, "{}", rec.csv_row())?;
    }
    Ok(())
}

/// Write the per-step weight vectors as CSV.
pub fn write_weights_csv<W: IoWrite>(
    weights: &[(f64, Vec<f64>)],
    out: &mut W,
) -> std::io::Result<()> {
    let dim = weights.first().map_or(0, |(_, w)| w.len());
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((0..dim).map(|i| format!("w_{i}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (t, w) in weights {
        let mut row = t.to_string();
        for v in w {
            row.push(',');
            row.push_str(&v.to_string());
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}
