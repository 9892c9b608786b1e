//! Shared helpers for the integration suites: bundled-scenario loading and
//! an exact-force closed loop for the position-layer energy checks.
#![allow(dead_code)] // each test target uses a different subset

use std::path::PathBuf;

use exosim::highlevel::{
    adapt_friction, adapt_mass_inertia, compute_errors, desired_force, HlEstimates, HlGains,
    TrackingErrors,
};
use exosim::plant::{friction_force, interaction_torque, moment_arm, PlantParams};
use exosim::scenario::{load_scenario, Scenario};
use exosim::sim::{reference, ReferenceConfig, SimConfig};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"))
}

pub fn load_bundled(name: &str) -> Scenario {
    load_scenario(&scenario_path(name)).unwrap_or_else(|e| panic!("scenario {name}: {e}"))
}

/// Print one verdict line per criterion and fail the test on a violation.
pub fn criterion(number: u32, name: &str, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {number:02} {name}: {verdict} - {detail}");
    assert!(ok, "acceptance criterion {number} ({name}) failed: {detail}");
}

/// Position layer with the force request realized exactly (no hydraulic
/// subsystem): the pendulum driven by the desired force itself. Used to
/// check the discrete energy decrease of the control law in isolation.
pub struct ExactForceLoop {
    pub plant: PlantParams,
    pub gains: HlGains,
    pub reference: ReferenceConfig,
    pub dt: f64,
    pub adapt: bool,
    pub estimates: HlEstimates,
    pub phi: f64,
    pub phi_dot: f64,
    pub t: f64,
}

impl ExactForceLoop {
    pub fn new(cfg: &SimConfig, estimates: HlEstimates, adapt: bool) -> Self {
        Self {
            plant: cfg.plant.clone(),
            gains: cfg.hl_gains.clone(),
            reference: cfg.reference,
            dt: cfg.dt,
            adapt,
            estimates,
            phi: 0.0,
            phi_dot: 0.0,
            t: 0.0,
        }
    }

    pub fn errors(&self) -> TrackingErrors {
        let r = reference(self.t, &self.reference);
        compute_errors(self.phi, self.phi_dot, &r, self.gains.k1)
    }

    /// Weighted tracking-error energy (uses the true inertia).
    pub fn v_h1(&self) -> f64 {
        let e = self.errors();
        0.5 * self.gains.rho1 * e.e1 * e.e1
            + 0.5 * self.gains.rho2 * self.plant.inertia * e.e2 * e.e2
    }

    /// Energy augmented with the estimate errors (true values known here).
    pub fn v_h3(&self) -> f64 {
        let p = &self.plant;
        let est = &self.estimates;
        let g = &self.gains;
        self.v_h1()
            + 0.5 * g.q_j * (p.inertia - est.inertia).powi(2)
            + 0.5 * g.q_m * (p.mass - est.mass).powi(2)
            + 0.5 * g.q_c * (p.coulomb - est.coulomb).powi(2)
            + 0.5 * g.q_b * (p.viscous - est.viscous).powi(2)
    }

    /// Angular acceleration under the exactly-realized desired force, with
    /// the frozen estimate set, at an arbitrary stage point.
    fn accel(&self, phi: f64, phi_dot: f64, t: f64) -> f64 {
        let p = &self.plant;
        let r = reference(t, &self.reference);
        let err = compute_errors(phi, phi_dot, &r, self.gains.k1);
        let tau_hm = interaction_torque(err.e1, err.e1_dot, p.k_p, p.k_d);
        let arm = moment_arm(phi, p).expect("geometry valid");
        let f_l = desired_force(
            &err,
            phi,
            phi_dot,
            &self.estimates,
            -tau_hm,
            &self.gains,
            arm,
            p.gravity,
            p.com_distance,
        )
        .expect("nonzero arm");
        let friction = friction_force(phi_dot, p.coulomb, p.viscous);
        (arm * (f_l + friction) - p.mass * p.gravity * p.com_distance * phi.sin() - tau_hm)
            / p.inertia
    }

    /// One controller period: estimates frozen over the step, plant advanced
    /// by the classical 4-stage method, adaptation applied at the end.
    pub fn step(&mut self) {
        let dt = self.dt;
        let p = self.plant.clone();
        let err = self.errors();
        let staged = if self.adapt {
            let arm = moment_arm(self.phi, &p).expect("geometry valid");
            let (d_j, d_m) =
                adapt_mass_inertia(&err, self.phi, &self.gains, p.gravity, p.com_distance, dt);
            let (d_fc, d_b) = adapt_friction(&err, self.phi_dot, &self.gains, arm, dt);
            (d_j, d_m, d_fc, d_b)
        } else {
            (0.0, 0.0, 0.0, 0.0)
        };

        let f = |phi: f64, phi_dot: f64, t: f64| (phi_dot, self.accel(phi, phi_dot, t));
        let (phi0, pd0, t0) = (self.phi, self.phi_dot, self.t);
        let (k1a, k1b) = f(phi0, pd0, t0);
        let (k2a, k2b) = f(phi0 + 0.5 * dt * k1a, pd0 + 0.5 * dt * k1b, t0 + 0.5 * dt);
        let (k3a, k3b) = f(phi0 + 0.5 * dt * k2a, pd0 + 0.5 * dt * k2b, t0 + 0.5 * dt);
        let (k4a, k4b) = f(phi0 + dt * k3a, pd0 + dt * k3b, t0 + dt);
        self.phi = phi0 + dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
        self.phi_dot = pd0 + dt / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
        self.t = t0 + dt;

        self.estimates.inertia += staged.0;
        self.estimates.mass += staged.1;
        self.estimates.coulomb += staged.2;
        self.estimates.viscous += staged.3;
    }
}
