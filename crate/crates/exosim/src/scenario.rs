//! Scenario files: TOML serialization of [`SimConfig`], validation with
//! field paths, parameter-provenance listing, and sweep support.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ConfigIssue};
use crate::funcapprox::{ApproxNet, JumpConfig, RbfConfig};
use crate::plant::{cylinder_length, hydraulic_coeffs, moment_arm, piston_position};
use crate::sim::{SimConfig, TraceRecord};

/// Network shape and learning parameters, as configured in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    /// Grid points per axis for the radial-basis centers (first three input
    /// coordinates).
    pub grid_points: usize,
    pub grid_min: [f64; 3],
    pub grid_max: [f64; 3],
    /// Shared basis width.
    pub width: f64,
    /// Evaluate the raw quadratic form instead of the Gaussian.
    #[serde(default)]
    pub literal_quadratic: bool,
    /// Jump-basis orders per coordinate (the two shifted blocks emit
    /// 4 * orders entries each).
    pub jump_orders: usize,
    /// Uniform learning rate.
    pub gamma: f64,
    /// Uniform leakage.
    pub sigma: f64,
    /// Supply pressure is normalized as (P_s - center) / halfwidth before it
    /// enters the bases; raw pascals would saturate every basis function.
    pub ps_norm_center: f64,
    pub ps_norm_halfwidth: f64,
}

impl NetParams {
    /// Assemble the approximator. The jump-block shifts are pinned to the
    /// known discontinuity locations: +/- epsilon0 in the velocity coordinate
    /// and the low-pressure threshold in the pressure coordinate.
    pub fn build(&self, epsilon0: f64, p_low: f64) -> ApproxNet {
        let mut rbf = RbfConfig::grid3(
            self.grid_points,
            self.grid_min,
            self.grid_max,
            0.0,
            self.width,
        );
        rbf.literal_quadratic = self.literal_quadratic;
        let jump = JumpConfig {
            orders: self.jump_orders,
            c1: [0.0, epsilon0, 0.0, p_low],
            c2: [0.0, -epsilon0, 0.0, p_low],
        };
        ApproxNet::new(rbf, jump, self.gamma, self.sigma)
    }
}

/// Sweep one scalar parameter over a list of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Dotted path into the scenario, e.g. `ll_gains.k3`.
    pub path: String,
    pub values: Vec<f64>,
}

/// A named simulation scenario plus output selections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Trace columns to plot.
    #[serde(default)]
    pub plots: Vec<String>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(flatten)]
    pub sim: SimConfig,
}

/// Scenario loading failure: I/O or syntax/schema.
#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario does not match the schema: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

/// Parse a scenario from TOML text and validate it.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = toml::from_str(text)?;
    validate(&scenario)?;
    Ok(scenario)
}

/// Load a scenario file and validate it.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}

/// Set a dotted-path scalar in a parsed TOML tree. The path must already
/// exist; sweeps may only touch parameters the schema knows about.
pub fn set_path(root: &mut toml::Value, path: &str, value: f64) -> Result<(), ConfigIssue> {
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node.as_table_mut().ok_or_else(|| ConfigIssue {
            path: parts[..i].join("."),
            message: "not a table".to_string(),
        })?;
        let entry = table.get_mut(*part).ok_or_else(|| ConfigIssue {
            path: path.to_string(),
            message: "no such parameter".to_string(),
        })?;
        if i + 1 == parts.len() {
            *entry = toml::Value::Float(value);
            return Ok(());
        }
        node = entry;
    }
    Err(ConfigIssue {
        path: path.to_string(),
        message: "empty path".to_string(),
    })
}

/// Re-parse scenario text with one parameter overridden.
pub fn scenario_with_override(
    text: &str,
    path: &str,
    value: f64,
) -> Result<Scenario, ScenarioError> {
    let mut root: toml::Value = toml::from_str(text)?;
    set_path(&mut root, path, value).map_err(|issue| ConfigError::new(vec![issue]))?;
    let scenario: Scenario = root.try_into().map_err(ScenarioError::Parse)?;
    validate(&scenario)?;
    Ok(scenario)
}

fn positive(issues: &mut Vec<ConfigIssue>, path: &str, v: f64) {
    if !(v > 0.0) {
        issues.push(ConfigIssue {
            path: path.to_string(),
            message: format!("must be > 0 (got {v})"),
        });
    }
}

fn finite(issues: &mut Vec<ConfigIssue>, path: &str, v: f64) {
    if !v.is_finite() {
        issues.push(ConfigIssue {
            path: path.to_string(),
            message: "must be finite".to_string(),
        });
    }
}

/// Schema-level validation of every declared invariant. Collects all issues
/// rather than stopping at the first.
pub fn validate(scn: &Scenario) -> Result<(), ConfigError> {
    let mut issues = Vec::new();
    let cfg = &scn.sim;

    positive(&mut issues, "dt", cfg.dt);
    if cfg.duration != 0.0 && cfg.duration < cfg.dt {
        // duration = 0 is the sanctioned empty-run boundary case.
        issues.push(ConfigIssue {
            path: "duration".into(),
            message: format!("must be 0 or >= dt (got {})", cfg.duration),
        });
    }
    if cfg.transient_skip < 0.0 {
        issues.push(ConfigIssue {
            path: "transient_skip".into(),
            message: "must be >= 0".into(),
        });
    }
    if cfg.reference.amplitude < 0.0 {
        issues.push(ConfigIssue {
            path: "reference.amplitude".into(),
            message: "must be >= 0".into(),
        });
    }
    positive(&mut issues, "reference.frequency", cfg.reference.frequency);

    let p = &cfg.plant;
    positive(&mut issues, "plant.mass", p.mass);
    positive(&mut issues, "plant.inertia", p.inertia);
    positive(&mut issues, "plant.com_distance", p.com_distance);
    positive(&mut issues, "plant.gravity", p.gravity);
    if p.coulomb < 0.0 {
        issues.push(ConfigIssue {
            path: "plant.coulomb".into(),
            message: "must be >= 0".into(),
        });
    }
    if p.viscous < 0.0 {
        issues.push(ConfigIssue {
            path: "plant.viscous".into(),
            message: "must be >= 0".into(),
        });
    }
    if !(p.area_1 > p.area_2) || !(p.area_2 > 0.0) {
        issues.push(ConfigIssue {
            path: "plant.area_1".into(),
            message: format!("areas must satisfy area_1 > area_2 > 0 (got {} vs {})", p.area_1, p.area_2),
        });
    }
    positive(&mut issues, "plant.bulk_modulus", p.bulk_modulus);
    positive(&mut issues, "plant.chamber_volume", p.chamber_volume);
    positive(&mut issues, "plant.valve_tau", p.valve_tau);
    positive(&mut issues, "plant.valve_gain", p.valve_gain);
    positive(&mut issues, "plant.cyl_length_0", p.cyl_length_0);
    if p.u_min > p.u_max {
        issues.push(ConfigIssue {
            path: "plant.u_min".into(),
            message: format!("u_min ({}) must not exceed u_max ({})", p.u_min, p.u_max),
        });
    }
    positive(&mut issues, "plant.r_d1", p.r_d1);
    positive(&mut issues, "plant.r_d2", p.r_d2);
    if !(p.r_s1() > 0.0) {
        issues.push(ConfigIssue {
            path: "plant.s1_x".into(),
            message: "mount point s1 coincides with the joint".into(),
        });
    }
    if !(p.r_s2() > 0.0) {
        issues.push(ConfigIssue {
            path: "plant.s2_x".into(),
            message: "mount point s2 coincides with the joint".into(),
        });
    }

    let a = &cfg.accumulator;
    if !(a.adiabatic_exponent > 1.0) {
        issues.push(ConfigIssue {
            path: "accumulator.adiabatic_exponent".into(),
            message: "must be > 1".into(),
        });
    }
    positive(&mut issues, "accumulator.gas_volume_high", a.gas_volume_high);
    positive(&mut issues, "accumulator.flow", a.flow);
    if !(a.p_low < a.p_high) {
        issues.push(ConfigIssue {
            path: "accumulator.p_low".into(),
            message: format!("p_low ({}) must be below p_high ({})", a.p_low, a.p_high),
        });
    }
    if a.recharge_time < 0.0 {
        issues.push(ConfigIssue {
            path: "accumulator.recharge_time".into(),
            message: "must be >= 0".into(),
        });
    }

    let hl = &cfg.hl_gains;
    for (path, v) in [
        ("hl_gains.k1", hl.k1),
        ("hl_gains.k2", hl.k2),
        ("hl_gains.rho1", hl.rho1),
        ("hl_gains.rho2", hl.rho2),
        ("hl_gains.q_j", hl.q_j),
        ("hl_gains.q_m", hl.q_m),
        ("hl_gains.q_c", hl.q_c),
        ("hl_gains.q_b", hl.q_b),
    ] {
        positive(&mut issues, path, v);
    }

    let est = &cfg.initial_estimates;
    finite(&mut issues, "initial_estimates.inertia", est.inertia);
    finite(&mut issues, "initial_estimates.mass", est.mass);
    finite(&mut issues, "initial_estimates.coulomb", est.coulomb);
    finite(&mut issues, "initial_estimates.viscous", est.viscous);

    let ll = &cfg.ll_gains;
    positive(&mut issues, "ll_gains.k3", ll.k3);
    positive(&mut issues, "ll_gains.rho3", ll.rho3);
    if !(ll.k_xi > 0.5) {
        issues.push(ConfigIssue {
            path: "ll_gains.k_xi".into(),
            message: format!("must exceed 1/2 (got {})", ll.k_xi),
        });
    }
    positive(&mut issues, "ll_gains.mu", ll.mu);
    positive(&mut issues, "ll_gains.epsilon0", ll.epsilon0);

    let net = &cfg.net;
    if net.grid_points == 0 {
        issues.push(ConfigIssue {
            path: "net.grid_points".into(),
            message: "must be >= 1".into(),
        });
    }
    if net.jump_orders == 0 {
        issues.push(ConfigIssue {
            path: "net.jump_orders".into(),
            message: "must be >= 1".into(),
        });
    }
    positive(&mut issues, "net.width", net.width);
    for d in 0..3 {
        finite(&mut issues, &format!("net.grid_min[{d}]"), net.grid_min[d]);
        finite(&mut issues, &format!("net.grid_max[{d}]"), net.grid_max[d]);
    }
    for (path, v) in [
        ("plant.s1_x", cfg.plant.s1_x),
        ("plant.s1_y", cfg.plant.s1_y),
        ("plant.s2_x", cfg.plant.s2_x),
        ("plant.s2_y", cfg.plant.s2_y),
    ] {
        finite(&mut issues, path, v);
    }
    positive(&mut issues, "net.gamma", net.gamma);
    if net.sigma < 0.0 {
        issues.push(ConfigIssue {
            path: "net.sigma".into(),
            message: "must be >= 0".into(),
        });
    }
    positive(&mut issues, "net.ps_norm_halfwidth", net.ps_norm_halfwidth);

    let columns = TraceRecord::column_names();
    for plot in &scn.plots {
        if !columns.contains(&plot.as_str()) {
            issues.push(ConfigIssue {
                path: "plots".into(),
                message: format!("unknown trace column `{plot}`"),
            });
        }
    }

    if issues.is_empty() {
        Ok(())
    } else {
        Err(ConfigError::new(issues))
    }
}

/// Physical sanity of the geometry over the angle range the reference will
/// visit (with margin): linkage and moment-arm triangle valid, arm nonzero,
/// chamber volume positive.
pub fn check_physical(cfg: &SimConfig) -> Vec<ConfigIssue> {
    let mut issues = Vec::new();
    let span = cfg.reference.amplitude + 0.05;
    let n = 101;
    for i in 0..n {
        let phi = -span + 2.0 * span * i as f64 / (n - 1) as f64;
        match cylinder_length(phi, &cfg.plant) {
            Err(e) => {
                issues.push(ConfigIssue {
                    path: "plant".into(),
                    message: format!("linkage invalid at phi = {phi:.4}: {e}"),
                });
                break;
            }
            Ok(_) => {
                if let Err(e) = moment_arm(phi, &cfg.plant) {
                    issues.push(ConfigIssue {
                        path: "plant.r_d1".into(),
                        message: format!("moment-arm triangle invalid at phi = {phi:.4}: {e}"),
                    });
                    break;
                }
                let arm = moment_arm(phi, &cfg.plant).unwrap();
                if arm.abs() < 1e-9 {
                    issues.push(ConfigIssue {
                        path: "plant.r_d1".into(),
                        message: format!("moment arm vanishes at phi = {phi:.4}"),
                    });
                    break;
                }
                let x_c = piston_position(phi, &cfg.plant).unwrap();
                if let Err(e) = hydraulic_coeffs(x_c, &cfg.plant) {
                    issues.push(ConfigIssue {
                        path: "plant.chamber_volume".into(),
                        message: format!("at phi = {phi:.4}: {e}"),
                    });
                    break;
                }
            }
        }
    }
    issues
}

/// Origin of a configured value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Part of the nominal model/controller parameter set this artifact
    /// reproduces.
    Nominal,
    /// Filled in by this artifact; not part of the nominal set.
    ArtifactDefault,
}

impl Provenance {
    pub fn tag(self) -> &'static str {
        match self {
            Provenance::Nominal => "[nominal]",
            Provenance::ArtifactDefault => "[artifact default]",
        }
    }
}

/// Every resolved scalar parameter with its provenance, for `check` output.
pub fn resolved_parameters(cfg: &SimConfig) -> Vec<(String, String, Provenance)> {
    use Provenance::{ArtifactDefault as D, Nominal as N};
    let p = &cfg.plant;
    let a = &cfg.accumulator;
    let hl = &cfg.hl_gains;
    let ll = &cfg.ll_gains;
    let net = &cfg.net;
    let mut out: Vec<(String, String, Provenance)> = Vec::new();
    let mut push = |path: &str, value: String, prov: Provenance| {
        out.push((path.to_string(), value, prov));
    };

    push("dt", cfg.dt.to_string(), N);
    push("duration", cfg.duration.to_string(), D);
    push("transient_skip", cfg.transient_skip.to_string(), D);
    push("controller", cfg.controller.name().to_string(), D);
    push("reference.amplitude", cfg.reference.amplitude.to_string(), N);
    push("reference.frequency", cfg.reference.frequency.to_string(), N);

    push("plant.mass", p.mass.to_string(), N);
    push("plant.inertia", p.inertia.to_string(), D);
    push("plant.com_distance", p.com_distance.to_string(), D);
    push("plant.gravity", p.gravity.to_string(), D);
    push("plant.coulomb", p.coulomb.to_string(), N);
    push("plant.viscous", p.viscous.to_string(), N);
    push("plant.k_p", p.k_p.to_string(), N);
    push("plant.k_d", p.k_d.to_string(), N);
    push("plant.area_1", p.area_1.to_string(), N);
    push("plant.area_2", p.area_2.to_string(), N);
    push("plant.bulk_modulus", p.bulk_modulus.to_string(), D);
    push("plant.chamber_volume", p.chamber_volume.to_string(), D);
    push("plant.flow_gain", p.flow_gain.to_string(), N);
    push("plant.flow_pressure", p.flow_pressure.to_string(), N);
    push("plant.leak_internal", p.leak_internal.to_string(), D);
    push("plant.leak_external", p.leak_external.to_string(), D);
    push("plant.valve_tau", p.valve_tau.to_string(), N);
    push("plant.valve_gain", p.valve_gain.to_string(), N);
    push("plant.cyl_length_0", p.cyl_length_0.to_string(), N);
    push("plant.piston_pos_0", p.piston_pos_0.to_string(), N);
    push("plant.s1_x", p.s1_x.to_string(), D);
    push("plant.s1_y", p.s1_y.to_string(), D);
    push("plant.s2_x", p.s2_x.to_string(), D);
    push("plant.s2_y", p.s2_y.to_string(), D);
    push("plant.r_d1", p.r_d1.to_string(), D);
    push("plant.r_d2", p.r_d2.to_string(), D);
    push("plant.u_min", p.u_min.to_string(), D);
    push("plant.u_max", p.u_max.to_string(), N);

    push("accumulator.adiabatic_exponent", a.adiabatic_exponent.to_string(), D);
    push("accumulator.gas_volume_high", a.gas_volume_high.to_string(), D);
    push("accumulator.flow", a.flow.to_string(), D);
    push("accumulator.p_high", a.p_high.to_string(), N);
    push("accumulator.p_low", a.p_low.to_string(), D);
    push("accumulator.recharge_time", a.recharge_time.to_string(), D);

    push("hl_gains.k1", hl.k1.to_string(), N);
    push("hl_gains.k2", hl.k2.to_string(), N);
    push("hl_gains.rho1", hl.rho1.to_string(), N);
    push("hl_gains.rho2", hl.rho2.to_string(), N);
    push("hl_gains.q_j", hl.q_j.to_string(), N);
    push("hl_gains.q_m", hl.q_m.to_string(), N);
    push("hl_gains.q_c", hl.q_c.to_string(), N);
    push("hl_gains.q_b", hl.q_b.to_string(), N);
    push("hl_gains.flip_e1_term", hl.flip_e1_term.to_string(), D);

    push("initial_estimates.inertia", cfg.initial_estimates.inertia.to_string(), N);
    push("initial_estimates.mass", cfg.initial_estimates.mass.to_string(), N);
    push("initial_estimates.coulomb", cfg.initial_estimates.coulomb.to_string(), N);
    push("initial_estimates.viscous", cfg.initial_estimates.viscous.to_string(), N);

    push("ll_gains.k3", ll.k3.to_string(), N);
    push("ll_gains.rho3", ll.rho3.to_string(), N);
    push("ll_gains.k_xi", ll.k_xi.to_string(), D);
    push("ll_gains.mu", ll.mu.to_string(), D);
    push("ll_gains.epsilon0", ll.epsilon0.to_string(), N);

    push("net.grid_points", net.grid_points.to_string(), N);
    push(
        "net.grid_min",
        format!("[{}, {}, {}]", net.grid_min[0], net.grid_min[1], net.grid_min[2]),
        N,
    );
    push(
        "net.grid_max",
        format!("[{}, {}, {}]", net.grid_max[0], net.grid_max[1], net.grid_max[2]),
        N,
    );
    push("net.width", net.width.to_string(), N);
    push("net.literal_quadratic", net.literal_quadratic.to_string(), D);
    push("net.jump_orders", net.jump_orders.to_string(), N);
    push("net.gamma", net.gamma.to_string(), N);
    push("net.sigma", net.sigma.to_string(), N);
    push("net.ps_norm_center", net.ps_norm_center.to_string(), D);
    push("net.ps_norm_halfwidth", net.ps_norm_halfwidth.to_string(), D);

    push("pd.kp", cfg.pd.kp.to_string(), N);
    push("pd.kd", cfg.pd.kd.to_string(), N);

    out
}
