//! Combined continuous/discontinuous basis approximator.
//!
//! A Gaussian RBF block handles the smooth part of the target; two blocks of
//! one-sided "jump" bases, shifted to the known discontinuity locations,
//! handle the piecewise part. Weights adapt online with a leaky
//! (sigma-modified) gradient rule.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Input vector for the basis functions: load force, joint velocity,
/// smoothed force-reference rate, and (normalized) supply pressure.
pub type Regressor = [f64; 4];

/// Radial-basis block configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfConfig {
    /// Basis centers.
    pub centers: Vec<[f64; 4]>,
    /// Shared width of the transfer function.
    pub width: f64,
    /// Evaluate the raw quadratic form instead of the Gaussian. The Gaussian
    /// is the default; the quadratic variant is unbounded and only kept for
    /// side-by-side comparison.
    #[serde(default)]
    pub literal_quadratic: bool,
}

impl RbfConfig {
    /// Centers on a regular 3-D grid over the first three coordinates, with
    /// the fourth coordinate pinned (the pressure input is normalized, so its
    /// center sits at the middle of the normalized range).
    pub fn grid3(
        points_per_axis: usize,
        min: [f64; 3],
        max: [f64; 3],
        fourth: f64,
        width: f64,
    ) -> Self {
        let mut centers = Vec::with_capacity(points_per_axis.pow(3));
        let coord = |lo: f64, hi: f64, i: usize| {
            if points_per_axis == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * i as f64 / (points_per_axis - 1) as f64
            }
        };
        for i in 0..points_per_axis {
            for j in 0..points_per_axis {
                for k in 0..points_per_axis {
                    centers.push([
                        coord(min[0], max[0], i),
                        coord(min[1], max[1], j),
                        coord(min[2], max[2], k),
                        fourth,
                    ]);
                }
            }
        }
        Self {
            centers,
            width,
            literal_quadratic: false,
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

/// Jump-basis block configuration: polynomial orders applied coordinate-wise
/// to the shifted input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpConfig {
    /// Maximum order per coordinate; the block emits `4 * orders` entries.
    pub orders: usize,
    /// Shift added to the input for the first block.
    pub c1: [f64; 4],
    /// Shift added to the input for the second block.
    pub c2: [f64; 4],
}

impl JumpConfig {
    /// Entries per shifted block.
    pub fn block_len(&self) -> usize {
        4 * self.orders
    }
}

/// Gaussian (or literal quadratic) radial basis evaluated at `z`.
pub fn rbf_basis(z: &Regressor, cfg: &RbfConfig) -> Vec<f64> {
    cfg.centers
        .iter()
        .map(|mu| {
            let mut dist2 = 0.0;
            for d in 0..4 {
                let delta = z[d] - mu[d];
                dist2 += delta * delta;
            }
            let q = dist2 / (cfg.width * cfg.width);
            if cfg.literal_quadratic {
                q
            } else {
                (-q).exp()
            }
        })
        .collect()
}

/// One-sided jump basis, applied coordinate-wise.
///
/// For coordinate value v and order i: 0 for v < 0, (1 - e^-v)^i otherwise.
/// Entries are grouped by coordinate, orders 1..=orders within each group.
pub fn jump_basis(v: &Regressor, orders: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(4 * orders);
    for &vj in v.iter() {
        if vj < 0.0 {
            out.extend(std::iter::repeat(0.0).take(orders));
        } else {
            let base = 1.0 - (-vj).exp();
            let mut acc = 1.0;
            for _ in 0..orders {
                acc *= base;
                out.push(acc);
            }
        }
    }
    out
}

/// Full regressor: RBF block followed by the two shifted jump blocks.
pub fn regressor(z: &Regressor, rbf: &RbfConfig, jump: &JumpConfig) -> Vec<f64> {
    let mut chi = rbf_basis(z, rbf);
    let shifted = |c: &[f64; 4]| -> Regressor {
        [z[0] + c[0], z[1] + c[1], z[2] + c[2], z[3] + c[3]]
    };
    chi.extend(jump_basis(&shifted(&jump.c1), jump.orders));
    chi.extend(jump_basis(&shifted(&jump.c2), jump.orders));
    chi
}

/// Online approximator: weight vector plus diagonal learning-rate and
/// leakage matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxNet {
    pub rbf: RbfConfig,
    pub jump: JumpConfig,
    /// Weight vector, length `rbf.len() + 2 * jump.block_len()`.
    pub w_hat: Vec<f64>,
    /// Diagonal of the learning-rate matrix.
    pub gamma: Vec<f64>,
    /// Diagonal of the leakage matrix.
    pub sigma: Vec<f64>,
}

impl ApproxNet {
    /// Zero-weight network with uniform learning rate and leakage.
    pub fn new(rbf: RbfConfig, jump: JumpConfig, gamma: f64, sigma: f64) -> Self {
        let dim = rbf.len() + 2 * jump.block_len();
        Self {
            rbf,
            jump,
            w_hat: vec![0.0; dim],
            gamma: vec![gamma; dim],
            sigma: vec![sigma; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.w_hat.len()
    }

    pub fn regressor(&self, z: &Regressor) -> Vec<f64> {
        regressor(z, &self.rbf, &self.jump)
    }

    /// W_hat' * chi(z).
    pub fn estimate(&self, z: &Regressor) -> Result<f64, ModelError> {
        let chi = self.regressor(z);
        self.estimate_with(&chi)
    }

    /// Same as [`estimate`](Self::estimate) with a precomputed regressor.
    pub fn estimate_with(&self, chi: &[f64]) -> Result<f64, ModelError> {
        if chi.len() != self.w_hat.len() {
            return Err(ModelError::DimensionMismatch {
                expected: self.w_hat.len(),
                got: chi.len(),
            });
        }
        Ok(self.w_hat.iter().zip(chi).map(|(w, c)| w * c).sum())
    }

    /// One explicit-Euler step of the leaky gradient law:
    /// w += dt * Gamma * (rho3 * e3 * chi - sigma * w).
    pub fn update_weights(&mut self, e3: f64, chi: &[f64], rho3: f64, dt: f64) -> Result<(), ModelError> {
        if chi.len() != self.w_hat.len() {
            return Err(ModelError::DimensionMismatch {
                expected: self.w_hat.len(),
                got: chi.len(),
            });
        }
        for i in 0..self.w_hat.len() {
            self.w_hat[i] += dt * self.gamma[i] * (rho3 * e3 * chi[i] - self.sigma[i] * self.w_hat[i]);
        }
        Ok(())
    }

    /// Explicit Euler with enough inner substeps to keep the leakage mode
    /// stable (h * Gamma * sigma <= 1/2). Collapses to a single step when the
    /// configured rates already satisfy that bound.
    pub fn update_weights_substepped(
        &mut self,
        e3: f64,
        chi: &[f64],
        rho3: f64,
        dt: f64,
    ) -> Result<(), ModelError> {
        let n = self.substeps(dt);
        let h = dt / n as f64;
        for _ in 0..n {
            self.update_weights(e3, chi, rho3, h)?;
        }
        Ok(())
    }

    /// Substep count required for a stable leakage update at step `dt`.
    pub fn substeps(&self, dt: f64) -> usize {
        let max_rate = self
            .gamma
            .iter()
            .zip(&self.sigma)
            .map(|(g, s)| g * s)
            .fold(0.0f64, f64::max);
        ((2.0 * dt * max_rate).ceil() as usize).max(1)
    }

    pub fn w_norm(&self) -> f64 {
        self.w_hat.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        /// With the error input clamped to a bound, the weight norm stays
        /// within the leakage ball (discrete Gronwall argument, valid while
        /// the per-step rate h * Gamma * sigma stays below one).
        #[test]
        fn leakage_bounds_weights(
            e3s in proptest::collection::vec(-5.0f64..5.0, 50),
            gamma in 1.0f64..400.0,
            sigma in 0.05f64..0.5,
        ) {
            let rbf = RbfConfig {
                centers: vec![[0.0; 4], [1.0, 0.5, -0.5, 0.0]],
                width: 2.0,
                literal_quadratic: false,
            };
            let jump = JumpConfig { orders: 2, c1: [0.0, 1e-3, 0.0, 1.0], c2: [0.0, -1e-3, 0.0, 1.0] };
            let mut net = ApproxNet::new(rbf, jump, gamma, sigma);
            let dt = 1e-3;
            prop_assume!(dt * gamma * sigma < 1.0);

            let bound_e = 5.0;
            let dim = net.dim() as f64;
            // chi entries live in [0, 1], so ||chi|| <= sqrt(dim).
            let ball = 1.0 * bound_e * dim.sqrt() / sigma;
            for (k, &e3) in e3s.iter().enumerate() {
                let z = [(k as f64 * 0.37).sin(), (k as f64 * 0.11).cos(), 0.3, 0.1];
                let chi = net.regressor(&z);
                net.update_weights(e3, &chi, 1.0, dt).unwrap();
                prop_assert!(net.w_norm() <= ball * (1.0 + 1e-9));
            }
        }

        /// Jump basis: exact zero left of the shift, continuous from the right.
        #[test]
        fn jump_basis_one_sided(v in -10.0f64..10.0) {
            let out = jump_basis(&[v, 0.0, 0.0, 0.0], 4);
            if v < 0.0 {
                prop_assert!(out[0..4].iter().all(|&x| x == 0.0));
            } else {
                let eps = 1e-9;
                let right = jump_basis(&[v + eps, 0.0, 0.0, 0.0], 4);
                for i in 0..4 {
                    prop_assert!((right[i] - out[i]).abs() < 1e-6);
                    prop_assert!((0.0..=1.0).contains(&out[i]));
                }
            }
        }
    }
}
