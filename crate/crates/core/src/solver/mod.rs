//! ADMM training of the shared/type-specific weight model.
//!
//! Each weight vector is split as `W_n^t(k) = P_n^t + Q_n^t(k)`. The
//! objective combines a squared regression loss, a task-covariance penalty
//! `alpha * tr(Q Omega^-1 Q^T)` per (region, slot), and fused-lasso penalties
//! on temporal (`P A`, `Q A`) and spatial (`P B`, `Q B`) differences. The L1
//! terms are split off into auxiliaries `C, D, E, F` with scaled duals
//! `S, U, V, Z`.

mod admm;
mod objective;
mod omega;
mod prox;
mod state;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use admm::{admm_step, fit, FitReport, Residuals, StepReport, StopReason, Trainer};
pub use objective::{ObjectiveTerms, Problem};
pub use omega::{update_omega, OmegaUpdate};
pub use prox::{soft_threshold, soft_threshold_in_place};
pub use state::{Checkpoint, ModelState, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    /// Weight of the cross-type covariance penalty.
    pub alpha: f64,
    /// Temporal difference strength, embedded in the operator `A`.
    pub beta: f64,
    /// Spatial distance exponent, embedded in the operator `B`.
    pub gamma: f64,
    /// ADMM penalty parameter.
    pub rho: f64,
    /// Initial gradient step size; halved when the objective increases.
    pub eta: f64,
    /// Optional ridge weight on `P` and `Q`.
    pub theta: f64,
    /// Ridge added to `Omega` before inversion.
    pub omega_ridge: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// Drop the spatial penalty altogether.
    pub disable_spatial: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.1,
            gamma: 1.0,
            rho: 1.0,
            eta: 1e-3,
            theta: 0.0,
            omega_ridge: 1e-6,
            max_iters: 200,
            tol: 1e-4,
            disable_spatial: false,
        }
    }
}

/// Maximum number of step-size halvings during one fit.
pub const MAX_ETA_HALVINGS: u32 = 10;

/// A fit aborts once the objective exceeds this multiple of its initial value.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let non_negative = [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma), ("theta", self.theta)];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        let positive = [("rho", self.rho), ("eta", self.eta), ("omega_ridge", self.omega_ridge), ("tol", self.tol)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        Ok(())
    }
}
