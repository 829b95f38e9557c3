//! Rolling-origin evaluation.
//!
//! For each origin `t0` in `window..=T-horizon` (1-based) the model is trained on
//! slots `t0-window+1..=t0`, decays are estimated on the same slots, and slot
//! `t0+horizon` is predicted.

use ndarray::{s, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::forecaster::{apply_weights, forecast_weights_ahead, naive_baselines, ForecastOptions, ForecastTable, DEFAULT_SIGMA_MAX};
use crate::solver::{fit, Hyperparams, StopReason};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub hyperparams: Hyperparams,
    /// Training slots per origin.
    pub window: usize,
    /// Slots between the origin and the predicted slot.
    pub horizon: usize,
    /// Decay look-back; `None` uses the forecaster default for the training window.
    pub forecast_window: Option<usize>,
    pub sigma_max: f64,
    pub shared_sigma: bool,
    /// Clamp predictions at zero.
    pub clamp: bool,
    /// Train once on the first window and reuse its forecast weights at every origin.
    pub fast: bool,
    pub seed: u64,
    /// Fit origins on the rayon thread pool. Results do not depend on this.
    pub parallel: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            hyperparams: Hyperparams::default(),
            window: 7,
            horizon: 1,
            forecast_window: None,
            sigma_max: DEFAULT_SIGMA_MAX,
            shared_sigma: false,
            clamp: false,
            fast: false,
            seed: 0,
            parallel: true,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self, slots: usize) -> Result<()> {
        self.hyperparams.validate()?;
        if self.window < 2 {
            return Err(Error::Config(format!("training window must be at least 2, got {}", self.window)));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.window + self.horizon > slots {
            return Err(Error::Config(format!(
                "window {} plus horizon {} exceeds the {slots} available slots",
                self.window, self.horizon
            )));
        }
        Ok(())
    }

    /// Number of rolling origins, `T - window - horizon + 1`.
    pub fn n_origins(&self, slots: usize) -> usize {
        (slots + 1).saturating_sub(self.window + self.horizon)
    }

    fn forecast_options(&self) -> ForecastOptions {
        ForecastOptions { window: self.forecast_window, sigma_max: self.sigma_max, shared_sigma: self.shared_sigma }
    }
}

/// Seed for the fit at a 0-based origin.
pub fn origin_seed(base: u64, origin: usize) -> u64 {
    let mut z = base ^ (origin as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mean over cells of the per-cell root-mean-square error across samples.
/// Every prediction and observation has shape `(N, K)`.
pub fn average_rmse(predictions: &[Array2<f64>], observations: &[Array2<f64>]) -> Result<f64> {
    Ok(cell_rmse(predictions, observations)?.mean().expect("non-empty cells"))
}

/// Per-cell RMSE across samples, shape `(N, K)`.
pub fn cell_rmse(predictions: &[Array2<f64>], observations: &[Array2<f64>]) -> Result<Array2<f64>> {
    if predictions.is_empty() || predictions.len() != observations.len() {
        return Err(Error::InvalidDimension(format!(
            "{} predictions for {} observations",
            predictions.len(),
            observations.len()
        )));
    }
    let dim = predictions[0].dim();
    if dim.0 * dim.1 == 0 || predictions.iter().chain(observations).any(|a| a.dim() != dim) {
        return Err(Error::InvalidDimension("prediction and observation shapes differ".into()));
    }
    let mut sq = Array2::<f64>::zeros(dim);
    for (p, o) in predictions.iter().zip(observations) {
        ndarray::Zip::from(&mut sq).and(p).and(o).for_each(|acc, &p, &o| *acc += (p - o) * (p - o));
    }
    let count = predictions.len() as f64;
    Ok(sq.mapv(|v| (v / count).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginResult {
    /// Last training slot, 1-based.
    pub origin: usize,
    /// Predicted slot, 1-based.
    pub target: usize,
    pub iterations: usize,
    pub converged: bool,
    pub predictions: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub origins: usize,
    pub window: usize,
    pub horizon: usize,
    pub rmse: f64,
    pub historical_mean_rmse: f64,
    pub last_value_rmse: f64,
    /// Per-(region, type) RMSE of the model.
    pub cell_rmse: Array2<f64>,
    pub per_origin: Vec<OriginResult>,
    pub fast: bool,
}

pub fn evaluate(data: &Dataset, config: &EvalConfig) -> Result<EvaluationReport> {
    let slots = data.n_slots();
    config.validate(slots)?;
    let (window, horizon) = (config.window, config.horizon);
    let origins: Vec<usize> = (window - 1..slots - horizon).collect();

    let fast_weights = if config.fast {
        let first = origins[0];
        let train = data.window(first + 1 - window, first + 1)?;
        let (state, report) = fit(&train, &config.hyperparams, origin_seed(config.seed, first))?;
        let table = ForecastTable::fit(&state, &train.features, &train.crimes, &config.forecast_options())?;
        Some((state, table, report))
    } else {
        None
    };

    let run = |&origin: &usize| -> Result<OriginResult> {
        let target = origin + horizon;
        let x = data.features.slot(target).expect("target slot inside data");
        let (weights, iterations, stop) = match &fast_weights {
            Some((state, table, report)) => {
                let steps = target - (window - 1);
                (forecast_weights_ahead(state, table, steps)?, report.iterations.len(), report.stop_reason)
            }
            None => {
                let train = data.window(origin + 1 - window, origin + 1)?;
                let (state, report) = fit(&train, &config.hyperparams, origin_seed(config.seed, origin))?;
                let table = ForecastTable::fit(&state, &train.features, &train.crimes, &config.forecast_options())?;
                (forecast_weights_ahead(&state, &table, horizon)?, report.iterations.len(), report.stop_reason)
            }
        };
        Ok(OriginResult {
            origin: origin + 1,
            target: target + 1,
            iterations,
            converged: stop == StopReason::Converged,
            predictions: apply_weights(&weights, x, config.clamp),
        })
    };
    let per_origin: Vec<OriginResult> = if config.parallel {
        origins.par_iter().map(run).collect::<Result<_>>()?
    } else {
        origins.iter().map(run).collect::<Result<_>>()?
    };

    let observed: Vec<Array2<f64>> =
        origins.iter().map(|&o| data.crimes.values().slice(s![.., o + horizon, ..]).to_owned()).collect();
    let mut mean_pred = Vec::with_capacity(origins.len());
    let mut last_pred = Vec::with_capacity(origins.len());
    for &o in &origins {
        let b = naive_baselines(&data.crimes, o, window)?;
        mean_pred.push(b.historical_mean);
        last_pred.push(b.last_value);
    }
    let predictions: Vec<Array2<f64>> = per_origin.iter().map(|r| r.predictions.clone()).collect();
    let cells = cell_rmse(&predictions, &observed)?;
    Ok(EvaluationReport {
        origins: origins.len(),
        window,
        horizon,
        rmse: cells.mean().expect("non-empty"),
        historical_mean_rmse: average_rmse(&mean_pred, &observed)?,
        last_value_rmse: average_rmse(&last_pred, &observed)?,
        cell_rmse: cells,
        per_origin,
        fast: config.fast,
    })
}
