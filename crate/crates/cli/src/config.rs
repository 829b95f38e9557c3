//! Flat run configuration read from TOML, with per-key command-line overrides.

use std::path::Path;

use clap::Args;
use crimecast::evaluation::EvalConfig;
use crimecast::forecaster::{ForecastOptions, DEFAULT_SIGMA_MAX};
use crimecast::Hyperparams;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub rho: f64,
    pub eta: f64,
    pub theta: f64,
    pub omega_ridge: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub disable_spatial: bool,
    /// Training slots per rolling origin.
    pub window: usize,
    /// Slots between origin and predicted slot.
    pub horizon: usize,
    /// Decay look-back; unset uses `min(7, T - 1)`.
    pub forecast_window: Option<usize>,
    pub sigma_max: f64,
    pub shared_sigma: bool,
    pub clamp: bool,
    pub fast: bool,
    pub seed: u64,
    pub deterministic: bool,
    /// Feature lag used when reading `features.csv`.
    pub lag: usize,
    /// Distance floor in km; unset uses half the smallest centroid spacing.
    pub d_min: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let hp = Hyperparams::default();
        Self {
            alpha: hp.alpha,
            beta: hp.beta,
            gamma: hp.gamma,
            rho: hp.rho,
            eta: hp.eta,
            theta: hp.theta,
            omega_ridge: hp.omega_ridge,
            max_iters: hp.max_iters,
            tol: hp.tol,
            disable_spatial: hp.disable_spatial,
            window: 7,
            horizon: 1,
            forecast_window: None,
            sigma_max: DEFAULT_SIGMA_MAX,
            shared_sigma: false,
            clamp: false,
            fast: false,
            seed: 0,
            deterministic: true,
            lag: 1,
            d_min: None,
        }
    }
}

/// Overrides for every [`RunConfig`] key. Each flag also accepts its underscore spelling.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, alias = "omega_ridge")]
    omega_ridge: Option<f64>,
    #[arg(long, alias = "max_iters")]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, alias = "disable_spatial")]
    disable_spatial: Option<bool>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, alias = "forecast_window")]
    forecast_window: Option<usize>,
    #[arg(long, alias = "sigma_max")]
    sigma_max: Option<f64>,
    #[arg(long, alias = "shared_sigma")]
    shared_sigma: Option<bool>,
    #[arg(long)]
    clamp: Option<bool>,
    #[arg(long)]
    fast: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    deterministic: Option<bool>,
    #[arg(long)]
    lag: Option<usize>,
    #[arg(long, alias = "d_min")]
    d_min: Option<f64>,
}

macro_rules! apply {
    ($cfg:ident, $over:ident, $($field:ident),*) => {
        $(if let Some(v) = $over.$field { $cfg.$field = v; })*
    };
}

impl RunConfig {
    /// Defaults, then the file (if any), then command-line overrides.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::data("config", format!("{}: {e}", path.display())))?;
                toml::from_str(&text).map_err(|e| CliError::data("config", format!("{}: {e}", path.display())))?
            }
            None => Self::default(),
        };
        let o = overrides;
        apply!(cfg, o, alpha, beta, gamma, rho, eta, theta, omega_ridge, max_iters, tol, disable_spatial);
        apply!(cfg, o, window, horizon, sigma_max, shared_sigma, clamp, fast, seed, deterministic, lag);
        if o.forecast_window.is_some() {
            cfg.forecast_window = o.forecast_window;
        }
        if o.d_min.is_some() {
            cfg.d_min = o.d_min;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        self.hyperparams().validate().map_err(|e| CliError::data("config", e.to_string()))?;
        if self.window < 2 {
            return Err(CliError::data("config", format!("window must be at least 2, got {}", self.window)));
        }
        if self.horizon == 0 || self.lag == 0 {
            return Err(CliError::data("config", "horizon and lag must be at least 1"));
        }
        if !(self.sigma_max.is_finite() && self.sigma_max >= 1.0) {
            return Err(CliError::data("config", format!("sigma_max must be >= 1, got {}", self.sigma_max)));
        }
        Ok(())
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            rho: self.rho,
            eta: self.eta,
            theta: self.theta,
            omega_ridge: self.omega_ridge,
            max_iters: self.max_iters,
            tol: self.tol,
            disable_spatial: self.disable_spatial,
        }
    }

    pub fn forecast_options(&self) -> ForecastOptions {
        ForecastOptions { window: self.forecast_window, sigma_max: self.sigma_max, shared_sigma: self.shared_sigma }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            hyperparams: self.hyperparams(),
            window: self.window,
            horizon: self.horizon,
            forecast_window: self.forecast_window,
            sigma_max: self.sigma_max,
            shared_sigma: self.shared_sigma,
            clamp: self.clamp,
            fast: self.fast,
            seed: self.seed,
            parallel: !self.deterministic,
        }
    }
}
