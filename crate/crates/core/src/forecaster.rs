//! Forecasting future weights as a decay-weighted average of recent slots.
//!
//! The weight for slot `t` is predicted from the previous `G` slots as
//! `sum_{dt=1..G} sigma^-dt W^{t-dt} / sum sigma^-dt`, with one decay
//! `sigma >= 1` learned per (region, type) from the training history.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::ModelState;
use crate::tensors::{CrimeTensor, FeatureTensor};

pub const DEFAULT_SIGMA_MAX: f64 = 10.0;
/// Absolute tolerance of the decay search.
pub const SIGMA_TOL: f64 = 1e-3;
const SCAN_POINTS: usize = 65;

/// Default look-back window: `min(7, T - 1)`.
pub fn default_window(slots: usize) -> usize {
    7.min(slots.saturating_sub(1)).max(1)
}

/// Normalised decay coefficients for lags `1..=window`, most recent first.
///
/// Computed relative to the most recent lag so large `sigma` does not underflow.
pub fn decay_coefficients(window: usize, sigma: f64) -> Vec<f64> {
    let mut c: Vec<f64> = (0..window).map(|i| sigma.powi(-(i as i32))).collect();
    let total: f64 = c.iter().sum();
    c.iter_mut().for_each(|v| *v /= total);
    c
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma >= 1.0) {
        return Err(Error::Config(format!("decay sigma must be finite and >= 1, got {sigma}")));
    }
    Ok(())
}

/// Decay-weighted average of `history`, whose rows are the weight vectors
/// of slots `t-1, t-2, ..., t-G` in that order.
pub fn combine_weights(history: ArrayView2<'_, f64>, sigma: f64) -> Result<Array1<f64>> {
    if history.nrows() == 0 {
        return Err(Error::InsufficientHistory { window: 0, available: 0 });
    }
    check_sigma(sigma)?;
    let coeffs = decay_coefficients(history.nrows(), sigma);
    let mut out = Array1::zeros(history.ncols());
    for (row, c) in history.outer_iter().zip(coeffs) {
        out.scaled_add(c, &row);
    }
    Ok(out)
}

/// Projections `x_t . W^{t-dt}` for every target slot `t = window..T` (0-based)
/// and lag, so the decay objective is cheap to evaluate.
struct DecaySamples {
    projections: Array2<f64>,
    targets: Array1<f64>,
}

impl DecaySamples {
    fn new(history: ArrayView2<'_, f64>, x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, window: usize) -> Result<Self> {
        let slots = history.nrows();
        if window == 0 || slots <= window {
            return Err(Error::InsufficientHistory { window, available: slots });
        }
        if x.nrows() != slots || y.len() != slots || x.ncols() != history.ncols() {
            return Err(Error::InvalidDimension("history, features and targets disagree in shape".into()));
        }
        let samples = slots - window;
        let projections = Array2::from_shape_fn((samples, window), |(i, lag)| {
            let t = window + i;
            x.row(t).dot(&history.row(t - 1 - lag))
        });
        let targets = y.slice(s![window..]).to_owned();
        Ok(Self { projections, targets })
    }

    fn loss(&self, sigma: f64) -> f64 {
        let coeffs = Array1::from(decay_coefficients(self.projections.ncols(), sigma));
        let pred = self.projections.dot(&coeffs);
        pred.iter().zip(&self.targets).map(|(p, y)| (p - y) * (p - y)).sum()
    }
}

/// Result of a one-dimensional decay search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaFit {
    pub sigma: f64,
    pub loss: f64,
}

/// Minimises `loss` over `[1, sigma_max]`.
///
/// A uniform scan brackets the best region, then golden-section search
/// narrows it to [`SIGMA_TOL`]. A flat objective, or one where `sigma = 1`
/// is as good as the optimum, returns 1.
pub fn minimize_sigma(loss: impl Fn(f64) -> f64, sigma_max: f64) -> Result<SigmaFit> {
    if !(sigma_max.is_finite() && sigma_max >= 1.0) {
        return Err(Error::Config(format!("sigma_max must be finite and >= 1, got {sigma_max}")));
    }
    let at_one = loss(1.0);
    if sigma_max == 1.0 {
        return Ok(SigmaFit { sigma: 1.0, loss: at_one });
    }
    let step = (sigma_max - 1.0) / (SCAN_POINTS - 1) as f64;
    let grid: Vec<(f64, f64)> = (0..SCAN_POINTS)
        .map(|i| {
            let s = if i + 1 == SCAN_POINTS { sigma_max } else { 1.0 + step * i as f64 };
            (s, loss(s))
        })
        .collect();
    if grid.iter().any(|(_, f)| !f.is_finite()) {
        return Err(Error::Numeric {
            block: crate::error::Block::new(None, None, None),
            message: "non-finite decay objective".into(),
        });
    }
    let (lo_f, hi_f) = grid.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, f)| (lo.min(f), hi.max(f)));
    if hi_f - lo_f <= 1e-12 * hi_f.abs().max(1.0) {
        return Ok(SigmaFit { sigma: 1.0, loss: at_one });
    }
    let best = (0..grid.len()).min_by(|&a, &b| grid[a].1.total_cmp(&grid[b].1)).expect("non-empty grid");
    let mut a = grid[best.saturating_sub(1)].0;
    let mut b = grid[(best + 1).min(grid.len() - 1)].0;

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (loss(c), loss(d));
    while b - a > SIGMA_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = loss(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = loss(d);
        }
    }
    let mid = 0.5 * (a + b);
    let candidates = [(c, fc), (d, fd), (mid, loss(mid)), grid[best]];
    let (sigma, f) = candidates.into_iter().min_by(|x, y| x.1.total_cmp(&y.1)).expect("candidates");
    if at_one <= f {
        return Ok(SigmaFit { sigma: 1.0, loss: at_one });
    }
    Ok(SigmaFit { sigma, loss: f })
}

/// Learns the decay for one (region, type) from its weight history.
///
/// `history`, `x` and `y` are indexed by slot (`T` rows); the objective sums
/// squared one-step errors over slots `window+1..=T`.
pub fn estimate_sigma(
    history: ArrayView2<'_, f64>,
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    window: usize,
    sigma_max: f64,
) -> Result<SigmaFit> {
    let samples = DecaySamples::new(history, x, y, window)?;
    if window == 1 {
        return Ok(SigmaFit { sigma: 1.0, loss: samples.loss(1.0) });
    }
    minimize_sigma(|s| samples.loss(s), sigma_max)
}

/// Learned decays per (region, type).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastTable {
    /// `(N, K)` decay parameters.
    pub sigma: Array2<f64>,
    /// `(N, K)` objective value at the chosen decay.
    pub fit_loss: Array2<f64>,
    pub window: usize,
    pub sigma_max: f64,
    /// One decay shared by every (region, type).
    pub shared: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastOptions {
    /// Look-back length; `None` uses [`default_window`].
    pub window: Option<usize>,
    pub sigma_max: f64,
    pub shared_sigma: bool,
}

impl Default for ForecastOptions {
    fn default() -> Self {
        Self { window: None, sigma_max: DEFAULT_SIGMA_MAX, shared_sigma: false }
    }
}

impl ForecastTable {
    /// Estimates decays from a trained state and its training data.
    pub fn fit(state: &ModelState, features: &FeatureTensor, crimes: &CrimeTensor, options: &ForecastOptions) -> Result<Self> {
        let (regions, slots, types) = (state.n_regions(), state.n_slots(), state.n_types());
        if features.n_slots() != slots || crimes.n_slots() != slots || crimes.n_types() != types {
            return Err(Error::InvalidDimension("model and training data disagree in shape".into()));
        }
        let window = options.window.unwrap_or_else(|| default_window(slots));
        if window == 0 || window >= slots {
            return Err(Error::InsufficientHistory { window, available: slots });
        }
        let samples: Vec<DecaySamples> = (0..regions * types)
            .into_par_iter()
            .map(|i| {
                let (n, k) = (i / types, i % types);
                let history = state.combined_history(n, k);
                let x = features.values().index_axis(Axis(0), n);
                let y = crimes.values().slice(s![n, .., k]);
                DecaySamples::new(history.view(), x, y, window)
            })
            .collect::<Result<_>>()?;

        let fits: Vec<SigmaFit> = if window == 1 {
            samples.iter().map(|s| SigmaFit { sigma: 1.0, loss: s.loss(1.0) }).collect()
        } else if options.shared_sigma {
            let shared = minimize_sigma(|sig| samples.iter().map(|s| s.loss(sig)).sum(), options.sigma_max)?;
            samples.iter().map(|s| SigmaFit { sigma: shared.sigma, loss: s.loss(shared.sigma) }).collect()
        } else {
            samples.par_iter().map(|s| minimize_sigma(|sig| s.loss(sig), options.sigma_max)).collect::<Result<_>>()?
        };
        Ok(Self {
            sigma: Array2::from_shape_fn((regions, types), |(n, k)| fits[n * types + k].sigma),
            fit_loss: Array2::from_shape_fn((regions, types), |(n, k)| fits[n * types + k].loss),
            window,
            sigma_max: options.sigma_max,
            shared: options.shared_sigma,
        })
    }
}

/// Predicted weights for the next slot, `(N, K, M)`.
pub fn forecast_weights(state: &ModelState, table: &ForecastTable) -> Result<ndarray::Array3<f64>> {
    forecast_weights_ahead(state, table, 1)
}

/// Predicted weights `steps` slots past the last trained slot. Each step
/// appends its forecast to the history used by the next one.
pub fn forecast_weights_ahead(state: &ModelState, table: &ForecastTable, steps: usize) -> Result<ndarray::Array3<f64>> {
    let (regions, slots, types, features) = (state.n_regions(), state.n_slots(), state.n_types(), state.n_features());
    if table.window == 0 || table.window > slots {
        return Err(Error::InsufficientHistory { window: table.window, available: slots });
    }
    if table.sigma.dim() != (regions, types) {
        return Err(Error::InvalidDimension("forecast table does not match the model".into()));
    }
    if steps == 0 {
        return Err(Error::Config("forecast horizon must be at least 1".into()));
    }
    let mut out = ndarray::Array3::zeros((regions, types, features));
    for n in 0..regions {
        for k in 0..types {
            let mut recent = state.combined_history(n, k).slice(s![slots - table.window..;-1, ..]).to_owned();
            for _ in 0..steps {
                let next = combine_weights(recent.view(), table.sigma[[n, k]])?;
                for i in (1..recent.nrows()).rev() {
                    let prev = recent.row(i - 1).to_owned();
                    recent.row_mut(i).assign(&prev);
                }
                recent.row_mut(0).assign(&next);
            }
            out.slice_mut(s![n, k, ..]).assign(&recent.row(0));
        }
    }
    Ok(out)
}

/// `Y_hat_n(k) = X_n . W_hat_n(k)` for the slot after training, with features `x_future` (`N x M`).
pub fn predict(state: &ModelState, table: &ForecastTable, x_future: ArrayView2<'_, f64>, clamp: bool) -> Result<Array2<f64>> {
    predict_ahead(state, table, x_future, 1, clamp)
}

/// Like [`predict`] for the slot `steps` past the last trained slot.
pub fn predict_ahead(
    state: &ModelState,
    table: &ForecastTable,
    x_future: ArrayView2<'_, f64>,
    steps: usize,
    clamp: bool,
) -> Result<Array2<f64>> {
    if x_future.dim() != (state.n_regions(), state.n_features()) {
        return Err(Error::InvalidDimension(format!(
            "future features have shape {:?}, expected ({}, {})",
            x_future.dim(),
            state.n_regions(),
            state.n_features()
        )));
    }
    let weights = forecast_weights_ahead(state, table, steps)?;
    Ok(apply_weights(&weights, x_future, clamp))
}

pub(crate) fn apply_weights(weights: &ndarray::Array3<f64>, x: ArrayView2<'_, f64>, clamp: bool) -> Array2<f64> {
    let (regions, types, _) = weights.dim();
    Array2::from_shape_fn((regions, types), |(n, k)| {
        let y = x.row(n).dot(&weights.slice(s![n, k, ..]));
        if clamp { y.max(0.0) } else { y }
    })
}

/// Predictions of the two naive reference forecasters for one origin.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselinePredictions {
    /// Mean of the `window` slots ending at the origin, `(N, K)`.
    pub historical_mean: Array2<f64>,
    /// Value at the origin slot, `(N, K)`.
    pub last_value: Array2<f64>,
}

/// Baselines for a forecast issued at slot `origin` (0-based, last observed slot).
pub fn naive_baselines(crimes: &CrimeTensor, origin: usize, window: usize) -> Result<BaselinePredictions> {
    if window == 0 || origin >= crimes.n_slots() || window > origin + 1 {
        return Err(Error::Bounds(format!(
            "baseline window {window} ending at slot {} does not fit in {} slots",
            origin + 1,
            crimes.n_slots()
        )));
    }
    let y = crimes.values();
    let span = y.slice(s![.., origin + 1 - window..=origin, ..]);
    Ok(BaselinePredictions {
        historical_mean: span.mean_axis(Axis(1)).expect("non-empty window"),
        last_value: y.slice(s![.., origin, ..]).to_owned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array3};
    use proptest::prelude::*;

    #[test]
    fn equal_weights_at_sigma_one() {
        let h = array![[2.0, 0.0], [0.0, 2.0]];
        assert_eq!(combine_weights(h.view(), 1.0).unwrap(), array![1.0, 1.0]);
    }

    #[test]
    fn two_slot_example() {
        // Rows: W^5 = 4, W^4 = 1; (0.5 * 4 + 0.25 * 1) / 0.75 = 3.
        let h = array![[4.0], [1.0]];
        assert_abs_diff_eq!(combine_weights(h.view(), 2.0).unwrap()[0], 3.0, epsilon = 1e-15);
    }

    #[test]
    fn large_sigma_keeps_most_recent() {
        let h = array![[1.0, -2.0], [5.0, 5.0], [9.0, 9.0]];
        let w = combine_weights(h.view(), 1e6).unwrap();
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(w[1], -2.0, epsilon = 1e-5);
    }

    #[test]
    fn empty_history_errors() {
        assert!(combine_weights(Array2::<f64>::zeros((0, 2)).view(), 2.0).is_err());
        assert!(combine_weights(array![[1.0]].view(), 0.5).is_err());
    }

    #[test]
    fn constant_history_returns_one() {
        let history = Array2::from_elem((6, 2), 0.7);
        let x = Array2::from_shape_fn((6, 2), |(t, j)| (t + j) as f64 * 0.3 - 0.5);
        let y = Array1::from_shape_fn(6, |t| t as f64);
        let fit = estimate_sigma(history.view(), x.view(), y.view(), 3, 10.0).unwrap();
        assert_eq!(fit.sigma, 1.0);
    }

    #[test]
    fn single_lag_returns_one() {
        let history = Array2::from_shape_fn((5, 1), |(t, _)| t as f64);
        let x = Array2::ones((5, 1));
        let y = Array1::from_shape_fn(5, |t| t as f64 * 2.0);
        assert_eq!(estimate_sigma(history.view(), x.view(), y.view(), 1, 10.0).unwrap().sigma, 1.0);
    }

    #[test]
    fn insufficient_history() {
        let h = Array2::<f64>::zeros((3, 1));
        let y = Array1::zeros(3);
        let err = estimate_sigma(h.view(), h.view(), y.view(), 3, 10.0).unwrap_err();
        assert!(matches!(err, Error::InsufficientHistory { window: 3, available: 3 }));
    }

    #[test]
    fn recovers_planted_decay() {
        let sigma_true = 2.0;
        let mut history = Array2::zeros((12, 2));
        history.row_mut(0).assign(&array![1.0, -1.0]);
        history.row_mut(1).assign(&array![3.0, 0.5]);
        history.row_mut(2).assign(&array![-2.0, 2.0]);
        for t in 3..12 {
            let recent = history.slice(s![t - 3..t;-1, ..]).to_owned();
            history.row_mut(t).assign(&combine_weights(recent.view(), sigma_true).unwrap());
        }
        let x = Array2::from_shape_fn((12, 2), |(t, j)| ((t * 7 + j * 3) % 5) as f64 - 2.0);
        let y = Array1::from_shape_fn(12, |t| x.row(t).dot(&history.row(t)));
        let fit = estimate_sigma(history.view(), x.view(), y.view(), 3, 10.0).unwrap();
        assert!((fit.sigma - sigma_true).abs() < 2e-3, "{fit:?}");
    }

    fn tiny_state() -> (ModelState, FeatureTensor, CrimeTensor) {
        let mut state = ModelState::zeros(1, 5, 1, 1, 0);
        for t in 0..5 {
            state.p_mut(0, t)[0] = t as f64;
        }
        let features = FeatureTensor::new(Array3::ones((1, 5, 1)), 1).unwrap();
        let crimes = CrimeTensor::new(Array3::from_shape_fn((1, 5, 1), |(_, t, _)| t as f64)).unwrap();
        (state, features, crimes)
    }

    #[test]
    fn predict_zero_features() {
        let (state, features, crimes) = tiny_state();
        let table = ForecastTable::fit(&state, &features, &crimes, &ForecastOptions::default()).unwrap();
        assert_eq!(table.window, 4);
        let y = predict(&state, &table, Array2::zeros((1, 1)).view(), false).unwrap();
        assert_eq!(y[[0, 0]], 0.0);
    }

    #[test]
    fn predict_single_slot_window_uses_last_weights() {
        let (mut state, features, crimes) = tiny_state();
        state.q_mut(0, 4, 0)[0] = 0.5;
        let options = ForecastOptions { window: Some(1), ..Default::default() };
        let table = ForecastTable::fit(&state, &features, &crimes, &options).unwrap();
        let y = predict(&state, &table, array![[2.0]].view(), false).unwrap();
        assert_eq!(y[[0, 0]], 2.0 * 4.5);
    }

    #[test]
    fn predict_two_slot_example() {
        let mut state = ModelState::zeros(1, 5, 1, 1, 0);
        state.p_mut(0, 3)[0] = 1.0;
        state.p_mut(0, 4)[0] = 4.0;
        let table = ForecastTable {
            sigma: array![[2.0]],
            fit_loss: array![[0.0]],
            window: 2,
            sigma_max: 10.0,
            shared: false,
        };
        let y = predict(&state, &table, array![[1.0]].view(), false).unwrap();
        assert_abs_diff_eq!(y[[0, 0]], 3.0, epsilon = 1e-15);
        let clamped = predict(&state, &table, array![[-1.0]].view(), true).unwrap();
        assert_eq!(clamped[[0, 0]], 0.0);
    }

    #[test]
    fn multi_step_feeds_back_forecasts() {
        let mut state = ModelState::zeros(1, 4, 1, 1, 0);
        state.p_mut(0, 2)[0] = 1.0;
        state.p_mut(0, 3)[0] = 4.0;
        let table = ForecastTable { sigma: array![[2.0]], fit_loss: array![[0.0]], window: 2, sigma_max: 10.0, shared: false };
        // Step 1 gives 3; step 2 combines (3, 4): (0.5 * 3 + 0.25 * 4) / 0.75.
        let w = forecast_weights_ahead(&state, &table, 2).unwrap();
        assert_abs_diff_eq!(w[[0, 0, 0]], 2.5 / 0.75, epsilon = 1e-14);
        assert!(forecast_weights_ahead(&state, &table, 0).is_err());
    }

    #[test]
    fn window_longer_than_history() {
        let state = ModelState::zeros(1, 2, 1, 1, 0);
        let table = ForecastTable { sigma: array![[1.0]], fit_loss: array![[0.0]], window: 3, sigma_max: 10.0, shared: false };
        assert!(predict(&state, &table, array![[1.0]].view(), false).is_err());
    }

    #[test]
    fn shared_sigma_mode() {
        let (state, features, crimes) = tiny_state();
        let options = ForecastOptions { shared_sigma: true, window: Some(2), ..Default::default() };
        let table = ForecastTable::fit(&state, &features, &crimes, &options).unwrap();
        assert!(table.shared);
        assert!(table.sigma.iter().all(|&s| s == table.sigma[[0, 0]]));
    }

    #[test]
    fn baselines() {
        let constant = CrimeTensor::new(Array3::from_elem((2, 4, 1), 3.0)).unwrap();
        let b = naive_baselines(&constant, 3, 2).unwrap();
        assert!(b.historical_mean.iter().chain(b.last_value.iter()).all(|&v| v == 3.0));

        let ramp = CrimeTensor::new(Array3::from_shape_fn((1, 6, 1), |(_, t, _)| (t + 1) as f64)).unwrap();
        for origin in 0..5 {
            let b = naive_baselines(&ramp, origin, 1).unwrap();
            assert_eq!(ramp.get(0, origin + 1, 0) - b.last_value[[0, 0]], 1.0);
        }

        let pair = CrimeTensor::new(Array3::from_shape_vec((1, 2, 1), vec![1.0, 3.0]).unwrap()).unwrap();
        assert_eq!(naive_baselines(&pair, 1, 2).unwrap().historical_mean[[0, 0]], 2.0);
        assert!(naive_baselines(&pair, 0, 2).is_err());
    }

    proptest! {
        #[test]
        fn coefficients_are_convex(window in 1usize..12, sigma in 1.0f64..50.0) {
            let c = decay_coefficients(window, sigma);
            prop_assert!(c.iter().all(|&v| v > 0.0));
            prop_assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn most_recent_weight_grows_with_sigma(window in 2usize..10, a in 1.0f64..20.0, b in 1.0f64..20.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(decay_coefficients(window, hi)[0] >= decay_coefficients(window, lo)[0] - 1e-15);
        }

        #[test]
        fn search_matches_dense_grid(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (slots, m, window) = (10, 3, 3);
            let history = Array2::from_shape_fn((slots, m), |_| rng.random_range(-1.0..1.0));
            let x = Array2::from_shape_fn((slots, m), |_| rng.random_range(-1.0..1.0));
            let y = Array1::from_shape_fn(slots, |_| rng.random_range(-1.0..1.0));
            let samples = DecaySamples::new(history.view(), x.view(), y.view(), window).unwrap();
            let fit = estimate_sigma(history.view(), x.view(), y.view(), window, 10.0).unwrap();
            let grid_best = (0..1000).map(|i| samples.loss(1.0 + 9.0 * i as f64 / 999.0)).fold(f64::INFINITY, f64::min);
            prop_assert!(fit.loss <= grid_best + 1e-6, "search {} vs grid {}", fit.loss, grid_best);
        }

        #[test]
        fn predict_is_linear_in_features(seed in any::<u64>(), scale in -3.0f64..3.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let state = ModelState::random(2, 4, 2, 3, 2, seed);
            let table = ForecastTable {
                sigma: Array2::from_shape_fn((2, 2), |_| rng.random_range(1.0..5.0)),
                fit_loss: Array2::zeros((2, 2)),
                window: 3,
                sigma_max: 10.0,
                shared: false,
            };
            let a = Array2::from_shape_fn((2, 3), |_| rng.random_range(-1.0..1.0));
            let b = Array2::from_shape_fn((2, 3), |_| rng.random_range(-1.0..1.0));
            let combo = &a * scale + &b;
            let lhs = predict(&state, &table, combo.view(), false).unwrap();
            let rhs = predict(&state, &table, a.view(), false).unwrap() * scale + predict(&state, &table, b.view(), false).unwrap();
            for (l, r) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((l - r).abs() < 1e-12);
            }
        }
    }
}
