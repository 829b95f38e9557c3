use ndarray::{s, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::objective::Problem;
use super::omega::update_omega;
use super::prox::soft_threshold;
use super::state::{ModelState, SHARED};
use super::{Hyperparams, DIVERGENCE_FACTOR, MAX_ETA_HALVINGS};
use crate::dataset::Dataset;
use crate::error::{Block, Error, Result};

/// Frobenius norms summed over blocks, one per constraint family.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `P A - C`
    pub temporal_shared: f64,
    /// `Q A - D`
    pub temporal_specific: f64,
    /// `P B - E`
    pub spatial_shared: f64,
    /// `Q B - F`
    pub spatial_specific: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.temporal_shared.max(self.temporal_specific).max(self.spatial_shared).max(self.spatial_specific)
    }

    fn add(&mut self, temporal: bool, field: usize, value: f64) {
        let slot = match (temporal, field == SHARED) {
            (true, true) => &mut self.temporal_shared,
            (true, false) => &mut self.temporal_specific,
            (false, true) => &mut self.spatial_shared,
            (false, false) => &mut self.spatial_specific,
        };
        *slot += value;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// `L_rho` after the step.
    pub objective: f64,
    /// `L_rho` after the `P`, `Q`, `Omega` sweep and before the auxiliary and dual updates.
    pub sweep_objective: f64,
    /// Constraint violations after the step.
    pub primal: Residuals,
    /// Norm of the change in the scaled duals `S, U, V, Z`.
    pub dual_change: Residuals,
    /// `rho` times the norm of the change in `C, D, E, F`.
    pub aux_change: Residuals,
    /// Number of `Omega` updates that fell back to the identity.
    pub degenerate_omegas: usize,
    /// Step size used.
    pub eta: f64,
}

/// One pass of the ADMM iteration, in place.
///
/// Order: for each region `n` and slot `t` (ascending), a gradient step on
/// `P_n^t`, then on each `Q_n^t(k)`, then the closed-form `Omega_n^t`. The
/// sweep reads values already updated in this pass. Afterwards the temporal
/// auxiliaries and duals per region, then the spatial ones per slot.
pub fn admm_step(problem: &Problem<'_>, state: &mut ModelState, eta: f64) -> Result<StepReport> {
    problem.check_state(state)?;
    let hp = problem.hyperparams();
    if !(hp.rho > 0.0) {
        return Err(Error::Config(format!("rho must be > 0 for ADMM steps, got {}", hp.rho)));
    }
    let (regions, slots, types, _) = problem.dims();
    let mut degenerate = 0;

    for n in 0..regions {
        for t in 0..slots {
            let g = problem.grad_p_unchecked(state, n, t);
            state.p_mut(n, t).scaled_add(-eta, &g);
            let inv = if hp.alpha != 0.0 { Some(problem.omega_inverse(state, n, t)?) } else { None };
            for k in 0..types {
                let g = problem.grad_q_unchecked(state, n, t, k, inv.as_ref());
                state.q_mut(n, t, k).scaled_add(-eta, &g);
            }
            let update = update_omega(state.q_matrix(n, t)).map_err(|_| Error::Numeric {
                block: Block::new(Some(n), Some(t), None),
                message: "non-finite Q in covariance update".into(),
            })?;
            degenerate += usize::from(update.degenerate);
            state.omega_mut(n, t).assign(&update.omega);
        }
    }

    let sweep_objective = problem.objective(state)?;
    let kappa = 1.0 / hp.rho;
    let mut primal = Residuals::default();
    let mut dual_change = Residuals::default();
    let mut aux_change = Residuals::default();

    for n in 0..regions {
        for field in 0..=types {
            let prod = problem.temporal_product(state, n, field);
            let aux = state.temporal_aux.slice_mut(s![n, field, .., ..]);
            let dual = state.temporal_dual.slice_mut(s![n, field, .., ..]);
            let (p, d, a) = proximal_update(&prod, aux, dual, kappa);
            primal.add(true, field, p);
            dual_change.add(true, field, d);
            aux_change.add(true, field, hp.rho * a);
        }
    }
    for t in 0..slots {
        for field in 0..=types {
            let prod = problem.spatial_product(state, t, field);
            let aux = state.spatial_aux.slice_mut(s![t, field, .., ..]);
            let dual = state.spatial_dual.slice_mut(s![t, field, .., ..]);
            let (p, d, a) = proximal_update(&prod, aux, dual, kappa);
            primal.add(false, field, p);
            dual_change.add(false, field, d);
            aux_change.add(false, field, hp.rho * a);
        }
    }

    let objective = problem.objective(state)?;
    Ok(StepReport { objective, sweep_objective, primal, dual_change, aux_change, degenerate_omegas: degenerate, eta })
}

/// `aux <- S_kappa(prod + dual)`, `dual <- dual + prod - aux`.
///
/// Returns `(|prod - aux_new|, |dual_new - dual_old|, |aux_new - aux_old|)`.
fn proximal_update(
    prod: &Array2<f64>,
    mut aux: ndarray::ArrayViewMut2<'_, f64>,
    mut dual: ndarray::ArrayViewMut2<'_, f64>,
    kappa: f64,
) -> (f64, f64, f64) {
    let (mut primal, mut dual_sq, mut aux_sq) = (0.0, 0.0, 0.0);
    Zip::from(prod).and(&mut aux).and(&mut dual).for_each(|&p, c, u| {
        let c_new = soft_threshold(p + *u, kappa);
        let u_new = *u + p - c_new;
        primal += (p - c_new) * (p - c_new);
        dual_sq += (u_new - *u) * (u_new - *u);
        aux_sq += (c_new - *c) * (c_new - *c);
        *c = c_new;
        *u = u_new;
    });
    (primal.sqrt(), dual_sq.sqrt(), aux_sq.sqrt())
}

/// Drives repeated ADMM steps with step-size halving and a divergence guard.
#[derive(Debug, Clone)]
pub struct Trainer<'p, 'a> {
    problem: &'p Problem<'a>,
    eta: f64,
    halvings: u32,
    initial_objective: f64,
    last_objective: f64,
}

impl<'p, 'a> Trainer<'p, 'a> {
    pub fn new(problem: &'p Problem<'a>, state: &ModelState) -> Result<Self> {
        let initial_objective = problem.objective(state)?;
        Ok(Self {
            problem,
            eta: problem.hyperparams().eta,
            halvings: 0,
            initial_objective,
            last_objective: initial_objective,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn halvings(&self) -> u32 {
        self.halvings
    }

    pub fn initial_objective(&self) -> f64 {
        self.initial_objective
    }

    /// Runs one step. The step size is halved (at most [`MAX_ETA_HALVINGS`]
    /// times) whenever the gradient sweep raises `L_rho` above its value at
    /// the end of the previous step. Dual ascent can raise `L_rho` on its own,
    /// so the comparison is made before the auxiliary and dual updates.
    pub fn step(&mut self, state: &mut ModelState) -> Result<StepReport> {
        let report = admm_step(self.problem, state, self.eta)?;
        let limit = DIVERGENCE_FACTOR * self.initial_objective.abs().max(f64::MIN_POSITIVE);
        if report.objective > limit {
            return Err(Error::Divergence { objective: report.objective, initial: self.initial_objective });
        }
        if report.sweep_objective > self.last_objective && self.halvings < MAX_ETA_HALVINGS {
            self.eta *= 0.5;
            self.halvings += 1;
        }
        self.last_objective = report.objective;
        Ok(report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub seed: u64,
    pub initial_objective: f64,
    pub iterations: Vec<StepReport>,
    pub stop_reason: StopReason,
    pub final_eta: f64,
    pub eta_halvings: u32,
    pub training_rmse: f64,
}

impl FitReport {
    pub fn final_step(&self) -> Option<&StepReport> {
        self.iterations.last()
    }
}

/// Trains from a seeded random start until the largest primal residual and
/// the relative objective change both drop below `tol`, or `max_iters`.
pub fn fit(data: &Dataset, hp: &Hyperparams, seed: u64) -> Result<(ModelState, FitReport)> {
    hp.validate()?;
    if data.n_slots() < 2 {
        return Err(Error::InvalidDimension(format!("training needs T >= 2, got {}", data.n_slots())));
    }
    let problem = Problem::new(data, hp.clone())?;
    let mut state = problem.random_state(seed);
    let mut trainer = Trainer::new(&problem, &state)?;
    let mut previous = trainer.initial_objective();
    let mut iterations = Vec::with_capacity(hp.max_iters);
    let mut stop_reason = StopReason::MaxIterations;

    for _ in 0..hp.max_iters {
        let report = trainer.step(&mut state)?;
        let relative = (report.objective - previous).abs() / previous.abs().max(1e-12);
        previous = report.objective;
        let done = report.primal.max() < hp.tol && relative < hp.tol;
        iterations.push(report);
        if done {
            stop_reason = StopReason::Converged;
            break;
        }
    }

    let report = FitReport {
        seed,
        initial_objective: trainer.initial_objective(),
        iterations,
        stop_reason,
        final_eta: trainer.eta(),
        eta_halvings: trainer.halvings(),
        training_rmse: problem.training_rmse(&state),
    };
    Ok((state, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensors::{CrimeTensor, FeatureTensor, RegionGrid};
    use ndarray::Array3;

    fn zero_data() -> Dataset {
        Dataset::new(
            CrimeTensor::zeros(2, 3, 2).unwrap(),
            FeatureTensor::new(Array3::from_elem((2, 3, 2), 0.3), 1).unwrap(),
            RegionGrid::new(vec![[0.0, 0.0], [1.0, 0.0]], None).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_problem_is_a_fixed_point() {
        let data = zero_data();
        let problem = Problem::new(&data, Hyperparams { alpha: 1.0, ..Default::default() }).unwrap();
        let mut state = problem.zero_state();
        let before = state.clone();
        let report = admm_step(&problem, &mut state, 1e-2).unwrap();
        // Q = 0 sends every Omega to the identity fallback.
        assert_eq!(report.degenerate_omegas, 2 * 3);
        assert_eq!(state, before);
        assert_eq!(report.objective, 0.0);
        assert_eq!(report.primal.max(), 0.0);
    }

    #[test]
    fn dual_update_uses_post_update_values() {
        let data = zero_data();
        let problem = Problem::new(&data, Hyperparams::default()).unwrap();
        let mut state = problem.random_state(3);
        let before = state.clone();
        admm_step(&problem, &mut state, 1e-2).unwrap();
        for n in 0..2 {
            let pa = problem.temporal_product(&state, n, SHARED);
            let expected = &before.s(n) + &pa - &state.c(n);
            for (a, b) in expected.iter().zip(state.s(n).iter()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_zero_rho() {
        let data = zero_data();
        let problem = Problem::new(&data, Hyperparams { rho: 0.0, ..Default::default() }).unwrap();
        let mut state = problem.zero_state();
        assert!(matches!(admm_step(&problem, &mut state, 1e-3), Err(Error::Config(_))));
    }

    #[test]
    fn huge_step_trips_divergence_guard() {
        let mut data = zero_data();
        data.crimes = CrimeTensor::new(Array3::from_elem((2, 3, 2), 1.0)).unwrap();
        let hp = Hyperparams { eta: 50.0, ..Default::default() };
        let err = fit(&data, &hp, 1).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn fit_requires_two_slots() {
        let data = Dataset::new(
            CrimeTensor::zeros(1, 1, 1).unwrap(),
            FeatureTensor::new(Array3::zeros((1, 1, 1)), 1).unwrap(),
            RegionGrid::new(vec![[0.0, 0.0]], None).unwrap(),
        )
        .unwrap();
        assert!(matches!(fit(&data, &Hyperparams::default(), 0), Err(Error::InvalidDimension(_))));
    }
}
