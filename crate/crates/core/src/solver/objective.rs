use ndarray::{s, Array1, Array2, Array3, Zip};
use serde::{Deserialize, Serialize};

use super::omega::regularized_inverse;
use super::state::{specific, ModelState, SHARED};
use super::Hyperparams;
use crate::dataset::Dataset;
use crate::error::{Block, Error, Result};
use crate::tensors::{DifferenceOperator, OperatorKind};

/// The individual parts of the augmented objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    /// Squared regression loss.
    pub loss: f64,
    /// `alpha * sum tr(Q (Omega + eps I)^-1 Q^T)`.
    pub cross_type: f64,
    /// L1 norms of `C, D, E, F`.
    pub l1: f64,
    /// `rho / 2` times the squared constraint residuals including duals.
    pub penalty: f64,
    /// `theta * (|P|^2 + |Q|^2)`.
    pub ridge: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.loss + self.cross_type + self.l1 + self.penalty + self.ridge
    }
}

/// A dataset paired with hyperparameters and the difference operators they induce.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    data: &'a Dataset,
    hp: Hyperparams,
    temporal: DifferenceOperator,
    spatial: DifferenceOperator,
}

impl<'a> Problem<'a> {
    pub fn new(data: &'a Dataset, hp: Hyperparams) -> Result<Self> {
        for (name, v) in [("alpha", hp.alpha), ("beta", hp.beta), ("gamma", hp.gamma), ("theta", hp.theta), ("rho", hp.rho)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(hp.omega_ridge.is_finite() && hp.omega_ridge > 0.0) {
            return Err(Error::Config(format!("omega_ridge must be > 0, got {}", hp.omega_ridge)));
        }
        let temporal = if data.n_slots() >= 2 {
            DifferenceOperator::temporal(data.n_slots(), hp.beta)?
        } else {
            DifferenceOperator::temporal_single_slot(hp.beta)
        };
        let spatial = if hp.disable_spatial {
            DifferenceOperator::spatial_disabled(data.n_regions(), hp.gamma)
        } else {
            DifferenceOperator::spatial(&data.grid, hp.gamma)?
        };
        Ok(Self { data, hp, temporal, spatial })
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn temporal(&self) -> &DifferenceOperator {
        &self.temporal
    }

    pub fn spatial(&self) -> &DifferenceOperator {
        &self.spatial
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.data.n_regions(), self.data.n_slots(), self.data.n_types(), self.data.n_features())
    }

    pub fn zero_state(&self) -> ModelState {
        let (n, t, k, m) = self.dims();
        ModelState::zeros(n, t, k, m, self.spatial.n_active())
    }

    pub fn random_state(&self, seed: u64) -> ModelState {
        let (n, t, k, m) = self.dims();
        ModelState::random(n, t, k, m, self.spatial.n_active(), seed)
    }

    pub fn check_state(&self, state: &ModelState) -> Result<()> {
        let (n, t, k, m) = self.dims();
        state.check_shape(n, t, k, m, self.spatial.n_active())
    }

    /// `W_n A` for field `f` (0 = P, k+1 = Q(k)), one row per column of `A`.
    pub(crate) fn temporal_product(&self, state: &ModelState, n: usize, field: usize) -> Array2<f64> {
        self.temporal.apply(state.weights.slice(s![n, .., field, ..]))
    }

    /// `W^t B` for field `f`, one row per active column of `B`.
    pub(crate) fn spatial_product(&self, state: &ModelState, t: usize, field: usize) -> Array2<f64> {
        self.spatial.apply(state.weights.slice(s![.., t, field, ..]))
    }

    /// Copy of `state` with auxiliaries set to the constrained products and
    /// zero duals. Its augmented objective equals the un-augmented one.
    pub fn consistent(&self, state: &ModelState) -> ModelState {
        let mut out = state.clone();
        let (regions, slots, types, _) = self.dims();
        for field in 0..=types {
            for n in 0..regions {
                let prod = self.temporal_product(state, n, field);
                out.temporal_aux.slice_mut(s![n, field, .., ..]).assign(&prod);
            }
            for t in 0..slots {
                let prod = self.spatial_product(state, t, field);
                out.spatial_aux.slice_mut(s![t, field, .., ..]).assign(&prod);
            }
        }
        out.temporal_dual.fill(0.0);
        out.spatial_dual.fill(0.0);
        out
    }

    /// Augmented Lagrangian `L_rho`.
    pub fn objective(&self, state: &ModelState) -> Result<f64> {
        Ok(self.terms(state)?.total())
    }

    /// Un-augmented objective: loss, covariance penalty, L1 of the exact
    /// differences, and the optional ridge.
    pub fn base_objective(&self, state: &ModelState) -> Result<f64> {
        self.objective(&self.consistent(state))
    }

    pub fn terms(&self, state: &ModelState) -> Result<ObjectiveTerms> {
        self.check_state(state)?;
        let (regions, slots, types, _) = self.dims();
        let y = self.data.crimes.values();
        let mut terms = ObjectiveTerms::default();

        for n in 0..regions {
            for t in 0..slots {
                let x = self.data.features.get(n, t);
                let xp = x.dot(&state.p(n, t));
                for k in 0..types {
                    let r = xp + x.dot(&state.q(n, t, k)) - y[[n, t, k]];
                    if !r.is_finite() {
                        return Err(numeric(Some(n), Some(t), Some(k), "non-finite residual"));
                    }
                    terms.loss += r * r;
                }
                if self.hp.alpha != 0.0 {
                    let inv = self.omega_inverse(state, n, t)?;
                    let q = state.q_matrix(n, t);
                    let tr = (&q.t().dot(&inv) * &q.t()).sum();
                    if !tr.is_finite() {
                        return Err(numeric(Some(n), Some(t), None, "non-finite covariance trace"));
                    }
                    terms.cross_type += self.hp.alpha * tr;
                }
            }
        }

        let half_rho = 0.5 * self.hp.rho;
        for field in 0..=types {
            let crime_type = field.checked_sub(1);
            for n in 0..regions {
                let prod = self.temporal_product(state, n, field);
                let aux = state.temporal_aux.slice(s![n, field, .., ..]);
                let dual = state.temporal_dual.slice(s![n, field, .., ..]);
                let (l1, pen) = split_terms(&prod, aux, dual);
                if !(l1.is_finite() && pen.is_finite()) {
                    return Err(numeric(Some(n), None, crime_type, "non-finite temporal penalty"));
                }
                terms.l1 += l1;
                terms.penalty += half_rho * pen;
            }
            for t in 0..slots {
                let prod = self.spatial_product(state, t, field);
                let aux = state.spatial_aux.slice(s![t, field, .., ..]);
                let dual = state.spatial_dual.slice(s![t, field, .., ..]);
                let (l1, pen) = split_terms(&prod, aux, dual);
                if !(l1.is_finite() && pen.is_finite()) {
                    return Err(numeric(None, Some(t), crime_type, "non-finite spatial penalty"));
                }
                terms.l1 += l1;
                terms.penalty += half_rho * pen;
            }
        }

        if self.hp.theta != 0.0 {
            terms.ridge = self.hp.theta * state.weights.iter().map(|v| v * v).sum::<f64>();
        }
        Ok(terms)
    }

    pub(crate) fn omega_inverse(&self, state: &ModelState, n: usize, t: usize) -> Result<Array2<f64>> {
        regularized_inverse(state.omega(n, t), self.hp.omega_ridge)
            .ok_or_else(|| numeric(Some(n), Some(t), None, "Omega + ridge is not positive definite"))
    }

    fn check_block(&self, n: usize, t: usize, k: Option<usize>) -> Result<()> {
        let (regions, slots, types, _) = self.dims();
        if n >= regions || t >= slots || k.is_some_and(|k| k >= types) {
            return Err(Error::Bounds(format!(
                "block (n={}, t={}{}) outside N={regions}, T={slots}, K={types}",
                n + 1,
                t + 1,
                k.map(|k| format!(", k={}", k + 1)).unwrap_or_default()
            )));
        }
        Ok(())
    }

    /// Gradient of `L_rho` with respect to `P_n^t` (0-based indices).
    pub fn grad_p(&self, state: &ModelState, n: usize, t: usize) -> Result<Array1<f64>> {
        self.check_block(n, t, None)?;
        self.check_state(state)?;
        let g = self.grad_p_unchecked(state, n, t);
        finite_or(g, n, t, None)
    }

    pub(crate) fn grad_p_unchecked(&self, state: &ModelState, n: usize, t: usize) -> Array1<f64> {
        let x = self.data.features.get(n, t);
        let y = self.data.crimes.values();
        let xp = x.dot(&state.p(n, t));
        let residual_sum: f64 =
            (0..self.data.n_types()).map(|k| xp + x.dot(&state.q(n, t, k)) - y[[n, t, k]]).sum();
        let mut g = &x * (2.0 * residual_sum);
        self.add_penalty_gradient(state, n, t, SHARED, &mut g);
        if self.hp.theta != 0.0 {
            g.scaled_add(2.0 * self.hp.theta, &state.p(n, t));
        }
        g
    }

    /// Gradient of `L_rho` with respect to `Q_n^t(k)` (0-based indices).
    pub fn grad_q(&self, state: &ModelState, n: usize, t: usize, k: usize) -> Result<Array1<f64>> {
        self.check_block(n, t, Some(k))?;
        self.check_state(state)?;
        let inv = if self.hp.alpha != 0.0 { Some(self.omega_inverse(state, n, t)?) } else { None };
        let g = self.grad_q_unchecked(state, n, t, k, inv.as_ref());
        finite_or(g, n, t, Some(k))
    }

    /// `omega_inv` must be `Some` whenever `alpha != 0`.
    pub(crate) fn grad_q_unchecked(
        &self,
        state: &ModelState,
        n: usize,
        t: usize,
        k: usize,
        omega_inv: Option<&Array2<f64>>,
    ) -> Array1<f64> {
        let x = self.data.features.get(n, t);
        let q = state.q(n, t, k);
        let r = x.dot(&state.p(n, t)) + x.dot(&q) - self.data.crimes.get(n, t, k);
        let mut g = &x * (2.0 * r);
        if let (true, Some(omega_inv)) = (self.hp.alpha != 0.0, omega_inv) {
            // d/dQ_k tr(Q Omega^-1 Q^T) = 2 (Q Omega^-1)_k for symmetric Omega.
            let q_all = state.q_matrix(n, t);
            g.scaled_add(2.0 * self.hp.alpha, &q_all.t().dot(&omega_inv.column(k)));
        }
        self.add_penalty_gradient(state, n, t, specific(k), &mut g);
        if self.hp.theta != 0.0 {
            g.scaled_add(2.0 * self.hp.theta, &q);
        }
        g
    }

    /// Adds `rho (W A - aux + dual) A_t^T + rho (W B - aux + dual) B_n^T` for one field.
    fn add_penalty_gradient(&self, state: &ModelState, n: usize, t: usize, field: usize, g: &mut Array1<f64>) {
        let rho = self.hp.rho;
        if rho == 0.0 {
            return;
        }
        for (op, row) in [(&self.temporal, t), (&self.spatial, n)] {
            for &(ci, coef) in op.row(row) {
                let col = op.active_columns()[ci];
                let (plus, minus, aux, dual) = match op.kind() {
                    OperatorKind::Temporal => (
                        state.weights.slice(s![n, col.plus, field, ..]),
                        state.weights.slice(s![n, col.minus, field, ..]),
                        state.temporal_aux.slice(s![n, field, ci, ..]),
                        state.temporal_dual.slice(s![n, field, ci, ..]),
                    ),
                    OperatorKind::Spatial => (
                        state.weights.slice(s![col.plus, t, field, ..]),
                        state.weights.slice(s![col.minus, t, field, ..]),
                        state.spatial_aux.slice(s![t, field, ci, ..]),
                        state.spatial_dual.slice(s![t, field, ci, ..]),
                    ),
                };
                let scale = rho * coef;
                Zip::from(&mut *g).and(plus).and(minus).and(aux).and(dual).for_each(|g, &p, &m, &a, &d| {
                    *g += scale * (col.weight * (p - m) - a + d);
                });
            }
        }
    }

    /// In-sample predictions `X_n^t (P_n^t + Q_n^t(k))`, shape `(N, T, K)`.
    pub fn fitted(&self, state: &ModelState) -> Array3<f64> {
        let (regions, slots, types, _) = self.dims();
        Array3::from_shape_fn((regions, slots, types), |(n, t, k)| {
            let x = self.data.features.get(n, t);
            x.dot(&state.p(n, t)) + x.dot(&state.q(n, t, k))
        })
    }

    /// Root mean squared in-sample error over all cells.
    pub fn training_rmse(&self, state: &ModelState) -> f64 {
        let fitted = self.fitted(state);
        let y = self.data.crimes.values();
        let sse: f64 = Zip::from(&fitted).and(y).fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b));
        (sse / y.len() as f64).sqrt()
    }
}

/// `(|aux|_1, |prod - aux + dual|_F^2)`.
fn split_terms(prod: &Array2<f64>, aux: ndarray::ArrayView2<'_, f64>, dual: ndarray::ArrayView2<'_, f64>) -> (f64, f64) {
    let l1 = aux.iter().map(|v| v.abs()).sum();
    let pen = Zip::from(prod).and(aux).and(dual).fold(0.0, |acc, &p, &a, &d| {
        let r = p - a + d;
        acc + r * r
    });
    (l1, pen)
}

fn numeric(n: Option<usize>, t: Option<usize>, k: Option<usize>, message: &str) -> Error {
    Error::Numeric { block: Block::new(n, t, k), message: message.into() }
}

fn finite_or(g: Array1<f64>, n: usize, t: usize, k: Option<usize>) -> Result<Array1<f64>> {
    if g.iter().all(|v| v.is_finite()) {
        Ok(g)
    } else {
        Err(numeric(Some(n), Some(t), k, "non-finite gradient"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensors::{CrimeTensor, FeatureTensor, RegionGrid};
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array3};

    fn single_cell(y: f64, x: [f64; 2]) -> Dataset {
        let crimes = CrimeTensor::new(Array3::from_elem((1, 1, 1), y)).unwrap();
        let features = FeatureTensor::new(Array3::from_shape_vec((1, 1, 2), x.to_vec()).unwrap(), 1).unwrap();
        Dataset::new(crimes, features, RegionGrid::new(vec![[0.0, 0.0]], None).unwrap()).unwrap()
    }

    fn hp(alpha: f64, rho: f64) -> Hyperparams {
        Hyperparams { alpha, rho, ..Default::default() }
    }

    #[test]
    fn all_zero_objective_vanishes() {
        let data = Dataset::new(
            CrimeTensor::zeros(2, 3, 2).unwrap(),
            FeatureTensor::new(Array3::from_elem((2, 3, 2), 0.7), 1).unwrap(),
            RegionGrid::new(vec![[0.0, 0.0], [1.0, 0.0]], None).unwrap(),
        )
        .unwrap();
        let problem = Problem::new(&data, hp(1.0, 1.0)).unwrap();
        assert_eq!(problem.objective(&problem.zero_state()).unwrap(), 0.0);
    }

    #[test]
    fn single_cell_squared_loss() {
        let data = single_cell(2.0, [1.0, 0.0]);
        let problem = Problem::new(&data, hp(0.0, 0.0)).unwrap();
        let mut st = problem.zero_state();
        st.p_mut(0, 0).assign(&array![1.0, 0.0]);
        st.q_mut(0, 0, 0).assign(&array![0.5, 0.0]);
        assert_abs_diff_eq!(problem.objective(&st).unwrap(), 0.25, epsilon = 1e-15);

        let problem = Problem::new(&data, hp(1.0, 0.0)).unwrap();
        let terms = problem.terms(&st).unwrap();
        assert_abs_diff_eq!(terms.cross_type, 0.25 / (1.0 + 1e-6), epsilon = 1e-15);
        assert_abs_diff_eq!(terms.total(), 0.5, epsilon = 1e-6);
    }

    #[test]
    fn single_cell_gradients() {
        let data = single_cell(2.0, [1.0, 0.0]);
        let problem = Problem::new(&data, hp(0.0, 0.0)).unwrap();
        let mut st = problem.zero_state();
        st.p_mut(0, 0).assign(&array![1.0, 0.0]);
        st.q_mut(0, 0, 0).assign(&array![0.5, 0.0]);
        assert_eq!(problem.grad_p(&st, 0, 0).unwrap(), array![-1.0, 0.0]);

        // Only the covariance term: zero features remove the loss gradient.
        let data = single_cell(0.0, [0.0, 0.0]);
        let problem = Problem::new(&data, Hyperparams { alpha: 2.0, omega_ridge: 1e-300, ..hp(2.0, 0.0) }).unwrap();
        let mut st = problem.zero_state();
        st.q_mut(0, 0, 0).assign(&array![0.5, 0.0]);
        let g = problem.grad_q(&st, 0, 0, 0).unwrap();
        assert_abs_diff_eq!(g[0], 2.0, epsilon = 1e-12);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn gradients_vanish_at_consistent_fit() {
        // Y equals the fitted values and auxiliaries match the products.
        let data = single_cell(0.0, [1.0, 2.0]);
        let problem = Problem::new(&data, hp(0.0, 1.0)).unwrap();
        let st = problem.consistent(&problem.zero_state());
        assert!(problem.grad_p(&st, 0, 0).unwrap().iter().all(|&v| v == 0.0));
        assert!(problem.grad_q(&st, 0, 0, 0).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn out_of_range_block() {
        let data = single_cell(0.0, [1.0, 2.0]);
        let problem = Problem::new(&data, hp(0.0, 1.0)).unwrap();
        let st = problem.zero_state();
        assert!(matches!(problem.grad_p(&st, 1, 0), Err(Error::Bounds(_))));
        assert!(matches!(problem.grad_q(&st, 0, 0, 1), Err(Error::Bounds(_))));
    }

    #[test]
    fn non_finite_state_names_block() {
        let data = single_cell(0.0, [1.0, 2.0]);
        let problem = Problem::new(&data, hp(0.0, 1.0)).unwrap();
        let mut st = problem.zero_state();
        st.p_mut(0, 0)[1] = f64::INFINITY;
        match problem.objective(&st) {
            Err(Error::Numeric { block, .. }) => assert_eq!(block, Block::new(Some(0), Some(0), Some(0))),
            other => panic!("unexpected {other:?}"),
        }
    }
}
