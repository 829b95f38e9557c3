use std::path::Path;

use ndarray::{s, Array1, Array2, Array4, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Hyperparams;
use crate::error::{Error, Result};
use crate::forecaster::ForecastTable;

/// Field index of the shared weights `P`; type `k` lives at `k + 1`.
pub(crate) const SHARED: usize = 0;

pub(crate) fn specific(k: usize) -> usize {
    k + 1
}

/// All trainable arrays.
///
/// `P` and the `Q(k)` are stored together as `K + 1` weight fields so the
/// fused-lasso machinery treats them uniformly; field 0 is `P`. The same
/// stacking applies to the auxiliaries (`C` with the `D(k)`, `E` with the
/// `F(k)`) and their duals (`S`/`U`, `V`/`Z`). Spatial auxiliaries keep only
/// the structurally active columns of `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    /// `(N, T, K+1, M)`.
    pub(crate) weights: Array4<f64>,
    /// `(N, T, K, K)`.
    pub(crate) omega: Array4<f64>,
    /// `(N, K+1, T-1, M)`: `C_n` then `D_n(k)`.
    pub(crate) temporal_aux: Array4<f64>,
    /// `(N, K+1, T-1, M)`: `S_n` then `U_n(k)`.
    pub(crate) temporal_dual: Array4<f64>,
    /// `(T, K+1, active, M)`: `E^t` then `F^t(k)`.
    pub(crate) spatial_aux: Array4<f64>,
    /// `(T, K+1, active, M)`: `V^t` then `Z^t(k)`.
    pub(crate) spatial_dual: Array4<f64>,
}

impl ModelState {
    /// Zero weights, auxiliaries and duals; every `Omega` is the identity.
    pub fn zeros(regions: usize, slots: usize, types: usize, features: usize, spatial_active: usize) -> Self {
        let fields = types + 1;
        let mut omega = Array4::zeros((regions, slots, types, types));
        for mut block in omega.outer_iter_mut() {
            for mut o in block.outer_iter_mut() {
                o.diag_mut().fill(1.0);
            }
        }
        Self {
            weights: Array4::zeros((regions, slots, fields, features)),
            omega,
            temporal_aux: Array4::zeros((regions, fields, slots - 1, features)),
            temporal_dual: Array4::zeros((regions, fields, slots - 1, features)),
            spatial_aux: Array4::zeros((slots, fields, spatial_active, features)),
            spatial_dual: Array4::zeros((slots, fields, spatial_active, features)),
        }
    }

    /// Uniform(-0.01, 0.01) draws for every array except `Omega = I`.
    ///
    /// Draw order is P, Q, C, D, E, F, S, U, V, Z, each in row-major order
    /// over its own indices.
    pub fn random(regions: usize, slots: usize, types: usize, features: usize, spatial_active: usize, seed: u64) -> Self {
        let mut state = Self::zeros(regions, slots, types, features, spatial_active);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |v: &mut f64| *v = rng.random_range(-0.01..0.01);
        let (w, ta, ts, sa, sd) = (
            &mut state.weights,
            &mut state.temporal_aux,
            &mut state.temporal_dual,
            &mut state.spatial_aux,
            &mut state.spatial_dual,
        );
        w.slice_mut(s![.., .., SHARED, ..]).iter_mut().for_each(&mut draw);
        w.slice_mut(s![.., .., 1.., ..]).iter_mut().for_each(&mut draw);
        ta.slice_mut(s![.., SHARED, .., ..]).iter_mut().for_each(&mut draw);
        ta.slice_mut(s![.., 1.., .., ..]).iter_mut().for_each(&mut draw);
        sa.slice_mut(s![.., SHARED, .., ..]).iter_mut().for_each(&mut draw);
        sa.slice_mut(s![.., 1.., .., ..]).iter_mut().for_each(&mut draw);
        ts.slice_mut(s![.., SHARED, .., ..]).iter_mut().for_each(&mut draw);
        ts.slice_mut(s![.., 1.., .., ..]).iter_mut().for_each(&mut draw);
        sd.slice_mut(s![.., SHARED, .., ..]).iter_mut().for_each(&mut draw);
        sd.slice_mut(s![.., 1.., .., ..]).iter_mut().for_each(&mut draw);
        state
    }

    pub fn n_regions(&self) -> usize {
        self.weights.dim().0
    }

    pub fn n_slots(&self) -> usize {
        self.weights.dim().1
    }

    pub fn n_types(&self) -> usize {
        self.weights.dim().2 - 1
    }

    pub fn n_features(&self) -> usize {
        self.weights.dim().3
    }

    pub fn n_spatial_active(&self) -> usize {
        self.spatial_aux.dim().2
    }

    /// `P_n^t`.
    pub fn p(&self, n: usize, t: usize) -> ArrayView1<'_, f64> {
        self.weights.slice(s![n, t, SHARED, ..])
    }

    pub fn p_mut(&mut self, n: usize, t: usize) -> ArrayViewMut1<'_, f64> {
        self.weights.slice_mut(s![n, t, SHARED, ..])
    }

    /// `Q_n^t(k)`.
    pub fn q(&self, n: usize, t: usize, k: usize) -> ArrayView1<'_, f64> {
        self.weights.slice(s![n, t, specific(k), ..])
    }

    pub fn q_mut(&mut self, n: usize, t: usize, k: usize) -> ArrayViewMut1<'_, f64> {
        self.weights.slice_mut(s![n, t, specific(k), ..])
    }

    /// `Q_n^t` with one row per crime type (`K x M`).
    pub fn q_matrix(&self, n: usize, t: usize) -> ArrayView2<'_, f64> {
        self.weights.slice(s![n, t, 1.., ..])
    }

    /// `W_n^t(k) = P_n^t + Q_n^t(k)`.
    pub fn combined(&self, n: usize, t: usize, k: usize) -> Array1<f64> {
        &self.p(n, t) + &self.q(n, t, k)
    }

    /// Combined weights of every slot for one (region, type), shape `(T, M)`.
    pub fn combined_history(&self, n: usize, k: usize) -> Array2<f64> {
        &self.weights.slice(s![n, .., SHARED, ..]) + &self.weights.slice(s![n, .., specific(k), ..])
    }

    pub fn omega(&self, n: usize, t: usize) -> ArrayView2<'_, f64> {
        self.omega.slice(s![n, t, .., ..])
    }

    pub fn omega_mut(&mut self, n: usize, t: usize) -> ArrayViewMut2<'_, f64> {
        self.omega.slice_mut(s![n, t, .., ..])
    }

    /// `C_n` with one row per active column of `A` (`(T-1) x M`).
    pub fn c(&self, n: usize) -> ArrayView2<'_, f64> {
        self.temporal_aux.slice(s![n, SHARED, .., ..])
    }

    pub fn d(&self, n: usize, k: usize) -> ArrayView2<'_, f64> {
        self.temporal_aux.slice(s![n, specific(k), .., ..])
    }

    /// `E^t` with one row per active column of `B`.
    pub fn e(&self, t: usize) -> ArrayView2<'_, f64> {
        self.spatial_aux.slice(s![t, SHARED, .., ..])
    }

    pub fn f(&self, t: usize, k: usize) -> ArrayView2<'_, f64> {
        self.spatial_aux.slice(s![t, specific(k), .., ..])
    }

    pub fn s(&self, n: usize) -> ArrayView2<'_, f64> {
        self.temporal_dual.slice(s![n, SHARED, .., ..])
    }

    pub fn u(&self, n: usize, k: usize) -> ArrayView2<'_, f64> {
        self.temporal_dual.slice(s![n, specific(k), .., ..])
    }

    pub fn v(&self, t: usize) -> ArrayView2<'_, f64> {
        self.spatial_dual.slice(s![t, SHARED, .., ..])
    }

    pub fn z(&self, t: usize, k: usize) -> ArrayView2<'_, f64> {
        self.spatial_dual.slice(s![t, specific(k), .., ..])
    }

    /// Mutable access to every array, in the order weights, omega, temporal
    /// auxiliaries, temporal duals, spatial auxiliaries, spatial duals.
    pub fn arrays_mut(&mut self) -> [&mut Array4<f64>; 6] {
        [
            &mut self.weights,
            &mut self.omega,
            &mut self.temporal_aux,
            &mut self.temporal_dual,
            &mut self.spatial_aux,
            &mut self.spatial_dual,
        ]
    }

    pub fn arrays(&self) -> [&Array4<f64>; 6] {
        [&self.weights, &self.omega, &self.temporal_aux, &self.temporal_dual, &self.spatial_aux, &self.spatial_dual]
    }

    pub fn is_finite(&self) -> bool {
        self.arrays().iter().all(|a| a.iter().all(|v| v.is_finite()))
    }

    pub(crate) fn check_shape(&self, regions: usize, slots: usize, types: usize, features: usize, active: usize) -> Result<()> {
        let expected = Self::zeros(regions, slots, types, features, active);
        for (name, (a, b)) in ["weights", "omega", "temporal_aux", "temporal_dual", "spatial_aux", "spatial_dual"]
            .iter()
            .zip(self.arrays().iter().zip(expected.arrays()))
        {
            if a.dim() != b.dim() {
                return Err(Error::InvalidDimension(format!("{name} has shape {:?}, expected {:?}", a.dim(), b.dim())));
            }
        }
        Ok(())
    }
}

pub const CHECKPOINT_FORMAT: &str = "crimecast-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub regions: usize,
    pub slots: usize,
    pub types: usize,
    pub features: usize,
    /// Feature lag the model was trained with.
    pub lag: usize,
    pub hyperparams: Hyperparams,
    pub state: ModelState,
    pub forecast: Option<ForecastTable>,
}

impl Checkpoint {
    pub fn new(state: ModelState, hyperparams: Hyperparams, lag: usize, forecast: Option<ForecastTable>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            regions: state.n_regions(),
            slots: state.n_slots(),
            types: state.n_types(),
            features: state.n_features(),
            lag,
            hyperparams,
            state,
            forecast,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Self = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format '{}'", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {} (expected {CHECKPOINT_VERSION})", ckpt.version)));
        }
        let active = ckpt.state.n_spatial_active();
        ckpt.state
            .check_shape(ckpt.regions, ckpt.slots, ckpt.types, ckpt.features, active)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_init_is_seeded_and_bounded() {
        let a = ModelState::random(2, 3, 2, 3, 2, 7);
        let b = ModelState::random(2, 3, 2, 3, 2, 7);
        let c = ModelState::random(2, 3, 2, 3, 2, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.weights.iter().all(|v| v.abs() < 0.01));
        assert_eq!(a.omega(1, 2), ndarray::Array2::<f64>::eye(2));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut state = ModelState::random(2, 3, 2, 3, 2, 11);
        state.p_mut(0, 0)[0] = 0.1 + 0.2;
        state.q_mut(1, 2, 1)[2] = 1e-300;
        let ckpt = Checkpoint::new(state, Hyperparams::default(), 1, None);
        let back = Checkpoint::from_json(&ckpt.to_json().unwrap()).unwrap();
        assert_eq!(back, ckpt);
        for (a, b) in back.state.arrays().iter().zip(ckpt.state.arrays()) {
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn checkpoint_rejects_other_versions() {
        let ckpt = Checkpoint::new(ModelState::zeros(1, 2, 1, 1, 0), Hyperparams::default(), 1, None);
        let text = ckpt.to_json().unwrap().replace("\"version\":1", "\"version\":99");
        assert!(matches!(Checkpoint::from_json(&text), Err(Error::Checkpoint(_))));
    }
}
