//! Crime and feature tensors, region geometry, and the sparse difference
//! operators that couple neighbouring time slots and nearby regions.
//!
//! Internal indices are 0-based. Anything user-facing (files, error
//! messages) is 1-based.

use ndarray::{Array2, Array3, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observed counts `Y`, stored as an `(N, T, K)` array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrimeTensor {
    values: Array3<f64>,
}

impl CrimeTensor {
    pub fn new(values: Array3<f64>) -> Result<Self> {
        let (n, t, k) = values.dim();
        if n == 0 || t == 0 || k == 0 {
            return Err(Error::InvalidDimension(format!("crime tensor shape ({n}, {t}, {k}) has an empty axis")));
        }
        if let Some(((n, t, k), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidDimension(format!(
                "crime value at region {}, slot {}, type {} is not finite ({v})",
                n + 1,
                t + 1,
                k + 1
            )));
        }
        Ok(Self { values })
    }

    pub fn zeros(regions: usize, slots: usize, types: usize) -> Result<Self> {
        Self::new(Array3::zeros((regions, slots, types)))
    }

    pub fn n_regions(&self) -> usize {
        self.values.dim().0
    }

    pub fn n_slots(&self) -> usize {
        self.values.dim().1
    }

    pub fn n_types(&self) -> usize {
        self.values.dim().2
    }

    pub fn get(&self, n: usize, t: usize, k: usize) -> f64 {
        self.values[[n, t, k]]
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn is_non_negative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    /// The `N x T` matrix `R^k` of counts for one crime type.
    pub fn type_slice(&self, k: usize) -> ArrayView2<'_, f64> {
        self.values.index_axis(Axis(2), k)
    }

    /// Slots `start..end` (0-based, half-open) as a new tensor.
    pub fn slots(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_slots() {
            return Err(Error::Bounds(format!("slot range {}..{} outside 1..={}", start + 1, end, self.n_slots())));
        }
        Ok(Self { values: self.values.slice(ndarray::s![.., start..end, ..]).to_owned() })
    }
}

/// Lagged feature vectors `X`, stored as an `(N, T, M)` array.
///
/// Cell `(n, t)` holds raw features observed in slot `t - lag`. Raw data
/// from the last `lag` slots produces features for slots beyond `T`; those
/// are kept in `lookahead` (shape `(N, L, M)` with `L <= lag`) so a model
/// trained on slots `1..=T` can forecast slot `T + lag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTensor {
    values: Array3<f64>,
    lookahead: Array3<f64>,
    lag: usize,
}

impl FeatureTensor {
    pub fn new(values: Array3<f64>, lag: usize) -> Result<Self> {
        let (n, _, m) = values.dim();
        Self::with_lookahead(values, Array3::zeros((n, 0, m)), lag)
    }

    pub fn with_lookahead(values: Array3<f64>, lookahead: Array3<f64>, lag: usize) -> Result<Self> {
        let (n, t, m) = values.dim();
        if n == 0 || t == 0 || m == 0 {
            return Err(Error::InvalidDimension(format!("feature tensor shape ({n}, {t}, {m}) has an empty axis")));
        }
        if lag == 0 {
            return Err(Error::InvalidDimension("feature lag must be at least 1".into()));
        }
        let (ln, ll, lm) = lookahead.dim();
        if ln != n || lm != m || ll > lag {
            return Err(Error::InvalidDimension(format!(
                "lookahead shape ({ln}, {ll}, {lm}) incompatible with features ({n}, {t}, {m}) and lag {lag}"
            )));
        }
        if values.iter().chain(lookahead.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDimension("feature tensor contains non-finite values".into()));
        }
        Ok(Self { values, lookahead, lag })
    }

    pub fn n_regions(&self) -> usize {
        self.values.dim().0
    }

    pub fn n_slots(&self) -> usize {
        self.values.dim().1
    }

    pub fn n_features(&self) -> usize {
        self.values.dim().2
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn lookahead(&self) -> &Array3<f64> {
        &self.lookahead
    }

    /// Number of slots past `T` with known features.
    pub fn lookahead_len(&self) -> usize {
        self.lookahead.dim().1
    }

    /// Feature vector `X_n^t`.
    pub fn get(&self, n: usize, t: usize) -> ArrayView1<'_, f64> {
        self.values.slice(ndarray::s![n, t, ..])
    }

    /// The `(N, M)` feature matrix of slot `t`, which may lie in the lookahead region.
    pub fn slot(&self, t: usize) -> Option<ArrayView2<'_, f64>> {
        let total = self.n_slots();
        if t < total {
            Some(self.values.index_axis(Axis(1), t))
        } else if t < total + self.lookahead_len() {
            Some(self.lookahead.index_axis(Axis(1), t - total))
        } else {
            None
        }
    }

    /// Slots `start..end` as a new tensor; later slots (up to `lag` of them)
    /// become its lookahead.
    pub fn slots(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_slots() {
            return Err(Error::Bounds(format!("slot range {}..{} outside 1..={}", start + 1, end, self.n_slots())));
        }
        let values = self.values.slice(ndarray::s![.., start..end, ..]).to_owned();
        let ahead_end = (end + self.lag).min(self.n_slots() + self.lookahead_len());
        let mut lookahead = Array3::zeros((self.n_regions(), ahead_end - end, self.n_features()));
        for (i, t) in (end..ahead_end).enumerate() {
            lookahead.index_axis_mut(Axis(1), i).assign(&self.slot(t).expect("slot within range"));
        }
        Self::with_lookahead(values, lookahead, self.lag)
    }
}

/// Region centroids in kilometres and the floor applied to pairwise distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionGrid {
    centroids: Vec<[f64; 2]>,
    d_min: f64,
}

impl RegionGrid {
    /// Builds a grid. Without an explicit floor, `d_min` is half the smallest
    /// spacing between two centroids (1.0 for a single region).
    pub fn new(centroids: Vec<[f64; 2]>, d_min: Option<f64>) -> Result<Self> {
        if centroids.is_empty() {
            return Err(Error::InvalidDimension("region grid needs at least one region".into()));
        }
        if centroids.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidDimension("region centroid is not finite".into()));
        }
        let d_min = match d_min {
            Some(d) if d.is_finite() && d >= 0.0 => d,
            Some(d) => return Err(Error::Config(format!("distance floor must be finite and non-negative, got {d}"))),
            None => {
                let mut smallest = f64::INFINITY;
                for i in 0..centroids.len() {
                    for j in i + 1..centroids.len() {
                        smallest = smallest.min(euclidean(centroids[i], centroids[j]));
                    }
                }
                if smallest.is_finite() { 0.5 * smallest } else { 1.0 }
            }
        };
        Ok(Self { centroids, d_min })
    }

    /// `side x side` regions with the given spacing, numbered row by row.
    pub fn square(side: usize, spacing_km: f64) -> Result<Self> {
        let centroids = (0..side * side)
            .map(|i| [(i % side) as f64 * spacing_km, (i / side) as f64 * spacing_km])
            .collect();
        Self::new(centroids, None)
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn centroids(&self) -> &[[f64; 2]] {
        &self.centroids
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    /// Unclamped Euclidean distance between two centroids.
    pub fn raw_distance(&self, i: usize, j: usize) -> f64 {
        euclidean(self.centroids[i], self.centroids[j])
    }

    /// `max(d(i, j), d_min)` for distinct regions, 0 on the diagonal.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        if i == j { 0.0 } else { self.raw_distance(i, j).max(self.d_min) }
    }
}

fn euclidean(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Temporal,
    Spatial,
}

/// A structurally non-empty column of a difference operator: `+weight` at
/// row `plus`, `-weight` at row `minus`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActiveColumn {
    pub col: usize,
    pub plus: usize,
    pub minus: usize,
    pub weight: f64,
}

/// Sparse `rows x cols` operator whose columns each hold a signed pair.
///
/// Temporal (`T x (T-1)`): column `t` is `+beta` at row `t`, `-beta` at row `t+1`.
/// Spatial (`N x N^2`): column `i*N + j` for `i != j` is `+d(i,j)^-gamma` at row
/// `i`, `-d(i,j)^-gamma` at row `j`. Diagonal pair columns are empty and are
/// not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceOperator {
    kind: OperatorKind,
    rows: usize,
    cols: usize,
    strength: f64,
    columns: Vec<ActiveColumn>,
    by_row: Vec<Vec<(usize, f64)>>,
}

impl DifferenceOperator {
    pub fn temporal(slots: usize, beta: f64) -> Result<Self> {
        if slots < 2 {
            return Err(Error::InvalidDimension(format!("temporal operator needs T >= 2, got {slots}")));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::Config(format!("temporal strength must be finite and non-negative, got {beta}")));
        }
        let columns = (0..slots - 1).map(|t| ActiveColumn { col: t, plus: t, minus: t + 1, weight: beta }).collect();
        Ok(Self::assemble(OperatorKind::Temporal, slots, slots - 1, beta, columns))
    }

    pub fn spatial(grid: &RegionGrid, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::Config(format!("spatial exponent must be finite and non-negative, got {gamma}")));
        }
        let n = grid.len();
        let mut columns = Vec::with_capacity(n * n.saturating_sub(1));
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let d = grid.distance(i, j);
                if d <= 0.0 {
                    return Err(Error::Singularity(i.min(j) + 1, i.max(j) + 1));
                }
                columns.push(ActiveColumn { col: i * n + j, plus: i, minus: j, weight: d.powf(-gamma) });
            }
        }
        Ok(Self::assemble(OperatorKind::Spatial, n, n * n, gamma, columns))
    }

    /// A `1 x 0` temporal operator: a single slot has no consecutive pairs.
    pub(crate) fn temporal_single_slot(beta: f64) -> Self {
        Self::assemble(OperatorKind::Temporal, 1, 0, beta, Vec::new())
    }

    /// An `N x N^2` spatial operator with no entries, equivalent to dropping
    /// the spatial penalty.
    pub fn spatial_disabled(regions: usize, gamma: f64) -> Self {
        Self::assemble(OperatorKind::Spatial, regions, regions * regions, gamma, Vec::new())
    }

    fn assemble(kind: OperatorKind, rows: usize, cols: usize, strength: f64, columns: Vec<ActiveColumn>) -> Self {
        let mut by_row = vec![Vec::new(); rows];
        for (idx, c) in columns.iter().enumerate() {
            by_row[c.plus].push((idx, c.weight));
            by_row[c.minus].push((idx, -c.weight));
        }
        Self { kind, rows, cols, strength, columns, by_row }
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn active_columns(&self) -> &[ActiveColumn] {
        &self.columns
    }

    pub fn n_active(&self) -> usize {
        self.columns.len()
    }

    /// `(active column index, coefficient)` pairs of one operator row.
    pub fn row(&self, r: usize) -> &[(usize, f64)] {
        &self.by_row[r]
    }

    /// Nonzero `(row, col, value)` triples, column-major.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        self.columns
            .iter()
            .filter(|c| c.weight != 0.0)
            .flat_map(|c| [(c.plus, c.col, c.weight), (c.minus, c.col, -c.weight)])
            .collect()
    }

    pub fn nnz(&self) -> usize {
        self.triplets().len()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for (r, c, v) in self.triplets() {
            out[[r, c]] = v;
        }
        out
    }

    /// Active columns of `W * Op`, where row `r` of `w` is the weight vector
    /// attached to operator row `r`. Output shape is `(n_active, M)`.
    pub fn apply(&self, w: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.columns.len(), w.ncols()));
        for (mut row, c) in out.outer_iter_mut().zip(&self.columns) {
            row.assign(&(&w.row(c.plus) - &w.row(c.minus)));
            row *= c.weight;
        }
        out
    }

    /// Expands active-column storage back to all `cols` columns (as rows).
    pub fn scatter(&self, active: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.cols, active.ncols()));
        for (row, c) in active.outer_iter().zip(&self.columns) {
            out.row_mut(c.col).assign(&row);
        }
        out
    }
}
