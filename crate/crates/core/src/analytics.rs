//! Exploratory correlation statistics over a crime tensor.

use ndarray::{s, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensors::{CrimeTensor, RegionGrid};

pub const DEFAULT_BIN_WIDTH_KM: f64 = 1.0;

/// One point of a difference curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Slot gap or distance-bin center.
    pub x: f64,
    pub mean_diff: f64,
    /// Number of absolute differences averaged.
    pub count: usize,
}

fn check_type(crimes: &CrimeTensor, k: usize) -> Result<()> {
    if k >= crimes.n_types() {
        return Err(Error::Bounds(format!("crime type {} of {}", k + 1, crimes.n_types())));
    }
    Ok(())
}

/// Mean `|Y[n,t,k] - Y[n,t+dt,k]|` over regions and valid slots, for `dt = 1..=max_gap`.
pub fn temporal_diff_curve(crimes: &CrimeTensor, k: usize, max_gap: usize) -> Result<Vec<CurvePoint>> {
    check_type(crimes, k)?;
    let slots = crimes.n_slots();
    if max_gap == 0 || max_gap >= slots {
        return Err(Error::Bounds(format!("slot gap {max_gap} must lie in [1, {}]", slots.saturating_sub(1))));
    }
    let y = crimes.type_slice(k);
    Ok((1..=max_gap)
        .map(|gap| {
            let early = y.slice(s![.., ..slots - gap]);
            let late = y.slice(s![.., gap..]);
            let count = early.len();
            let total: f64 = early.iter().zip(late.iter()).map(|(a, b)| (a - b).abs()).sum();
            CurvePoint { x: gap as f64, mean_diff: total / count as f64, count }
        })
        .collect())
}

/// Mean per-slot `|Y[i,t,k] - Y[j,t,k]|` over unordered region pairs, grouped into
/// distance bins `[b*w, (b+1)*w)`. Empty bins are omitted.
pub fn spatial_diff_curve(crimes: &CrimeTensor, grid: &RegionGrid, k: usize, bin_width: f64) -> Result<Vec<CurvePoint>> {
    check_type(crimes, k)?;
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(Error::Config(format!("bin width must be positive, got {bin_width}")));
    }
    let regions = crimes.n_regions();
    if regions < 2 {
        return Err(Error::InvalidDimension("spatial curve needs at least two regions".into()));
    }
    if grid.len() != regions {
        return Err(Error::InvalidDimension(format!("grid has {} regions, tensor has {regions}", grid.len())));
    }
    let y = crimes.type_slice(k);
    let mut bins: std::collections::BTreeMap<u64, (f64, usize)> = Default::default();
    for i in 0..regions {
        for j in i + 1..regions {
            let bin = (grid.raw_distance(i, j) / bin_width).floor() as u64;
            let diff: f64 = y.row(i).iter().zip(y.row(j).iter()).map(|(a, b)| (a - b).abs()).sum();
            let entry = bins.entry(bin).or_default();
            entry.0 += diff;
            entry.1 += y.ncols();
        }
    }
    Ok(bins
        .into_iter()
        .map(|(b, (total, count))| CurvePoint { x: (b as f64 + 0.5) * bin_width, mean_diff: total / count as f64, count })
        .collect())
}

/// Cosine similarity between the `(N, T)` slices of each pair of types.
/// Entries involving an all-zero slice are `None`.
pub fn cross_type_similarity(crimes: &CrimeTensor) -> Vec<Vec<Option<f64>>> {
    let types = crimes.n_types();
    let norms: Vec<f64> = (0..types).map(|k| crimes.type_slice(k).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut out = vec![vec![None; types]; types];
    for i in 0..types {
        for j in i..types {
            if norms[i] == 0.0 || norms[j] == 0.0 {
                continue;
            }
            let sim = if i == j {
                1.0
            } else {
                let dot: f64 = crimes.type_slice(i).iter().zip(crimes.type_slice(j).iter()).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            out[i][j] = Some(sim);
            out[j][i] = Some(sim);
        }
    }
    out
}

/// Converts a similarity matrix to a dense array with undefined entries as NaN.
pub fn similarity_array(sim: &[Vec<Option<f64>>]) -> Array2<f64> {
    let k = sim.len();
    Array2::from_shape_fn((k, k), |(i, j)| sim[i][j].unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    /// One curve per crime type.
    pub temporal_curve: Vec<Vec<CurvePoint>>,
    /// One curve per crime type; empty when there is a single region.
    pub spatial_curve: Vec<Vec<CurvePoint>>,
    pub cross_type: Vec<Vec<Option<f64>>>,
    pub max_gap: usize,
    pub bin_width: f64,
}

/// Computes all three statistics. `max_gap` defaults to `min(30, T - 1)`.
pub fn analyze(crimes: &CrimeTensor, grid: &RegionGrid, max_gap: Option<usize>, bin_width: f64) -> Result<CorrelationReport> {
    let max_gap = max_gap.unwrap_or_else(|| 30.min(crimes.n_slots().saturating_sub(1)));
    let types: Vec<usize> = (0..crimes.n_types()).collect();
    let temporal_curve = types.par_iter().map(|&k| temporal_diff_curve(crimes, k, max_gap)).collect::<Result<_>>()?;
    let spatial_curve = if crimes.n_regions() < 2 {
        vec![Vec::new(); types.len()]
    } else {
        types.par_iter().map(|&k| spatial_diff_curve(crimes, grid, k, bin_width)).collect::<Result<_>>()?
    };
    Ok(CorrelationReport { temporal_curve, spatial_curve, cross_type: cross_type_similarity(crimes), max_gap, bin_width })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array3, Axis};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_tensor(n: usize, t: usize, k: usize, seed: u64) -> CrimeTensor {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        CrimeTensor::new(Array3::from_shape_fn((n, t, k), |_| rng.random_range(0.0..10.0))).unwrap()
    }

    fn brute_temporal(y: &CrimeTensor, k: usize, gap: usize) -> f64 {
        let (mut total, mut count) = (0.0, 0);
        for n in 0..y.n_regions() {
            for t in 0..y.n_slots() - gap {
                total += (y.get(n, t, k) - y.get(n, t + gap, k)).abs();
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn constant_series_has_flat_curve() {
        let y = CrimeTensor::new(Array3::from_elem((3, 6, 1), 4.0)).unwrap();
        assert!(temporal_diff_curve(&y, 0, 5).unwrap().iter().all(|p| p.mean_diff == 0.0));
    }

    #[test]
    fn ramp_gap_equals_difference() {
        let y = CrimeTensor::new(Array3::from_shape_fn((1, 8, 1), |(_, t, _)| t as f64)).unwrap();
        for p in temporal_diff_curve(&y, 0, 7).unwrap() {
            assert_eq!(p.mean_diff, p.x);
        }
    }

    #[test]
    fn temporal_matches_brute_force() {
        let y = random_tensor(2, 4, 1, 3);
        let curve = temporal_diff_curve(&y, 0, 3).unwrap();
        for p in &curve {
            assert!((p.mean_diff - brute_temporal(&y, 0, p.x as usize)).abs() < 1e-12);
        }
    }

    #[test]
    fn temporal_bounds() {
        let y = random_tensor(2, 4, 1, 3);
        assert!(matches!(temporal_diff_curve(&y, 1, 2), Err(Error::Bounds(_))));
        assert!(matches!(temporal_diff_curve(&y, 0, 4), Err(Error::Bounds(_))));
        assert!(matches!(temporal_diff_curve(&y, 0, 0), Err(Error::Bounds(_))));
    }

    #[test]
    fn identical_regions_have_zero_spatial_diff() {
        let y = CrimeTensor::new(Array3::from_shape_fn((4, 5, 1), |(_, t, _)| (t * t) as f64)).unwrap();
        let grid = RegionGrid::square(2, 1.0).unwrap();
        assert!(spatial_diff_curve(&y, &grid, 0, 1.0).unwrap().iter().all(|p| p.mean_diff == 0.0));
    }

    #[test]
    fn two_regions_constant_gap() {
        let y = CrimeTensor::new(Array3::from_shape_fn((2, 5, 1), |(n, t, _)| t as f64 + 3.0 * n as f64)).unwrap();
        let grid = RegionGrid::new(vec![[0.0, 0.0], [0.0, 2.5]], None).unwrap();
        let curve = spatial_diff_curve(&y, &grid, 0, 1.0).unwrap();
        assert_eq!(curve.len(), 1);
        assert_eq!(curve[0].mean_diff, 3.0);
        assert_eq!(curve[0].x, 2.5);
    }

    #[test]
    fn spatial_rejects_bad_width() {
        let y = random_tensor(2, 3, 1, 0);
        let grid = RegionGrid::new(vec![[0.0, 0.0], [1.0, 0.0]], None).unwrap();
        assert!(spatial_diff_curve(&y, &grid, 0, 0.0).is_err());
        assert!(spatial_diff_curve(&y, &grid, 0, -1.0).is_err());
    }

    #[test]
    fn similarity_examples() {
        let mut v = Array3::zeros((2, 2, 2));
        v.index_axis_mut(Axis(2), 0).assign(&ndarray::array![[1.0, 0.0], [0.0, 1.0]]);
        v.index_axis_mut(Axis(2), 1).fill(1.0);
        let sim = cross_type_similarity(&CrimeTensor::new(v).unwrap());
        assert!((sim[0][1].unwrap() - 2.0 / (2f64.sqrt() * 2.0)).abs() < 1e-15);
        assert_eq!(sim[0][0], Some(1.0));

        let mut disjoint = Array3::zeros((2, 1, 2));
        disjoint[[0, 0, 0]] = 5.0;
        disjoint[[1, 0, 1]] = 2.0;
        assert_eq!(cross_type_similarity(&CrimeTensor::new(disjoint).unwrap())[0][1], Some(0.0));
    }

    #[test]
    fn zero_slice_is_undefined() {
        let mut v = Array3::zeros((2, 2, 2));
        v[[0, 0, 0]] = 1.0;
        let sim = cross_type_similarity(&CrimeTensor::new(v).unwrap());
        assert_eq!(sim[1][1], None);
        assert_eq!(sim[0][1], None);
        assert_eq!(sim[0][0], Some(1.0));
    }

    #[test]
    fn report_shapes() {
        let y = random_tensor(4, 10, 3, 1);
        let grid = RegionGrid::square(2, 1.0).unwrap();
        let r = analyze(&y, &grid, None, DEFAULT_BIN_WIDTH_KM).unwrap();
        assert_eq!(r.temporal_curve.len(), 3);
        assert_eq!(r.temporal_curve[0].len(), 9);
        assert_eq!(r.spatial_curve.len(), 3);
        assert_eq!(r.cross_type.len(), 3);
    }

    proptest! {
        #[test]
        fn similarity_invariants(seed in any::<u64>(), scale in 0.01f64..100.0) {
            let y = random_tensor(3, 5, 3, seed);
            let sim = cross_type_similarity(&y);
            for i in 0..3 {
                for j in 0..3 {
                    let v = sim[i][j].unwrap();
                    prop_assert!((0.0..=1.0).contains(&v));
                    prop_assert_eq!(v, sim[j][i].unwrap());
                }
            }
            let mut scaled = y.values().clone();
            scaled.index_axis_mut(Axis(2), 1).mapv_inplace(|v| v * scale);
            let rescaled = cross_type_similarity(&CrimeTensor::new(scaled).unwrap());
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((rescaled[i][j].unwrap() - sim[i][j].unwrap()).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn temporal_invariant_to_region_permutation(seed in any::<u64>()) {
            let y = random_tensor(4, 6, 1, seed);
            let mut permuted = y.values().clone();
            for (dst, src) in [3usize, 0, 2, 1].iter().enumerate() {
                permuted.index_axis_mut(Axis(0), dst).assign(&y.values().index_axis(Axis(0), *src));
            }
            let a = temporal_diff_curve(&y, 0, 5).unwrap();
            let b = temporal_diff_curve(&CrimeTensor::new(permuted).unwrap(), 0, 5).unwrap();
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p.mean_diff - q.mean_diff).abs() < 1e-12);
            }
        }

        #[test]
        fn spatial_invariant_to_slot_permutation(seed in any::<u64>()) {
            let y = random_tensor(4, 5, 2, seed);
            let grid = RegionGrid::square(2, 1.0).unwrap();
            let mut permuted = y.values().clone();
            for (dst, src) in [4usize, 2, 0, 3, 1].iter().enumerate() {
                permuted.index_axis_mut(Axis(1), dst).assign(&y.values().index_axis(Axis(1), *src));
            }
            let permuted = CrimeTensor::new(permuted).unwrap();
            for k in 0..2 {
                let a = spatial_diff_curve(&y, &grid, k, 1.0).unwrap();
                let b = spatial_diff_curve(&permuted, &grid, k, 1.0).unwrap();
                for (p, q) in a.iter().zip(&b) {
                    prop_assert!((p.mean_diff - q.mean_diff).abs() < 1e-12);
                }
            }
        }
    }
}
