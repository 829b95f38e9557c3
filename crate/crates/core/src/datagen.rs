//! Seeded synthetic datasets with known weights.

use std::io::Write;
use std::path::Path;

use ndarray::{s, Array2, Array3, Array4, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::forecaster::decay_coefficients;
use crate::tensors::{CrimeTensor, FeatureTensor, RegionGrid};

pub const GROUND_TRUTH_SHARED_FILE: &str = "ground_truth_shared.csv";
pub const GROUND_TRUTH_SPECIFIC_FILE: &str = "ground_truth_specific.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    /// Regions form a `grid_side x grid_side` grid with 1 km spacing.
    pub grid_side: usize,
    pub slots: usize,
    pub types: usize,
    pub features: usize,
    pub noise_sd: f64,
    /// Length of each piecewise-constant segment of the planted weights.
    pub temporal_smoothness: usize,
    /// Length scale (km) of the `exp(-d / scale)` smoothing kernel. Zero disables smoothing.
    pub spatial_smoothness_scale: f64,
    /// Pairwise correlation of the type-specific weights.
    pub task_correlation: f64,
    /// Standard deviation of the type-specific weights relative to the shared ones.
    pub specific_scale: f64,
    /// When set, weights after the first `sigma_window` slots follow the decay recurrence.
    pub sigma_true: Option<f64>,
    pub sigma_window: usize,
    pub lag: usize,
    /// Replace each target by a Poisson draw with mean `max(Y, 0)`.
    pub poisson: bool,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            grid_side: 4,
            slots: 40,
            types: 3,
            features: 6,
            noise_sd: 0.0,
            temporal_smoothness: 10,
            spatial_smoothness_scale: 1.0,
            task_correlation: 0.5,
            specific_scale: 0.5,
            sigma_true: None,
            sigma_window: 3,
            lag: 1,
            poisson: false,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn n_regions(&self) -> usize {
        self.grid_side * self.grid_side
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grid_side", self.grid_side),
            ("slots", self.slots),
            ("types", self.types),
            ("features", self.features),
            ("temporal_smoothness", self.temporal_smoothness),
            ("sigma_window", self.sigma_window),
            ("lag", self.lag),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        let non_negative = [
            ("noise_sd", self.noise_sd),
            ("spatial_smoothness_scale", self.spatial_smoothness_scale),
            ("specific_scale", self.specific_scale),
        ];
        if let Some((name, v)) = non_negative.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")));
        }
        if !(0.0..=1.0).contains(&self.task_correlation) {
            return Err(Error::Config(format!("task_correlation must lie in [0, 1], got {}", self.task_correlation)));
        }
        if let Some(sigma) = self.sigma_true {
            if !(sigma.is_finite() && sigma >= 1.0) {
                return Err(Error::Config(format!("sigma_true must be finite and >= 1, got {sigma}")));
            }
            if self.sigma_window >= self.slots {
                return Err(Error::Config("sigma_window must be smaller than slots".into()));
            }
        }
        Ok(())
    }
}

/// Planted weights: shared `(N, T, M)` and type-specific `(N, T, K, M)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub shared: Array3<f64>,
    pub specific: Array4<f64>,
    pub sigma: Option<f64>,
}

impl GroundTruth {
    /// `P* + Q*(k)` for region `n` as a `(T, M)` history.
    pub fn combined_history(&self, n: usize, k: usize) -> Array2<f64> {
        &self.shared.index_axis(Axis(0), n) + &self.specific.slice(s![n, .., k, ..])
    }

    /// Writes the shared and type-specific weights as CSV files in `dir`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (regions, slots, types, features) = self.specific.dim();
        let header: Vec<String> = (1..=features).map(|j| format!("w{j}")).collect();

        let path = dir.join(GROUND_TRUTH_SHARED_FILE);
        let mut out = create(&path)?;
        let line = format!("region_id,time_slot,{}", header.join(","));
        writeln!(out, "{line}").map_err(|e| Error::io(&path, e))?;
        for n in 0..regions {
            for t in 0..slots {
                let row = join(self.shared.slice(s![n, t, ..]).iter());
                writeln!(out, "{},{},{row}", n + 1, t + 1).map_err(|e| Error::io(&path, e))?;
            }
        }
        out.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join(GROUND_TRUTH_SPECIFIC_FILE);
        let mut out = create(&path)?;
        let line = format!("region_id,time_slot,crime_type,{}", header.join(","));
        writeln!(out, "{line}").map_err(|e| Error::io(&path, e))?;
        for n in 0..regions {
            for t in 0..slots {
                for k in 0..types {
                    let row = join(self.specific.slice(s![n, t, k, ..]).iter());
                    writeln!(out, "{},{},{},{row}", n + 1, t + 1, k + 1).map_err(|e| Error::io(&path, e))?;
                }
            }
        }
        out.flush().map_err(|e| Error::io(&path, e))
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

fn join<'a>(values: impl Iterator<Item = &'a f64>) -> String {
    values.map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Row-normalised `exp(-d / scale)` kernel, or the identity when `scale == 0`.
fn smoothing_kernel(grid: &RegionGrid, scale: f64) -> Array2<f64> {
    let n = grid.len();
    if scale == 0.0 {
        return Array2::eye(n);
    }
    let mut k = Array2::from_shape_fn((n, n), |(i, j)| (-grid.raw_distance(i, j) / scale).exp());
    for mut row in k.rows_mut() {
        let total = row.sum();
        row /= total;
    }
    k
}

fn gaussian(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || StandardNormal.sample(rng))
}

pub fn generate(spec: &SynthSpec) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    let (regions, slots, types, features) = (spec.n_regions(), spec.slots, spec.types, spec.features);
    let grid = RegionGrid::square(spec.grid_side, 1.0)?;
    let kernel = smoothing_kernel(&grid, spec.spatial_smoothness_scale);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let common_weight = spec.task_correlation.sqrt();
    let own_weight = (1.0 - spec.task_correlation).sqrt();
    let mut shared = Array3::zeros((regions, slots, features));
    let mut specific = Array4::zeros((regions, slots, types, features));
    let fresh_until = if spec.sigma_true.is_some() { spec.sigma_window } else { slots };
    let mut segment_start = 0;
    while segment_start < fresh_until {
        let len = if spec.sigma_true.is_some() { 1 } else { spec.temporal_smoothness };
        let segment_end = (segment_start + len).min(fresh_until);
        let p = kernel.dot(&gaussian(&mut rng, (regions, features)));
        let common = gaussian(&mut rng, (regions, features));
        for t in segment_start..segment_end {
            shared.slice_mut(s![.., t, ..]).assign(&p);
        }
        for k in 0..types {
            let own = gaussian(&mut rng, (regions, features));
            let q = kernel.dot(&(&common * common_weight + &own * own_weight)) * spec.specific_scale;
            for t in segment_start..segment_end {
                specific.slice_mut(s![.., t, k, ..]).assign(&q);
            }
        }
        segment_start = segment_end;
    }
    if let Some(sigma) = spec.sigma_true {
        let coeffs = decay_coefficients(spec.sigma_window, sigma);
        for t in spec.sigma_window..slots {
            let mut p = Array2::<f64>::zeros((regions, features));
            let mut q = Array3::<f64>::zeros((regions, types, features));
            for (lag, c) in coeffs.iter().enumerate() {
                p.scaled_add(*c, &shared.slice(s![.., t - 1 - lag, ..]));
                q.scaled_add(*c, &specific.slice(s![.., t - 1 - lag, .., ..]));
            }
            shared.slice_mut(s![.., t, ..]).assign(&p);
            specific.slice_mut(s![.., t, .., ..]).assign(&q);
        }
    }

    let x = Array3::from_shape_simple_fn((regions, slots, features), || StandardNormal.sample(&mut rng));
    let lookahead = Array3::from_shape_simple_fn((regions, spec.lag, features), || StandardNormal.sample(&mut rng));
    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::Config(e.to_string()))?;
    let mut y = Array3::zeros((regions, slots, types));
    for n in 0..regions {
        for t in 0..slots {
            let xt = x.slice(s![n, t, ..]);
            let p = shared.slice(s![n, t, ..]);
            for k in 0..types {
                let mut v = xt.dot(&p) + xt.dot(&specific.slice(s![n, t, k, ..]));
                if spec.noise_sd > 0.0 {
                    v += noise.sample(&mut rng);
                }
                y[[n, t, k]] = v;
            }
        }
    }
    if spec.poisson {
        for v in y.iter_mut() {
            *v = if *v > 0.0 {
                Poisson::new(*v).map_err(|e| Error::Config(e.to_string()))?.sample(&mut rng)
            } else {
                0.0
            };
        }
    }

    let crimes = CrimeTensor::new(y)?;
    let features = FeatureTensor::with_lookahead(x, lookahead, spec.lag)?;
    Ok((Dataset::new(crimes, features, grid)?, GroundTruth { shared, specific, sigma: spec.sigma_true }))
}
