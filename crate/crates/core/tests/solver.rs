use std::time::Instant;

use crimecast::datagen::{generate, SynthSpec};
use crimecast::solver::{admm_step, fit, Hyperparams, Problem, StopReason, Trainer};
use crimecast::{CrimeTensor, Dataset, FeatureTensor, RegionGrid};
use ndarray::{s, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny() -> Dataset {
    let spec = SynthSpec { grid_side: 2, slots: 3, types: 2, features: 2, noise_sd: 0.1, ..Default::default() };
    let (four, _) = generate(&spec).unwrap();
    let crimes = CrimeTensor::new(four.crimes.values().slice(s![..2, .., ..]).to_owned()).unwrap();
    let features = FeatureTensor::new(four.features.values().slice(s![..2, .., ..]).to_owned(), 1).unwrap();
    let grid = RegionGrid::new(vec![[0.0, 0.0], [1.0, 0.0]], None).unwrap();
    Dataset::new(crimes, features, grid).unwrap()
}

#[test]
fn residuals_shrink_with_more_steps() {
    let data = tiny();
    let hp = Hyperparams { alpha: 0.1, rho: 2.0, eta: 0.02, ..Default::default() };
    let problem = Problem::new(&data, hp).unwrap();
    let mut state = problem.random_state(7);
    let mut trainer = Trainer::new(&problem, &state).unwrap();
    let mut at_five = 0.0;
    let mut at_fifty = 0.0;
    for i in 1..=50 {
        let report = trainer.step(&mut state).unwrap();
        if i == 5 {
            at_five = report.primal.max();
        }
        at_fifty = report.primal.max();
    }
    assert!(at_fifty < at_five, "{at_fifty} !< {at_five}");
}

#[test]
fn convex_case_converges() {
    let data = tiny();
    let hp = Hyperparams { alpha: 0.0, rho: 2.0, eta: 0.02, max_iters: 20_000, ..Default::default() };
    let (_, report) = fit(&data, &hp, 1).unwrap();
    assert_eq!(report.stop_reason, StopReason::Converged);
    assert!(report.final_step().unwrap().primal.max() < hp.tol);
}

#[test]
fn fit_is_deterministic() {
    let data = tiny();
    let hp = Hyperparams { alpha: 0.3, max_iters: 40, eta: 0.01, ..Default::default() };
    let (s1, r1) = fit(&data, &hp, 5).unwrap();
    let (s2, r2) = fit(&data, &hp, 5).unwrap();
    assert_eq!(s1, s2);
    assert_eq!(r1, r2);
    let (s3, _) = fit(&data, &hp, 6).unwrap();
    assert_ne!(s1, s3);
}

/// Regions on a line with 1 km spacing and random data.
fn line_dataset(regions: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(regions as u64);
    let crimes = CrimeTensor::new(Array3::from_shape_fn((regions, 8, 2), |_| rng.random_range(0.0..5.0))).unwrap();
    let features = FeatureTensor::new(Array3::from_shape_fn((regions, 8, 3), |_| rng.random_range(-1.0..1.0)), 1).unwrap();
    let grid = RegionGrid::new((0..regions).map(|i| [i as f64, 0.0]).collect(), None).unwrap();
    Dataset::new(crimes, features, grid).unwrap()
}

fn step_seconds(regions: usize) -> f64 {
    let data = line_dataset(regions);
    let problem = Problem::new(&data, Hyperparams::default()).unwrap();
    let mut state = problem.random_state(0);
    admm_step(&problem, &mut state, 1e-3).unwrap();
    let start = Instant::now();
    for _ in 0..3 {
        admm_step(&problem, &mut state, 1e-3).unwrap();
    }
    start.elapsed().as_secs_f64() / 3.0
}

#[test]
fn step_cost_at_most_quadratic_in_regions() {
    let ratio = step_seconds(64) / step_seconds(32);
    // Loose bound: 4x for quadratic growth, doubled for timing noise.
    assert!(ratio <= 8.0, "step time grew {ratio:.2}x when regions doubled");
}
