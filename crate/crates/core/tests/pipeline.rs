use crimecast::dataset::{read_latest_features, FEATURES_FILE};
use crimecast::datagen::{generate, SynthSpec};
use crimecast::forecaster::{predict, ForecastOptions, ForecastTable};
use crimecast::solver::{fit, Checkpoint, Hyperparams};
use crimecast::Dataset;

#[test]
fn generated_data_round_trips_through_csv() {
    let spec = SynthSpec { grid_side: 3, slots: 9, types: 2, features: 3, noise_sd: 0.3, lag: 2, ..Default::default() };
    let (data, _) = generate(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    data.save_dir(dir.path()).unwrap();
    let (loaded, report) = Dataset::load_dir(dir.path(), 2, None).unwrap();
    assert_eq!(report.warnings(), 0);
    assert_eq!(loaded, data);
}

#[test]
fn fit_checkpoint_predict() {
    let spec = SynthSpec { grid_side: 2, slots: 12, types: 2, features: 3, ..Default::default() };
    let (data, _) = generate(&spec).unwrap();
    let hp = Hyperparams { eta: 0.01, max_iters: 50, ..Default::default() };
    let (state, _) = fit(&data, &hp, 3).unwrap();
    let table = ForecastTable::fit(&state, &data.features, &data.crimes, &ForecastOptions::default()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    Checkpoint::new(state.clone(), hp, 1, Some(table.clone())).save(&path).unwrap();
    let restored = Checkpoint::load(&path).unwrap();
    assert_eq!(restored.state, state);
    assert_eq!(restored.forecast.as_ref(), Some(&table));

    data.save_dir(dir.path()).unwrap();
    let (slot, x) = read_latest_features(&dir.path().join(FEATURES_FILE), 4).unwrap();
    assert_eq!(slot, 12);
    assert_eq!(x.view(), data.features.slot(12).unwrap());
    let y = predict(&restored.state, restored.forecast.as_ref().unwrap(), x.view(), false).unwrap();
    assert_eq!(y.dim(), (4, 2));
    assert!(y.iter().all(|v| v.is_finite()));
}
