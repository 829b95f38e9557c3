use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use crimecast::analytics::{analyze, CorrelationReport, DEFAULT_BIN_WIDTH_KM};
use crimecast::dataset::{read_latest_features, CRIMES_FILE, FEATURES_FILE, REGIONS_FILE};
use crimecast::datagen::{generate, SynthSpec};
use crimecast::evaluation::{evaluate, EvaluationReport};
use crimecast::forecaster::{predict_ahead, ForecastTable};
use crimecast::solver::{fit, Checkpoint};
use crimecast::Dataset;
use serde::Serialize;
use sha2::{Digest, Sha256};

mod config;

use config::{Overrides, RunConfig};

const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "crimecast", version, about = "Spatio-temporal crime count regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known weights.
    Synth {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the spec file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compute temporal, spatial and cross-type correlation statistics.
    Analyze {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        lag: usize,
        #[arg(long, default_value_t = DEFAULT_BIN_WIDTH_KM, alias = "bin_width")]
        bin_width: f64,
        /// Largest slot gap of the temporal curve; defaults to min(30, T - 1).
        #[arg(long, alias = "max_gap")]
        max_gap: Option<usize>,
    },
    /// Train on a dataset and write a checkpoint.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Predict the slot after the latest rows of a features file.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        clamp: bool,
    },
    /// Rolling-origin evaluation against naive baselines.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Debug)]
pub struct CliError {
    stage: &'static str,
    message: String,
    code: u8,
}

impl CliError {
    pub fn data(stage: &'static str, message: impl Into<String>) -> Self {
        Self { stage, message: message.into(), code: 2 }
    }

    fn from_core(stage: &'static str, err: crimecast::Error) -> Self {
        let code = if err.is_numeric() { 3 } else { 2 };
        Self { stage, message: err.to_string(), code }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed: {}", self.stage, self.message)
    }
}

type CliResult<T> = Result<T, CliError>;

trait Stage<T> {
    fn stage(self, stage: &'static str) -> CliResult<T>;
}

impl<T> Stage<T> for crimecast::Result<T> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|e| CliError::from_core(stage, e))
    }
}

impl<T> Stage<T> for std::io::Result<T> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|e| CliError::data(stage, e.to_string()))
    }
}

impl<T> Stage<T> for csv::Result<T> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|e| CliError::data(stage, e.to_string()))
    }
}

#[derive(Debug, Serialize)]
struct InputHash {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: Option<u64>,
    config: C,
    inputs: Vec<InputHash>,
    outputs: Vec<String>,
}

/// SHA-256 over `blob <len>\0<content>`, as git hashes blobs.
fn content_hash(path: &Path) -> CliResult<InputHash> {
    let bytes = std::fs::read(path).map_err(|e| CliError::data("manifest", format!("{}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    hasher.update(format!("blob {}\0", bytes.len()));
    hasher.update(&bytes);
    Ok(InputHash { path: path.display().to_string(), sha256: format!("{:x}", hasher.finalize()) })
}

fn write_manifest<C: Serialize>(
    path: &Path,
    command: &'static str,
    seed: Option<u64>,
    config: C,
    inputs: &[PathBuf],
    outputs: &[&str],
) -> CliResult<()> {
    let manifest = Manifest {
        tool: "crimecast",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed,
        config,
        inputs: inputs.iter().map(|p| content_hash(p)).collect::<CliResult<_>>()?,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    write_json(path, &manifest, "manifest")
}

fn write_json<T: Serialize>(path: &Path, value: &T, stage: &'static str) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::data(stage, e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::data(stage, format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path, stage: &'static str) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::data(stage, format!("{}: {e}", dir.display())))
}

fn data_files(dir: &Path) -> Vec<PathBuf> {
    [CRIMES_FILE, FEATURES_FILE, REGIONS_FILE].iter().map(|f| dir.join(f)).collect()
}

fn load(dir: &Path, lag: usize, d_min: Option<f64>) -> CliResult<Dataset> {
    let (data, report) = Dataset::load_dir(dir, lag, d_min).stage("load")?;
    if report.missing_crime_cells > 0 {
        eprintln!("warning: {} missing crime cells treated as zero", report.missing_crime_cells);
    }
    if report.missing_feature_cells > 0 {
        eprintln!("warning: {} missing feature cells treated as zero", report.missing_feature_cells);
    }
    if report.negative_counts > 0 {
        eprintln!("warning: {} negative crime counts", report.negative_counts);
    }
    Ok(data)
}

fn run_synth(spec_path: Option<&Path>, out: &Path, seed: Option<u64>) -> CliResult<()> {
    let mut spec: SynthSpec = match spec_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::data("spec", format!("{}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| CliError::data("spec", format!("{}: {e}", path.display())))?
        }
        None => SynthSpec::default(),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let (data, truth) = generate(&spec).stage("synth")?;
    data.save_dir(out).stage("write")?;
    truth.save_dir(out).stage("write")?;
    let inputs: Vec<PathBuf> = spec_path.map(Path::to_path_buf).into_iter().collect();
    let outputs = [
        CRIMES_FILE,
        FEATURES_FILE,
        REGIONS_FILE,
        crimecast::datagen::GROUND_TRUTH_SHARED_FILE,
        crimecast::datagen::GROUND_TRUTH_SPECIFIC_FILE,
    ];
    write_manifest(&out.join(MANIFEST_FILE), "synth", Some(spec.seed), &spec, &inputs, &outputs)?;
    println!("wrote {} regions x {} slots x {} types to {}", data.n_regions(), data.n_slots(), data.n_types(), out.display());
    Ok(())
}

fn write_curves(path: &Path, curves: &[Vec<crimecast::analytics::CurvePoint>], x_name: &str) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).stage("write")?;
    w.write_record(["crime_type", x_name, "mean_diff", "count"]).stage("write")?;
    for (k, curve) in curves.iter().enumerate() {
        for p in curve {
            w.write_record([(k + 1).to_string(), p.x.to_string(), p.mean_diff.to_string(), p.count.to_string()]).stage("write")?;
        }
    }
    w.flush().stage("write")
}

fn write_similarity(path: &Path, report: &CorrelationReport) -> CliResult<()> {
    let k = report.cross_type.len();
    let mut w = csv::Writer::from_path(path).stage("write")?;
    let mut header = vec!["crime_type".to_string()];
    header.extend((1..=k).map(|j| j.to_string()));
    w.write_record(&header).stage("write")?;
    for (i, row) in report.cross_type.iter().enumerate() {
        let mut record = vec![(i + 1).to_string()];
        record.extend(row.iter().map(|v| v.map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&record).stage("write")?;
    }
    w.flush().stage("write")
}

fn run_analyze(data_dir: &Path, out: &Path, lag: usize, bin_width: f64, max_gap: Option<usize>) -> CliResult<()> {
    let data = load(data_dir, lag, None)?;
    let report = analyze(&data.crimes, &data.grid, max_gap, bin_width).stage("analyze")?;
    create_dir(out, "write")?;
    write_json(&out.join("analysis.json"), &report, "write")?;
    write_curves(&out.join("temporal_curve.csv"), &report.temporal_curve, "slot_gap")?;
    write_curves(&out.join("spatial_curve.csv"), &report.spatial_curve, "distance_km")?;
    write_similarity(&out.join("cross_type.csv"), &report)?;
    #[derive(Serialize)]
    struct AnalyzeConfig {
        lag: usize,
        bin_width: f64,
        max_gap: usize,
    }
    let cfg = AnalyzeConfig { lag, bin_width, max_gap: report.max_gap };
    let outputs = ["analysis.json", "temporal_curve.csv", "spatial_curve.csv", "cross_type.csv"];
    write_manifest(&out.join(MANIFEST_FILE), "analyze", None, cfg, &data_files(data_dir), &outputs)?;
    println!("wrote correlation report to {}", out.display());
    Ok(())
}

fn run_fit(data_dir: &Path, config: Option<&Path>, out: &Path, overrides: &Overrides) -> CliResult<()> {
    let cfg = RunConfig::resolve(config, overrides)?;
    let data = load(data_dir, cfg.lag, cfg.d_min)?;
    let hp = cfg.hyperparams();
    let (state, report) = fit(&data, &hp, cfg.seed).stage("fit")?;
    let table = ForecastTable::fit(&state, &data.features, &data.crimes, &cfg.forecast_options()).stage("forecast")?;
    create_dir(out, "write")?;
    Checkpoint::new(state, hp, cfg.lag, Some(table)).save(&out.join("model.json")).stage("write")?;
    write_json(&out.join("fit_report.json"), &report, "write")?;
    let mut inputs = data_files(data_dir);
    inputs.extend(config.map(Path::to_path_buf));
    write_manifest(&out.join(MANIFEST_FILE), "fit", Some(cfg.seed), &cfg, &inputs, &["model.json", "fit_report.json"])?;
    let last = report.final_step().map(|s| s.primal.max()).unwrap_or(f64::NAN);
    println!(
        "{} iterations ({:?}), training RMSE {:.6}, max primal residual {last:.3e}",
        report.iterations.len(),
        report.stop_reason,
        report.training_rmse
    );
    Ok(())
}

fn run_predict(model: &Path, features: &Path, out: &Path, clamp: bool) -> CliResult<()> {
    let checkpoint = Checkpoint::load(model).stage("load model")?;
    let table = checkpoint
        .forecast
        .as_ref()
        .ok_or_else(|| CliError::data("load model", "checkpoint has no forecast table"))?;
    let (raw_slot, x) = read_latest_features(features, checkpoint.regions).stage("load features")?;
    if x.ncols() != checkpoint.features {
        return Err(CliError::data(
            "load features",
            format!("{} feature columns, model expects {}", x.ncols(), checkpoint.features),
        ));
    }
    let target = raw_slot + checkpoint.lag as i64;
    let steps = target - checkpoint.slots as i64;
    if steps < 1 {
        return Err(CliError::data(
            "predict",
            format!("features describe slot {target}, which is not after the {} training slots", checkpoint.slots),
        ));
    }
    let y = predict_ahead(&checkpoint.state, table, x.view(), steps as usize, clamp).stage("predict")?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent, "write")?;
    }
    let mut w = csv::Writer::from_path(out).stage("write")?;
    w.write_record(["region_id", "crime_type", "predicted_count"]).stage("write")?;
    for ((n, k), v) in y.indexed_iter() {
        w.write_record([(n + 1).to_string(), (k + 1).to_string(), v.to_string()]).stage("write")?;
    }
    w.flush().stage("write")?;
    #[derive(Serialize)]
    struct PredictConfig {
        clamp: bool,
        target_slot: i64,
    }
    let manifest = PathBuf::from(format!("{}.manifest.json", out.display()));
    let inputs = [model.to_path_buf(), features.to_path_buf()];
    let output = out.display().to_string();
    write_manifest(&manifest, "predict", None, PredictConfig { clamp, target_slot: target }, &inputs, &[output.as_str()])?;
    println!("wrote {} predictions for slot {target} to {}", y.len(), out.display());
    Ok(())
}

fn write_origins(path: &Path, report: &EvaluationReport, data: &Dataset) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).stage("write")?;
    w.write_record(["origin", "target", "region_id", "crime_type", "predicted", "observed"]).stage("write")?;
    for r in &report.per_origin {
        for ((n, k), v) in r.predictions.indexed_iter() {
            let observed = data.crimes.get(n, r.target - 1, k);
            w.write_record([
                r.origin.to_string(),
                r.target.to_string(),
                (n + 1).to_string(),
                (k + 1).to_string(),
                v.to_string(),
                observed.to_string(),
            ])
            .stage("write")?;
        }
    }
    w.flush().stage("write")
}

fn run_evaluate(data_dir: &Path, config: Option<&Path>, out: &Path, overrides: &Overrides) -> CliResult<()> {
    let cfg = RunConfig::resolve(config, overrides)?;
    let data = load(data_dir, cfg.lag, cfg.d_min)?;
    let report = evaluate(&data, &cfg.eval_config()).stage("evaluate")?;
    create_dir(out, "write")?;
    write_json(&out.join("evaluation.json"), &report, "write")?;
    write_origins(&out.join("predictions.csv"), &report, &data)?;
    let mut inputs = data_files(data_dir);
    inputs.extend(config.map(Path::to_path_buf));
    write_manifest(&out.join(MANIFEST_FILE), "evaluate", Some(cfg.seed), &cfg, &inputs, &["evaluation.json", "predictions.csv"])?;
    println!(
        "{} origins: RMSE {:.6}, last value {:.6}, historical mean {:.6}",
        report.origins, report.rmse, report.last_value_rmse, report.historical_mean_rmse
    );
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth { spec, out, seed } => run_synth(spec.as_deref(), &out, seed),
        Command::Analyze { data, out, lag, bin_width, max_gap } => run_analyze(&data, &out, lag, bin_width, max_gap),
        Command::Fit { data, config, out, overrides } => run_fit(&data, config.as_deref(), &out, &overrides),
        Command::Predict { model, features, out, clamp } => run_predict(&model, &features, &out, clamp),
        Command::Evaluate { data, config, out, overrides } => run_evaluate(&data, config.as_deref(), &out, &overrides),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.code)
        }
    }
}
