//! CSV loading and saving for the three input files.
//!
//! ```text
//! crimes.csv:   region_id,time_slot,crime_type,count
//! features.csv: region_id,time_slot,f1,...,fM
//! regions.csv:  region_id,centroid_x_km,centroid_y_km
//! ```
//!
//! `features.csv` holds raw per-slot data. With lag `tau`, raw slot `s`
//! becomes the feature vector of slot `s + tau`, so raw slots may start at
//! `1 - tau` and raw slot `T` yields the features needed to forecast `T + tau`.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensors::{CrimeTensor, FeatureTensor, RegionGrid};

pub const CRIMES_FILE: &str = "crimes.csv";
pub const FEATURES_FILE: &str = "features.csv";
pub const REGIONS_FILE: &str = "regions.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub crimes: CrimeTensor,
    pub features: FeatureTensor,
    pub grid: RegionGrid,
}

/// Cells that were absent from the input and filled with zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub missing_crime_cells: usize,
    pub missing_feature_cells: usize,
    pub negative_counts: usize,
}

impl LoadReport {
    pub fn warnings(&self) -> usize {
        self.missing_crime_cells + self.missing_feature_cells
    }
}

impl Dataset {
    pub fn new(crimes: CrimeTensor, features: FeatureTensor, grid: RegionGrid) -> Result<Self> {
        if crimes.n_regions() != features.n_regions() || crimes.n_regions() != grid.len() {
            return Err(Error::InvalidDimension(format!(
                "region counts disagree: crimes {}, features {}, grid {}",
                crimes.n_regions(),
                features.n_regions(),
                grid.len()
            )));
        }
        if crimes.n_slots() != features.n_slots() {
            return Err(Error::InvalidDimension(format!(
                "slot counts disagree: crimes {}, features {}",
                crimes.n_slots(),
                features.n_slots()
            )));
        }
        Ok(Self { crimes, features, grid })
    }

    pub fn n_regions(&self) -> usize {
        self.crimes.n_regions()
    }

    pub fn n_slots(&self) -> usize {
        self.crimes.n_slots()
    }

    pub fn n_types(&self) -> usize {
        self.crimes.n_types()
    }

    pub fn n_features(&self) -> usize {
        self.features.n_features()
    }

    /// Slots `start..end` (0-based, half-open) of crimes and features.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        Self::new(self.crimes.slots(start, end)?, self.features.slots(start, end)?, self.grid.clone())
    }

    /// Loads `crimes.csv`, `features.csv` and `regions.csv` from a directory.
    pub fn load_dir(dir: &Path, lag: usize, d_min: Option<f64>) -> Result<(Self, LoadReport)> {
        load_dataset(&dir.join(CRIMES_FILE), &dir.join(FEATURES_FILE), &dir.join(REGIONS_FILE), lag, d_min)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_crimes(&dir.join(CRIMES_FILE), &self.crimes)?;
        write_features(&dir.join(FEATURES_FILE), &self.features)?;
        write_regions(&dir.join(REGIONS_FILE), &self.grid)
    }
}

pub fn load_dataset(
    crime_path: &Path,
    feature_path: &Path,
    region_path: &Path,
    lag: usize,
    d_min: Option<f64>,
) -> Result<(Dataset, LoadReport)> {
    let mut report = LoadReport::default();
    let grid = read_regions(region_path, d_min)?;
    let crimes = read_crimes(crime_path, grid.len(), &mut report)?;
    if lag == 0 || lag >= crimes.n_slots() {
        return Err(Error::load(
            feature_path,
            None,
            format!("lag {lag} must satisfy 1 <= lag < T = {}", crimes.n_slots()),
        ));
    }
    let features = read_features(feature_path, grid.len(), crimes.n_slots(), lag, &mut report)?;
    Ok((Dataset::new(crimes, features, grid)?, report))
}

struct Rows {
    path: PathBuf,
    reader: csv::Reader<File>,
}

impl Rows {
    fn open(path: &Path, expected: &[&str], exact: bool) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
        let headers = reader.headers().map_err(|e| Error::load(path, Some(1), e.to_string()))?.clone();
        let prefix_ok = headers.len() >= expected.len() && headers.iter().zip(expected).all(|(h, e)| h == *e);
        if !prefix_ok || (exact && headers.len() != expected.len()) {
            return Err(Error::load(
                path,
                Some(1),
                format!("expected header {}, found {}", expected.join(","), headers.iter().collect::<Vec<_>>().join(",")),
            ));
        }
        Ok(Self { path: path.to_path_buf(), reader })
    }

    fn width(&mut self) -> usize {
        self.reader.headers().map(|h| h.len()).unwrap_or(0)
    }

    /// Iterates `(line, record)` pairs, mapping parse failures to load errors.
    fn for_each(mut self, mut f: impl FnMut(&Path, usize, &csv::StringRecord) -> Result<()>) -> Result<()> {
        let mut record = csv::StringRecord::new();
        loop {
            let more = self.reader.read_record(&mut record).map_err(|e| {
                let line = e.position().map(|p| p.line() as usize);
                Error::load(&self.path, line, e.to_string())
            })?;
            if !more {
                return Ok(());
            }
            let line = record.position().map_or(0, |p| p.line() as usize);
            f(&self.path, line, &record)?;
        }
    }
}

fn parse_id(path: &Path, line: usize, field: &str, name: &str) -> Result<i64> {
    field.parse::<i64>().map_err(|_| Error::load(path, Some(line), format!("{name} '{field}' is not an integer")))
}

fn parse_positive_id(path: &Path, line: usize, field: &str, name: &str) -> Result<usize> {
    let id = parse_id(path, line, field, name)?;
    if id < 1 {
        return Err(Error::load(path, Some(line), format!("{name} {id} must be >= 1")));
    }
    Ok(id as usize)
}

fn parse_value(path: &Path, line: usize, field: &str, name: &str) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::load(path, Some(line), format!("{name} '{field}' is not a finite number"))),
    }
}

fn check_contiguous(path: &Path, name: &str, ids: &BTreeSet<i64>) -> Result<()> {
    if let (Some(&lo), Some(&hi)) = (ids.first(), ids.last()) {
        if (hi - lo + 1) as usize != ids.len() {
            let gap = (lo..=hi).find(|i| !ids.contains(i)).unwrap_or(lo);
            return Err(Error::load(path, None, format!("{name} ids are not contiguous: {gap} is missing")));
        }
    }
    Ok(())
}

fn read_regions(path: &Path, d_min: Option<f64>) -> Result<RegionGrid> {
    let rows = Rows::open(path, &["region_id", "centroid_x_km", "centroid_y_km"], true)?;
    let mut centroids: HashMap<usize, [f64; 2]> = HashMap::new();
    rows.for_each(|path, line, rec| {
        let id = parse_positive_id(path, line, &rec[0], "region_id")?;
        let x = parse_value(path, line, &rec[1], "centroid_x_km")?;
        let y = parse_value(path, line, &rec[2], "centroid_y_km")?;
        if centroids.insert(id, [x, y]).is_some() {
            return Err(Error::load(path, Some(line), format!("duplicate region_id {id}")));
        }
        Ok(())
    })?;
    let n = centroids.len();
    if n == 0 {
        return Err(Error::load(path, None, "no regions"));
    }
    let ids: BTreeSet<i64> = centroids.keys().map(|&i| i as i64).collect();
    if ids.first() != Some(&1) {
        return Err(Error::load(path, None, "region ids must start at 1"));
    }
    check_contiguous(path, "region", &ids)?;
    RegionGrid::new((1..=n).map(|i| centroids[&i]).collect(), d_min)
}

fn read_crimes(path: &Path, regions: usize, report: &mut LoadReport) -> Result<CrimeTensor> {
    let rows = Rows::open(path, &["region_id", "time_slot", "crime_type", "count"], true)?;
    let mut cells: HashMap<(usize, usize, usize), f64> = HashMap::new();
    let mut slots = BTreeSet::new();
    let mut types = BTreeSet::new();
    rows.for_each(|path, line, rec| {
        let n = parse_positive_id(path, line, &rec[0], "region_id")?;
        let t = parse_positive_id(path, line, &rec[1], "time_slot")?;
        let k = parse_positive_id(path, line, &rec[2], "crime_type")?;
        let count = parse_value(path, line, &rec[3], "count")?;
        if n > regions {
            return Err(Error::load(path, Some(line), format!("region_id {n} not in regions file (N = {regions})")));
        }
        if cells.insert((n, t, k), count).is_some() {
            return Err(Error::load(path, Some(line), format!("duplicate cell (region {n}, slot {t}, type {k})")));
        }
        slots.insert(t as i64);
        types.insert(k as i64);
        Ok(())
    })?;
    if cells.is_empty() {
        return Err(Error::load(path, None, "no crime records"));
    }
    for (name, ids) in [("time_slot", &slots), ("crime_type", &types)] {
        if ids.first() != Some(&1) {
            return Err(Error::load(path, None, format!("{name} ids must start at 1")));
        }
        check_contiguous(path, name, ids)?;
    }
    let (t_len, k_len) = (slots.len(), types.len());
    let mut values = Array3::zeros((regions, t_len, k_len));
    for ((n, t, k), v) in values.indexed_iter_mut() {
        match cells.get(&(n + 1, t + 1, k + 1)) {
            Some(&c) => {
                if c < 0.0 {
                    report.negative_counts += 1;
                }
                *v = c;
            }
            None => report.missing_crime_cells += 1,
        }
    }
    CrimeTensor::new(values)
}

fn read_features(
    path: &Path,
    regions: usize,
    slots: usize,
    lag: usize,
    report: &mut LoadReport,
) -> Result<FeatureTensor> {
    let mut rows = Rows::open(path, &["region_id", "time_slot"], false)?;
    let m = rows.width().saturating_sub(2);
    if m == 0 {
        return Err(Error::load(path, Some(1), "no feature columns"));
    }
    let mut raw: HashMap<(usize, i64), Vec<f64>> = HashMap::new();
    let mut raw_slots = BTreeSet::new();
    rows.for_each(|path, line, rec| {
        if rec.len() != m + 2 {
            return Err(Error::load(path, Some(line), format!("expected {} fields, found {}", m + 2, rec.len())));
        }
        let n = parse_positive_id(path, line, &rec[0], "region_id")?;
        let s = parse_id(path, line, &rec[1], "time_slot")?;
        if n > regions {
            return Err(Error::load(path, Some(line), format!("region_id {n} not in regions file (N = {regions})")));
        }
        let v = (0..m).map(|j| parse_value(path, line, &rec[j + 2], &format!("feature f{}", j + 1))).collect::<Result<Vec<_>>>()?;
        if raw.insert((n, s), v).is_some() {
            return Err(Error::load(path, Some(line), format!("duplicate row (region {n}, slot {s})")));
        }
        raw_slots.insert(s);
        Ok(())
    })?;
    check_contiguous(path, "time_slot", &raw_slots)?;

    // Cell t (1-based) reads raw slot t - lag.
    let last_cell = raw_slots.last().map_or(0, |&s| s + lag as i64);
    let ahead = (last_cell - slots as i64).clamp(0, lag as i64) as usize;
    let mut all = Array3::zeros((regions, slots + ahead, m));
    for n in 0..regions {
        for t in 0..slots + ahead {
            let s = t as i64 + 1 - lag as i64;
            match raw.get(&(n + 1, s)) {
                Some(v) => all.slice_mut(ndarray::s![n, t, ..]).assign(&ndarray::ArrayView1::from(v.as_slice())),
                None => report.missing_feature_cells += 1,
            }
        }
    }
    let (values, lookahead) = all.view().split_at(Axis(1), slots);
    FeatureTensor::with_lookahead(values.to_owned(), lookahead.to_owned(), lag)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_crimes(path: &Path, crimes: &CrimeTensor) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "region_id,time_slot,crime_type,count").map_err(io)?;
    for ((n, t, k), v) in crimes.values().indexed_iter() {
        writeln!(w, "{},{},{},{}", n + 1, t + 1, k + 1, v).map_err(io)?;
    }
    finish(path, w)
}

/// Writes raw rows: feature slot `t` is stored under raw slot `t - lag`.
pub fn write_features(path: &Path, features: &FeatureTensor) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    let m = features.n_features();
    let names: Vec<String> = (1..=m).map(|j| format!("f{j}")).collect();
    writeln!(w, "region_id,time_slot,{}", names.join(",")).map_err(io)?;
    let lag = features.lag() as i64;
    for n in 0..features.n_regions() {
        for t in 0..features.n_slots() + features.lookahead_len() {
            let slot = features.slot(t).expect("slot in range");
            write!(w, "{},{}", n + 1, t as i64 + 1 - lag).map_err(io)?;
            for v in slot.row(n) {
                write!(w, ",{v}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
    }
    finish(path, w)
}

pub fn write_regions(path: &Path, grid: &RegionGrid) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "region_id,centroid_x_km,centroid_y_km").map_err(io)?;
    for (i, [x, y]) in grid.centroids().iter().enumerate() {
        writeln!(w, "{},{x},{y}", i + 1).map_err(io)?;
    }
    finish(path, w)
}

/// Reads a raw feature file and returns, per region, the features of the
/// latest raw slot. With lag `tau` these are the features of slot `s + tau`.
pub fn read_latest_features(path: &Path, regions: usize) -> Result<(i64, ndarray::Array2<f64>)> {
    let mut rows = Rows::open(path, &["region_id", "time_slot"], false)?;
    let m = rows.width().saturating_sub(2);
    if m == 0 {
        return Err(Error::load(path, Some(1), "no feature columns"));
    }
    let mut latest: HashMap<usize, (i64, Vec<f64>)> = HashMap::new();
    rows.for_each(|path, line, rec| {
        if rec.len() != m + 2 {
            return Err(Error::load(path, Some(line), format!("expected {} fields, found {}", m + 2, rec.len())));
        }
        let n = parse_positive_id(path, line, &rec[0], "region_id")?;
        let s = parse_id(path, line, &rec[1], "time_slot")?;
        if n > regions {
            return Err(Error::load(path, Some(line), format!("region_id {n} exceeds model regions ({regions})")));
        }
        let v = (0..m).map(|j| parse_value(path, line, &rec[j + 2], &format!("feature f{}", j + 1))).collect::<Result<Vec<_>>>()?;
        match latest.get(&n) {
            Some((prev, _)) if *prev >= s => {}
            _ => {
                latest.insert(n, (s, v));
            }
        }
        Ok(())
    })?;
    let slot = latest.values().map(|(s, _)| *s).max().ok_or_else(|| Error::load(path, None, "no feature rows"))?;
    let mut out = ndarray::Array2::zeros((regions, m));
    for n in 1..=regions {
        match latest.get(&n) {
            Some((s, v)) if *s == slot => out.row_mut(n - 1).assign(&ndarray::ArrayView1::from(v.as_slice())),
            _ => return Err(Error::load(path, None, format!("region {n} has no row for slot {slot}"))),
        }
    }
    Ok((slot, out))
}
