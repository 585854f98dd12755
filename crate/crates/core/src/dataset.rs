//! Spatio-temporal tabular datasets: loading, validation, partitioning,
//! chronological splitting, and normalisation statistics.
//!
//! A dataset is a flat table of samples, each tied to exactly one
//! `(time, cell)` pair. Time indices are plain integers carrying a month
//! label (1..=12); there is no calendar arithmetic beyond the convention
//! that the year of a timestep is `index.div_euclid(12)`, i.e. indices
//! count months as `year * 12 + (month - 1)`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("manifest is not valid JSON: {0}")]
    ManifestJson(#[from] serde_json::Error),
    #[error("duplicate column `{0}` in manifest")]
    DuplicateManifestColumn(String),
    #[error("manifest log column `{0}` is not a declared feature or target")]
    UnknownLogColumn(String),
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("manifest declares column `{0}` which is missing from the data file")]
    UndeclaredDataColumn(String),
    #[error("data column `{0}` is not declared in the manifest")]
    UnclaimedColumn(String),
    #[error("row {row}: non-finite value in column `{column}`")]
    NonFinite { row: usize, column: String },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("row {row}: duplicate (time, cell) pair")]
    DuplicateSample { row: usize },
    #[error("dense layout expects {expected} samples (times x cells) but file has {found}")]
    DenseShape { expected: usize, found: usize },
    #[error("month {0} out of range 1..=12")]
    MonthOutOfRange(u32),
    #[error("invalid partition spec: {0}")]
    InvalidPartition(String),
    #[error("partition spec selects zero grid cells")]
    EmptySpatialSelection,
    #[error("values length {values} does not match cell count {cells}")]
    CellValueMismatch { values: usize, cells: usize },
    #[error("grid weights vanish: every cell is polar")]
    AllPolarGrid,
    #[error("training index set is empty")]
    EmptyTrainSet,
    #[error("sample index {0} out of range")]
    SampleOutOfRange(usize),
    #[error("epsilon must be positive for log transforms, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("constant column `{0}` in training data (zero variance)")]
    ConstantColumn(String),
    #[error("log column `{column}`: value {value} at sample {row} is non-positive after offset")]
    LogDomain {
        column: String,
        value: f64,
        row: usize,
    },
    #[error("column count mismatch: normalizer has {expected}, matrix has {found}")]
    ColumnMismatch { expected: usize, found: usize },
    #[error("invalid split spec: {0}")]
    InvalidSplit(String),
    #[error("group `{0}` has too few timesteps to produce non-empty train/val/test splits")]
    UnsplittableGroup(String),
}

/// Meteorological season.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Season {
    Djf,
    Mam,
    Jja,
    Son,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Djf, Season::Mam, Season::Jja, Season::Son];

    pub fn label(self) -> &'static str {
        match self {
            Season::Djf => "DJF",
            Season::Mam => "MAM",
            Season::Jja => "JJA",
            Season::Son => "SON",
        }
    }

    pub fn from_label(s: &str) -> Option<Season> {
        match s.to_ascii_uppercase().as_str() {
            "DJF" => Some(Season::Djf),
            "MAM" => Some(Season::Mam),
            "JJA" => Some(Season::Jja),
            "SON" => Some(Season::Son),
            _ => None,
        }
    }
}

impl std::fmt::Display for Season {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Map a calendar month to its meteorological season.
pub fn season_of(month: u32) -> Result<Season, DatasetError> {
    match month {
        12 | 1 | 2 => Ok(Season::Djf),
        3..=5 => Ok(Season::Mam),
        6..=8 => Ok(Season::Jja),
        9..=11 => Ok(Season::Son),
        m => Err(DatasetError::MonthOutOfRange(m)),
    }
}

/// One timestep: an integer index plus its month label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeStep {
    pub index: i64,
    pub month: u32,
}

impl TimeStep {
    /// Year under the `index = year * 12 + (month - 1)` convention.
    pub fn year(self) -> i64 {
        self.index.div_euclid(12)
    }
}

/// One grid cell with its coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub id: u32,
    pub lat: f64,
    pub lon: f64,
}

/// Data layout declared by the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    #[default]
    Dense,
    Sparse,
}

/// Sidecar manifest declaring how the CSV columns are interpreted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub features: Vec<String>,
    pub targets: Vec<String>,
    #[serde(default)]
    pub log_columns: Vec<String>,
    #[serde(default)]
    pub layout: Layout,
}

impl DatasetManifest {
    pub fn from_path(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let mut seen = HashSet::new();
        for name in self.features.iter().chain(self.targets.iter()) {
            if !seen.insert(name.as_str()) {
                return Err(DatasetError::DuplicateManifestColumn(name.clone()));
            }
        }
        for name in &self.log_columns {
            if !seen.contains(name.as_str()) {
                return Err(DatasetError::UnknownLogColumn(name.clone()));
            }
        }
        Ok(())
    }
}

const RESERVED_COLUMNS: [&str; 4] = ["time", "month", "lat", "lon"];

/// Immutable spatio-temporal dataset. Safe for shared concurrent reads.
#[derive(Debug, Clone)]
pub struct ClimateDataset {
    times: Vec<TimeStep>,
    cells: Vec<GridCell>,
    feature_names: Vec<String>,
    target_names: Vec<String>,
    features: Array2<f64>,
    targets: Array2<f64>,
    /// sample -> (position in `times`, position in `cells`)
    sample_locs: Vec<(usize, usize)>,
    manifest: DatasetManifest,
}

impl ClimateDataset {
    /// Validating constructor for programmatically built datasets.
    ///
    /// `sample_locs[i]` ties sample `i` to `(times[ti], cells[ci])`; the
    /// pairs must be unique and the matrices must have one row per sample.
    pub fn from_parts(
        times: Vec<TimeStep>,
        cells: Vec<GridCell>,
        manifest: DatasetManifest,
        features: Array2<f64>,
        targets: Array2<f64>,
        sample_locs: Vec<(usize, usize)>,
    ) -> Result<Self, DatasetError> {
        manifest.validate()?;
        let n = sample_locs.len();
        if features.nrows() != n || targets.nrows() != n {
            return Err(DatasetError::DenseShape {
                expected: n,
                found: features.nrows(),
            });
        }
        if features.ncols() != manifest.features.len() || targets.ncols() != manifest.targets.len()
        {
            return Err(DatasetError::ColumnMismatch {
                expected: manifest.features.len(),
                found: features.ncols(),
            });
        }
        let mut seen = HashSet::with_capacity(n);
        for (row, &(ti, ci)) in sample_locs.iter().enumerate() {
            if ti >= times.len() || ci >= cells.len() {
                return Err(DatasetError::SampleOutOfRange(row));
            }
            if !seen.insert((ti, ci)) {
                return Err(DatasetError::DuplicateSample { row: row + 1 });
            }
        }
        for t in &times {
            season_of(t.month)?;
        }
        for (row, r) in features.outer_iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                if !v.is_finite() {
                    return Err(DatasetError::NonFinite {
                        row: row + 1,
                        column: manifest.features[j].clone(),
                    });
                }
            }
        }
        for (row, r) in targets.outer_iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                if !v.is_finite() {
                    return Err(DatasetError::NonFinite {
                        row: row + 1,
                        column: manifest.targets[j].clone(),
                    });
                }
            }
        }
        if manifest.layout == Layout::Dense && n != times.len() * cells.len() {
            return Err(DatasetError::DenseShape {
                expected: times.len() * cells.len(),
                found: n,
            });
        }
        Ok(ClimateDataset {
            feature_names: manifest.features.clone(),
            target_names: manifest.targets.clone(),
            times,
            cells,
            features,
            targets,
            sample_locs,
            manifest,
        })
    }

    /// Load and validate a CSV file against its JSON manifest.
    ///
    /// Row numbers in errors are 1-based over data rows (the header does
    /// not count).
    pub fn load(data_path: &Path, manifest_path: &Path) -> Result<Self, DatasetError> {
        let manifest = DatasetManifest::from_path(manifest_path)?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(data_path)
            .map_err(|e| match e.kind() {
                csv::ErrorKind::Io(_) => DatasetError::Io {
                    path: data_path.display().to_string(),
                    source: std::io::Error::other(e.to_string()),
                },
                _ => DatasetError::Csv(e),
            })?;
        let headers: Vec<String> = reader
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let col_index: HashMap<&str, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.as_str(), i))
            .collect();

        for required in RESERVED_COLUMNS {
            if !col_index.contains_key(required) {
                return Err(DatasetError::MissingColumn(required.to_string()));
            }
        }
        for name in manifest.features.iter().chain(manifest.targets.iter()) {
            if !col_index.contains_key(name.as_str()) {
                return Err(DatasetError::UndeclaredDataColumn(name.clone()));
            }
        }
        for h in &headers {
            let claimed = RESERVED_COLUMNS.contains(&h.as_str())
                || manifest.features.iter().any(|f| f == h)
                || manifest.targets.iter().any(|t| t == h);
            if !claimed {
                return Err(DatasetError::UnclaimedColumn(h.clone()));
            }
        }

        let time_col = col_index["time"];
        let month_col = col_index["month"];
        let lat_col = col_index["lat"];
        let lon_col = col_index["lon"];
        let feature_cols: Vec<usize> = manifest.features.iter().map(|n| col_index[n.as_str()]).collect();
        let target_cols: Vec<usize> = manifest.targets.iter().map(|n| col_index[n.as_str()]).collect();

        let mut times: Vec<TimeStep> = Vec::new();
        let mut time_pos: HashMap<i64, usize> = HashMap::new();
        let mut cells: Vec<GridCell> = Vec::new();
        let mut cell_pos: HashMap<(u64, u64), usize> = HashMap::new();
        let mut sample_locs: Vec<(usize, usize)> = Vec::new();
        let mut seen_pairs: HashSet<(usize, usize)> = HashSet::new();
        let mut feat_rows: Vec<f64> = Vec::new();
        let mut targ_rows: Vec<f64> = Vec::new();

        let parse_field = |record: &csv::StringRecord, col: usize, row: usize| -> Result<f64, DatasetError> {
            let raw = record.get(col).unwrap_or("").trim();
            raw.parse::<f64>().map_err(|_| DatasetError::Row {
                row,
                message: format!("cannot parse `{}` in column `{}` as a number", raw, headers[col]),
            })
        };

        for (i, record) in reader.records().enumerate() {
            let row = i + 1;
            let record = record?;
            let time: i64 = record
                .get(time_col)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| DatasetError::Row {
                    row,
                    message: "cannot parse `time` as an integer".to_string(),
                })?;
            let month: u32 = record
                .get(month_col)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| DatasetError::Row {
                    row,
                    message: "cannot parse `month` as an integer".to_string(),
                })?;
            if !(1..=12).contains(&month) {
                return Err(DatasetError::Row {
                    row,
                    message: format!("month {month} out of range 1..=12"),
                });
            }
            let lat = parse_field(&record, lat_col, row)?;
            let lon = parse_field(&record, lon_col, row)?;
            if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
                return Err(DatasetError::Row {
                    row,
                    message: format!("latitude {lat} outside [-90, 90]"),
                });
            }
            if !lon.is_finite() || !(-180.0..360.0).contains(&lon) {
                return Err(DatasetError::Row {
                    row,
                    message: format!("longitude {lon} outside [-180, 360)"),
                });
            }

            let ti = match time_pos.get(&time) {
                Some(&ti) => {
                    if times[ti].month != month {
                        return Err(DatasetError::Row {
                            row,
                            message: format!(
                                "time {} labelled month {} here but month {} earlier",
                                time, month, times[ti].month
                            ),
                        });
                    }
                    ti
                }
                None => {
                    times.push(TimeStep { index: time, month });
                    time_pos.insert(time, times.len() - 1);
                    times.len() - 1
                }
            };
            let key = (lat.to_bits(), lon.to_bits());
            let ci = match cell_pos.get(&key) {
                Some(&ci) => ci,
                None => {
                    let id = cells.len() as u32;
                    cells.push(GridCell { id, lat, lon });
                    cell_pos.insert(key, cells.len() - 1);
                    cells.len() - 1
                }
            };
            if !seen_pairs.insert((ti, ci)) {
                return Err(DatasetError::DuplicateSample { row });
            }
            sample_locs.push((ti, ci));

            for (&col, name) in feature_cols.iter().zip(&manifest.features) {
                let v = parse_field(&record, col, row)?;
                if !v.is_finite() {
                    return Err(DatasetError::NonFinite {
                        row,
                        column: name.clone(),
                    });
                }
                feat_rows.push(v);
            }
            for (&col, name) in target_cols.iter().zip(&manifest.targets) {
                let v = parse_field(&record, col, row)?;
                if !v.is_finite() {
                    return Err(DatasetError::NonFinite {
                        row,
                        column: name.clone(),
                    });
                }
                targ_rows.push(v);
            }
        }

        let n = sample_locs.len();
        let features = Array2::from_shape_vec((n, manifest.features.len()), feat_rows)
            .expect("row-major feature buffer matches shape");
        let targets = Array2::from_shape_vec((n, manifest.targets.len()), targ_rows)
            .expect("row-major target buffer matches shape");

        // Keep timesteps chronological regardless of file order.
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by_key(|&i| times[i].index);
        let rank: HashMap<usize, usize> = order.iter().enumerate().map(|(r, &i)| (i, r)).collect();
        let times: Vec<TimeStep> = order.iter().map(|&i| times[i]).collect();
        let sample_locs: Vec<(usize, usize)> =
            sample_locs.into_iter().map(|(ti, ci)| (rank[&ti], ci)).collect();

        ClimateDataset::from_parts(times, cells, manifest, features, targets, sample_locs)
    }

    pub fn n_samples(&self) -> usize {
        self.sample_locs.len()
    }

    pub fn d_in(&self) -> usize {
        self.feature_names.len()
    }

    pub fn d_out(&self) -> usize {
        self.target_names.len()
    }

    pub fn times(&self) -> &[TimeStep] {
        &self.times
    }

    pub fn cells(&self) -> &[GridCell] {
        &self.cells
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_names(&self) -> &[String] {
        &self.target_names
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn targets(&self) -> ArrayView2<'_, f64> {
        self.targets.view()
    }

    pub fn sample_time(&self, sample: usize) -> TimeStep {
        self.times[self.sample_locs[sample].0]
    }

    pub fn sample_cell(&self, sample: usize) -> GridCell {
        self.cells[self.sample_locs[sample].1]
    }

    /// Gather feature rows for the given sample indices.
    pub fn feature_rows(&self, indices: &[usize]) -> Array2<f64> {
        gather_rows(&self.features, indices)
    }

    /// Gather target rows for the given sample indices.
    pub fn target_rows(&self, indices: &[usize]) -> Array2<f64> {
        gather_rows(&self.targets, indices)
    }

    /// Position of a feature column by name.
    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Position of a target column by name.
    pub fn target_index(&self, name: &str) -> Option<usize> {
        self.target_names.iter().position(|n| n == name)
    }

    /// Write the dataset back out as CSV + JSON manifest, with floats at
    /// 17 significant digits so values round-trip exactly.
    pub fn write(&self, data_path: &Path, manifest_path: &Path) -> Result<(), DatasetError> {
        let manifest_text =
            serde_json::to_string_pretty(&self.manifest).expect("manifest serialises");
        std::fs::write(manifest_path, manifest_text).map_err(|source| DatasetError::Io {
            path: manifest_path.display().to_string(),
            source,
        })?;

        let mut out = String::new();
        out.push_str("time,month,lat,lon");
        for name in self.feature_names.iter().chain(self.target_names.iter()) {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, &(ti, ci)) in self.sample_locs.iter().enumerate() {
            let t = self.times[ti];
            let c = self.cells[ci];
            write!(out, "{},{},{:.16e},{:.16e}", t.index, t.month, c.lat, c.lon).unwrap();
            for v in self.features.row(i) {
                write!(out, ",{v:.16e}").unwrap();
            }
            for v in self.targets.row(i) {
                write!(out, ",{v:.16e}").unwrap();
            }
            out.push('\n');
        }
        std::fs::write(data_path, out).map_err(|source| DatasetError::Io {
            path: data_path.display().to_string(),
            source,
        })
    }
}

fn gather_rows(m: &Array2<f64>, indices: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((indices.len(), m.ncols()));
    for (r, &i) in indices.iter().enumerate() {
        out.row_mut(r).assign(&m.row(i));
    }
    out
}

/// Free-function form of [`ClimateDataset::load`].
pub fn load_dataset(data_path: &Path, manifest_path: &Path) -> Result<ClimateDataset, DatasetError> {
    ClimateDataset::load(data_path, manifest_path)
}

/// Temporal half of a partition spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TemporalRule {
    /// Four seasonal groups keyed DJF / MAM / JJA / SON.
    Seasons,
    /// Inclusive year ranges; timesteps outside every range stay unassigned.
    YearIntervals(Vec<(i64, i64)>),
}

/// Spatial half of a partition spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SpatialRule {
    /// Inclusive latitude band.
    LatBand { lat_min: f64, lat_max: f64 },
    /// Explicit cell-id set.
    Cells(BTreeSet<u32>),
}

impl SpatialRule {
    pub fn global() -> SpatialRule {
        SpatialRule::LatBand {
            lat_min: -90.0,
            lat_max: 90.0,
        }
    }

    fn contains(&self, cell: &GridCell) -> bool {
        match self {
            SpatialRule::LatBand { lat_min, lat_max } => {
                cell.lat >= *lat_min && cell.lat <= *lat_max
            }
            SpatialRule::Cells(set) => set.contains(&cell.id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub temporal: TemporalRule,
    pub spatial: SpatialRule,
}

impl PartitionSpec {
    pub fn seasonal_global() -> PartitionSpec {
        PartitionSpec {
            temporal: TemporalRule::Seasons,
            spatial: SpatialRule::global(),
        }
    }

    pub fn validate(&self, ds: &ClimateDataset) -> Result<(), DatasetError> {
        if let TemporalRule::YearIntervals(intervals) = &self.temporal {
            if intervals.is_empty() {
                return Err(DatasetError::InvalidPartition(
                    "year interval list is empty".to_string(),
                ));
            }
            let mut sorted = intervals.clone();
            sorted.sort();
            for (lo, hi) in &sorted {
                if lo > hi {
                    return Err(DatasetError::InvalidPartition(format!(
                        "interval {lo}-{hi} has lo > hi"
                    )));
                }
            }
            for w in sorted.windows(2) {
                if w[1].0 <= w[0].1 {
                    return Err(DatasetError::InvalidPartition(format!(
                        "intervals {}-{} and {}-{} overlap",
                        w[0].0, w[0].1, w[1].0, w[1].1
                    )));
                }
            }
        }
        if let SpatialRule::LatBand { lat_min, lat_max } = self.spatial {
            if lat_min > lat_max {
                return Err(DatasetError::InvalidPartition(format!(
                    "latitude band [{lat_min}, {lat_max}] has lat_min > lat_max"
                )));
            }
        }
        if !ds.cells().iter().any(|c| self.spatial.contains(c)) {
            return Err(DatasetError::EmptySpatialSelection);
        }
        Ok(())
    }
}

/// Split a dataset into groups of sample indices.
///
/// Every group key the rule defines is present in the output, including
/// empty ones; groups are pairwise disjoint and their union is exactly the
/// set of samples inside the spec's spatial/temporal restriction.
pub fn partition(
    ds: &ClimateDataset,
    spec: &PartitionSpec,
) -> Result<BTreeMap<String, Vec<usize>>, DatasetError> {
    spec.validate(ds)?;
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    match &spec.temporal {
        TemporalRule::Seasons => {
            for s in Season::ALL {
                groups.insert(s.label().to_string(), Vec::new());
            }
        }
        TemporalRule::YearIntervals(intervals) => {
            for (lo, hi) in intervals {
                groups.insert(format!("{lo}-{hi}"), Vec::new());
            }
        }
    }
    for sample in 0..ds.n_samples() {
        let cell = ds.sample_cell(sample);
        if !spec.spatial.contains(&cell) {
            continue;
        }
        let t = ds.sample_time(sample);
        let key = match &spec.temporal {
            TemporalRule::Seasons => Some(season_of(t.month)?.label().to_string()),
            TemporalRule::YearIntervals(intervals) => {
                let year = t.year();
                intervals
                    .iter()
                    .find(|(lo, hi)| year >= *lo && year <= *hi)
                    .map(|(lo, hi)| format!("{lo}-{hi}"))
            }
        };
        if let Some(key) = key {
            groups.get_mut(&key).expect("key pre-inserted").push(sample);
        }
    }
    Ok(groups)
}

/// Normalised cos-latitude weights over a cell sequence; they sum to one.
pub fn area_weights(cells: &[GridCell]) -> Result<Vec<f64>, DatasetError> {
    let raw: Vec<f64> = cells
        .iter()
        .map(|c| (c.lat.to_radians()).cos().max(0.0))
        .collect();
    let total: f64 = raw.iter().sum();
    if total <= 1e-12 {
        return Err(DatasetError::AllPolarGrid);
    }
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Area-weighted mean of one value per cell, weighted by cos(latitude).
pub fn area_weighted_mean(values: &[f64], cells: &[GridCell]) -> Result<f64, DatasetError> {
    if values.len() != cells.len() {
        return Err(DatasetError::CellValueMismatch {
            values: values.len(),
            cells: cells.len(),
        });
    }
    let weights = area_weights(cells)?;
    Ok(values.iter().zip(&weights).map(|(v, w)| v * w).sum())
}

/// Chronological split fractions. Validation is the final `val_fraction`
/// of the training timesteps; the test block is the final `test_fraction`
/// of all timesteps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub val_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.2,
            val_fraction: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSplits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Assign a group's samples to train/val/test by timestep.
///
/// Timesteps are ordered by index; the split is time-contiguous with every
/// validation timestep strictly later than every training timestep and the
/// test block last.
pub fn split_group(
    ds: &ClimateDataset,
    group_name: &str,
    group: &[usize],
    spec: &SplitSpec,
) -> Result<GroupSplits, DatasetError> {
    if !(0.0..1.0).contains(&spec.test_fraction) || !(0.0..1.0).contains(&spec.val_fraction) {
        return Err(DatasetError::InvalidSplit(format!(
            "fractions must lie in [0, 1): test={}, val={}",
            spec.test_fraction, spec.val_fraction
        )));
    }
    let mut group_times: Vec<i64> = group
        .iter()
        .map(|&s| ds.sample_time(s).index)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    group_times.sort_unstable();
    let n_t = group_times.len();
    let n_test = if spec.test_fraction > 0.0 {
        ((n_t as f64 * spec.test_fraction).round() as usize).max(1)
    } else {
        0
    };
    if n_test >= n_t {
        return Err(DatasetError::UnsplittableGroup(group_name.to_string()));
    }
    let n_trainval = n_t - n_test;
    let n_val = if spec.val_fraction > 0.0 {
        ((n_trainval as f64 * spec.val_fraction).round() as usize).max(1)
    } else {
        0
    };
    if n_val >= n_trainval {
        return Err(DatasetError::UnsplittableGroup(group_name.to_string()));
    }
    let n_train = n_trainval - n_val;

    let class_of: HashMap<i64, u8> = group_times
        .iter()
        .enumerate()
        .map(|(pos, &t)| {
            let class = if pos < n_train {
                0
            } else if pos < n_trainval {
                1
            } else {
                2
            };
            (t, class)
        })
        .collect();
    let mut splits = GroupSplits {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for &s in group {
        match class_of[&ds.sample_time(s).index] {
            0 => splits.train.push(s),
            1 => splits.val.push(s),
            _ => splits.test.push(s),
        }
    }
    Ok(splits)
}

/// Per-column normalisation statistics (population convention, train-only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    /// `Some(eps)` when the column is log-transformed as `ln(x + eps)`
    /// before standardisation.
    pub log_offset: Option<f64>,
}

/// Frozen feature/target statistics fitted on training samples only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub features: Vec<ColumnStats>,
    pub targets: Vec<ColumnStats>,
}

/// Fit normalisation statistics over `train_idx` only.
///
/// Columns named in `log_columns` are transformed as `ln(x + epsilon)`
/// before the mean/std are computed; the std uses the population
/// convention (divide by N).
pub fn fit_normalizer(
    ds: &ClimateDataset,
    train_idx: &[usize],
    log_columns: &[String],
    epsilon: f64,
) -> Result<Normalizer, DatasetError> {
    if train_idx.is_empty() {
        return Err(DatasetError::EmptyTrainSet);
    }
    if !log_columns.is_empty() && epsilon <= 0.0 {
        return Err(DatasetError::NonPositiveEpsilon(epsilon));
    }
    for name in log_columns {
        if ds.feature_index(name).is_none() && ds.target_index(name).is_none() {
            return Err(DatasetError::UnknownLogColumn(name.clone()));
        }
    }
    for &i in train_idx {
        if i >= ds.n_samples() {
            return Err(DatasetError::SampleOutOfRange(i));
        }
    }
    let is_log = |name: &str| log_columns.iter().any(|c| c == name);
    let fit_columns = |matrix: ArrayView2<'_, f64>, names: &[String]| -> Result<Vec<ColumnStats>, DatasetError> {
        let mut stats = Vec::with_capacity(names.len());
        for (j, name) in names.iter().enumerate() {
            let log_offset = if is_log(name) { Some(epsilon) } else { None };
            let mut vals = Vec::with_capacity(train_idx.len());
            for &i in train_idx {
                let mut v = matrix[(i, j)];
                if let Some(eps) = log_offset {
                    let shifted = v + eps;
                    if shifted <= 0.0 {
                        return Err(DatasetError::LogDomain {
                            column: name.clone(),
                            value: v,
                            row: i,
                        });
                    }
                    v = shifted.ln();
                }
                vals.push(v);
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            if std < 1e-12 * mean.abs().max(1.0) {
                return Err(DatasetError::ConstantColumn(name.clone()));
            }
            stats.push(ColumnStats {
                name: name.clone(),
                mean,
                std,
                log_offset,
            });
        }
        Ok(stats)
    };
    Ok(Normalizer {
        features: fit_columns(ds.features(), ds.feature_names())?,
        targets: fit_columns(ds.targets(), ds.target_names())?,
    })
}

impl Normalizer {
    fn apply(stats: &[ColumnStats], m: ArrayView2<'_, f64>) -> Result<Array2<f64>, DatasetError> {
        if m.ncols() != stats.len() {
            return Err(DatasetError::ColumnMismatch {
                expected: stats.len(),
                found: m.ncols(),
            });
        }
        let mut out = m.to_owned();
        for (j, s) in stats.iter().enumerate() {
            for v in out.column_mut(j) {
                if let Some(eps) = s.log_offset {
                    *v = (*v + eps).ln();
                }
                *v = (*v - s.mean) / s.std;
            }
        }
        Ok(out)
    }

    fn unapply(stats: &[ColumnStats], m: ArrayView2<'_, f64>) -> Result<Array2<f64>, DatasetError> {
        if m.ncols() != stats.len() {
            return Err(DatasetError::ColumnMismatch {
                expected: stats.len(),
                found: m.ncols(),
            });
        }
        let mut out = m.to_owned();
        for (j, s) in stats.iter().enumerate() {
            for v in out.column_mut(j) {
                *v = *v * s.std + s.mean;
                if let Some(eps) = s.log_offset {
                    *v = v.exp() - eps;
                }
            }
        }
        Ok(out)
    }

    pub fn transform_features(&self, m: ArrayView2<'_, f64>) -> Result<Array2<f64>, DatasetError> {
        Self::apply(&self.features, m)
    }

    pub fn transform_targets(&self, m: ArrayView2<'_, f64>) -> Result<Array2<f64>, DatasetError> {
        Self::apply(&self.targets, m)
    }

    pub fn inverse_transform_features(
        &self,
        m: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>, DatasetError> {
        Self::unapply(&self.features, m)
    }

    pub fn inverse_transform_targets(
        &self,
        m: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>, DatasetError> {
        Self::unapply(&self.targets, m)
    }
}
