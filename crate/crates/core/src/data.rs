//! Trip-level CSV ingestion and demand estimation, plus the distribution
//! file format the data-driven environments load.
//!
//! Demand is estimated per calendar date: every matching date yields a
//! normalised histogram over stations or grid cells, the histograms are
//! averaged, and cells that never saw a pickup are dropped.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Read;
use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{0}` named in the mapping is missing from the header")]
    MissingColumn(String),
    #[error("column mapping needs either a station column or both lat and lon columns")]
    IncompleteMapping,
    #[error("no valid trip rows ({skipped} skipped)")]
    NoRecords { skipped: usize },
    #[error("no trips match the weekday/hour filter")]
    NoMatchingTrips,
    #[error("invalid demand configuration: {0}")]
    Config(String),
    #[error("distribution file: {0}")]
    Distribution(String),
    #[error("duplicate action_id {0} in distribution file")]
    DuplicateId(usize),
    #[error("probabilities sum to {0}, expected 1")]
    BadSum(f64),
}

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, PartialEq)]
pub enum Location {
    Station(String),
    Point { lat: f64, lon: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripRecord {
    /// Local naive time as stored in the source data.
    pub timestamp: NaiveDateTime,
    pub location: Location,
}

/// Which CSV columns hold what.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMapping {
    pub timestamp: String,
    #[serde(default)]
    pub station: Option<String>,
    #[serde(default)]
    pub lat: Option<String>,
    #[serde(default)]
    pub lon: Option<String>,
    /// chrono format string; common formats are tried when absent.
    #[serde(default)]
    pub timestamp_format: Option<String>,
}

const TIMESTAMP_FORMATS: [&str; 7] = [
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%dT%H:%M",
    "%m/%d/%Y %H:%M:%S",
    "%m/%d/%Y %H:%M",
    "%m/%d/%Y %I:%M:%S %p",
];

fn parse_timestamp(raw: &str, format: Option<&str>) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    match format {
        Some(f) => NaiveDateTime::parse_from_str(raw, f).ok(),
        None => TIMESTAMP_FORMATS.iter().find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrips {
    pub records: Vec<TripRecord>,
    pub skipped: usize,
}

/// Streams trip rows; malformed rows are skipped and counted.
pub fn parse_trips<R: Read>(reader: R, mapping: &ColumnMapping) -> Result<ParsedTrips> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let ts_col = col(&mapping.timestamp)?;
    enum Loc {
        Station(usize),
        Point(usize, usize),
    }
    let loc = match (&mapping.station, &mapping.lat, &mapping.lon) {
        (Some(s), _, _) => Loc::Station(col(s)?),
        (None, Some(lat), Some(lon)) => Loc::Point(col(lat)?, col(lon)?),
        _ => return Err(DataError::IncompleteMapping),
    };

    let mut records = Vec::new();
    let mut skipped = 0;
    for row in rdr.records() {
        let Ok(row) = row else {
            skipped += 1;
            continue;
        };
        let Some(timestamp) = row.get(ts_col).and_then(|s| parse_timestamp(s, mapping.timestamp_format.as_deref()))
        else {
            skipped += 1;
            continue;
        };
        let location = match loc {
            Loc::Station(i) => match row.get(i) {
                Some(s) if !s.is_empty() => Location::Station(s.to_string()),
                _ => {
                    skipped += 1;
                    continue;
                }
            },
            Loc::Point(i, j) => {
                let lat = row.get(i).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite());
                let lon = row.get(j).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite());
                match (lat, lon) {
                    (Some(lat), Some(lon)) => Location::Point { lat, lon },
                    _ => {
                        skipped += 1;
                        continue;
                    }
                }
            }
        };
        records.push(TripRecord { timestamp, location });
    }
    if records.is_empty() {
        return Err(DataError::NoRecords { skipped });
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} malformed trip rows");
    }
    Ok(ParsedTrips { records, skipped })
}

/// Rectangular lat/lon mesh; cells are numbered row-major with rows along
/// latitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub rows: usize,
    pub cols: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lat_max > self.lat_min) || !(self.lon_max > self.lon_min) || self.rows == 0 || self.cols == 0 {
            return Err(DataError::Config(format!("degenerate grid {self:?}")));
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.rows * self.cols
    }

    /// `(row, col)` of a cell index.
    pub fn cell_position(&self, cell: usize) -> (usize, usize) {
        (cell / self.cols, cell % self.cols)
    }
}

fn bin(v: f64, lo: f64, hi: f64, n: usize) -> Option<usize> {
    if !(v >= lo && v <= hi) {
        return None;
    }
    let i = ((v - lo) / (hi - lo) * n as f64).floor() as usize;
    Some(i.min(n - 1))
}

/// Row-major cell of a point, or `None` outside the bounding box. Points on
/// the max edges belong to the last row/column.
pub fn grid_cell(lat: f64, lon: f64, grid: &GridSpec) -> Option<usize> {
    let r = bin(lat, grid.lat_min, grid.lat_max, grid.rows)?;
    let c = bin(lon, grid.lon_min, grid.lon_max, grid.cols)?;
    Some(r * grid.cols + c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemandEstimateConfig {
    /// 0 = Monday, ..., 6 = Sunday.
    pub weekday: u32,
    pub hour_start: u32,
    /// Exclusive.
    pub hour_end: u32,
    pub num_weeks: usize,
}

impl Default for DemandEstimateConfig {
    fn default() -> Self {
        Self { weekday: 5, hour_start: 0, hour_end: 24, num_weeks: 20 }
    }
}

impl DemandEstimateConfig {
    fn validate(&self) -> Result<()> {
        if self.weekday > 6 || self.hour_start >= self.hour_end || self.hour_end > 24 || self.num_weeks == 0 {
            return Err(DataError::Config(format!("{self:?}")));
        }
        Ok(())
    }
}

/// How trip locations map to action indices.
#[derive(Debug, Clone, PartialEq)]
pub enum Discretiser {
    /// One action per station label, in the given order.
    Stations(Vec<String>),
    Grid(GridSpec),
}

impl Discretiser {
    /// Station discretiser over every label seen in `trips`, sorted.
    pub fn stations_from(trips: &[TripRecord]) -> Self {
        let labels: BTreeSet<&str> = trips
            .iter()
            .filter_map(|t| match &t.location {
                Location::Station(s) => Some(s.as_str()),
                Location::Point { .. } => None,
            })
            .collect();
        Self::Stations(labels.into_iter().map(String::from).collect())
    }

    fn num_actions(&self) -> usize {
        match self {
            Self::Stations(s) => s.len(),
            Self::Grid(g) => g.num_cells(),
        }
    }

    fn label(&self, i: usize) -> String {
        match self {
            Self::Stations(s) => s[i].clone(),
            Self::Grid(_) => i.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandEstimate {
    /// Probability over the kept actions.
    pub demand: Vec<f64>,
    /// Index of each kept action in the discretiser's full action space.
    pub kept_actions: Vec<usize>,
    pub labels: Vec<String>,
    /// Dates that contributed a histogram, most recent first.
    pub dates: Vec<NaiveDate>,
    pub warnings: Vec<String>,
}

/// Averages per-date normalised histograms of the `num_weeks` most recent
/// matching dates, then drops zero-demand actions and renormalises.
pub fn estimate_demand(
    trips: &[TripRecord],
    cfg: &DemandEstimateConfig,
    discretiser: &Discretiser,
) -> Result<DemandEstimate> {
    cfg.validate()?;
    if let Discretiser::Grid(g) = discretiser {
        g.validate()?;
    }
    let station_index: std::collections::HashMap<&str, usize> = match discretiser {
        Discretiser::Stations(s) => s.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect(),
        Discretiser::Grid(_) => Default::default(),
    };
    let mut warnings = Vec::new();
    let mut unmapped = 0usize;
    let mut per_date: BTreeMap<NaiveDate, Vec<usize>> = BTreeMap::new();
    let mut any_match = false;
    for t in trips {
        let ts = t.timestamp;
        if ts.weekday().num_days_from_monday() != cfg.weekday || ts.hour() < cfg.hour_start || ts.hour() >= cfg.hour_end
        {
            continue;
        }
        any_match = true;
        let cell = match (&t.location, discretiser) {
            (Location::Station(s), Discretiser::Stations(_)) => station_index.get(s.as_str()).copied(),
            (Location::Point { lat, lon }, Discretiser::Grid(g)) => grid_cell(*lat, *lon, g),
            _ => None,
        };
        match cell {
            Some(c) => per_date.entry(ts.date()).or_default().push(c),
            None => unmapped += 1,
        }
    }
    if !any_match || per_date.is_empty() {
        return Err(DataError::NoMatchingTrips);
    }
    if unmapped > 0 {
        warnings.push(format!("{unmapped} matching trips fell outside the action space"));
    }

    let dates: Vec<NaiveDate> = per_date.keys().rev().take(cfg.num_weeks).copied().collect();
    if dates.len() < cfg.num_weeks {
        warnings.push(format!("only {} matching dates available, {} requested", dates.len(), cfg.num_weeks));
    }
    let na = discretiser.num_actions();
    let mut mean = vec![0.0; na];
    for d in &dates {
        let cells = &per_date[d];
        let mut hist = vec![0.0; na];
        for &c in cells {
            hist[c] += 1.0;
        }
        let total = cells.len() as f64;
        for (m, h) in mean.iter_mut().zip(&hist) {
            *m += h / total;
        }
    }
    for m in mean.iter_mut() {
        *m /= dates.len() as f64;
    }

    let kept_actions: Vec<usize> = (0..na).filter(|&i| mean[i] > 0.0).collect();
    let kept_total: f64 = kept_actions.iter().map(|&i| mean[i]).sum();
    let demand = kept_actions.iter().map(|&i| mean[i] / kept_total).collect();
    let labels = kept_actions.iter().map(|&i| discretiser.label(i)).collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(DemandEstimate { demand, kept_actions, labels, dates, warnings })
}

/// Contents of a distribution file.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionFile {
    pub action_ids: Vec<usize>,
    pub labels: Vec<String>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DistributionRow {
    action_id: usize,
    label: String,
    prob: f64,
}

/// Writes `action_id,label,prob` rows; probabilities use the shortest
/// decimal that parses back to the same `f64`.
pub fn save_distribution(path: &Path, labels: &[String], probs: &[f64]) -> Result<()> {
    if labels.len() != probs.len() {
        return Err(DataError::Distribution(format!("{} labels for {} probabilities", labels.len(), probs.len())));
    }
    let io = |source| DataError::Io { path: path.display().to_string(), source };
    let mut out = String::from("action_id,label,prob\n");
    for (i, (l, p)) in labels.iter().zip(probs).enumerate() {
        if l.contains([',', '"', '\n']) {
            return Err(DataError::Distribution(format!("label {l:?} needs quoting, which the format does not allow")));
        }
        out.push_str(&format!("{i},{l},{p}\n"));
    }
    std::fs::write(path, out).map_err(io)
}

pub fn load_distribution(path: &Path) -> Result<DistributionFile> {
    let file =
        std::fs::File::open(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    read_distribution(file)
}

pub fn read_distribution<R: Read>(reader: R) -> Result<DistributionFile> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["action_id", "label", "prob"] {
        return Err(DataError::Distribution(format!("unexpected header {headers:?}")));
    }
    let mut seen = HashSet::new();
    let mut out = DistributionFile { action_ids: Vec::new(), labels: Vec::new(), probs: Vec::new() };
    for row in rdr.deserialize::<DistributionRow>() {
        let row = row?;
        if !seen.insert(row.action_id) {
            return Err(DataError::DuplicateId(row.action_id));
        }
        if !(row.prob >= 0.0 && row.prob <= 1.0) {
            return Err(DataError::Distribution(format!("probability {} out of range", row.prob)));
        }
        let label = if row.label.is_empty() { row.action_id.to_string() } else { row.label };
        out.action_ids.push(row.action_id);
        out.labels.push(label);
        out.probs.push(row.prob);
    }
    if out.probs.is_empty() {
        return Err(DataError::Distribution("no rows".into()));
    }
    let sum: f64 = out.probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(DataError::BadSum(sum));
    }
    Ok(out)
}
