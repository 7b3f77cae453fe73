//! Building and weather time series: CSV ingestion, validation, and a
//! deterministic synthetic generator that emits the same schema.
//!
//! A dataset directory holds
//!
//! * `district.toml` with the district metadata and per-building storage/PV
//!   sizing,
//! * one `building_<id>.csv` per building
//!   (`hour_index,cooling_demand_kwh,dhw_demand_kwh,non_shiftable_load_kwh,solar_gen_kwh_per_kw`),
//! * `weather.csv` (`hour_index,t_out_c,direct_solar_w_m2`).
//!
//! Absent DHW or PV series are written as empty cells.

use std::f64::consts::PI;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::agents::RbcSchedule;

pub const DISTRICT_FILE: &str = "district.toml";
pub const WEATHER_FILE: &str = "weather.csv";
pub const BUILDING_HEADER: [&str; 5] = [
    "hour_index",
    "cooling_demand_kwh",
    "dhw_demand_kwh",
    "non_shiftable_load_kwh",
    "solar_gen_kwh_per_kw",
];
pub const WEATHER_HEADER: [&str; 3] = ["hour_index", "t_out_c", "direct_solar_w_m2"];

/// Hours in a 365-day year; the only horizon that uses 730-hour months.
pub const HOURS_PER_YEAR: usize = 8760;
const HOURS_PER_MONTH_YEAR: usize = 730;
const HOURS_PER_MONTH_OTHER: usize = 30 * 24;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("schema mismatch in {file}: {detail}")]
    SchemaMismatch { file: String, detail: String },
    #[error("length mismatch: {what} has {found} entries, expected {expected}")]
    LengthMismatch {
        what: String,
        found: usize,
        expected: usize,
    },
    #[error("negative or non-finite value {value} in {what} at hour {hour}")]
    NegativeDemand { what: String, hour: usize, value: f64 },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("building {building} has no {kind:?} storage")]
    NoSuchStorage { building: u32, kind: StorageKind },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("config error in {path}: {detail}")]
    Config { path: PathBuf, detail: String },
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BuildingType {
    Commercial,
    Residential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StorageKind {
    Cooling,
    Dhw,
}

/// Static description of one building.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildingSpec {
    pub id: u32,
    pub building_type: BuildingType,
    pub cooling_demand: Vec<f64>,
    pub dhw_demand: Option<Vec<f64>>,
    pub non_shiftable_load: Vec<f64>,
    pub solar_gen_per_kw: Option<Vec<f64>>,
    pub pv_kw: f64,
    pub cooling_storage_factor: f64,
    pub dhw_storage_factor: f64,
}

impl BuildingSpec {
    pub fn horizon(&self) -> usize {
        self.cooling_demand.len()
    }

    pub fn has_pv(&self) -> bool {
        self.pv_kw > 0.0
    }

    pub fn has_dhw_storage(&self) -> bool {
        self.dhw_storage_factor > 0.0
    }

    /// PV generation in kWh at hour `t`.
    pub fn solar_generation(&self, t: usize) -> f64 {
        match (&self.solar_gen_per_kw, self.has_pv()) {
            (Some(per_kw), true) => self.pv_kw * per_kw[t],
            _ => 0.0,
        }
    }

    pub fn demand(&self, kind: StorageKind, t: usize) -> f64 {
        match kind {
            StorageKind::Cooling => self.cooling_demand[t],
            StorageKind::Dhw => self.dhw_demand.as_ref().map_or(0.0, |d| d[t]),
        }
    }

    fn validate(&self, expected_len: usize) -> Result<()> {
        let name = |s: &str| format!("building {} {s}", self.id);
        check_series(&name("cooling_demand"), &self.cooling_demand, expected_len)?;
        check_series(&name("non_shiftable_load"), &self.non_shiftable_load, expected_len)?;
        if let Some(dhw) = &self.dhw_demand {
            check_series(&name("dhw_demand"), dhw, expected_len)?;
        }
        if let Some(solar) = &self.solar_gen_per_kw {
            check_series(&name("solar_gen_per_kw"), solar, expected_len)?;
        }
        for (label, v) in [
            ("pv_kw", self.pv_kw),
            ("cooling_storage_factor", self.cooling_storage_factor),
            ("dhw_storage_factor", self.dhw_storage_factor),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(DataError::Invalid(format!("{} must be >= 0, got {v}", name(label))));
            }
        }
        if self.has_dhw_storage() && self.dhw_demand.is_none() {
            return Err(DataError::Invalid(format!(
                "building {} has DHW storage but no DHW demand series",
                self.id
            )));
        }
        if self.has_pv() && self.solar_gen_per_kw.is_none() {
            return Err(DataError::Invalid(format!(
                "building {} has PV but no solar generation series",
                self.id
            )));
        }
        Ok(())
    }
}

fn check_series(what: &str, values: &[f64], expected_len: usize) -> Result<()> {
    if values.len() != expected_len {
        return Err(DataError::LengthMismatch {
            what: what.to_string(),
            found: values.len(),
            expected: expected_len,
        });
    }
    if let Some((hour, &value)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
    {
        return Err(DataError::NegativeDemand {
            what: what.to_string(),
            hour,
            value,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    pub t_out: Vec<f64>,
    pub direct_solar_rad: Vec<f64>,
}

/// A validated district: buildings in fixed order plus shared weather.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub climate_zone_label: String,
    pub buildings: Vec<BuildingSpec>,
    pub weather: WeatherSeries,
    pub start_month: u8,
    pub start_weekday: u8,
    /// Optional override of the baseline schedule, read from the district file.
    pub rbc_schedule: Option<RbcSchedule>,
}

impl Dataset {
    /// Checks every structural invariant and returns the dataset unchanged.
    pub fn validated(self) -> Result<Self> {
        let first = self
            .buildings
            .first()
            .ok_or_else(|| DataError::Invalid("dataset has no buildings".into()))?;
        let horizon = first.horizon();
        if horizon == 0 || horizon % 24 != 0 {
            return Err(DataError::Invalid(format!(
                "horizon {horizon} is not a positive multiple of 24"
            )));
        }
        for b in &self.buildings {
            b.validate(horizon)?;
        }
        if self.weather.t_out.len() != horizon {
            return Err(DataError::LengthMismatch {
                what: "weather t_out".into(),
                found: self.weather.t_out.len(),
                expected: horizon,
            });
        }
        if let Some(h) = self.weather.t_out.iter().position(|v| !v.is_finite()) {
            return Err(DataError::Invalid(format!("t_out not finite at hour {h}")));
        }
        check_series("weather direct_solar_rad", &self.weather.direct_solar_rad, horizon)?;
        if !(1..=12).contains(&self.start_month) {
            return Err(DataError::Invalid(format!("start_month {} not in 1..=12", self.start_month)));
        }
        if !(1..=7).contains(&self.start_weekday) {
            return Err(DataError::Invalid(format!(
                "start_weekday {} not in 1..=7",
                self.start_weekday
            )));
        }
        if let Some(schedule) = &self.rbc_schedule {
            schedule.validate().map_err(DataError::Invalid)?;
        }
        Ok(self)
    }

    /// Number of hourly steps shared by every series.
    pub fn horizon(&self) -> usize {
        self.weather.t_out.len()
    }

    pub fn n_buildings(&self) -> usize {
        self.buildings.len()
    }

    pub fn month_blocks(&self) -> Vec<Range<usize>> {
        month_blocks_for(self.horizon())
    }

    /// Month number (1-12) of step `t`.
    pub fn month_at(&self, t: usize) -> u8 {
        let block = t / month_block_len(self.horizon());
        ((usize::from(self.start_month) - 1 + block) % 12 + 1) as u8
    }

    /// Day of week (1-7) of step `t`.
    pub fn weekday_at(&self, t: usize) -> u8 {
        ((usize::from(self.start_weekday) - 1 + t / 24) % 7 + 1) as u8
    }
}

fn month_block_len(horizon: usize) -> usize {
    if horizon == HOURS_PER_YEAR {
        HOURS_PER_MONTH_YEAR
    } else {
        HOURS_PER_MONTH_OTHER
    }
}

/// Month boundaries for a horizon: twelve 730-hour blocks for a full year,
/// otherwise consecutive 30-day blocks with a shorter tail block.
pub fn month_blocks_for(horizon: usize) -> Vec<Range<usize>> {
    let len = month_block_len(horizon);
    (0..horizon)
        .step_by(len)
        .map(|start| start..(start + len).min(horizon))
        .collect()
}

/// Storage capacity in kWh: scaling factor times the peak demand it serves.
pub fn storage_capacity(spec: &BuildingSpec, kind: StorageKind) -> Result<f64> {
    let (factor, series) = match kind {
        StorageKind::Cooling => (spec.cooling_storage_factor, Some(&spec.cooling_demand)),
        StorageKind::Dhw => (spec.dhw_storage_factor, spec.dhw_demand.as_ref()),
    };
    match series {
        Some(series) if factor > 0.0 => Ok(factor * series.iter().copied().fold(0.0, f64::max)),
        _ => Err(DataError::NoSuchStorage {
            building: spec.id,
            kind,
        }),
    }
}

// ---------------------------------------------------------------------------
// District file

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DistrictFile {
    climate_zone_label: String,
    start_month: u8,
    start_weekday: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rbc: Option<RbcSchedule>,
    buildings: Vec<BuildingEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BuildingEntry {
    id: u32,
    #[serde(rename = "type")]
    building_type: BuildingType,
    cooling_storage_factor: f64,
    dhw_storage_factor: f64,
    pv_kw: f64,
}

pub fn building_file_name(id: u32) -> String {
    format!("building_{id}.csv")
}

/// Loads and validates a dataset directory.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<Dataset> {
    let root = root.as_ref();
    let district_path = root.join(DISTRICT_FILE);
    let text = read_required(&district_path)?;
    let district: DistrictFile = toml::from_str(&text).map_err(|e| DataError::Config {
        path: district_path.clone(),
        detail: e.to_string(),
    })?;

    let mut buildings = Vec::with_capacity(district.buildings.len());
    for entry in &district.buildings {
        let path = root.join(building_file_name(entry.id));
        let columns = read_columns(&path, &BUILDING_HEADER)?;
        let file = path.display().to_string();
        let [_, cooling, dhw, load, solar] = columns;
        buildings.push(BuildingSpec {
            id: entry.id,
            building_type: entry.building_type,
            cooling_demand: required_column(&file, BUILDING_HEADER[1], cooling)?,
            dhw_demand: optional_column(&file, BUILDING_HEADER[2], dhw)?,
            non_shiftable_load: required_column(&file, BUILDING_HEADER[3], load)?,
            solar_gen_per_kw: optional_column(&file, BUILDING_HEADER[4], solar)?,
            pv_kw: entry.pv_kw,
            cooling_storage_factor: entry.cooling_storage_factor,
            dhw_storage_factor: entry.dhw_storage_factor,
        });
    }

    let weather_path = root.join(WEATHER_FILE);
    let file = weather_path.display().to_string();
    let [_, t_out, rad] = read_columns(&weather_path, &WEATHER_HEADER)?;
    let weather = WeatherSeries {
        t_out: required_column(&file, WEATHER_HEADER[1], t_out)?,
        direct_solar_rad: required_column(&file, WEATHER_HEADER[2], rad)?,
    };

    Dataset {
        climate_zone_label: district.climate_zone_label,
        buildings,
        weather,
        start_month: district.start_month,
        start_weekday: district.start_weekday,
        rbc_schedule: district.rbc,
    }
    .validated()
}

fn read_required(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            DataError::MissingFile(path.to_path_buf())
        } else {
            DataError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })
}

/// Reads a CSV with an exact header into raw string columns. Empty cells are `None`.
fn read_columns<const N: usize>(
    path: &Path,
    header: &[&str; N],
) -> Result<[Vec<Option<f64>>; N]> {
    if !path.exists() {
        return Err(DataError::MissingFile(path.to_path_buf()));
    }
    let csv_err = |source| DataError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(csv_err)?;
    let found: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(|s| s.trim().to_string()).collect();
    if found != header.iter().map(|s| s.to_string()).collect::<Vec<_>>() {
        return Err(DataError::SchemaMismatch {
            file,
            detail: format!("expected header {header:?}, found {found:?}"),
        });
    }
    let mut columns: [Vec<Option<f64>>; N] = std::array::from_fn(|_| Vec::new());
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.len() != N {
            return Err(DataError::SchemaMismatch {
                file,
                detail: format!("row {row} has {} fields, expected {N}", record.len()),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            let value = if cell.is_empty() {
                None
            } else {
                Some(cell.parse::<f64>().map_err(|_| DataError::SchemaMismatch {
                    file: file.clone(),
                    detail: format!("row {row} column {} is not a number: {cell:?}", header[col]),
                })?)
            };
            columns[col].push(value);
        }
        if columns[0][row] != Some(row as f64) {
            return Err(DataError::SchemaMismatch {
                file,
                detail: format!("hour_index at row {row} is not {row}"),
            });
        }
    }
    Ok(columns)
}

fn required_column(file: &str, name: &str, column: Vec<Option<f64>>) -> Result<Vec<f64>> {
    column
        .into_iter()
        .enumerate()
        .map(|(row, v)| {
            v.ok_or_else(|| DataError::SchemaMismatch {
                file: file.to_string(),
                detail: format!("column {name} is empty at row {row}"),
            })
        })
        .collect()
}

fn optional_column(file: &str, name: &str, column: Vec<Option<f64>>) -> Result<Option<Vec<f64>>> {
    if column.iter().all(Option::is_none) {
        return Ok(None);
    }
    required_column(file, name, column).map(Some)
}

/// Formats a value rounded to six significant digits, shortest form.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{v:.5e}").parse().unwrap_or(v);
    format!("{rounded}")
}

/// Writes a dataset directory in the format read by [`load_dataset`].
pub fn save_dataset(dataset: &Dataset, root: impl AsRef<Path>) -> Result<()> {
    let root = root.as_ref();
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DataError::Io { path, source }
    };
    fs::create_dir_all(root).map_err(io_err(root))?;

    let district = DistrictFile {
        climate_zone_label: dataset.climate_zone_label.clone(),
        start_month: dataset.start_month,
        start_weekday: dataset.start_weekday,
        rbc: dataset.rbc_schedule.clone(),
        buildings: dataset
            .buildings
            .iter()
            .map(|b| BuildingEntry {
                id: b.id,
                building_type: b.building_type,
                cooling_storage_factor: b.cooling_storage_factor,
                dhw_storage_factor: b.dhw_storage_factor,
                pv_kw: b.pv_kw,
            })
            .collect(),
    };
    let district_path = root.join(DISTRICT_FILE);
    let text = toml::to_string(&district).map_err(|e| DataError::Config {
        path: district_path.clone(),
        detail: e.to_string(),
    })?;
    fs::write(&district_path, text).map_err(io_err(&district_path))?;

    let cell = |series: Option<&Vec<f64>>, t: usize| series.map_or(String::new(), |s| format_sig6(s[t]));
    for b in &dataset.buildings {
        let path = root.join(building_file_name(b.id));
        let mut out = String::with_capacity(b.horizon() * 40);
        out.push_str(&BUILDING_HEADER.join(","));
        out.push('\n');
        for t in 0..b.horizon() {
            out.push_str(&format!(
                "{t},{},{},{},{}\n",
                format_sig6(b.cooling_demand[t]),
                cell(b.dhw_demand.as_ref(), t),
                format_sig6(b.non_shiftable_load[t]),
                cell(b.solar_gen_per_kw.as_ref(), t),
            ));
        }
        fs::write(&path, out).map_err(io_err(&path))?;
    }

    let path = root.join(WEATHER_FILE);
    let mut out = WEATHER_HEADER.join(",");
    out.push('\n');
    for t in 0..dataset.horizon() {
        out.push_str(&format!(
            "{t},{},{}\n",
            format_sig6(dataset.weather.t_out[t]),
            format_sig6(dataset.weather.direct_solar_rad[t])
        ));
    }
    fs::write(&path, out).map_err(io_err(&path))
}

// ---------------------------------------------------------------------------
// Synthetic data

/// Knobs for the synthetic generator beyond size and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticOptions {
    pub n_buildings: usize,
    pub days: usize,
    pub seed: u64,
    /// Added to every outdoor temperature; used to mimic a hotter or colder zone.
    pub t_out_offset: f64,
    pub start_month: u8,
    pub climate_zone_label: Option<String>,
}

impl SyntheticOptions {
    pub fn new(n_buildings: usize, days: usize, seed: u64) -> Self {
        Self {
            n_buildings,
            days,
            seed,
            t_out_offset: 0.0,
            start_month: 1,
            climate_zone_label: None,
        }
    }
}

/// Nine-building template: (type, cooling factor, DHW factor, PV kW).
const TEMPLATE: [(BuildingType, f64, f64, f64); 9] = [
    (BuildingType::Commercial, 3.0, 3.0, 120.0),
    (BuildingType::Commercial, 3.0, 3.0, 0.0),
    (BuildingType::Commercial, 3.0, 0.0, 0.0),
    (BuildingType::Commercial, 3.0, 0.0, 40.0),
    (BuildingType::Residential, 3.0, 3.0, 25.0),
    (BuildingType::Residential, 3.0, 3.0, 20.0),
    (BuildingType::Residential, 3.0, 3.0, 0.0),
    (BuildingType::Residential, 3.0, 3.0, 0.0),
    (BuildingType::Residential, 3.0, 3.0, 0.0),
];

/// Generates a synthetic district; a pure function of its arguments.
///
/// Panics if `n_buildings == 0` or `days < 2`.
pub fn generate_synthetic(n_buildings: usize, days: usize, seed: u64) -> Dataset {
    generate_synthetic_with(&SyntheticOptions::new(n_buildings, days, seed))
}

pub fn generate_synthetic_with(opts: &SyntheticOptions) -> Dataset {
    assert!(opts.n_buildings >= 1, "n_buildings must be >= 1");
    assert!(opts.days >= 2, "days must be >= 2");
    let horizon = opts.days * 24;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let start_day_of_year = (usize::from(opts.start_month) - 1) * 30;

    // Weather: seasonal and diurnal temperature, clear-sky radiation scaled by daily cloudiness.
    let mut t_out = Vec::with_capacity(horizon);
    let mut rad = Vec::with_capacity(horizon);
    let mut cloud = 1.0;
    for t in 0..horizon {
        let hour = (t % 24) as f64;
        let day = (start_day_of_year + t / 24) as f64;
        if t % 24 == 0 {
            cloud = rng.random_range(0.35..1.0);
        }
        let seasonal = 6.0 * (2.0 * PI * (day - 105.0) / 365.0).sin();
        let diurnal = 5.0 * (2.0 * PI * (hour - 9.0) / 24.0).sin();
        t_out.push(24.0 + seasonal + diurnal + 0.8 * noise.sample(&mut rng) + opts.t_out_offset);
        let elevation = (PI * (hour - 6.0) / 12.0).sin();
        rad.push(if (7.0..=17.0).contains(&hour) && elevation > 0.0 {
            900.0 * elevation * cloud
        } else {
            0.0
        });
    }

    let buildings = (0..opts.n_buildings)
        .map(|i| {
            let (building_type, cooling_factor, dhw_factor, pv_kw) = TEMPLATE[i % TEMPLATE.len()];
            let scale = rng.random_range(0.7..1.3);
            let mut cooling = Vec::with_capacity(horizon);
            let mut dhw = Vec::with_capacity(horizon);
            let mut load = Vec::with_capacity(horizon);
            for t in 0..horizon {
                let hour = (t % 24) as f64;
                let weekday = (t / 24) % 7;
                let occupied = match building_type {
                    BuildingType::Commercial => weekday < 5 && (8.0..=19.0).contains(&hour),
                    BuildingType::Residential => !(1.0..=5.0).contains(&hour),
                };
                let heat = (t_out[t] - 16.0).max(0.0);
                let afternoon = 0.5 + 0.5 * (2.0 * PI * (hour - 9.0) / 24.0).sin();
                let base = match building_type {
                    BuildingType::Commercial => 25.0 + 12.0 * heat * (0.4 + 0.6 * afternoon),
                    BuildingType::Residential => 10.0 + 6.0 * heat * (0.5 + 0.5 * afternoon),
                };
                let occupancy = if occupied { 1.0 } else { 0.55 };
                cooling.push((scale * base * occupancy * (1.0 + 0.08 * noise.sample(&mut rng))).max(0.0));

                let bump = |centre: f64, width: f64| (-(hour - centre).powi(2) / (2.0 * width * width)).exp();
                let dhw_base = match building_type {
                    BuildingType::Commercial => 4.0 + 16.0 * bump(12.0, 2.5),
                    BuildingType::Residential => 3.0 + 24.0 * bump(7.0, 1.2) + 20.0 * bump(19.5, 1.5),
                };
                dhw.push((scale * dhw_base * (1.0 + 0.1 * noise.sample(&mut rng))).max(0.0));

                let appliance = match building_type {
                    BuildingType::Commercial => {
                        if occupied {
                            60.0
                        } else {
                            25.0
                        }
                    }
                    BuildingType::Residential => 20.0 + 20.0 * bump(19.0, 2.5) + 8.0 * bump(8.0, 1.5),
                };
                load.push((scale * appliance * (1.0 + 0.05 * noise.sample(&mut rng))).max(0.0));
            }
            let solar = rad.iter().map(|r| 0.85 * r / 1000.0).collect::<Vec<_>>();
            BuildingSpec {
                id: i as u32 + 1,
                building_type,
                cooling_demand: cooling,
                dhw_demand: (dhw_factor > 0.0).then_some(dhw),
                non_shiftable_load: load,
                solar_gen_per_kw: (pv_kw > 0.0).then_some(solar),
                pv_kw,
                cooling_storage_factor: cooling_factor,
                dhw_storage_factor: dhw_factor,
            }
        })
        .collect();

    Dataset {
        climate_zone_label: opts
            .climate_zone_label
            .clone()
            .unwrap_or_else(|| format!("synthetic-{}", opts.seed)),
        buildings,
        weather: WeatherSeries {
            t_out,
            direct_solar_rad: rad,
        },
        start_month: opts.start_month,
        start_weekday: 1,
        rbc_schedule: None,
    }
    .validated()
    .expect("synthetic datasets satisfy every invariant")
}
