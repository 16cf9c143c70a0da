//! Parsing and validation of the three input tables (regions, flows, cases)
//! into a [`Dataset`] on a contiguous daily calendar.
//!
//! Schemas are fixed (see the `*_HEADER` constants). Required columns are
//! located by name; unknown extra columns are ignored with a warning so the
//! parser tolerates upstream exports that carry additional fields.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use thiserror::Error;

use crate::series::{DailySeries, DateRange, RegionId};

pub const REGIONS_HEADER: [&str; 5] =
    ["region_id", "name", "population", "land_area_sqmi", "is_metro"];
pub const FLOWS_HEADER: [&str; 5] =
    ["date", "origin", "destination", "devices_od", "devices_origin_total"];
pub const CASES_HEADER: [&str; 3] = ["date", "region_id", "new_cases"];

/// One region's identity and the static attributes the pipeline needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMeta {
    pub region_id: RegionId,
    pub name: String,
    /// Persons; at least 1.
    pub population: u64,
    /// Square miles; strictly positive.
    pub land_area_sqmi: f64,
    /// Membership in a metropolitan statistical area.
    pub is_metro: bool,
}

impl RegionMeta {
    /// Population per square mile.
    pub fn density(&self) -> f64 {
        self.population as f64 / self.land_area_sqmi
    }
}

/// One (date, origin, destination) device-count observation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct FlowRecord {
    pub date: NaiveDate,
    pub origin: RegionId,
    pub destination: RegionId,
    /// Devices that moved origin -> destination that day.
    pub devices_od: u64,
    /// Total devices observed in the origin that day; at least 1.
    pub devices_origin_total: u64,
}

/// How to treat calendar gaps in a case series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FillPolicy {
    /// Gaps are an error (the default): silent gaps corrupt rolling averages.
    #[default]
    Error,
    /// Fill gaps with 0.0.
    Zero,
    /// Carry the previous day's value forward. A gap before the first
    /// observed day has nothing to carry and stays an error.
    Previous,
}

impl std::str::FromStr for FillPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "error" => Ok(FillPolicy::Error),
            "zero" => Ok(FillPolicy::Zero),
            "previous" => Ok(FillPolicy::Previous),
            other => Err(format!(
                "unknown fill policy {other:?} (expected error, zero or previous)"
            )),
        }
    }
}

impl std::fmt::Display for FillPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FillPolicy::Error => "error",
            FillPolicy::Zero => "zero",
            FillPolicy::Previous => "previous",
        })
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: cannot open input: {source}")]
    Open {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        source: csv::Error,
    },
    #[error("{path}: missing required column {column:?}")]
    MissingColumn { path: String, column: &'static str },
    #[error("{path} row {row}: duplicate region_id {region_id}")]
    DuplicateRegion {
        path: String,
        row: u64,
        region_id: RegionId,
    },
    #[error("{path} row {row}: region {region_id} has non-positive population")]
    NonPositivePopulation {
        path: String,
        row: u64,
        region_id: RegionId,
    },
    #[error("{path} row {row}: region {region_id} has non-positive land area")]
    NonPositiveLandArea {
        path: String,
        row: u64,
        region_id: RegionId,
    },
    #[error("{path} row {row}: unknown region {region_id}")]
    UnknownRegion {
        path: String,
        row: u64,
        region_id: RegionId,
    },
    #[error("{path} row {row}: date {value:?} is not an ISO-8601 calendar date")]
    BadDate {
        path: String,
        row: u64,
        value: String,
    },
    #[error("{path} row {row}: negative count in column {column:?}: {value}")]
    NegativeCount {
        path: String,
        row: u64,
        column: &'static str,
        value: String,
    },
    #[error(
        "{path} row {row}: devices_od {devices_od} exceeds devices_origin_total {devices_origin_total}"
    )]
    DevicesExceedTotal {
        path: String,
        row: u64,
        devices_od: u64,
        devices_origin_total: u64,
    },
    #[error("{path} row {row}: devices_origin_total must be at least 1")]
    ZeroDeviceTotal { path: String, row: u64 },
    #[error("{path} row {row}: negative new_cases {value}")]
    NegativeCases { path: String, row: u64, value: f64 },
    #[error("{path} row {row}: duplicate date {date} for region {region_id}")]
    DuplicateDate {
        path: String,
        row: u64,
        region_id: RegionId,
        date: NaiveDate,
    },
    #[error(
        "{path}: region {region_id} is missing {count} date(s) in the study period, first {first}{policy_hint}"
    )]
    MissingDates {
        path: String,
        region_id: RegionId,
        count: usize,
        first: NaiveDate,
        policy_hint: &'static str,
    },
    #[error("{path} row {row}: cannot parse column {column:?} value {value:?}: {reason}")]
    BadField {
        path: String,
        row: u64,
        column: &'static str,
        value: String,
        reason: String,
    },
}

/// Validated inputs for one run: regions, canonically sorted flows, and a
/// case series per region covering every day of `date_range` exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub regions: BTreeMap<RegionId, RegionMeta>,
    pub flows: Vec<FlowRecord>,
    pub cases: BTreeMap<RegionId, DailySeries>,
    pub date_range: DateRange,
}

impl Dataset {
    /// Assemble a dataset from parsed parts. Flows outside `date_range` are
    /// dropped with a warning and the remainder sorted canonically by
    /// (date, origin, destination), making assembly insensitive to input
    /// row order.
    pub fn assemble(
        regions: BTreeMap<RegionId, RegionMeta>,
        mut flows: Vec<FlowRecord>,
        cases: BTreeMap<RegionId, DailySeries>,
        date_range: DateRange,
    ) -> Self {
        let before = flows.len();
        flows.retain(|f| date_range.contains(f.date));
        if flows.len() < before {
            log::warn!(
                "dropped {} flow record(s) outside the study period {}",
                before - flows.len(),
                date_range
            );
        }
        flows.sort_unstable();
        Dataset {
            regions,
            flows,
            cases,
            date_range,
        }
    }

    /// Load all three tables from one directory using the standard file names.
    pub fn load_dir(
        dir: &Path,
        date_range: DateRange,
        fill: FillPolicy,
    ) -> Result<Self, IngestError> {
        Self::load(
            &dir.join("regions.csv"),
            &dir.join("flows.csv"),
            &dir.join("cases.csv"),
            date_range,
            fill,
        )
    }

    pub fn load(
        regions_path: &Path,
        flows_path: &Path,
        cases_path: &Path,
        date_range: DateRange,
        fill: FillPolicy,
    ) -> Result<Self, IngestError> {
        let regions = parse_regions(regions_path)?;
        let flows = parse_flows(flows_path, &regions)?;
        let cases = parse_cases(cases_path, &regions, date_range, fill)?;
        Ok(Dataset::assemble(regions, flows, cases, date_range))
    }

    /// Write the dataset back out as the three canonical CSV tables.
    /// Re-parsing the written files yields an identical dataset.
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        write_regions(File::create(dir.join("regions.csv"))?, &self.regions)?;
        write_flows(File::create(dir.join("flows.csv"))?, &self.flows)?;
        write_cases(File::create(dir.join("cases.csv"))?, &self.cases)?;
        Ok(())
    }
}

/// Header bookkeeping: index of each required column, warning on extras.
struct HeaderMap {
    indices: Vec<usize>,
}

impl HeaderMap {
    fn resolve(
        path: &str,
        header: &csv::StringRecord,
        required: &'static [&'static str],
    ) -> Result<Self, IngestError> {
        let mut indices = Vec::with_capacity(required.len());
        for col in required {
            let idx = header
                .iter()
                .position(|h| h.trim() == *col)
                .ok_or(IngestError::MissingColumn {
                    path: path.to_owned(),
                    column: col,
                })?;
            indices.push(idx);
        }
        for extra in header.iter().filter(|h| !required.contains(&h.trim())) {
            log::warn!("{path}: ignoring unknown column {extra:?}");
        }
        Ok(HeaderMap { indices })
    }

    fn field<'r>(&self, record: &'r csv::StringRecord, col: usize) -> &'r str {
        record.get(self.indices[col]).unwrap_or("").trim()
    }
}

fn open_file(path: &Path) -> Result<(String, File), IngestError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| IngestError::Open {
        path: display.clone(),
        source,
    })?;
    Ok((display, file))
}

struct RowCtx<'a> {
    path: &'a str,
    row: u64,
}

impl RowCtx<'_> {
    fn parse_u64(&self, column: &'static str, value: &str) -> Result<u64, IngestError> {
        // Go through i64 first so "-3" reports as a negative count rather
        // than a generic parse failure.
        if let Ok(signed) = value.parse::<i64>() {
            if signed < 0 {
                return Err(IngestError::NegativeCount {
                    path: self.path.to_owned(),
                    row: self.row,
                    column,
                    value: value.to_owned(),
                });
            }
            return Ok(signed as u64);
        }
        value.parse::<u64>().map_err(|e| self.bad_field(column, value, e.to_string()))
    }

    fn parse_f64(&self, column: &'static str, value: &str) -> Result<f64, IngestError> {
        let parsed: f64 = value
            .parse()
            .map_err(|e: std::num::ParseFloatError| self.bad_field(column, value, e.to_string()))?;
        if !parsed.is_finite() {
            return Err(self.bad_field(column, value, "not a finite number".to_owned()));
        }
        Ok(parsed)
    }

    fn parse_date(&self, value: &str) -> Result<NaiveDate, IngestError> {
        crate::series::parse_iso_date(value).ok_or_else(|| IngestError::BadDate {
            path: self.path.to_owned(),
            row: self.row,
            value: value.to_owned(),
        })
    }

    fn bad_field(&self, column: &'static str, value: &str, reason: String) -> IngestError {
        IngestError::BadField {
            path: self.path.to_owned(),
            row: self.row,
            column,
            value: value.to_owned(),
            reason,
        }
    }
}

/// Parse the regions table. Row numbers in errors are 1-based data rows.
pub fn parse_regions(path: &Path) -> Result<BTreeMap<RegionId, RegionMeta>, IngestError> {
    let (name, file) = open_file(path)?;
    parse_regions_from(&name, file)
}

pub fn parse_regions_from(
    path: &str,
    input: impl Read,
) -> Result<BTreeMap<RegionId, RegionMeta>, IngestError> {
    let mut reader = csv_reader(input);
    let map = resolve_header(path, &mut reader, &REGIONS_HEADER)?;

    let mut regions = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let ctx = RowCtx { path, row: i as u64 + 1 };
        let record = record.map_err(|source| IngestError::Csv {
            path: path.to_owned(),
            source,
        })?;
        let region_id = RegionId::new(map.field(&record, 0));
        let name = map.field(&record, 1).to_owned();
        let population = ctx.parse_u64("population", map.field(&record, 2))?;
        let land_area = ctx.parse_f64("land_area_sqmi", map.field(&record, 3))?;
        let is_metro = match map.field(&record, 4) {
            "true" => true,
            "false" => false,
            other => {
                return Err(ctx.bad_field("is_metro", other, "expected true or false".to_owned()))
            }
        };
        if population == 0 {
            return Err(IngestError::NonPositivePopulation {
                path: path.to_owned(),
                row: ctx.row,
                region_id,
            });
        }
        if land_area <= 0.0 {
            return Err(IngestError::NonPositiveLandArea {
                path: path.to_owned(),
                row: ctx.row,
                region_id,
            });
        }
        if regions.contains_key(&region_id) {
            return Err(IngestError::DuplicateRegion {
                path: path.to_owned(),
                row: ctx.row,
                region_id,
            });
        }
        regions.insert(
            region_id.clone(),
            RegionMeta {
                region_id,
                name,
                population,
                land_area_sqmi: land_area,
                is_metro,
            },
        );
    }
    Ok(regions)
}

/// Parse the flows table against an already-parsed region table.
pub fn parse_flows(
    path: &Path,
    regions: &BTreeMap<RegionId, RegionMeta>,
) -> Result<Vec<FlowRecord>, IngestError> {
    let (name, file) = open_file(path)?;
    parse_flows_from(&name, file, regions)
}

pub fn parse_flows_from(
    path: &str,
    input: impl Read,
    regions: &BTreeMap<RegionId, RegionMeta>,
) -> Result<Vec<FlowRecord>, IngestError> {
    let mut reader = csv_reader(input);
    let map = resolve_header(path, &mut reader, &FLOWS_HEADER)?;

    let mut flows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let ctx = RowCtx { path, row: i as u64 + 1 };
        let record = record.map_err(|source| IngestError::Csv {
            path: path.to_owned(),
            source,
        })?;
        let date = ctx.parse_date(map.field(&record, 0))?;
        let origin = RegionId::new(map.field(&record, 1));
        let destination = RegionId::new(map.field(&record, 2));
        let devices_od = ctx.parse_u64("devices_od", map.field(&record, 3))?;
        let devices_origin_total =
            ctx.parse_u64("devices_origin_total", map.field(&record, 4))?;

        for id in [&origin, &destination] {
            if !regions.contains_key(id) {
                return Err(IngestError::UnknownRegion {
                    path: path.to_owned(),
                    row: ctx.row,
                    region_id: id.clone(),
                });
            }
        }
        if devices_origin_total == 0 {
            return Err(IngestError::ZeroDeviceTotal {
                path: path.to_owned(),
                row: ctx.row,
            });
        }
        if devices_od > devices_origin_total {
            return Err(IngestError::DevicesExceedTotal {
                path: path.to_owned(),
                row: ctx.row,
                devices_od,
                devices_origin_total,
            });
        }
        flows.push(FlowRecord {
            date,
            origin,
            destination,
            devices_od,
            devices_origin_total,
        });
    }
    Ok(flows)
}

/// Parse the cases table into one series per region covering `date_range`.
///
/// Rows dated outside the study period are skipped with a warning. Every
/// region in the region table must end up with a complete series; gaps
/// follow `fill`.
pub fn parse_cases(
    path: &Path,
    regions: &BTreeMap<RegionId, RegionMeta>,
    date_range: DateRange,
    fill: FillPolicy,
) -> Result<BTreeMap<RegionId, DailySeries>, IngestError> {
    let (name, file) = open_file(path)?;
    parse_cases_from(&name, file, regions, date_range, fill)
}

pub fn parse_cases_from(
    path: &str,
    input: impl Read,
    regions: &BTreeMap<RegionId, RegionMeta>,
    date_range: DateRange,
    fill: FillPolicy,
) -> Result<BTreeMap<RegionId, DailySeries>, IngestError> {
    let mut reader = csv_reader(input);
    let map = resolve_header(path, &mut reader, &CASES_HEADER)?;

    let days = date_range.num_days();
    let mut observed: BTreeMap<RegionId, Vec<Option<f64>>> = BTreeMap::new();
    let mut skipped_out_of_range = 0usize;

    for (i, record) in reader.records().enumerate() {
        let ctx = RowCtx { path, row: i as u64 + 1 };
        let record = record.map_err(|source| IngestError::Csv {
            path: path.to_owned(),
            source,
        })?;
        let date = ctx.parse_date(map.field(&record, 0))?;
        let region_id = RegionId::new(map.field(&record, 1));
        let new_cases = ctx.parse_f64("new_cases", map.field(&record, 2))?;

        if !regions.contains_key(&region_id) {
            return Err(IngestError::UnknownRegion {
                path: path.to_owned(),
                row: ctx.row,
                region_id,
            });
        }
        if new_cases < 0.0 {
            return Err(IngestError::NegativeCases {
                path: path.to_owned(),
                row: ctx.row,
                value: new_cases,
            });
        }
        let Some(index) = date_range.index_of(date) else {
            skipped_out_of_range += 1;
            continue;
        };
        let slots = observed
            .entry(region_id.clone())
            .or_insert_with(|| vec![None; days]);
        if slots[index].is_some() {
            return Err(IngestError::DuplicateDate {
                path: path.to_owned(),
                row: ctx.row,
                region_id,
                date,
            });
        }
        slots[index] = Some(new_cases);
    }
    if skipped_out_of_range > 0 {
        log::warn!(
            "{path}: skipped {skipped_out_of_range} case row(s) outside the study period {date_range}"
        );
    }

    let mut cases = BTreeMap::new();
    for region_id in regions.keys() {
        let slots = observed
            .remove(region_id)
            .unwrap_or_else(|| vec![None; days]);
        let values = fill_series(path, region_id, &slots, date_range, fill)?;
        cases.insert(
            region_id.clone(),
            DailySeries::new(region_id.clone(), date_range.start(), values),
        );
    }
    Ok(cases)
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input)
}

fn resolve_header<R: Read>(
    path: &str,
    reader: &mut csv::Reader<R>,
    required: &'static [&'static str],
) -> Result<HeaderMap, IngestError> {
    let header = reader
        .headers()
        .map_err(|source| IngestError::Csv {
            path: path.to_owned(),
            source,
        })?
        .clone();
    HeaderMap::resolve(path, &header, required)
}

fn fill_series(
    path: &str,
    region_id: &RegionId,
    slots: &[Option<f64>],
    date_range: DateRange,
    fill: FillPolicy,
) -> Result<Vec<f64>, IngestError> {
    let missing_error = |policy_hint: &'static str| {
        let missing: Vec<usize> = slots
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.is_none().then_some(i))
            .collect();
        IngestError::MissingDates {
            path: path.to_owned(),
            region_id: region_id.clone(),
            count: missing.len(),
            first: date_range.date_at(missing[0]),
            policy_hint,
        }
    };

    match fill {
        FillPolicy::Error => {
            if slots.iter().any(Option::is_none) {
                return Err(missing_error(
                    " (use --fill-missing=zero|previous to fill gaps)",
                ));
            }
            Ok(slots.iter().map(|v| v.unwrap()).collect())
        }
        FillPolicy::Zero => Ok(slots.iter().map(|v| v.unwrap_or(0.0)).collect()),
        FillPolicy::Previous => {
            if slots[0].is_none() {
                return Err(missing_error(
                    " (fill policy \"previous\" cannot fill a leading gap)",
                ));
            }
            let mut out = Vec::with_capacity(slots.len());
            let mut last = slots[0].unwrap();
            for v in slots {
                if let Some(v) = v {
                    last = *v;
                }
                out.push(last);
            }
            Ok(out)
        }
    }
}

pub fn write_regions<W: Write>(
    out: W,
    regions: &BTreeMap<RegionId, RegionMeta>,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REGIONS_HEADER)?;
    for meta in regions.values() {
        w.write_record([
            meta.region_id.as_str(),
            &meta.name,
            &meta.population.to_string(),
            &meta.land_area_sqmi.to_string(),
            if meta.is_metro { "true" } else { "false" },
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_flows<W: Write>(out: W, flows: &[FlowRecord]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FLOWS_HEADER)?;
    for f in flows {
        w.write_record([
            &f.date.to_string(),
            f.origin.as_str(),
            f.destination.as_str(),
            &f.devices_od.to_string(),
            &f.devices_origin_total.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cases<W: Write>(
    out: W,
    cases: &BTreeMap<RegionId, DailySeries>,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CASES_HEADER)?;
    for series in cases.values() {
        for (i, value) in series.values.iter().enumerate() {
            w.write_record([
                &series.date_at(i).to_string(),
                series.region_id.as_str(),
                &value.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
