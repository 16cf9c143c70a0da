//! Run configuration: documented defaults, overridden by a TOML config
//! file, overridden by command-line flags. Key names in the file match the
//! flag names 1:1 (`lag` for `--lag`, and so on).

use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use warpflow_core::dtw::BandConstraint;
use warpflow_core::ingest::FillPolicy;
use warpflow_core::preprocess::{AnalysisConfig, CaseFilter};
use warpflow_core::series::DateRange;

use crate::CliError;

/// Optional values as they appear in a `--config` file. Unknown keys are
/// rejected so typos cannot silently fall back to defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub regions: Option<PathBuf>,
    pub flows: Option<PathBuf>,
    pub cases: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub lag: Option<u32>,
    pub window: Option<u32>,
    pub start_date: Option<NaiveDate>,
    pub end_date: Option<NaiveDate>,
    pub metro_only: Option<bool>,
    pub min_case_filter: Option<String>,
    pub resmooth_cases: Option<bool>,
    pub fill_missing: Option<String>,
    pub band_radius: Option<usize>,
    pub workers: Option<usize>,
    pub lag_min: Option<u32>,
    pub lag_max: Option<u32>,
    pub export_mobility: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}

/// Flag-level values shared by `run` and `lag-sweep`.
#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    /// Region table CSV (region_id,name,population,land_area_sqmi,is_metro).
    #[arg(long)]
    pub regions: Option<PathBuf>,
    /// Flow table CSV (date,origin,destination,devices_od,devices_origin_total).
    #[arg(long)]
    pub flows: Option<PathBuf>,
    /// Case table CSV (date,region_id,new_cases).
    #[arg(long)]
    pub cases: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Days mobility leads cases [default: 7].
    #[arg(long)]
    pub lag: Option<u32>,
    /// Moving-average window in days [default: 7].
    #[arg(long)]
    pub window: Option<u32>,
    /// First day of the study period [default: 2020-11-30].
    #[arg(long)]
    pub start_date: Option<NaiveDate>,
    /// Last day of the study period, inclusive [default: 2021-01-24].
    #[arg(long)]
    pub end_date: Option<NaiveDate>,
    /// Keep only metropolitan regions [default: true].
    #[arg(long, value_name = "BOOL")]
    pub metro_only: Option<bool>,
    /// Case filter: "median" or a fixed mean-cases threshold [default: median].
    #[arg(long)]
    pub min_case_filter: Option<String>,
    /// Re-smooth case series (for raw daily counts) [default: false].
    #[arg(long, value_name = "BOOL")]
    pub resmooth_cases: Option<bool>,
    /// Calendar gaps in cases: error, zero, or previous [default: error].
    #[arg(long)]
    pub fill_missing: Option<String>,
    /// Sakoe-Chiba band radius; unconstrained when absent.
    #[arg(long)]
    pub band_radius: Option<usize>,
    /// Worker threads; 0 means all available cores [default: 0].
    #[arg(long)]
    pub workers: Option<usize>,
    /// Also export the smoothed mobility series for audit.
    #[arg(long)]
    pub export_mobility: bool,
}

/// Fully resolved configuration; what the run log records.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub regions: PathBuf,
    pub flows: PathBuf,
    pub cases: PathBuf,
    pub out: PathBuf,
    pub lag: u32,
    pub window: u32,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub metro_only: bool,
    pub min_case_filter: String,
    pub resmooth_cases: bool,
    pub fill_missing: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band_radius: Option<usize>,
    pub workers: usize,
    pub export_mobility: bool,
}

impl RunConfig {
    /// Defaults <- config file <- flags, then validate.
    pub fn resolve(args: &RunArgs) -> Result<Self, CliError> {
        Self::resolve_with_file(args).map(|(config, _)| config)
    }

    /// [`resolve`](Self::resolve), also handing back the raw file config for
    /// commands with extra keys (lag-sweep reads `lag_min`/`lag_max`).
    pub fn resolve_with_file(args: &RunArgs) -> Result<(Self, FileConfig), CliError> {
        let file = match &args.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };

        let regions = args
            .regions
            .clone()
            .or(file.regions.clone())
            .ok_or_else(|| CliError::config("missing required input: --regions"))?;
        let flows = args
            .flows
            .clone()
            .or(file.flows.clone())
            .ok_or_else(|| CliError::config("missing required input: --flows"))?;
        let cases = args
            .cases
            .clone()
            .or(file.cases.clone())
            .ok_or_else(|| CliError::config("missing required input: --cases"))?;
        let out = args
            .out
            .clone()
            .or(file.out.clone())
            .ok_or_else(|| CliError::config("missing required output: --out"))?;

        let config = RunConfig {
            regions,
            flows,
            cases,
            out,
            lag: args.lag.or(file.lag).unwrap_or(7),
            window: args.window.or(file.window).unwrap_or(7),
            start_date: args
                .start_date
                .or(file.start_date)
                .unwrap_or_else(|| NaiveDate::from_ymd_opt(2020, 11, 30).unwrap()),
            end_date: args
                .end_date
                .or(file.end_date)
                .unwrap_or_else(|| NaiveDate::from_ymd_opt(2021, 1, 24).unwrap()),
            metro_only: args.metro_only.or(file.metro_only).unwrap_or(true),
            min_case_filter: args
                .min_case_filter
                .clone()
                .or(file.min_case_filter.clone())
                .unwrap_or_else(|| "median".into()),
            resmooth_cases: args.resmooth_cases.or(file.resmooth_cases).unwrap_or(false),
            fill_missing: args
                .fill_missing
                .clone()
                .or(file.fill_missing.clone())
                .unwrap_or_else(|| "error".into()),
            band_radius: args.band_radius.or(file.band_radius),
            workers: args.workers.or(file.workers).unwrap_or(0),
            export_mobility: args.export_mobility || file.export_mobility.unwrap_or(false),
        };
        // Parse the stringly-typed fields once now so bad values fail before
        // any file is touched.
        config.case_filter()?;
        config.fill_policy()?;
        config.date_range()?;
        if config.window == 0 {
            return Err(CliError::config("window must be at least 1"));
        }
        Ok((config, file))
    }

    pub fn date_range(&self) -> Result<DateRange, CliError> {
        DateRange::new(self.start_date, self.end_date)
            .map_err(|e| CliError::config(e.to_string()))
    }

    pub fn case_filter(&self) -> Result<CaseFilter, CliError> {
        if self.min_case_filter == "median" {
            return Ok(CaseFilter::Median);
        }
        match f64::from_str(&self.min_case_filter) {
            Ok(threshold) if threshold.is_finite() => Ok(CaseFilter::Threshold(threshold)),
            _ => Err(CliError::config(format!(
                "min_case_filter must be \"median\" or a finite number, got {:?}",
                self.min_case_filter
            ))),
        }
    }

    pub fn fill_policy(&self) -> Result<FillPolicy, CliError> {
        FillPolicy::from_str(&self.fill_missing).map_err(CliError::config)
    }

    pub fn band(&self) -> BandConstraint {
        match self.band_radius {
            Some(radius) => BandConstraint::SakoeChiba { radius },
            None => BandConstraint::None,
        }
    }

    pub fn analysis_config(&self) -> Result<AnalysisConfig, CliError> {
        Ok(AnalysisConfig {
            lag_days: self.lag,
            smooth_window: self.window,
            date_range: self.date_range()?,
            min_case_filter: self.case_filter()?,
            metro_only: self.metro_only,
            resmooth_cases: self.resmooth_cases,
            band: self.band(),
        })
    }

    /// TOML rendering of the effective configuration; loading this file via
    /// `--config` reproduces the run.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
