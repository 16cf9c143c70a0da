//! Subcommand implementations. Per-region work runs on a rayon pool sized
//! by `--workers`; all file writes happen from this thread after the pool
//! finishes, and every output is deterministic for given inputs.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use warpflow_core::analysis::{self, AnalysisError};
use warpflow_core::ingest::{self, Dataset};
use warpflow_core::mobility;
use warpflow_core::report;
use warpflow_core::synth::{self, ScenarioSpec};

use crate::config::{RunArgs, RunConfig};
use crate::CliError;

fn build_pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::internal(format!("cannot build worker pool: {e}")))
}

fn check_inputs_exist(paths: &[&PathBuf]) -> Result<(), CliError> {
    for path in paths {
        if !path.is_file() {
            return Err(CliError::Ingest(ingest::IngestError::Open {
                path: path.display().to_string(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
            }));
        }
    }
    Ok(())
}

fn load_dataset(config: &RunConfig) -> Result<Dataset, CliError> {
    check_inputs_exist(&[&config.regions, &config.flows, &config.cases])?;
    Ok(Dataset::load(
        &config.regions,
        &config.flows,
        &config.cases,
        config.date_range()?,
        config.fill_policy()?,
    )?)
}

fn write_run_log(path: &Path, command: &str, config_toml: &str, lines: &[String]) -> Result<(), CliError> {
    let mut out = File::create(path)?;
    writeln!(out, "command: {command}")?;
    writeln!(out, "effective configuration:")?;
    for line in config_toml.lines() {
        writeln!(out, "  {line}")?;
    }
    for line in lines {
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn run(args: &RunArgs) -> Result<(), CliError> {
    let config = RunConfig::resolve(args)?;
    let dataset = load_dataset(&config)?;
    let analysis_config = config.analysis_config()?;

    let pool = build_pool(config.workers)?;
    let output = pool.install(|| analysis::run_all_with_report(&dataset, &analysis_config))?;

    std::fs::create_dir_all(&config.out)?;
    let out = |name: &str| config.out.join(name);
    let report_err = |e: report::ReportError| CliError::internal(e.to_string());

    report::write_results_csv(&out("results.csv"), &output.results).map_err(report_err)?;
    report::write_filter_report_csv(&out("filter_report.csv"), &output.filter)
        .map_err(report_err)?;

    let mut log_lines = vec![
        format!("regions_total: {}", output.filter.total),
        format!("regions_kept: {}", output.filter.kept.len()),
        format!("dropped_non_metro: {}", output.filter.non_metro.len()),
        format!("dropped_below_threshold: {}", output.filter.below_threshold.len()),
        format!("case_filter_threshold: {}", output.filter.threshold),
        format!(
            "regions_scored: {}",
            output.results.iter().filter(|r| r.distance().is_some()).count()
        ),
    ];

    // Classification and diagnostics need at least two scored regions and
    // nonzero spread; when the data cannot support them, record why and
    // still emit the tables that exist.
    match analysis::classify_std(&output.results) {
        Ok(classified) => {
            report::write_classified_csv(&out("classified.csv"), &classified)
                .map_err(report_err)?;
        }
        Err(e @ (AnalysisError::NotEnoughScored { .. } | AnalysisError::ZeroSpread)) => {
            log::warn!("classification unavailable: {e}");
            report::write_classified_csv(&out("classified.csv"), &[]).map_err(report_err)?;
            log_lines.push(format!("classification_unavailable: {e}"));
        }
        Err(e) => return Err(e.into()),
    }
    match analysis::run_diagnostics(&output.results, &dataset.regions) {
        Ok(diagnostics) => {
            report::write_diagnostics_txt(&out("diagnostics.txt"), &diagnostics)
                .map_err(report_err)?;
        }
        Err(e @ (AnalysisError::NotEnoughScored { .. } | AnalysisError::ZeroVariance)) => {
            log::warn!("diagnostics unavailable: {e}");
            std::fs::write(
                out("diagnostics.txt"),
                format!("diagnostics unavailable: {e}\n"),
            )?;
            log_lines.push(format!("diagnostics_unavailable: {e}"));
        }
        Err(e) => return Err(e.into()),
    }

    if config.export_mobility {
        let smoothed = smoothed_mobility(&dataset, &analysis_config)?;
        report::write_mobility_series_csv(&out("mobility_series.csv"), &smoothed)
            .map_err(report_err)?;
        log_lines.push("exported: mobility_series.csv".into());
    }

    let config_toml = config.to_toml();
    std::fs::write(out("effective_config.toml"), &config_toml)?;
    write_run_log(&out("run.log"), "run", &config_toml, &log_lines)?;
    log::info!(
        "run complete: {} regions, {} scored",
        output.filter.total,
        output.results.iter().filter(|r| r.distance().is_some()).count()
    );
    Ok(())
}

fn smoothed_mobility(
    dataset: &Dataset,
    config: &warpflow_core::preprocess::AnalysisConfig,
) -> Result<std::collections::BTreeMap<warpflow_core::series::RegionId, warpflow_core::series::DailySeries>, CliError>
{
    let mut out = std::collections::BTreeMap::new();
    for id in dataset.regions.keys() {
        let raw = mobility::aggregate_region_mobility(
            &dataset.flows,
            &dataset.regions,
            id,
            dataset.date_range,
        )
        .map_err(|e| CliError::internal(e.to_string()))?;
        let smoothed = mobility::rolling_mean(&raw, config.smooth_window as usize)
            .map_err(|e| CliError::internal(e.to_string()))?;
        out.insert(id.clone(), smoothed);
    }
    Ok(out)
}

pub fn lag_sweep(args: &RunArgs, lag_min: Option<u32>, lag_max: Option<u32>) -> Result<(), CliError> {
    let (config, file) = RunConfig::resolve_with_file(args)?;
    let lag_min = lag_min.or(file.lag_min).unwrap_or(0);
    let lag_max = lag_max.or(file.lag_max).unwrap_or(30);
    if lag_min > lag_max {
        return Err(CliError::config(format!(
            "lag_min {lag_min} exceeds lag_max {lag_max}"
        )));
    }
    let range = config.date_range()?;
    if lag_max as usize >= range.num_days() {
        return Err(CliError::config(format!(
            "lag_max {lag_max} must be smaller than the {}-day study period",
            range.num_days()
        )));
    }

    let dataset = load_dataset(&config)?;
    let analysis_config = config.analysis_config()?;

    let pool = build_pool(config.workers)?;
    let output =
        pool.install(|| analysis::lag_sweep_all(&dataset, &analysis_config, lag_min, lag_max))?;

    std::fs::create_dir_all(&config.out)?;
    let out = |name: &str| config.out.join(name);
    let report_err = |e: report::ReportError| CliError::internal(e.to_string());

    report::write_lag_sweep_csv(&out("lag_sweep.csv"), &output.results).map_err(report_err)?;
    report::write_lag_sweep_best_csv(&out("lag_sweep_best.csv"), &output.results, &output.skipped)
        .map_err(report_err)?;
    report::write_filter_report_csv(&out("filter_report.csv"), &output.filter)
        .map_err(report_err)?;

    #[derive(Serialize)]
    struct SweepConfig<'a> {
        #[serde(flatten)]
        run: &'a RunConfig,
        lag_min: u32,
        lag_max: u32,
    }
    let config_toml = toml::to_string(&SweepConfig {
        run: &config,
        lag_min,
        lag_max,
    })
    .expect("config serializes");
    std::fs::write(out("effective_config.toml"), &config_toml)?;
    write_run_log(
        &out("run.log"),
        "lag-sweep",
        &config_toml,
        &[
            format!("regions_swept: {}", output.results.len()),
            format!("regions_skipped: {}", output.skipped.len()),
        ],
    )?;
    log::info!(
        "lag sweep complete: {} regions x lags {lag_min}..={lag_max}",
        output.results.len()
    );
    Ok(())
}

pub fn synth(scenario: &Path, out_dir: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(scenario)
        .map_err(|e| CliError::config(format!("{}: {e}", scenario.display())))?;
    let mut spec: ScenarioSpec = toml::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: {e}", scenario.display())))?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    spec.validate().map_err(|e| CliError::config(e.to_string()))?;

    std::fs::create_dir_all(out_dir)?;
    synth::write_scenario(&spec, out_dir).map_err(|e| match e {
        synth::SynthWriteError::Synth(e) => CliError::config(e.to_string()),
        synth::SynthWriteError::Io(e) => CliError::internal(e.to_string()),
    })?;
    log::info!(
        "wrote synthetic scenario ({} regions x {} days, seed {}) to {}",
        spec.n_regions,
        spec.n_days,
        spec.seed,
        out_dir.display()
    );
    Ok(())
}

pub fn report(results_path: &Path, regions_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    check_inputs_exist(&[&results_path.to_path_buf(), &regions_path.to_path_buf()])?;
    let results = report::read_results_csv(results_path)
        .map_err(|e| CliError::internal(e.to_string()))?;
    let regions = ingest::parse_regions(regions_path)?;

    std::fs::create_dir_all(out_dir)?;
    let classified = analysis::classify_std(&results)?;
    report::write_classified_csv(&out_dir.join("classified.csv"), &classified)
        .map_err(|e| CliError::internal(e.to_string()))?;
    let diagnostics = analysis::run_diagnostics(&results, &regions)?;
    report::write_diagnostics_txt(&out_dir.join("diagnostics.txt"), &diagnostics)
        .map_err(|e| CliError::internal(e.to_string()))?;
    log::info!(
        "re-derived classified.csv and diagnostics.txt for {} results",
        results.len()
    );
    Ok(())
}
