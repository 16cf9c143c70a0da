//! Readers and writers for the result tables.
//!
//! All writers are deterministic: rows are pre-sorted by the caller (or
//! sorted here), floats use the shortest round-trip decimal form, and
//! nothing time- or host-dependent is emitted. Re-running a pipeline on the
//! same inputs reproduces every file byte for byte.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::analysis::{
    ClassifiedResult, DiagnosticsReport, LagSweepResult, RegionOutcome, RegionResult, SkipReason,
};
use crate::preprocess::FilterReport;
use crate::series::{DailySeries, RegionId};

pub const RESULTS_HEADER: [&str; 5] =
    ["region_id", "dtw_distance", "n", "lag_days", "skipped_reason"];
pub const CLASSIFIED_HEADER: [&str; 4] = ["region_id", "dtw_distance", "z_score", "class_label"];
pub const LAG_SWEEP_HEADER: [&str; 3] = ["region_id", "lag_days", "dtw_distance"];
pub const LAG_SWEEP_BEST_HEADER: [&str; 4] =
    ["region_id", "best_lag", "best_distance", "skipped_reason"];
pub const FILTER_REPORT_HEADER: [&str; 3] = ["stage", "region_id", "reason"];
pub const MOBILITY_SERIES_HEADER: [&str; 3] = ["region_id", "date", "mobility"];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        source: csv::Error,
    },
    #[error("{path} row {row}: {message}")]
    BadRow {
        path: String,
        row: u64,
        message: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ReportError + '_ {
    move |source| ReportError::Csv {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_results_csv(path: &Path, results: &[RegionResult]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(File::create(path).map_err(io_err(path))?);
    w.write_record(RESULTS_HEADER).map_err(csv_err(path))?;
    for r in results {
        let record = match &r.outcome {
            RegionOutcome::Scored { distance, n } => [
                r.region_id.to_string(),
                distance.to_string(),
                n.to_string(),
                r.lag_days.to_string(),
                String::new(),
            ],
            RegionOutcome::Skipped(reason) => [
                r.region_id.to_string(),
                String::new(),
                String::new(),
                r.lag_days.to_string(),
                reason.to_string(),
            ],
        };
        w.write_record(&record).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Read back a `results.csv`, e.g. to re-derive classifications without
/// re-running the pipeline.
pub fn read_results_csv(path: &Path) -> Result<Vec<RegionResult>, ReportError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);

    let header = reader.headers().map_err(csv_err(path))?.clone();
    for (i, expected) in RESULTS_HEADER.iter().enumerate() {
        if header.get(i).map(str::trim) != Some(*expected) {
            return Err(ReportError::BadRow {
                path: path.display().to_string(),
                row: 0,
                message: format!("expected column {i} to be {expected:?}"),
            });
        }
    }

    let bad = |row: u64, message: String| ReportError::BadRow {
        path: path.display().to_string(),
        row,
        message,
    };

    let mut results = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i as u64 + 1;
        let record = record.map_err(csv_err(path))?;
        let field = |k: usize| record.get(k).unwrap_or("").trim().to_owned();
        let region_id = RegionId::new(field(0));
        let lag_days: u32 = field(3)
            .parse()
            .map_err(|e| bad(row, format!("lag_days: {e}")))?;
        let reason = field(4);
        let outcome = if reason.is_empty() {
            let distance: f64 = field(1)
                .parse()
                .map_err(|e| bad(row, format!("dtw_distance: {e}")))?;
            let n: usize = field(2).parse().map_err(|e| bad(row, format!("n: {e}")))?;
            RegionOutcome::Scored { distance, n }
        } else {
            let reason: SkipReason = reason.parse().map_err(|e| bad(row, e))?;
            RegionOutcome::Skipped(reason)
        };
        results.push(RegionResult {
            region_id,
            lag_days,
            outcome,
        });
    }
    Ok(results)
}

pub fn write_classified_csv(
    path: &Path,
    classified: &[ClassifiedResult],
) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(File::create(path).map_err(io_err(path))?);
    w.write_record(CLASSIFIED_HEADER).map_err(csv_err(path))?;
    for c in classified {
        w.write_record([
            c.region_id.to_string(),
            c.dtw_distance.to_string(),
            c.z_score.to_string(),
            c.class.label().to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_lag_sweep_csv(path: &Path, sweeps: &[LagSweepResult]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(File::create(path).map_err(io_err(path))?);
    w.write_record(LAG_SWEEP_HEADER).map_err(csv_err(path))?;
    for sweep in sweeps {
        for (lag, distance) in &sweep.distances {
            w.write_record([
                sweep.region_id.to_string(),
                lag.to_string(),
                distance.to_string(),
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Per-region best lag summary; skipped regions appear with empty lag
/// columns and their reason.
pub fn write_lag_sweep_best_csv(
    path: &Path,
    sweeps: &[LagSweepResult],
    skipped: &[(RegionId, SkipReason)],
) -> Result<(), ReportError> {
    #[derive(Clone)]
    enum Row<'a> {
        Swept(&'a LagSweepResult),
        Skipped(SkipReason),
    }
    let mut rows: Vec<(&RegionId, Row)> = sweeps
        .iter()
        .map(|s| (&s.region_id, Row::Swept(s)))
        .chain(
            skipped
                .iter()
                .map(|(id, reason)| (id, Row::Skipped(*reason))),
        )
        .collect();
    rows.sort_by(|a, b| a.0.cmp(b.0));

    let mut w = csv::Writer::from_writer(File::create(path).map_err(io_err(path))?);
    w.write_record(LAG_SWEEP_BEST_HEADER).map_err(csv_err(path))?;
    for (id, row) in rows {
        let record = match row {
            Row::Swept(sweep) => [
                id.to_string(),
                sweep.best_lag.to_string(),
                sweep.best_distance().to_string(),
                String::new(),
            ],
            Row::Skipped(reason) => {
                [id.to_string(), String::new(), String::new(), reason.to_string()]
            }
        };
        w.write_record(&record).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// One row per region: which stage it left at, or `kept`.
pub fn write_filter_report_csv(path: &Path, report: &FilterReport) -> Result<(), ReportError> {
    let mut rows: Vec<[String; 3]> = Vec::with_capacity(report.total);
    for id in &report.non_metro {
        rows.push(["metro_filter".into(), id.to_string(), "non_metro".into()]);
    }
    for id in &report.below_threshold {
        rows.push([
            "case_filter".into(),
            id.to_string(),
            format!(
                "mean_cases {} below threshold {}",
                report.mean_cases[id], report.threshold
            ),
        ]);
    }
    for id in &report.kept {
        rows.push(["kept".into(), id.to_string(), String::new()]);
    }
    rows.sort_by(|a, b| a[1].cmp(&b[1]));

    let mut w = csv::Writer::from_writer(File::create(path).map_err(io_err(path))?);
    w.write_record(FILTER_REPORT_HEADER).map_err(csv_err(path))?;
    for row in &rows {
        w.write_record(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_diagnostics_txt(
    path: &Path,
    report: &DiagnosticsReport,
) -> Result<(), ReportError> {
    let mut out = File::create(path).map_err(io_err(path))?;
    let flag = |r: f64| if DiagnosticsReport::is_weak(r) { " (weak)" } else { "" };
    writeln!(out, "scored_regions: {}", report.n_scored).map_err(io_err(path))?;
    writeln!(
        out,
        "pearson_dtw_population: {}{}",
        report.population_r,
        flag(report.population_r)
    )
    .map_err(io_err(path))?;
    writeln!(
        out,
        "pearson_dtw_density: {}{}",
        report.density_r,
        flag(report.density_r)
    )
    .map_err(io_err(path))?;
    writeln!(
        out,
        "weak_threshold: |r| < {}",
        crate::analysis::WEAK_CORRELATION_THRESHOLD
    )
    .map_err(io_err(path))?;
    out.flush().map_err(io_err(path))?;
    Ok(())
}

/// Audit export of smoothed or raw mobility series.
pub fn write_mobility_series_csv(
    path: &Path,
    series: &BTreeMap<RegionId, DailySeries>,
) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(File::create(path).map_err(io_err(path))?);
    w.write_record(MOBILITY_SERIES_HEADER).map_err(csv_err(path))?;
    for s in series.values() {
        for (i, value) in s.values.iter().enumerate() {
            w.write_record([
                s.region_id.to_string(),
                s.date_at(i).to_string(),
                value.to_string(),
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}
