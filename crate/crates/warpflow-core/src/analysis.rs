//! Per-region pipeline orchestration, lag sensitivity sweeps, Pearson
//! diagnostics, and standard-deviation classification of DTW distances.
//!
//! Region-level work items are independent pure functions; with the
//! `parallel` feature they run on the ambient rayon pool. Results are always
//! emitted in ascending region order, so worker count never changes output.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dtw::{self, DtwError};
use crate::ingest::{Dataset, RegionMeta};
use crate::mobility::{self, MobilityError};
use crate::preprocess::{self, AnalysisConfig, FilterReport, PreprocessError, SeriesKind};
use crate::series::{DailySeries, RegionId};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Why a region has no DTW distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    DegenerateMobility,
    DegenerateCases,
    Filtered,
}

impl SkipReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            SkipReason::DegenerateMobility => "degenerate_mobility",
            SkipReason::DegenerateCases => "degenerate_cases",
            SkipReason::Filtered => "filtered",
        }
    }
}

impl std::fmt::Display for SkipReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SkipReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "degenerate_mobility" => Ok(SkipReason::DegenerateMobility),
            "degenerate_cases" => Ok(SkipReason::DegenerateCases),
            "filtered" => Ok(SkipReason::Filtered),
            other => Err(format!("unknown skip reason {other:?}")),
        }
    }
}

/// A region either scored a distance or was skipped for a recorded reason.
#[derive(Debug, Clone, PartialEq)]
pub enum RegionOutcome {
    Scored { distance: f64, n: usize },
    Skipped(SkipReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionResult {
    pub region_id: RegionId,
    pub lag_days: u32,
    pub outcome: RegionOutcome,
}

impl RegionResult {
    pub fn distance(&self) -> Option<f64> {
        match self.outcome {
            RegionOutcome::Scored { distance, .. } => Some(distance),
            RegionOutcome::Skipped(_) => None,
        }
    }

    pub fn skip_reason(&self) -> Option<SkipReason> {
        match self.outcome {
            RegionOutcome::Skipped(reason) => Some(reason),
            RegionOutcome::Scored { .. } => None,
        }
    }
}

/// Distances for one region across a range of candidate lags.
#[derive(Debug, Clone, PartialEq)]
pub struct LagSweepResult {
    pub region_id: RegionId,
    /// One entry per lag in the configured range, endpoints inclusive.
    pub distances: BTreeMap<u32, f64>,
    /// Smallest-distance lag; ties go to the smaller lag.
    pub best_lag: u32,
}

impl LagSweepResult {
    pub fn best_distance(&self) -> f64 {
        self.distances[&self.best_lag]
    }
}

/// Everything a full run produces besides the exports themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub results: Vec<RegionResult>,
    pub filter: FilterReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagSweepOutput {
    pub results: Vec<LagSweepResult>,
    /// Regions with no sweep, with the reason (filtered or degenerate).
    pub skipped: Vec<(RegionId, SkipReason)>,
    pub filter: FilterReport,
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Mobility(#[from] MobilityError),
    #[error(transparent)]
    Dtw(#[from] DtwError),
    #[error("region {0} is not part of the dataset")]
    UnknownRegion(RegionId),
    #[error("one input has zero variance; Pearson correlation is undefined")]
    ZeroVariance,
    #[error("inputs have different lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} scored regions, have {got}")]
    NotEnoughScored { needed: usize, got: usize },
    #[error("all distances are identical; standard-deviation classes are undefined")]
    ZeroSpread,
    #[error("invalid lag range: lag_min {lag_min} exceeds lag_max {lag_max}")]
    LagRangeInvalid { lag_min: u32, lag_max: u32 },
}

/// Run the full pipeline for one region that survived filtering:
/// aggregate mobility, align with cases, score with DTW. Degenerate windows
/// become a skipped result rather than an error.
pub fn run_region(
    region_id: &RegionId,
    dataset: &Dataset,
    config: &AnalysisConfig,
) -> Result<RegionResult, AnalysisError> {
    let cases = dataset
        .cases
        .get(region_id)
        .ok_or_else(|| AnalysisError::UnknownRegion(region_id.clone()))?;
    let raw = mobility::aggregate_region_mobility(
        &dataset.flows,
        &dataset.regions,
        region_id,
        dataset.date_range,
    )?;

    let outcome = match preprocess::build_aligned_pair(&raw, cases, config) {
        Ok(pair) => {
            let distance = dtw::dtw_distance(&pair.mobility_norm, &pair.cases_norm, config.band)?;
            RegionOutcome::Scored {
                distance,
                n: pair.n,
            }
        }
        Err(PreprocessError::Degenerate(kind)) => RegionOutcome::Skipped(match kind {
            SeriesKind::Mobility => SkipReason::DegenerateMobility,
            SeriesKind::Cases => SkipReason::DegenerateCases,
        }),
        Err(other) => return Err(other.into()),
    };
    Ok(RegionResult {
        region_id: region_id.clone(),
        lag_days: config.lag_days,
        outcome,
    })
}

/// Score every region in the dataset. Regions dropped by the filter stages
/// appear as `Skipped(Filtered)` so exports stay auditable. Results are
/// sorted by region id and identical across runs and worker counts.
pub fn run_all(
    dataset: &Dataset,
    config: &AnalysisConfig,
) -> Result<Vec<RegionResult>, AnalysisError> {
    run_all_with_report(dataset, config).map(|out| out.results)
}

pub fn run_all_with_report(
    dataset: &Dataset,
    config: &AnalysisConfig,
) -> Result<RunOutput, AnalysisError> {
    config.validate()?;
    let (kept, filter) = preprocess::filter_regions(&dataset.regions, &dataset.cases, config)?;

    let all_ids: Vec<&RegionId> = dataset.regions.keys().collect();
    let results = map_regions(&all_ids, |id| {
        if kept.contains(id) {
            run_region(id, dataset, config)
        } else {
            Ok(RegionResult {
                region_id: id.clone(),
                lag_days: config.lag_days,
                outcome: RegionOutcome::Skipped(SkipReason::Filtered),
            })
        }
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(RunOutput { results, filter })
}

/// Sweep candidate lags for one region, re-truncating and re-normalizing at
/// every lag. The mobility series is aggregated and smoothed once; each lag
/// then goes through exactly the same alignment path as [`run_region`].
///
/// The outer `Result` carries pipeline errors; the inner one distinguishes
/// a swept region from one whose windows degenerated at some lag.
pub fn lag_sweep(
    region_id: &RegionId,
    dataset: &Dataset,
    config: &AnalysisConfig,
    lag_min: u32,
    lag_max: u32,
) -> Result<Result<LagSweepResult, SkipReason>, AnalysisError> {
    if lag_min > lag_max {
        return Err(AnalysisError::LagRangeInvalid { lag_min, lag_max });
    }
    let len = dataset.date_range.num_days();
    if lag_max as usize >= len {
        return Err(PreprocessError::LagTooLarge { lag: lag_max, len }.into());
    }

    let (smoothed, cases) = prepare_region_series(region_id, dataset, config)?;

    let mut distances = BTreeMap::new();
    for lag in lag_min..=lag_max {
        let pair = match preprocess::align_prepared(&smoothed, &cases, lag) {
            Ok(pair) => pair,
            Err(PreprocessError::Degenerate(kind)) => {
                return Ok(Err(match kind {
                    SeriesKind::Mobility => SkipReason::DegenerateMobility,
                    SeriesKind::Cases => SkipReason::DegenerateCases,
                }))
            }
            Err(other) => return Err(other.into()),
        };
        let d = dtw::dtw_distance(&pair.mobility_norm, &pair.cases_norm, config.band)?;
        distances.insert(lag, d);
    }

    let (&best_lag, _) = distances
        .iter()
        .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite distances"))
        .expect("lag range is non-empty");
    Ok(Ok(LagSweepResult {
        region_id: region_id.clone(),
        distances,
        best_lag,
    }))
}

/// [`lag_sweep`] across every surviving region.
pub fn lag_sweep_all(
    dataset: &Dataset,
    config: &AnalysisConfig,
    lag_min: u32,
    lag_max: u32,
) -> Result<LagSweepOutput, AnalysisError> {
    let (kept, filter) = preprocess::filter_regions(&dataset.regions, &dataset.cases, config)?;

    let mut skipped: Vec<(RegionId, SkipReason)> = dataset
        .regions
        .keys()
        .filter(|id| !kept.contains(*id))
        .map(|id| (id.clone(), SkipReason::Filtered))
        .collect();

    let kept_ids: Vec<&RegionId> = kept.iter().collect();
    let swept = map_regions(&kept_ids, |id| {
        lag_sweep(id, dataset, config, lag_min, lag_max)
    });

    let mut results = Vec::new();
    for (id, outcome) in kept_ids.iter().zip(swept) {
        match outcome? {
            Ok(result) => results.push(result),
            Err(reason) => skipped.push(((*id).clone(), reason)),
        }
    }
    skipped.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(LagSweepOutput {
        results,
        skipped,
        filter,
    })
}

/// Sample Pearson product-moment correlation, clamped to [-1, 1].
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(AnalysisError::NotEnoughScored {
            needed: 2,
            got: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;

    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(AnalysisError::ZeroVariance);
    }
    Ok((cov / (var_x * var_y).sqrt()).clamp(-1.0, 1.0))
}

/// Coefficients below this magnitude are flagged as weak.
pub const WEAK_CORRELATION_THRESHOLD: f64 = 0.3;

/// Pearson correlation of DTW distances against region size measures.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub n_scored: usize,
    /// r(dtw distance, population).
    pub population_r: f64,
    /// r(dtw distance, population density).
    pub density_r: f64,
}

impl DiagnosticsReport {
    pub fn is_weak(r: f64) -> bool {
        r.abs() < WEAK_CORRELATION_THRESHOLD
    }
}

/// Correlate distances with population and population density over all
/// scored regions.
pub fn run_diagnostics(
    results: &[RegionResult],
    regions: &BTreeMap<RegionId, RegionMeta>,
) -> Result<DiagnosticsReport, AnalysisError> {
    let mut distances = Vec::new();
    let mut populations = Vec::new();
    let mut densities = Vec::new();
    for result in results {
        if let Some(d) = result.distance() {
            let meta = regions
                .get(&result.region_id)
                .ok_or_else(|| AnalysisError::UnknownRegion(result.region_id.clone()))?;
            distances.push(d);
            populations.push(meta.population as f64);
            densities.push(meta.density());
        }
    }
    if distances.len() < 2 {
        return Err(AnalysisError::NotEnoughScored {
            needed: 2,
            got: distances.len(),
        });
    }
    Ok(DiagnosticsReport {
        n_scored: distances.len(),
        population_r: pearson(&distances, &populations)?,
        density_r: pearson(&distances, &densities)?,
    })
}

/// Standard-deviation class of a z-scored distance. Low distance means the
/// two trends track each other closely.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZClass {
    FarBelowMean,
    BelowMean,
    NearMean,
    AboveMean,
    FarAboveMean,
}

impl ZClass {
    /// Breaks at ±0.5 and ±1.5 standard deviations; intervals are half-open
    /// upward, so a z-score exactly on a break joins the higher class.
    pub fn of(z: f64) -> ZClass {
        if z < -1.5 {
            ZClass::FarBelowMean
        } else if z < -0.5 {
            ZClass::BelowMean
        } else if z < 0.5 {
            ZClass::NearMean
        } else if z < 1.5 {
            ZClass::AboveMean
        } else {
            ZClass::FarAboveMean
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ZClass::FarBelowMean => "< -1.5",
            ZClass::BelowMean => "-1.5..-0.5",
            ZClass::NearMean => "-0.5..0.5",
            ZClass::AboveMean => "0.5..1.5",
            ZClass::FarAboveMean => "> 1.5",
        }
    }
}

impl std::fmt::Display for ZClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// A scored region's distance in standard-deviation units, map-ready.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedResult {
    pub region_id: RegionId,
    pub dtw_distance: f64,
    pub z_score: f64,
    pub class: ZClass,
}

/// Z-score every scored distance against the mean and sample (n-1) standard
/// deviation of all scored distances, then bucket into the five classes.
/// Skipped regions are excluded.
pub fn classify_std(results: &[RegionResult]) -> Result<Vec<ClassifiedResult>, AnalysisError> {
    let scored: Vec<(&RegionId, f64)> = results
        .iter()
        .filter_map(|r| r.distance().map(|d| (&r.region_id, d)))
        .collect();
    if scored.len() < 2 {
        return Err(AnalysisError::NotEnoughScored {
            needed: 2,
            got: scored.len(),
        });
    }
    let n = scored.len() as f64;
    let mean = scored.iter().map(|(_, d)| d).sum::<f64>() / n;
    let ss = scored
        .iter()
        .map(|(_, d)| (d - mean) * (d - mean))
        .sum::<f64>();
    let std = (ss / (n - 1.0)).sqrt();
    if std == 0.0 {
        return Err(AnalysisError::ZeroSpread);
    }

    Ok(scored
        .into_iter()
        .map(|(region_id, d)| {
            let z = (d - mean) / std;
            ClassifiedResult {
                region_id: region_id.clone(),
                dtw_distance: d,
                z_score: z,
                class: ZClass::of(z),
            }
        })
        .collect())
}

/// Aggregate and smooth one region's mobility and fetch its cases; shared
/// by the sweep and by callers that align lags themselves (the demo UI).
pub fn prepare_region_series(
    region_id: &RegionId,
    dataset: &Dataset,
    config: &AnalysisConfig,
) -> Result<(DailySeries, DailySeries), AnalysisError> {
    let cases = dataset
        .cases
        .get(region_id)
        .ok_or_else(|| AnalysisError::UnknownRegion(region_id.clone()))?;
    let raw = mobility::aggregate_region_mobility(
        &dataset.flows,
        &dataset.regions,
        region_id,
        dataset.date_range,
    )?;
    let smoothed = mobility::rolling_mean(&raw, config.smooth_window as usize)?;
    let cases = if config.resmooth_cases {
        mobility::rolling_mean(cases, config.smooth_window as usize)?
    } else {
        cases.clone()
    };
    Ok((smoothed, cases))
}

fn map_regions<'a, T: Send>(
    ids: &[&'a RegionId],
    f: impl Fn(&'a RegionId) -> T + Sync + Send,
) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        ids.par_iter().map(|id| f(id)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ids.iter().map(|id| f(id)).collect()
    }
}
