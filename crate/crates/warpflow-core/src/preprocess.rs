//! Analysis-region selection, lag alignment, and min-max normalization.
//!
//! Regions are filtered in two stages: non-metro regions are dropped first
//! (when `metro_only` is set), then regions whose mean daily cases over the
//! study period fall strictly below the median of those means. The survivors
//! have their smoothed mobility paired with cases shifted `lag_days` forward,
//! and each truncated window is independently rescaled to [0, 1].

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::dtw::BandConstraint;
use crate::ingest::RegionMeta;
use crate::mobility::{self, MobilityError};
use crate::series::{DailySeries, DateRange, RegionId};

/// Which series of an aligned pair degenerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    Mobility,
    Cases,
}

impl std::fmt::Display for SeriesKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SeriesKind::Mobility => "mobility",
            SeriesKind::Cases => "cases",
        })
    }
}

/// A constant (or single-point) window carries no trend to normalize.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("degenerate series: min equals max, nothing to normalize")]
pub struct DegenerateSeries;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("degenerate {0} series after preprocessing")]
    Degenerate(SeriesKind),
    #[error("lag of {lag} days needs series longer than {len} day(s)")]
    LagTooLarge { lag: u32, len: usize },
    #[error("series for region {region} are not on a common date grid")]
    GridMismatch { region: RegionId },
    #[error("no region survived filtering")]
    EmptyAfterFilter,
    #[error(transparent)]
    Mobility(#[from] MobilityError),
}

/// Case-count filter applied after the metro stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CaseFilter {
    /// Drop regions whose mean daily cases are below the median of the
    /// surviving regions' means.
    Median,
    /// Drop regions whose mean daily cases are below a fixed threshold.
    Threshold(f64),
}

impl Default for CaseFilter {
    fn default() -> Self {
        CaseFilter::Median
    }
}

/// Knobs for the per-region pipeline. Defaults: 7-day lag, 7-day smoothing
/// window, metro regions only, median case filter, study period
/// 2020-11-30 through 2021-01-24.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub lag_days: u32,
    pub smooth_window: u32,
    pub date_range: DateRange,
    pub min_case_filter: CaseFilter,
    pub metro_only: bool,
    /// Source case counts are usually already a 7-day rolling average;
    /// enable this only for raw daily inputs.
    pub resmooth_cases: bool,
    pub band: BandConstraint,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let start = chrono::NaiveDate::from_ymd_opt(2020, 11, 30).unwrap();
        let end = chrono::NaiveDate::from_ymd_opt(2021, 1, 24).unwrap();
        AnalysisConfig {
            lag_days: 7,
            smooth_window: 7,
            date_range: DateRange::new(start, end).unwrap(),
            min_case_filter: CaseFilter::Median,
            metro_only: true,
            resmooth_cases: false,
            band: BandConstraint::None,
        }
    }
}

impl AnalysisConfig {
    /// `lag_days` must leave at least one aligned day.
    pub fn validate(&self) -> Result<(), PreprocessError> {
        let len = self.date_range.num_days();
        if self.lag_days as usize >= len {
            return Err(PreprocessError::LagTooLarge {
                lag: self.lag_days,
                len,
            });
        }
        Ok(())
    }
}

/// Why a region left (or survived) the filter, for the audit trail.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    /// Regions in the input table.
    pub total: usize,
    /// Dropped in stage 1 (not in a metropolitan statistical area).
    pub non_metro: Vec<RegionId>,
    /// Dropped in stage 2 (mean cases strictly below the threshold).
    pub below_threshold: Vec<RegionId>,
    /// Survivors, sorted by region id.
    pub kept: Vec<RegionId>,
    /// Mean daily cases per metro-stage survivor.
    pub mean_cases: BTreeMap<RegionId, f64>,
    /// The applied threshold (the median of means, unless fixed).
    pub threshold: f64,
}

/// Two-stage region filter. Returns the kept set plus a full report.
pub fn filter_regions(
    regions: &BTreeMap<RegionId, RegionMeta>,
    case_series: &BTreeMap<RegionId, DailySeries>,
    config: &AnalysisConfig,
) -> Result<(BTreeSet<RegionId>, FilterReport), PreprocessError> {
    let mut non_metro = Vec::new();
    let mut metro_survivors: Vec<&RegionId> = Vec::new();
    for (id, meta) in regions {
        if config.metro_only && !meta.is_metro {
            non_metro.push(id.clone());
        } else {
            metro_survivors.push(id);
        }
    }

    let mut mean_cases = BTreeMap::new();
    for id in &metro_survivors {
        // Regions without a case series cannot pass the case filter; treat
        // the mean as 0 so they drop below any positive threshold.
        let mean = case_series.get(*id).map_or(0.0, DailySeries::mean);
        mean_cases.insert((*id).clone(), mean);
    }

    let threshold = match config.min_case_filter {
        CaseFilter::Threshold(t) => t,
        CaseFilter::Median => {
            let means: Vec<f64> = mean_cases.values().copied().collect();
            median(&means)
        }
    };

    let mut below_threshold = Vec::new();
    let mut kept = Vec::new();
    for id in metro_survivors {
        // Strict comparison: ties at the threshold are kept.
        if mean_cases[id] < threshold {
            below_threshold.push(id.clone());
        } else {
            kept.push(id.clone());
        }
    }

    if kept.is_empty() {
        return Err(PreprocessError::EmptyAfterFilter);
    }
    let kept_set: BTreeSet<RegionId> = kept.iter().cloned().collect();
    Ok((
        kept_set,
        FilterReport {
            total: regions.len(),
            non_metro,
            below_threshold,
            kept,
            mean_cases,
            threshold,
        },
    ))
}

/// Midpoint median: mean of the two central values for even counts.
/// Returns 0.0 for an empty slice (an empty filter stage).
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    }
}

/// Pair mobility day `t` with cases day `t + lag`: returns
/// `(mobility[..T-lag], cases[lag..])`, both of length `T - lag`.
pub fn apply_lag(
    mobility: &DailySeries,
    cases: &DailySeries,
    lag_days: u32,
) -> Result<(Vec<f64>, Vec<f64>), PreprocessError> {
    if !mobility.same_grid(cases) {
        return Err(PreprocessError::GridMismatch {
            region: mobility.region_id.clone(),
        });
    }
    let len = mobility.len();
    let lag = lag_days as usize;
    if lag >= len {
        return Err(PreprocessError::LagTooLarge {
            lag: lag_days,
            len,
        });
    }
    Ok((
        mobility.values[..len - lag].to_vec(),
        cases.values[lag..].to_vec(),
    ))
}

/// Affine rescale to [0, 1]: the minimum maps to exactly 0.0 and the
/// maximum to exactly 1.0.
pub fn min_max_normalize(values: &[f64]) -> Result<Vec<f64>, DegenerateSeries> {
    if values.len() < 2 {
        return Err(DegenerateSeries);
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range == 0.0 {
        return Err(DegenerateSeries);
    }
    Ok(values.iter().map(|v| (v - min) / range).collect())
}

/// Two equal-length normalized windows ready for DTW.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    pub region_id: RegionId,
    pub mobility_norm: Vec<f64>,
    pub cases_norm: Vec<f64>,
    pub n: usize,
    pub lag_days: u32,
}

/// Smooth, lag-align, and normalize one region's series pair.
///
/// Normalization happens after lag truncation so the [0, 1] range describes
/// the compared window rather than days the lag discarded.
pub fn build_aligned_pair(
    mobility: &DailySeries,
    cases: &DailySeries,
    config: &AnalysisConfig,
) -> Result<AlignedPair, PreprocessError> {
    let smoothed = mobility::rolling_mean(mobility, config.smooth_window as usize)?;
    let cases = if config.resmooth_cases {
        mobility::rolling_mean(cases, config.smooth_window as usize)?
    } else {
        cases.clone()
    };
    align_prepared(&smoothed, &cases, config.lag_days)
}

/// Lag-align and normalize series that are already smoothed. Sweeping lags
/// goes through here so every lag shares one smoothing pass.
pub fn align_prepared(
    smoothed_mobility: &DailySeries,
    cases: &DailySeries,
    lag_days: u32,
) -> Result<AlignedPair, PreprocessError> {
    let (mobility_window, cases_window) = apply_lag(smoothed_mobility, cases, lag_days)?;
    let mobility_norm = min_max_normalize(&mobility_window)
        .map_err(|_| PreprocessError::Degenerate(SeriesKind::Mobility))?;
    let cases_norm = min_max_normalize(&cases_window)
        .map_err(|_| PreprocessError::Degenerate(SeriesKind::Cases))?;
    let n = mobility_norm.len();
    Ok(AlignedPair {
        region_id: smoothed_mobility.region_id.clone(),
        mobility_norm,
        cases_norm,
        n,
        lag_days,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        crate::series::parse_iso_date(s).unwrap()
    }

    fn series(id: &str, values: Vec<f64>) -> DailySeries {
        DailySeries::new(RegionId::from(id), d("2020-11-30"), values)
    }

    fn meta(id: &str, is_metro: bool) -> RegionMeta {
        RegionMeta {
            region_id: RegionId::from(id),
            name: id.to_owned(),
            population: 1000,
            land_area_sqmi: 10.0,
            is_metro,
        }
    }

    fn config_for(days: usize) -> AnalysisConfig {
        AnalysisConfig {
            date_range: DateRange::new(
                d("2020-11-30"),
                d("2020-11-30") + chrono::Days::new(days as u64 - 1),
            )
            .unwrap(),
            ..AnalysisConfig::default()
        }
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), 2.5);
        assert_eq!(median(&[5.0]), 5.0);
    }

    #[test]
    fn filter_drops_below_median_and_keeps_ties() {
        // Means 1,2,3,4 -> median 2.5 -> regions with means 3 and 4 kept.
        let mut regions = BTreeMap::new();
        let mut cases = BTreeMap::new();
        for (i, id) in ["a", "b", "c", "d"].iter().enumerate() {
            regions.insert(RegionId::from(*id), meta(id, true));
            cases.insert(
                RegionId::from(*id),
                series(id, vec![(i + 1) as f64; 4]),
            );
        }
        let config = config_for(4);
        let (kept, report) = filter_regions(&regions, &cases, &config).unwrap();
        assert_eq!(report.threshold, 2.5);
        let kept_ids: Vec<&str> = kept.iter().map(|r| r.as_str()).collect();
        assert_eq!(kept_ids, vec!["c", "d"]);
        assert_eq!(report.below_threshold.len(), 2);
        assert_eq!(report.non_metro.len(), 0);
        assert_eq!(report.total, 4);
    }

    #[test]
    fn filter_metro_stage_runs_first() {
        let mut regions = BTreeMap::new();
        let mut cases = BTreeMap::new();
        // High-case region that is non-metro must drop in stage 1 and not
        // contribute to the median.
        for (id, is_metro, mean) in [("a", false, 100.0), ("b", true, 2.0), ("c", true, 4.0)] {
            regions.insert(RegionId::from(id), meta(id, is_metro));
            cases.insert(RegionId::from(id), series(id, vec![mean; 3]));
        }
        let config = config_for(3);
        let (kept, report) = filter_regions(&regions, &cases, &config).unwrap();
        assert_eq!(report.non_metro, vec![RegionId::from("a")]);
        assert_eq!(report.threshold, 3.0); // median of {2, 4}
        assert_eq!(kept.len(), 1);
        assert!(kept.contains(&RegionId::from("c")));
    }

    #[test]
    fn filter_empty_after_all_non_metro() {
        let mut regions = BTreeMap::new();
        regions.insert(RegionId::from("a"), meta("a", false));
        let cases = BTreeMap::from([(RegionId::from("a"), series("a", vec![1.0; 3]))]);
        let config = config_for(3);
        assert!(matches!(
            filter_regions(&regions, &cases, &config),
            Err(PreprocessError::EmptyAfterFilter)
        ));
    }

    #[test]
    fn filter_respects_metro_only_false() {
        let mut regions = BTreeMap::new();
        regions.insert(RegionId::from("a"), meta("a", false));
        let cases = BTreeMap::from([(RegionId::from("a"), series("a", vec![1.0; 3]))]);
        let config = AnalysisConfig {
            metro_only: false,
            ..config_for(3)
        };
        let (kept, _) = filter_regions(&regions, &cases, &config).unwrap();
        assert_eq!(kept.len(), 1);
    }

    #[test]
    fn apply_lag_shifts_and_truncates() {
        let mob = series("a", (1..=10).map(f64::from).collect());
        let cas = series("a", (11..=20).map(f64::from).collect());
        let (m, c) = apply_lag(&mob, &cas, 2).unwrap();
        assert_eq!(m, (1..=8).map(f64::from).collect::<Vec<_>>());
        assert_eq!(c, (13..=20).map(f64::from).collect::<Vec<_>>());

        let (m0, c0) = apply_lag(&mob, &cas, 0).unwrap();
        assert_eq!(m0, mob.values);
        assert_eq!(c0, cas.values);

        assert!(matches!(
            apply_lag(&mob, &cas, 10),
            Err(PreprocessError::LagTooLarge { lag: 10, len: 10 })
        ));
    }

    #[test]
    fn apply_lag_rejects_mismatched_grids() {
        let mob = series("a", vec![1.0; 5]);
        let cas = series("a", vec![1.0; 6]);
        assert!(matches!(
            apply_lag(&mob, &cas, 1),
            Err(PreprocessError::GridMismatch { .. })
        ));
    }

    #[test]
    fn min_max_examples() {
        assert_eq!(min_max_normalize(&[2.0, 4.0, 6.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(min_max_normalize(&[0.0, 1.0]).unwrap(), vec![0.0, 1.0]);
        assert_eq!(min_max_normalize(&[7.0, 7.0, 7.0]), Err(DegenerateSeries));
        assert_eq!(min_max_normalize(&[3.0]), Err(DegenerateSeries));
    }

    #[test]
    fn normalized_endpoints_are_exact() {
        let out = min_max_normalize(&[3.1, 9.7, 4.2, 8.8]).unwrap();
        assert_eq!(out[0], 0.0);
        assert_eq!(out[1], 1.0);
    }

    #[test]
    fn aligned_pair_length_arithmetic() {
        // 63 days with a 7-day lag leaves 56 aligned days.
        let days = 63;
        let mob = series("a", (0..days).map(|t| 100.0 + (t as f64 * 0.4).sin() * 30.0).collect());
        let cas = series("a", (0..days).map(|t| 50.0 + (t as f64 * 0.3).cos() * 20.0).collect());
        let config = config_for(days);
        let pair = build_aligned_pair(&mob, &cas, &config).unwrap();
        assert_eq!(pair.n, 56);
        assert_eq!(pair.mobility_norm.len(), 56);
        assert_eq!(pair.cases_norm.len(), 56);
        assert_eq!(pair.lag_days, 7);
    }

    #[test]
    fn aligned_pair_normalization_fixed_point() {
        // Already-normalized non-constant series with lag 0 and window 1
        // pass through unchanged.
        let mob = series("a", vec![0.0, 0.25, 1.0, 0.5]);
        let cas = series("a", vec![1.0, 0.75, 0.0, 0.25]);
        let config = AnalysisConfig {
            lag_days: 0,
            smooth_window: 1,
            ..config_for(4)
        };
        let pair = build_aligned_pair(&mob, &cas, &config).unwrap();
        assert_eq!(pair.mobility_norm, mob.values);
        assert_eq!(pair.cases_norm, cas.values);
    }

    #[test]
    fn degenerate_mobility_is_reported_as_such() {
        let mob = series("a", vec![5.0; 10]);
        let cas = series("a", (0..10).map(f64::from).collect());
        let config = config_for(10);
        match build_aligned_pair(&mob, &cas, &config) {
            Err(PreprocessError::Degenerate(SeriesKind::Mobility)) => {}
            other => panic!("expected degenerate mobility, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn normalization_is_affine_invariant(
            values in proptest::collection::vec(-1e3f64..1e3, 2..50),
            a in 0.001f64..10.0,
            b in -10.0f64..10.0,
        ) {
            let base = min_max_normalize(&values);
            let transformed: Vec<f64> = values.iter().map(|v| a * v + b).collect();
            let scaled = min_max_normalize(&transformed);
            match (base, scaled) {
                (Ok(base), Ok(scaled)) => {
                    for (u, v) in base.iter().zip(&scaled) {
                        prop_assert!((u - v).abs() <= 1e-12);
                    }
                }
                (Err(DegenerateSeries), Err(DegenerateSeries)) => {}
                other => prop_assert!(false, "mismatched outcomes: {other:?}"),
            }
        }

        #[test]
        fn lag_output_lengths(len in 2usize..80, lag in 0u32..79) {
            prop_assume!((lag as usize) < len);
            let mob = series("a", (0..len).map(|v| v as f64).collect());
            let cas = series("a", (0..len).map(|v| (v * 2) as f64).collect());
            let (m, c) = apply_lag(&mob, &cas, lag).unwrap();
            prop_assert_eq!(m.len(), len - lag as usize);
            prop_assert_eq!(c.len(), len - lag as usize);
        }
    }
}
