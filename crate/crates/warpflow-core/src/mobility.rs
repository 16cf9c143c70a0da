//! Person-flow estimation from device counts, per-region daily aggregation,
//! and moving-average smoothing.
//!
//! A flow of `devices_od` devices out of an origin with `devices_o` observed
//! devices and population `P` scales to `devices_od * P / devices_o` persons,
//! assuming the unobserved population moves like the observed sample. A
//! region's daily mobility is the sum of the estimated within flow and all
//! inflows for that day.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ingest::{FlowRecord, RegionMeta};
use crate::series::{DailySeries, DateRange, RegionId};

#[derive(Debug, Error, PartialEq)]
pub enum MobilityError {
    #[error("cannot estimate a flow with zero observed devices in the origin")]
    ZeroDevices,
    #[error("smoothing window {window} exceeds series length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("smoothing window must be at least 1")]
    ZeroWindow,
    #[error("unknown origin region {0} in flow record")]
    UnknownOrigin(RegionId),
}

/// Scale a device flow to persons: `devices_od * population_o / devices_o`.
///
/// Linear in `devices_od`, so splitting a record into parts that sum to the
/// original leaves aggregates unchanged (up to float rounding).
pub fn estimate_flow(
    devices_od: u64,
    population_o: u64,
    devices_o: u64,
) -> Result<f64, MobilityError> {
    if devices_o == 0 {
        return Err(MobilityError::ZeroDevices);
    }
    Ok(devices_od as f64 * population_o as f64 / devices_o as f64)
}

/// Sum estimated within-flow and inflow into `target` for every day of
/// `date_range`. Days with no matching record contribute 0.
///
/// Matching records are folded in a canonical sort order, so the result is
/// bit-identical under any permutation of `flows`.
pub fn aggregate_region_mobility(
    flows: &[FlowRecord],
    regions: &BTreeMap<RegionId, RegionMeta>,
    target: &RegionId,
    date_range: DateRange,
) -> Result<DailySeries, MobilityError> {
    let mut matching: Vec<&FlowRecord> = flows
        .iter()
        .filter(|f| &f.destination == target && date_range.contains(f.date))
        .collect();
    matching.sort_unstable();

    let mut values = vec![0.0; date_range.num_days()];
    for flow in matching {
        let origin = regions
            .get(&flow.origin)
            .ok_or_else(|| MobilityError::UnknownOrigin(flow.origin.clone()))?;
        let estimate =
            estimate_flow(flow.devices_od, origin.population, flow.devices_origin_total)?;
        // index_of cannot fail: the date passed the range filter above.
        let idx = date_range.index_of(flow.date).expect("date in range");
        values[idx] += estimate;
    }
    Ok(DailySeries::new(target.clone(), date_range.start(), values))
}

/// Trailing moving average. `output[i]` is the mean of the last `window`
/// values ending at `i`; the first `window - 1` entries average the partial
/// prefix, so output length equals input length.
pub fn rolling_mean(series: &DailySeries, window: usize) -> Result<DailySeries, MobilityError> {
    let smoothed = rolling_mean_values(&series.values, window)?;
    Ok(DailySeries::new(
        series.region_id.clone(),
        series.start_date,
        smoothed,
    ))
}

/// [`rolling_mean`] on a bare slice.
pub fn rolling_mean_values(values: &[f64], window: usize) -> Result<Vec<f64>, MobilityError> {
    if window == 0 {
        return Err(MobilityError::ZeroWindow);
    }
    if window > values.len() {
        return Err(MobilityError::WindowTooLarge {
            window,
            len: values.len(),
        });
    }
    let out = (0..values.len())
        .map(|i| {
            let lo = i + 1 - window.min(i + 1);
            let slice = &values[lo..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect();
    Ok(out)
}
