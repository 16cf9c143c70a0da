//! Seeded synthetic datasets with known ground truth.
//!
//! Each region gets a smooth positive mobility signal (baseline plus one
//! low-frequency sinusoid plus seeded noise). Daily person-flows are encoded
//! as device counts whose estimates sum back to the signal *exactly*: the
//! origin's device total equals its population, so each record's estimate is
//! its integer device count, and the intended mobility series is the rounded
//! signal. Case series are derived from the *smoothed* intended mobility —
//! mirroring sources that publish 7-day-averaged counts — so a pipeline run
//! at the true lag sees bit-identical windows.
//!
//! All randomness comes from ChaCha8 streams keyed by `(seed, region,
//! purpose)`; the generator is deterministic across platforms and the draw
//! order below is part of the format:
//!
//! 1. stream `region << 3 | 0`: signal shape (base, wave amplitude/period/
//!    phase, ripple amplitude/period/phase, case scale), in that order
//! 2. stream `region << 3 | 1`: one mobility noise draw per day
//! 3. stream `region << 3 | 2`: one case noise draw per day
//! 4. stream `region << 3 | 3`: independent-signal shape

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Dataset, FlowRecord, RegionMeta};
use crate::mobility;
use crate::series::{DailySeries, DateRange, RegionId};

/// How a region's cases relate to its mobility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Association {
    /// cases[t] = smoothed mobility[t - lag] (+ noise).
    LaggedCopy,
    /// A positive multiple of the lagged copy.
    LaggedScaled,
    /// Cases move opposite to mobility.
    Inverse,
    /// Cases follow their own unrelated signal.
    Independent,
}

impl std::fmt::Display for Association {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Association::LaggedCopy => "lagged_copy",
            Association::LaggedScaled => "lagged_scaled",
            Association::Inverse => "inverse",
            Association::Independent => "independent",
        })
    }
}

impl std::str::FromStr for Association {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lagged_copy" => Ok(Association::LaggedCopy),
            "lagged_scaled" => Ok(Association::LaggedScaled),
            "inverse" => Ok(Association::Inverse),
            "independent" => Ok(Association::Independent),
            other => Err(format!(
                "unknown association {other:?} (expected lagged_copy, lagged_scaled, inverse or independent)"
            )),
        }
    }
}

fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 11, 30).unwrap()
}

fn default_smooth_window() -> u32 {
    7
}

/// Scenario description; parseable from TOML/JSON via serde.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub n_regions: u32,
    pub n_days: u32,
    pub true_lag: u32,
    pub association: Association,
    /// Noise standard deviation as a fraction of the sinusoid amplitude.
    pub noise_sigma: f64,
    pub seed: u64,
    #[serde(default = "default_start_date")]
    pub start_date: NaiveDate,
    /// Window used to derive case series from mobility; keep equal to the
    /// analysis smoothing window for exact lag recovery.
    #[serde(default = "default_smooth_window")]
    pub smooth_window: u32,
    /// Region indices whose association is forced to `independent`,
    /// regardless of the scenario-wide setting.
    #[serde(default)]
    pub independent_regions: Vec<u32>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |msg: String| Err(SynthError::InvalidSpec(msg));
        if self.n_regions == 0 {
            return fail("n_regions must be at least 1".into());
        }
        if self.n_days < 2 {
            return fail("n_days must be at least 2".into());
        }
        if self.true_lag >= self.n_days {
            return fail(format!(
                "true_lag {} must be smaller than n_days {}",
                self.true_lag, self.n_days
            ));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return fail(format!("noise_sigma {} must be >= 0", self.noise_sigma));
        }
        if self.smooth_window == 0 || self.smooth_window > self.n_days {
            return fail(format!(
                "smooth_window {} must be in 1..={}",
                self.smooth_window, self.n_days
            ));
        }
        if let Some(bad) = self
            .independent_regions
            .iter()
            .find(|&&i| i >= self.n_regions)
        {
            return fail(format!(
                "independent_regions index {bad} out of range (n_regions = {})",
                self.n_regions
            ));
        }
        Ok(())
    }

    pub fn date_range(&self) -> DateRange {
        let end = self.start_date + chrono::Days::new(self.n_days as u64 - 1);
        DateRange::new(self.start_date, end).expect("n_days >= 1")
    }

    fn association_for(&self, region_index: u32) -> Association {
        if self.independent_regions.contains(&region_index) {
            Association::Independent
        } else {
            self.association
        }
    }
}

/// Ground truth recorded alongside the generated tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthManifest {
    pub seed: u64,
    pub start_date: NaiveDate,
    pub n_days: u32,
    pub smooth_window: u32,
    pub regions: Vec<RegionTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionTruth {
    pub region_id: RegionId,
    pub true_lag: u32,
    pub association: Association,
    pub noise_sigma: f64,
}

const PURPOSE_PARAMS: u64 = 0;
const PURPOSE_MOBILITY_NOISE: u64 = 1;
const PURPOSE_CASE_NOISE: u64 = 2;
const PURPOSE_INDEPENDENT: u64 = 3;

fn stream_rng(seed: u64, region_index: u32, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((region_index as u64) << 3) | purpose);
    rng
}

/// Per-region signal shape. Draw order is fixed; see the module docs.
///
/// The signal is one slow epidemic-wave sinusoid plus a faster ripple. The
/// ripple gives the curve several local extrema whose heights vary along the
/// wave, which pins down the alignment: a warped match against a shifted
/// window must pay for the extrema height differences, so the
/// lowest-distance lag stays at the true shift even under noise. Periods are
/// bounded away from the 0..30 day sweep span so neither component aliases.
struct SignalParams {
    base: f64,
    wave_amp: f64,
    wave_period: f64,
    wave_phase: f64,
    scale: f64,
}

impl SignalParams {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        SignalParams {
            base: rng.random_range(600.0..1600.0),
            wave_amp: rng.random_range(0.25..0.40),
            wave_period: rng.random_range(40.0..70.0),
            wave_phase: rng.random_range(0.0..std::f64::consts::TAU),
            scale: rng.random_range(0.01..0.05),
        }
    }

    fn value(&self, t: usize) -> f64 {
        let tau = std::f64::consts::TAU;
        self.base
            * (1.0 + self.wave_amp * (tau * t as f64 / self.wave_period + self.wave_phase).sin())
    }

    /// Absolute sinusoid amplitude; noise sigma scales against this.
    fn amplitude(&self) -> f64 {
        self.base * self.wave_amp
    }
}

fn region_id_for(index: u32) -> RegionId {
    RegionId::new(format!("9{index:04}"))
}

/// The raw per-region mobility signal: baseline + sinusoid + seeded noise.
/// With `noise_sigma == 0` this is exactly the deterministic curve.
pub fn gen_mobility_series(spec: &ScenarioSpec, region_index: u32) -> DailySeries {
    let params = SignalParams::draw(&mut stream_rng(spec.seed, region_index, PURPOSE_PARAMS));
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut noise_rng = stream_rng(spec.seed, region_index, PURPOSE_MOBILITY_NOISE);

    let values = (0..spec.n_days as usize)
        .map(|t| {
            let noise = if spec.noise_sigma > 0.0 {
                spec.noise_sigma * params.amplitude() * normal.sample(&mut noise_rng)
            } else {
                0.0
            };
            (params.value(t) + noise).max(0.0)
        })
        .collect();
    DailySeries::new(region_id_for(region_index), spec.start_date, values)
}

/// Derive a case series from a (smoothed) mobility series.
///
/// The first `true_lag` days repeat the earliest available value so all
/// series share one calendar grid. Noise is clamped so counts stay
/// non-negative.
pub fn gen_lagged_cases(
    mobility: &DailySeries,
    spec: &ScenarioSpec,
    region_index: u32,
) -> DailySeries {
    let association = spec.association_for(region_index);
    let params = SignalParams::draw(&mut stream_rng(spec.seed, region_index, PURPOSE_PARAMS));
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut noise_rng = stream_rng(spec.seed, region_index, PURPOSE_CASE_NOISE);
    // Source case series are published as rolling averages, which shrinks
    // their daily noise by 1/sqrt(window) relative to raw counts.
    let case_noise_factor = 1.0 / (spec.smooth_window as f64).sqrt();
    let lag = spec.true_lag as usize;
    let ceiling = mobility
        .values
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);

    let indep = match association {
        Association::Independent => Some(SignalParams::draw(&mut stream_rng(
            spec.seed,
            region_index,
            PURPOSE_INDEPENDENT,
        ))),
        _ => None,
    };

    let values = (0..mobility.len())
        .map(|t| {
            let shifted = mobility.values[t.saturating_sub(lag)];
            let (signal, noise_amp) = match association {
                Association::LaggedCopy => (shifted, params.amplitude()),
                Association::LaggedScaled => {
                    (params.scale * shifted, params.scale * params.amplitude())
                }
                Association::Inverse => (ceiling - shifted, params.amplitude()),
                Association::Independent => {
                    let p = indep.as_ref().expect("params drawn above");
                    (p.value(t), p.amplitude())
                }
            };
            let noise = if spec.noise_sigma > 0.0 {
                spec.noise_sigma * case_noise_factor * noise_amp * normal.sample(&mut noise_rng)
            } else {
                0.0
            };
            (signal + noise).max(0.0)
        })
        .collect();
    DailySeries::new(mobility.region_id.clone(), mobility.start_date, values)
}

/// Device counts never exceed this, keeping `devices_od` below every
/// synthetic population.
const DEVICE_CAP: u64 = 30_000;

/// Build the full dataset plus its ground-truth manifest.
///
/// Aggregating the emitted flows reproduces the intended (rounded) mobility
/// series exactly: every origin's device total equals its population, so
/// each record's person estimate is its integer device count.
pub fn gen_dataset(spec: &ScenarioSpec) -> Result<(Dataset, TruthManifest), SynthError> {
    spec.validate()?;
    let date_range = spec.date_range();
    let n = spec.n_regions;

    let mut regions = BTreeMap::new();
    for i in 0..n {
        let id = region_id_for(i);
        regions.insert(
            id.clone(),
            RegionMeta {
                region_id: id,
                name: format!("Synthetic County {i}"),
                population: 40_000 + 7_919 * i as u64,
                land_area_sqmi: 300.0 + 17.5 * i as f64,
                is_metro: true,
            },
        );
    }

    let mut flows = Vec::new();
    let mut cases = BTreeMap::new();
    let mut truths = Vec::new();

    for i in 0..n {
        let id = region_id_for(i);
        let raw = gen_mobility_series(spec, i);
        let intended: Vec<u64> = raw
            .values
            .iter()
            .map(|v| (v.round().max(0.0) as u64).min(DEVICE_CAP))
            .collect();

        // Split each day's devices into a within flow and an inflow from the
        // next region; the two integer parts sum back exactly.
        let neighbor = region_id_for((i + 1) % n);
        for (t, &devices) in intended.iter().enumerate() {
            let date = date_range.date_at(t);
            let within = if n > 1 { devices * 7 / 10 } else { devices };
            let inflow = devices - within;
            if within > 0 {
                flows.push(FlowRecord {
                    date,
                    origin: id.clone(),
                    destination: id.clone(),
                    devices_od: within,
                    devices_origin_total: regions[&id].population,
                });
            }
            if inflow > 0 {
                flows.push(FlowRecord {
                    date,
                    origin: neighbor.clone(),
                    destination: id.clone(),
                    devices_od: inflow,
                    devices_origin_total: regions[&neighbor].population,
                });
            }
        }

        let intended_series = DailySeries::new(
            id.clone(),
            spec.start_date,
            intended.iter().map(|&v| v as f64).collect(),
        );
        let smoothed = mobility::rolling_mean(&intended_series, spec.smooth_window as usize)
            .expect("window validated against n_days");
        cases.insert(id.clone(), gen_lagged_cases(&smoothed, spec, i));

        truths.push(RegionTruth {
            region_id: id,
            true_lag: spec.true_lag,
            association: spec.association_for(i),
            noise_sigma: spec.noise_sigma,
        });
    }

    let dataset = Dataset::assemble(regions, flows, cases, date_range);
    let manifest = TruthManifest {
        seed: spec.seed,
        start_date: spec.start_date,
        n_days: spec.n_days,
        smooth_window: spec.smooth_window,
        regions: truths,
    };
    Ok((dataset, manifest))
}

/// Generate and write `regions.csv`, `flows.csv`, `cases.csv` and
/// `truth.json` into `dir`.
pub fn write_scenario(spec: &ScenarioSpec, dir: &Path) -> Result<Dataset, SynthWriteError> {
    let (dataset, manifest) = gen_dataset(spec)?;
    dataset.write_dir(dir)?;
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    std::fs::write(dir.join("truth.json"), json)?;
    Ok(dataset)
}

#[derive(Debug, Error)]
pub enum SynthWriteError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("cannot write scenario: {0}")]
    Io(#[from] std::io::Error),
}
