//! Measures how closely regional mobility flows track epidemic case counts.
//!
//! The pipeline: parse region/flow/case tables ([`ingest`]), estimate
//! person-flows from device counts and smooth them ([`mobility`]), select
//! analysis regions and lag-align + normalize each region's pair of series
//! ([`preprocess`]), score the pair with dynamic time warping ([`dtw`]), and
//! aggregate scores into classifications, correlation diagnostics, and lag
//! sensitivity sweeps ([`analysis`]). [`synth`] generates seeded datasets
//! with known ground truth; [`report`] reads and writes the result tables.

pub mod analysis;
pub mod dtw;
pub mod ingest;
pub mod mobility;
pub mod preprocess;
pub mod report;
pub mod series;
pub mod synth;

pub use analysis::{ClassifiedResult, LagSweepResult, RegionOutcome, RegionResult};
pub use ingest::{Dataset, FillPolicy, FlowRecord, IngestError, RegionMeta};
pub use preprocess::{AlignedPair, AnalysisConfig, CaseFilter, FilterReport};
pub use series::{DailySeries, DateRange, RegionId};
