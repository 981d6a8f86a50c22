//! Analysis toolkit for the ETHBTC spot-quotient variation.
//!
//! The pipeline runs in this order:
//!
//! 1. [`ingest`] parses or downloads 1-minute klines into [`ingest::PriceSeries`].
//! 2. [`variation`] aligns the three legs and computes
//!    `ln(spot) - ln(num / den)`.
//! 3. [`summary`] builds percentile tables, yearwise slices and IQRs.
//! 4. [`unitroot`] runs the three Dickey-Fuller regressions.
//! 5. [`ou`] fits an Ornstein-Uhlenbeck process by closed-form maximum likelihood.
//! 6. [`montecarlo`] simulates the sampling distribution of the estimates.
//!
//! [`render`] turns the results into text, CSV and JSON tables.
//!
//! Heavy loops go through [`exec::Exec`], which dispatches to rayon when the
//! `parallel` feature is enabled and falls back to a plain loop otherwise.
//! Results never depend on the execution mode.

pub mod exec;
pub mod ingest;
pub mod ksum;
pub mod montecarlo;
pub mod ou;
pub mod render;
pub mod summary;
#[cfg(feature = "testkit")]
#[doc(hidden)]
pub mod testkit;
pub mod unitroot;
pub mod variation;

pub use ingest::{Kline, PriceSeries};
pub use montecarlo::{CIReport, McConfig};
pub use ou::{OUParams, SufficientStats, TransitionParams};
pub use summary::PercentileTable;
pub use unitroot::{DFModel, DFResult};
pub use variation::{AlignedTriple, VariationSeries};
