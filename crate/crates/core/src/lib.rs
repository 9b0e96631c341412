//! Gas price oracles for next-block inclusion on Ethereum.
//!
//! The crate predicts the minimum gas price a transaction must offer to land
//! in the next block. It provides:
//!
//! * [`ingest`]: raw block loading from CSV/JSON files and JSON-RPC nodes.
//! * [`preprocess`]: small-block filtering and low-fee trimming, producing the
//!   per-block minimum price series.
//! * [`gp`]: exact Gaussian-process regression over that series, with
//!   marginal-likelihood hyperparameter fitting and percentile quotes.
//! * [`baseline`]: the GS-Express and Geth empirical-percentile oracles.
//! * [`evaluation`]: success indicators, success rates, IPW and a rolling
//!   backtest driver.
//! * [`hybrid`]: the switching oracle that watches the GS-Express instant
//!   success rate and falls back to the GP or re-tunes the percentile.
//! * [`report`]: comparison tables and plot data built from backtests.

pub mod baseline;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod gp;
pub mod hybrid;
pub mod ingest;
pub mod normal;
pub mod oracle;
pub mod percentile;
pub mod preprocess;
pub mod report;

/// Gas price in wei.
pub type Wei = u128;

/// Wei per Gwei.
pub const GWEI: f64 = 1e9;

pub use baseline::{PercentileOracle, PercentileOracleConfig};
pub use error::{Error, Result};
pub use evaluation::{backtest, BacktestReport, BacktestSpec, PredictionRecord};
pub use gp::{FitConfig, GpHyperparams, GpModel, PredictiveDistribution, TrainingSeries};
pub use hybrid::{HybridConfig, HybridOracle, HybridState};
pub use ingest::{Dataset, RawBlock};
pub use oracle::Oracle;
pub use preprocess::ProcessedBlock;
