//! Backtesting engine for bookmaker mispricing in women's tennis betting
//! markets, with Wikipedia attention as a predictor.
//!
//! The pipeline runs ingest, cleaning, feature construction, regression with
//! cluster-robust inference, Kelly-staked backtests and a random-strategy
//! significance test, and renders the resulting tables and figures.
//!
//! ```no_run
//! use buzzcheck::{backtest, features::Model, ingest};
//!
//! let ds = ingest::read_canonical("original.csv".as_ref())?;
//! let rows = ingest::to_player_rows(&ds, ingest::OddsSource::MarketAverage).rows;
//! let (train, test) = ingest::split_samples(&rows, &ingest::SplitConfig::original())?;
//! let config = backtest::StrategyConfig::new(Model::Pm, ingest::OddsSource::Bet365);
//! let fe = buzzcheck::features::parse_fixed_effects("season,tournament")?;
//! let run = backtest::run_strategy(&train, &test, &config, &fe, None)?;
//! println!("ROI {:?}", run.summary.roi_pct);
//! # Ok::<(), buzzcheck::Error>(())
//! ```

pub mod backtest;
pub mod clean;
pub mod error;
pub mod estimate;
pub mod features;
pub mod ingest;
pub mod pageviews;
pub mod report;
pub mod significance;
pub mod synth;

pub use backtest::{BetLedger, BetRecord, PRange, StrategyConfig, StrategySummary};
pub use clean::{CleaningReport, PipelineOptions, Sigma};
pub use error::{Error, Result};
pub use estimate::{ClusterBy, RegressionFit};
pub use features::{FixedEffect, Model};
pub use ingest::{Dataset, MatchRecord, OddsSource, PlayerMatchRow, Schema, SplitConfig};
pub use report::{Format, Layout, ReplicationRun};
pub use significance::{SignificanceConfig, SignificanceResult};
