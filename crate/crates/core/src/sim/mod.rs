//! Seeded experiment harness: configuration, synthetic datasets, the four
//! evaluation experiments and the two-buyer protocol demo.

pub mod config;
pub mod corrupt;
pub mod datasets;
pub mod demo;
pub mod experiments;
pub mod stats;

use thiserror::Error;

use crate::pricing::PricingError;
use crate::protocol::ProtocolError;
use crate::quality::QualityError;
use crate::relation::RelationError;

pub use config::{DatasetConfig, Fees, LoadedDataset, MarketConfig, MarketSection};
pub use demo::{run_protocol_demo, DemoCheck, DemoOutcome, DEMO_SEED};
pub use experiments::{
    run_cheat, run_distribution, run_mistakes, run_timing, CheatSummary, DatasetTiming, DistributionSummary,
    EnvironmentStamp, ExperimentReport, FlowCheck, MistakeCurve,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("i/o: {0}")]
    Io(String),
    #[error("config: {0}")]
    Config(String),
    #[error("assertion failed: {0}")]
    Assertion(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Relation(#[from] RelationError),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error(transparent)]
    Pricing(#[from] PricingError),
}
