//! Agent-based simulation of firms choosing markets under two entry
//! strategies: industrial organization (IO), which chases the most
//! attractive market, and resource-based view (RBV), which enters the
//! market its resources fit best and stays there.

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod output;
pub mod strategy;

pub use config::{BatchConfig, Config, ConfigError, SimConfig};
pub use dynamics::{CycleReport, World};
pub use experiment::{derive_seed, run_batch, run_one, BatchOutput, RunSummary};
pub use model::{Firm, FirmId, Market, MarketId, ResourceBundle, SfmState, StrategyTag};
