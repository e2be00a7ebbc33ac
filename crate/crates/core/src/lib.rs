//! Dynamic price-clustering model for high-frequency trade prices: a
//! tick-multiple mixture of double Poisson distributions with
//! score-driven time-varying volatility and trader portions, conditional
//! maximum-likelihood estimation, TAQ-style trade cleaning, and the
//! daily panel-regression pipeline.

pub mod cluster_mixture;
pub mod daily_analysis;
pub mod double_poisson;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod ingestion;
pub mod optim;

pub use error::{Error, Result};
