//! Fuel-price shocks to transport emissions, air quality and acute mortality.
//!
//! The pipeline runs from a province-year fuel panel through an AIDS demand
//! system to price elasticities of fuel demand, emission elasticities by
//! pollutant, and finally concentration changes, deaths and monetized losses
//! for a set of price-shock scenarios.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aids;
pub mod data;
pub mod document;
pub mod elasticity;
pub mod emissions;
pub mod error;
pub mod impact;
pub mod params;
pub mod scenario;
pub mod synth;

pub use error::{Error, Result};
