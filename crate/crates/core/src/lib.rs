//! Hour-ahead bidding for an energy storage device in a real-time market.

pub mod adp;
pub mod cli;
pub mod config;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod exact;
pub mod instances;
pub mod lattice;
pub mod market;
pub mod policy;
pub mod price;
pub mod synthetic;
pub mod table;

pub use error::{Error, Result};
