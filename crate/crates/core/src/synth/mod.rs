//! Seeded synthetic C2C marketplace: catalog, users, hidden click oracle and
//! a behavior log over limited stock.

pub mod catalog;
pub mod log;

pub use catalog::{
    generate_catalog, ground_truth_ctr, Attributes, CatalogConfig, CtrOracle, GroundTruth,
    StockDistribution, SynthItem, SynthUser, World,
};
pub use log::{simulate_log, ExposurePolicy, LogConfig};
