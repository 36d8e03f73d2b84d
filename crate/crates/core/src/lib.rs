//! Hierarchical software quality models: definition language, rule checks,
//! metric thresholds, weighted aggregation, model diversity and a three-phase
//! measurement process.

pub mod aggregation;
pub mod diversity;
pub mod metrics;
pub mod model;
pub mod process;
pub mod qmdl;
pub mod rules;
