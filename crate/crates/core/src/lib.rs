//! Model inversion attribute inference against black-box tabular classifiers:
//! data preparation, target models, prediction oracles, attacks and metrics.

pub mod attacks;
pub mod dataset;
pub mod experiment;
pub mod metrics;
pub mod models;
pub mod oracle;
