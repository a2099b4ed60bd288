//! Restricted Boltzmann machines trained and queried on data with missing
//! entries.
//!
//! * [`model`]: the RBM, its conditionals and a binary container format.
//! * [`train`]: Lossy-CDk / PCD training that only conditions on observed cells.
//! * [`meanfield`]: deterministic imputation of missing cells and label decoding.
//! * [`data`]: datasets, seeded MCAR masking and inductive splits.
//! * [`metrics`]: RMSE, micro/averaged AUC, Hamming and multi-class accuracy.
//! * [`oracle`]: exact enumeration for tiny binary models, used as a test reference.
//! * [`experiment`]: the transductive / inductive experiment grid behind the CLI.

pub mod data;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod meanfield;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
pub use exec::Exec;
pub use model::{Gradient, RbmModel, VisibleLayout, VisibleUnit};
