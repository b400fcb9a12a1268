//! National fuel-cycle CO₂ accounting.
//!
//! The pipeline runs energy flow statistics through an apparent-consumption
//! mass balance, converts fuel quantities to energy with (optionally
//! year-dependent) heating values, applies carbon content and oxidation
//! factors, and adds cement process emissions. On top of that sit a
//! seedable Monte Carlo uncertainty propagation and a partial-year nowcast
//! that projects full-year growth from the first months of data.
//!
//! Data-parallel loops use rayon when the `parallel` feature is enabled
//! (the default) and fall back to sequential iteration otherwise; results
//! are identical either way.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod balance;
pub mod domain;
pub mod emission;
pub mod error;
pub mod exec;
pub mod ingest;
pub mod nowcast;
pub mod output;
pub mod uncertainty;

pub use error::{Error, Result};
