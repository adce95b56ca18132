//! Federated Kolmogorov-Arnold Network (KAN) and MLP regressors for
//! next-hour traffic-composition forecasting over simulated satellite beams.
//!
//! The crate is organised bottom-up:
//!
//! * [`numeric`] - dense f64 numerics written from scratch: B-spline bases,
//!   KAN and affine layers with hand-derived backward passes, dropout, MSE,
//!   gradient clipping, Adam and a central-difference gradient oracle.
//! * [`model`] - the Fed-KAN and Fed-MLP stacks, parameter counting and the
//!   flat [`model::ParameterVector`] that travels between clients and server.
//! * [`data`] - per-beam hourly traffic series (CSV or synthetic), sliding
//!   windows, the chronological train/test split and min-max scaling.
//! * [`federation`] - synchronous FedAvg rounds, evaluation and reports.

pub mod data;
pub mod error;
pub mod federation;
pub mod model;
pub mod numeric;
mod seed;

pub use error::{Error, Result};
