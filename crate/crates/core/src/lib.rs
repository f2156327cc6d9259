pub mod covariance;
pub mod error;
pub mod experiments;
pub mod io;
pub mod kkt;
pub mod linalg;
pub mod mcmc;
pub mod models;
pub mod seed;
pub mod transcribe;

pub use error::{Error, Result};
