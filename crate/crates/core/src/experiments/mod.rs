//! Simulated estimation experiments: initial guesses, Monte Carlo
//! calibration of Hessian-based standard deviations, state-path bands.

pub mod duffing;
pub mod filter;
pub mod montecarlo;
pub mod oem;

pub use duffing::{DuffingData, DuffingExperiment};
pub use montecarlo::{run_monte_carlo, MonteCarloConfig, MonteCarloReport, RealizationRecord, TargetSummary};
pub use oem::{
    band_coverage, initial_guess_oem, state_band, state_path_indices, write_band_csv, BandRow, Fit, OemExperiment,
    OemGuess, OdeSystem,
};
