//! Propensity-score weighting estimators under correlated covariate
//! measurement error.
//!
//! The crate covers the full loop of a calibrated simulation study:
//!
//! - [`sampling`]: seeded Gaussian and multivariate-normal draws.
//! - [`glm`]: IRLS logistic regression and weighted least squares with a
//!   sandwich variance.
//! - [`estimators`]: IPT weights, Hájek / regression IPTW, AIPW and
//!   regression doubly robust estimators, weighted SMD.
//! - [`calibration`]: the total-confounding functional and the solvers that
//!   pick coefficients holding it fixed across correlation settings.
//! - [`simgen`]: scenario definitions and data generation.
//! - [`engine`]: the Monte Carlo grid runner (parallel with the default
//!   `parallel` feature, sequential otherwise).
//! - [`analysis`]: the same estimators on user-supplied data with gold
//!   standard and error-prone measurements.
//! - [`output`]: CSV formats shared by the command-line tool.

pub mod analysis;
pub mod calibration;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod glm;
pub mod linalg;
pub mod output;
pub mod sampling;
pub mod simgen;

pub use error::{Error, Result};
