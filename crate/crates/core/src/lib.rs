//! High-breakdown robust statistics and outlier diagnostics.
//!
//! Classical estimators (mean, covariance, least squares, PCA) can be ruined
//! by a handful of wild observations, which then no longer look suspicious
//! against the distorted fit. The estimators in this crate instead fit the
//! majority of the data and flag what deviates from it:
//!
//! - [`univariate`]: median, MAD, Qn, normalized IQR, M-location, robust
//!   scores and boxplot fences.
//! - [`covariance`]: FastMCD and exhaustive MCD, MRCD for wide matrices,
//!   Stahel-Donoho outlyingness, robust distances, DD-plot and tolerance
//!   ellipses.
//! - [`regression`]: least trimmed squares with the FAST-LTS search, robust
//!   residual scale, reweighted least squares, and the four-class regression
//!   outlier map.
//! - [`pca`]: outlyingness-trimmed and spherical PCA with the orthogonal
//!   distance / score distance outlier map.
//! - [`models`]: robust linear/quadratic discriminant scores and trimmed
//!   k-means clustering.
//! - [`cellwise`]: per-cell flagging with cellmap/rowmap block rendering.
//!
//! The `examples/` directory has one runnable walk-through per capability;
//! the `robust-anomaly` binary exposes the same analyses over CSV files.

pub mod covariance;
pub mod models;
pub mod pca;
pub mod regression;
pub mod dist;
pub mod error;
pub mod matrix;
pub mod stream;
pub mod univariate;

pub use error::{Error, Result};
pub use matrix::DataMatrix;
