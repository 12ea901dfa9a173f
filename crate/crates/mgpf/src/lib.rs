//! Multi-network Gaussian process filter (MGPF) for air quality sensor fusion.
//!
//! Low-cost sensor networks report biased, noisy versions of the true pollutant
//! concentration. Given a per-network observation model (an affine, covariate
//! dependent map from truth to reading, with heteroscedastic noise) and sparse
//! reference measurements, the filter infers the latent concentration surface
//! at every sensor and at arbitrary prediction locations, one timepoint at a
//! time:
//!
//! * [`obs`] — training, evaluation and inversion of per-network observation
//!   models (least squares, GLS, heteroscedastic variance models, published
//!   presets for the SEARCH and PurpleAir networks).
//! * [`gp`] — exponential-covariance Gaussian process machinery: covariance
//!   construction, numerically safe factorization, conditional (kriging)
//!   distributions.
//! * [`filter`] — the filter itself: affine observation stacking, the Kalman
//!   update, the marginalized likelihood of the observed data, and adaptive
//!   MCMC over the GP hyperparameters.
//! * [`sim`] — synthetic data generators: a stochastic advection–diffusion
//!   plume model, GP-plus-point-source fields with preferential sampling, and
//!   the observation-model training-range experiment.
//! * [`metrics`] — evaluation: IDW baseline interpolation, RMSE/MAE/bias,
//!   CRPS, interval coverage/width/score, credible-interval comparisons and
//!   pseudo-RMSE against a reference proxy.
//!
//! All randomized routines take explicit seeds and are bit-reproducible.

pub mod error;
pub mod filter;
pub mod geom;
pub mod gp;
pub mod metrics;
pub mod obs;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use geom::Location;
