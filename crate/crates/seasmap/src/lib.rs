//! Location-specific intra-annual case-proportion curves from point-referenced
//! surveillance counts, with derived seasonality features and their
//! posterior-sample uncertainty.
//!
//! The pipeline is: [`ingest`] reduces facility counts to monthly proportion
//! curves and builds lagged standardized covariate designs; [`stmodel`] fits
//! a log-linear spatiotemporal Gaussian model (AR(1)-in-month field with a
//! Matern spatial covariance) with exact conjugate latent inference and
//! marginal-likelihood hyperparameter optimization; [`selection`] screens
//! covariates by VIF and runs backwards DIC selection; [`seasonal`] turns
//! proportion curves into entropy, a seasonality index, monthly incidence,
//! and transmission-season statistics via rescaled von Mises fits; [`synth`]
//! generates ground-truth datasets; [`render`] draws static SVG maps and
//! curve plots; [`pipeline`] ties it together behind the `seasmap` CLI.

pub mod curve;
pub mod error;
pub mod ingest;
pub mod numerics;
pub mod pipeline;
pub mod render;
pub mod seasonal;
pub mod selection;
pub mod stmodel;
pub mod synth;

pub use curve::ProportionCurve;
pub use error::{Error, Result};
