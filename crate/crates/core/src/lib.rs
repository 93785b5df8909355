//! Tessellated spatial Poisson point-process regression.
//!
//! The crate covers the whole workflow: simulating region-wise Poisson
//! patterns, fitting global models through Berman-Turner quadrature,
//! geographically weighted (local) fits, SLIC + Ward segmentation of the
//! local coefficient maps into tessellations, tessellated model fits, and
//! MISE/AIC/LRT evaluation, plus a Monte Carlo experiment harness.

pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod geometry;
pub mod glm;
pub mod io;
pub mod local;
pub mod pipeline;
pub mod rng;
pub mod segmentation;
pub mod simulation;
pub mod tessellated;

pub use error::{Error, Result};
pub use geometry::{Grid, PointPattern, SpatialRaster, Tessellation, Window};
