//! Bayesian shrinkage estimation in the normal-normal hierarchical model
//! (NNHM) with a uniform effect prior.
//!
//! The crate computes posterior-expected study weights, shrinkage estimates
//! with credible intervals, and the a-priori weight bounds (fixed-effect
//! weight, coincidence weight, prior-scale sweeps) that quantify how much an
//! analysis can borrow from external evidence:
//!
//! * [`model`] — closed-form kernels conditional on the heterogeneity τ;
//! * [`quad`] — adaptive quadrature, normal CDF/quantile, root finding;
//! * [`posterior`] — marginalization over τ: expected weights, means,
//!   credible intervals;
//! * [`bounds`] — FE weights, coincidence weights, discrepancy and
//!   prior-scale sweeps, stochastic-ordering verification;
//! * [`oracle`] — brute-force grid and Monte-Carlo reference estimates used
//!   to cross-check the quadrature pipeline.

pub mod bounds;
pub mod model;
pub mod oracle;
pub mod posterior;
pub mod quad;

pub use model::{Dataset, HeterogeneityPrior, ModelError, ShrinkageWeights, Study};
pub use posterior::{IntervalKind, ShrinkageResult, TauPosterior};
pub use quad::QuadratureSettings;
