//! Simulation and analysis of the Arratia flow.
//!
//! The crate couples a coalescing-Brownian-motion simulator with the
//! closed-form kernels of the flow's point measure `N_t` (one- and two-point
//! densities, limiting covariances, mixing bounds), a calculus of integrals
//! against factorial powers of point measures, and a finite-basis sampler
//! for the limiting Gaussian field. The [`experiments`] module ties these
//! together into replica ensembles that check the limit theorems against
//! the analytic predictions.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod gaussian;
pub mod kernels;
pub mod measure;
pub mod periodic;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use flow::{CoalescenceMode, ParticleSystem, ReplicaStream, SimConfig, WebMap};
pub use gaussian::{BasisFamily, BasisSpec, CovarianceModel, GaussianFieldSample, HSForm};
pub use kernels::KernelContext;
pub use measure::{MonotoneAtomMap, PointMeasure};
pub use periodic::PeriodicFunction;
