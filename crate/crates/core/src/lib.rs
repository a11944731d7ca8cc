//! Simulation and verification toolkit for graphon particle systems.
//!
//! The crate integrates the N-particle Euler-Maruyama discretization of a
//! graphon-coupled SDE ([`simulator`]), approximates the limiting label-indexed
//! laws by Picard iteration on a label grid ([`meanfield`]), and measures the
//! distance between the two with exact empirical Wasserstein distances
//! ([`transport`]). [`experiments`] wires these into reproducible sweeps that
//! write CSV artifacts.
//!
//! With the default `parallel` feature, per-particle and per-sample loops run
//! on rayon. Results are bitwise identical with and without the feature.

pub mod error;
pub mod experiments;
pub mod graphon;
pub mod meanfield;
pub mod model;
mod par;
pub mod rng;
pub mod simulator;
pub mod transport;

pub use error::{Error, Result};
pub use graphon::{Graphon, Kernel, StepGraphon};
pub use meanfield::{GridMeanField, MeanFieldConfig};
pub use model::CoefficientModel;
pub use simulator::{ParticleEnsemble, SimConfig, TimeGrid};
pub use transport::{EmpiricalMeasure, EmpiricalPathMeasure};
