//! First-passage-time, elastic first-exit-time and refractoriness-period
//! moments for one-dimensional time-homogeneous diffusions, plus the output
//! count distribution of a Poisson-driven counter with dead time.
//!
//! The moment engine ([`moments`]) runs the classical scale/speed recursions on
//! a graded Gauss–Legendre grid ([`quadrature`]). Closed-form and series means
//! ([`models`]) and Monte Carlo samplers ([`montecarlo`]) serve as independent
//! oracles.

pub mod config;
pub mod deadtime;
pub mod diffusion;
pub mod error;
pub mod models;
pub mod moments;
pub mod montecarlo;
pub mod quadrature;
pub mod report;
pub mod scaled;
pub mod tables;

pub use diffusion::{BoundaryClass, DiffusionSpec, ElasticThreshold, Truncation};
pub use error::{Error, Result};
pub use models::{FellerParams, Model, OuParams, WienerParams};
pub use scaled::ScaledReal;
