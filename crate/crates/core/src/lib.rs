//! Six-compartment SVEAIR epidemic model with vaccination and waning immunity.
//!
//! The crate provides the model algebra (parameters, derived rates, control
//! reproduction number, equilibria), an adaptive ODE integrator with a
//! cumulative-incidence observer, nonlinear least-squares calibration against
//! cumulative case data, and a reaction-diffusion extension on rasterized
//! country geometries with no-flux boundaries.

pub mod calibrate;
pub mod equilibria;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod params;
pub mod pde;
pub mod presets;

pub use error::{EpiError, Result};
pub use params::{BetaSchedule, CompartmentState, DerivedRates, Parameters};
