//! Two-dimensional SPECT simulation and joint reconstruction of the
//! attenuation map `a` and the source map `f` from ballistic and
//! single-scatter measurements.

pub mod cli;
pub mod error;
pub mod grid;
pub mod linearized;
pub mod noise;
pub mod phantoms;
mod rays;
pub mod recon;
pub mod transforms;
pub mod transport;

pub use error::{Result, SpectError};
pub use grid::{AngleSet, CumsumMode, GridSpec, ScalarField, Sinogram};
pub use linearized::{LinearizationPoint, PerturbationPair};
pub use noise::NoiseParams;
pub use recon::{reconstruct, ReconConfig, ReconState};
pub use transport::{CoeffPair, MeasurementPair};
