//! Wave-energy scattering off a Poissonian thermostat coupled to one site of
//! an infinite harmonic chain.
//!
//! The crate has three legs that are built to agree with each other:
//!
//! * [`scattering`] computes the interface coefficients (transmission,
//!   reflection, frequency scattering, absorption, production) from the
//!   dispersion relation by boundary-value quadrature, plus the identity
//!   suite tying them together;
//! * [`chain`] runs the exact event-driven microscopic dynamics of the wave
//!   function on a finite periodic chain, with [`wigner`] estimating
//!   macroscopic energy densities and interface fractions from ensembles;
//! * [`transport`] evaluates the closed-form macroscopic energy density and
//!   verifies the transport equation and its interface conditions.

pub mod chain;
pub mod dispersion;
pub mod quad;
pub mod scattering;
pub mod transport;
pub mod wigner;

pub use dispersion::{BandKind, Branch, DispersionRelation};
pub use scattering::{ScatteringCoefficients, ScatteringProblem, ThermostatParams};
