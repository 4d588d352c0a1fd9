//! Steady states of the relativistic Vlasov-Maxwell system in an infinite cylinder.
//!
//! The unknown is the potential triple `(φ, A_φ, A₃)` on a radial grid over `[0, R₀]`. Particle
//! densities are prescribed as functions of the three invariants of motion, the induced sources
//! are integrated back into potentials by the operator 𝓜, and a fixed point of 𝓜 is a steady
//! state. Around that core sit a priori envelopes, confinement checks for θ- and z-pinches, field
//! reconstruction with vacuum tails, and a characteristic-tracing stationarity audit.

pub mod bounds;
pub mod config;
pub mod confinement;
pub mod densities;
pub mod error;
pub mod fields;
pub mod model;
pub mod ode;
pub mod profile;
pub mod quad;
pub mod run;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
