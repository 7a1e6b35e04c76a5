//! Numerical laboratory for trajectory attractors of dissipative PDEs.

pub mod attractor;
pub mod error;
pub mod expr;
pub mod forcing;
pub mod nse2d;
pub mod phase;
pub mod rds;
pub mod spectral;
mod stepper;
pub mod store;
pub mod systems;
