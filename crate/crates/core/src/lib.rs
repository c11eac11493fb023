//! Luenberger-type (KKL) observers for discrete-time nonlinear systems.
//!
//! For a plant `x⁺ = f(x)`, `y = h(x)` with invertible `f`, an observer is
//! built from a stable linear filter `ξ⁺ = A ξ + B y` and a map `T` solving
//! `T(f(x)) = A T(x) + B h(x)`. Along any trajectory `ξ_k − T(x_k) = Aᵏ(ξ₀ − T(x₀))`
//! decays geometrically, and inverting `T` turns `ξ_k` into a state estimate.
//!
//! - [`linalg`]: dense complex matrices, LU, Kronecker products, Sylvester solves.
//! - [`system`]: plants, monomial bases and lifts, the discretized oscillator.
//! - [`design`]: eigenvalue sampling, filters, series/polynomial/closed-form `T`.
//! - [`observer`]: filter stepping, inversion, coupled simulation.
//! - [`analysis`]: convergence rates, error bands, series/polynomial agreement.

pub mod analysis;
pub mod design;
pub mod error;
pub mod linalg;
pub mod observer;
pub mod system;

pub use error::{Error, Result};
