//! Observer ingredients: the stable filter `(A, B)`, the transformation `T`
//! solving `T ∘ f = A T + B h`, and diagnostics for both.
//!
//! Three constructions of `T` are available:
//!
//! - [`SeriesTransform`]: the truncated backward series, usable for any
//!   invertible plant whose backward orbits stay bounded.
//! - [`PolyTransform`]: the exact polynomial solution for linear dynamics with
//!   polynomial output, from a Sylvester equation on the monomial lift.
//! - [`ExampleTransform`]: closed-form quadratic coefficients for the
//!   discretized oscillator, in continuous-time and Euler variants.

mod diagnostics;
mod example;
mod filter;
mod poly;
mod series;

pub use diagnostics::{
    design_poly_observer, functional_residual, injectivity_probe, InjectivityReport, PolyDesign,
    Rejection, ResampleOptions, INJECTIVITY_WARNING_MARGIN, MIN_PAIR_DISTANCE,
};
pub use example::{euler_filter, example_coeffs, CoeffVariant, ExampleCoeffs, ExampleTransform};
pub use filter::{
    admissible_radius, build_filter, complex_to_real, real_to_complex, sample_eigenvalues,
    FilterDesign, MAX_SAMPLING_ATTEMPTS, MIN_MODULUS_FRACTION, MIN_SEPARATION,
};
pub use poly::{poly_transform, PolyTransform};
pub use series::{series_transform_eval, tail_bound, SeriesTransform, DEFAULT_TRUNCATION, ESCAPE_THRESHOLD};

use crate::error::Result;
use crate::linalg::C64;

/// A map `x ↦ T(x) ∈ ℂᵐ` that can be evaluated pointwise.
pub trait Transform: Send + Sync {
    fn output_len(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<C64>>;
}

/// A transform given by a closure.
pub struct FnTransform<F> {
    len: usize,
    f: F,
}

impl<F> FnTransform<F>
where
    F: Fn(&[f64]) -> Vec<C64> + Send + Sync,
{
    pub fn new(len: usize, f: F) -> Self {
        Self { len, f }
    }
}

impl<F> Transform for FnTransform<F>
where
    F: Fn(&[f64]) -> Vec<C64> + Send + Sync,
{
    fn output_len(&self) -> usize {
        self.len
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<C64>> {
        Ok((self.f)(x))
    }
}

#[derive(Debug, Clone)]
pub enum TransformMap {
    Series(SeriesTransform),
    Poly(PolyTransform),
    Example(ExampleTransform),
}

impl TransformMap {
    pub fn kind(&self) -> &'static str {
        match self {
            TransformMap::Series(_) => "series",
            TransformMap::Poly(_) => "sylvester",
            TransformMap::Example(_) => "example",
        }
    }
}

impl Transform for TransformMap {
    fn output_len(&self) -> usize {
        match self {
            TransformMap::Series(t) => t.output_len(),
            TransformMap::Poly(t) => t.output_len(),
            TransformMap::Example(t) => t.output_len(),
        }
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<C64>> {
        match self {
            TransformMap::Series(t) => t.eval(x),
            TransformMap::Poly(t) => t.eval(x),
            TransformMap::Example(t) => t.eval(x),
        }
    }
}
