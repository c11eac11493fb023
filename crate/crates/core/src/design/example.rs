//! Closed-form quadratic transformations for the Euler-discretized oscillator.
//!
//! For a scalar filter with eigenvalue parameter `λ < 0`, the map
//! `T(x) = a x₁² + b x₂² + c x₁x₂ + d x₁ + e x₂` is known in closed form,
//! both for the continuous-time equation `dT/dt = λT + y` and for its explicit
//! Euler counterpart `T(x⁺) = (1 + λ dt) T(x) + dt y`.

use serde::{Deserialize, Serialize};

use crate::design::{FilterDesign, PolyTransform, Transform};
use crate::error::{Error, Result};
use crate::linalg::{c64, Matrix, C64};
use crate::system::monomial_basis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoeffVariant {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExampleCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub variant: CoeffVariant,
    pub lambda: f64,
    /// Zero for the continuous variant.
    pub dt: f64,
}

pub fn example_coeffs(variant: CoeffVariant, lambda: f64, dt: f64) -> Result<ExampleCoeffs> {
    if !(lambda < 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be negative, got {lambda}")));
    }
    // The linear part solves the same equations in both variants.
    let l2 = 1.0 + lambda * lambda;
    let d = (1.0 - lambda) / l2;
    let e = -(1.0 + lambda) / l2;

    let (shift, dt) = match variant {
        CoeffVariant::Continuous => (0.0, 0.0),
        CoeffVariant::Discrete => {
            if !(dt >= 0.0 && dt.is_finite()) {
                return Err(Error::InvalidArgument(format!("dt must be nonnegative, got {dt}")));
            }
            let factor = (1.0 + lambda * dt).abs();
            if factor >= 1.0 {
                return Err(Error::StabilityViolation { factor });
            }
            (dt, dt)
        }
    };
    let mu = lambda + shift;
    let q = 4.0 + mu * mu;
    let coeffs = ExampleCoeffs {
        a: -mu / q,
        b: mu / q,
        c: -4.0 / q,
        d,
        e,
        variant,
        lambda,
        dt,
    };
    debug_assert!(coeffs.defining_residual() <= 1e-12, "{coeffs:?}");
    Ok(coeffs)
}

impl ExampleCoeffs {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let (x1, x2) = (x[0], x[1]);
        self.a * x1 * x1 + self.b * x2 * x2 + self.c * x1 * x2 + self.d * x1 + self.e * x2
    }

    /// Row `(a, c, d, e)` acting on `(x₁² − x₂², x₁x₂, x₁, x₂)`; valid since `b = −a`.
    pub fn stack_row(&self) -> [f64; 4] {
        [self.a, self.c, self.d, self.e]
    }

    /// Largest violation of the linear equations the coefficients solve.
    pub fn defining_residual(&self) -> f64 {
        let ExampleCoeffs {
            a,
            b,
            c,
            d,
            e,
            lambda: l,
            dt,
            ..
        } = *self;
        let quadratic = match self.variant {
            CoeffVariant::Continuous => [
                (-c - (l * a + 1.0)).abs(),
                (c - (l * b - 1.0)).abs(),
                (2.0 * (a - b) - l * c).abs(),
            ],
            CoeffVariant::Discrete => [
                (-c + b * dt - (l * a + 1.0)).abs(),
                (c + a * dt - (l * b - 1.0)).abs(),
                (2.0 * (a - b) - c * dt - l * c).abs(),
            ],
        };
        let linear = [(-e - (l * d + 1.0)).abs(), (d - (l * e + 1.0)).abs()];
        quadratic.into_iter().chain(linear).fold(0.0, f64::max)
    }

    /// Same map over the oscillator basis `1, x₁, x₂, x₁², x₁x₂, x₂²`.
    pub fn basis_row(&self) -> [f64; 6] {
        [0.0, self.d, self.e, self.a, self.c, self.b]
    }
}

/// Filter realizing `ξⁱ⁺ = (1 + λᵢ dt) ξⁱ + dt y` for each `λᵢ`.
pub fn euler_filter(lambdas: &[f64], dt: f64) -> Result<FilterDesign> {
    let eigs: Vec<C64> = lambdas.iter().map(|&l| c64(1.0 + l * dt, 0.0)).collect();
    FilterDesign::new(&eigs, 1, dt)
}

/// Stacked closed-form transforms, one scalar component per `λᵢ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleTransform {
    coeffs: Vec<ExampleCoeffs>,
}

impl ExampleTransform {
    pub fn new(variant: CoeffVariant, lambdas: &[f64], dt: f64) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::InvalidArgument("need at least one lambda".into()));
        }
        let coeffs = lambdas
            .iter()
            .map(|&l| example_coeffs(variant, l, dt))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { coeffs })
    }

    pub fn from_coeffs(coeffs: Vec<ExampleCoeffs>) -> Self {
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[ExampleCoeffs] {
        &self.coeffs
    }

    pub fn to_poly(&self) -> PolyTransform {
        let rows: Vec<[f64; 6]> = self.coeffs.iter().map(ExampleCoeffs::basis_row).collect();
        PolyTransform::from_parts(Matrix::from_real_rows(&rows), monomial_basis(2, 2).expect("n = d = 2"))
            .expect("six basis columns")
    }
}

impl Transform for ExampleTransform {
    fn output_len(&self) -> usize {
        self.coeffs.len()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<C64>> {
        if x.len() != 2 {
            return Err(Error::DimensionMismatch {
                op: "ExampleTransform::eval",
                expected: (2, 1),
                got: (x.len(), 1),
            });
        }
        Ok(self.coeffs.iter().map(|c| c64(c.eval(x), 0.0)).collect())
    }
}
