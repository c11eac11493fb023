use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};

use crate::design::{FilterDesign, Transform};
use crate::error::{Error, Result};
use crate::linalg::{mat_mul, solve_sylvester, Matrix, C64};
use crate::system::{DiscreteSystem, LinearPolySystem, MonomialBasis};

/// `T(x) = M P_d(x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolyTransform {
    #[serde(rename = "M")]
    coefficients: Matrix,
    basis: MonomialBasis,
}

impl PolyTransform {
    pub fn from_parts(coefficients: Matrix, basis: MonomialBasis) -> Result<Self> {
        if coefficients.cols() != basis.len() {
            return Err(Error::DimensionMismatch {
                op: "PolyTransform",
                expected: (coefficients.rows(), basis.len()),
                got: coefficients.shape(),
            });
        }
        Ok(Self { coefficients, basis })
    }

    pub fn coefficients(&self) -> &Matrix {
        &self.coefficients
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    /// Frobenius residual `‖M D − A M − B H‖` of the Sylvester equation.
    pub fn sylvester_residual(&self, sys: &LinearPolySystem, filter: &FilterDesign) -> Result<f64> {
        let md = mat_mul(&self.coefficients, &sys.lift())?;
        let am = mat_mul(filter.a_complex(), &self.coefficients)?;
        let bh = mat_mul(filter.b_complex(), sys.output_matrix())?;
        Ok(md.sub(&am)?.sub(&bh)?.norm_fro())
    }
}

#[derive(Deserialize)]
struct PolyRepr {
    #[serde(rename = "M")]
    coefficients: Matrix,
    basis: MonomialBasis,
}

impl<'de> Deserialize<'de> for PolyTransform {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = PolyRepr::deserialize(deserializer)?;
        PolyTransform::from_parts(repr.coefficients, repr.basis).map_err(D::Error::custom)
    }
}

/// Solves `M D = A M + B H` with `D` the monomial lift of `F`.
///
/// `SingularMatrix` means `A` shares an eigenvalue with `D`; the caller
/// should resample the filter.
pub fn poly_transform(sys: &LinearPolySystem, filter: &FilterDesign) -> Result<PolyTransform> {
    if filter.output_dim() != sys.output_dim() {
        return Err(Error::DimensionMismatch {
            op: "poly_transform",
            expected: (sys.output_dim(), 1),
            got: (filter.output_dim(), 1),
        });
    }
    let d = sys.lift();
    let rhs = mat_mul(filter.b_complex(), sys.output_matrix())?;
    let m = solve_sylvester(&d, filter.a_complex(), &rhs)?;
    PolyTransform::from_parts(m, sys.basis().clone())
}

impl Transform for PolyTransform {
    fn output_len(&self) -> usize {
        self.coefficients.rows()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<C64>> {
        if x.len() != self.basis.state_dim() {
            return Err(Error::DimensionMismatch {
                op: "PolyTransform::eval",
                expected: (self.basis.state_dim(), 1),
                got: (x.len(), 1),
            });
        }
        self.coefficients.mul_real_vec(&self.basis.eval(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{build_filter, sample_eigenvalues};
    use crate::linalg::c64;
    use crate::system::make_oscillator_system;

    #[test]
    fn zero_output_gives_zero_coefficients() {
        let sys = make_oscillator_system(0.01)
            .unwrap()
            .with_output(Matrix::zeros(1, 6))
            .unwrap();
        let filter = build_filter(&[c64(0.5, 0.1), c64(-0.3, 0.0), c64(0.2, -0.6)], 1).unwrap();
        let t = poly_transform(&sys, &filter).unwrap();
        assert_eq!(t.coefficients().max_abs(), 0.0);
    }

    #[test]
    fn sylvester_residual_is_small() {
        let sys = make_oscillator_system(0.01).unwrap();
        let filter = build_filter(&sample_eigenvalues(3, 0.9, 1).unwrap(), 1).unwrap();
        let t = poly_transform(&sys, &filter).unwrap();
        let bh = mat_mul(filter.b_complex(), sys.output_matrix()).unwrap();
        assert!(t.sylvester_residual(&sys, &filter).unwrap() <= 1e-10 * bh.norm_fro().max(1.0));
    }

    #[test]
    fn serde_round_trip() {
        let sys = make_oscillator_system(0.01).unwrap();
        let filter = build_filter(&sample_eigenvalues(3, 0.9, 2).unwrap(), 1).unwrap();
        let t = poly_transform(&sys, &filter).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        let back: PolyTransform = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }
}
