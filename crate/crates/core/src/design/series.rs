use std::sync::Arc;

use crate::design::{FilterDesign, Transform};
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::system::{estimate_output_sup, DiscreteSystem};

/// Backward iterates with a coordinate beyond this modulus abort evaluation.
pub const ESCAPE_THRESHOLD: f64 = 1e6;

pub const DEFAULT_TRUNCATION: usize = 200;

/// Truncated backward series `T_N(x) = Σ_{i=0}^{N} Aⁱ B h(f^{-(i+1)}(x))`.
#[derive(Clone)]
pub struct SeriesTransform {
    system: Arc<dyn DiscreteSystem>,
    filter: FilterDesign,
    truncation: usize,
    output_sup: f64,
    input_norm: f64,
    diagonal: Vec<C64>,
}

impl std::fmt::Debug for SeriesTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SeriesTransform")
            .field("filter", &self.filter)
            .field("truncation", &self.truncation)
            .field("output_sup", &self.output_sup)
            .finish_non_exhaustive()
    }
}

impl SeriesTransform {
    /// `sup |h|` over the domain is estimated on a grid of the given pitch.
    pub fn new(
        system: Arc<dyn DiscreteSystem>,
        filter: FilterDesign,
        truncation: usize,
        grid_pitch: f64,
    ) -> Result<Self> {
        let output_sup = estimate_output_sup(system.as_ref(), grid_pitch)?;
        Self::with_output_sup(system, filter, truncation, output_sup)
    }

    pub fn with_output_sup(
        system: Arc<dyn DiscreteSystem>,
        filter: FilterDesign,
        truncation: usize,
        output_sup: f64,
    ) -> Result<Self> {
        if filter.output_dim() != system.output_dim() {
            return Err(Error::DimensionMismatch {
                op: "SeriesTransform",
                expected: (system.output_dim(), 1),
                got: (filter.output_dim(), 1),
            });
        }
        if !(output_sup >= 0.0 && output_sup.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid output bound {output_sup}")));
        }
        let input_norm = filter.b_complex().spectral_norm();
        let diagonal = filter.diagonal();
        Ok(Self {
            system,
            filter,
            truncation,
            output_sup,
            input_norm,
            diagonal,
        })
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn with_truncation(&self, truncation: usize) -> Self {
        Self {
            truncation,
            ..self.clone()
        }
    }

    pub fn filter(&self) -> &FilterDesign {
        &self.filter
    }

    pub fn system(&self) -> &Arc<dyn DiscreteSystem> {
        &self.system
    }

    pub fn output_sup(&self) -> f64 {
        self.output_sup
    }

    /// Geometric tail bound `ρ^{N+1} ‖B‖ sup|h| / (1 − ρ)` for truncation `N`.
    pub fn tail_bound(&self, n: usize) -> f64 {
        let rho = self.filter.spectral_radius();
        if rho == 0.0 {
            return 0.0;
        }
        let exponent = i32::try_from(n).unwrap_or(i32::MAX - 1).saturating_add(1);
        rho.powi(exponent) * self.input_norm * self.output_sup / (1.0 - rho)
    }

    /// Tail bound at this transform's own truncation.
    pub fn own_tail_bound(&self) -> f64 {
        self.tail_bound(self.truncation)
    }
}

pub fn tail_bound(t: &SeriesTransform, n: usize) -> f64 {
    t.tail_bound(n)
}

/// Evaluates `T_N(x)`, keeping a running power of the diagonal `A`.
pub fn series_transform_eval(t: &SeriesTransform, x: &[f64]) -> Result<Vec<C64>> {
    let m = t.filter.dim();
    let b = t.filter.b_complex();
    let mut acc = vec![C64::default(); m];
    let mut power = vec![C64::new(1.0, 0.0); m];
    let mut z = x.to_vec();
    for step in 0..=t.truncation {
        z = t.system.backward(&z);
        let magnitude = z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if magnitude.is_nan() || magnitude > ESCAPE_THRESHOLD {
            return Err(Error::DomainEscape { step, magnitude });
        }
        let by = b.mul_real_vec(&t.system.output(&z))?;
        for k in 0..m {
            acc[k] += power[k] * by[k];
            power[k] *= t.diagonal[k];
        }
    }
    Ok(acc)
}

impl Transform for SeriesTransform {
    fn output_len(&self) -> usize {
        self.filter.dim()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<C64>> {
        series_transform_eval(self, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::build_filter;
    use crate::linalg::c64;
    use crate::system::{make_oscillator_system, BoxDomain, FnSystem};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn oscillator_series(n: usize) -> SeriesTransform {
        let sys = Arc::new(make_oscillator_system(0.01).unwrap());
        let filter = build_filter(&[c64(0.9, 0.0), c64(0.8, 0.0), c64(0.7, 0.0)], 1).unwrap();
        SeriesTransform::new(sys, filter, n, 0.05).unwrap()
    }

    #[test]
    fn zero_gain_gives_zero() {
        let t = oscillator_series(10);
        let zero = SeriesTransform::with_output_sup(
            t.system().clone(),
            t.filter().with_input_gain(0.0).unwrap(),
            10,
            1.0,
        )
        .unwrap();
        assert!(series_transform_eval(&zero, &[0.3, -0.7]).unwrap().iter().all(|z| z.norm() == 0.0));
        assert_eq!(zero.tail_bound(10), 0.0);
    }

    #[test]
    fn single_term() {
        let t = oscillator_series(0);
        let x = [0.4, -0.2];
        let y = t.system().output(&t.system().backward(&x))[0];
        let v = series_transform_eval(&t, &x).unwrap();
        assert!(v.iter().all(|z| (*z - c64(y, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn tail_bound_formula_and_monotonicity() {
        let t = SeriesTransform::with_output_sup(
            oscillator_series(0).system().clone(),
            build_filter(&[c64(0.9, 0.0), c64(0.8, 0.0), c64(0.7, 0.0)], 1).unwrap(),
            200,
            8.0,
        )
        .unwrap();
        let expected = 0.9f64.powi(201) * 3f64.sqrt() * 8.0 / 0.1;
        assert!((t.tail_bound(200) / expected - 1.0).abs() < 1e-12);
        assert!(expected > 8.7e-8 && expected < 8.9e-8);
        assert!(t.tail_bound(201) < t.tail_bound(200));
    }

    #[test]
    fn truncations_agree_within_tail_bound() {
        let t = oscillator_series(200);
        let t2 = t.with_truncation(400);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let x = t.system().initial_box().sample(&mut rng);
            let a = t.eval(&x).unwrap();
            let b = t2.eval(&x).unwrap();
            let diff = a.iter().zip(&b).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>().sqrt();
            assert!(diff <= t.tail_bound(200), "{diff} > {}", t.tail_bound(200));
        }
    }

    #[test]
    fn escape_is_reported() {
        let expanding = FnSystem::new(
            1,
            1,
            |x| vec![0.5 * x[0]],
            |x| vec![2.0 * x[0]],
            |x| vec![x[0]],
            BoxDomain::symmetric(1, 1.0),
            BoxDomain::symmetric(1, 1.0),
        )
        .unwrap();
        let filter = build_filter(&[c64(0.1, 0.0)], 1).unwrap();
        let t = SeriesTransform::with_output_sup(Arc::new(expanding), filter, 100, 1.0).unwrap();
        assert!(matches!(t.eval(&[1.0]), Err(Error::DomainEscape { step: 19, .. })));
    }
}
