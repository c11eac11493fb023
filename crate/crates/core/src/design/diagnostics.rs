use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::{build_filter, poly_transform, sample_eigenvalues, FilterDesign, PolyTransform, Transform};
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::system::{norm, DiscreteSystem, LinearPolySystem};

/// Margins at or below this raise an injectivity warning.
pub const INJECTIVITY_WARNING_MARGIN: f64 = 1e-8;
/// Pairs closer than this are not sampled.
pub const MIN_PAIR_DISTANCE: f64 = 0.01;

pub(crate) fn complex_dist(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>().sqrt()
}

/// `‖T(f(x)) − A T(x) − B h(x)‖`.
pub fn functional_residual(
    t: &dyn Transform,
    sys: &dyn DiscreteSystem,
    filter: &FilterDesign,
    x: &[f64],
) -> Result<f64> {
    let next = t.eval(&sys.forward(x))?;
    let predicted = filter.step_complex(&t.eval(x)?, &sys.output(x))?;
    Ok(complex_dist(&next, &predicted))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InjectivityReport {
    /// `(|x₁ − x₂|, |T(x₁) − T(x₂)|)` per sampled pair.
    pub pairs: Vec<(f64, f64)>,
    /// Smallest ratio `|ΔT| / |Δx|` observed.
    pub margin: f64,
    pub warning: bool,
}

/// Samples pairs in the domain box and records how well `T` separates them.
pub fn injectivity_probe(
    t: &dyn Transform,
    sys: &dyn DiscreteSystem,
    pair_count: usize,
    seed: u64,
) -> Result<InjectivityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = sys.domain();
    let mut pairs = Vec::with_capacity(pair_count);
    let mut margin = f64::INFINITY;
    let mut draws = 0usize;
    while pairs.len() < pair_count {
        draws += 1;
        if draws > 1000 * pair_count.max(1) {
            return Err(Error::SamplingFailure { attempts: draws });
        }
        let x1 = domain.sample(&mut rng);
        let x2 = domain.sample(&mut rng);
        let dx = norm(&x1.iter().zip(&x2).map(|(a, b)| a - b).collect::<Vec<_>>());
        if dx < MIN_PAIR_DISTANCE {
            continue;
        }
        let dt = complex_dist(&t.eval(&x1)?, &t.eval(&x2)?);
        margin = margin.min(dt / dx);
        pairs.push((dx, dt));
    }
    if pairs.is_empty() {
        margin = 0.0;
    }
    let warning = margin <= INJECTIVITY_WARNING_MARGIN;
    if warning {
        log::warn!("injectivity margin {margin:.3e} at or below {INJECTIVITY_WARNING_MARGIN:e}");
    }
    Ok(InjectivityReport { pairs, margin, warning })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleOptions {
    pub radius: f64,
    pub pair_count: usize,
    /// A draw is accepted only when its margin exceeds this.
    pub accept_margin: f64,
    pub max_attempts: usize,
}

impl Default for ResampleOptions {
    fn default() -> Self {
        Self {
            radius: 1.0,
            pair_count: 1000,
            accept_margin: 1e-3,
            max_attempts: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct PolyDesign {
    pub filter: FilterDesign,
    pub transform: PolyTransform,
    pub seed: u64,
    pub injectivity: InjectivityReport,
    pub rejected: Vec<Rejection>,
}

/// Samples `n + 1` eigenvalues, solves for the polynomial transform and keeps
/// the first draw whose Sylvester system is regular and whose injectivity
/// margin clears `accept_margin`. Failed draws are logged, recorded in
/// `rejected`, and retried with the next seed.
pub fn design_poly_observer(sys: &LinearPolySystem, seed: u64, opts: ResampleOptions) -> Result<PolyDesign> {
    let count = sys.state_dim() + 1;
    let mut rejected = Vec::new();
    for attempt in 0..opts.max_attempts {
        let s = seed.wrapping_add(attempt as u64);
        let eigs = sample_eigenvalues(count, opts.radius, s)?;
        let filter = build_filter(&eigs, sys.output_dim())?;
        let transform = match poly_transform(sys, &filter) {
            Ok(t) => t,
            Err(e @ Error::SingularMatrix { .. }) => {
                log::warn!("seed {s}: Sylvester system singular, resampling");
                rejected.push(Rejection {
                    seed: s,
                    reason: e.to_string(),
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let injectivity = injectivity_probe(&transform, sys, opts.pair_count, s)?;
        if injectivity.margin > opts.accept_margin {
            return Ok(PolyDesign {
                filter,
                transform,
                seed: s,
                injectivity,
                rejected,
            });
        }
        log::warn!("seed {s}: injectivity margin {:.3e} too small, resampling", injectivity.margin);
        rejected.push(Rejection {
            seed: s,
            reason: format!("injectivity margin {:.3e} <= {:.3e}", injectivity.margin, opts.accept_margin),
        });
    }
    Err(Error::SamplingFailure {
        attempts: opts.max_attempts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::FnTransform;
    use crate::linalg::c64;
    use crate::system::{make_oscillator_system, BoxDomain, FnSystem};

    fn zero_output_system() -> FnSystem {
        FnSystem::new(
            2,
            1,
            |x| vec![0.9 * x[0], 0.9 * x[1]],
            |x| vec![x[0] / 0.9, x[1] / 0.9],
            |_| vec![0.0],
            BoxDomain::symmetric(2, 1.0),
            BoxDomain::symmetric(2, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn identity_transform_is_isometric() {
        let sys = make_oscillator_system(0.01).unwrap();
        let id = FnTransform::new(2, |x| x.iter().map(|&v| c64(v, 0.0)).collect());
        let r = injectivity_probe(&id, &sys, 200, 0).unwrap();
        assert!((r.margin - 1.0).abs() < 1e-12);
        assert!(!r.warning);
        assert_eq!(r.pairs.len(), 200);
        assert!(r.pairs.iter().all(|&(dx, _)| dx >= MIN_PAIR_DISTANCE));
    }

    #[test]
    fn constant_transform_warns() {
        let sys = make_oscillator_system(0.01).unwrap();
        let constant = FnTransform::new(3, |_| vec![c64(1.0, 2.0); 3]);
        let r = injectivity_probe(&constant, &sys, 50, 0).unwrap();
        assert_eq!(r.margin, 0.0);
        assert!(r.warning);
    }

    #[test]
    fn zero_transform_with_zero_output_has_zero_residual() {
        let sys = zero_output_system();
        let filter = build_filter(&[c64(0.5, 0.0), c64(0.2, 0.1), c64(-0.4, 0.0)], 1).unwrap();
        let zero = FnTransform::new(3, |_| vec![C64::default(); 3]);
        assert_eq!(functional_residual(&zero, &sys, &filter, &[0.3, 0.4]).unwrap(), 0.0);
    }

    #[test]
    fn resampling_accepts_oscillator() {
        let sys = make_oscillator_system(0.01).unwrap();
        let d = design_poly_observer(&sys, 42, ResampleOptions::default()).unwrap();
        assert!(d.injectivity.margin > 1e-3);
        assert_eq!(d.filter.eigenvalues().len(), 3);
    }

    #[test]
    fn resampling_gives_up_on_zero_output() {
        let sys = make_oscillator_system(0.01)
            .unwrap()
            .with_output(crate::linalg::Matrix::zeros(1, 6))
            .unwrap();
        let opts = ResampleOptions {
            max_attempts: 3,
            pair_count: 20,
            ..ResampleOptions::default()
        };
        assert_eq!(
            design_poly_observer(&sys, 0, opts).unwrap_err(),
            Error::SamplingFailure { attempts: 3 }
        );
    }
}
