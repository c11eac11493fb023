//! Coupled plant/observer simulation.
//!
//! The filter `ξ⁺ = A ξ + B y` runs in its real realization; estimates come
//! from inverting the transform, either by solving the linear stack of the
//! closed-form quadratic example or by nearest-neighbour search over a grid of
//! the domain box.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::design::{
    complex_to_real, real_to_complex, ExampleCoeffs, FilterDesign, Transform, TransformMap,
};
use crate::error::{Error, Result};
use crate::linalg::{c64, LuFactors, Matrix, C64};
use crate::system::{norm, BoxDomain, DiscreteSystem};

/// Plant states may wander this far (box scale) before a run aborts.
pub const DOMAIN_ESCAPE_INFLATION: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inversion {
    LinearStack,
    GridNn { pitch: f64 },
}

#[derive(Debug, Clone)]
pub struct ObserverConfig {
    pub filter: FilterDesign,
    pub transform: TransformMap,
    pub inversion: Inversion,
}

impl ObserverConfig {
    pub fn new(filter: FilterDesign, transform: TransformMap, inversion: Inversion) -> Result<Self> {
        if transform.output_len() != filter.dim() {
            return Err(Error::DimensionMismatch {
                op: "ObserverConfig",
                expected: (filter.dim(), 1),
                got: (transform.output_len(), 1),
            });
        }
        match (&inversion, &transform) {
            (Inversion::LinearStack, TransformMap::Example(t)) => {
                LinearStack::new(t.coeffs())?;
            }
            (Inversion::LinearStack, _) => {
                return Err(Error::InvalidArgument(format!(
                    "linear-stack inversion needs the closed-form example transform, got `{}`",
                    transform.kind()
                )))
            }
            (Inversion::GridNn { pitch }, _) if pitch.is_nan() || *pitch <= 0.0 => {
                return Err(Error::InvalidArgument(format!("grid pitch must be positive, got {pitch}")))
            }
            _ => {}
        }
        Ok(Self {
            filter,
            transform,
            inversion,
        })
    }
}

/// One step of the real-realized filter.
pub fn filter_step(filter: &FilterDesign, xi: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    filter.step_real(xi, y)
}

/// Factorized 4x4 system mapping `(x₁² − x₂², x₁x₂, x₁, x₂)` to `(y, T₁, T₂, T₃)`.
#[derive(Debug, Clone)]
pub struct LinearStack {
    lu: LuFactors,
}

impl LinearStack {
    pub fn new(coeffs: &[ExampleCoeffs]) -> Result<Self> {
        if coeffs.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "linear stack needs exactly 3 coefficient rows, got {}",
                coeffs.len()
            )));
        }
        let mut rows = vec![[1.0, 0.0, 1.0, 1.0]];
        rows.extend(coeffs.iter().map(ExampleCoeffs::stack_row));
        Ok(Self {
            lu: LuFactors::factor(&Matrix::from_real_rows(&rows))?,
        })
    }

    /// Returns `(x̂₁, x̂₂)`; the recovered quadratic terms are dropped.
    pub fn invert(&self, y: f64, t_values: &[f64]) -> Result<[f64; 2]> {
        if t_values.len() != 3 {
            return Err(Error::DimensionMismatch {
                op: "LinearStack::invert",
                expected: (3, 1),
                got: (t_values.len(), 1),
            });
        }
        let rhs = [y, t_values[0], t_values[1], t_values[2]].map(|v| c64(v, 0.0));
        let z = self.lu.solve_vec(&rhs)?;
        Ok([z[2].re, z[3].re])
    }
}

pub fn invert_linear_stack(coeffs: &[ExampleCoeffs], y: f64, t_values: &[f64]) -> Result<[f64; 2]> {
    LinearStack::new(coeffs)?.invert(y, t_values)
}

/// Transform values tabulated on a grid of the domain, for nearest-neighbour
/// inversion.
pub struct GridInverter {
    points: Vec<Vec<f64>>,
    values: Vec<Vec<C64>>,
}

impl GridInverter {
    pub fn new(t: &dyn Transform, domain: &BoxDomain, pitch: f64) -> Result<Self> {
        let points = domain.grid(pitch)?;
        let values = points.iter().map(|x| t.eval(x)).collect::<Result<Vec<_>>>()?;
        Ok(Self { points, values })
    }

    /// Grid point minimizing `|T(x) − ξ|`; the first in lexicographic order
    /// wins ties.
    pub fn invert(&self, xi: &[C64]) -> Vec<f64> {
        let mut best = (f64::INFINITY, 0usize);
        for (i, v) in self.values.iter().enumerate() {
            let d: f64 = v.iter().zip(xi).map(|(a, b)| (a - b).norm_sqr()).sum();
            if d < best.0 {
                best = (d, i);
            }
        }
        self.points[best.1].clone()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn invert_grid_nn(t: &dyn Transform, xi: &[C64], domain: &BoxDomain, pitch: f64) -> Result<Vec<f64>> {
    Ok(GridInverter::new(t, domain, pitch)?.invert(xi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub k: usize,
    pub t: f64,
    pub x: Vec<f64>,
    /// Real realization of the filter state, `(Re ξ₁, Im ξ₁, …)`.
    pub xi: Vec<f64>,
    pub xhat: Vec<f64>,
    pub err: f64,
    pub filter_err: f64,
}

impl TrajectoryRow {
    pub fn xi_complex(&self) -> Vec<C64> {
        real_to_complex(&self.xi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub dt: f64,
    pub rows: Vec<TrajectoryRow>,
    /// Set when the plant left the domain box (but not the escape box).
    pub left_domain: bool,
}

fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

impl TrajectoryRecord {
    pub fn steps(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }

    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.err).collect()
    }

    pub fn csv_header(&self) -> String {
        let n = self.rows.first().map_or(0, |r| r.x.len());
        let mut cols = vec!["k".to_string(), "t".to_string()];
        cols.extend((1..=n).map(|i| format!("x{i}")));
        cols.extend((1..=n).map(|i| format!("xhat{i}")));
        cols.push("err".into());
        cols.push("filter_err".into());
        cols.join(",")
    }

    /// CSV with 17 significant digits per value.
    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for r in &self.rows {
            let mut fields = vec![r.k.to_string(), sci(r.t)];
            fields.extend(r.x.iter().copied().map(sci));
            fields.extend(r.xhat.iter().copied().map(sci));
            fields.push(sci(r.err));
            fields.push(sci(r.filter_err));
            let _ = writeln!(out, "{}", fields.join(","));
        }
        out
    }
}

enum Inverter {
    Stack(LinearStack),
    Grid(GridInverter),
}

/// Plant trajectory `x₀, f(x₀), …, f^K(x₀)` with no observer attached.
pub fn simulate_plant(sys: &dyn DiscreteSystem, x0: &[f64], steps: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x0.to_vec());
    for _ in 0..steps {
        let next = sys.forward(out.last().expect("non-empty"));
        out.push(next);
    }
    out
}

/// Runs plant and observer jointly for `steps` steps.
///
/// `xi0` is the complex filter state; the filter itself runs in its real
/// realization. Time stamps are `k · dt`.
pub fn simulate(
    sys: &dyn DiscreteSystem,
    obs: &ObserverConfig,
    x0: &[f64],
    xi0: &[C64],
    steps: usize,
    dt: f64,
) -> Result<TrajectoryRecord> {
    if x0.len() != sys.state_dim() {
        return Err(Error::DimensionMismatch {
            op: "simulate (x0)",
            expected: (sys.state_dim(), 1),
            got: (x0.len(), 1),
        });
    }
    if xi0.len() != obs.filter.dim() {
        return Err(Error::DimensionMismatch {
            op: "simulate (xi0)",
            expected: (obs.filter.dim(), 1),
            got: (xi0.len(), 1),
        });
    }
    if !sys.initial_box().contains(x0) {
        return Err(Error::InvalidArgument(format!("x0 = {x0:?} is outside the initial box")));
    }
    if obs.filter.output_dim() != sys.output_dim() {
        return Err(Error::DimensionMismatch {
            op: "simulate (output)",
            expected: (sys.output_dim(), 1),
            got: (obs.filter.output_dim(), 1),
        });
    }

    let inverter = match (&obs.inversion, &obs.transform) {
        (Inversion::LinearStack, TransformMap::Example(t)) => Inverter::Stack(LinearStack::new(t.coeffs())?),
        (Inversion::LinearStack, other) => {
            return Err(Error::InvalidArgument(format!(
                "linear-stack inversion is unavailable for `{}` transforms",
                other.kind()
            )))
        }
        (Inversion::GridNn { pitch }, t) => Inverter::Grid(GridInverter::new(t, sys.domain(), *pitch)?),
    };
    let escape_box = sys.domain().inflated(DOMAIN_ESCAPE_INFLATION);

    let mut rows = Vec::with_capacity(steps + 1);
    let mut left_domain = false;
    let mut x = x0.to_vec();
    let mut xi = complex_to_real(xi0);
    for k in 0..=steps {
        if !escape_box.contains(&x) {
            return Err(Error::DomainEscape {
                step: k,
                magnitude: norm(&x),
            });
        }
        if !left_domain && !sys.domain().contains(&x) {
            log::warn!("plant state left the domain box at step {k}");
            left_domain = true;
        }
        let y = sys.output(&x);
        let xi_c = real_to_complex(&xi);
        let xhat = match &inverter {
            Inverter::Stack(stack) => {
                let t_values: Vec<f64> = xi_c.iter().map(|z| z.re).collect();
                stack.invert(y[0], &t_values)?.to_vec()
            }
            Inverter::Grid(grid) => grid.invert(&xi_c),
        };
        let t_x = obs.transform.eval(&x)?;
        let filter_err = xi_c
            .iter()
            .zip(&t_x)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let err = norm(&x.iter().zip(&xhat).map(|(a, b)| a - b).collect::<Vec<_>>());
        if !(err.is_finite() && filter_err.is_finite()) {
            return Err(Error::NonFinite("trajectory errors"));
        }

        let next_xi = if k < steps { Some(obs.filter.step_real(&xi, &y)?) } else { None };
        rows.push(TrajectoryRow {
            k,
            t: k as f64 * dt,
            x: x.clone(),
            xi: xi.clone(),
            xhat,
            err,
            filter_err,
        });
        if let Some(next) = next_xi {
            xi = next;
            x = sys.forward(&x);
        }
    }
    Ok(TrajectoryRecord {
        dt,
        rows,
        left_domain,
    })
}
