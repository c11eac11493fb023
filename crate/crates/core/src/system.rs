//! Discrete-time plants `x⁺ = f(x)`, `y = h(x)` with an invertible `f`.
//!
//! The generic contract is the [`DiscreteSystem`] trait. [`LinearPolySystem`]
//! specializes it to linear dynamics with an output that is linear in a
//! graded-lex monomial basis, which is what the Sylvester construction
//! needs. [`make_oscillator_system`] builds the Euler-discretized harmonic
//! oscillator used throughout the examples and the comparison experiment.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c64, lu_solve, Matrix, C64};

/// Inflation applied to every grid-estimated supremum.
pub const SAFETY_FACTOR: f64 = 1.1;

/// Output difference below which two outputs count as equal.
pub const DISTINGUISH_TOLERANCE: f64 = 1e-9;

const MAX_GRID_POINTS: usize = 20_000_000;

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Axis-aligned closed box, one `[lo, hi]` interval per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct BoxDomain {
    bounds: Vec<[f64; 2]>,
}

impl TryFrom<Vec<[f64; 2]>> for BoxDomain {
    type Error = Error;

    fn try_from(bounds: Vec<[f64; 2]>) -> Result<Self> {
        BoxDomain::new(bounds)
    }
}

impl From<BoxDomain> for Vec<[f64; 2]> {
    fn from(b: BoxDomain) -> Self {
        b.bounds
    }
}

impl BoxDomain {
    pub fn new(bounds: Vec<[f64; 2]>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidArgument("box needs at least one coordinate".into()));
        }
        for (i, &[lo, hi]) in bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::InvalidArgument(format!(
                    "coordinate {i}: invalid interval [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { bounds })
    }

    /// `[-r, r]ⁿ`.
    pub fn symmetric(n: usize, r: f64) -> Self {
        Self {
            bounds: vec![[-r, r]; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[[f64; 2]] {
        &self.bounds
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.bounds).all(|(&v, &[lo, hi])| lo <= v && v <= hi)
    }

    pub fn is_subset_of(&self, other: &BoxDomain) -> bool {
        self.dim() == other.dim()
            && self
                .bounds
                .iter()
                .zip(&other.bounds)
                .all(|(&[a, b], &[lo, hi])| lo <= a && b <= hi)
    }

    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|[lo, hi]| hi - lo).product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.bounds.iter().map(|[lo, hi]| 0.5 * (lo + hi)).collect()
    }

    /// Box scaled by `factor` about its center.
    pub fn inflated(&self, factor: f64) -> Self {
        Self {
            bounds: self
                .bounds
                .iter()
                .map(|&[lo, hi]| {
                    let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo) * factor);
                    [c - r, c + r]
                })
                .collect(),
        }
    }

    fn axis(&self, i: usize, pitch: f64) -> Vec<f64> {
        let [lo, hi] = self.bounds[i];
        let steps = ((hi - lo) / pitch + 1e-9).floor() as usize;
        (0..=steps).map(|k| lo + k as f64 * pitch).collect()
    }

    /// Points `lo + k·pitch` per axis, in lexicographic order (first
    /// coordinate varies slowest).
    pub fn grid(&self, pitch: f64) -> Result<Vec<Vec<f64>>> {
        if !(pitch > 0.0 && pitch.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid pitch must be positive, got {pitch}")));
        }
        let axes: Vec<Vec<f64>> = (0..self.dim()).map(|i| self.axis(i, pitch)).collect();
        let total = axes
            .iter()
            .try_fold(1usize, |acc, a| acc.checked_mul(a.len()))
            .filter(|&t| t <= MAX_GRID_POINTS)
            .ok_or_else(|| Error::InvalidArgument(format!("grid pitch {pitch} yields too many points")))?;

        let mut points = Vec::with_capacity(total);
        let mut idx = vec![0usize; axes.len()];
        loop {
            points.push(idx.iter().zip(&axes).map(|(&k, a)| a[k]).collect());
            let mut d = axes.len();
            loop {
                if d == 0 {
                    return Ok(points);
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < axes[d].len() {
                    break;
                }
                idx[d] = 0;
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.bounds
            .iter()
            .map(|&[lo, hi]| if hi > lo { rng.random_range(lo..=hi) } else { lo })
            .collect()
    }
}

/// Graded-lexicographic monomial basis of total degree `≤ d`, constant included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBasis")]
pub struct MonomialBasis {
    state_dim: usize,
    degree: usize,
    exponents: Vec<Vec<u32>>,
}

#[derive(Deserialize)]
struct RawBasis {
    state_dim: usize,
    degree: usize,
    exponents: Vec<Vec<u32>>,
}

impl TryFrom<RawBasis> for MonomialBasis {
    type Error = Error;

    fn try_from(raw: RawBasis) -> Result<Self> {
        let basis = monomial_basis(raw.state_dim, raw.degree)?;
        if basis.exponents != raw.exponents {
            return Err(Error::Serialization(
                "exponent list is not the graded-lex basis for the given state_dim and degree".into(),
            ));
        }
        Ok(basis)
    }
}

/// Enumerates all exponent tuples of total degree `≤ d`, ordered by total
/// degree and then descending lexicographic order within a degree, so
/// `n = 2, d = 2` gives `1, x₁, x₂, x₁², x₁x₂, x₂²`.
pub fn monomial_basis(n: usize, d: usize) -> Result<MonomialBasis> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument(format!(
            "monomial basis needs n >= 1 and d >= 1, got n = {n}, d = {d}"
        )));
    }
    fn fill(prefix: &mut Vec<u32>, remaining: u32, slots: usize, out: &mut Vec<Vec<u32>>) {
        if slots == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=remaining).rev() {
            prefix.push(e);
            fill(prefix, remaining - e, slots - 1, out);
            prefix.pop();
        }
    }
    let mut exponents = Vec::new();
    for total in 0..=d as u32 {
        fill(&mut Vec::with_capacity(n), total, n, &mut exponents);
    }
    Ok(MonomialBasis {
        state_dim: n,
        degree: d,
        exponents,
    })
}

impl MonomialBasis {
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// `k_d = binomial(n + d, d)`.
    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    pub fn index_of(&self, exponent: &[u32]) -> Option<usize> {
        self.exponents.iter().position(|e| e == exponent)
    }

    /// `P_d(x)` in basis order.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.state_dim, "state dimension");
        let powers: Vec<Vec<f64>> = x
            .iter()
            .map(|&v| {
                let mut p = Vec::with_capacity(self.degree + 1);
                let mut acc = 1.0;
                for _ in 0..=self.degree {
                    p.push(acc);
                    acc *= v;
                }
                p
            })
            .collect();
        self.exponents
            .iter()
            .map(|e| e.iter().enumerate().map(|(i, &k)| powers[i][k as usize]).product())
            .collect()
    }
}

pub fn eval_monomials(basis: &MonomialBasis, x: &[f64]) -> Vec<f64> {
    basis.eval(x)
}

/// Matrix `D` with `P_d(F x) = D P_d(x)`, by exact multinomial expansion.
pub fn lift_matrix(f: &Matrix, basis: &MonomialBasis) -> Result<Matrix> {
    let n = basis.state_dim();
    if f.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            op: "lift_matrix",
            expected: (n, n),
            got: f.shape(),
        });
    }
    type Poly = HashMap<Vec<u32>, C64>;

    let linear_forms: Vec<Poly> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| f[(i, j)] != C64::default())
                .map(|j| {
                    let mut e = vec![0u32; n];
                    e[j] = 1;
                    (e, f[(i, j)])
                })
                .collect()
        })
        .collect();

    let multiply = |p: &Poly, q: &Poly| -> Poly {
        let mut out = Poly::new();
        for (ea, &ca) in p {
            for (eb, &cb) in q {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                *out.entry(e).or_default() += ca * cb;
            }
        }
        out
    };

    let index: HashMap<&[u32], usize> = basis
        .exponents()
        .iter()
        .enumerate()
        .map(|(i, e)| (e.as_slice(), i))
        .collect();

    let k = basis.len();
    let mut d = Matrix::zeros(k, k);
    for (row, alpha) in basis.exponents().iter().enumerate() {
        let mut poly: Poly = Poly::from([(vec![0u32; n], c64(1.0, 0.0))]);
        for (i, &power) in alpha.iter().enumerate() {
            for _ in 0..power {
                poly = multiply(&poly, &linear_forms[i]);
            }
        }
        for (e, c) in poly {
            let col = index[e.as_slice()];
            d[(row, col)] += c;
        }
    }
    Ok(d)
}

/// Contract for an invertible discrete-time plant on a compact box.
pub trait DiscreteSystem: Send + Sync {
    fn state_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn forward(&self, x: &[f64]) -> Vec<f64>;
    fn backward(&self, x: &[f64]) -> Vec<f64>;
    fn output(&self, x: &[f64]) -> Vec<f64>;
    /// The box `𝓧` trajectories are expected to stay in.
    fn domain(&self) -> &BoxDomain;
    /// Initial-condition box `𝓧₀ ⊆ 𝓧`.
    fn initial_box(&self) -> &BoxDomain;
}

fn check_boxes(n: usize, domain: &BoxDomain, initial: &BoxDomain) -> Result<()> {
    if domain.dim() != n || initial.dim() != n {
        return Err(Error::InvalidArgument(format!(
            "boxes must have dimension {n}, got {} and {}",
            domain.dim(),
            initial.dim()
        )));
    }
    if !initial.is_subset_of(domain) {
        return Err(Error::InvalidArgument("initial box is not contained in the domain box".into()));
    }
    Ok(())
}

type MapFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A plant given by closures.
pub struct FnSystem {
    state_dim: usize,
    output_dim: usize,
    f: MapFn,
    f_inv: MapFn,
    h: MapFn,
    domain: BoxDomain,
    initial: BoxDomain,
}

impl FnSystem {
    pub fn new(
        state_dim: usize,
        output_dim: usize,
        f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        f_inv: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        h: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        domain: BoxDomain,
        initial: BoxDomain,
    ) -> Result<Self> {
        check_boxes(state_dim, &domain, &initial)?;
        Ok(Self {
            state_dim,
            output_dim,
            f: Box::new(f),
            f_inv: Box::new(f_inv),
            h: Box::new(h),
            domain,
            initial,
        })
    }
}

impl DiscreteSystem for FnSystem {
    fn state_dim(&self) -> usize {
        self.state_dim
    }
    fn output_dim(&self) -> usize {
        self.output_dim
    }
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }
    fn backward(&self, x: &[f64]) -> Vec<f64> {
        (self.f_inv)(x)
    }
    fn output(&self, x: &[f64]) -> Vec<f64> {
        (self.h)(x)
    }
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }
    fn initial_box(&self) -> &BoxDomain {
        &self.initial
    }
}

/// `x⁺ = F x`, `y = H P_d(x)`.
#[derive(Debug, Clone)]
pub struct LinearPolySystem {
    f: Matrix,
    f_inv: Matrix,
    h: Matrix,
    basis: MonomialBasis,
    domain: BoxDomain,
    initial: BoxDomain,
}

impl LinearPolySystem {
    pub fn new(f: Matrix, h: Matrix, degree: usize, domain: BoxDomain, initial: BoxDomain) -> Result<Self> {
        let n = f.rows();
        if f.cols() != n {
            return Err(Error::NotSquare {
                rows: f.rows(),
                cols: f.cols(),
            });
        }
        let f_inv = lu_solve(&f, &Matrix::identity(n))?;
        Self::with_inverse(f, f_inv, h, degree, domain, initial)
    }

    fn with_inverse(
        f: Matrix,
        f_inv: Matrix,
        h: Matrix,
        degree: usize,
        domain: BoxDomain,
        initial: BoxDomain,
    ) -> Result<Self> {
        let n = f.rows();
        let basis = monomial_basis(n, degree)?;
        if h.cols() != basis.len() || h.rows() == 0 {
            return Err(Error::DimensionMismatch {
                op: "LinearPolySystem::new (H)",
                expected: (h.rows().max(1), basis.len()),
                got: h.shape(),
            });
        }
        if !f.is_real() || !h.is_real() {
            return Err(Error::InvalidArgument("F and H must be real".into()));
        }
        check_boxes(n, &domain, &initial)?;
        Ok(Self {
            f,
            f_inv,
            h,
            basis,
            domain,
            initial,
        })
    }

    pub fn dynamics(&self) -> &Matrix {
        &self.f
    }

    pub fn inverse_dynamics(&self) -> &Matrix {
        &self.f_inv
    }

    pub fn output_matrix(&self) -> &Matrix {
        &self.h
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    /// `D` such that `P_d(F x) = D P_d(x)`.
    pub fn lift(&self) -> Matrix {
        lift_matrix(&self.f, &self.basis).expect("F is n x n by construction")
    }

    pub fn with_boxes(mut self, domain: BoxDomain, initial: BoxDomain) -> Result<Self> {
        check_boxes(self.state_dim(), &domain, &initial)?;
        self.domain = domain;
        self.initial = initial;
        Ok(self)
    }

    /// Same plant with the output matrix replaced.
    pub fn with_output(mut self, h: Matrix) -> Result<Self> {
        if h.cols() != self.basis.len() || !h.is_real() {
            return Err(Error::DimensionMismatch {
                op: "with_output",
                expected: (h.rows(), self.basis.len()),
                got: h.shape(),
            });
        }
        self.h = h;
        Ok(self)
    }
}

impl DiscreteSystem for LinearPolySystem {
    fn state_dim(&self) -> usize {
        self.f.rows()
    }
    fn output_dim(&self) -> usize {
        self.h.rows()
    }
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.f.real_mul_vec(x).expect("state dimension")
    }
    fn backward(&self, x: &[f64]) -> Vec<f64> {
        self.f_inv.real_mul_vec(x).expect("state dimension")
    }
    fn output(&self, x: &[f64]) -> Vec<f64> {
        self.h.real_mul_vec(&self.basis.eval(x)).expect("basis length")
    }
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }
    fn initial_box(&self) -> &BoxDomain {
        &self.initial
    }
}

/// Closed-form oscillator output `x₁² − x₂² + x₁ + x₂`.
pub fn oscillator_output(x: &[f64]) -> f64 {
    x[0] * x[0] - x[1] * x[1] + x[0] + x[1]
}

/// Explicit-Euler discretization of `ẋ₁ = x₂, ẋ₂ = −x₁` with output
/// `x₁² − x₂² + x₁ + x₂`, on `𝓧 = [−2, 2]²`, `𝓧₀ = [−1, 1]²`.
pub fn make_oscillator_system(dt: f64) -> Result<LinearPolySystem> {
    if !(dt > 0.0 && dt < 1.0) {
        return Err(Error::InvalidArgument(format!("oscillator needs 0 < dt < 1, got {dt}")));
    }
    let f = Matrix::from_real_rows(&[[1.0, dt], [-dt, 1.0]]);
    let det = 1.0 + dt * dt;
    let f_inv = Matrix::from_real_rows(&[[1.0 / det, -dt / det], [dt / det, 1.0 / det]]);
    // basis order: 1, x1, x2, x1², x1x2, x2²
    let h = Matrix::from_real_rows(&[[0.0, 1.0, 1.0, 1.0, 0.0, -1.0]]);
    LinearPolySystem::with_inverse(
        f,
        f_inv,
        h,
        2,
        BoxDomain::symmetric(2, 2.0),
        BoxDomain::symmetric(2, 1.0),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstants {
    pub c1: f64,
    pub c2: f64,
    pub c1p: f64,
    pub c2p: f64,
}

fn jacobian(map: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], rows: usize) -> Matrix {
    let n = x.len();
    let mut jac = Matrix::zeros(rows, n);
    let mut probe = x.to_vec();
    for j in 0..n {
        let step = 1e-6 * x[j].abs().max(1.0);
        probe[j] = x[j] + step;
        let plus = map(&probe);
        probe[j] = x[j] - step;
        let minus = map(&probe);
        probe[j] = x[j];
        for i in 0..rows {
            jac[(i, j)] = c64((plus[i] - minus[i]) / (2.0 * step), 0.0);
        }
    }
    jac
}

/// Grid estimate of the affine growth bounds `|f⁻¹(x)| ≤ C1 + C2|x|` and
/// `|h(x)| ≤ C1p + C2p|x|` over the domain box.
///
/// Slopes are the largest finite-difference Jacobian norms on the grid
/// times [`SAFETY_FACTOR`]; offsets are the largest residuals of the
/// resulting affine bounds.
pub fn estimate_growth_constants(sys: &dyn DiscreteSystem, grid_pitch: f64) -> Result<GrowthConstants> {
    if sys.domain().volume() <= 0.0 {
        return Err(Error::DegenerateDomain);
    }
    let grid = sys.domain().grid(grid_pitch)?;
    let (n, p) = (sys.state_dim(), sys.output_dim());

    let mut slope_inv: f64 = 0.0;
    let mut slope_out: f64 = 0.0;
    for x in &grid {
        slope_inv = slope_inv.max(jacobian(|z| sys.backward(z), x, n).spectral_norm());
        slope_out = slope_out.max(jacobian(|z| sys.output(z), x, p).spectral_norm());
    }
    let c2 = SAFETY_FACTOR * slope_inv;
    let c2p = SAFETY_FACTOR * slope_out;

    let mut c1: f64 = 0.0;
    let mut c1p: f64 = 0.0;
    for x in &grid {
        let r = norm(x);
        c1 = c1.max(norm(&sys.backward(x)) - c2 * r);
        c1p = c1p.max(norm(&sys.output(x)) - c2p * r);
    }
    Ok(GrowthConstants { c1, c2, c1p, c2p })
}

/// `SAFETY_FACTOR · max |h|` over a grid of the domain box.
pub fn estimate_output_sup(sys: &dyn DiscreteSystem, grid_pitch: f64) -> Result<f64> {
    let grid = sys.domain().grid(grid_pitch)?;
    Ok(SAFETY_FACTOR * grid.iter().map(|x| norm(&sys.output(x))).fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distinguishability {
    /// First backward index `i ≥ 1` at which the outputs differ.
    Separated(usize),
    /// No separation up to the given horizon.
    NotDistinguished(usize),
}

/// Searches for the smallest `i ≥ 1` with `h(f⁻ⁱ(x1)) ≠ h(f⁻ⁱ(x2))`.
pub fn backward_distinguishability_probe(
    sys: &dyn DiscreteSystem,
    x1: &[f64],
    x2: &[f64],
    i_max: usize,
) -> Distinguishability {
    let (mut a, mut b) = (x1.to_vec(), x2.to_vec());
    for i in 1..=i_max {
        a = sys.backward(&a);
        b = sys.backward(&b);
        let diff: Vec<f64> = sys.output(&a).iter().zip(sys.output(&b)).map(|(u, v)| u - v).collect();
        if norm(&diff) > DISTINGUISH_TOLERANCE {
            return Distinguishability::Separated(i);
        }
    }
    Distinguishability::NotDistinguished(i_max)
}

/// JSON description of a plant.
///
/// Either `{"builtin": "oscillator", "dt": 0.01}` or
/// `{"linear_poly": {"F": [[..]], "H": [[..]], "degree": d}}`, optionally
/// with `domain_box` / `initial_box` arrays of `[lo, hi]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear_poly: Option<LinearPolySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_box: Option<BoxDomain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_box: Option<BoxDomain>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearPolySpec {
    #[serde(rename = "F")]
    pub f: Matrix,
    #[serde(rename = "H")]
    pub h: Matrix,
    pub degree: usize,
}

impl SystemSpec {
    pub fn oscillator(dt: f64) -> Self {
        Self {
            builtin: Some("oscillator".into()),
            dt: Some(dt),
            linear_poly: None,
            domain_box: None,
            initial_box: None,
        }
    }

    pub fn is_oscillator(&self) -> bool {
        self.builtin.as_deref() == Some("oscillator")
    }

    pub fn build(&self) -> Result<LinearPolySystem> {
        let sys = match (&self.builtin, &self.linear_poly) {
            (Some(name), None) if name == "oscillator" => {
                let dt = self
                    .dt
                    .ok_or_else(|| Error::InvalidArgument("builtin oscillator needs `dt`".into()))?;
                make_oscillator_system(dt)?
            }
            (Some(name), None) => {
                return Err(Error::InvalidArgument(format!("unknown builtin system `{name}`")))
            }
            (None, Some(lp)) => {
                let n = lp.f.rows();
                LinearPolySystem::new(
                    lp.f.clone(),
                    lp.h.clone(),
                    lp.degree,
                    BoxDomain::symmetric(n, 2.0),
                    BoxDomain::symmetric(n, 1.0),
                )?
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "system needs exactly one of `builtin` or `linear_poly`".into(),
                ))
            }
        };
        match (&self.domain_box, &self.initial_box) {
            (None, None) => Ok(sys),
            (dom, init) => {
                let dom = dom.clone().unwrap_or_else(|| sys.domain().clone());
                let init = init.clone().unwrap_or_else(|| sys.initial_box().clone());
                sys.with_boxes(dom, init)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_output_system() -> FnSystem {
        FnSystem::new(
            2,
            1,
            |x| vec![0.5 * x[0], 0.5 * x[1]],
            |x| vec![2.0 * x[0], 2.0 * x[1]],
            |_| vec![0.0],
            BoxDomain::symmetric(2, 1.0),
            BoxDomain::symmetric(2, 0.5),
        )
        .unwrap()
    }

    #[test]
    fn basis_enumeration() {
        let b = monomial_basis(2, 2).unwrap();
        let expected: Vec<Vec<u32>> = vec![
            vec![0, 0],
            vec![1, 0],
            vec![0, 1],
            vec![2, 0],
            vec![1, 1],
            vec![0, 2],
        ];
        assert_eq!(b.exponents(), expected.as_slice());
        let b = monomial_basis(1, 3).unwrap();
        assert_eq!(b.exponents(), &[vec![0], vec![1], vec![2], vec![3]]);
        assert_eq!(monomial_basis(3, 2).unwrap().len(), 10);
        assert!(monomial_basis(0, 2).is_err());
        assert!(monomial_basis(2, 0).is_err());
    }

    #[test]
    fn basis_sizes_are_binomial() {
        fn binom(n: usize, k: usize) -> usize {
            (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
        }
        for n in 1..=4 {
            for d in 1..=4 {
                let b = monomial_basis(n, d).unwrap();
                assert_eq!(b.len(), binom(n + d, d));
                for w in b.exponents().windows(2) {
                    let (s0, s1): (u32, u32) = (w[0].iter().sum(), w[1].iter().sum());
                    assert!(s0 < s1 || (s0 == s1 && w[0] > w[1]));
                }
            }
        }
    }

    #[test]
    fn eval_monomials_examples() {
        let b = monomial_basis(2, 2).unwrap();
        assert_eq!(eval_monomials(&b, &[0.0, 0.0]), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(eval_monomials(&b, &[1.0, 2.0]), vec![1.0, 1.0, 2.0, 1.0, 2.0, 4.0]);
        let sys = make_oscillator_system(0.01).unwrap();
        assert_eq!(sys.output(&[1.0, 0.0]), vec![2.0]);
    }

    #[test]
    fn lift_identity_and_scaling() {
        let b = monomial_basis(2, 3).unwrap();
        let d = lift_matrix(&Matrix::identity(2), &b).unwrap();
        assert_eq!(d, Matrix::identity(b.len()));

        let b = monomial_basis(1, 2).unwrap();
        let d = lift_matrix(&Matrix::from_real_rows(&[[2.0]]), &b).unwrap();
        assert_eq!(
            d,
            Matrix::from_diag(&[c64(1.0, 0.0), c64(2.0, 0.0), c64(4.0, 0.0)])
        );
    }

    #[test]
    fn lift_matches_pointwise_for_oscillator() {
        let sys = make_oscillator_system(0.01).unwrap();
        let d = sys.lift();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x = sys.domain().sample(&mut rng);
            let lhs = sys.basis().eval(&sys.forward(&x));
            let px = sys.basis().eval(&x);
            let rhs = d.real_mul_vec(&px).unwrap();
            let err = norm(&lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect::<Vec<_>>());
            assert!(err <= 1e-12 * (1.0 + norm(&px)));
        }
    }

    #[test]
    fn oscillator_basics() {
        let sys = make_oscillator_system(0.01).unwrap();
        assert_eq!(sys.forward(&[1.0, 0.0]), vec![1.0, -0.01]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x = sys.domain().sample(&mut rng);
            let back = sys.backward(&sys.forward(&x));
            assert!(norm(&[back[0] - x[0], back[1] - x[1]]) < 1e-12);
            assert!((sys.output(&x)[0] - oscillator_output(&x)).abs() < 1e-12);
        }
        let inv_norm = sys.inverse_dynamics().spectral_norm();
        assert!((inv_norm - 1.0 / (1.0f64 + 1e-4).sqrt()).abs() < 1e-14);
        assert!(make_oscillator_system(0.0).is_err());
        assert!(make_oscillator_system(1.0).is_err());
    }

    #[test]
    fn growth_constants_linear_and_zero() {
        let sys = make_oscillator_system(0.01).unwrap();
        let g = estimate_growth_constants(&sys, 0.25).unwrap();
        let expected = SAFETY_FACTOR / (1.0f64 + 1e-4).sqrt();
        assert!((g.c2 / expected - 1.0).abs() < 0.02, "c2 = {}", g.c2);
        assert!(g.c1 < 1e-6);

        let g = estimate_growth_constants(&zero_output_system(), 0.25).unwrap();
        assert_eq!((g.c1p, g.c2p), (0.0, 0.0));
        assert!((g.c2 - 2.2).abs() < 1e-6);
    }

    #[test]
    fn growth_constants_degenerate_domain() {
        let sys = make_oscillator_system(0.01)
            .unwrap()
            .with_boxes(
                BoxDomain::new(vec![[0.0, 0.0], [-1.0, 1.0]]).unwrap(),
                BoxDomain::new(vec![[0.0, 0.0], [0.0, 0.0]]).unwrap(),
            )
            .unwrap();
        assert_eq!(estimate_growth_constants(&sys, 0.1), Err(Error::DegenerateDomain));
    }

    #[test]
    fn distinguishability_probe() {
        let sys = make_oscillator_system(0.01).unwrap();
        assert_eq!(
            backward_distinguishability_probe(&sys, &[0.3, 0.2], &[0.3, 0.2], 50),
            Distinguishability::NotDistinguished(50)
        );
        match backward_distinguishability_probe(&sys, &[1.0, 0.0], &[0.0, 1.0], 50) {
            Distinguishability::Separated(i) => assert_eq!(i, 1),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            backward_distinguishability_probe(&zero_output_system(), &[0.1, 0.0], &[0.0, 0.3], 20),
            Distinguishability::NotDistinguished(20)
        );
    }

    #[test]
    fn box_grid_order_and_membership() {
        let b = BoxDomain::new(vec![[0.0, 1.0], [-1.0, 0.0]]).unwrap();
        let g = b.grid(0.5).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], vec![0.0, -1.0]);
        assert_eq!(g[1], vec![0.0, -0.5]);
        assert_eq!(g[8], vec![1.0, 0.0]);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(g.iter().all(|x| b.contains(x)));
        assert!(b.grid(0.0).is_err());
        assert!(BoxDomain::new(vec![[1.0, 0.0]]).is_err());
        assert_eq!(BoxDomain::symmetric(2, 1.0).inflated(2.0), BoxDomain::symmetric(2, 2.0));
    }

    #[test]
    fn system_spec_parsing() {
        let spec: SystemSpec = serde_json::from_str(r#"{"builtin":"oscillator","dt":0.01}"#).unwrap();
        let sys = spec.build().unwrap();
        assert_eq!(sys.forward(&[1.0, 0.0]), vec![1.0, -0.01]);

        let spec: SystemSpec = serde_json::from_str(
            r#"{"linear_poly":{"F":[[0.5,0.0],[0.0,0.8]],"H":[[0,1,0,0,0,1]],"degree":2},
                "domain_box":[[-1,1],[-1,1]],"initial_box":[[-0.5,0.5],[-0.5,0.5]]}"#,
        )
        .unwrap();
        let sys = spec.build().unwrap();
        assert_eq!(sys.output(&[2.0, 3.0]), vec![11.0]);
        assert_eq!(sys.domain(), &BoxDomain::symmetric(2, 1.0));

        let bad: SystemSpec = serde_json::from_str(r#"{"builtin":"pendulum","dt":0.1}"#).unwrap();
        assert!(bad.build().is_err());
        let bad: SystemSpec = serde_json::from_str(
            r#"{"builtin":"oscillator","dt":0.01,"initial_box":[[-3,3],[-1,1]]}"#,
        )
        .unwrap();
        assert!(bad.build().is_err());
        assert!(serde_json::from_str::<SystemSpec>(r#"{"builtin":"oscillator","bogus":1}"#).is_err());
    }

    #[test]
    fn basis_serde_validates() {
        let b = monomial_basis(2, 2).unwrap();
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(serde_json::from_str::<MonomialBasis>(&s).unwrap(), b);
        let tampered = s.replace("[2,0]", "[0,2]");
        assert!(serde_json::from_str::<MonomialBasis>(&tampered).is_err());
    }
}
