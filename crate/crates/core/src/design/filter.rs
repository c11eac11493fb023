use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{c64, kron, real_embed, Matrix, SpectrumInfo, C64};
use crate::system::GrowthConstants;

/// Eigenvalues closer than this (relative to the sampling radius) are resampled.
pub const MIN_SEPARATION: f64 = 1e-6;
/// Sampled eigenvalues stay above this fraction of the sampling radius.
pub const MIN_MODULUS_FRACTION: f64 = 0.05;
pub const MAX_SAMPLING_ATTEMPTS: usize = 10_000;

/// Linear filter `ξ⁺ = A ξ + B y` with `A = diag(λ) ⊗ I_p` and
/// `B = g · (1, …, 1)ᵀ ⊗ I_p`, together with its real realization in which
/// every complex coordinate becomes a `(Re, Im)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterDesign {
    spectrum: SpectrumInfo,
    output_dim: usize,
    input_gain: f64,
    a_complex: Matrix,
    b_complex: Matrix,
    a_real: Matrix,
    b_real: Matrix,
}

/// Builds the filter for eigenvalues `eigs` and output dimension `p`, unit gain.
pub fn build_filter(eigs: &[C64], p: usize) -> Result<FilterDesign> {
    FilterDesign::new(eigs, p, 1.0)
}

impl FilterDesign {
    pub fn new(eigs: &[C64], p: usize, input_gain: f64) -> Result<Self> {
        if eigs.is_empty() || p == 0 {
            return Err(Error::InvalidArgument(
                "filter needs at least one eigenvalue and p >= 1".into(),
            ));
        }
        if !input_gain.is_finite() {
            return Err(Error::NonFinite("input gain"));
        }
        for (index, z) in eigs.iter().enumerate() {
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::NonFinite("eigenvalue"));
            }
            if z.norm() >= 1.0 {
                return Err(Error::UnstableEigenvalue {
                    index,
                    modulus: z.norm(),
                });
            }
        }
        for i in 0..eigs.len() {
            for j in i + 1..eigs.len() {
                if (eigs[i] - eigs[j]).norm() <= MIN_SEPARATION {
                    return Err(Error::DuplicateEigenvalues {
                        first: i,
                        second: j,
                        tolerance: MIN_SEPARATION,
                    });
                }
            }
        }

        let ident = Matrix::identity(p);
        let a_complex = kron(&Matrix::from_diag(eigs), &ident);
        let ones = Matrix::column(&vec![c64(input_gain, 0.0); eigs.len()]);
        let b_complex = kron(&ones, &ident);

        let m = eigs.len() * p;
        let mut a_real = Matrix::zeros(2 * m, 2 * m);
        for (i, &lambda) in eigs.iter().enumerate() {
            let block = real_embed(lambda);
            for j in 0..p {
                let k = i * p + j;
                for r in 0..2 {
                    for c in 0..2 {
                        a_real[(2 * k + r, 2 * k + c)] = block[(r, c)];
                    }
                }
            }
        }
        let mut b_real = Matrix::zeros(2 * m, p);
        for k in 0..m {
            for j in 0..p {
                let z = b_complex[(k, j)];
                b_real[(2 * k, j)] = c64(z.re, 0.0);
                b_real[(2 * k + 1, j)] = c64(z.im, 0.0);
            }
        }

        Ok(Self {
            spectrum: SpectrumInfo::from_eigenvalues(eigs.to_vec()),
            output_dim: p,
            input_gain,
            a_complex,
            b_complex,
            a_real,
            b_real,
        })
    }

    /// Same eigenvalues, input matrix scaled to `gain · (1, …, 1)ᵀ ⊗ I_p`.
    pub fn with_input_gain(&self, gain: f64) -> Result<Self> {
        Self::new(&self.spectrum.eigenvalues, self.output_dim, gain)
    }

    pub fn eigenvalues(&self) -> &[C64] {
        &self.spectrum.eigenvalues
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectrum.spectral_radius
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn input_gain(&self) -> f64 {
        self.input_gain
    }

    /// Complex state dimension `m = (#eigenvalues) · p`.
    pub fn dim(&self) -> usize {
        self.spectrum.eigenvalues.len() * self.output_dim
    }

    pub fn a_complex(&self) -> &Matrix {
        &self.a_complex
    }

    pub fn b_complex(&self) -> &Matrix {
        &self.b_complex
    }

    pub fn a_real(&self) -> &Matrix {
        &self.a_real
    }

    pub fn b_real(&self) -> &Matrix {
        &self.b_real
    }

    /// Diagonal of `A`, one entry per complex filter coordinate.
    pub fn diagonal(&self) -> Vec<C64> {
        let p = self.output_dim;
        self.spectrum
            .eigenvalues
            .iter()
            .flat_map(|&l| std::iter::repeat_n(l, p))
            .collect()
    }

    /// Fails unless `ρ(A) · C2 < 1`.
    pub fn check_growth(&self, growth: &GrowthConstants) -> Result<()> {
        if self.spectral_radius() * growth.c2 >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "spectral radius {} exceeds 1/C2 = {}",
                self.spectral_radius(),
                1.0 / growth.c2
            )));
        }
        Ok(())
    }

    pub fn step_complex(&self, xi: &[C64], y: &[f64]) -> Result<Vec<C64>> {
        let ax = self.a_complex.mul_vec(xi)?;
        let by = self.b_complex.mul_real_vec(y)?;
        Ok(ax.into_iter().zip(by).map(|(a, b)| a + b).collect())
    }

    pub fn step_real(&self, xi: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let ax = self.a_real.real_mul_vec(xi)?;
        let by = self.b_real.real_mul_vec(y)?;
        Ok(ax.into_iter().zip(by).map(|(a, b)| a + b).collect())
    }
}

/// Interleaves a complex filter state into `(Re ξ₁, Im ξ₁, Re ξ₂, …)`.
pub fn complex_to_real(xi: &[C64]) -> Vec<f64> {
    xi.iter().flat_map(|z| [z.re, z.im]).collect()
}

pub fn real_to_complex(xi: &[f64]) -> Vec<C64> {
    xi.chunks_exact(2).map(|p| c64(p[0], p[1])).collect()
}

/// Largest admissible eigenvalue modulus, `min(1, 1/C2)`.
pub fn admissible_radius(growth: &GrowthConstants) -> f64 {
    if growth.c2 <= 1.0 {
        1.0
    } else {
        1.0 / growth.c2
    }
}

/// Draws `count` eigenvalues uniformly in the open disc of radius `radius`.
///
/// Each value comes from rejection sampling on the bounding square and must
/// have modulus in `(0.05·r, r)`. The whole tuple is redrawn while any two
/// values are closer than `1e-6·r`.
pub fn sample_eigenvalues(count: usize, radius: f64, seed: u64) -> Result<Vec<C64>> {
    if !(radius > 0.0 && radius <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "sampling radius must lie in (0, 1], got {radius}"
        )));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("need at least one eigenvalue".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attempts = 0;
    while attempts < MAX_SAMPLING_ATTEMPTS {
        attempts += 1;
        let mut eigs = Vec::with_capacity(count);
        while eigs.len() < count {
            let z = c64(rng.random_range(-radius..radius), rng.random_range(-radius..radius));
            let r = z.norm();
            if r < radius && r > MIN_MODULUS_FRACTION * radius {
                eigs.push(z);
            }
        }
        let separated = (0..count)
            .all(|i| (i + 1..count).all(|j| (eigs[i] - eigs[j]).norm() > MIN_SEPARATION * radius));
        if separated {
            return Ok(eigs);
        }
    }
    Err(Error::SamplingFailure { attempts })
}

#[derive(Serialize, Deserialize)]
struct FilterRepr {
    eigenvalues: Vec<[f64; 2]>,
    output_dim: usize,
    #[serde(default = "unit_gain")]
    input_gain: f64,
    #[serde(default)]
    spectral_radius: Option<f64>,
    #[serde(rename = "A_complex", default)]
    a_complex: Option<Matrix>,
    #[serde(rename = "B_complex", default)]
    b_complex: Option<Matrix>,
    #[serde(rename = "A_real", default)]
    a_real: Option<Matrix>,
    #[serde(rename = "B_real", default)]
    b_real: Option<Matrix>,
}

fn unit_gain() -> f64 {
    1.0
}

impl Serialize for FilterDesign {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        FilterRepr {
            eigenvalues: self.eigenvalues().iter().map(|z| [z.re, z.im]).collect(),
            output_dim: self.output_dim,
            input_gain: self.input_gain,
            spectral_radius: Some(self.spectral_radius()),
            a_complex: Some(self.a_complex.clone()),
            b_complex: Some(self.b_complex.clone()),
            a_real: Some(self.a_real.clone()),
            b_real: Some(self.b_real.clone()),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FilterDesign {
    /// Rebuilds from eigenvalues, output dimension and gain; any matrices
    /// present must match the rebuilt ones exactly.
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = FilterRepr::deserialize(deserializer)?;
        let eigs: Vec<C64> = repr.eigenvalues.iter().map(|&[re, im]| c64(re, im)).collect();
        let design = FilterDesign::new(&eigs, repr.output_dim, repr.input_gain).map_err(D::Error::custom)?;
        let checks = [
            ("A_complex", &repr.a_complex, &design.a_complex),
            ("B_complex", &repr.b_complex, &design.b_complex),
            ("A_real", &repr.a_real, &design.a_real),
            ("B_real", &repr.b_real, &design.b_real),
        ];
        for (name, given, rebuilt) in checks {
            if given.as_ref().is_some_and(|g| g != rebuilt) {
                return Err(D::Error::custom(format!("{name} does not match the eigenvalues")));
            }
        }
        Ok(design)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_diagonal_filter() {
        let f = build_filter(&[c64(0.9, 0.0), c64(0.8, 0.0), c64(0.7, 0.0)], 1).unwrap();
        assert_eq!(
            f.a_complex(),
            &Matrix::from_diag(&[c64(0.9, 0.0), c64(0.8, 0.0), c64(0.7, 0.0)])
        );
        assert_eq!(f.b_complex(), &Matrix::real_column(&[1.0, 1.0, 1.0]));
        assert_eq!(f.spectral_radius(), 0.9);
        assert_eq!(f.dim(), 3);
        assert_eq!(f.a_real().shape(), (6, 6));
        assert_eq!(f.b_real().shape(), (6, 1));
    }

    #[test]
    fn complex_block_embedding() {
        let f = build_filter(&[c64(0.3, 0.4), c64(-0.5, 0.0)], 2).unwrap();
        let a = f.a_real();
        assert_eq!(a[(0, 0)].re, 0.3);
        assert_eq!(a[(0, 1)].re, -0.4);
        assert_eq!(a[(1, 0)].re, 0.4);
        assert_eq!(a[(1, 1)].re, 0.3);
        // second output channel repeats the block
        assert_eq!(a[(2, 3)].re, -0.4);
        assert_eq!(f.b_real()[(0, 0)].re, 1.0);
        assert_eq!(f.b_real()[(1, 0)].re, 0.0);
        assert_eq!(f.b_real()[(2, 1)].re, 1.0);
        assert!(f.a_complex().is_normal(1e-12));
        assert!(f.a_real().is_normal(1e-12));
    }

    #[test]
    fn rejects_duplicates_and_unstable() {
        let r = build_filter(&[c64(0.5, 0.1), c64(0.5, 0.1)], 1);
        assert!(matches!(r, Err(Error::DuplicateEigenvalues { .. })));
        let r = build_filter(&[c64(0.5, 0.0), c64(0.0, 1.0)], 1);
        assert!(matches!(r, Err(Error::UnstableEigenvalue { index: 1, .. })));
    }

    #[test]
    fn sampling_is_deterministic_and_constrained() {
        let a = sample_eigenvalues(3, 0.9, 42).unwrap();
        let b = sample_eigenvalues(3, 0.9, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_eigenvalues(3, 0.9, 43).unwrap());
        for seed in 0..200 {
            for z in sample_eigenvalues(4, 0.5, seed).unwrap() {
                assert!(z.norm() < 0.5 && z.norm() > 0.05 * 0.5);
            }
        }
        assert!(sample_eigenvalues(3, 1.5, 0).is_err());
        assert!(sample_eigenvalues(3, 0.0, 0).is_err());
    }

    #[test]
    fn admissible_radius_caps_at_one() {
        let g = |c2| GrowthConstants {
            c1: 0.0,
            c2,
            c1p: 0.0,
            c2p: 0.0,
        };
        assert_eq!(admissible_radius(&g(0.5)), 1.0);
        assert!((admissible_radius(&g(1.1)) - 1.0 / 1.1).abs() < 1e-15);
        let f = build_filter(&[c64(0.95, 0.0)], 1).unwrap();
        assert!(f.check_growth(&g(1.1)).is_err());
        assert!(f.check_growth(&g(1.0)).is_ok());
    }

    #[test]
    fn serde_round_trip() {
        let f = build_filter(&[c64(0.1, 0.2), c64(-1.0 / 3.0, 0.0)], 1)
            .unwrap()
            .with_input_gain(0.01)
            .unwrap();
        let s = serde_json::to_string(&f).unwrap();
        let back: FilterDesign = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
        let minimal: FilterDesign =
            serde_json::from_str(r#"{"eigenvalues":[[0.5,0.0]],"output_dim":1}"#).unwrap();
        assert_eq!(minimal.input_gain(), 1.0);
        let tampered = s.replacen("\"B_complex\":[[0.01]", "\"B_complex\":[[0.02]", 1);
        assert!(serde_json::from_str::<FilterDesign>(&tampered).is_err());
    }
}
