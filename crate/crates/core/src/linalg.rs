//! Dense complex matrix kernel.
//!
//! Row-major storage of `Complex64` entries: `data[i * cols + j] = A[i, j]`.
//! Real matrices are ordinary matrices whose imaginary parts are exactly zero,
//! so a single code path covers complex diagonal filters and their real block
//! embeddings.
//!
//! The Sylvester solver works by vectorization and a dense LU solve of the
//! resulting Kronecker system. Problem sizes in this crate stay at a few
//! hundred unknowns, where the cubic cost is irrelevant.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative pivot threshold used by [`lu_solve`].
pub const PIVOT_RELATIVE_TOLERANCE: f64 = 1e-13;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl Matrix {
    /// Builds a matrix from row-major entries, rejecting wrong lengths and
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "Matrix::new",
                expected: (rows, cols),
                got: (data.len(), 1),
            });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::default(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = c64(1.0, 0.0);
        }
        m
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &z) in diag.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    /// Builds a real matrix from row slices. Panics on ragged input.
    pub fn from_real_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend(r.iter().map(|&v| c64(v, 0.0)));
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_rows<R: AsRef<[C64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn column(v: &[C64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn real_column(v: &[f64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.iter().map(|&x| c64(x, 0.0)).collect(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut t = self.transpose();
        t.data.iter_mut().for_each(|z| *z = z.conj());
        t
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                expected: self.shape(),
                got: other.shape(),
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn mul_vec(&self, v: &[C64]) -> Result<Vec<C64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                op: "mul_vec",
                expected: (self.cols, 1),
                got: (v.len(), 1),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect())
    }

    /// Product with a real vector; the result is complex in general.
    pub fn mul_real_vec(&self, v: &[f64]) -> Result<Vec<C64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                op: "mul_real_vec",
                expected: (self.cols, 1),
                got: (v.len(), 1),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect())
    }

    /// Product of the real part of `self` with a real vector.
    pub fn real_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.mul_real_vec(v)?.into_iter().map(|z| z.re).collect())
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_real(&self) -> bool {
        self.data.iter().all(|z| z.im == 0.0)
    }

    /// Real parts as row-major nested vectors.
    pub fn real_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|z| z.re).collect())
            .collect()
    }

    /// Column-stacking vectorization.
    pub fn vec(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.push(self[(i, j)]);
            }
        }
        out
    }

    /// Inverse of [`Matrix::vec`].
    pub fn from_vec_columns(rows: usize, cols: usize, v: &[C64]) -> Result<Self> {
        if v.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "from_vec_columns",
                expected: (rows * cols, 1),
                got: (v.len(), 1),
            });
        }
        let mut m = Self::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m[(i, j)] = v[j * rows + i];
            }
        }
        Ok(m)
    }

    /// Largest singular value, by power iteration on `A* A`.
    pub fn spectral_norm(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let gram = mat_mul(&self.adjoint(), self).expect("gram shape");
        let n = gram.rows();
        // Slightly uneven start so it is never orthogonal to a symmetric
        // dominant direction.
        let mut v: Vec<C64> = (0..n).map(|i| c64(1.0 + 0.1 * i as f64, 0.0)).collect();
        let mut estimate = 0.0;
        for _ in 0..1000 {
            let w = gram.mul_vec(&v).expect("square");
            let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            v = w.into_iter().map(|z| z / norm).collect();
            let converged = (norm - estimate).abs() <= 1e-15 * norm;
            estimate = norm;
            if converged {
                break;
            }
        }
        estimate.sqrt()
    }

    /// `A A* = A* A` up to `tol` in max-abs.
    pub fn is_normal(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let adj = self.adjoint();
        let left = mat_mul(self, &adj).expect("square");
        let right = mat_mul(&adj, self).expect("square");
        left.sub(&right).expect("same shape").max_abs() <= tol
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = C64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                if z.im == 0.0 {
                    write!(f, "{:>12.6} ", z.re)?;
                } else {
                    write!(f, "{:>12.6}{:+.6}i ", z.re, z.im)?;
                }
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

// Entries serialize as plain numbers when real, `[re, im]` otherwise.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Entry>> = (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .map(|z| {
                        if z.im == 0.0 {
                            Entry::Real(z.re)
                        } else {
                            Entry::Complex([z.re, z.im])
                        }
                    })
                    .collect()
            })
            .collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<Entry>>::deserialize(deserializer)?;
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(D::Error::custom("matrix rows have unequal lengths"));
        }
        let data = rows
            .iter()
            .flatten()
            .map(|e| match *e {
                Entry::Real(re) => c64(re, 0.0),
                Entry::Complex([re, im]) => c64(re, im),
            })
            .collect();
        Matrix::new(rows.len(), cols, data).map_err(D::Error::custom)
    }
}

/// Eigen-information for matrices assembled from known eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumInfo {
    pub eigenvalues: Vec<C64>,
    pub spectral_radius: f64,
}

impl SpectrumInfo {
    pub fn from_eigenvalues(eigenvalues: Vec<C64>) -> Self {
        let spectral_radius = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
        Self {
            eigenvalues,
            spectral_radius,
        }
    }
}

pub fn mat_mul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch {
            op: "mat_mul",
            expected: (a.cols, b.cols),
            got: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a[(i, k)];
            if aik == C64::default() {
                continue;
            }
            for j in 0..b.cols {
                out.data[i * b.cols + j] += aik * b.data[k * b.cols + j];
            }
        }
    }
    Ok(out)
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct LuFactors {
    lu: Matrix,
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn factor(a: &Matrix) -> Result<Self> {
        if a.rows != a.cols {
            return Err(Error::NotSquare {
                rows: a.rows,
                cols: a.cols,
            });
        }
        let n = a.rows;
        let threshold = PIVOT_RELATIVE_TOLERANCE * a.max_abs();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();

        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[(i, k)].norm()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot == 0.0 || pivot < threshold {
                return Err(Error::SingularMatrix {
                    column: k,
                    pivot,
                    threshold,
                });
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let inv = lu[(k, k)].inv();
            for i in k + 1..n {
                let factor = lu[(i, k)] * inv;
                lu[(i, k)] = factor;
                if factor == C64::default() {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu.data[k * n + j];
                    lu.data[i * n + j] -= factor * u;
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        let n = self.dim();
        if b.rows != n {
            return Err(Error::DimensionMismatch {
                op: "lu_solve",
                expected: (n, b.cols),
                got: b.shape(),
            });
        }
        let mut x = Matrix::zeros(n, b.cols);
        for col in 0..b.cols {
            let rhs: Vec<C64> = self.perm.iter().map(|&p| b[(p, col)]).collect();
            let sol = self.solve_permuted(rhs);
            for (i, v) in sol.into_iter().enumerate() {
                x[(i, col)] = v;
            }
        }
        Ok(x)
    }

    pub fn solve_vec(&self, b: &[C64]) -> Result<Vec<C64>> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                op: "lu_solve",
                expected: (self.dim(), 1),
                got: (b.len(), 1),
            });
        }
        Ok(self.solve_permuted(self.perm.iter().map(|&p| b[p]).collect()))
    }

    fn solve_permuted(&self, mut y: Vec<C64>) -> Vec<C64> {
        let n = self.dim();
        for i in 0..n {
            let s: C64 = (0..i).map(|j| self.lu[(i, j)] * y[j]).sum();
            y[i] -= s;
        }
        for i in (0..n).rev() {
            let s: C64 = (i + 1..n).map(|j| self.lu[(i, j)] * y[j]).sum();
            y[i] = (y[i] - s) / self.lu[(i, i)];
        }
        y
    }
}

/// Solves `a X = b` by LU with partial pivoting.
pub fn lu_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    LuFactors::factor(a)?.solve(b)
}

/// Kronecker product; block `(i, j)` equals `a[i, j] * b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Matrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Solves `M D = A M + C` for `M` (m x k).
///
/// Vectorizes to `(Dᵀ ⊗ I_m − I_k ⊗ A) vec(M) = vec(C)`. The system is
/// singular exactly when `D` and `A` share an eigenvalue, which surfaces
/// as [`Error::SingularMatrix`].
pub fn solve_sylvester(d_mat: &Matrix, a_mat: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    let (k, kc) = d_mat.shape();
    let (m, mc) = a_mat.shape();
    if k != kc {
        return Err(Error::NotSquare { rows: k, cols: kc });
    }
    if m != mc {
        return Err(Error::NotSquare { rows: m, cols: mc });
    }
    if rhs.shape() != (m, k) {
        return Err(Error::DimensionMismatch {
            op: "solve_sylvester",
            expected: (m, k),
            got: rhs.shape(),
        });
    }
    let mut system = Matrix::zeros(m * k, m * k);
    // Dᵀ ⊗ I_m: block (i, j) is D[j, i] on the diagonal.
    for i in 0..k {
        for j in 0..k {
            let dji = d_mat[(j, i)];
            if dji == C64::default() {
                continue;
            }
            for r in 0..m {
                system[(i * m + r, j * m + r)] += dji;
            }
        }
    }
    // I_k ⊗ A: A repeated down the block diagonal.
    for blk in 0..k {
        for r in 0..m {
            for c in 0..m {
                system[(blk * m + r, blk * m + c)] -= a_mat[(r, c)];
            }
        }
    }
    let sol = LuFactors::factor(&system)?.solve_vec(&rhs.vec())?;
    Matrix::from_vec_columns(m, k, &sol)
}

/// 2x2 real block `[[Re λ, −Im λ], [Im λ, Re λ]]` acting on `(Re z, Im z)`.
pub fn real_embed(lambda: C64) -> Matrix {
    Matrix::from_real_rows(&[[lambda.re, -lambda.im], [lambda.im, lambda.re]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, complex: bool) -> Matrix {
        let data = (0..rows * cols)
            .map(|_| {
                let im = if complex { rng.random_range(-1.0..1.0) } else { 0.0 };
                c64(rng.random_range(-1.0..1.0), im)
            })
            .collect();
        Matrix::new(rows, cols, data).unwrap()
    }

    #[test]
    fn new_rejects_bad_input() {
        assert!(matches!(
            Matrix::new(2, 2, vec![c64(0.0, 0.0); 3]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            Matrix::new(1, 1, vec![c64(f64::NAN, 0.0)]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn mat_mul_identity_and_rotation() {
        let m = Matrix::from_real_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(mat_mul(&Matrix::identity(2), &m).unwrap(), m);

        let rot = Matrix::from_real_rows(&[[0.0, 1.0], [-1.0, 0.0]]);
        let sq = mat_mul(&rot, &rot).unwrap();
        assert_eq!(sq, Matrix::from_real_rows(&[[-1.0, 0.0], [0.0, -1.0]]));
    }

    #[test]
    fn mat_mul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_matrix(&mut rng, 3, 3, true);
        let b = random_matrix(&mut rng, 3, 3, true);
        let p = mat_mul(&a, &b).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = C64::default();
                for k in 0..3 {
                    s += a.as_slice()[i * 3 + k] * b.as_slice()[k * 3 + j];
                }
                assert!((p[(i, j)] - s).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn mat_mul_dimension_mismatch() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        assert!(matches!(mat_mul(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn lu_solve_identity_and_diagonal() {
        let b = Matrix::from_real_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        assert_eq!(lu_solve(&Matrix::identity(3), &b).unwrap(), b);

        let a = Matrix::from_real_rows(&[[2.0, 0.0], [0.0, 4.0]]);
        let x = lu_solve(&a, &Matrix::real_column(&[1.0, 1.0])).unwrap();
        assert_eq!(x, Matrix::real_column(&[0.5, 0.25]));
    }

    #[test]
    fn lu_solve_random_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            // Diagonal shift keeps the draw well conditioned.
            let a = random_matrix(&mut rng, 5, 5, true)
                .add(&Matrix::identity(5).scale(c64(3.0, 0.0)))
                .unwrap();
            let b = random_matrix(&mut rng, 5, 2, true);
            let x = lu_solve(&a, &b).unwrap();
            let r = mat_mul(&a, &x).unwrap().sub(&b).unwrap().norm_fro();
            assert!(r <= 1e-10 * b.norm_fro().max(1.0), "residual {r}");
        }
    }

    #[test]
    fn lu_detects_singularity() {
        let a = Matrix::from_real_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        assert!(matches!(
            lu_solve(&a, &Matrix::real_column(&[1.0, 1.0])),
            Err(Error::SingularMatrix { .. })
        ));
        assert!(matches!(
            lu_solve(&Matrix::zeros(2, 2), &Matrix::real_column(&[1.0, 1.0])),
            Err(Error::SingularMatrix { .. })
        ));
    }

    #[test]
    fn kron_cases() {
        let ones = Matrix::real_column(&[1.0, 1.0]);
        assert_eq!(kron(&ones, &Matrix::identity(1)), ones);

        let (l1, l2) = (c64(0.3, 0.1), c64(-0.2, 0.0));
        let k = kron(&Matrix::from_diag(&[l1, l2]), &Matrix::identity(2));
        assert_eq!(k, Matrix::from_diag(&[l1, l1, l2, l2]));
    }

    #[test]
    fn kron_matches_blockwise_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 2, 2, true);
        let b = random_matrix(&mut rng, 2, 2, true);
        let k = kron(&a, &b);
        assert_eq!(k.shape(), (4, 4));
        for bi in 0..2 {
            for bj in 0..2 {
                let block = b.scale(a[(bi, bj)]);
                for r in 0..2 {
                    for c in 0..2 {
                        assert_eq!(k[(2 * bi + r, 2 * bj + c)], block[(r, c)]);
                    }
                }
            }
        }
    }

    #[test]
    fn sylvester_scalar_and_zero() {
        let d = Matrix::from_real_rows(&[[0.5]]);
        let a = Matrix::from_real_rows(&[[0.2]]);
        let m = solve_sylvester(&d, &a, &Matrix::from_real_rows(&[[0.3]])).unwrap();
        assert!((m[(0, 0)] - c64(1.0, 0.0)).norm() < 1e-15);

        let d = Matrix::from_diag(&[c64(1.0, 0.0), c64(2.0, 0.0)]);
        let a = Matrix::from_diag(&[c64(0.5, 0.0)]);
        let m = solve_sylvester(&d, &a, &Matrix::zeros(1, 2)).unwrap();
        assert_eq!(m.max_abs(), 0.0);
    }

    #[test]
    fn sylvester_detects_shared_eigenvalue() {
        let d = Matrix::from_diag(&[c64(0.5, 0.0), c64(2.0, 0.0)]);
        let a = Matrix::from_diag(&[c64(0.5, 0.0)]);
        let r = solve_sylvester(&d, &a, &Matrix::from_real_rows(&[[1.0, 1.0]]));
        assert!(matches!(r, Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn real_embed_blocks() {
        assert_eq!(
            real_embed(c64(0.9, 0.0)),
            Matrix::from_real_rows(&[[0.9, 0.0], [0.0, 0.9]])
        );
        assert_eq!(
            real_embed(c64(0.0, 1.0)),
            Matrix::from_real_rows(&[[0.0, -1.0], [1.0, 0.0]])
        );
        let blk = real_embed(c64(0.3, 0.4));
        let gram = mat_mul(&blk.transpose(), &blk).unwrap();
        let expected = Matrix::identity(2).scale(c64(0.25, 0.0));
        assert!(gram.sub(&expected).unwrap().max_abs() < 1e-15);
        assert!((blk.spectral_norm() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn spectral_norm_of_known_matrices() {
        let a = Matrix::from_real_rows(&[[3.0, 0.0], [0.0, -5.0]]);
        assert!((a.spectral_norm() - 5.0).abs() < 1e-12);
        let ones = Matrix::real_column(&[1.0, 1.0, 1.0]);
        assert!((ones.spectral_norm() - 3f64.sqrt()).abs() < 1e-14);
        assert_eq!(Matrix::zeros(2, 2).spectral_norm(), 0.0);
    }

    #[test]
    fn serde_round_trip_is_bit_faithful() {
        let m = Matrix::from_rows(&[[c64(0.1, 0.0), c64(1.0 / 3.0, -2.0e-17)], [
            c64(std::f64::consts::PI, 1e300),
            c64(-0.0, 5e-324),
        ]]);
        let s = serde_json::to_string(&m).unwrap();
        let back: Matrix = serde_json::from_str(&s).unwrap();
        for (a, b) in m.as_slice().iter().zip(back.as_slice()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        assert!(serde_json::from_str::<Matrix>("[[1.0, 2.0], [3.0]]").is_err());
    }

    #[test]
    fn spectrum_info_radius() {
        let s = SpectrumInfo::from_eigenvalues(vec![c64(0.3, 0.4), c64(-0.7, 0.0)]);
        assert_eq!(s.spectral_radius, 0.7);
    }
}
