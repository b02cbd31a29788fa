//! Dense complex linear algebra for small operator matrices.
//!
//! Everything here is sized for desk-scale models (dimensions up to a few
//! hundred): dense row-major storage, double-precision complex entries, no
//! attempt at sparsity. Values are immutable once built and safe to share
//! across threads.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative tolerance used everywhere a matrix is required to be Hermitian.
pub const HERMITICITY_TOL: f64 = 1e-10;

/// Complex column vector of length >= 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CVector {
    data: Vec<Complex64>,
}

impl CVector {
    pub fn new(data: Vec<Complex64>) -> Self {
        assert!(!data.is_empty(), "vector must have length >= 1");
        Self { data }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![Complex64::new(0.0, 0.0); len])
    }

    /// Standard basis vector e_k in dimension `len`.
    pub fn basis(len: usize, k: usize) -> Self {
        assert!(k < len);
        let mut v = Self::zeros(len);
        v.data[k] = Complex64::new(1.0, 0.0);
        v
    }

    pub fn from_real(entries: &[f64]) -> Self {
        Self::new(entries.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Complex64> {
        self.data.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Squared Euclidean norm sum |v_i|^2.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Hermitian inner product <self, other> (conjugate-linear in self).
    pub fn inner(&self, other: &CVector) -> Complex64 {
        assert_eq!(self.len(), other.len(), "inner product length mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scale(&self, c: Complex64) -> CVector {
        CVector::new(self.data.iter().map(|z| z * c).collect())
    }

    /// self += c * other
    pub fn add_scaled(&mut self, c: Complex64, other: &CVector) {
        assert_eq!(self.len(), other.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn normalized(&self) -> Result<CVector> {
        let n = self.norm();
        if n <= 1e-300 {
            return Err(Error::ZeroState);
        }
        Ok(self.scale(Complex64::new(1.0 / n, 0.0)))
    }

    /// Rank-one operator |self><other|.
    pub fn outer(&self, other: &CVector) -> CMatrix {
        let mut m = CMatrix::zeros(self.len(), other.len());
        for i in 0..self.len() {
            for j in 0..other.len() {
                m.data[i * other.len() + j] = self.data[i] * other.data[j].conj();
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for CVector {
    type Output = Complex64;
    fn index(&self, i: usize) -> &Complex64 {
        &self.data[i]
    }
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix shape must be positive");
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::Shape("matrix must have positive shape".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged matrix rows".into()));
        }
        let r = rows.len();
        Ok(Self {
            rows: r,
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        Self::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
                .collect(),
        )
        .expect("caller supplies rectangular data")
    }

    pub fn diag(entries: &[Complex64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &z) in entries.iter().enumerate() {
            m.data[i * n + i] = z;
        }
        m
    }

    pub fn diag_real(entries: &[f64]) -> Self {
        Self::diag(
            &entries
                .iter()
                .map(|&x| Complex64::new(x, 0.0))
                .collect::<Vec<_>>(),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, z: Complex64) {
        self.data[i * self.cols + j] = z;
    }

    /// Matrix-vector product. Errors when shapes do not conform.
    pub fn apply(&self, v: &CVector) -> Result<CVector> {
        if v.len() != self.cols {
            return Err(Error::Shape(format!(
                "cannot apply {}x{} operator to vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = Vec::with_capacity(self.rows);
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            out.push(
                row.iter()
                    .zip(v.as_slice())
                    .map(|(m, x)| m * x)
                    .sum::<Complex64>(),
            );
        }
        Ok(CVector::new(out))
    }

    pub fn mul(&self, other: &CMatrix) -> Result<CMatrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.data[k * other.cols + j];
                }
            }
        }
        Ok(out)
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j].conj();
            }
        }
        out
    }

    /// Gram operator M† M: square, Hermitian, positive semidefinite.
    pub fn gram(&self) -> CMatrix {
        self.adjoint()
            .mul(self)
            .expect("adjoint shapes always conform")
    }

    pub fn add(&self, other: &CMatrix) -> Result<CMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape("matrix addition shape mismatch".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(out)
    }

    /// self += c * other (shapes must conform).
    pub fn add_assign_scaled(&mut self, c: Complex64, other: &CMatrix) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn sub(&self, other: &CMatrix) -> Result<CMatrix> {
        let mut out = self.clone();
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape("matrix subtraction shape mismatch".into()));
        }
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        Ok(out)
    }

    pub fn scale(&self, c: Complex64) -> CMatrix {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    pub fn scale_re(&self, c: f64) -> CMatrix {
        self.scale(Complex64::new(c, 0.0))
    }

    pub fn trace(&self) -> Complex64 {
        assert!(self.is_square());
        (0..self.rows).map(|i| self.data[i * self.cols + i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Max-entry distance to the conjugate transpose (0 for Hermitian input).
    pub fn hermitian_deviation(&self) -> f64 {
        assert!(self.is_square());
        let n = self.rows;
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d = (self.data[i * n + j] - self.data[j * n + i].conj()).norm();
                dev = dev.max(d);
            }
        }
        dev
    }

    pub fn is_hermitian_within(&self, rel_tol: f64) -> bool {
        self.is_square() && self.hermitian_deviation() <= rel_tol * self.max_abs()
    }
}

/// exp(A t) by scaling-and-squaring with a Taylor evaluation of the scaled
/// matrix. Adequate to machine precision for the operator norms used here.
pub fn expm(a: &CMatrix, t: f64) -> Result<CMatrix> {
    if !a.is_square() {
        return Err(Error::NonSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if !t.is_finite() {
        return Err(Error::InvalidArgument("non-finite time in expm".into()));
    }
    let n = a.rows();
    let b = a.scale_re(t);
    // Infinity norm bounds the spectral radius; scale it under 1/2.
    let inf_norm = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| b.get(i, j).norm())
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    let s = if inf_norm > 0.5 {
        (inf_norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let m = b.scale_re(0.5f64.powi(s as i32));

    let mut result = CMatrix::identity(n);
    let mut term = CMatrix::identity(n);
    for k in 1..=40u32 {
        term = term.mul(&m)?.scale_re(1.0 / k as f64);
        result.add_assign_scaled(Complex64::new(1.0, 0.0), &term);
        if term.max_abs() <= 1e-17 * result.max_abs().max(1.0) {
            break;
        }
    }
    for _ in 0..s {
        result = result.mul(&result)?;
    }
    Ok(result)
}

/// exp(A t) v. Used for time-independent generators and as an independent
/// cross-check of the step integrator.
pub fn expm_apply(a: &CMatrix, t: f64, v: &CVector) -> Result<CVector> {
    expm(a, t)?.apply(v)
}

/// Smallest eigenvalue of a Hermitian matrix.
///
/// Rejects input whose deviation from Hermiticity exceeds
/// [`HERMITICITY_TOL`] relative to the largest entry. The eigenvalue is
/// computed by cyclic Jacobi on the real symmetric embedding
/// `[[Re A, -Im A], [Im A, Re A]]`, whose spectrum equals that of A with
/// doubled multiplicity.
pub fn min_eigenvalue_hermitian(m: &CMatrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::NonSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let scale = m.max_abs();
    let dev = m.hermitian_deviation();
    if dev > HERMITICITY_TOL * scale {
        return Err(Error::NotHermitian {
            deviation: dev / scale,
        });
    }
    let n = m.rows();
    let mut sym = vec![0.0f64; 4 * n * n];
    let dim = 2 * n;
    for i in 0..n {
        for j in 0..n {
            // Symmetrize explicitly so round-off in the input cannot leak in.
            let z = 0.5 * (m.get(i, j) + m.get(j, i).conj());
            sym[i * dim + j] = z.re;
            sym[(i + n) * dim + (j + n)] = z.re;
            sym[i * dim + (j + n)] = -z.im;
            sym[(i + n) * dim + j] = z.im;
        }
    }
    let eigs = jacobi_symmetric_eigenvalues(&mut sym, dim);
    Ok(eigs.into_iter().fold(f64::INFINITY, f64::min))
}

/// Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations.
fn jacobi_symmetric_eigenvalues(a: &mut [f64], n: usize) -> Vec<f64> {
    let total: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if total == 0.0 {
        return vec![0.0; n];
    }
    for _sweep in 0..60 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= 1e-14 * total {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}

/// 2x2 Pauli matrices, used by several built-in models and many tests.
pub fn pauli_x() -> CMatrix {
    CMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_rows(vec![
        vec![Complex64::new(0.0, 0.0), Complex64::new(0.0, -1.0)],
        vec![Complex64::new(0.0, 1.0), Complex64::new(0.0, 0.0)],
    ])
    .expect("static shape")
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const I: Complex64 = Complex64::new(0.0, 1.0);

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn apply_identity_and_zero() {
        let id = CMatrix::identity(2);
        let v = CVector::from_real(&[1.0, 0.0]);
        assert_eq!(id.apply(&v).unwrap(), v);

        let z = CMatrix::zeros(2, 2);
        let w = CVector::new(vec![c(0.3, 0.1), c(-2.0, 4.0)]);
        let out = z.apply(&w).unwrap();
        assert_eq!(out.norm(), 0.0);
    }

    #[test]
    fn apply_pauli_x_swaps_basis() {
        let v = CVector::from_real(&[1.0, 0.0]);
        let out = pauli_x().apply(&v).unwrap();
        assert_eq!(out.as_slice(), CVector::from_real(&[0.0, 1.0]).as_slice());
    }

    #[test]
    fn apply_shape_mismatch_errors() {
        let m = CMatrix::zeros(2, 3);
        let v = CVector::zeros(2);
        assert!(matches!(m.apply(&v), Err(Error::Shape(_))));
    }

    #[test]
    fn gram_of_raising_operator() {
        let m = CMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let g = m.gram();
        assert_eq!(g.get(0, 0), c(0.0, 0.0));
        assert_eq!(g.get(1, 1), c(1.0, 0.0));
        assert_eq!(g.get(0, 1), c(0.0, 0.0));
    }

    #[test]
    fn gram_of_scaled_identity() {
        let g = 1.7;
        let m = CMatrix::identity(3).scale_re(g);
        let gram = m.gram();
        for i in 0..3 {
            assert!((gram.get(i, i).re - g * g).abs() < 1e-15);
        }
    }

    #[test]
    fn gram_is_hermitian_psd_for_rectangular_input() {
        // Fixed 3x2 with mixed complex entries.
        let m = CMatrix::from_rows(vec![
            vec![c(0.3, -1.2), c(2.0, 0.4)],
            vec![c(-0.7, 0.1), c(0.0, 1.5)],
            vec![c(1.1, 0.6), c(-0.2, -0.9)],
        ])
        .unwrap();
        let g = m.gram();
        assert!(g.hermitian_deviation() <= 1e-12 * g.max_abs().max(1.0));
        let min = min_eigenvalue_hermitian(&g).unwrap();
        assert!(min >= -1e-12 * g.max_abs());
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let a = CMatrix::zeros(3, 3);
        let v = CVector::new(vec![c(1.0, 2.0), c(0.0, -1.0), c(0.5, 0.5)]);
        let out = expm_apply(&a, 3.7, &v).unwrap();
        for (x, y) in out.iter().zip(v.iter()) {
            assert!((x - y).norm() < 1e-15);
        }
    }

    #[test]
    fn expm_scalar_closed_form() {
        let a = CMatrix::diag_real(&[-0.5]);
        let v = CVector::from_real(&[1.0]);
        let out = expm_apply(&a, 2.0, &v).unwrap();
        assert!((out[0].re - (-1.0f64).exp()).abs() < 1e-14);
        assert!(out[0].im.abs() < 1e-15);
    }

    #[test]
    fn expm_pauli_z_rotation_full_turn() {
        // exp(-i sigma_z/2 * 2*pi) = -identity: global phase, norm preserved.
        let a = pauli_z().scale(c(0.0, -0.5));
        let v = CVector::new(vec![c(0.6, 0.0), c(0.0, 0.8)]);
        let out = expm_apply(&a, 2.0 * std::f64::consts::PI, &v).unwrap();
        assert!((out.norm() - 1.0).abs() < 1e-12);
        for (x, y) in out.iter().zip(v.iter()) {
            assert!((x + y).norm() < 1e-12, "expected global phase -1");
        }
    }

    #[test]
    fn expm_nonsquare_rejected() {
        let a = CMatrix::zeros(2, 3);
        assert!(matches!(
            expm(&a, 1.0),
            Err(Error::NonSquare { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn min_eig_diagonal_and_identity() {
        assert!((min_eigenvalue_hermitian(&CMatrix::diag_real(&[1.0, 2.0])).unwrap() - 1.0).abs() < 1e-12);
        assert!((min_eigenvalue_hermitian(&CMatrix::identity(3)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn min_eig_pauli_x_is_minus_one() {
        let min = min_eigenvalue_hermitian(&pauli_x()).unwrap();
        assert!((min + 1.0).abs() < 1e-12);
    }

    #[test]
    fn min_eig_rejects_non_hermitian() {
        let m = CMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(
            min_eigenvalue_hermitian(&m),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn min_eig_complex_hermitian() {
        // [[2, i], [-i, 2]] has eigenvalues 1 and 3.
        let m = CMatrix::from_rows(vec![
            vec![c(2.0, 0.0), I],
            vec![-I, c(2.0, 0.0)],
        ])
        .unwrap();
        assert!((min_eigenvalue_hermitian(&m).unwrap() - 1.0).abs() < 1e-12);
    }

    fn arb_complex() -> impl Strategy<Value = Complex64> {
        (-3.0f64..3.0, -3.0f64..3.0).prop_map(|(re, im)| c(re, im))
    }

    fn arb_matrix(rows: usize, cols: usize) -> impl Strategy<Value = CMatrix> {
        proptest::collection::vec(arb_complex(), rows * cols).prop_map(move |data| CMatrix {
            rows,
            cols,
            data,
        })
    }

    proptest! {
        #[test]
        fn prop_gram_hermitian_and_psd(m in arb_matrix(3, 2)) {
            let g = m.gram();
            let scale = m.frobenius_norm().powi(2).max(1e-30);
            prop_assert!(g.hermitian_deviation() <= 1e-12 * scale);
            let min = min_eigenvalue_hermitian(&g).unwrap();
            prop_assert!(min >= -1e-12 * scale);
        }

        #[test]
        fn prop_skew_hermitian_expm_preserves_norm(h in arb_matrix(3, 3), t in -2.0f64..2.0) {
            // Build a Hermitian matrix, then A = -iH is skew-Hermitian.
            let herm = h.add(&h.adjoint()).unwrap().scale_re(0.5);
            let a = herm.scale(c(0.0, -1.0));
            let v = CVector::new(vec![c(1.0, 0.5), c(-0.3, 0.2), c(0.0, -1.1)]);
            let out = expm_apply(&a, t, &v).unwrap();
            prop_assert!((out.norm() - v.norm()).abs() < 1e-10 * v.norm());
        }

        #[test]
        fn prop_expm_semigroup(m in arb_matrix(2, 2), s in 0.0f64..1.5, t in 0.0f64..1.5) {
            let a = m.scale_re(0.5);
            let v = CVector::new(vec![c(0.7, -0.2), c(0.1, 0.9)]);
            let one = expm_apply(&a, s + t, &v).unwrap();
            let two = expm_apply(&a, t, &expm_apply(&a, s, &v).unwrap()).unwrap();
            let diff: f64 = one
                .iter()
                .zip(two.iter())
                .map(|(x, y)| (x - y).norm())
                .fold(0.0, f64::max);
            prop_assert!(diff < 1e-9 * one.norm().max(1.0));
        }
    }
}
