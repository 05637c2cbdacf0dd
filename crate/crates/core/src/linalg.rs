//! Dense complex matrices and the handful of Hermitian kernels the solvers need.
//!
//! Everything here is generic over [`Real`] so the kernels can be exercised in
//! `f32` as well as `f64`; the solvers themselves run on the `f64` aliases
//! exported from the crate root.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex;
use num_traits::{Float, FromPrimitive, NumAssign};
use thiserror::Error;

/// Real scalar the linear-algebra kernels are generic over.
pub trait Real:
    Float
    + FromPrimitive
    + NumAssign
    + fmt::Debug
    + fmt::Display
    + fmt::LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Row-major dense complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMat<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> fmt::Debug for CMat<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMat {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.4e}{:+.4e}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl<T: Real> CMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::new(T::zero(), T::zero()); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::new(T::one(), T::zero());
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Column vector from a slice.
    pub fn column(entries: &[Complex<T>]) -> Self {
        Self {
            rows: entries.len(),
            cols: 1,
            data: entries.to_vec(),
        }
    }

    pub fn diag_real(values: &[T]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = Complex::new(v, T::zero());
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex<T>> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[Complex<T>] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_complex(&self, s: Complex<T>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// Largest entry magnitude, zero for an empty matrix.
    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, z| m.max(z.norm()))
    }

    pub fn frobenius_norm_sq(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn is_hermitian(&self, rel_tol: T) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.max_abs();
        let tol = rel_tol * scale;
        for r in 0..self.rows {
            for c in r..self.cols {
                if (self[(r, c)] - self[(c, r)].conj()).norm() > tol {
                    return false;
                }
            }
        }
        true
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self, LinalgError> {
        if self.cols != rhs.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a.re == T::zero() && a.im == T::zero() {
                    continue;
                }
                let rhs_row = rhs.row(k);
                let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · x` for a plain vector `x`.
    pub fn mul_vec(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(self.cols, x.len(), "mul_vec dimension");
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(x)
                    .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + a * b)
            })
            .collect()
    }

    /// `selfᴴ · x` for a plain vector `x`.
    pub fn adjoint_mul_vec(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(self.rows, x.len(), "adjoint_mul_vec dimension");
        let mut out = vec![Complex::new(T::zero(), T::zero()); self.cols];
        for (r, xr) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a.conj() * xr;
            }
        }
        out
    }

    /// Adds `w · v vᴴ` in place.
    pub fn add_outer(&mut self, v: &[Complex<T>], w: T) {
        assert!(self.is_square() && self.rows == v.len(), "add_outer dimension");
        for r in 0..self.rows {
            let vr = v[r] * w;
            for c in 0..self.cols {
                self.data[r * self.cols + c] += vr * v[c].conj();
            }
        }
    }

    pub fn add_identity(&mut self, s: T) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self.data[i * self.cols + i].re += s;
        }
    }

    fn check_same_shape(&self, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "elementwise shape mismatch");
    }
}

impl<T: Real> Index<(usize, usize)> for CMat<T> {
    type Output = Complex<T>;
    fn index(&self, (r, c): (usize, usize)) -> &Complex<T> {
        &self.data[r * self.cols + c]
    }
}

impl<T: Real> IndexMut<(usize, usize)> for CMat<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[r * self.cols + c]
    }
}

impl<T: Real> Add for &CMat<T> {
    type Output = CMat<T>;
    fn add(self, rhs: &CMat<T>) -> CMat<T> {
        self.check_same_shape(rhs);
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<T: Real> Sub for &CMat<T> {
    type Output = CMat<T>;
    fn sub(self, rhs: &CMat<T>) -> CMat<T> {
        self.check_same_shape(rhs);
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl<T: Real> Mul for &CMat<T> {
    type Output = CMat<T>;
    fn mul(self, rhs: &CMat<T>) -> CMat<T> {
        self.matmul(rhs).expect("matmul dimension mismatch")
    }
}

/// Lower-triangular factor `L` with `M = L Lᴴ` and a real positive diagonal.
pub fn cholesky<T: Real>(m: &CMat<T>) -> Result<CMat<T>, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::DimensionMismatch(format!(
            "cholesky of a {}x{} matrix",
            m.rows, m.cols
        )));
    }
    let n = m.rows;
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > T::zero()) || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite {
                index: j,
                pivot: d.to_f64().unwrap_or(f64::NAN),
            });
        }
        let djj = d.sqrt();
        l[(j, j)] = Complex::new(djj, T::zero());
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `M X = B` for Hermitian positive-definite `M`.
pub fn solve_hpd<T: Real>(m: &CMat<T>, b: &CMat<T>) -> Result<CMat<T>, LinalgError> {
    if b.rows != m.rows {
        return Err(LinalgError::DimensionMismatch(format!(
            "rhs has {} rows, matrix is {}x{}",
            b.rows, m.rows, m.cols
        )));
    }
    let l = cholesky(m)?;
    let n = m.rows;
    let mut x = b.clone();
    for col in 0..b.cols {
        // forward: L y = b
        for i in 0..n {
            let mut s = x[(i, col)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, col)];
            }
            x[(i, col)] = s / l[(i, i)].re;
        }
        // backward: Lᴴ x = y
        for i in (0..n).rev() {
            let mut s = x[(i, col)];
            for k in (i + 1)..n {
                s -= l[(k, i)].conj() * x[(k, col)];
            }
            x[(i, col)] = s / l[(i, i)].re;
        }
    }
    Ok(x)
}

/// Natural log-determinant of a Hermitian positive-definite matrix.
pub fn log_det_hpd<T: Real>(m: &CMat<T>) -> Result<T, LinalgError> {
    let l = cholesky(m)?;
    let two = T::one() + T::one();
    Ok((0..m.rows).fold(T::zero(), |acc, i| acc + two * l[(i, i)].re.ln()))
}

/// `‖H F‖²_F`.
pub fn gram_norm_sq<T: Real>(h: &CMat<T>, f: &CMat<T>) -> Result<T, LinalgError> {
    Ok(h.matmul(f)?.frobenius_norm_sq())
}

/// Squared Euclidean norm of `H x` for a plain vector.
pub fn apply_norm_sq<T: Real>(h: &CMat<T>, x: &[Complex<T>]) -> T {
    h.mul_vec(x).iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
}

pub fn vec_norm_sq<T: Real>(x: &[Complex<T>]) -> T {
    x.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
}

/// `xᴴ y`.
pub fn dot_h<T: Real>(x: &[Complex<T>], y: &[Complex<T>]) -> Complex<T> {
    x.iter()
        .zip(y)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + a.conj() * b)
}
