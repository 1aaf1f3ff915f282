//! Small dense square matrices stored inline.
//!
//! Every group in this crate is `SO(n)` with `n <= 6`, so a fixed
//! 36-slot array avoids heap traffic in the hot simulation loops.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Largest supported matrix order.
pub const MAX_DIM: usize = 6;
const CAP: usize = MAX_DIM * MAX_DIM;

/// Row-major `n x n` matrix with `n <= MAX_DIM`.
#[derive(Clone, Copy, PartialEq)]
pub struct Mat {
    n: usize,
    a: [f64; CAP],
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat({}x{})", self.n, self.n)?;
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n)
                .map(|j| format!("{:+.6}", self[(i, j)]))
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1 && n <= MAX_DIM, "matrix order {n} unsupported");
        Mat { n, a: [0.0; CAP] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds from a row-major slice of length `n * n`.
    pub fn from_row_slice(n: usize, s: &[f64]) -> Self {
        assert_eq!(s.len(), n * n);
        let mut m = Self::zeros(n);
        m.a[..n * n].copy_from_slice(s);
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, v) in d.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// `E_ij`: one at `(i, j)`, zero elsewhere.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(n);
        m[(i, j)] = 1.0;
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.a[..self.n * self.n]
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.as_slice().to_vec()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        for v in &mut m.a[..self.n * self.n] {
            *v *= s;
        }
        m
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn norm_fro(&self) -> f64 {
        self.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn dist_fro(&self, other: &Mat) -> f64 {
        (*self - *other).norm_fro()
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|v| v.is_finite())
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self[(i, j)]).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[f64]) {
        for (i, x) in v.iter().enumerate() {
            self[(i, j)] = *x;
        }
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    /// `[A, B] = AB - BA`.
    pub fn commutator(&self, other: &Mat) -> Mat {
        *self * *other - *other * *self
    }

    pub fn symmetrize(&self) -> Mat {
        (*self + self.transpose()).scale(0.5)
    }

    pub fn skew_part(&self) -> Mat {
        (*self - self.transpose()).scale(0.5)
    }

    /// Determinant by partial-pivot elimination.
    pub fn det(&self) -> f64 {
        let n = self.n;
        let mut m = *self;
        let mut det = 1.0;
        for c in 0..n {
            let p = (c..n)
                .max_by(|&x, &y| m[(x, c)].abs().total_cmp(&m[(y, c)].abs()))
                .unwrap();
            if m[(p, c)] == 0.0 {
                return 0.0;
            }
            if p != c {
                for j in 0..n {
                    let t = m[(c, j)];
                    m[(c, j)] = m[(p, j)];
                    m[(p, j)] = t;
                }
                det = -det;
            }
            det *= m[(c, c)];
            for r in c + 1..n {
                let f = m[(r, c)] / m[(c, c)];
                for j in c..n {
                    m[(r, j)] -= f * m[(c, j)];
                }
            }
        }
        det
    }

    /// Gauss-Jordan inverse; `None` when numerically singular.
    pub fn inverse(&self) -> Option<Mat> {
        let n = self.n;
        let mut m = *self;
        let mut inv = Mat::identity(n);
        let scale = self.norm_inf().max(f64::MIN_POSITIVE);
        for c in 0..n {
            let p = (c..n)
                .max_by(|&x, &y| m[(x, c)].abs().total_cmp(&m[(y, c)].abs()))
                .unwrap();
            if m[(p, c)].abs() <= 1e-14 * scale {
                return None;
            }
            if p != c {
                for j in 0..n {
                    m.a.swap(c * n + j, p * n + j);
                    inv.a.swap(c * n + j, p * n + j);
                }
            }
            let d = m[(c, c)];
            for j in 0..n {
                m[(c, j)] /= d;
                inv[(c, j)] /= d;
            }
            for r in 0..n {
                if r != c {
                    let f = m[(r, c)];
                    if f != 0.0 {
                        for j in 0..n {
                            m[(r, j)] -= f * m[(c, j)];
                            inv[(r, j)] -= f * inv[(c, j)];
                        }
                    }
                }
            }
        }
        Some(inv)
    }

    /// Modified Gram-Schmidt on the columns; returns `None` on rank loss.
    pub fn orthonormalize_columns(&self) -> Option<Mat> {
        let n = self.n;
        let mut q = *self;
        for j in 0..n {
            for k in 0..j {
                let dot: f64 = (0..n).map(|i| q[(i, k)] * q[(i, j)]).sum();
                for i in 0..n {
                    q[(i, j)] -= dot * q[(i, k)];
                }
            }
            let nrm: f64 = (0..n).map(|i| q[(i, j)] * q[(i, j)]).sum::<f64>().sqrt();
            if nrm < 1e-12 {
                return None;
            }
            for i in 0..n {
                q[(i, j)] /= nrm;
            }
        }
        Some(q)
    }

    /// Symmetric eigendecomposition by cyclic Jacobi rotations.
    ///
    /// Eigenvalues are sorted in descending order; column `k` of the returned
    /// matrix is the eigenvector for eigenvalue `k`.
    pub fn symmetric_eigen(&self) -> (Vec<f64>, Mat) {
        let n = self.n;
        let mut a = self.symmetrize();
        let mut v = Mat::identity(n);
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)] * a[(i, j)])
                .sum();
            let total = a.norm_fro().max(f64::MIN_POSITIVE);
            if off.sqrt() <= 1e-15 * total {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq.abs() <= 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
        let vals = order.iter().map(|&i| a[(i, i)]).collect();
        let vecs = Mat::from_fn(n, |r, c| v[(r, order[c])]);
        (vals, vecs)
    }

    /// Positive semidefinite square root; negative eigenvalues are clipped to zero.
    pub fn psd_sqrt(&self) -> Mat {
        let (vals, vecs) = self.symmetric_eigen();
        let mut out = Mat::zeros(self.n);
        for (k, lam) in vals.iter().enumerate() {
            let s = lam.max(0.0).sqrt();
            if s == 0.0 {
                continue;
            }
            for i in 0..self.n {
                for j in 0..self.n {
                    out[(i, j)] += s * vecs[(i, k)] * vecs[(j, k)];
                }
            }
        }
        out
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.n && j < self.n);
        &self.a[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.n && j < self.n);
        &mut self.a[i * self.n + j]
    }
}

impl Mul for Mat {
    type Output = Mat;
    #[inline]
    fn mul(self, rhs: Mat) -> Mat {
        debug_assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = Mat { n, a: [0.0; CAP] };
        for i in 0..n {
            for k in 0..n {
                let aik = self.a[i * n + k];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.a[i * n + j] += aik * rhs.a[k * n + j];
                }
            }
        }
        out
    }
}

impl Add for Mat {
    type Output = Mat;
    fn add(mut self, rhs: Mat) -> Mat {
        debug_assert_eq!(self.n, rhs.n);
        for (a, b) in self.a[..self.n * self.n].iter_mut().zip(&rhs.a) {
            *a += b;
        }
        self
    }
}

impl AddAssign for Mat {
    fn add_assign(&mut self, rhs: Mat) {
        *self = *self + rhs;
    }
}

impl Sub for Mat {
    type Output = Mat;
    fn sub(mut self, rhs: Mat) -> Mat {
        debug_assert_eq!(self.n, rhs.n);
        for (a, b) in self.a[..self.n * self.n].iter_mut().zip(&rhs.a) {
            *a -= b;
        }
        self
    }
}

impl Neg for Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self.scale(-1.0)
    }
}

impl Serialize for Mat {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.as_slice().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mat {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        let n = (v.len() as f64).sqrt().round() as usize;
        if n == 0 || n > MAX_DIM || n * n != v.len() {
            return Err(serde::de::Error::custom(format!(
                "matrix payload of length {} is not a supported square",
                v.len()
            )));
        }
        Ok(Mat::from_row_slice(n, &v))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Mat {
        Mat::from_row_slice(3, &[2.0, -1.0, 0.5, 0.3, 4.0, 1.0, -2.0, 0.7, 3.0])
    }

    #[test]
    fn inverse_roundtrip() {
        let m = sample();
        let inv = m.inverse().unwrap();
        assert!((m * inv).dist_fro(&Mat::identity(3)) < 1e-13);
    }

    #[test]
    fn det_matches_cofactor_expansion() {
        let m = sample();
        let cof = m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
            - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
            + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)]);
        assert!((m.det() - cof).abs() < 1e-12);
    }

    #[test]
    fn singular_inverse_is_none() {
        let m = Mat::from_row_slice(2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(m.inverse().is_none());
    }

    #[test]
    fn jacobi_reconstructs() {
        let s = sample().symmetrize();
        let (vals, v) = s.symmetric_eigen();
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let rec = v * Mat::diag(&vals) * v.transpose();
        assert!(rec.dist_fro(&s) < 1e-12);
        assert!((v.transpose() * v).dist_fro(&Mat::identity(3)) < 1e-12);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let a = Mat::from_row_slice(2, &[2.0, 0.5, 0.5, 1.0]);
        let r = a.psd_sqrt();
        assert!((r * r).dist_fro(&a) < 1e-12);
    }
}
