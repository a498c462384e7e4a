//! Small dense 3×3 algebra for the controllers and a banded symmetric
//! positive-definite solver for the beam.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};

use crate::error::{invalid, Result};

pub type Vec3 = [f64; 3];

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: Vec3) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const ZERO: Mat3 = Mat3([[0.0; 3]; 3]);

    pub fn identity() -> Self {
        Self::diag([1.0, 1.0, 1.0])
    }

    pub fn diag(d: Vec3) -> Self {
        Mat3([[d[0], 0.0, 0.0], [0.0, d[1], 0.0], [0.0, 0.0, d[2]]])
    }

    pub fn from_columns(cols: [Vec3; 3]) -> Self {
        let mut m = Mat3::ZERO;
        for (j, col) in cols.iter().enumerate() {
            for i in 0..3 {
                m.0[i][j] = col[i];
            }
        }
        m
    }

    pub fn column(&self, j: usize) -> Vec3 {
        [self.0[0][j], self.0[1][j], self.0[2][j]]
    }

    /// `a bᵀ`
    pub fn outer(a: Vec3, b: Vec3) -> Self {
        let mut m = Mat3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = a[i] * b[j];
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut m = Mat3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = self.0[j][i];
            }
        }
        m
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        [dot(self.0[0], v), dot(self.0[1], v), dot(self.0[2], v)]
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut m = *self;
        m.0.iter_mut().flatten().for_each(|x| *x *= s);
        m
    }

    pub fn det(&self) -> f64 {
        let a = &self.0;
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    }

    /// Adjugate inverse; `None` when the determinant is zero or not finite.
    pub fn inverse(&self) -> Option<Self> {
        let a = &self.0;
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let inv_det = 1.0 / det;
        let mut m = Mat3::ZERO;
        m.0[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) * inv_det;
        m.0[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) * inv_det;
        m.0[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) * inv_det;
        m.0[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) * inv_det;
        m.0[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) * inv_det;
        m.0[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) * inv_det;
        m.0[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) * inv_det;
        m.0[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) * inv_det;
        m.0[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) * inv_det;
        Some(m)
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..3)
            .map(|j| (0..3).map(|i| self.0[i][j].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        libm::sqrt(self.0.iter().flatten().map(|x| x * x).sum())
    }

    /// 1-norm condition number, infinite for singular matrices.
    pub fn condition(&self) -> f64 {
        match self.inverse() {
            Some(inv) => {
                let c = self.norm_one() * inv.norm_one();
                if c.is_finite() {
                    c
                } else {
                    f64::INFINITY
                }
            }
            None => f64::INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }

    /// Solves `A x = b` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: Vec3) -> Option<Vec3> {
        let mut a = self.0;
        let mut b = b;
        for k in 0..3 {
            let p = (k..3)
                .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
                .unwrap_or(k);
            if a[p][k] == 0.0 {
                return None;
            }
            a.swap(k, p);
            b.swap(k, p);
            for i in k + 1..3 {
                let f = a[i][k] / a[k][k];
                for j in k..3 {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = [0.0; 3];
        for i in (0..3).rev() {
            let s: f64 = (i + 1..3).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x.iter().all(|v| v.is_finite()).then_some(x)
    }
}

impl Add for Mat3 {
    type Output = Mat3;
    fn add(self, rhs: Mat3) -> Mat3 {
        let mut m = self;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] += rhs.0[i][j];
            }
        }
        m
    }
}

impl Sub for Mat3 {
    type Output = Mat3;
    fn sub(self, rhs: Mat3) -> Mat3 {
        self + rhs.scaled(-1.0)
    }
}

impl Mul for Mat3 {
    type Output = Mat3;
    fn mul(self, rhs: Mat3) -> Mat3 {
        let mut m = Mat3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = (0..3).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        m
    }
}

/// Symmetric band matrix storing the upper triangle: `band[i][k] = A(i, i + k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self {
            n,
            bandwidth,
            data: vec![0.0; n * (bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        (j - i <= self.bandwidth && j < self.n).then(|| i * (self.bandwidth + 1) + (j - i))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Adds `v` to `A(i, j)` (and, by symmetry, `A(j, i)`).
    ///
    /// Panics if `(i, j)` falls outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside band"));
        self.data[s] += v;
    }

    /// Replaces row and column `i` with the identity row.
    pub fn eliminate(&mut self, i: usize) {
        let lo = i.saturating_sub(self.bandwidth);
        let hi = (i + self.bandwidth).min(self.n - 1);
        for j in lo..=hi {
            if let Some(s) = self.slot(i, j) {
                self.data[s] = 0.0;
            }
        }
        let s = self.slot(i, i).unwrap();
        self.data[s] = 1.0;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let hi = (i + self.bandwidth).min(self.n - 1);
            for j in i..=hi {
                let a = self.get(i, j);
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// Solves `A x = b` by banded Cholesky factorization.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(invalid("right-hand side length mismatch"));
        }
        let w = self.bandwidth;
        let mut u = self.data.clone();
        let at = |i: usize, j: usize| i * (w + 1) + (j - i);
        for j in 0..self.n {
            let lo = j.saturating_sub(w);
            for i in lo..j {
                let klo = lo.max(i.saturating_sub(w));
                let mut s = u[at(i, j)];
                for k in klo..i {
                    s -= u[at(k, i)] * u[at(k, j)];
                }
                u[at(i, j)] = s / u[at(i, i)];
            }
            let mut d = u[at(j, j)];
            for k in lo..j {
                d -= u[at(k, j)] * u[at(k, j)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(invalid("tangent matrix is not positive definite"));
            }
            u[at(j, j)] = libm::sqrt(d);
        }
        // Uᵀ z = b
        let mut x = b.to_vec();
        for i in 0..self.n {
            let lo = i.saturating_sub(w);
            let mut s = x[i];
            for k in lo..i {
                s -= u[at(k, i)] * x[k];
            }
            x[i] = s / u[at(i, i)];
        }
        // U x = z
        for i in (0..self.n).rev() {
            let hi = (i + w).min(self.n - 1);
            let mut s = x[i];
            for k in i + 1..=hi {
                s -= u[at(i, k)] * x[k];
            }
            x[i] = s / u[at(i, i)];
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_diagonal() {
        let m = Mat3::diag([2.0, 4.0, 10.0]);
        let inv = m.inverse().unwrap();
        assert_eq!(inv, Mat3::diag([0.5, 0.25, 0.1]));
        assert_eq!(m.condition(), 5.0);
    }

    #[test]
    fn singular_matrix_has_infinite_condition() {
        let m = Mat3([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 1.0, 1.0]]);
        assert!(m.inverse().is_none());
        assert!(m.condition().is_infinite());
        assert!(m.solve([1.0, 2.0, 3.0]).is_none());
    }

    #[test]
    fn pivoted_solve_matches_inverse() {
        let m = Mat3([[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]]);
        let b = [1.0, -2.0, 0.5];
        let x = m.solve(b).unwrap();
        let y = m.inverse().unwrap().mul_vec(b);
        for i in 0..3 {
            assert!((x[i] - y[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn band_cholesky_matches_dense_product() {
        // Tridiagonal-plus SPD test matrix: 4 on the diagonal, -1 and 0.5 off it.
        let n = 12;
        let mut a = SymBand::zeros(n, 2);
        for i in 0..n {
            a.add(i, i, 4.0);
            if i + 1 < n {
                a.add(i, i + 1, -1.0);
            }
            if i + 2 < n {
                a.add(i, i + 2, 0.5);
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 0.3).collect();
        let b = a.mul_vec(&x_true);
        let x = a.solve(&b).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn band_rejects_indefinite() {
        let mut a = SymBand::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        a.add(0, 1, 2.0);
        assert!(a.solve(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn eliminate_leaves_identity_row() {
        let mut a = SymBand::zeros(4, 3);
        for i in 0..4 {
            for j in i..4 {
                a.add(i, j, 1.0 + (i + j) as f64);
            }
        }
        a.eliminate(2);
        for j in 0..4 {
            assert_eq!(a.get(2, j), if j == 2 { 1.0 } else { 0.0 });
        }
    }
}
