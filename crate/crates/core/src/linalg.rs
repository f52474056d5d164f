//! Fixed-capacity dense vectors and matrices for the small dimensions the
//! model manifolds live in. Everything is stack allocated; the active
//! dimension is carried alongside the storage.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

/// Largest manifold dimension supported by the engine.
pub const MAX_DIM: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vector {
    n: usize,
    data: [f64; MAX_DIM],
}

impl Vector {
    #[inline]
    pub fn zeros(n: usize) -> Self {
        assert!(n <= MAX_DIM, "dimension {n} exceeds MAX_DIM");
        Self { n, data: [0.0; MAX_DIM] }
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let mut out = Self::zeros(v.len());
        out.data[..v.len()].copy_from_slice(v);
        out
    }

    pub fn basis(n: usize, i: usize) -> Self {
        let mut out = Self::zeros(n);
        out.data[i] = 1.0;
        out
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data[..self.n]
    }

    #[inline]
    pub fn dot(&self, other: &Self) -> f64 {
        let mut s = 0.0;
        for i in 0..MAX_DIM {
            s += self.data[i] * other.data[i];
        }
        s
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    #[inline]
    pub fn scale(&self, c: f64) -> Self {
        let mut out = *self;
        for i in 0..MAX_DIM {
            out.data[i] *= c;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.as_slice().iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    #[inline]
    fn index(&self, i: usize) -> &f64 {
        debug_assert!(i < self.n);
        &self.data[i]
    }
}

impl IndexMut<usize> for Vector {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        debug_assert!(i < self.n);
        &mut self.data[i]
    }
}

impl Add for Vector {
    type Output = Vector;
    #[inline]
    fn add(mut self, rhs: Vector) -> Vector {
        for i in 0..MAX_DIM {
            self.data[i] += rhs.data[i];
        }
        self
    }
}

impl Sub for Vector {
    type Output = Vector;
    #[inline]
    fn sub(mut self, rhs: Vector) -> Vector {
        for i in 0..MAX_DIM {
            self.data[i] -= rhs.data[i];
        }
        self
    }
}

impl AddAssign for Vector {
    #[inline]
    fn add_assign(&mut self, rhs: Vector) {
        for i in 0..MAX_DIM {
            self.data[i] += rhs.data[i];
        }
    }
}

impl SubAssign for Vector {
    #[inline]
    fn sub_assign(&mut self, rhs: Vector) {
        for i in 0..MAX_DIM {
            self.data[i] -= rhs.data[i];
        }
    }
}

impl Neg for Vector {
    type Output = Vector;
    fn neg(self) -> Vector {
        self.scale(-1.0)
    }
}

impl Mul<f64> for Vector {
    type Output = Vector;
    #[inline]
    fn mul(self, c: f64) -> Vector {
        self.scale(c)
    }
}

/// Square matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matrix {
    n: usize,
    data: [[f64; MAX_DIM]; MAX_DIM],
}

impl Matrix {
    #[inline]
    pub fn zeros(n: usize) -> Self {
        assert!(n <= MAX_DIM, "dimension {n} exceeds MAX_DIM");
        Self { n, data: [[0.0; MAX_DIM]; MAX_DIM] }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, c: f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i][i] = c;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n);
            m.data[i][..n].copy_from_slice(r);
        }
        m
    }

    pub fn from_columns(cols: &[Vector]) -> Self {
        let n = cols.len();
        let mut m = Self::zeros(n);
        for (j, c) in cols.iter().enumerate() {
            for i in 0..n {
                m.data[i][j] = c[i];
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn column(&self, j: usize) -> Vector {
        let mut v = Vector::zeros(self.n);
        for i in 0..self.n {
            v[i] = self.data[i][j];
        }
        v
    }

    #[inline]
    pub fn set_column(&mut self, j: usize, v: &Vector) {
        for i in 0..self.n {
            self.data[i][j] = v[i];
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.data[j][i] = self.data[i][j];
            }
        }
        t
    }

    #[inline]
    pub fn mat_vec(&self, v: &Vector) -> Vector {
        let mut out = Vector::zeros(self.n);
        for i in 0..MAX_DIM {
            let mut s = 0.0;
            for j in 0..MAX_DIM {
                s += self.data[i][j] * v.data[j];
            }
            out.data[i] = s;
        }
        out
    }

    /// `selfᵀ v`
    #[inline]
    pub fn tr_vec(&self, v: &Vector) -> Vector {
        let mut out = Vector::zeros(self.n);
        for j in 0..MAX_DIM {
            let mut s = 0.0;
            for i in 0..MAX_DIM {
                s += self.data[i][j] * v.data[i];
            }
            out.data[j] = s;
        }
        out
    }

    #[inline]
    pub fn mat_mul(&self, other: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(self.n);
        for i in 0..MAX_DIM {
            for k in 0..MAX_DIM {
                let a = self.data[i][k];
                for j in 0..MAX_DIM {
                    out.data[i][j] += a * other.data[k][j];
                }
            }
        }
        out
    }

    #[inline]
    pub fn scale(&self, c: f64) -> Matrix {
        let mut out = *self;
        for i in 0..MAX_DIM {
            for j in 0..MAX_DIM {
                out.data[i][j] *= c;
            }
        }
        out
    }

    /// `½(A + Aᵀ)`
    pub fn symmetric_part(&self) -> Matrix {
        let mut out = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                out.data[i][j] = 0.5 * (self.data[i][j] + self.data[j][i]);
            }
        }
        out
    }

    /// Bilinear form `aᵀ M b`.
    pub fn quad(&self, a: &Vector, b: &Vector) -> f64 {
        a.dot(&self.mat_vec(b))
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0_f64;
        for i in 0..self.n {
            for j in 0..self.n {
                m = m.max(self.data[i][j].abs());
            }
        }
        m
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        (*self - *other).max_abs()
    }

    /// Lower-triangular Cholesky factor, `None` unless the matrix is
    /// symmetric positive definite.
    pub fn cholesky(&self) -> Option<Matrix> {
        let n = self.n;
        let mut l = Matrix::zeros(n);
        for j in 0..n {
            let mut d = self.data[j][j];
            for k in 0..j {
                d -= l.data[j][k] * l.data[j][k];
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l.data[j][j] = djj;
            for i in (j + 1)..n {
                let mut s = self.data[i][j];
                for k in 0..j {
                    s -= l.data[i][k] * l.data[j][k];
                }
                l.data[i][j] = s / djj;
            }
        }
        Some(l)
    }

    /// Inverse of a symmetric positive definite matrix.
    pub fn spd_inverse(&self) -> Option<Matrix> {
        let l = self.cholesky()?;
        let n = self.n;
        let mut inv = Matrix::zeros(n);
        for col in 0..n {
            let mut y = Vector::zeros(n);
            for i in 0..n {
                let mut s = if i == col { 1.0 } else { 0.0 };
                for k in 0..i {
                    s -= l.data[i][k] * y[k];
                }
                y[i] = s / l.data[i][i];
            }
            let mut x = Vector::zeros(n);
            for i in (0..n).rev() {
                let mut s = y[i];
                for k in (i + 1)..n {
                    s -= l.data[k][i] * x[k];
                }
                x[i] = s / l.data[i][i];
            }
            inv.set_column(col, &x);
        }
        Some(inv)
    }

    /// Eigenvalues of a symmetric matrix in ascending order (cyclic Jacobi).
    pub fn symmetric_eigenvalues(&self) -> Vector {
        let n = self.n;
        let mut a = self.symmetric_part();
        for _sweep in 0..64 {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a.data[i][j] * a.data[i][j];
                }
            }
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.data[p][q];
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a.data[q][q] - a.data[p][p]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.data[k][p];
                        let akq = a.data[k][q];
                        a.data[k][p] = c * akp - s * akq;
                        a.data[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a.data[p][k];
                        let aqk = a.data[q][k];
                        a.data[p][k] = c * apk - s * aqk;
                        a.data[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a.data[i][i]).collect();
        ev.sort_by(|x, y| x.total_cmp(y));
        Vector::from_slice(&ev)
    }

    /// Spectral (operator 2-) norm.
    pub fn operator_norm(&self) -> f64 {
        let ata = self.transpose().mat_mul(self);
        let ev = ata.symmetric_eigenvalues();
        ev[self.n - 1].max(0.0).sqrt()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i][j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i][j]
    }
}

impl Add for Matrix {
    type Output = Matrix;
    #[inline]
    fn add(mut self, rhs: Matrix) -> Matrix {
        for i in 0..MAX_DIM {
            for j in 0..MAX_DIM {
                self.data[i][j] += rhs.data[i][j];
            }
        }
        self
    }
}

impl Sub for Matrix {
    type Output = Matrix;
    #[inline]
    fn sub(mut self, rhs: Matrix) -> Matrix {
        for i in 0..MAX_DIM {
            for j in 0..MAX_DIM {
                self.data[i][j] -= rhs.data[i][j];
            }
        }
        self
    }
}

impl Mul for Matrix {
    type Output = Matrix;
    #[inline]
    fn mul(self, rhs: Matrix) -> Matrix {
        self.mat_mul(&rhs)
    }
}

/// Rank-3 array indexed `[k][i][j]`, used for Christoffel symbols `Γ^k_{ij}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tensor3 {
    n: usize,
    pub data: [[[f64; MAX_DIM]; MAX_DIM]; MAX_DIM],
}

impl Tensor3 {
    #[inline]
    pub fn zeros(n: usize) -> Self {
        Self { n, data: [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM] }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[k][i][j]
    }

    #[inline]
    pub fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        self.data[k][i][j] = v;
    }

    /// `Γ^k_{ij} a^i b^j` as a vector in `k`.
    #[inline]
    pub fn contract(&self, a: &Vector, b: &Vector) -> Vector {
        let n = self.n;
        let mut out = Vector::zeros(n);
        for k in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                let ai = a[i];
                if ai == 0.0 {
                    continue;
                }
                for j in 0..n {
                    s += self.data[k][i][j] * ai * b[j];
                }
            }
            out[k] = s;
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        let mut m = 0.0_f64;
        for k in 0..self.n {
            for i in 0..self.n {
                for j in 0..self.n {
                    m = m.max((self.data[k][i][j] - other.data[k][i][j]).abs());
                }
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.max_abs_diff(&Tensor3::zeros(self.n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_and_inverse() {
        let a = Matrix::from_rows(&[&[4.0, 1.0, 0.5], &[1.0, 3.0, 0.2], &[0.5, 0.2, 2.0]]);
        let inv = a.spd_inverse().unwrap();
        assert!((a * inv).max_abs_diff(&Matrix::identity(3)) < 1e-14);
        let not_pd = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]);
        assert!(not_pd.cholesky().is_none());
    }

    #[test]
    fn jacobi_eigenvalues() {
        let a = Matrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let ev = a.symmetric_eigenvalues();
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
        let r = Matrix::from_rows(&[&[0.0, -2.0], &[2.0, 0.0]]);
        assert!((r.operator_norm() - 2.0).abs() < 1e-14);
    }
}
