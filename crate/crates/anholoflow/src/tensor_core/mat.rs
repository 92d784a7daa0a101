//! Small dense matrices and index tables over any [`Real`].

use super::dual::{Dual, Real};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn diag(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    pub fn from_f64(m: &Mat<f64>) -> Self {
        Mat { rows: m.rows, cols: m.cols, data: m.data.iter().map(|&x| T::cst(x)).collect() }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, o: &Mat<T>) -> Self {
        assert_eq!(self.cols, o.rows);
        let mut out = Self::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..o.cols {
                    out[(i, j)] += a * o[(k, j)];
                }
            }
        }
        out
    }

    pub fn add(&self, o: &Mat<T>) -> Self {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&o.data).map(|(&a, &b)| a + b).collect() }
    }

    pub fn sub(&self, o: &Mat<T>) -> Self {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&o.data).map(|(&a, &b)| a - b).collect() }
    }

    pub fn scale(&self, s: T) -> Self {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&a| a * s).collect() }
    }

    pub fn values(&self) -> Mat<f64> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a.val()).collect() }
    }

    /// Determinant by partial-pivot elimination (pivots chosen on values).
    pub fn det(&self) -> T {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.clone();
        let mut det = T::one();
        for c in 0..n {
            let p = (c..n)
                .max_by(|&x, &y| a[(x, c)].val().abs().total_cmp(&a[(y, c)].val().abs()))
                .unwrap();
            if a[(p, c)].val() == 0.0 {
                return T::zero();
            }
            if p != c {
                for j in 0..n {
                    a.data.swap(p * n + j, c * n + j);
                }
                det = -det;
            }
            let piv = a[(c, c)];
            det *= piv;
            for r in c + 1..n {
                let f = a[(r, c)] / piv;
                for j in c..n {
                    let t = a[(c, j)];
                    a[(r, j)] -= f * t;
                }
            }
        }
        det
    }

    /// Inverse by Gauss-Jordan elimination; fails when `|det| ≤ 1e-12`.
    pub fn inverse(&self) -> Result<Self> {
        let det = self.det().val();
        if !(det.abs() > DEGENERACY_TOL) {
            return Err(Error::SingularMetric { det });
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        for c in 0..n {
            let p = (c..n)
                .max_by(|&x, &y| a[(x, c)].val().abs().total_cmp(&a[(y, c)].val().abs()))
                .unwrap();
            if p != c {
                for j in 0..n {
                    a.data.swap(p * n + j, c * n + j);
                    inv.data.swap(p * n + j, c * n + j);
                }
            }
            let piv = a[(c, c)].recip();
            for j in 0..n {
                a[(c, j)] *= piv;
                inv[(c, j)] *= piv;
            }
            for r in 0..n {
                if r == c {
                    continue;
                }
                let f = a[(r, c)];
                for j in 0..n {
                    let t = a[(c, j)];
                    a[(r, j)] -= f * t;
                    let t = inv[(c, j)];
                    inv[(r, j)] -= f * t;
                }
            }
        }
        Ok(inv)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.val().abs()))
    }

    pub fn symmetry_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i {
                d = d.max((self[(i, j)] - self[(j, i)]).val().abs());
            }
        }
        d
    }
}

impl<T: Real> Mat<Dual<T>> {
    pub fn re(&self) -> Mat<T> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|d| d.re).collect() }
    }
    pub fn eps(&self) -> Mat<T> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|d| d.eps).collect() }
    }
}

impl<T> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Mat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Dense multi-index table, row-major over `shape`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter().zip(&self.shape).fold(0, |o, (&i, &s)| {
            debug_assert!(i < s);
            o * s + i
        })
    }

    pub fn at(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: T) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.val().abs()))
    }

    pub fn values(&self) -> Tensor<f64> {
        self.map(|x| x.val())
    }
}

impl Tensor<f64> {
    pub fn max_diff(&self, o: &Tensor<f64>) -> f64 {
        assert_eq!(self.shape, o.shape);
        self.data.iter().zip(&o.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl Mat<f64> {
    pub fn max_diff(&self, o: &Mat<f64>) -> f64 {
        self.data.iter().zip(&o.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}
