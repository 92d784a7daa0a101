//! Uniform tensor lattices, finite-difference stencils and trapezoidal weights.

use crate::dgeometry::JetField;
use crate::error::{Error, Result};
use crate::tensor_core::Mat;
use serde::{Deserialize, Serialize};

/// Default number of points per derivative stencil.
pub const DEFAULT_STENCIL: usize = 3;

fn default_stencil() -> usize {
    DEFAULT_STENCIL
}

/// Weights `c[k][j]` for the `k`-th derivative at `z` from samples at `x[j]`.
pub fn fornberg_weights(z: f64, x: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    if n == 0 {
        return c;
    }
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lattice {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub counts: Vec<usize>,
    /// Points per stencil, clipped to the axis length.
    #[serde(default = "default_stencil")]
    pub stencil: usize,
}

/// First- and second-derivative weights for one node along one axis.
#[derive(Clone, Debug)]
pub struct Stencil {
    pub start: usize,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

impl Lattice {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        let l = Lattice { lo, hi, counts, stencil: DEFAULT_STENCIL };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.len() != self.hi.len() || self.lo.len() != self.counts.len() {
            return Err(Error::config("grid", "lo, hi and counts must have the same length"));
        }
        if self.stencil < 3 {
            return Err(Error::config("stencil", "needs at least 3 points"));
        }
        for (ax, &k) in self.counts.iter().enumerate() {
            if k == 0 {
                return Err(Error::config("grid", format!("axis {ax} has no nodes")));
            }
            if k > 1 && !(self.hi[ax] > self.lo[ax]) {
                return Err(Error::config("grid", format!("axis {ax} needs hi > lo")));
            }
        }
        Ok(())
    }

    /// The box `domain` with `counts` nodes per axis.
    pub fn over(domain: &[(f64, f64)], counts: &[usize]) -> Result<Self> {
        if domain.len() != counts.len() {
            return Err(Error::Dimension { expected: domain.len(), got: counts.len() });
        }
        Lattice::new(domain.iter().map(|d| d.0).collect(), domain.iter().map(|d| d.1).collect(), counts.to_vec())
    }

    pub fn with_stencil(mut self, points: usize) -> Result<Self> {
        self.stencil = points;
        self.validate()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major multi-index of a node, last axis fastest.
    pub fn multi(&self, mut node: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for ax in (0..self.dim()).rev() {
            idx[ax] = node % self.counts[ax];
            node /= self.counts[ax];
        }
        idx
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.counts).fold(0, |o, (&i, &k)| o * k + i)
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        let k = self.counts[axis];
        if k < 2 {
            0.0
        } else {
            (self.hi[axis] - self.lo[axis]) / (k - 1) as f64
        }
    }

    pub fn coord(&self, axis: usize, k: usize) -> f64 {
        if self.counts[axis] == 1 {
            0.5 * (self.lo[axis] + self.hi[axis])
        } else {
            self.lo[axis] + k as f64 * self.spacing(axis)
        }
    }

    pub fn point(&self, node: usize) -> Vec<f64> {
        self.multi(node).iter().enumerate().map(|(ax, &k)| self.coord(ax, k)).collect()
    }

    /// Tensor-product trapezoid weight; single-node axes contribute 1.
    pub fn weight(&self, node: usize) -> f64 {
        self.multi(node)
            .iter()
            .enumerate()
            .map(|(ax, &k)| {
                let c = self.counts[ax];
                if c == 1 {
                    1.0
                } else if k == 0 || k == c - 1 {
                    0.5 * self.spacing(ax)
                } else {
                    self.spacing(ax)
                }
            })
            .product()
    }

    /// `stencils()[axis][k]`.
    pub fn stencils(&self) -> Vec<Vec<Stencil>> {
        (0..self.dim())
            .map(|ax| {
                let c = self.counts[ax];
                let w = c.min(self.stencil);
                (0..c)
                    .map(|k| {
                        if c == 1 {
                            return Stencil { start: 0, d1: vec![0.0], d2: vec![0.0] };
                        }
                        let start = k.saturating_sub(w / 2).min(c - w);
                        let xs: Vec<f64> = (start..start + w).map(|j| self.coord(ax, j)).collect();
                        let wt = fornberg_weights(self.coord(ax, k), &xs, 2);
                        Stencil { start, d1: wt[1].clone(), d2: wt[2].clone() }
                    })
                    .collect()
            })
            .collect()
    }

    /// Value, gradient and Hessian of a scalar lattice function at `node`.
    pub fn scalar_jet(&self, st: &[Vec<Stencil>], f: &[f64], node: usize) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
        let d = self.dim();
        let idx = self.multi(node);
        let mut grad = vec![0.0; d];
        let mut hess = vec![vec![0.0; d]; d];
        for a in 0..d {
            if self.counts[a] == 1 {
                continue;
            }
            let sa = &st[a][idx[a]];
            let mut j = idx.clone();
            for (t, (w1, w2)) in sa.d1.iter().zip(&sa.d2).enumerate() {
                j[a] = sa.start + t;
                let v = f[self.flat(&j)];
                grad[a] += w1 * v;
                hess[a][a] += w2 * v;
            }
            for b in a + 1..d {
                if self.counts[b] == 1 {
                    continue;
                }
                let sb = &st[b][idx[b]];
                let mut s = 0.0;
                let mut j = idx.clone();
                for (ta, wa) in sa.d1.iter().enumerate() {
                    j[a] = sa.start + ta;
                    for (tb, wb) in sb.d1.iter().enumerate() {
                        j[b] = sb.start + tb;
                        s += wa * wb * f[self.flat(&j)];
                    }
                }
                hess[a][b] = s;
                hess[b][a] = s;
            }
        }
        (f[node], grad, hess)
    }

    /// Quadratic Taylor model of a matrix-valued lattice function at `node`.
    pub fn mat_jet(&self, st: &[Vec<Stencil>], f: &[Mat<f64>], node: usize) -> JetField {
        let d = self.dim();
        let s = f[node].rows;
        let center = self.point(node);
        let mut jet = JetField::zero(s, &center);
        let mut comp = vec![0.0; f.len()];
        for i in 0..s {
            for j in 0..s {
                for (c, m) in comp.iter_mut().zip(f) {
                    *c = m[(i, j)];
                }
                let (v, g, h) = self.scalar_jet(st, &comp, node);
                jet.value[(i, j)] = v;
                for a in 0..d {
                    jet.grad[a][(i, j)] = g[a];
                    for b in 0..d {
                        jet.hess[a][b][(i, j)] = h[a][b];
                    }
                }
            }
        }
        jet
    }

    /// Parses `17x1x1x1` or `17,1,1,1` into node counts.
    pub fn parse_counts(spec: &str) -> Result<Vec<usize>> {
        spec.split(|c| c == 'x' || c == ',')
            .map(|t| t.trim().parse::<usize>().map_err(|e| Error::config("grid", format!("`{t}`: {e}"))))
            .collect()
    }
}
