//! Block fields `g_ij(u)` and `h_ab(u)` of a d-metric.

use crate::error::{Error, Result};
use crate::nconnection::vertical_metric_t;
use crate::tensor_core::{Completion, Mat, MetricField, Real};
use serde::{Deserialize, Serialize};

/// One deformation factor `c0 + amp·sin(freq·u^axis)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtaEntry {
    #[serde(default = "one")]
    pub c0: f64,
    #[serde(default)]
    pub amp: f64,
    #[serde(default)]
    pub freq: f64,
    #[serde(default)]
    pub axis: usize,
}

fn one() -> f64 {
    1.0
}

impl Default for EtaEntry {
    fn default() -> Self {
        EtaEntry { c0: 1.0, amp: 0.0, freq: 0.0, axis: 0 }
    }
}

impl EtaEntry {
    pub fn eval<T: Real>(&self, u: &[T]) -> T {
        if self.amp == 0.0 {
            return T::cst(self.c0);
        }
        (u[self.axis] * self.freq).sin() * self.amp + self.c0
    }
}

/// Quadratic Taylor model `v + gᵀδ + ½ δᵀHδ` per component, `δ = u − center`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JetField {
    pub center: Vec<f64>,
    pub value: Mat<f64>,
    /// `grad[α]` is `∂_α` of the block.
    pub grad: Vec<Mat<f64>>,
    /// `hess[α][β]`.
    pub hess: Vec<Vec<Mat<f64>>>,
}

impl JetField {
    pub fn zero(size: usize, center: &[f64]) -> Self {
        let d = center.len();
        JetField {
            center: center.to_vec(),
            value: Mat::zeros(size, size),
            grad: vec![Mat::zeros(size, size); d],
            hess: vec![vec![Mat::zeros(size, size); d]; d],
        }
    }

    pub fn eval<T: Real>(&self, u: &[T]) -> Mat<T> {
        let s = self.value.rows;
        let d = self.center.len();
        let du: Vec<T> = (0..d).map(|k| u[k] - self.center[k]).collect();
        Mat::from_fn(s, s, |i, j| {
            let mut v = T::cst(self.value[(i, j)]);
            for a in 0..d {
                let ga = self.grad[a][(i, j)];
                if ga != 0.0 {
                    v += du[a] * ga;
                }
                for b in 0..d {
                    let hab = self.hess[a][b][(i, j)];
                    if hab != 0.0 {
                        v += du[a] * du[b] * (0.5 * hab);
                    }
                }
            }
            v
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BlockField {
    /// A base metric evaluated at `x`, optionally completed to `size`.
    Base {
        metric: MetricField,
        #[serde(default)]
        completion: Completion,
        #[serde(default)]
        size: Option<usize>,
    },
    /// A metric evaluated at the fiber coordinates `y`.
    Fiber { metric: MetricField },
    /// The vertical metric `½ ∂²(g_ab y^a y^b)/∂y∂y` of a base metric.
    Vertical {
        metric: MetricField,
        #[serde(default)]
        completion: Completion,
        #[serde(default)]
        size: Option<usize>,
    },
    Constant { g: Mat<f64> },
    /// Entrywise product `η_ij(u) × inner_ij`, no summation.
    Deformed { inner: Box<BlockField>, eta: Vec<Vec<EtaEntry>> },
    Jet(JetField),
    /// `g₀ + F J Fᵀ` with `g₀ = F η Fᵀ`: a jet measured in the frame of `base`.
    Relative { base: Box<BlockField>, jet: JetField },
    Sum { a: Box<BlockField>, b: Box<BlockField> },
}

impl BlockField {
    pub fn base(metric: MetricField) -> Self {
        BlockField::Base { metric, completion: Completion::default(), size: None }
    }

    pub fn constant(g: Mat<f64>) -> Self {
        BlockField::Constant { g }
    }

    pub fn size(&self) -> usize {
        match self {
            BlockField::Base { metric, size, .. } | BlockField::Vertical { metric, size, .. } => {
                size.unwrap_or(metric.dim()).max(metric.dim())
            }
            BlockField::Fiber { metric } => metric.dim(),
            BlockField::Constant { g } => g.rows,
            BlockField::Deformed { inner, .. } => inner.size(),
            BlockField::Jet(j) => j.value.rows,
            BlockField::Sum { a, .. } => a.size(),
            BlockField::Relative { base, .. } => base.size(),
        }
    }

    /// Block value at `u = (x, y)`; `n` is the horizontal dimension.
    pub fn eval<T: Real>(&self, u: &[T], n: usize) -> Result<Mat<T>> {
        match self {
            BlockField::Base { metric, completion, size } => {
                let g = metric.eval(&u[..n.min(u.len())])?;
                Ok(completion.complete(&g, size.unwrap_or(g.rows)))
            }
            BlockField::Fiber { metric } => {
                let y = &u[n..];
                if y.len() < metric.dim() {
                    return Err(Error::Dimension { expected: metric.dim(), got: y.len() });
                }
                metric.eval(y)
            }
            BlockField::Vertical { metric, completion, size } => {
                let k = metric.dim();
                if u.len() < n + k {
                    return Err(Error::Dimension { expected: n + k, got: u.len() });
                }
                let g = vertical_metric_t(metric, &u[..n], &u[n..n + k])?;
                Ok(completion.complete(&g, size.unwrap_or(k)))
            }
            BlockField::Constant { g } => Ok(Mat::from_f64(g)),
            BlockField::Deformed { inner, eta } => {
                let g = inner.eval(u, n)?;
                let s = g.rows;
                if eta.len() != s || eta.iter().any(|r| r.len() != s) {
                    return Err(Error::Dimension { expected: s, got: eta.len() });
                }
                Ok(Mat::from_fn(s, s, |i, j| {
                    let (p, q) = if i <= j { (i, j) } else { (j, i) };
                    g[(i, j)] * eta[p][q].eval(u)
                }))
            }
            BlockField::Jet(j) => {
                if u.len() < j.center.len() {
                    return Err(Error::Dimension { expected: j.center.len(), got: u.len() });
                }
                Ok(j.eval(u))
            }
            BlockField::Sum { a, b } => Ok(a.eval(u, n)?.add(&b.eval(u, n)?)),
            BlockField::Relative { base, jet } => {
                let g0 = base.eval(u, n)?;
                let f = super::block_factor(&g0)?;
                Ok(g0.add(&f.matmul(&jet.eval(u)).matmul(&f.transpose())))
            }
        }
    }
}
