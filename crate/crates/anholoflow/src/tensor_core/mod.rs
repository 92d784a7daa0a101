//! Coordinate charts, differentiable fields and the built-in metric catalog.

pub mod dual;
pub mod mat;

pub use dual::{embed, lift, seed, seed_along, Dual, Real};
pub use mat::{Mat, Tensor, DEGENERACY_TOL};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Coordinates `u = (x^1..x^n, y^1..y^m)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub n: usize,
    pub m: usize,
    pub labels: Vec<String>,
}

impl Chart {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::config("n", format!("horizontal dimension must be at least 2, got {n}")));
        }
        if m < n {
            return Err(Error::config("m", format!("vertical dimension {m} is smaller than horizontal {n}")));
        }
        let labels = (1..=n).map(|i| format!("x{i}")).chain((1..=m).map(|a| format!("y{a}"))).collect();
        Ok(Chart { n, m, labels })
    }

    /// Tangent-bundle chart, `m = n`.
    pub fn tangent(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    pub fn is_tangent(&self) -> bool {
        self.n == self.m
    }
}

/// A real function on a chart that can be evaluated on any [`Real`] type.
pub trait ScalarField {
    fn dim(&self) -> usize;
    fn eval<T: Real>(&self, x: &[T]) -> Result<T>;
}

/// Exact partial derivative of order `multi_index.len() ≤ 2`.
pub fn eval_derivative<F: ScalarField>(field: &F, point: &[f64], multi_index: &[usize]) -> Result<f64> {
    if point.len() != field.dim() {
        return Err(Error::Dimension { expected: field.dim(), got: point.len() });
    }
    if let Some(&bad) = multi_index.iter().find(|&&k| k >= point.len()) {
        return Err(Error::Dimension { expected: point.len(), got: bad + 1 });
    }
    match multi_index {
        [] => field.eval::<f64>(point),
        [i] => Ok(field.eval(&seed(point, *i))?.eps),
        [i, j] => {
            let inner: Vec<Dual<f64>> = seed(point, *j);
            let outer: Vec<Dual<Dual<f64>>> = inner
                .iter()
                .enumerate()
                .map(|(k, &x)| Dual::new(x, if k == *i { Dual::one() } else { Dual::zero() }))
                .collect();
            Ok(field.eval(&outer)?.eps.eps)
        }
        _ => Err(Error::config("multi_index", "derivatives above second order are not provided")),
    }
}

/// Inverse of a symmetric matrix, symmetrised; fails when `|det| ≤ 1e-12`.
pub fn invert_symmetric(a: &Mat<f64>) -> Result<Mat<f64>> {
    if a.rows != a.cols {
        return Err(Error::Dimension { expected: a.rows, got: a.cols });
    }
    let inv = a.inverse()?;
    Ok(Mat::from_fn(a.rows, a.rows, |i, j| 0.5 * (inv[(i, j)] + inv[(j, i)])))
}

/// Built-in base metrics `g_ij(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BaseMetric {
    /// `δ_ij`.
    Flat { dim: usize },
    /// Hyperspherical chart `r² diag(1, sin²x¹, sin²x¹ sin²x², …)`.
    RoundSphere { dim: usize, radius: f64 },
    /// Two-sphere in Mercator coordinates, `r² sech²(x¹) δ_ij`.
    Mercator { radius: f64 },
    /// `exp(2(c x¹ + q (x¹)²)) δ_ij`; flat in two dimensions when `q = 0`.
    Conformal {
        dim: usize,
        rate: f64,
        #[serde(default)]
        quad: f64,
    },
    /// `g_ii = Σ_k c_ik (x^{v_i})^k`, off-diagonal zero; `vars` defaults to x¹.
    DiagonalPolynomial {
        coeffs: Vec<Vec<f64>>,
        #[serde(default)]
        vars: Vec<usize>,
    },
    /// A constant symmetric matrix.
    Constant { g: Vec<Vec<f64>> },
}

/// How a base metric of size `n` is padded to a vertical block of size `m > n`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Completion {
    /// Diagonal entries appended after the base block; missing entries are `+1`.
    #[serde(default)]
    pub extra: Vec<f64>,
}

impl Completion {
    pub fn complete<T: Real>(&self, g: &Mat<T>, m: usize) -> Mat<T> {
        let n = g.rows;
        if m <= n {
            return g.clone();
        }
        let mut out = Mat::zeros(m, m);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = g[(i, j)];
            }
        }
        for k in n..m {
            out[(k, k)] = T::cst(self.extra.get(k - n).copied().unwrap_or(1.0));
        }
        out
    }
}

/// A symmetric, nondegenerate metric field on the base chart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricField {
    pub kind: BaseMetric,
    #[serde(default)]
    pub signature: Option<Vec<f64>>,
}

impl MetricField {
    pub fn new(kind: BaseMetric) -> Result<Self> {
        let f = MetricField { kind, signature: None };
        f.validate()?;
        Ok(f)
    }

    pub fn flat(dim: usize) -> Self {
        MetricField { kind: BaseMetric::Flat { dim }, signature: None }
    }

    pub fn sphere(dim: usize, radius: f64) -> Self {
        MetricField { kind: BaseMetric::RoundSphere { dim, radius }, signature: None }
    }

    pub fn mercator(radius: f64) -> Self {
        MetricField { kind: BaseMetric::Mercator { radius }, signature: None }
    }

    pub fn conformal(dim: usize, rate: f64) -> Self {
        MetricField { kind: BaseMetric::Conformal { dim, rate, quad: 0.0 }, signature: None }
    }

    pub fn conformal_curved(dim: usize, rate: f64, quad: f64) -> Self {
        MetricField { kind: BaseMetric::Conformal { dim, rate, quad }, signature: None }
    }

    pub fn diagonal_polynomial(coeffs: Vec<Vec<f64>>, vars: Vec<usize>) -> Self {
        MetricField { kind: BaseMetric::DiagonalPolynomial { coeffs, vars }, signature: None }
    }

    pub fn constant(g: Mat<f64>) -> Self {
        let rows = (0..g.rows).map(|i| (0..g.cols).map(|j| g[(i, j)]).collect()).collect();
        MetricField { kind: BaseMetric::Constant { g: rows }, signature: None }
    }

    pub fn with_signature(mut self, eta: Vec<f64>) -> Result<Self> {
        if eta.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: eta.len() });
        }
        if eta.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::config("signature", "entries must be +1 or -1"));
        }
        self.signature = Some(eta);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            BaseMetric::Flat { dim } | BaseMetric::RoundSphere { dim, .. } | BaseMetric::Conformal { dim, .. } => *dim,
            BaseMetric::Mercator { .. } => 2,
            BaseMetric::DiagonalPolynomial { coeffs, .. } => coeffs.len(),
            BaseMetric::Constant { g } => g.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        if dim < 1 {
            return Err(Error::config("dim", "metric dimension must be positive"));
        }
        match &self.kind {
            BaseMetric::RoundSphere { radius, .. } | BaseMetric::Mercator { radius } if !(*radius > 0.0) => {
                return Err(Error::config("radius", "must be positive"));
            }
            BaseMetric::DiagonalPolynomial { coeffs, vars } => {
                if coeffs.iter().any(|c| c.is_empty()) {
                    return Err(Error::config("coeffs", "every diagonal entry needs at least one coefficient"));
                }
                if !vars.is_empty() && (vars.len() != dim || vars.iter().any(|&v| v >= dim)) {
                    return Err(Error::config("vars", "one variable index per diagonal entry, each below dim"));
                }
            }
            BaseMetric::Constant { g } => {
                if g.iter().any(|r| r.len() != dim) {
                    return Err(Error::config("g", "matrix must be square"));
                }
                for i in 0..dim {
                    for j in 0..i {
                        if (g[i][j] - g[j][i]).abs() > 1e-14 {
                            return Err(Error::config("g", "matrix must be symmetric"));
                        }
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// `g_ij(x)`.
    pub fn eval<T: Real>(&self, x: &[T]) -> Result<Mat<T>> {
        let dim = self.dim();
        if x.len() < dim {
            return Err(Error::Dimension { expected: dim, got: x.len() });
        }
        let g = match &self.kind {
            BaseMetric::Flat { .. } => Mat::identity(dim),
            BaseMetric::RoundSphere { radius, .. } => {
                let r2 = radius * radius;
                let mut d = Vec::with_capacity(dim);
                let mut acc = T::cst(r2);
                for k in 0..dim {
                    d.push(acc);
                    if k + 1 < dim {
                        let s = x[k].sin();
                        if s.val().abs() < 1e-8 {
                            return Err(Error::Domain {
                                point: x.iter().map(|v| v.val()).collect(),
                                reason: "round-sphere chart is singular where sin(x) = 0".into(),
                            });
                        }
                        acc = acc * s * s;
                    }
                }
                Mat::diag(&d)
            }
            BaseMetric::Mercator { radius } => {
                let c = (x[0].exp() + (-x[0]).exp()) * 0.5;
                Mat::identity(2).scale(T::cst(radius * radius) / (c * c))
            }
            BaseMetric::Conformal { rate, quad, .. } => {
                let f = ((x[0] * *rate + x[0] * x[0] * *quad) * 2.0).exp();
                Mat::identity(dim).scale(f)
            }
            BaseMetric::DiagonalPolynomial { coeffs, vars } => {
                let d: Vec<T> = coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let t = x[vars.get(i).copied().unwrap_or(0)];
                        c.iter().rev().fold(T::zero(), |acc, &ck| acc * t + ck)
                    })
                    .collect();
                Mat::diag(&d)
            }
            BaseMetric::Constant { g } => Mat::from_fn(dim, dim, |i, j| T::cst(g[i][j])),
        };
        Ok(g)
    }

    /// `g_ij(x)` with the nondegeneracy check.
    pub fn eval_checked(&self, x: &[f64]) -> Result<Mat<f64>> {
        let g = self.eval::<f64>(x)?;
        let det = g.det();
        if !(det.abs() > DEGENERACY_TOL) {
            return Err(Error::SingularMetric { det });
        }
        Ok(g)
    }

    /// Signature: the declared one, otherwise the signs of the eigenvalues at `x`.
    pub fn signature_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        if let Some(s) = &self.signature {
            return Ok(s.clone());
        }
        let g = self.eval_checked(x)?;
        Ok(ldl_signs(&g))
    }
}

fn ldl_signs(g: &Mat<f64>) -> Vec<f64> {
    let n = g.rows;
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| g[(i, j)]);
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut s: Vec<f64> = eig.eigenvalues.iter().map(|&l| if l < 0.0 { -1.0 } else { 1.0 }).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// One component `g_ij` of a metric as a scalar field.
pub struct MetricComponent<'a> {
    pub field: &'a MetricField,
    pub i: usize,
    pub j: usize,
}

impl ScalarField for MetricComponent<'_> {
    fn dim(&self) -> usize {
        self.field.dim()
    }
    fn eval<T: Real>(&self, x: &[T]) -> Result<T> {
        Ok(self.field.eval(x)?[(self.i, self.j)])
    }
}

/// Named catalog entry with numeric parameters, as used in scenario files.
pub fn metric_from_catalog(name: &str, params: &std::collections::BTreeMap<String, f64>) -> Result<MetricField> {
    let get = |k: &str, d: f64| params.get(k).copied().unwrap_or(d);
    let dim = get("dim", 2.0);
    if dim.fract() != 0.0 || dim < 1.0 {
        return Err(Error::config("dim", "must be a positive integer"));
    }
    let dim = dim as usize;
    let f = match name {
        "flat" => MetricField::flat(dim),
        "round-sphere" | "sphere" => MetricField::sphere(dim, get("radius", 1.0)),
        "mercator-sphere" => MetricField::mercator(get("radius", 1.0)),
        "conformal" => MetricField::conformal_curved(dim, get("rate", 1.0), get("quad", 0.0)),
        "diagonal-polynomial" => {
            let a = get("a", 1.0);
            let b = get("b", 0.0);
            let c = get("c", 1.0);
            let mut coeffs = vec![vec![a]; dim];
            coeffs[dim - 1] = vec![b, 0.0, c];
            MetricField::diagonal_polynomial(coeffs, vec![])
        }
        other => return Err(Error::UnknownFixture(other.to_string())),
    };
    f.validate()?;
    Ok(f)
}
