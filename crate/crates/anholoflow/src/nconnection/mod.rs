//! Semispray, canonical N-connection, N-adapted frames and anholonomy.
//!
//! Index conventions: `N[(a, i)] = N^a_i`, `christoffel(..).at(&[i, l, m]) = γ^i_lm`,
//! `W.at(&[γ, α, β]) = W^γ_αβ` with `[e_α, e_β] = W^γ_αβ e_γ`, and
//! `Ω.at(&[a, i, j]) = Ω^a_ij`. Frame indices run over `0..n` (horizontal)
//! followed by `n..n+m` (vertical).

use crate::error::{Error, Result};
use crate::tensor_core::{lift, seed, seed_along, Dual, Mat, MetricField, Real, Tensor, DEGENERACY_TOL};
use serde::{Deserialize, Serialize};

/// `γ^i_lm = ½ g^ih (∂_m g_lh + ∂_l g_mh − ∂_h g_lm)` on the base chart.
pub fn christoffel_t<S: Real>(g: &MetricField, x: &[S]) -> Result<Tensor<S>> {
    let n = g.dim();
    let gv = g.eval(x)?;
    let dg: Vec<Mat<S>> = (0..n).map(|k| g.eval(&seed(&x[..n], k)).map(|m| m.eps())).collect::<Result<_>>()?;
    let gi = gv.inverse()?;
    let mut out = Tensor::zeros(&[n, n, n]);
    for i in 0..n {
        for l in 0..n {
            for m in l..n {
                let mut s = S::zero();
                for h in 0..n {
                    s += gi[(i, h)] * (dg[m][(l, h)] + dg[l][(m, h)] - dg[h][(l, m)]);
                }
                let v = s * 0.5;
                out.set(&[i, l, m], v);
                out.set(&[i, m, l], v);
            }
        }
    }
    Ok(out)
}

pub fn christoffel(g: &MetricField, x: &[f64]) -> Result<Tensor<f64>> {
    g.eval_checked(x)?;
    christoffel_t(g, x)
}

/// `g̃_ab = ½ ∂²(g_ab y^a y^b)/∂y^a∂y^b`, differentiated with nested duals.
pub fn vertical_metric_t<S: Real>(g: &MetricField, x: &[S], y: &[S]) -> Result<Mat<S>> {
    let n = g.dim();
    let gv = g.eval(x)?;
    let mut out = Mat::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let inner: Vec<Dual<S>> = seed(&y[..n], b);
            let yy: Vec<Dual<Dual<S>>> = inner
                .iter()
                .enumerate()
                .map(|(k, &v)| Dual::new(v, if k == a { Dual::one() } else { Dual::zero() }))
                .collect();
            let mut l = Dual::<Dual<S>>::zero();
            for p in 0..n {
                for q in 0..n {
                    l += Dual::constant(Dual::constant(gv[(p, q)])) * yy[p] * yy[q];
                }
            }
            let v = l.eps.eps * 0.5;
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
    }
    Ok(out)
}

pub fn vertical_metric(g: &MetricField, x: &[f64], y: &[f64]) -> Result<Mat<f64>> {
    vertical_metric_t(g, x, y)
}

/// `G̃^i = ¼ g̃^ij g_jk γ^k_lm y^l y^m`.
pub fn semispray_t<S: Real>(g: &MetricField, x: &[S], y: &[S]) -> Result<Vec<S>> {
    let n = g.dim();
    if y.len() < n {
        return Err(Error::Dimension { expected: n, got: y.len() });
    }
    let gv = g.eval(x)?;
    let gt = vertical_metric_t(g, x, y)?;
    let det = gt.det().val();
    if !(det.abs() > DEGENERACY_TOL) {
        return Err(Error::Regularity { det });
    }
    let gti = gt.inverse()?;
    let gam = christoffel_t(g, x)?;
    let mut quad = vec![S::zero(); n];
    for (k, q) in quad.iter_mut().enumerate() {
        for l in 0..n {
            for m in 0..n {
                *q += gam.at(&[k, l, m]) * y[l] * y[m];
            }
        }
    }
    let mut lowered = vec![S::zero(); n];
    for j in 0..n {
        for k in 0..n {
            lowered[j] += gv[(j, k)] * quad[k];
        }
    }
    Ok((0..n)
        .map(|i| {
            let mut s = S::zero();
            for j in 0..n {
                s += gti[(i, j)] * lowered[j];
            }
            s * 0.25
        })
        .collect())
}

pub fn semispray(g: &MetricField, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    g.eval_checked(x)?;
    semispray_t(g, x, y)
}

/// Coefficients `Γ^a_bj(x)` of a linear N-connection `N^a_j = Γ^a_bj y^b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LinearCoeffs {
    /// Constant table indexed `[a][b][j]`.
    Constant { gamma: Tensor<f64> },
    /// Christoffel symbols of a base metric (`m = n`).
    LeviCivita { metric: MetricField },
}

/// Explicit N-connection coefficient fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum UserN {
    Zero,
    /// `N^a_i = c^a_i + l^a_iα u^α`, `c` indexed `[a][i]`, `l` indexed `[a][i][α]`.
    Affine { c: Tensor<f64>, l: Tensor<f64> },
    /// `N^a_i = Σ_α amp^a_iα sin(freq^a_iα u^α + phase^a_iα)`.
    Trig { amp: Tensor<f64>, freq: Tensor<f64>, phase: Tensor<f64> },
    /// `N^a_k = amp_k q_ka cos(p_k·x + q_k·y)`: a y-gradient, so `∂_b N^a_k` is symmetric in `(a, b)`.
    PotentialGradient { amp: Vec<f64>, p: Vec<Vec<f64>>, q: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NConnection {
    /// `Ñ^a_j = ∂G̃^a/∂y^j` from the semispray of `metric`; rows `a ≥ n` vanish.
    Canonical { m: usize, metric: MetricField },
    Linear { n: usize, m: usize, coeffs: LinearCoeffs },
    User { n: usize, m: usize, field: UserN },
    /// `factor · N`.
    Scaled { inner: Box<NConnection>, factor: f64 },
}

impl NConnection {
    pub fn zero(n: usize, m: usize) -> Self {
        NConnection::User { n, m, field: UserN::Zero }
    }

    pub fn canonical(metric: &MetricField) -> Self {
        NConnection::Canonical { m: metric.dim(), metric: metric.clone() }
    }

    pub fn n(&self) -> usize {
        match self {
            NConnection::Canonical { metric, .. } => metric.dim(),
            NConnection::Linear { n, .. } | NConnection::User { n, .. } => *n,
            NConnection::Scaled { inner, .. } => inner.n(),
        }
    }

    pub fn m(&self) -> usize {
        match self {
            NConnection::Canonical { m, .. } | NConnection::Linear { m, .. } | NConnection::User { m, .. } => *m,
            NConnection::Scaled { inner, .. } => inner.m(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n(), self.m());
        if m < n {
            return Err(Error::config("m", "vertical dimension below horizontal"));
        }
        let d = n + m;
        match self {
            NConnection::Linear { coeffs: LinearCoeffs::Constant { gamma }, .. } if gamma.shape != [m, m, n] => {
                Err(Error::config("gamma", format!("shape must be [{m}, {m}, {n}]")))
            }
            NConnection::Linear { coeffs: LinearCoeffs::LeviCivita { metric }, .. } if metric.dim() != n || m != n => {
                Err(Error::config("metric", "Levi-Civita coefficients need m = n = metric dimension"))
            }
            NConnection::User { field: UserN::Affine { c, l }, .. } if c.shape != [m, n] || l.shape != [m, n, d] => {
                Err(Error::config("l", format!("shapes must be c:[{m}, {n}] and l:[{m}, {n}, {d}]")))
            }
            NConnection::User { field: UserN::Trig { amp, freq, phase }, .. }
                if amp.shape != [m, n, d] || freq.shape != amp.shape || phase.shape != amp.shape =>
            {
                Err(Error::config("amp", format!("trig tables must have shape [{m}, {n}, {d}]")))
            }
            NConnection::User { field: UserN::PotentialGradient { amp, p, q }, .. }
                if amp.len() != n || p.len() != n || q.len() != n || p.iter().any(|r| r.len() != n) || q.iter().any(|r| r.len() != m) =>
            {
                Err(Error::config("q", "potential-gradient tables must be amp:[n], p:[n][n], q:[n][m]"))
            }
            NConnection::Scaled { inner, .. } => inner.validate(),
            _ => Ok(()),
        }
    }

    /// `N^a_i(u)` as an `m × n` matrix.
    pub fn eval<T: Real>(&self, u: &[T]) -> Result<Mat<T>> {
        let (n, m) = (self.n(), self.m());
        if u.len() != n + m {
            return Err(Error::Dimension { expected: n + m, got: u.len() });
        }
        let (x, y) = u.split_at(n);
        match self {
            NConnection::Canonical { metric, .. } => {
                let mut out = Mat::zeros(m, n);
                let xl = lift(x);
                for j in 0..n {
                    let yd = seed(&y[..n], j);
                    let gs = semispray_t(metric, &xl, &yd)?;
                    for a in 0..n {
                        out[(a, j)] = gs[a].eps;
                    }
                }
                Ok(out)
            }
            NConnection::Linear { coeffs, .. } => {
                let gam: Tensor<T> = match coeffs {
                    LinearCoeffs::Constant { gamma } => gamma.map(T::cst),
                    LinearCoeffs::LeviCivita { metric } => christoffel_t(metric, x)?,
                };
                Ok(Mat::from_fn(m, n, |a, j| {
                    let mut s = T::zero();
                    for b in 0..m {
                        s += gam.at(&[a, b, j]) * y[b];
                    }
                    s
                }))
            }
            NConnection::User { field, .. } => Ok(match field {
                UserN::Zero => Mat::zeros(m, n),
                UserN::Affine { c, l } => Mat::from_fn(m, n, |a, i| {
                    let mut s = T::cst(c.at(&[a, i]));
                    for (al, &ua) in u.iter().enumerate() {
                        s += ua * l.at(&[a, i, al]);
                    }
                    s
                }),
                UserN::Trig { amp, freq, phase } => Mat::from_fn(m, n, |a, i| {
                    let mut s = T::zero();
                    for (al, &ua) in u.iter().enumerate() {
                        let k = [a, i, al];
                        let w = amp.at(&k);
                        if w != 0.0 {
                            s += (ua * freq.at(&k) + phase.at(&k)).sin() * w;
                        }
                    }
                    s
                }),
                UserN::PotentialGradient { amp, p, q } => Mat::from_fn(m, n, |a, k| {
                    let mut arg = T::zero();
                    for i in 0..n {
                        arg += x[i] * p[k][i];
                    }
                    for b in 0..m {
                        arg += y[b] * q[k][b];
                    }
                    arg.cos() * (amp[k] * q[k][a])
                }),
            }),
            NConnection::Scaled { inner, factor } => Ok(inner.eval(u)?.scale(T::cst(*factor))),
        }
    }

    /// Values and all first partials `∂_α N^a_i`, `α ∈ 0..n+m`.
    pub fn jet<T: Real>(&self, u: &[T]) -> Result<(Mat<T>, Vec<Mat<T>>)> {
        let d = u.len();
        let mut val = None;
        let mut der = Vec::with_capacity(d);
        for al in 0..d {
            let e = self.eval(&seed(u, al))?;
            if val.is_none() {
                val = Some(e.re());
            }
            der.push(e.eps());
        }
        Ok((val.unwrap_or_else(|| Mat::zeros(self.m(), self.n())), der))
    }
}

/// `canonical_nconnection`: the N-connection generated by a metric's semispray.
pub fn canonical_nconnection(g: &MetricField) -> Result<NConnection> {
    let nc = NConnection::canonical(g);
    nc.validate()?;
    Ok(nc)
}

/// Frame `e_i = ∂_i − N^a_i ∂_a, e_a = ∂_a` and coframe `e^i = dx^i, e^a = dy^a + N^a_i dx^i`.
///
/// `frame[(μ, β)]` is the coordinate component `μ` of `e_β`; `coframe[(α, μ)]`
/// is the component of `e^α` along `du^μ`. Their product is the identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NAdaptedFrame {
    pub frame: Mat<f64>,
    pub coframe: Mat<f64>,
}

impl NAdaptedFrame {
    pub fn at(nc: &NConnection, u: &[f64]) -> Result<Self> {
        let (n, m) = (nc.n(), nc.m());
        let nv = nc.eval(u)?;
        Ok(Self::from_coefficients(&nv, n, m))
    }

    pub fn from_coefficients(nv: &Mat<f64>, n: usize, m: usize) -> Self {
        let d = n + m;
        let mut frame = Mat::identity(d);
        let mut coframe = Mat::identity(d);
        for a in 0..m {
            for i in 0..n {
                frame[(n + a, i)] = -nv[(a, i)];
                coframe[(n + a, i)] = nv[(a, i)];
            }
        }
        NAdaptedFrame { frame, coframe }
    }

    /// `max |coframe·frame − I|`.
    pub fn inverse_defect(&self) -> f64 {
        let p = self.coframe.matmul(&self.frame);
        p.max_diff(&Mat::identity(p.rows))
    }
}

/// `Ω^a_ij = ∂_j N^a_i − ∂_i N^a_j + N^b_i ∂_b N^a_j − N^b_j ∂_b N^a_i`.
pub fn curvature_from_jet<T: Real>(nv: &Mat<T>, dn: &[Mat<T>], n: usize, m: usize) -> Tensor<T> {
    let mut om = Tensor::zeros(&[m, n, n]);
    for a in 0..m {
        for i in 0..n {
            for j in 0..n {
                let mut s = dn[j][(a, i)] - dn[i][(a, j)];
                for b in 0..m {
                    s += nv[(b, i)] * dn[n + b][(a, j)] - nv[(b, j)] * dn[n + b][(a, i)];
                }
                om.set(&[a, i, j], s);
            }
        }
    }
    om
}

pub fn nconnection_curvature(nc: &NConnection, u: &[f64]) -> Result<Tensor<f64>> {
    let (nv, dn) = nc.jet(u)?;
    Ok(curvature_from_jet(&nv, &dn, nc.n(), nc.m()))
}

/// Nonzero blocks: `W^b_ia = ∂_a N^b_i = −W^b_ai` and `W^a_ij = Ω^a_ij`.
pub fn anholonomy(nc: &NConnection, u: &[f64]) -> Result<Tensor<f64>> {
    let (n, m) = (nc.n(), nc.m());
    let d = n + m;
    let (nv, dn) = nc.jet(u)?;
    let om = curvature_from_jet(&nv, &dn, n, m);
    let mut w = Tensor::zeros(&[d, d, d]);
    for b in 0..m {
        for i in 0..n {
            for a in 0..m {
                let v = dn[n + a][(b, i)];
                w.set(&[n + b, i, n + a], v);
                w.set(&[n + b, n + a, i], -v);
            }
        }
    }
    for a in 0..m {
        for i in 0..n {
            for j in 0..n {
                w.set(&[n + a, i, j], om.at(&[a, i, j]));
            }
        }
    }
    Ok(w)
}

/// A test function for the frame-commutator oracle.
pub trait Probe {
    fn eval<T: Real>(&self, u: &[T]) -> T;
}

/// The coordinate function `u^k`.
pub struct Coordinate(pub usize);

impl Probe for Coordinate {
    fn eval<T: Real>(&self, u: &[T]) -> T {
        u[self.0]
    }
}

/// `sin(u^p) · u^q + (u^r)²`, a nonlinear probe.
pub struct Wiggle(pub usize, pub usize, pub usize);

impl Probe for Wiggle {
    fn eval<T: Real>(&self, u: &[T]) -> T {
        u[self.0].sin() * u[self.1] + u[self.2] * u[self.2]
    }
}

/// Components of the frame vector `e_β` at `u`.
fn frame_vector<T: Real>(nc: &NConnection, u: &[T], beta: usize) -> Result<Vec<T>> {
    let (n, m) = (nc.n(), nc.m());
    let mut v = vec![T::zero(); n + m];
    v[beta] = T::one();
    if beta < n {
        let nv = nc.eval(u)?;
        for a in 0..m {
            v[n + a] = -nv[(a, beta)];
        }
    }
    Ok(v)
}

/// `e_β f` evaluated on a dual-lifted point; returns the directional derivative.
fn frame_apply<T: Real, P: Probe>(nc: &NConnection, u: &[T], beta: usize, f: &P) -> Result<T> {
    let v = frame_vector(nc, u, beta)?;
    Ok(f.eval(&seed_along(u, &v)).eps)
}

/// `e_α(e_β f)` through second-order duals.
fn frame_apply2<P: Probe>(nc: &NConnection, u: &[f64], alpha: usize, beta: usize, f: &P) -> Result<f64> {
    let v = frame_vector(nc, u, alpha)?;
    let ud = seed_along(u, &v);
    Ok(frame_apply(nc, &ud, beta, f)?.eps)
}

/// `[e_α, e_β] f` by applying the frame fields twice.
pub fn commutator_on<P: Probe>(nc: &NConnection, u: &[f64], alpha: usize, beta: usize, f: &P) -> Result<f64> {
    Ok(frame_apply2(nc, u, alpha, beta, f)? - frame_apply2(nc, u, beta, alpha, f)?)
}

/// `W^γ_αβ e_γ f` for comparison with [`commutator_on`].
pub fn anholonomy_on<P: Probe>(w: &Tensor<f64>, nc: &NConnection, u: &[f64], alpha: usize, beta: usize, f: &P) -> Result<f64> {
    let d = u.len();
    let mut s = 0.0;
    for g in 0..d {
        let c = w.at(&[g, alpha, beta]);
        if c != 0.0 {
            s += c * frame_apply(nc, u, g, f)?;
        }
    }
    Ok(s)
}

/// Largest commutator-oracle mismatch over all frame pairs and a set of probes.
pub fn commutator_defect(nc: &NConnection, u: &[f64]) -> Result<f64> {
    let d = u.len();
    let w = anholonomy(nc, u)?;
    let mut worst: f64 = 0.0;
    for al in 0..d {
        for be in 0..d {
            for k in 0..d {
                let p = Coordinate(k);
                let lhs = commutator_on(nc, u, al, be, &p)?;
                let rhs = anholonomy_on(&w, nc, u, al, be, &p)?;
                worst = worst.max((lhs - rhs).abs());
            }
            let p = Wiggle(0, d - 1, d / 2);
            let lhs = commutator_on(nc, u, al, be, &p)?;
            let rhs = anholonomy_on(&w, nc, u, al, be, &p)?;
            worst = worst.max((lhs - rhs).abs());
        }
    }
    Ok(worst)
}

/// Integrates `ẍ^i + 2 G̃^i(x, ẋ) = 0` with RK4; returns the final `(x, ẋ)`.
pub fn nonlinear_geodesic(g: &MetricField, x0: &[f64], v0: &[f64], t_end: f64, steps: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = g.dim();
    if x0.len() != n || v0.len() != n {
        return Err(Error::Dimension { expected: n, got: x0.len().min(v0.len()) });
    }
    let rhs = |s: &[f64]| -> Result<Vec<f64>> {
        let gs = semispray(g, &s[..n], &s[n..])?;
        Ok(s[n..].iter().copied().chain(gs.iter().map(|v| -2.0 * v)).collect())
    };
    let h = t_end / steps.max(1) as f64;
    let mut s: Vec<f64> = x0.iter().chain(v0).copied().collect();
    for _ in 0..steps.max(1) {
        let k1 = rhs(&s)?;
        let s2: Vec<f64> = s.iter().zip(&k1).map(|(a, k)| a + 0.5 * h * k).collect();
        let k2 = rhs(&s2)?;
        let s3: Vec<f64> = s.iter().zip(&k2).map(|(a, k)| a + 0.5 * h * k).collect();
        let k3 = rhs(&s3)?;
        let s4: Vec<f64> = s.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
        let k4 = rhs(&s4)?;
        for i in 0..2 * n {
            s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok((s[..n].to_vec(), s[n..].to_vec()))
}
