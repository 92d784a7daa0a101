//! Bi-Hamiltonian curve-flow hierarchy on periodic 1-D curve variables.
//!
//! A field is stored component-major, `field[c][node]`. The h-channel carries
//! `→v ∈ R^{n−1}` with curvature scalar `→R`, the v-channel `←v ∈ R^{m−1}`
//! with `←S`; both run through the same operators.
//!
//! `D⁻¹` is the zero-mean periodic antiderivative. With that convention the
//! expanded recursion operator only matches `H∘J` after adding the constant
//! corrections `−mean(v·w) v − v⌋mean(v∧w)`.

mod spectral;

pub use spectral::{Grid, Spectral, MIN_NODES};

use crate::error::{Error, Result};
use rand::Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// `field[c][node]`.
pub type Field = Vec<Vec<f64>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    H,
    V,
}

impl Channel {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "h" => Ok(Channel::H),
            "v" => Ok(Channel::V),
            _ => Err(Error::config("channel", format!("expected h or v, got `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveState {
    pub grid: Grid,
    /// `→v`, `n − 1` components.
    pub h: Field,
    /// `←v`, `m − 1` components.
    pub v: Field,
    /// `→R`.
    pub r: f64,
    /// `←S`.
    pub s: f64,
}

impl CurveState {
    pub fn new(grid: Grid, h: Field, v: Field, r: f64, s: f64) -> Result<Self> {
        let st = CurveState { grid, h, v, r, s };
        st.validate()?;
        Ok(st)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        for f in [&self.h, &self.v] {
            check_field(f, self.grid.nodes)?;
        }
        if !self.r.is_finite() || !self.s.is_finite() {
            return Err(Error::config("curvature", "scalar curvatures must be finite"));
        }
        Ok(())
    }

    pub fn field(&self, ch: Channel) -> &Field {
        match ch {
            Channel::H => &self.h,
            Channel::V => &self.v,
        }
    }

    pub fn field_mut(&mut self, ch: Channel) -> &mut Field {
        match ch {
            Channel::H => &mut self.h,
            Channel::V => &mut self.v,
        }
    }

    pub fn curvature(&self, ch: Channel) -> f64 {
        match ch {
            Channel::H => self.r,
            Channel::V => self.s,
        }
    }
}

fn check_field(f: &Field, nodes: usize) -> Result<()> {
    for c in f {
        if c.len() != nodes {
            return Err(Error::Dimension { expected: nodes, got: c.len() });
        }
        if c.iter().any(|x| !x.is_finite()) {
            return Err(Error::config("field", "samples must be finite"));
        }
    }
    Ok(())
}

fn check_pair(sp: &Spectral, v: &Field, w: &Field) -> Result<()> {
    if v.len() != w.len() {
        return Err(Error::Dimension { expected: v.len(), got: w.len() });
    }
    for c in v.iter().chain(w) {
        if c.len() != sp.nodes() {
            return Err(Error::Dimension { expected: sp.nodes(), got: c.len() });
        }
    }
    Ok(())
}

pub fn zero_field(dim: usize, nodes: usize) -> Field {
    vec![vec![0.0; nodes]; dim]
}

pub fn dot(a: &Field, b: &Field) -> Vec<f64> {
    let m = a.first().map_or(0, |c| c.len());
    let mut out = vec![0.0; m];
    for (x, y) in a.iter().zip(b) {
        for i in 0..m {
            out[i] += x[i] * y[i];
        }
    }
    out
}

fn scale_by(s: &[f64], f: &Field) -> Field {
    f.iter().map(|c| c.iter().zip(s).map(|(x, y)| x * y).collect()).collect()
}

fn add_into(acc: &mut Field, f: &Field, a: f64) {
    for (x, y) in acc.iter_mut().zip(f) {
        for (p, q) in x.iter_mut().zip(y) {
            *p += a * q;
        }
    }
}

pub fn derivative(sp: &Spectral, f: &Field, order: u32) -> Field {
    f.iter().map(|c| sp.derivative(c, order)).collect()
}

pub fn max_abs(f: &Field) -> f64 {
    f.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn max_diff(a: &Field, b: &Field) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn mean(f: &[f64]) -> f64 {
    f.iter().sum::<f64>() / f.len() as f64
}

/// Zero-mean antiderivative of `w − mean(w)` and the removed mean.
pub fn antiderivative(sp: &Spectral, w: &[f64]) -> (Vec<f64>, f64) {
    sp.antiderivative(w)
}

/// `c ⌋ D⁻¹(a ∧ b)`, with `A ⌋ (B⊗C) = (A·B) C`.
fn hook_wedge_inv(sp: &Spectral, c: &Field, a: &Field, b: &Field) -> Field {
    let d = c.len();
    let m = sp.nodes();
    let mut out = zero_field(d, m);
    for i in 0..d {
        for j in i + 1..d {
            let w: Vec<f64> = (0..m).map(|p| a[i][p] * b[j][p] - b[i][p] * a[j][p]).collect();
            let bij = sp.d_inv(&w);
            for p in 0..m {
                out[j][p] += c[i][p] * bij[p];
                out[i][p] -= c[j][p] * bij[p];
            }
        }
    }
    out
}

/// `c ⌋ mean(a ∧ b)`.
fn hook_wedge_mean(c: &Field, a: &Field, b: &Field) -> Field {
    let d = c.len();
    let m = c.first().map_or(0, |x| x.len());
    let mut out = zero_field(d, m);
    for i in 0..d {
        for j in i + 1..d {
            let mij = (0..m).map(|p| a[i][p] * b[j][p] - b[i][p] * a[j][p]).sum::<f64>() / m as f64;
            for p in 0..m {
                out[j][p] += c[i][p] * mij;
                out[i][p] -= c[j][p] * mij;
            }
        }
    }
    out
}

/// `J w = w_l + D⁻¹(v·w) v`.
pub fn apply_j(sp: &Spectral, v: &Field, w: &Field) -> Result<Field> {
    check_pair(sp, v, w)?;
    let mut out = derivative(sp, w, 1);
    let p = sp.d_inv(&dot(v, w));
    add_into(&mut out, &scale_by(&p, v), 1.0);
    Ok(out)
}

/// `H w = w_l + v ⌋ D⁻¹(v ∧ w)`.
pub fn apply_h(sp: &Spectral, v: &Field, w: &Field) -> Result<Field> {
    check_pair(sp, v, w)?;
    let mut out = derivative(sp, w, 1);
    add_into(&mut out, &hook_wedge_inv(sp, v, v, w), 1.0);
    Ok(out)
}

/// Recursion operator as the composition `H∘J`.
pub fn recursion(sp: &Spectral, v: &Field, w: &Field) -> Result<Field> {
    let jw = apply_j(sp, v, w)?;
    apply_h(sp, v, &jw)
}

/// Expanded recursion operator
/// `w_ll + |v|² w + D⁻¹(v·w) v_l − v⌋D⁻¹(v_l ∧ w)` plus the zero-mean corrections.
pub fn recursion_expanded(sp: &Spectral, v: &Field, w: &Field) -> Result<Field> {
    check_pair(sp, v, w)?;
    let vl = derivative(sp, v, 1);
    let vw = dot(v, w);
    let mut out = derivative(sp, w, 2);
    add_into(&mut out, &scale_by(&dot(v, v), w), 1.0);
    add_into(&mut out, &scale_by(&sp.d_inv(&vw), &vl), 1.0);
    add_into(&mut out, &hook_wedge_inv(sp, v, &vl, w), -1.0);
    let c = mean(&vw);
    add_into(&mut out, v, -c);
    add_into(&mut out, &hook_wedge_mean(v, v, w), -1.0);
    Ok(out)
}

/// `H∘J∘H`, the alternative Hamiltonian operator.
pub fn alternative_hamiltonian_operator(sp: &Spectral, v: &Field, w: &Field) -> Result<Field> {
    let hw = apply_h(sp, v, w)?;
    recursion(sp, v, &hw)
}

/// `v_τ` of the k-th flow with curvature scalar `curv`:
/// `k = 0`: `v_l`;
/// `k = 1`: `v_3l + 3/2 |v|² v_l − curv v_l`;
/// `k = 2`: `R(v^(1)) − curv v^(1)` in local closed form.
pub fn hierarchy_flow(sp: &Spectral, v: &Field, k: i32, curv: f64) -> Result<Field> {
    check_pair(sp, v, v)?;
    if !(0..=2).contains(&k) {
        return Err(Error::UnsupportedOrder(k));
    }
    let mut out: Field = v.iter().map(|c| sp.multiply(c, |z| linear_symbol(k, curv, z))).collect();
    add_into(&mut out, &nonlinear_part(sp, v, k, curv), 1.0);
    Ok(out)
}

/// Hamiltonian density of order `k`, nodewise.
pub fn hamiltonian_density(sp: &Spectral, v: &Field, k: i32) -> Result<Vec<f64>> {
    check_pair(sp, v, v)?;
    let s = dot(v, v);
    match k {
        0 => Ok(s.iter().map(|x| 0.5 * x).collect()),
        1 => {
            let v1 = derivative(sp, v, 1);
            let q = dot(&v1, &v1);
            Ok(s.iter().zip(&q).map(|(s, q)| -0.5 * q + 0.125 * s * s).collect())
        }
        2 => {
            let v1 = derivative(sp, v, 1);
            let v2 = derivative(sp, v, 2);
            let q = dot(&v1, &v1);
            let p2 = dot(&v2, &v2);
            let a = dot(v, &v1);
            Ok((0..s.len())
                .map(|i| 0.5 * p2[i] - 0.75 * s[i] * q[i] - 0.5 * a[i] * a[i] + s[i] * s[i] * s[i] / 16.0)
                .collect())
        }
        _ => Err(Error::UnsupportedOrder(k)),
    }
}

pub fn hamiltonian(sp: &Spectral, v: &Field, k: i32) -> Result<f64> {
    Ok(sp.grid.integrate(&hamiltonian_density(sp, v, k)?))
}

pub fn hamiltonians(sp: &Spectral, v: &Field) -> [f64; 3] {
    [0, 1, 2].map(|k| hamiltonian(sp, v, k).unwrap_or(f64::NAN))
}

/// Part of `R(v^(k−1)) − v^(k)` (curvature zero, `v^(0) = v_l`) left after
/// projecting out `v_l` and the rotation generators `v ⌋ (e_i ∧ e_j)`,
/// relative to `|R(v^(k−1))|`.
pub fn hierarchy_remainder(sp: &Spectral, v: &Field, k: i32) -> Result<f64> {
    if !(1..=2).contains(&k) {
        return Err(Error::UnsupportedOrder(k));
    }
    let vl = derivative(sp, v, 1);
    let prev = hierarchy_flow(sp, v, k - 1, 0.0)?;
    let rv = recursion(sp, v, &prev)?;
    let fk = hierarchy_flow(sp, v, k, 0.0)?;
    let mut diff = rv.clone();
    add_into(&mut diff, &fk, -1.0);
    let d = v.len();
    let m = sp.nodes();
    let mut basis = vec![vl];
    for i in 0..d {
        for j in i + 1..d {
            let mut b = zero_field(d, m);
            b[j] = v[i].clone();
            b[i] = v[j].iter().map(|x| -x).collect();
            basis.push(b);
        }
    }
    let k = basis.len();
    let gram = nalgebra::DMatrix::from_fn(k, k, |a, b| sp.grid.inner(&basis[a], &basis[b]));
    let rhs = nalgebra::DVector::from_fn(k, |a, _| sp.grid.inner(&basis[a], &diff));
    let coef = gram.svd(true, true).solve(&rhs, 1e-14).map_err(|e| Error::config("projection", e))?;
    for (a, b) in basis.iter().enumerate() {
        add_into(&mut diff, b, -coef[a]);
    }
    let scale = sp.grid.inner(&rv, &rv).sqrt().max(f64::MIN_POSITIVE);
    Ok(sp.grid.inner(&diff, &diff).sqrt() / scale)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flow {
    K0,
    K1,
    K2,
    Sg,
}

impl Flow {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "k0" => Ok(Flow::K0),
            "k1" => Ok(Flow::K1),
            "k2" => Ok(Flow::K2),
            "sg" => Ok(Flow::Sg),
            _ => Err(Error::config("flow", format!("expected k0|k1|k2|sg, got `{s}`"))),
        }
    }

    pub fn order(self) -> i32 {
        match self {
            Flow::K0 => 0,
            Flow::K1 => 1,
            Flow::K2 => 2,
            Flow::Sg => -1,
        }
    }

    /// Default step for a unit-amplitude field on `grid`.
    pub fn default_dtau(self, grid: &Grid) -> f64 {
        let h = grid.spacing();
        match self {
            Flow::K0 => 0.5 * h,
            Flow::K1 => 0.5 * h.powi(3),
            Flow::K2 => 0.005 * h.powi(3),
            Flow::Sg => 0.5 * h,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonSnapshot {
    pub tau: f64,
    pub h: Field,
    pub v: Field,
    /// `H^(0..2)` of the h-channel.
    pub ham_h: [f64; 3],
    pub ham_v: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonTrajectory {
    pub flow: Flow,
    pub grid: Grid,
    pub r: f64,
    pub s: f64,
    pub snapshots: Vec<SolitonSnapshot>,
}

impl SolitonTrajectory {
    /// Largest relative drift of `H^(k)` over the run, per channel.
    pub fn drift(&self, ch: Channel, k: usize) -> f64 {
        let get = |s: &SolitonSnapshot| match ch {
            Channel::H => s.ham_h[k],
            Channel::V => s.ham_v[k],
        };
        let Some(first) = self.snapshots.first() else { return 0.0 };
        let h0 = get(first);
        let scale = h0.abs().max(f64::MIN_POSITIVE);
        self.snapshots.iter().map(|s| (get(s) - h0).abs() / scale).fold(0.0, f64::max)
    }

    pub fn last(&self) -> Option<&SolitonSnapshot> {
        self.snapshots.last()
    }
}

/// Fourier symbol of the linear part `L` of flow `k`.
fn linear_symbol(k: i32, curv: f64, ik: Complex64) -> Complex64 {
    match k {
        0 => ik,
        1 => ik.powu(3) - ik * curv,
        _ => ik.powu(5) - ik.powu(3) * curv,
    }
}

/// Nonlinear remainder `v_τ − L v`.
fn nonlinear_part(sp: &Spectral, v: &Field, k: i32, curv: f64) -> Field {
    let m = sp.nodes();
    if k == 0 || v.is_empty() {
        return zero_field(v.len(), m);
    }
    let v1 = derivative(sp, v, 1);
    let s = dot(v, v);
    if k == 1 {
        let c: Vec<f64> = s.iter().map(|x| 1.5 * x).collect();
        return scale_by(&c, &v1);
    }
    let v2 = derivative(sp, v, 2);
    let v3 = derivative(sp, v, 3);
    let a = dot(v, &v1);
    let b = dot(v, &v2);
    let q = dot(&v1, &v1);
    let c3: Vec<f64> = s.iter().map(|x| 2.5 * x).collect();
    let c2: Vec<f64> = a.iter().map(|x| 5.0 * x).collect();
    let c1: Vec<f64> = (0..m).map(|p| 5.0 * b[p] + 2.5 * q[p] + 1.875 * s[p] * s[p] - 1.5 * curv * s[p]).collect();
    let mut out = scale_by(&c3, &v3);
    add_into(&mut out, &scale_by(&c2, &v2), 1.0);
    add_into(&mut out, &scale_by(&c1, &v1), 1.0);
    out
}

struct Lawson<'a> {
    sp: &'a Spectral,
    k: i32,
    curv: f64,
    half: Vec<Complex64>,
}

impl<'a> Lawson<'a> {
    fn new(sp: &'a Spectral, k: i32, curv: f64, dt: f64) -> Self {
        let half = sp.wavenumbers().iter().map(|&z| (linear_symbol(k, curv, z) * (0.5 * dt)).exp()).collect();
        Lawson { sp, k, curv, half }
    }

    fn n_hat(&self, u: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
        if self.k == 0 {
            return u.iter().map(|c| vec![Complex64::new(0.0, 0.0); c.len()]).collect();
        }
        let v: Field = u.iter().map(|c| self.sp.inverse(c)).collect();
        nonlinear_part(self.sp, &v, self.k, self.curv).iter().map(|c| self.sp.forward(c)).collect()
    }

    fn e(&self, u: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
        u.iter().map(|c| c.iter().zip(&self.half).map(|(a, b)| a * b).collect()).collect()
    }

    fn lin(a: &[Vec<Complex64>], b: &[Vec<Complex64>], s: f64) -> Vec<Vec<Complex64>> {
        a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q * s).collect()).collect()
    }

    /// One integrating-factor RK4 step on Fourier coefficients.
    fn step(&self, u: &[Vec<Complex64>], dt: f64) -> Vec<Vec<Complex64>> {
        let k1 = self.n_hat(u);
        let k2 = self.n_hat(&self.e(&Self::lin(u, &k1, 0.5 * dt)));
        let eu = self.e(u);
        let k3 = self.n_hat(&Self::lin(&eu, &k2, 0.5 * dt));
        let eeu = self.e(&eu);
        let k4 = self.n_hat(&Self::lin(&eeu, &self.e(&k3), dt));
        let ek1 = self.e(&self.e(&k1));
        let e23 = self.e(&Self::lin(&k2, &k3, 1.0));
        let mut out = Self::lin(&eeu, &ek1, dt / 6.0);
        out = Self::lin(&out, &e23, dt / 3.0);
        Self::lin(&out, &k4, dt / 6.0)
    }
}

/// Evolves both channels of `v0` under flow `k ∈ {0, 1, 2}` with Lawson RK4,
/// recording a snapshot every `every` steps and at `tau_end`.
pub fn evolve(v0: &CurveState, flow: Flow, tau_end: f64, dtau: f64, every: usize) -> Result<SolitonTrajectory> {
    v0.validate()?;
    let k = flow.order();
    if !(0..=2).contains(&k) {
        return Err(Error::UnsupportedOrder(k));
    }
    if !(dtau > 0.0 && dtau.is_finite()) || !(tau_end >= 0.0 && tau_end.is_finite()) {
        return Err(Error::config("dtau", "step and end time must be positive and finite"));
    }
    let sp = Spectral::new(v0.grid)?;
    let steps = ((tau_end / dtau).ceil() as usize).max(usize::from(tau_end > 0.0));
    let dt = if steps > 0 { tau_end / steps as f64 } else { 0.0 };
    let every = every.max(1);
    let mut chans = Vec::new();
    for ch in [Channel::H, Channel::V] {
        let lw = Lawson::new(&sp, k, v0.curvature(ch), dt);
        let u: Vec<Vec<Complex64>> = v0.field(ch).iter().map(|c| sp.forward(c)).collect();
        chans.push((lw, u));
    }
    let snap = |tau: f64, chans: &[(Lawson, Vec<Vec<Complex64>>)]| {
        let h: Field = chans[0].1.iter().map(|c| sp.inverse(c)).collect();
        let v: Field = chans[1].1.iter().map(|c| sp.inverse(c)).collect();
        SolitonSnapshot { tau, ham_h: hamiltonians(&sp, &h), ham_v: hamiltonians(&sp, &v), h, v }
    };
    let mut snapshots = vec![snap(0.0, &chans)];
    for n in 1..=steps {
        for (lw, u) in chans.iter_mut() {
            *u = lw.step(u, dt);
        }
        let tau = n as f64 * dt;
        if chans.iter().any(|(_, u)| u.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
            return Err(Error::BlowUp { tau });
        }
        if n % every == 0 || n == steps {
            snapshots.push(snap(tau, &chans));
        }
    }
    Ok(SolitonTrajectory { flow, grid: v0.grid, r: v0.r, s: v0.s, snapshots })
}

/// Nodewise frame of the −1 flow: `e_∥` and `e_⊥ ∈ R^{d}` along an open arc.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SGState {
    pub grid: Grid,
    pub v: Field,
    pub e_par: Vec<f64>,
    pub e_perp: Field,
}

/// Rotates `(x0, xp)` by `exp(h A(v))`, `A = [[0, −vᵀ], [v, 0]]`.
fn rotate_cell(v: &[f64], h: f64, x0: f64, xp: &[f64]) -> (f64, Vec<f64>) {
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nv == 0.0 {
        return (x0, xp.to_vec());
    }
    let u: Vec<f64> = v.iter().map(|x| x / nv).collect();
    let p = u.iter().zip(xp).map(|(a, b)| a * b).sum::<f64>();
    let (s, c) = (nv * h).sin_cos();
    let x0n = x0 * c - p * s;
    let pn = x0 * s + p * c;
    let xpn = xp.iter().zip(&u).map(|(x, ui)| x + (pn - p) * ui).collect();
    (x0n, xpn)
}

/// Integrates `D e_∥ = −v·e_⊥`, `D e_⊥ = e_∥ v` from the node-0 seed with an
/// exact rotation per cell, `v` taken at the cell midpoint.
pub fn reconstruct_frame(grid: &Grid, v: &Field, seed_par: f64, seed_perp: &[f64]) -> (Vec<f64>, Field) {
    let m = grid.nodes;
    let d = v.len();
    let h = grid.spacing();
    let mut e_par = vec![0.0; m];
    let mut e_perp = zero_field(d, m);
    let mut x0 = seed_par;
    let mut xp = seed_perp.to_vec();
    for i in 0..m {
        e_par[i] = x0;
        for c in 0..d {
            e_perp[c][i] = xp[c];
        }
        if i + 1 < m {
            let mid: Vec<f64> = (0..d).map(|c| 0.5 * (v[c][i] + v[c][i + 1])).collect();
            (x0, xp) = rotate_cell(&mid, h, x0, &xp);
        }
    }
    (e_par, e_perp)
}

impl SGState {
    /// Frame reconstructed from `v` and a seed normalised to unit length.
    pub fn from_seed(grid: Grid, v: Field, seed_par: f64, seed_perp: &[f64]) -> Result<Self> {
        grid.validate()?;
        check_field(&v, grid.nodes)?;
        if seed_perp.len() != v.len() {
            return Err(Error::Dimension { expected: v.len(), got: seed_perp.len() });
        }
        let n = (seed_par * seed_par + seed_perp.iter().map(|x| x * x).sum::<f64>()).sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::config("seed", "frame seed must be nonzero"));
        }
        let sp: Vec<f64> = seed_perp.iter().map(|x| x / n).collect();
        let (e_par, e_perp) = reconstruct_frame(&grid, &v, seed_par / n, &sp);
        let st = SGState { grid, v, e_par, e_perp };
        st.check_hyperbolic()?;
        Ok(st)
    }

    /// `(e_∥² + |e_⊥|²)` per node.
    pub fn frame_norm(&self) -> Vec<f64> {
        let p = dot(&self.e_perp, &self.e_perp);
        self.e_par.iter().zip(&p).map(|(a, b)| a * a + b).collect()
    }

    /// `max |∂_l (e_∥² + |e_⊥|²)|` by neighbour differences.
    pub fn conservation_defect(&self) -> f64 {
        let n = self.frame_norm();
        let h = self.grid.spacing();
        n.windows(2).map(|w| ((w[1] - w[0]) / h).abs()).fold(0.0, f64::max)
    }

    /// `max |e_∥² + |e_⊥|² − 1|`.
    pub fn normalization_defect(&self) -> f64 {
        self.frame_norm().iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max)
    }

    /// `e_∥ = √(1 − |e_⊥|²)` needs `e_∥ > 0`; `|v_τ| / |curv| = |e_⊥|`.
    pub fn check_hyperbolic(&self) -> Result<()> {
        let p = dot(&self.e_perp, &self.e_perp);
        for (i, (&a, &b)) in self.e_par.iter().zip(&p).enumerate() {
            if !(a > 0.0) || !(b < 1.0) {
                return Err(Error::Hyperbolicity { node: i, value: b.sqrt() });
            }
        }
        Ok(())
    }
}

/// One RK4 step of `v_τ = −curv e_⊥[v]`, the frame rebuilt from the fixed
/// node-0 seed at every stage.
pub fn sg_minus1_flow(s: &SGState, dtau: f64, curv: f64) -> Result<SGState> {
    let seed_par = s.e_par[0];
    let seed_perp: Vec<f64> = s.e_perp.iter().map(|c| c[0]).collect();
    let rhs = |v: &Field| -> Result<Field> {
        let (e_par, e_perp) = reconstruct_frame(&s.grid, v, seed_par, &seed_perp);
        SGState { grid: s.grid, v: v.clone(), e_par, e_perp: e_perp.clone() }.check_hyperbolic()?;
        Ok(e_perp.iter().map(|c| c.iter().map(|x| -curv * x).collect()).collect())
    };
    let stage = |k: &Field, a: f64| {
        let mut v = s.v.clone();
        add_into(&mut v, k, a);
        v
    };
    let k1 = rhs(&s.v)?;
    let k2 = rhs(&stage(&k1, 0.5 * dtau))?;
    let k3 = rhs(&stage(&k2, 0.5 * dtau))?;
    let k4 = rhs(&stage(&k3, dtau))?;
    let mut v = s.v.clone();
    add_into(&mut v, &k1, dtau / 6.0);
    add_into(&mut v, &k2, dtau / 3.0);
    add_into(&mut v, &k3, dtau / 3.0);
    add_into(&mut v, &k4, dtau / 6.0);
    if v.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::BlowUp { tau: dtau });
    }
    let (e_par, e_perp) = reconstruct_frame(&s.grid, &v, seed_par, &seed_perp);
    let out = SGState { grid: s.grid, v, e_par, e_perp };
    out.check_hyperbolic()?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SGSnapshot {
    pub tau: f64,
    pub state: SGState,
    pub conservation_defect: f64,
    pub normalization_defect: f64,
}

/// Runs the −1 flow to `tau_end`, recording every `every` steps.
pub fn sg_evolve(s0: &SGState, tau_end: f64, dtau: f64, curv: f64, every: usize) -> Result<Vec<SGSnapshot>> {
    if !(dtau > 0.0 && dtau.is_finite()) || !(tau_end >= 0.0 && tau_end.is_finite()) {
        return Err(Error::config("dtau", "step and end time must be positive and finite"));
    }
    s0.check_hyperbolic()?;
    let steps = (tau_end / dtau).ceil() as usize;
    let dt = if steps > 0 { tau_end / steps as f64 } else { 0.0 };
    let every = every.max(1);
    let rec = |tau: f64, s: &SGState| SGSnapshot {
        tau,
        conservation_defect: s.conservation_defect(),
        normalization_defect: s.normalization_defect(),
        state: s.clone(),
    };
    let mut out = vec![rec(0.0, s0)];
    let mut s = s0.clone();
    for n in 1..=steps {
        let tau = n as f64 * dt;
        s = sg_minus1_flow(&s, dt, curv).map_err(|e| match e {
            Error::BlowUp { .. } => Error::BlowUp { tau },
            e => e,
        })?;
        if n % every == 0 || n == steps {
            out.push(rec(tau, &s));
        }
    }
    Ok(out)
}

/// Band-limited random field with Fourier modes `1..=modes`.
pub fn random_field<R: Rng>(grid: &Grid, dim: usize, modes: usize, amp: f64, rng: &mut R) -> Field {
    let x = grid.coords();
    (0..dim)
        .map(|_| {
            let coef: Vec<(f64, f64)> =
                (0..modes).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            x.iter()
                .map(|&l| {
                    coef.iter()
                        .enumerate()
                        .map(|(j, (a, b))| {
                            let q = 2.0 * PI * (j + 1) as f64 * l / grid.length;
                            amp * (a * q.cos() + b * q.sin()) / (j + 1) as f64
                        })
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Initial curve data by catalog name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialCurve {
    Zero,
    /// `amp · sin(2π mode l / L + c π/3)` on component `c`.
    Sine { amp: f64, mode: usize },
    /// `amp · sech((l − L/2) / width)` on component 0, halved on the others.
    Sech { amp: f64, width: f64 },
    Random { amp: f64, modes: usize, seed: u64 },
}

impl InitialCurve {
    /// Parses `name[:p1,p2,...]`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, args) = spec.split_once(':').unwrap_or((spec, ""));
        let nums: Vec<f64> = if args.is_empty() {
            Vec::new()
        } else {
            args.split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| Error::config("init", format!("bad number `{t}`"))))
                .collect::<Result<_>>()?
        };
        let arg = |i: usize, d: f64| nums.get(i).copied().unwrap_or(d);
        let c = match name {
            "zero" => InitialCurve::Zero,
            "sine" => InitialCurve::Sine { amp: arg(0, 0.5), mode: arg(1, 1.0) as usize },
            "sech" => InitialCurve::Sech { amp: arg(0, 1.0), width: arg(1, 1.0) },
            "random" => InitialCurve::Random { amp: arg(0, 0.5), modes: arg(1, 4.0) as usize, seed: arg(2, 0.0) as u64 },
            _ => return Err(Error::config("init", format!("unknown initial curve `{name}`"))),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InitialCurve::Sech { width, .. } if !(*width > 0.0) => Err(Error::config("init", "width must be positive")),
            InitialCurve::Sine { mode: 0, .. } => Err(Error::config("init", "mode must be at least 1")),
            _ => Ok(()),
        }
    }

    pub fn sample(&self, grid: &Grid, dim: usize) -> Field {
        let len = grid.length;
        match *self {
            InitialCurve::Zero => zero_field(dim, grid.nodes),
            InitialCurve::Sine { amp, mode } => (0..dim)
                .map(|c| grid.sample(|l| amp * (2.0 * PI * mode as f64 * l / len + c as f64 * PI / 3.0).sin()))
                .collect(),
            InitialCurve::Sech { amp, width } => (0..dim)
                .map(|c| {
                    let a = if c == 0 { amp } else { 0.5 * amp };
                    grid.sample(|l| a / ((l - 0.5 * len) / width).cosh())
                })
                .collect(),
            InitialCurve::Random { amp, modes, seed } => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                random_field(grid, dim, modes, amp, &mut rng)
            }
        }
    }
}
