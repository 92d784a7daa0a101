//! N-adapted Ricci flow of d-metric blocks on a coordinate lattice.
//!
//! A state stores lattice corrections `δg`, `δh` on top of the exact initial
//! blocks. Node geometry is evaluated on `g₀ + F J[Q] Fᵀ`, where `g₀ = F η Fᵀ`,
//! `Q = F⁻¹ δg F⁻ᵀ` and `J` is the quadratic Taylor model built from lattice
//! stencils. Curvature is exact for the initial data and for homothetic
//! evolutions (`Q` uniform); otherwise it carries the stencil error of `Q`.

mod lattice;

pub use lattice::{fornberg_weights, Lattice, Stencil, DEFAULT_STENCIL};

use crate::dgeometry::{block_factor, BlockField, ConnectionKind, CurvatureBundle, DMetric};
use crate::error::{Error, Result};
use crate::nconnection::{NAdaptedFrame, NConnection};
use crate::tensor_core::{seed_along, Dual, Mat, Real};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Prescribed `N(χ) = s(χ) N₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NSchedule {
    Frozen,
    /// `s(χ) = Σ c_k χ^k`.
    Polynomial { coeffs: Vec<f64> },
}

impl NSchedule {
    pub fn factor(&self, chi: f64) -> f64 {
        match self {
            NSchedule::Frozen => 1.0,
            NSchedule::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |a, c| a * chi + c),
        }
    }

    pub fn rate(&self, chi: f64) -> f64 {
        match self {
            NSchedule::Frozen => 0.0,
            NSchedule::Polynomial { coeffs } => {
                coeffs.iter().enumerate().skip(1).rev().fold(0.0, |a, (k, c)| a * chi + k as f64 * c)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LambdaMode {
    /// `λ = r/5`, refreshed after every accepted step.
    Normalized,
    Fixed { lambda: f64 },
    /// `λ(χ) = λ₀/(1 − λ₀χ)`.
    Einstein { lambda0: f64 },
}

impl LambdaMode {
    fn at(&self, chi: f64, held: f64) -> f64 {
        match self {
            LambdaMode::Normalized => held,
            LambdaMode::Fixed { lambda } => *lambda,
            LambdaMode::Einstein { lambda0 } => lambda0 / (1.0 - lambda0 * chi),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSetup {
    pub dm: DMetric,
    pub lattice: Lattice,
    pub schedule: NSchedule,
    pub lambda: LambdaMode,
}

/// Stencils and frame-relative corrections shared by all nodes of one evaluation.
#[derive(Clone, Debug)]
pub struct NodeModel {
    pub st: Vec<Vec<Stencil>>,
    pub qg: Vec<Mat<f64>>,
    pub qh: Vec<Mat<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub chi: f64,
    pub lambda: f64,
    /// Per-node corrections to the initial blocks.
    pub dg: Vec<Mat<f64>>,
    pub dh: Vec<Mat<f64>>,
    /// Per-node `e_ᾱ^α`: row `ᾱ`, column `α`.
    pub frames: Vec<Mat<f64>>,
}

impl FlowSetup {
    pub fn new(dm: DMetric, lattice: Lattice, schedule: NSchedule, lambda: LambdaMode) -> Result<Self> {
        dm.validate()?;
        lattice.validate()?;
        if lattice.dim() != dm.dim() {
            return Err(Error::Dimension { expected: dm.dim(), got: lattice.dim() });
        }
        Ok(FlowSetup { dm, lattice, schedule, lambda })
    }

    pub fn nconn_at(&self, chi: f64) -> NConnection {
        match self.schedule {
            NSchedule::Frozen => self.dm.nconn.clone(),
            _ => NConnection::Scaled { inner: Box::new(self.dm.nconn.clone()), factor: self.schedule.factor(chi) },
        }
    }

    /// Corrections expressed in the initial block frames, `Q = F⁻¹ δg F⁻ᵀ` with `g₀ = F η Fᵀ`.
    pub fn node_model(&self, dg: &[Mat<f64>], dh: &[Mat<f64>]) -> Result<NodeModel> {
        let n = self.dm.n;
        let rel = |block: &BlockField, d: &[Mat<f64>]| -> Result<Vec<Mat<f64>>> {
            d.iter()
                .enumerate()
                .map(|(p, dp)| {
                    let fi = block_factor(&block.eval(&self.lattice.point(p), n)?)?.inverse()?;
                    Ok(fi.matmul(dp).matmul(&fi.transpose()))
                })
                .collect()
        };
        Ok(NodeModel { st: self.lattice.stencils(), qg: rel(&self.dm.g, dg)?, qh: rel(&self.dm.h, dh)? })
    }

    /// The d-metric used to evaluate geometry at one node.
    pub fn node_dmetric(&self, model: &NodeModel, chi: f64, node: usize) -> DMetric {
        let jet_g = self.lattice.mat_jet(&model.st, &model.qg, node);
        let jet_h = self.lattice.mat_jet(&model.st, &model.qh, node);
        DMetric {
            n: self.dm.n,
            m: self.dm.m,
            g: BlockField::Relative { base: Box::new(self.dm.g.clone()), jet: jet_g },
            h: BlockField::Relative { base: Box::new(self.dm.h.clone()), jet: jet_h },
            nconn: self.nconn_at(chi),
            tm: self.dm.tm,
        }
    }

    pub fn initial_state(&self) -> Result<FlowState> {
        let (n, m) = (self.dm.n, self.dm.m);
        let len = self.lattice.len();
        let nc = self.nconn_at(0.0);
        let frames = (0..len)
            .map(|p| {
                let nv = nc.eval(&self.lattice.point(p))?;
                Ok(NAdaptedFrame::from_coefficients(&nv, n, m).frame.transpose())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut s = FlowState { chi: 0.0, lambda: 0.0, dg: vec![Mat::zeros(n, n); len], dh: vec![Mat::zeros(m, m); len], frames };
        s.lambda = match self.lambda {
            LambdaMode::Normalized => normalization_factor(self, &s)? / 5.0,
            _ => self.lambda.at(0.0, 0.0),
        };
        Ok(s)
    }
}

fn singular(chi: f64, node: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::SingularMetric { .. } | Error::Regularity { .. } | Error::Signature(_) => Error::FlowSingularity { chi, node },
        other => other,
    }
}

fn finite_or(chi: f64, node: usize, m: &Mat<f64>) -> Result<()> {
    if m.data.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::FlowSingularity { chi, node })
    }
}

/// Canonical curvature bundle at every node.
pub fn node_geometries(setup: &FlowSetup, chi: f64, dg: &[Mat<f64>], dh: &[Mat<f64>]) -> Result<Vec<CurvatureBundle>> {
    let model = setup.node_model(dg, dh).map_err(singular(chi, 0))?;
    (0..setup.lattice.len())
        .into_par_iter()
        .map(|p| {
            let dm = setup.node_dmetric(&model, chi, p);
            let u = setup.lattice.point(p);
            let (g, h, _) = dm.blocks(&u)?;
            finite_or(chi, p, &g)?;
            finite_or(chi, p, &h)?;
            let cb = CurvatureBundle::compute(&dm, ConnectionKind::Canonical, &u).map_err(singular(chi, p))?;
            finite_or(chi, p, &cb.ricci.r_ij)?;
            finite_or(chi, p, &cb.ricci.s_ab)?;
            Ok(cb)
        })
        .collect()
}

fn state_geometries(setup: &FlowSetup, s: &FlowState) -> Result<Vec<CurvatureBundle>> {
    node_geometries(setup, s.chi, &s.dg, &s.dh)
}

fn node_blocks(setup: &FlowSetup, chi: f64, dg: &[Mat<f64>], dh: &[Mat<f64>], p: usize) -> Result<(Mat<f64>, Mat<f64>)> {
    let u = setup.lattice.point(p);
    let g = setup.dm.g.eval(&u, setup.dm.n)?.add(&dg[p]);
    let h = setup.dm.h.eval(&u, setup.dm.n)?.add(&dh[p]);
    let _ = chi;
    Ok((g, h))
}

/// `r = Σ w (→R + ←S) √|det g det h| / Σ w √|det g det h|` with trapezoid weights.
pub fn normalization_from(setup: &FlowSetup, s: &FlowState, geo: &[CurvatureBundle]) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, cb) in geo.iter().enumerate() {
        let (g, h) = node_blocks(setup, s.chi, &s.dg, &s.dh, p)?;
        let vol = (g.det() * h.det()).abs().sqrt() * setup.lattice.weight(p);
        num += vol * cb.ricci.total_scalar();
        den += vol;
    }
    Ok(num / den)
}

pub fn normalization_factor(setup: &FlowSetup, s: &FlowState) -> Result<f64> {
    normalization_from(setup, s, &state_geometries(setup, s)?)
}

type Rates = (Vec<Mat<f64>>, Vec<Mat<f64>>);

/// `(∂δg/∂χ, ∂δh/∂χ)` at a stage.
fn flow_rhs(setup: &FlowSetup, chi: f64, lambda: f64, dg: &[Mat<f64>], dh: &[Mat<f64>]) -> Result<Rates> {
    let geo = node_geometries(setup, chi, dg, dh)?;
    let (n, m) = (setup.dm.n, setup.dm.m);
    let s = setup.schedule.factor(chi);
    let sd = setup.schedule.rate(chi);
    let out: Vec<(Mat<f64>, Mat<f64>)> = geo
        .par_iter()
        .enumerate()
        .map(|(p, cb)| {
            let u = setup.lattice.point(p);
            let (g, h) = node_blocks(setup, chi, dg, dh, p)?;
            let n0 = setup.dm.nconn.eval(&u)?;
            let nv = n0.scale(s);
            let nd = n0.scale(sd);
            let hdot = Mat::from_fn(m, m, |a, b| -2.0 * (cb.ricci.s_ab[(a, b)] - lambda * h[(a, b)]));
            // ∂(h_ab N^a_i N^b_j)/∂χ with the stage's own ∂h/∂χ.
            let coupling = nv.transpose().matmul(&hdot).matmul(&nv).add(
                &nd.transpose().matmul(&h).matmul(&nv).add(&nv.transpose().matmul(&h).matmul(&nd)),
            );
            let gdot = Mat::from_fn(n, n, |i, j| -2.0 * (cb.ricci.r_ij[(i, j)] - lambda * g[(i, j)]) - coupling[(i, j)]);
            Ok((gdot, hdot))
        })
        .collect::<Result<_>>()?;
    Ok(out.into_iter().unzip())
}

fn axpy(base: &[Mat<f64>], k: &[Mat<f64>], h: f64) -> Vec<Mat<f64>> {
    base.iter().zip(k).map(|(b, k)| b.add(&k.scale(h))).collect()
}

fn rk4_combine(y: &[Mat<f64>], ks: [&[Mat<f64>]; 4], h: f64) -> Vec<Mat<f64>> {
    (0..y.len())
        .map(|p| {
            let inc = ks[0][p].add(&ks[1][p].scale(2.0)).add(&ks[2][p].scale(2.0)).add(&ks[3][p]);
            y[p].add(&inc.scale(h / 6.0))
        })
        .collect()
}

/// `M = blockdiag(g⁻¹R_ij, h⁻¹S_ab)` per node.
fn frame_generators(setup: &FlowSetup, s: &FlowState, geo: &[CurvatureBundle]) -> Result<Vec<Mat<f64>>> {
    let (n, m) = (setup.dm.n, setup.dm.m);
    (0..geo.len())
        .map(|p| {
            let (g, h) = node_blocks(setup, s.chi, &s.dg, &s.dh, p)?;
            let mh = g.inverse().map_err(singular(s.chi, p))?.matmul(&geo[p].ricci.r_ij);
            let mv = h.inverse().map_err(singular(s.chi, p))?.matmul(&geo[p].ricci.s_ab);
            let mut mm = Mat::zeros(n + m, n + m);
            for i in 0..n {
                for j in 0..n {
                    mm[(i, j)] = mh[(i, j)];
                }
            }
            for a in 0..m {
                for b in 0..m {
                    mm[(n + a, n + b)] = mv[(a, b)];
                }
            }
            Ok(mm)
        })
        .collect()
}

fn frames_rk4(frames: &[Mat<f64>], gens: &[Mat<f64>], dchi: f64) -> Vec<Mat<f64>> {
    frames
        .iter()
        .zip(gens)
        .map(|(f, mm)| {
            // Row ᾱ of F evolves as v' = M v, i.e. F' = F Mᵀ.
            let mt = mm.transpose();
            let k1 = f.matmul(&mt);
            let k2 = f.add(&k1.scale(0.5 * dchi)).matmul(&mt);
            let k3 = f.add(&k2.scale(0.5 * dchi)).matmul(&mt);
            let k4 = f.add(&k3.scale(dchi)).matmul(&mt);
            f.add(&k1.add(&k2.scale(2.0)).add(&k3.scale(2.0)).add(&k4).scale(dchi / 6.0))
        })
        .collect()
}

/// One RK4 step of `∂e_ᾱ^α/∂χ = g^αβ R̂_βγ e_ᾱ^γ` with the generator frozen at the step start.
pub fn frame_evolution_step(setup: &FlowSetup, s: &FlowState, dchi: f64) -> Result<Vec<Mat<f64>>> {
    let geo = state_geometries(setup, s)?;
    Ok(frames_rk4(&s.frames, &frame_generators(setup, s, &geo)?, dchi))
}

/// Largest entry of the block that must stay zero in `e_ᾱ^α`.
pub fn frame_triangularity_defect(setup: &FlowSetup, s: &FlowState) -> f64 {
    let (n, m) = (setup.dm.n, setup.dm.m);
    let mut worst: f64 = 0.0;
    for f in &s.frames {
        for a in 0..m {
            for i in 0..n {
                worst = worst.max(f[(n + a, i)].abs());
            }
        }
    }
    worst
}

/// Rough explicit-stability bound `2.5 / max(4 g^{αα} / Δu_α²)` over nodes and lattice axes.
///
/// Flows on a box carry no boundary data, so steps above this bound amplify
/// round-off at the lattice edges.
pub fn explicit_step_limit(setup: &FlowSetup, s: &FlowState) -> Result<f64> {
    let n = setup.dm.n;
    let mut worst: f64 = 0.0;
    for p in 0..setup.lattice.len() {
        let (g, h) = node_blocks(setup, s.chi, &s.dg, &s.dh, p)?;
        let (gi, hi) = (g.inverse()?, h.inverse()?);
        for ax in 0..setup.lattice.dim() {
            let du = setup.lattice.spacing(ax);
            if du == 0.0 {
                continue;
            }
            let c = if ax < n { gi[(ax, ax)] } else { hi[(ax - n, ax - n)] };
            worst = worst.max(4.0 * c.abs() / (du * du));
        }
    }
    Ok(if worst == 0.0 { f64::INFINITY } else { 2.5 / worst })
}

fn check_step(dchi: f64) -> Result<()> {
    if !(dchi > 0.0) || !dchi.is_finite() {
        return Err(Error::config("dchi", "step must be positive and finite"));
    }
    Ok(())
}

/// One RK4 step of the coupled h/v flow; frames advance with the same step.
pub fn ricci_flow_step(setup: &FlowSetup, s: &FlowState, dchi: f64) -> Result<FlowState> {
    check_step(dchi)?;
    let lam = |chi: f64| setup.lambda.at(chi, s.lambda);
    let geo0 = state_geometries(setup, s)?;
    let gens = frame_generators(setup, s, &geo0)?;
    let (c0, c1, c2) = (s.chi, s.chi + 0.5 * dchi, s.chi + dchi);
    let k1 = flow_rhs(setup, c0, lam(c0), &s.dg, &s.dh)?;
    let k2 = flow_rhs(setup, c1, lam(c1), &axpy(&s.dg, &k1.0, 0.5 * dchi), &axpy(&s.dh, &k1.1, 0.5 * dchi))?;
    let k3 = flow_rhs(setup, c1, lam(c1), &axpy(&s.dg, &k2.0, 0.5 * dchi), &axpy(&s.dh, &k2.1, 0.5 * dchi))?;
    let k4 = flow_rhs(setup, c2, lam(c2), &axpy(&s.dg, &k3.0, dchi), &axpy(&s.dh, &k3.1, dchi))?;
    let dg = rk4_combine(&s.dg, [&k1.0, &k2.0, &k3.0, &k4.0], dchi);
    let dh = rk4_combine(&s.dh, [&k1.1, &k2.1, &k3.1, &k4.1], dchi);
    let mut next = FlowState { chi: c2, lambda: lam(c2), dg, dh, frames: frames_rk4(&s.frames, &gens, dchi) };
    for p in 0..next.dg.len() {
        finite_or(c2, p, &next.dg[p])?;
        finite_or(c2, p, &next.dh[p])?;
        let (g, h) = node_blocks(setup, c2, &next.dg, &next.dh, p)?;
        if !(g.det().abs() > crate::tensor_core::DEGENERACY_TOL && h.det().abs() > crate::tensor_core::DEGENERACY_TOL) {
            return Err(Error::FlowSingularity { chi: c2, node: p });
        }
    }
    if setup.lambda == LambdaMode::Normalized {
        next.lambda = normalization_factor(setup, &next)? / 5.0;
    }
    Ok(next)
}

/// Result of a constrained step; a violation is reported alongside the state.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstrainedStep {
    pub state: FlowState,
    pub residual: f64,
    pub violation: Option<Error>,
}

/// `max |R_ij − λ g_ij|, |S_ab − λ h_ab|` over all nodes.
pub fn einstein_residual(setup: &FlowSetup, s: &FlowState) -> Result<f64> {
    let geo = state_geometries(setup, s)?;
    let mut worst: f64 = 0.0;
    for (p, cb) in geo.iter().enumerate() {
        let (g, h) = node_blocks(setup, s.chi, &s.dg, &s.dh, p)?;
        worst = worst.max(cb.ricci.r_ij.max_diff(&g.scale(s.lambda)));
        worst = worst.max(cb.ricci.s_ab.max_diff(&h.scale(s.lambda)));
    }
    Ok(worst)
}

/// `∂g_ij/∂χ = −g_ab ∂(N^a_i N^b_j)/∂χ`, `∂g_ab/∂χ = 0`.
pub fn einstein_constrained_step(setup: &FlowSetup, s: &FlowState, dchi: f64, tol: f64) -> Result<ConstrainedStep> {
    check_step(dchi)?;
    let len = setup.lattice.len();
    let rhs = |chi: f64| -> Result<Vec<Mat<f64>>> {
        let (f, fd) = (setup.schedule.factor(chi), setup.schedule.rate(chi));
        (0..len)
            .map(|p| {
                let u = setup.lattice.point(p);
                let (_, h) = node_blocks(setup, chi, &s.dg, &s.dh, p)?;
                let n0 = setup.dm.nconn.eval(&u)?;
                let (nv, nd) = (n0.scale(f), n0.scale(fd));
                Ok(nd.transpose().matmul(&h).matmul(&nv).add(&nv.transpose().matmul(&h).matmul(&nd)).scale(-1.0))
            })
            .collect()
    };
    let (c0, c1, c2) = (s.chi, s.chi + 0.5 * dchi, s.chi + dchi);
    let k1 = rhs(c0)?;
    let k2 = rhs(c1)?;
    let k4 = rhs(c2)?;
    let dg = rk4_combine(&s.dg, [&k1, &k2, &k2, &k4], dchi);
    let mut next = FlowState { chi: c2, lambda: setup.lambda.at(c2, s.lambda), dg, dh: s.dh.clone(), frames: s.frames.clone() };
    if setup.lambda == LambdaMode::Normalized {
        next.lambda = normalization_factor(setup, &next)? / 5.0;
    }
    let residual = einstein_residual(setup, &next)?;
    let violation = (residual > tol).then_some(Error::ConstraintViolation { residual, tol });
    Ok(ConstrainedStep { state: next, residual, violation })
}

/// Per-snapshot monitors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub chi: f64,
    pub lambda: f64,
    pub r_norm: f64,
    /// Volume-weighted means of `→R` and `←S`.
    pub r_mean: f64,
    pub s_mean: f64,
    pub r_nodes: Vec<f64>,
    pub s_nodes: Vec<f64>,
    /// `max |R_ia|, |R_ai|`.
    pub offdiag_max: f64,
    pub compat_max: f64,
    pub symmetry_defect: f64,
    pub frame_defect: f64,
}

pub fn diagnostics(setup: &FlowSetup, s: &FlowState) -> Result<Diagnostics> {
    let geo = state_geometries(setup, s)?;
    diagnostics_from(setup, s, &geo)
}

fn diagnostics_from(setup: &FlowSetup, s: &FlowState, geo: &[CurvatureBundle]) -> Result<Diagnostics> {
    let model = setup.node_model(&s.dg, &s.dh)?;
    let mut num_r = 0.0;
    let mut num_s = 0.0;
    let mut den = 0.0;
    let mut offdiag: f64 = 0.0;
    let mut compat: f64 = 0.0;
    let mut sym: f64 = 0.0;
    for (p, cb) in geo.iter().enumerate() {
        let (g, h) = node_blocks(setup, s.chi, &s.dg, &s.dh, p)?;
        let vol = (g.det() * h.det()).abs().sqrt() * setup.lattice.weight(p);
        num_r += vol * cb.ricci.r_scalar;
        num_s += vol * cb.ricci.s_scalar;
        den += vol;
        offdiag = offdiag.max(cb.ricci.r_ia.max_abs()).max(cb.ricci.r_ai.max_abs());
        sym = sym.max(g.symmetry_defect()).max(h.symmetry_defect());
        let dm = setup.node_dmetric(&model, s.chi, p);
        let dc = crate::dgeometry::DConnection {
            n: dm.n,
            m: dm.m,
            tm: dm.tm,
            kind: ConnectionKind::Canonical,
            coeffs: cb.coeffs.clone(),
        };
        compat = compat.max(crate::dgeometry::compatibility_residual(&dc, &dm, &cb.point)?);
    }
    Ok(Diagnostics {
        chi: s.chi,
        lambda: s.lambda,
        r_norm: (num_r + num_s) / den,
        r_mean: num_r / den,
        s_mean: num_s / den,
        r_nodes: geo.iter().map(|c| c.ricci.r_scalar).collect(),
        s_nodes: geo.iter().map(|c| c.ricci.s_scalar).collect(),
        offdiag_max: offdiag,
        compat_max: compat,
        symmetry_defect: sym,
        frame_defect: frame_triangularity_defect(setup, s),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub state: FlowState,
    pub diag: Diagnostics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub setup: FlowSetup,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum StepMode {
    Full,
    EinsteinConstrained { tol: f64 },
}

/// Uniform steps from `s0.chi` to `chi_end`; a snapshot every `every` steps plus the endpoints.
pub fn evolve(setup: &FlowSetup, s0: FlowState, chi_end: f64, dchi: f64, mode: StepMode, every: usize) -> Result<FlowTrajectory> {
    check_step(dchi)?;
    if !(chi_end >= s0.chi) {
        return Err(Error::config("chi_end", "must not precede the initial chi"));
    }
    let steps = ((chi_end - s0.chi) / dchi - 1e-9).ceil().max(0.0) as usize;
    let h = if steps == 0 { 0.0 } else { (chi_end - s0.chi) / steps as f64 };
    let every = every.max(1);
    let mut snaps = vec![Snapshot { diag: diagnostics(setup, &s0)?, state: s0.clone() }];
    let mut s = s0;
    for k in 1..=steps {
        s = match mode {
            StepMode::Full => ricci_flow_step(setup, &s, h)?,
            StepMode::EinsteinConstrained { tol } => {
                let cs = einstein_constrained_step(setup, &s, h, tol)?;
                if let Some(v) = cs.violation {
                    return Err(v);
                }
                cs.state
            }
        };
        if k % every == 0 || k == steps {
            snaps.push(Snapshot { diag: diagnostics(setup, &s)?, state: s.clone() });
        }
    }
    Ok(FlowTrajectory { setup: setup.clone(), snapshots: snaps })
}

/// `e_α f` and `e_α e_β f` for a lattice scalar at one node.
fn frame_derivatives(lat: &Lattice, st: &[Vec<Stencil>], f: &[f64], dm: &DMetric, node: usize) -> Result<(Vec<f64>, Mat<f64>)> {
    let (n, m) = (dm.n, dm.m);
    let d = n + m;
    let (_, grad, hess) = lat.scalar_jet(st, f, node);
    let u0 = lat.point(node);
    // e_β f at a point u near u0, from the quadratic model.
    fn e_beta<T: Real>(dm: &DMetric, u: &[T], u0: &[f64], grad: &[f64], hess: &[Vec<f64>], beta: usize) -> Result<T> {
        let (n, d) = (dm.n, u.len());
        let nv = dm.nconn.eval(u)?;
        let partial = |mu: usize| -> T {
            let mut s = T::cst(grad[mu]);
            for nu in 0..d {
                s += (u[nu] - u0[nu]) * hess[mu][nu];
            }
            s
        };
        if beta >= n {
            return Ok(partial(beta));
        }
        let mut s = partial(beta);
        for a in 0..dm.m {
            s -= nv[(a, beta)] * partial(n + a);
        }
        Ok(s)
    }
    let nv = dm.nconn.eval(&u0)?;
    let frame = NAdaptedFrame::from_coefficients(&nv, n, m).frame;
    let first: Vec<f64> = (0..d).map(|b| e_beta::<f64>(dm, &u0, &u0, &grad, &hess, b)).collect::<Result<_>>()?;
    let mut second = Mat::zeros(d, d);
    for al in 0..d {
        let v: Vec<f64> = (0..d).map(|mu| frame[(mu, al)]).collect();
        let ud: Vec<Dual<f64>> = seed_along(&u0, &v);
        for be in 0..d {
            second[(al, be)] = e_beta(dm, &ud, &u0, &grad, &hess, be)?.eps;
        }
    }
    Ok((first, second))
}

/// `max_nodes |∂→R/∂χ − (D̂_iD̂^i→R + 2R̂_ijR̂^ij)|` and the vertical analogue at snapshot `index`.
pub fn scalar_evolution_residual(traj: &FlowTrajectory, index: usize) -> Result<(f64, f64)> {
    let sn = &traj.snapshots;
    if index == 0 || index + 1 >= sn.len() {
        return Err(Error::NeedsNeighbors { index });
    }
    let setup = &traj.setup;
    let (n, m) = (setup.dm.n, setup.dm.m);
    let s = &sn[index].state;
    let span = sn[index + 1].diag.chi - sn[index - 1].diag.chi;
    let geo = state_geometries(setup, s)?;
    let rn: Vec<f64> = geo.iter().map(|c| c.ricci.r_scalar).collect();
    let sv: Vec<f64> = geo.iter().map(|c| c.ricci.s_scalar).collect();
    let model = setup.node_model(&s.dg, &s.dh)?;
    let st = &model.st;
    let mut worst_h: f64 = 0.0;
    let mut worst_v: f64 = 0.0;
    for (p, cb) in geo.iter().enumerate() {
        let dm = setup.node_dmetric(&model, s.chi, p);
        let (g, h) = node_blocks(setup, s.chi, &s.dg, &s.dh, p)?;
        let (gi, hi) = (g.inverse()?, h.inverse()?);
        let (r1, r2) = frame_derivatives(&setup.lattice, st, &rn, &dm, p)?;
        let (s1, s2) = frame_derivatives(&setup.lattice, st, &sv, &dm, p)?;
        let c = &cb.coeffs;
        let mut lap_r = 0.0;
        for k in 0..n {
            for j in 0..n {
                let mut t = r2[(k, j)];
                for i in 0..n {
                    t -= c.lh.at(&[i, j, k]) * r1[i];
                }
                lap_r += gi[(k, j)] * t;
            }
        }
        let mut lap_s = 0.0;
        for a in 0..m {
            for b in 0..m {
                let mut t = s2[(n + a, n + b)];
                for cc in 0..m {
                    t -= c.cv.at(&[cc, b, a]) * s1[n + cc];
                }
                lap_s += hi[(a, b)] * t;
            }
        }
        let ric = &cb.ricci.r_ij;
        let up = gi.matmul(ric).matmul(&gi);
        let mut rr = 0.0;
        for i in 0..n {
            for j in 0..n {
                rr += ric[(i, j)] * up[(i, j)];
            }
        }
        let sab = &cb.ricci.s_ab;
        let sup = hi.matmul(sab).matmul(&hi);
        let mut ss = 0.0;
        for a in 0..m {
            for b in 0..m {
                ss += sab[(a, b)] * sup[(a, b)];
            }
        }
        let dr = (sn[index + 1].diag.r_nodes[p] - sn[index - 1].diag.r_nodes[p]) / span;
        let ds = (sn[index + 1].diag.s_nodes[p] - sn[index - 1].diag.s_nodes[p]) / span;
        worst_h = worst_h.max((dr - lap_r - 2.0 * rr).abs());
        worst_v = worst_v.max((ds - lap_s - 2.0 * ss).abs());
    }
    Ok((worst_h, worst_v))
}

/// Which `λ̂(χ)` the extraction conditions are tested against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum LambdaHat {
    /// The state's own normalization constant.
    FromState,
    Schedule { lambda0: f64 },
}

impl LambdaHat {
    pub fn at(&self, snap: &Snapshot) -> f64 {
        match self {
            LambdaHat::FromState => snap.state.lambda,
            LambdaHat::Schedule { lambda0 } => lambda0 / (1.0 - lambda0 * snap.diag.chi),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    /// Per snapshot, `max_nodes |→R − (n−1)λ̂|`.
    pub fe1_h: Vec<f64>,
    /// Per snapshot, `max_nodes |←S − (m−1)λ̂|`.
    pub fe1_v: Vec<f64>,
    /// `|∂λ̂/∂χ − λ̂²|` at interior snapshots (central difference, zero Laplacian for uniform λ̂).
    pub fe2: Vec<Option<f64>>,
    pub max_fe1: f64,
    pub max_fe2: f64,
}

pub fn einstein_extraction_check(traj: &FlowTrajectory, lam: LambdaHat) -> ExtractionReport {
    let (n, m) = (traj.setup.dm.n as f64, traj.setup.dm.m as f64);
    let sn = &traj.snapshots;
    let lh: Vec<f64> = sn.iter().map(|s| lam.at(s)).collect();
    let fe1_h: Vec<f64> = sn
        .iter()
        .zip(&lh)
        .map(|(s, &l)| s.diag.r_nodes.iter().fold(0.0f64, |a, r| a.max((r - (n - 1.0) * l).abs())))
        .collect();
    let fe1_v: Vec<f64> = sn
        .iter()
        .zip(&lh)
        .map(|(s, &l)| s.diag.s_nodes.iter().fold(0.0f64, |a, r| a.max((r - (m - 1.0) * l).abs())))
        .collect();
    let fe2: Vec<Option<f64>> = (0..sn.len())
        .map(|k| {
            if k == 0 || k + 1 >= sn.len() {
                return None;
            }
            let dl = (lh[k + 1] - lh[k - 1]) / (sn[k + 1].diag.chi - sn[k - 1].diag.chi);
            Some((dl - lh[k] * lh[k]).abs())
        })
        .collect();
    let max_fe1 = fe1_h.iter().chain(&fe1_v).fold(0.0f64, |a, &b| a.max(b));
    let max_fe2 = fe2.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    ExtractionReport { fe1_h, fe1_v, fe2, max_fe1, max_fe2 }
}

/// Full coordinate-form blocks `(g, h, N)` at a node of a state.
pub fn node_blocks_full(setup: &FlowSetup, s: &FlowState, node: usize) -> Result<(Mat<f64>, Mat<f64>, Mat<f64>)> {
    let (g, h) = node_blocks(setup, s.chi, &s.dg, &s.dh, node)?;
    let nv = setup.nconn_at(s.chi).eval(&setup.lattice.point(node))?;
    Ok((g, h, nv))
}
