//! The invariant suite run by `verify` and by the acceptance harness.

use crate::constant_frame::constant_curvature_check;
use crate::dgeometry::{canonical_dconnection, compatibility_residual, dtorsion, tm_coincidence, ConnectionKind, CurvatureBundle, DMetric};
use crate::error::{Error, Result};
use crate::fixtures::{fixture, NAMES};
use crate::nconnection::{commutator_defect, nconnection_curvature};
use crate::ricci_flow::{self, FlowSetup, FlowState, LambdaMode, Lattice, NSchedule, StepMode};
use crate::soliton_hierarchy::{self as sh, Channel, CurveState, Field, Flow, Grid, SGState, Spectral};
use crate::tensor_core::MetricField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    /// `value ≤ limit`.
    Max,
    /// `value ≥ limit`.
    Min,
    /// Reported, never asserted.
    Info,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    pub name: String,
    pub value: f64,
    pub limit: Option<f64>,
    pub bound: Bound,
}

impl Measure {
    pub fn max(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Measure { name: name.into(), value, limit: Some(limit), bound: Bound::Max }
    }

    pub fn min(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Measure { name: name.into(), value, limit: Some(limit), bound: Bound::Min }
    }

    pub fn info(name: impl Into<String>, value: f64) -> Self {
        Measure { name: name.into(), value, limit: None, bound: Bound::Info }
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Measure::min(name, if ok { 1.0 } else { 0.0 }, 1.0)
    }

    pub fn passed(&self) -> bool {
        match (self.bound, self.limit) {
            (Bound::Max, Some(l)) => self.value <= l,
            (Bound::Min, Some(l)) => self.value >= l,
            _ => true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub measures: Vec<Measure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CheckResult {
    pub fn from_measures(name: &str, measures: Vec<Measure>) -> Self {
        let passed = measures.iter().all(Measure::passed);
        CheckResult { name: name.to_string(), passed, measures, error: None }
    }

    pub fn failed(name: &str, err: &Error) -> Self {
        CheckResult { name: name.to_string(), passed: false, measures: Vec::new(), error: Some(err.to_string()) }
    }
}

/// Check names in suite order.
pub const CHECKS: &[&str] = &[
    "metric-compatibility",
    "torsion-structure",
    "anholonomy-commutators",
    "tm-coincidence",
    "constant-curvature",
    "sphere-curvature-sign",
    "ricci-flow-order",
    "frame-evolution",
    "bi-hamiltonian-operators",
    "mkdv-conservation",
    "mkdv-scaling",
    "sine-gordon-conservation",
    "channel-parity",
];

fn rng_for(seed: u64, name: &str) -> ChaCha8Rng {
    let salt = name.bytes().fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3));
    ChaCha8Rng::seed_from_u64(seed ^ salt)
}

pub fn run_check(name: &str, seed: u64) -> Result<CheckResult> {
    let mut rng = rng_for(seed, name);
    let measures = match name {
        "metric-compatibility" => metric_compatibility(&mut rng, 500)?,
        "torsion-structure" => torsion_structure(&mut rng, 50)?,
        "anholonomy-commutators" => anholonomy_commutators(&mut rng, 20)?,
        "tm-coincidence" => tm_lift_coincidence(&mut rng, 20)?,
        "constant-curvature" => constant_curvature(&mut rng, 100)?,
        "sphere-curvature-sign" => sphere_sign(&mut rng)?,
        "ricci-flow-order" => ricci_flow_order()?,
        "frame-evolution" => frame_evolution()?,
        "bi-hamiltonian-operators" => bi_hamiltonian(&mut rng)?,
        "mkdv-conservation" => mkdv_conservation()?,
        "mkdv-scaling" => mkdv_scaling()?,
        "sine-gordon-conservation" => sine_gordon()?,
        "channel-parity" => channel_parity(&mut rng)?,
        _ => return Err(Error::config("checks", format!("unknown check `{name}`"))),
    };
    Ok(CheckResult::from_measures(name, measures))
}

/// Runs the named checks in parallel; results keep the given order.
pub fn run_suite(names: &[String], seed: u64) -> Result<Vec<CheckResult>> {
    for n in names {
        if !CHECKS.contains(&n.as_str()) {
            return Err(Error::config("checks", format!("unknown check `{n}`")));
        }
    }
    Ok(names
        .par_iter()
        .map(|n| run_check(n, seed).unwrap_or_else(|e| CheckResult::failed(n, &e)))
        .collect())
}

fn metric_compatibility(rng: &mut ChaCha8Rng, points: usize) -> Result<Vec<Measure>> {
    let mut out = Vec::new();
    for name in ["flat", "diagonal-polynomial", "conformal", "sphere"] {
        let fx = fixture(name)?;
        let pts = fx.samples(rng, points);
        let worst = pts
            .par_iter()
            .map(|u| compatibility_residual(&canonical_dconnection(&fx.dm, u)?, &fx.dm, u))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        out.push(Measure::max(name, worst, 1e-8));
    }
    Ok(out)
}

fn torsion_structure(rng: &mut ChaCha8Rng, points: usize) -> Result<Vec<Measure>> {
    let (mut pure, mut mixed) = (0.0f64, 0.0f64);
    for name in NAMES {
        let fx = fixture(name)?;
        for u in fx.samples(rng, points) {
            let dc = canonical_dconnection(&fx.dm, &u)?;
            let t = dtorsion(&dc, &fx.dm.nconn, &u)?;
            pure = pure.max(t.hhh.max_abs()).max(t.vvv.max_abs());
            mixed = mixed.max(t.vhh.max_diff(&nconnection_curvature(&fx.dm.nconn, &u)?));
        }
    }
    Ok(vec![Measure::max("T^i_jk, T^a_bc", pure, 1e-10), Measure::max("T^a_ji - Omega^a_ji", mixed, 1e-8)])
}

fn anholonomy_commutators(rng: &mut ChaCha8Rng, points: usize) -> Result<Vec<Measure>> {
    let mut worst = 0.0f64;
    for name in NAMES {
        let fx = fixture(name)?;
        for u in fx.samples(rng, points) {
            worst = worst.max(commutator_defect(&fx.dm.nconn, &u)?);
        }
    }
    Ok(vec![Measure::max("commutator - W", worst, 1e-8)])
}

fn tm_lift_coincidence(rng: &mut ChaCha8Rng, points: usize) -> Result<Vec<Measure>> {
    let mut out = Vec::new();
    for name in ["flat", "diagonal-polynomial", "conformal", "sphere", "bundle", "delta-lift"] {
        let fx = fixture(name)?;
        let mut worst = 0.0f64;
        for u in fx.samples(rng, points) {
            worst = worst.max(tm_coincidence(&fx.dm, &u)?);
        }
        out.push(Measure::max(name, worst, 1e-8));
    }
    Ok(out)
}

fn constant_curvature(rng: &mut ChaCha8Rng, points: usize) -> Result<Vec<Measure>> {
    let mut out = Vec::new();
    for name in ["constant-trig", "constant-potential"] {
        let fx = fixture(name)?;
        let rep = constant_curvature_check(&fx.dm, &fx.samples(rng, points), 1e-10)?;
        out.push(Measure::max(format!("{name} curvature"), rep.max_curvature(), 1e-10));
        out.push(Measure::max(format!("{name} spread"), rep.max_spread(), 1e-10));
    }
    let fx = fixture("constant-generic")?;
    let rep = constant_curvature_check(&fx.dm, &fx.samples(rng, points), 1e-10)?;
    out.push(Measure::info("constant-generic curvature", rep.max_curvature()));
    out.push(Measure::info("constant-generic spread", rep.max_spread()));
    Ok(out)
}

fn sphere_sign(rng: &mut ChaCha8Rng) -> Result<Vec<Measure>> {
    let dm = DMetric::sasaki_lift(&MetricField::sphere(2, 1.0))?;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let u = [rng.gen_range(0.3..2.8), rng.gen_range(-PI..PI), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let cb = CurvatureBundle::compute(&dm, ConnectionKind::Canonical, &u)?;
        worst = worst.max((cb.ricci.r_scalar - 2.0).abs());
    }
    Ok(vec![Measure::max("|R - 2|", worst, 1e-6)])
}

fn flow_setup(name: &str, counts: &[usize], lambda: LambdaMode) -> Result<FlowSetup> {
    let fx = fixture(name)?;
    let lat = Lattice::over(&fx.domain, counts)?;
    FlowSetup::new(fx.dm, lat, NSchedule::Frozen, lambda)
}

fn max_correction(s: &FlowState) -> f64 {
    s.dg.iter().chain(&s.dh).fold(0.0f64, |a, m| a.max(m.max_abs()))
}

fn ricci_flow_order() -> Result<Vec<Measure>> {
    let su = flow_setup("conformal-flow", &[9, 1, 1, 1], LambdaMode::Fixed { lambda: 0.0 })?;
    let runs = [0.02, 0.01, 0.005]
        .par_iter()
        .map(|&h| {
            let t = ricci_flow::evolve(&su, su.initial_state()?, 0.4, h, StepMode::Full, 1000)?;
            Ok(t.snapshots.last().expect("endpoint").state.clone())
        })
        .collect::<Result<Vec<FlowState>>>()?;
    let diff = |x: &FlowState, y: &FlowState| x.dg.iter().zip(&y.dg).fold(0.0f64, |m, (p, q)| m.max(p.max_diff(q)));
    let ratio = diff(&runs[0], &runs[1]) / diff(&runs[1], &runs[2]);

    let ein = flow_setup("einstein", &[3, 1, 3, 3, 1], LambdaMode::Normalized)?;
    let chi_end = 1.0;
    let t = ricci_flow::evolve(&ein, ein.initial_state()?, chi_end, 0.25, StepMode::Full, 1)?;
    let last = &t.snapshots.last().expect("endpoint").state;
    let drift = max_correction(last).max((last.lambda - 1.0).abs()) / chi_end;

    let sph = flow_setup("shrinking-sphere", &[9, 1, 1, 1], LambdaMode::Fixed { lambda: 0.0 })?;
    let res = [0.02_f64, 0.01]
        .par_iter()
        .map(|&h| {
            let k = (0.1 / h).round() as usize;
            let t = ricci_flow::evolve(&sph, sph.initial_state()?, (k + 1) as f64 * h, h, StepMode::Full, 1)?;
            ricci_flow::scalar_evolution_residual(&t, k)
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let order = (res[0].0 / res[1].0).log2();
    Ok(vec![
        Measure::min("endpoint contraction ratio", ratio, 8.0),
        Measure::max("Einstein drift per unit chi", drift, 1e-8),
        Measure::min("scalar residual order", order, 1.9),
    ])
}

fn frame_evolution() -> Result<Vec<Measure>> {
    let su = flow_setup("einstein", &[3, 1, 3, 3, 1], LambdaMode::Normalized)?;
    let s0 = su.initial_state()?;
    let t = ricci_flow::evolve(&su, s0.clone(), 0.5, 0.05, StepMode::Full, 1)?;
    let mut worst = 0.0f64;
    let mut tri = 0.0f64;
    for snap in &t.snapshots {
        let scale = snap.state.chi.exp();
        for (f, f0) in snap.state.frames.iter().zip(&s0.frames) {
            worst = worst.max(f.max_diff(&f0.scale(scale)));
        }
        tri = tri.max(snap.diag.frame_defect);
    }
    Ok(vec![Measure::max("|F - exp(lambda chi) F0|", worst, 1e-6), Measure::info("triangularity defect", tri)])
}

fn bi_hamiltonian(rng: &mut ChaCha8Rng) -> Result<Vec<Measure>> {
    let sp = Spectral::new(Grid::new(256, 2.0 * PI)?)?;
    let norm = |f: &Field| sp.grid.inner(f, f).sqrt();
    let (mut skew_j, mut skew_h, mut dual) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let v = sh::random_field(&sp.grid, 3, 16, 1.0, rng);
        let a = sh::random_field(&sp.grid, 3, 16, 1.0, rng);
        let b = sh::random_field(&sp.grid, 3, 16, 1.0, rng);
        let scale = norm(&a) * norm(&b);
        let s = |op: fn(&Spectral, &Field, &Field) -> Result<Field>| -> Result<f64> {
            Ok((sp.grid.inner(&a, &op(&sp, &v, &b)?) + sp.grid.inner(&op(&sp, &v, &a)?, &b)).abs() / scale)
        };
        skew_j = skew_j.max(s(sh::apply_j)?);
        skew_h = skew_h.max(s(sh::apply_h)?);
        let r1 = sh::recursion(&sp, &v, &a)?;
        let r2 = sh::recursion_expanded(&sp, &v, &a)?;
        dual = dual.max(sh::max_diff(&r1, &r2) / sh::max_abs(&r1));
    }
    Ok(vec![
        Measure::max("J skew defect", skew_j, 1e-8),
        Measure::max("H skew defect", skew_h, 1e-8),
        Measure::max("H.J vs expansion", dual, 1e-7),
    ])
}

/// Smooth two-mode data used by the flow checks.
pub fn smooth_curve(grid: &Grid, dim: usize) -> Field {
    (0..dim)
        .map(|c| {
            grid.sample(|l| {
                let q = 2.0 * PI * l / grid.length;
                0.6 * (q + c as f64).cos() + 0.25 * (2.0 * q - 0.5 * c as f64).sin()
            })
        })
        .collect()
}

fn mkdv_conservation() -> Result<Vec<Measure>> {
    let grid = Grid::new(256, 2.0 * PI)?;
    let mut out = Vec::new();
    let runs = [1usize, 3]
        .par_iter()
        .map(|&dim| {
            let st = CurveState::new(grid, smooth_curve(&grid, dim), Vec::new(), 0.0, 0.0)?;
            sh::evolve(&st, Flow::K1, 1.0, 1e-3, 50)
        })
        .collect::<Result<Vec<_>>>()?;
    for (dim, t) in [1, 3].iter().zip(&runs) {
        out.push(Measure::max(format!("H0 drift, {dim} component"), t.drift(Channel::H, 0), 1e-6));
        out.push(Measure::max(format!("H1 drift, {dim} component"), t.drift(Channel::H, 1), 1e-5));
        out.push(Measure::info(format!("H2 drift, {dim} component"), t.drift(Channel::H, 2)));
    }
    let f = smooth_curve(&grid, 3);
    let st = CurveState::new(grid, f.clone(), Vec::new(), 0.0, 0.0)?;
    let tau = 0.9;
    let t = sh::evolve(&st, Flow::K0, tau, 0.05, 1000)?;
    let exact: Field = (0..3)
        .map(|c| {
            grid.sample(|l| {
                let q = 2.0 * PI * (l + tau) / grid.length;
                0.6 * (q + c as f64).cos() + 0.25 * (2.0 * q - 0.5 * c as f64).sin()
            })
        })
        .collect();
    let end = &t.last().expect("endpoint").h;
    out.push(Measure::max("k=0 translation error", sh::max_diff(end, &exact), 1e-8));
    Ok(out)
}

fn mkdv_scaling() -> Result<Vec<Measure>> {
    let (lam, tau, dt, r) = (2.0, 0.3, 1e-3, 0.4);
    let grid = Grid::new(256, 2.0 * PI)?;
    let big = Grid::new(256, lam * 2.0 * PI)?;
    let f = smooth_curve(&grid, 3);
    let fs: Field = f.iter().map(|c| c.iter().map(|x| x / lam).collect()).collect();
    let a = sh::evolve(&CurveState::new(grid, f, Vec::new(), r, 0.0)?, Flow::K1, tau, dt, 1000)?;
    let b = sh::evolve(
        &CurveState::new(big, fs, Vec::new(), r / (lam * lam), 0.0)?,
        Flow::K1,
        lam.powi(3) * tau,
        lam.powi(3) * dt,
        1000,
    )?;
    let back: Field = b.last().expect("endpoint").h.iter().map(|c| c.iter().map(|x| x * lam).collect()).collect();
    Ok(vec![Measure::max("rescaled evolution mismatch", sh::max_diff(&a.last().expect("endpoint").h, &back), 1e-6)])
}

fn sine_gordon() -> Result<Vec<Measure>> {
    let grid = Grid::new(256, 2.0 * PI)?;
    let v: Field = vec![grid.sample(|l| 0.3 * l.sin()), grid.sample(|l| 0.2 * (2.0 * l).cos())];
    let s = SGState::from_seed(grid, v, 2.0, &[0.3, -0.1])?;
    let run = sh::sg_evolve(&s, 1.0, 0.01, 1.0, 1)?;
    let cons = run.iter().map(|r| r.conservation_defect).fold(0.0, f64::max);
    let norm = run.iter().map(|r| r.normalization_defect).fold(0.0, f64::max);
    let rejected = matches!(SGState::from_seed(grid, vec![vec![2.0; 256]], 1.0, &[0.0]), Err(Error::Hyperbolicity { .. }));
    Ok(vec![
        Measure::max("d/dl (e_par^2 + |e_perp|^2)", cons, 1e-8),
        Measure::info("normalization defect", norm),
        Measure::flag("hyperbolicity violation rejected", rejected),
    ])
}

fn channel_parity(rng: &mut ChaCha8Rng) -> Result<Vec<Measure>> {
    let grid = Grid::new(64, 2.0 * PI)?;
    let sp = Spectral::new(grid)?;
    let f = sh::random_field(&grid, 2, 6, 0.7, rng);
    let w = sh::random_field(&grid, 2, 6, 0.7, rng);
    let st = CurveState::new(grid, f.clone(), f, 0.6, 0.6)?;
    let mut same = true;
    for op in [sh::apply_j, sh::apply_h, sh::recursion, sh::recursion_expanded] {
        same &= bits(&op(&sp, st.field(Channel::H), &w)?) == bits(&op(&sp, st.field(Channel::V), &w)?);
    }
    for k in 0..3 {
        same &= bits(&sh::hierarchy_flow(&sp, st.field(Channel::H), k, st.curvature(Channel::H))?)
            == bits(&sh::hierarchy_flow(&sp, st.field(Channel::V), k, st.curvature(Channel::V))?);
        same &= sh::hamiltonian(&sp, st.field(Channel::H), k)?.to_bits()
            == sh::hamiltonian(&sp, st.field(Channel::V), k)?.to_bits();
    }
    for (flow, dt) in [(Flow::K0, 0.01), (Flow::K1, 1e-4), (Flow::K2, 4e-6)] {
        let t = sh::evolve(&st, flow, 100.0 * dt, dt, 10)?;
        for s in &t.snapshots {
            same &= bits(&s.h) == bits(&s.v) && s.ham_h.map(f64::to_bits) == s.ham_v.map(f64::to_bits);
        }
    }
    let seed = [0.0, 0.1];
    let a = SGState::from_seed(grid, st.field(Channel::H).clone(), 1.0, &seed)?;
    let b = SGState::from_seed(grid, st.field(Channel::V).clone(), 1.0, &seed)?;
    let a = sh::sg_minus1_flow(&a, 0.01, st.curvature(Channel::H))?;
    let b = sh::sg_minus1_flow(&b, 0.01, st.curvature(Channel::V))?;
    same &= bits(&a.v) == bits(&b.v) && bits(&a.e_perp) == bits(&b.e_perp);
    Ok(vec![Measure::flag("h and v outputs bit-identical", same)])
}

fn bits(f: &Field) -> Vec<u64> {
    f.iter().flatten().map(|x| x.to_bits()).collect()
}
