//! Scenario files, run orchestration and manifests.

pub mod checks;
mod export;

pub use checks::{run_check, run_suite, CheckResult, Measure, CHECKS};
pub use export::{
    export_trajectory, import_csv, import_jsonl, render, write_file, Exportable, Format, Header, SGMeta, SGTrajectory,
    SolitonMeta, TOOL, VERSION,
};

use crate::constant_frame::constant_curvature_check;
use crate::dgeometry::{canonical_dconnection, compatibility_residual, dtorsion, ConnectionKind, CurvatureBundle};
use crate::error::{Error, Result};
use crate::fixtures::{fixture, Fixture, NAMES};
use crate::nconnection::{commutator_defect, nconnection_curvature};
use crate::ricci_flow::{self, FlowSetup, FlowTrajectory, LambdaHat, LambdaMode, Lattice, NSchedule, StepMode};
use crate::soliton_hierarchy::{self as sh, Channel, CurveState, Flow, Grid, InitialCurve, SGState, SolitonTrajectory};
use crate::tensor_core::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const DEFAULT_SEED: u64 = 20240601;
pub const SEED_ENV: &str = "ANHOLOFLOW_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Nconn,
    Geometry,
    Constframe,
    Ricci,
    Soliton,
    Combined,
    Verify,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channels {
    H,
    V,
    #[default]
    Both,
}

impl Channels {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "h" => Ok(Channels::H),
            "v" => Ok(Channels::V),
            "both" => Ok(Channels::Both),
            _ => Err(Error::config("channel", format!("expected h, v or both, got `{s}`"))),
        }
    }

    fn list(self) -> Vec<Channel> {
        match self {
            Channels::H => vec![Channel::H],
            Channels::V => vec![Channel::V],
            Channels::Both => vec![Channel::H, Channel::V],
        }
    }
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_tol() -> f64 {
    1e-8
}
fn default_samples() -> usize {
    20
}
fn default_one() -> usize {
    1
}
fn default_dchi() -> f64 {
    0.01
}
fn default_dim() -> usize {
    1
}
fn default_nodes() -> usize {
    256
}
fn default_length() -> f64 {
    2.0 * std::f64::consts::PI
}
fn default_tau_end() -> f64 {
    1.0
}
fn default_init() -> String {
    "sine:0.5,1".to_string()
}
fn default_every() -> usize {
    100
}
fn default_conservation() -> f64 {
    1e-5
}
fn default_flow() -> Flow {
    Flow::K1
}
fn default_lambda() -> LambdaMode {
    LambdaMode::Normalized
}
fn default_schedule() -> NSchedule {
    NSchedule::Frozen
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RicciSpec {
    /// Nodes per coordinate axis.
    pub grid: Vec<usize>,
    pub chi_end: f64,
    #[serde(default = "default_dchi")]
    pub dchi: f64,
    #[serde(default = "default_one")]
    pub every: usize,
    #[serde(default = "default_lambda")]
    pub lambda: LambdaMode,
    #[serde(default = "default_schedule")]
    pub schedule: NSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stencil: Option<usize>,
    /// Einstein-constraint tolerance; switches to constrained steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constrained: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolitonSpec {
    #[serde(default)]
    pub channel: Channels,
    /// `n − 1`.
    #[serde(default = "default_dim")]
    pub dim_h: usize,
    /// `m − 1`.
    #[serde(default = "default_dim")]
    pub dim_v: usize,
    #[serde(default = "default_flow")]
    pub flow: Flow,
    #[serde(default = "default_nodes")]
    pub grid: usize,
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_tau_end")]
    pub tau_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtau: Option<f64>,
    #[serde(default = "default_init")]
    pub init: String,
    #[serde(default)]
    pub r: f64,
    #[serde(default)]
    pub s: f64,
    #[serde(default = "default_every")]
    pub every: usize,
    /// Relative drift bound on `H^(0)` and `H^(1)`.
    #[serde(default = "default_conservation")]
    pub conservation_tol: f64,
}

impl Default for SolitonSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ricci: Option<RicciSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soliton: Option<SolitonSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checks: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub timestamps: bool,
}

impl Scenario {
    pub fn new(mode: Mode) -> Self {
        Scenario {
            mode,
            fixture: None,
            seed: DEFAULT_SEED,
            tol: default_tol(),
            samples: default_samples(),
            point: None,
            ricci: None,
            soliton: None,
            checks: None,
            out: None,
            timestamps: false,
        }
    }

    pub fn fixture(&self) -> Result<Fixture> {
        let name = self.fixture.as_deref().ok_or_else(|| Error::config("fixture", "required for this mode"))?;
        fixture(name)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::config("tol", "tolerance must be positive and finite"));
        }
        if self.samples == 0 {
            return Err(Error::config("samples", "need at least one sample"));
        }
        if let Some(name) = &self.fixture {
            if !NAMES.contains(&name.as_str()) {
                return Err(Error::UnknownFixture(name.clone()));
            }
        }
        let needs_fixture = matches!(self.mode, Mode::Nconn | Mode::Geometry | Mode::Constframe | Mode::Ricci | Mode::Combined);
        if needs_fixture && self.fixture.is_none() {
            return Err(Error::config("fixture", "required for this mode"));
        }
        if let (Some(p), Some(name)) = (&self.point, &self.fixture) {
            let dim = fixture(name)?.dm.dim();
            if p.len() != dim {
                return Err(Error::config("point", format!("expected {dim} coordinates, got {}", p.len())));
            }
        }
        if matches!(self.mode, Mode::Ricci | Mode::Combined) {
            let r = self.ricci.as_ref().ok_or_else(|| Error::config("ricci", "required for this mode"))?;
            r.validate(self.fixture()?.dm.dim())?;
        }
        if matches!(self.mode, Mode::Soliton | Mode::Combined) {
            let s = self.soliton.as_ref().ok_or_else(|| Error::config("soliton", "required for this mode"))?;
            s.validate()?;
        }
        if let Some(list) = &self.checks {
            for c in list {
                if !CHECKS.contains(&c.as_str()) {
                    return Err(Error::config("checks", format!("unknown check `{c}`")));
                }
            }
        }
        Ok(())
    }

    /// Sub-runs this scenario drives, e.g. `["ricci", "soliton"]` for a combined run.
    pub fn sub_runs(&self) -> Vec<&'static str> {
        match self.mode {
            Mode::Combined => vec!["ricci", "soliton"],
            Mode::Nconn => vec!["nconn"],
            Mode::Geometry => vec!["geometry"],
            Mode::Constframe => vec!["constframe"],
            Mode::Ricci => vec!["ricci"],
            Mode::Soliton => vec!["soliton"],
            Mode::Verify => vec!["verify"],
        }
    }
}

impl RicciSpec {
    fn validate(&self, dim: usize) -> Result<()> {
        if self.grid.len() != dim {
            return Err(Error::config("ricci.grid", format!("expected {dim} node counts, got {}", self.grid.len())));
        }
        if self.grid.iter().any(|&c| c == 0) {
            return Err(Error::config("ricci.grid", "node counts must be positive"));
        }
        if !(self.dchi > 0.0 && self.dchi.is_finite()) {
            return Err(Error::config("ricci.dchi", "must be positive"));
        }
        if !(self.chi_end >= 0.0 && self.chi_end.is_finite()) {
            return Err(Error::config("ricci.chi_end", "must be non-negative"));
        }
        if self.every == 0 {
            return Err(Error::config("ricci.every", "must be positive"));
        }
        if let Some(t) = self.constrained {
            if !(t > 0.0) {
                return Err(Error::config("ricci.constrained", "tolerance must be positive"));
            }
        }
        Ok(())
    }

    pub fn setup(&self, fx: &Fixture) -> Result<FlowSetup> {
        let mut lat = Lattice::over(&fx.domain, &self.grid)?;
        if let Some(w) = self.stencil {
            lat = lat.with_stencil(w)?;
        }
        FlowSetup::new(fx.dm.clone(), lat, self.schedule.clone(), self.lambda.clone())
    }

    fn step_mode(&self) -> StepMode {
        match self.constrained {
            Some(tol) => StepMode::EinsteinConstrained { tol },
            None => StepMode::Full,
        }
    }
}

impl SolitonSpec {
    fn validate(&self) -> Result<()> {
        Grid::new(self.grid, self.length).map_err(|e| match e {
            Error::Config { key, reason } => Error::config(&format!("soliton.{key}"), reason),
            e => e,
        })?;
        if !(self.tau_end >= 0.0 && self.tau_end.is_finite()) {
            return Err(Error::config("soliton.tau_end", "must be non-negative"));
        }
        if let Some(d) = self.dtau {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::config("soliton.dtau", "must be positive"));
            }
        }
        if !(self.conservation_tol > 0.0) {
            return Err(Error::config("soliton.conservation_tol", "must be positive"));
        }
        if self.every == 0 {
            return Err(Error::config("soliton.every", "must be positive"));
        }
        for ch in self.channel.list() {
            if self.dim(ch) == 0 {
                return Err(Error::config(if ch == Channel::H { "soliton.dim_h" } else { "soliton.dim_v" }, "must be positive"));
            }
        }
        InitialCurve::parse(&self.init).map_err(|e| match e {
            Error::Config { reason, .. } => Error::config("soliton.init", reason),
            e => e,
        })?;
        Ok(())
    }

    fn dim(&self, ch: Channel) -> usize {
        match ch {
            Channel::H => self.dim_h,
            Channel::V => self.dim_v,
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid, self.length)
    }

    pub fn dtau(&self) -> Result<f64> {
        Ok(self.dtau.unwrap_or(self.flow.default_dtau(&self.grid()?)))
    }

    /// Initial state with the selected channels populated and curvature
    /// constants `(r, s)`.
    pub fn initial_state(&self, r: f64, s: f64) -> Result<CurveState> {
        let grid = self.grid()?;
        let init = InitialCurve::parse(&self.init)?;
        let chans = self.channel.list();
        let field = |ch: Channel| {
            if chans.contains(&ch) {
                init.sample(&grid, self.dim(ch))
            } else {
                Vec::new()
            }
        };
        CurveState::new(grid, field(Channel::H), field(Channel::V), r, s)
    }
}

/// What one soliton sub-run produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonOutput {
    pub r: f64,
    pub s: f64,
    pub hierarchy: Option<SolitonTrajectory>,
    pub sine_gordon: Vec<SGTrajectory>,
}

/// Runs the configured flow with frozen curvature constants `(r, s)`.
pub fn soliton_run(spec: &SolitonSpec, r: f64, s: f64) -> Result<SolitonOutput> {
    spec.validate()?;
    let st = spec.initial_state(r, s)?;
    let dtau = spec.dtau()?;
    if spec.flow == Flow::Sg {
        let mut out = Vec::new();
        for ch in spec.channel.list() {
            let v = st.field(ch).clone();
            let mut seed = vec![0.0; v.len()];
            if v.is_empty() {
                seed.clear();
            }
            let s0 = SGState::from_seed(st.grid, v, 1.0, &seed)?;
            let snaps = sh::sg_evolve(&s0, spec.tau_end, dtau, st.curvature(ch), spec.every)?;
            out.push(SGTrajectory { channel: ch, curv: st.curvature(ch), snapshots: snaps });
        }
        return Ok(SolitonOutput { r, s, hierarchy: None, sine_gordon: out });
    }
    let traj = sh::evolve(&st, spec.flow, spec.tau_end, dtau, spec.every)?;
    Ok(SolitonOutput { r, s, hierarchy: Some(traj), sine_gordon: Vec::new() })
}

fn soliton_checks(spec: &SolitonSpec, out: &SolitonOutput, tol: f64, label: &str) -> Vec<CheckResult> {
    let mut res = Vec::new();
    if let Some(t) = &out.hierarchy {
        let mut m = Vec::new();
        for ch in spec.channel.list() {
            let c = if ch == Channel::H { "h" } else { "v" };
            m.push(Measure::max(format!("{c} H0 drift"), t.drift(ch, 0), spec.conservation_tol));
            m.push(Measure::max(format!("{c} H1 drift"), t.drift(ch, 1), spec.conservation_tol));
            m.push(Measure::info(format!("{c} H2 drift"), t.drift(ch, 2)));
        }
        res.push(CheckResult::from_measures(&format!("{label}hamiltonian-drift"), m));
    }
    if !out.sine_gordon.is_empty() {
        let mut m = Vec::new();
        for t in &out.sine_gordon {
            let c = if t.channel == Channel::H { "h" } else { "v" };
            let cons = t.snapshots.iter().map(|s| s.conservation_defect).fold(0.0, f64::max);
            let norm = t.snapshots.iter().map(|s| s.normalization_defect).fold(0.0, f64::max);
            m.push(Measure::max(format!("{c} frame-norm conservation"), cons, tol));
            m.push(Measure::info(format!("{c} normalization defect"), norm));
        }
        res.push(CheckResult::from_measures(&format!("{label}sine-gordon-conservation"), m));
    }
    res
}

/// Ricci trajectory plus one soliton run per recorded snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombinedOutput {
    pub ricci: FlowTrajectory,
    /// `(χ, →R, ←S)` frozen for each sub-run.
    pub constants: Vec<(f64, f64, f64)>,
    pub solitons: Vec<SolitonOutput>,
}

/// For each Ricci snapshot `χ`, freezes the volume-weighted `→R(χ)`, `←S(χ)`
/// and runs the configured soliton flow with them, sub-runs in parallel.
pub fn combined(sc: &Scenario) -> Result<CombinedOutput> {
    sc.validate()?;
    let fx = sc.fixture()?;
    let rs = sc.ricci.as_ref().expect("validated");
    let spec = sc.soliton.as_ref().expect("validated");
    let setup = rs.setup(&fx)?;
    let traj = ricci_flow::evolve(&setup, setup.initial_state()?, rs.chi_end, rs.dchi, rs.step_mode(), rs.every)?;
    let constants: Vec<(f64, f64, f64)> =
        traj.snapshots.iter().map(|s| (s.diag.chi, s.diag.r_mean, s.diag.s_mean)).collect();
    let solitons = constants
        .par_iter()
        .enumerate()
        .map(|(i, &(_, r, s))| soliton_run(spec, r, s).map_err(|e| Error::SubRun { index: i, source: Box::new(e) }))
        .collect::<Result<Vec<_>>>()?;
    Ok(CombinedOutput { ricci: traj, constants, solitons })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub scenario: Scenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished: Option<String>,
    pub checks: Vec<CheckResult>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub outputs: Vec<String>,
    pub passed: bool,
}

impl RunManifest {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::config("manifest", e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let sc: Scenario = serde_json::from_str(text)
        .map_err(|e| Error::Parse { line: e.line(), column: e.column(), msg: e.to_string() })?;
    sc.validate()?;
    Ok(sc)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text)
}

/// Seed from `ANHOLOFLOW_SEED` when set, else the scenario's.
pub fn effective_seed(sc: &Scenario) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Error::config(SEED_ENV, format!("not an integer: `{v}`"))),
        Err(_) => Ok(sc.seed),
    }
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

struct Collected {
    checks: Vec<CheckResult>,
    warnings: Vec<String>,
    outputs: Vec<String>,
}

impl Collected {
    fn new() -> Self {
        Collected { checks: Vec::new(), warnings: Vec::new(), outputs: Vec::new() }
    }

    fn write(&mut self, path: &Path, text: &str) -> Result<()> {
        write_file(path, text)?;
        self.outputs.push(path.display().to_string());
        Ok(())
    }
}

/// Runs a scenario, writes its outputs next to `sc.out` and returns the manifest.
pub fn run(sc: &Scenario) -> Result<RunManifest> {
    sc.validate()?;
    let started = sc.timestamps.then(now);
    let mut col = Collected::new();
    match sc.mode {
        Mode::Nconn => run_nconn(sc, &mut col)?,
        Mode::Geometry => run_geometry(sc, &mut col)?,
        Mode::Constframe => run_constframe(sc, &mut col)?,
        Mode::Ricci => run_ricci(sc, &mut col)?,
        Mode::Soliton => run_soliton(sc, &mut col)?,
        Mode::Combined => run_combined(sc, &mut col)?,
        Mode::Verify => {
            let names: Vec<String> = match &sc.checks {
                Some(l) => l.clone(),
                None => CHECKS.iter().map(|s| s.to_string()).collect(),
            };
            col.checks = run_suite(&names, sc.seed)?;
        }
    }
    let passed = col.checks.iter().all(|c| c.passed);
    let mut manifest = RunManifest {
        tool: TOOL.to_string(),
        version: VERSION.to_string(),
        seed: sc.seed,
        scenario: sc.clone(),
        started,
        finished: sc.timestamps.then(now),
        checks: col.checks,
        warnings: col.warnings,
        outputs: col.outputs,
        passed,
    };
    if let Some(out) = &sc.out {
        let path = if sc.mode == Mode::Verify { out.clone() } else { sibling(out, "manifest.json") };
        manifest.outputs.push(path.display().to_string());
        write_file(&path, &manifest.to_json()?)?;
    }
    Ok(manifest)
}

/// `verify` with the given seed over the named checks (all when `None`).
pub fn verify(seed: u64, checks: Option<Vec<String>>, out: Option<PathBuf>) -> Result<RunManifest> {
    let mut sc = Scenario::new(Mode::Verify);
    sc.seed = seed;
    sc.checks = checks;
    sc.out = out;
    run(&sc)
}

fn sample_points(sc: &Scenario, fx: &Fixture) -> Vec<Vec<f64>> {
    match &sc.point {
        Some(p) => vec![p.clone()],
        None => fx.samples(&mut ChaCha8Rng::seed_from_u64(sc.seed), sc.samples),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub point: Vec<f64>,
    pub nconn: Mat<f64>,
    pub omega_max: f64,
    pub commutator_defect: f64,
    pub compat: f64,
    pub torsion_pure: f64,
    pub torsion_mixed: f64,
    pub r_scalar: f64,
    pub s_scalar: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub fixture: String,
    pub records: Vec<PointRecord>,
}

impl Exportable for PointReport {
    const KIND: &'static str = "geometry";
    type Meta = String;
    type Record = PointRecord;

    fn meta(&self) -> String {
        self.fixture.clone()
    }

    fn records(&self) -> &[PointRecord] {
        &self.records
    }

    fn from_parts(fixture: String, records: Vec<PointRecord>) -> Self {
        PointReport { fixture, records }
    }

    fn columns() -> Vec<String> {
        ["omega_max", "commutator_defect", "compat", "torsion_pure", "torsion_mixed", "r_scalar", "s_scalar"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn row(r: &PointRecord) -> Vec<f64> {
        vec![r.omega_max, r.commutator_defect, r.compat, r.torsion_pure, r.torsion_mixed, r.r_scalar, r.s_scalar]
    }
}

pub fn point_report(sc: &Scenario) -> Result<PointReport> {
    let fx = sc.fixture()?;
    let records = sample_points(sc, &fx)
        .par_iter()
        .map(|u| {
            let om = nconnection_curvature(&fx.dm.nconn, u)?;
            let dc = canonical_dconnection(&fx.dm, u)?;
            let t = dtorsion(&dc, &fx.dm.nconn, u)?;
            let cb = CurvatureBundle::compute(&fx.dm, ConnectionKind::Canonical, u)?;
            Ok(PointRecord {
                point: u.clone(),
                nconn: fx.dm.nconn.eval(u)?,
                omega_max: om.max_abs(),
                commutator_defect: commutator_defect(&fx.dm.nconn, u)?,
                compat: compatibility_residual(&dc, &fx.dm, u)?,
                torsion_pure: t.hhh.max_abs().max(t.vvv.max_abs()),
                torsion_mixed: t.vhh.max_diff(&om),
                r_scalar: cb.ricci.r_scalar,
                s_scalar: cb.ricci.s_scalar,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PointReport { fixture: fx.name, records })
}

fn fold(records: &[PointRecord], f: impl Fn(&PointRecord) -> f64) -> f64 {
    records.iter().map(f).fold(0.0, f64::max)
}

fn write_point_report(sc: &Scenario, rep: &PointReport, col: &mut Collected) -> Result<()> {
    if let Some(out) = &sc.out {
        col.write(out, &render(rep, sc.seed, Format::Jsonl)?)?;
        col.write(&sibling(out, "csv"), &render(rep, sc.seed, Format::Csv)?)?;
    }
    Ok(())
}

fn run_nconn(sc: &Scenario, col: &mut Collected) -> Result<()> {
    let rep = point_report(sc)?;
    col.checks.push(CheckResult::from_measures(
        "anholonomy-commutators",
        vec![
            Measure::max("commutator - W", fold(&rep.records, |r| r.commutator_defect), sc.tol),
            Measure::info("max |Omega|", fold(&rep.records, |r| r.omega_max)),
        ],
    ));
    write_point_report(sc, &rep, col)
}

fn run_geometry(sc: &Scenario, col: &mut Collected) -> Result<()> {
    let rep = point_report(sc)?;
    col.checks.push(CheckResult::from_measures(
        "metric-compatibility",
        vec![Measure::max("compatibility residual", fold(&rep.records, |r| r.compat), sc.tol)],
    ));
    col.checks.push(CheckResult::from_measures(
        "torsion-structure",
        vec![
            Measure::max("T^i_jk, T^a_bc", fold(&rep.records, |r| r.torsion_pure), sc.tol),
            Measure::max("T^a_ji - Omega^a_ji", fold(&rep.records, |r| r.torsion_mixed), sc.tol),
        ],
    ));
    write_point_report(sc, &rep, col)
}

fn run_constframe(sc: &Scenario, col: &mut Collected) -> Result<()> {
    let fx = sc.fixture()?;
    let mut pts = sample_points(sc, &fx);
    if pts.len() < 2 {
        pts = fx.samples(&mut ChaCha8Rng::seed_from_u64(sc.seed), sc.samples.max(2));
    }
    let rep = constant_curvature_check(&fx.dm, &pts, sc.tol)?;
    col.checks.push(CheckResult::from_measures(
        "constant-curvature",
        vec![Measure::max("curvature", rep.max_curvature(), sc.tol), Measure::max("spread", rep.max_spread(), sc.tol)],
    ));
    if let Some(out) = &sc.out {
        let text = serde_json::to_string_pretty(&rep).map_err(|e| Error::config("report", e.to_string()))?;
        col.write(out, &(text + "\n"))?;
    }
    Ok(())
}

fn ricci_checks(sc: &Scenario, traj: &FlowTrajectory) -> Vec<CheckResult> {
    let sn = &traj.snapshots;
    let max = |f: &dyn Fn(&ricci_flow::Diagnostics) -> f64| sn.iter().map(|s| f(&s.diag)).fold(0.0, f64::max);
    let mut m = vec![
        Measure::max("block symmetry defect", max(&|d| d.symmetry_defect), sc.tol),
        Measure::max("metric compatibility", max(&|d| d.compat_max), sc.tol),
        Measure::info("off-diagonal Ricci", max(&|d| d.offdiag_max)),
        Measure::info("frame triangularity defect", max(&|d| d.frame_defect)),
    ];
    if let LambdaMode::Einstein { lambda0 } = traj.setup.lambda {
        let rep = ricci_flow::einstein_extraction_check(traj, LambdaHat::Schedule { lambda0 });
        m.push(Measure::info("extraction residual, scalar relation", rep.max_fe1));
        m.push(Measure::info("extraction residual, lambda equation", rep.max_fe2));
    }
    vec![CheckResult::from_measures("ricci-flow-monitors", m)]
}

fn ricci_trajectory(sc: &Scenario, col: &mut Collected) -> Result<FlowTrajectory> {
    let fx = sc.fixture()?;
    let rs = sc.ricci.as_ref().expect("validated");
    let setup = rs.setup(&fx)?;
    let s0 = setup.initial_state()?;
    let limit = ricci_flow::explicit_step_limit(&setup, &s0)?;
    if rs.dchi > limit {
        col.warnings.push(format!("dchi = {} exceeds the explicit RK4 limit {limit:.3e} for this lattice", rs.dchi));
    }
    ricci_flow::evolve(&setup, s0, rs.chi_end, rs.dchi, rs.step_mode(), rs.every)
}

fn run_ricci(sc: &Scenario, col: &mut Collected) -> Result<()> {
    let traj = ricci_trajectory(sc, col)?;
    col.checks.extend(ricci_checks(sc, &traj));
    if let Some(out) = &sc.out {
        col.write(out, &render(&traj, sc.seed, Format::Jsonl)?)?;
        col.write(&sibling(out, "csv"), &render(&traj, sc.seed, Format::Csv)?)?;
    }
    Ok(())
}

fn write_soliton(sc: &Scenario, out: &SolitonOutput, base: &Path, col: &mut Collected) -> Result<()> {
    if let Some(t) = &out.hierarchy {
        col.write(base, &render(t, sc.seed, Format::Jsonl)?)?;
        col.write(&sibling(base, "csv"), &render(t, sc.seed, Format::Csv)?)?;
    }
    for t in &out.sine_gordon {
        let c = if t.channel == Channel::H { "h" } else { "v" };
        let stem = base.with_extension("");
        let p = PathBuf::from(format!("{}.sg-{c}.jsonl", stem.display()));
        col.write(&p, &render(t, sc.seed, Format::Jsonl)?)?;
        col.write(&sibling(&p, "csv"), &render(t, sc.seed, Format::Csv)?)?;
    }
    Ok(())
}

fn run_soliton(sc: &Scenario, col: &mut Collected) -> Result<()> {
    let spec = sc.soliton.as_ref().expect("validated");
    let out = soliton_run(spec, spec.r, spec.s)?;
    col.checks.extend(soliton_checks(spec, &out, sc.tol, ""));
    if let Some(p) = &sc.out {
        write_soliton(sc, &out, p, col)?;
    }
    Ok(())
}

fn run_combined(sc: &Scenario, col: &mut Collected) -> Result<()> {
    let fx = sc.fixture()?;
    let rs = sc.ricci.as_ref().expect("validated");
    let setup = rs.setup(&fx)?;
    let limit = ricci_flow::explicit_step_limit(&setup, &setup.initial_state()?)?;
    if rs.dchi > limit {
        col.warnings.push(format!("dchi = {} exceeds the explicit RK4 limit {limit:.3e} for this lattice", rs.dchi));
    }
    let res = combined(sc)?;
    let spec = sc.soliton.as_ref().expect("validated");
    col.checks.extend(ricci_checks(sc, &res.ricci));
    let mut m = Vec::new();
    for (i, out) in res.solitons.iter().enumerate() {
        for c in soliton_checks(spec, out, sc.tol, "") {
            for mut x in c.measures {
                x.name = format!("snapshot {i} {}: {}", c.name, x.name);
                m.push(x);
            }
        }
    }
    col.checks.push(CheckResult::from_measures("soliton-sub-runs", m));
    if let Some(out) = &sc.out {
        col.write(out, &render(&res.ricci, sc.seed, Format::Jsonl)?)?;
        col.write(&sibling(out, "csv"), &render(&res.ricci, sc.seed, Format::Csv)?)?;
        let stem = out.with_extension("");
        for (i, s) in res.solitons.iter().enumerate() {
            let p = PathBuf::from(format!("{}.soliton-{i:03}.jsonl", stem.display()));
            write_soliton(sc, s, &p, col)?;
        }
    }
    Ok(())
}

/// Ñ, W and Ω at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NconnBlocks {
    pub fixture: String,
    pub point: Vec<f64>,
    pub nconn: Mat<f64>,
    pub anholonomy: crate::tensor_core::Tensor<f64>,
    pub omega: crate::tensor_core::Tensor<f64>,
    pub commutator_defect: f64,
}

pub fn nconn_blocks(fx: &Fixture, u: &[f64]) -> Result<NconnBlocks> {
    let nc = &fx.dm.nconn;
    Ok(NconnBlocks {
        fixture: fx.name.clone(),
        point: u.to_vec(),
        nconn: nc.eval(u)?,
        anholonomy: crate::nconnection::anholonomy(nc, u)?,
        omega: nconnection_curvature(nc, u)?,
        commutator_defect: commutator_defect(nc, u)?,
    })
}

/// Coefficients, torsion, curvature and Ricci blocks of the canonical
/// d-connection at one point, plus the Levi-Civita comparison in TM mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryBlocks {
    pub fixture: String,
    pub bundle: CurvatureBundle,
    pub compatibility: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tm_coincidence: Option<f64>,
}

pub fn geometry_blocks(fx: &Fixture, u: &[f64], tm: bool) -> Result<GeometryBlocks> {
    let dm = if tm { fx.dm.clone().with_tm(true)? } else { fx.dm.clone() };
    let dc = canonical_dconnection(&dm, u)?;
    Ok(GeometryBlocks {
        fixture: fx.name.clone(),
        bundle: CurvatureBundle::compute(&dm, ConnectionKind::Canonical, u)?,
        compatibility: compatibility_residual(&dc, &dm, u)?,
        tm_coincidence: if tm { Some(crate::dgeometry::tm_coincidence(&dm, u)?) } else { None },
    })
}
