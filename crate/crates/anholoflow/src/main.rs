use anholoflow::error::{Error, Result};
use anholoflow::fixtures::fixture;
use anholoflow::flow_io::{
    self, effective_seed, load_scenario, Channels, Mode, RicciSpec, RunManifest, Scenario,
};
use anholoflow::ricci_flow::{LambdaMode, NSchedule};
use anholoflow::soliton_hierarchy::Flow;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "anholoflow", version, about = "N-adapted geometry, Ricci flows and curve-flow hierarchies")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON scenario; other flags override its fields.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Output base path; siblings get `.csv` and `.manifest.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall-clock start/end in the manifest.
    #[arg(long)]
    timestamps: bool,
}

#[derive(Args, Clone)]
struct PointArgs {
    #[arg(long)]
    fixture: Option<String>,
    /// Comma-separated coordinates `x..., y...`.
    #[arg(long)]
    point: Option<String>,
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args, Clone)]
struct RicciArgs {
    #[arg(long)]
    chi_end: Option<f64>,
    #[arg(long)]
    dchi: Option<f64>,
    /// Node counts per axis, e.g. `9,1,1,1`.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    every: Option<usize>,
    /// `normalized`, `fixed:<λ>` or `einstein:<λ0>`.
    #[arg(long)]
    lambda: Option<String>,
    /// Central-difference stencil width (3 or 5).
    #[arg(long)]
    stencil: Option<usize>,
    /// Restrict steps to the Einstein class with this constraint tolerance.
    #[arg(long)]
    constrained: Option<f64>,
}

#[derive(Args, Clone)]
struct SolitonArgs {
    /// `h`, `v` or `both`.
    #[arg(long)]
    channel: Option<String>,
    /// Number of normal components in the selected channel(s).
    #[arg(long)]
    dim: Option<usize>,
    /// `k0`, `k1`, `k2` or `sg`.
    #[arg(long)]
    flow: Option<String>,
    #[arg(long = "nodes")]
    nodes: Option<usize>,
    #[arg(long)]
    length: Option<f64>,
    #[arg(long)]
    tau_end: Option<f64>,
    #[arg(long)]
    dtau: Option<f64>,
    /// Initial curve, e.g. `sine:0.5,1`, `sech:1,0.5`, `random:0.3,4,7`, `zero`.
    #[arg(long)]
    init: Option<String>,
    /// Steps between soliton snapshots.
    #[arg(long)]
    tau_every: Option<usize>,
    #[arg(long = "r-const")]
    r: Option<f64>,
    #[arg(long = "s-const")]
    s: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// N-connection blocks and commutator checks.
    Nconn {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pt: PointArgs,
    },
    /// Canonical d-connection, torsion and curvature blocks.
    Geometry {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pt: PointArgs,
        /// Compare against Levi-Civita coefficients in adapted frames.
        #[arg(long)]
        tm: bool,
        /// Run the compatibility and torsion checks over sampled points.
        #[arg(long)]
        verify: bool,
    },
    /// Constant-curvature regime report.
    Constframe {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pt: PointArgs,
    },
    /// N-adapted Ricci flow on a lattice.
    Ricci {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fixture: Option<String>,
        #[command(flatten)]
        ricci: RicciArgs,
    },
    /// Hierarchy or sine-Gordon curve flow.
    Soliton {
        #[command(flatten)]
        common: Common,
        /// Grid size; alias of `--nodes`.
        #[arg(long)]
        grid: Option<usize>,
        #[command(flatten)]
        sol: SolitonArgs,
    },
    /// Ricci flow feeding frozen curvature constants into soliton runs.
    Combined {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fixture: Option<String>,
        #[command(flatten)]
        ricci: RicciArgs,
        #[command(flatten)]
        sol: SolitonArgs,
    },
    /// Full invariant suite; writes a manifest.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of check names.
        #[arg(long)]
        checks: Option<String>,
    },
}

fn parse_list<T: std::str::FromStr>(key: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| Error::config(key, format!("cannot parse `{t}`"))))
        .collect()
}

fn parse_lambda(s: &str) -> Result<LambdaMode> {
    let (kind, val) = s.split_once(':').unwrap_or((s, ""));
    let num = || val.parse::<f64>().map_err(|_| Error::config("lambda", format!("bad value `{val}`")));
    match kind {
        "normalized" => Ok(LambdaMode::Normalized),
        "fixed" => Ok(LambdaMode::Fixed { lambda: num()? }),
        "einstein" => Ok(LambdaMode::Einstein { lambda0: num()? }),
        _ => Err(Error::config("lambda", format!("unknown mode `{kind}`"))),
    }
}

fn base(common: &Common, mode: Mode) -> Result<Scenario> {
    let mut sc = match &common.scenario {
        Some(p) => load_scenario(p)?,
        None => Scenario::new(mode),
    };
    if sc.mode != mode {
        return Err(Error::config("mode", format!("scenario mode {:?} does not match the subcommand", sc.mode)));
    }
    if let Some(s) = common.seed {
        sc.seed = s;
    }
    if let Some(t) = common.tol {
        sc.tol = t;
    }
    if common.out.is_some() {
        sc.out = common.out.clone();
    }
    sc.timestamps |= common.timestamps;
    sc.seed = effective_seed(&sc)?;
    Ok(sc)
}

fn apply_point(sc: &mut Scenario, pt: &PointArgs) -> Result<()> {
    if pt.fixture.is_some() {
        sc.fixture = pt.fixture.clone();
    }
    if let Some(p) = &pt.point {
        sc.point = Some(parse_list("point", p)?);
    }
    if let Some(k) = pt.samples {
        sc.samples = k;
    }
    Ok(())
}

fn apply_ricci(sc: &mut Scenario, fixture: &Option<String>, a: &RicciArgs) -> Result<()> {
    if fixture.is_some() {
        sc.fixture = fixture.clone();
    }
    let mut r = match sc.ricci.take() {
        Some(r) => r,
        None => {
            let dim = fixture_dim(sc)?;
            RicciSpec {
                grid: vec![1; dim],
                chi_end: 0.1,
                dchi: 0.01,
                every: 1,
                lambda: LambdaMode::Normalized,
                schedule: NSchedule::Frozen,
                stencil: None,
                constrained: None,
            }
        }
    };
    if let Some(g) = &a.grid {
        r.grid = parse_list("grid", g)?;
    }
    if let Some(v) = a.chi_end {
        r.chi_end = v;
    }
    if let Some(v) = a.dchi {
        r.dchi = v;
    }
    if let Some(v) = a.every {
        r.every = v;
    }
    if let Some(l) = &a.lambda {
        r.lambda = parse_lambda(l)?;
    }
    if a.stencil.is_some() {
        r.stencil = a.stencil;
    }
    if a.constrained.is_some() {
        r.constrained = a.constrained;
    }
    sc.ricci = Some(r);
    Ok(())
}

fn fixture_dim(sc: &Scenario) -> Result<usize> {
    let name = sc.fixture.as_deref().ok_or_else(|| Error::config("fixture", "required for this mode"))?;
    Ok(fixture(name)?.dm.dim())
}

fn apply_soliton(sc: &mut Scenario, a: &SolitonArgs, grid: Option<usize>) -> Result<()> {
    let mut s = sc.soliton.take().unwrap_or_default();
    if let Some(c) = &a.channel {
        s.channel = Channels::parse(c)?;
    }
    if let Some(d) = a.dim {
        s.dim_h = d;
        s.dim_v = d;
    }
    if let Some(f) = &a.flow {
        s.flow = Flow::parse(f)?;
    }
    if let Some(n) = a.nodes.or(grid) {
        s.grid = n;
    }
    if let Some(v) = a.length {
        s.length = v;
    }
    if let Some(v) = a.tau_end {
        s.tau_end = v;
    }
    if a.dtau.is_some() {
        s.dtau = a.dtau;
    }
    if let Some(v) = &a.init {
        s.init = v.clone();
    }
    if let Some(v) = a.tau_every {
        s.every = v;
    }
    if let Some(v) = a.r {
        s.r = v;
    }
    if let Some(v) = a.s {
        s.s = v;
    }
    sc.soliton = Some(s);
    Ok(())
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Error::config("output", e.to_string()))?;
    println!("{s}");
    Ok(())
}

fn report(m: &RunManifest) {
    for w in &m.warnings {
        eprintln!("warning: {w}");
    }
    for c in &m.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        let detail: Vec<String> = c.measures.iter().map(|x| format!("{}={:.3e}", x.name, x.value)).collect();
        eprintln!("{tag} {} {}", c.name, detail.join(" "));
        if let Some(e) = &c.error {
            eprintln!("     error: {e}");
        }
    }
}

fn execute(cmd: Cmd) -> Result<bool> {
    let manifest = match cmd {
        Cmd::Nconn { common, pt } => {
            let mut sc = base(&common, Mode::Nconn)?;
            apply_point(&mut sc, &pt)?;
            sc.validate()?;
            if let Some(p) = &sc.point {
                print_json(&flow_io::nconn_blocks(&sc.fixture()?, p)?)?;
            }
            flow_io::run(&sc)?
        }
        Cmd::Geometry { common, pt, tm, verify } => {
            let mut sc = base(&common, Mode::Geometry)?;
            apply_point(&mut sc, &pt)?;
            sc.validate()?;
            let fx = sc.fixture()?;
            if !verify {
                let u = sc.point.clone().unwrap_or_else(|| fx.center());
                print_json(&flow_io::geometry_blocks(&fx, &u, tm)?)?;
            }
            flow_io::run(&sc)?
        }
        Cmd::Constframe { common, pt } => {
            let mut sc = base(&common, Mode::Constframe)?;
            apply_point(&mut sc, &pt)?;
            flow_io::run(&sc)?
        }
        Cmd::Ricci { common, fixture, ricci } => {
            let mut sc = base(&common, Mode::Ricci)?;
            apply_ricci(&mut sc, &fixture, &ricci)?;
            flow_io::run(&sc)?
        }
        Cmd::Soliton { common, grid, sol } => {
            let mut sc = base(&common, Mode::Soliton)?;
            apply_soliton(&mut sc, &sol, grid)?;
            flow_io::run(&sc)?
        }
        Cmd::Combined { common, fixture, ricci, sol } => {
            let mut sc = base(&common, Mode::Combined)?;
            apply_ricci(&mut sc, &fixture, &ricci)?;
            apply_soliton(&mut sc, &sol, None)?;
            flow_io::run(&sc)?
        }
        Cmd::Verify { common, checks } => {
            let mut sc = base(&common, Mode::Verify)?;
            if let Some(c) = &checks {
                sc.checks = Some(c.split(',').map(|s| s.trim().to_string()).collect());
            }
            let m = flow_io::run(&sc)?;
            if sc.out.is_none() {
                print!("{}", m.to_json()?);
            }
            m
        }
    };
    report(&manifest);
    Ok(manifest.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
