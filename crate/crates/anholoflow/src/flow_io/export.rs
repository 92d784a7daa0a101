//! JSON-lines trajectories and CSV summaries.
//!
//! A JSON-lines file starts with one header object (kind, tool version, seed,
//! CSV column names, run metadata) followed by one record per snapshot. CSV
//! files start with a `#` comment carrying the same provenance, then the
//! column row.

use crate::error::{Error, Result};
use crate::ricci_flow::{FlowSetup, FlowTrajectory, Snapshot};
use crate::soliton_hierarchy::{Channel, Flow, Grid, SGSnapshot, SolitonSnapshot, SolitonTrajectory};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

pub const TOOL: &str = "anholoflow";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            _ => Err(Error::config("format", format!("expected jsonl or csv, got `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header<M> {
    pub kind: String,
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub columns: Vec<String>,
    pub meta: M,
}

pub trait Exportable: Sized {
    const KIND: &'static str;
    type Meta: Serialize + DeserializeOwned + Clone;
    type Record: Serialize + DeserializeOwned;

    fn meta(&self) -> Self::Meta;
    fn records(&self) -> &[Self::Record];
    fn from_parts(meta: Self::Meta, records: Vec<Self::Record>) -> Self;
    fn columns() -> Vec<String>;
    fn row(r: &Self::Record) -> Vec<f64>;
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolitonMeta {
    pub flow: Flow,
    pub grid: Grid,
    pub r: f64,
    pub s: f64,
}

impl Exportable for SolitonTrajectory {
    const KIND: &'static str = "soliton";
    type Meta = SolitonMeta;
    type Record = SolitonSnapshot;

    fn meta(&self) -> SolitonMeta {
        SolitonMeta { flow: self.flow, grid: self.grid, r: self.r, s: self.s }
    }

    fn records(&self) -> &[SolitonSnapshot] {
        &self.snapshots
    }

    fn from_parts(m: SolitonMeta, records: Vec<SolitonSnapshot>) -> Self {
        SolitonTrajectory { flow: m.flow, grid: m.grid, r: m.r, s: m.s, snapshots: records }
    }

    fn columns() -> Vec<String> {
        cols(&["tau", "h_H0", "h_H1", "h_H2", "v_H0", "v_H1", "v_H2"])
    }

    fn row(r: &SolitonSnapshot) -> Vec<f64> {
        let mut v = vec![r.tau];
        v.extend(r.ham_h);
        v.extend(r.ham_v);
        v
    }
}

impl Exportable for FlowTrajectory {
    const KIND: &'static str = "ricci";
    type Meta = FlowSetup;
    type Record = Snapshot;

    fn meta(&self) -> FlowSetup {
        self.setup.clone()
    }

    fn records(&self) -> &[Snapshot] {
        &self.snapshots
    }

    fn from_parts(setup: FlowSetup, snapshots: Vec<Snapshot>) -> Self {
        FlowTrajectory { setup, snapshots }
    }

    fn columns() -> Vec<String> {
        cols(&[
            "chi",
            "lambda",
            "r_norm",
            "r_mean",
            "s_mean",
            "offdiag_max",
            "compat_max",
            "symmetry_defect",
            "frame_defect",
        ])
    }

    fn row(r: &Snapshot) -> Vec<f64> {
        let d = &r.diag;
        vec![
            d.chi,
            d.lambda,
            d.r_norm,
            d.r_mean,
            d.s_mean,
            d.offdiag_max,
            d.compat_max,
            d.symmetry_defect,
            d.frame_defect,
        ]
    }
}

/// A −1 flow run of one channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SGTrajectory {
    pub channel: Channel,
    pub curv: f64,
    pub snapshots: Vec<SGSnapshot>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SGMeta {
    pub channel: Channel,
    pub curv: f64,
}

impl Exportable for SGTrajectory {
    const KIND: &'static str = "sine-gordon";
    type Meta = SGMeta;
    type Record = SGSnapshot;

    fn meta(&self) -> SGMeta {
        SGMeta { channel: self.channel, curv: self.curv }
    }

    fn records(&self) -> &[SGSnapshot] {
        &self.snapshots
    }

    fn from_parts(m: SGMeta, snapshots: Vec<SGSnapshot>) -> Self {
        SGTrajectory { channel: m.channel, curv: m.curv, snapshots }
    }

    fn columns() -> Vec<String> {
        cols(&["tau", "conservation_defect", "normalization_defect"])
    }

    fn row(r: &SGSnapshot) -> Vec<f64> {
        vec![r.tau, r.conservation_defect, r.normalization_defect]
    }
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::config("serialize", e.to_string()))
}

pub fn render<T: Exportable>(traj: &T, seed: u64, format: Format) -> Result<String> {
    let mut out = String::new();
    match format {
        Format::Jsonl => {
            let header = Header {
                kind: T::KIND.to_string(),
                tool: TOOL.to_string(),
                version: VERSION.to_string(),
                seed,
                columns: T::columns(),
                meta: traj.meta(),
            };
            out.push_str(&json(&header)?);
            out.push('\n');
            for r in traj.records() {
                out.push_str(&json(r)?);
                out.push('\n');
            }
        }
        Format::Csv => {
            let _ = writeln!(out, "# {TOOL} {VERSION} kind={} seed={seed}", T::KIND);
            out.push_str(&T::columns().join(","));
            out.push('\n');
            for r in traj.records() {
                let row: Vec<String> = T::row(r).iter().map(|x| x.to_string()).collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
        }
    }
    Ok(out)
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn export_trajectory<T: Exportable>(traj: &T, seed: u64, path: &Path, format: Format) -> Result<()> {
    write_file(path, &render(traj, seed, format)?)
}

fn parse_err(e: serde_json::Error, line_offset: usize) -> Error {
    Error::Parse { line: e.line() + line_offset, column: e.column(), msg: e.to_string() }
}

/// Reads a JSON-lines trajectory written by [`export_trajectory`].
pub fn import_jsonl<T: Exportable>(path: &Path) -> Result<(Header<T::Meta>, T)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| Error::Parse { line: 1, column: 1, msg: "missing header".into() })?;
    let header: Header<T::Meta> = serde_json::from_str(first).map_err(|e| parse_err(e, 0))?;
    if header.kind != T::KIND {
        return Err(Error::config("kind", format!("expected `{}`, found `{}`", T::KIND, header.kind)));
    }
    let records = lines
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_err(e, i + 1)))
        .collect::<Result<Vec<T::Record>>>()?;
    let meta = header.meta.clone();
    Ok((header, T::from_parts(meta, records)))
}

/// Reads a CSV summary: the provenance comment, the column names and the rows.
pub fn import_csv(path: &Path) -> Result<(String, Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let comment = text.lines().next().filter(|l| l.starts_with('#')).unwrap_or("").to_string();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::io(path, e))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::io(path, e))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, s)| s.parse::<f64>().map_err(|e| Error::Parse { line: i + 3, column: j + 1, msg: e.to_string() }))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((comment, headers, rows))
}
