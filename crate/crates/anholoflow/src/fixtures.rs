//! Named d-metric fixtures shared by the CLI, the verify suite and the tests.

use crate::dgeometry::{BlockField, DMetric, EtaEntry};
use crate::error::{Error, Result};
use crate::nconnection::{NConnection, UserN};
use crate::tensor_core::{Completion, Mat, MetricField, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A d-metric together with a box of coordinates where it is regular.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub name: String,
    pub dm: DMetric,
    pub domain: Vec<(f64, f64)>,
}

impl Fixture {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.domain.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect()
    }

    pub fn samples<R: Rng>(&self, rng: &mut R, k: usize) -> Vec<Vec<f64>> {
        (0..k).map(|_| self.sample(rng)).collect()
    }

    /// Centre of the domain box.
    pub fn center(&self) -> Vec<f64> {
        self.domain.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect()
    }
}

pub const NAMES: &[&str] = &[
    "flat",
    "diagonal-polynomial",
    "conformal",
    "sphere",
    "bundle",
    "constant-trig",
    "constant-potential",
    "constant-generic",
    "delta-lift",
    "einstein",
    "shrinking-sphere",
    "conformal-flow",
];

fn boxed(n: usize, m: usize, x: (f64, f64), y: (f64, f64)) -> Vec<(f64, f64)> {
    let mut d = vec![x; n];
    d.extend(std::iter::repeat(y).take(m));
    d
}

pub fn diagonal_polynomial_base() -> MetricField {
    MetricField::diagonal_polynomial(vec![vec![1.0, 0.0, 0.5], vec![2.0, 0.3]], vec![1, 0])
}

/// Constant `g̊`, `h̊` used by the constant-coefficient family.
pub fn constant_blocks() -> (Mat<f64>, Mat<f64>) {
    let g = Mat { rows: 2, cols: 2, data: vec![1.0, 0.2, 0.2, 2.0] };
    let h = Mat { rows: 3, cols: 3, data: vec![2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 1.5] };
    (g, h)
}

/// `N^a_i` built from sines of the base coordinates only.
pub fn trig_x_only(n: usize, m: usize) -> NConnection {
    let d = n + m;
    let mut amp = Tensor::zeros(&[m, n, d]);
    let mut freq = Tensor::zeros(&[m, n, d]);
    let mut phase = Tensor::zeros(&[m, n, d]);
    for a in 0..m {
        for i in 0..n {
            for al in 0..n {
                let s = (a * n * d + i * d + al) as f64;
                amp.set(&[a, i, al], 0.3 + 0.1 * (s * 0.7).sin());
                freq.set(&[a, i, al], 0.8 + 0.2 * (s * 1.3).cos());
                phase.set(&[a, i, al], 0.5 * s);
            }
        }
    }
    NConnection::User { n, m, field: UserN::Trig { amp, freq, phase } }
}

/// `N^a_i` with genuine fiber dependence.
pub fn trig_full(n: usize, m: usize) -> NConnection {
    let d = n + m;
    let mut amp = Tensor::zeros(&[m, n, d]);
    let mut freq = Tensor::zeros(&[m, n, d]);
    let mut phase = Tensor::zeros(&[m, n, d]);
    for a in 0..m {
        for i in 0..n {
            for al in 0..d {
                let s = (a * n * d + i * d + al) as f64;
                amp.set(&[a, i, al], 0.25 + 0.1 * (s * 0.9).sin());
                freq.set(&[a, i, al], 0.7 + 0.3 * (s * 1.1).cos());
                phase.set(&[a, i, al], 0.3 * s);
            }
        }
    }
    NConnection::User { n, m, field: UserN::Trig { amp, freq, phase } }
}

pub fn affine(n: usize, m: usize) -> NConnection {
    let d = n + m;
    let mut c = Tensor::zeros(&[m, n]);
    let mut l = Tensor::zeros(&[m, n, d]);
    for a in 0..m {
        for i in 0..n {
            c.set(&[a, i], 0.1 * (a as f64 + 1.0) - 0.2 * i as f64);
            for al in 0..d {
                let s = (a * n * d + i * d + al) as f64;
                l.set(&[a, i, al], 0.2 * (s * 1.7).sin());
            }
        }
    }
    NConnection::User { n, m, field: UserN::Affine { c, l } }
}

/// `N^a_k = ∂φ_k/∂y^a`, `φ_k = amp_k sin(p_k·x + q_k·y)`.
pub fn potential_gradient(n: usize, m: usize) -> NConnection {
    let amp = (0..n).map(|k| 0.4 + 0.1 * k as f64).collect();
    let p = (0..n).map(|k| (0..n).map(|i| 0.5 + 0.3 * ((k + 2 * i) as f64).sin()).collect()).collect();
    let q = (0..n).map(|k| (0..m).map(|a| 0.6 + 0.25 * ((3 * k + a) as f64).cos()).collect()).collect();
    NConnection::User { n, m, field: UserN::PotentialGradient { amp, p, q } }
}

fn eta_wave(size: usize, axis_base: usize, d: usize) -> Vec<Vec<EtaEntry>> {
    (0..size)
        .map(|i| {
            (0..size)
                .map(|j| EtaEntry {
                    c0: 1.0,
                    amp: if i == j { 0.15 } else { 0.05 },
                    freq: 0.9 + 0.1 * (i + j) as f64,
                    axis: (axis_base + i + j) % d,
                })
                .collect()
        })
        .collect()
}

pub fn fixture(name: &str) -> Result<Fixture> {
    let f = |dm: DMetric, domain: Vec<(f64, f64)>| Fixture { name: name.to_string(), dm, domain };
    match name {
        "flat" => Ok(f(DMetric::sasaki_lift(&MetricField::flat(2))?, boxed(2, 2, (-1.0, 1.0), (-1.0, 1.0)))),
        "diagonal-polynomial" => {
            Ok(f(DMetric::sasaki_lift(&diagonal_polynomial_base())?, boxed(2, 2, (-1.0, 1.0), (-1.0, 1.0))))
        }
        "conformal" => Ok(f(DMetric::sasaki_lift(&MetricField::conformal_curved(2, 0.3, 0.2))?, boxed(2, 2, (-1.0, 1.0), (-1.0, 1.0)))),
        "sphere" => Ok(f(DMetric::sasaki_lift(&MetricField::sphere(2, 1.0))?, boxed(2, 2, (0.4, 2.7), (-1.0, 1.0)))),
        "bundle" => {
            let (n, m) = (2, 3);
            let g = BlockField::Deformed {
                inner: Box::new(BlockField::base(MetricField::conformal_curved(2, 0.2, 0.15))),
                eta: eta_wave(n, 1, n + m),
            };
            let (_, h0) = constant_blocks();
            let h = BlockField::Deformed { inner: Box::new(BlockField::constant(h0)), eta: eta_wave(m, 0, n + m) };
            Ok(f(DMetric::new(n, m, g, h, affine(n, m))?, boxed(n, m, (-1.0, 1.0), (-1.0, 1.0))))
        }
        "constant-trig" => {
            let (g, h) = constant_blocks();
            Ok(f(DMetric::constant(g, h, trig_x_only(2, 3))?, boxed(2, 3, (-2.0, 2.0), (-2.0, 2.0))))
        }
        "constant-potential" => {
            let (g, _) = constant_blocks();
            let h = Mat::identity(3).scale(1.5);
            Ok(f(DMetric::constant(g, h, potential_gradient(2, 3))?, boxed(2, 3, (-2.0, 2.0), (-2.0, 2.0))))
        }
        "constant-generic" => {
            let (g, h) = constant_blocks();
            Ok(f(DMetric::constant(g, h, trig_full(2, 3))?, boxed(2, 3, (-2.0, 2.0), (-2.0, 2.0))))
        }
        "delta-lift" => {
            let base = MetricField::conformal_curved(2, 0.3, 0.2);
            let dm = DMetric::new(2, 2, BlockField::constant(Mat::identity(2)), BlockField::constant(Mat::identity(2)), NConnection::canonical(&base))?
                .with_tm(true)?;
            Ok(f(dm, boxed(2, 2, (-1.0, 1.0), (-1.0, 1.0))))
        }
        "einstein" => {
            let g = BlockField::base(MetricField::sphere(2, 1.0));
            let h = BlockField::Fiber { metric: MetricField::sphere(3, 2f64.sqrt()) };
            Ok(f(DMetric::new(2, 3, g, h, NConnection::zero(2, 3))?, boxed(2, 3, (1.1, 2.0), (1.1, 2.0))))
        }
        "shrinking-sphere" => {
            // Isothermal chart: the lattice flow of a conformal 2-metric is strictly parabolic.
            let g = BlockField::base(MetricField::mercator(1.0));
            let h = BlockField::constant(Mat::identity(2));
            Ok(f(DMetric::new(2, 2, g, h, NConnection::zero(2, 2))?, boxed(2, 2, (-1.0, 1.0), (-1.0, 1.0))))
        }
        "conformal-flow" => {
            let g = BlockField::base(MetricField::conformal_curved(2, 0.3, 0.2));
            let h = BlockField::constant(Mat::identity(2));
            Ok(f(DMetric::new(2, 2, g, h, NConnection::zero(2, 2))?, boxed(2, 2, (-1.0, 1.0), (-1.0, 1.0))))
        }
        _ => Err(Error::UnknownFixture(name.to_string())),
    }
}

/// A lift into a bundle with `m > n`, vertical block completed by `extra`.
pub fn completed_lift(base: &MetricField, m: usize, extra: Vec<f64>) -> Result<DMetric> {
    DMetric::sasaki_lift_completed(base, m, Completion { extra })
}
