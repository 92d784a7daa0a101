//! d-metrics, the canonical d-connection and its torsion, curvature and Ricci blocks.
//!
//! Table layouts (upper index first, then lower indices in written order):
//! `lh = L^i_jk [n,n,n]`, `lv = L^a_bk [m,m,n]`, `ch = C^i_jc [n,n,m]`,
//! `cv = C^a_bc [m,m,m]`. Frame derivatives `e_k = ∂_k − N^a_k ∂_a`,
//! `e_a = ∂_a` are taken with dual numbers throughout.

mod blocks;
mod curvature;

pub use blocks::{BlockField, EtaEntry, JetField};
pub use curvature::{dcurvature, ricci_and_scalar, CurvatureBlocks, CurvatureBundle, RicciBlocks};

use crate::error::{Error, Result};
use crate::nconnection::{curvature_from_jet, NConnection};
use crate::tensor_core::{seed, Completion, Dual, Mat, MetricField, Real, Tensor};
use serde::{Deserialize, Serialize};

/// `g = g_ij e^i⊗e^j + h_ab e^a⊗e^b` with the N-connection that defines `e^a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DMetric {
    pub n: usize,
    pub m: usize,
    pub g: BlockField,
    pub h: BlockField,
    pub nconn: NConnection,
    /// Tangent-bundle mode: `m = n`, indices identified by `a = i + n`.
    #[serde(default)]
    pub tm: bool,
}

impl DMetric {
    pub fn new(n: usize, m: usize, g: BlockField, h: BlockField, nconn: NConnection) -> Result<Self> {
        let dm = DMetric { n, m, g, h, nconn, tm: false };
        dm.validate()?;
        Ok(dm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::config("n", "horizontal dimension must be at least 2"));
        }
        if self.m < self.n {
            return Err(Error::config("m", "vertical dimension below horizontal"));
        }
        if self.tm && self.m != self.n {
            return Err(Error::config("tm", "tangent-bundle mode needs m = n"));
        }
        if self.nconn.n() != self.n || self.nconn.m() != self.m {
            return Err(Error::config("nconn", "N-connection dimensions do not match the d-metric"));
        }
        if self.g.size() != self.n {
            return Err(Error::Dimension { expected: self.n, got: self.g.size() });
        }
        if self.h.size() != self.m {
            return Err(Error::Dimension { expected: self.m, got: self.h.size() });
        }
        self.nconn.validate()
    }

    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    /// Tangent-bundle lift: both blocks equal `g̃`, coframe built from `Ñ`.
    pub fn sasaki_lift(g: &MetricField) -> Result<Self> {
        let n = g.dim();
        let block = BlockField::Vertical { metric: g.clone(), completion: Completion::default(), size: None };
        let dm = DMetric { n, m: n, g: block.clone(), h: block, nconn: NConnection::canonical(g), tm: true };
        dm.validate()?;
        Ok(dm)
    }

    /// Lift into a bundle with `m > n`: the vertical block is `g̃` completed diagonally.
    pub fn sasaki_lift_completed(g: &MetricField, m: usize, completion: Completion) -> Result<Self> {
        let n = g.dim();
        let hb = BlockField::Vertical { metric: g.clone(), completion, size: Some(m) };
        let gb = BlockField::Vertical { metric: g.clone(), completion: Completion::default(), size: None };
        let dm = DMetric { n, m, g: gb, h: hb, nconn: NConnection::Canonical { m, metric: g.clone() }, tm: m == n };
        dm.validate()?;
        Ok(dm)
    }

    /// Constant blocks with an arbitrary N-connection.
    pub fn constant(g: Mat<f64>, h: Mat<f64>, nconn: NConnection) -> Result<Self> {
        let (n, m) = (g.rows, h.rows);
        DMetric::new(n, m, BlockField::Constant { g }, BlockField::Constant { g: h }, nconn)
    }

    pub fn with_tm(mut self, tm: bool) -> Result<Self> {
        self.tm = tm;
        self.validate()?;
        Ok(self)
    }

    pub fn with_nconn(mut self, nconn: NConnection) -> Self {
        self.nconn = nconn;
        self
    }

    pub fn blocks<T: Real>(&self, u: &[T]) -> Result<(Mat<T>, Mat<T>, Mat<T>)> {
        if u.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: u.len() });
        }
        Ok((self.g.eval(u, self.n)?, self.h.eval(u, self.n)?, self.nconn.eval(u)?))
    }

    /// Coordinate form `[[g + NᵀhN, Nᵀh], [hN, h]]`.
    pub fn coordinate_metric<T: Real>(&self, u: &[T]) -> Result<Mat<T>> {
        let (g, h, nv) = self.blocks(u)?;
        Ok(assemble_coordinate(&g, &h, &nv))
    }
}

pub fn assemble_coordinate<T: Real>(g: &Mat<T>, h: &Mat<T>, nv: &Mat<T>) -> Mat<T> {
    let (n, m) = (g.rows, h.rows);
    let hn = h.matmul(nv);
    let nthn = nv.transpose().matmul(&hn);
    let mut out = Mat::zeros(n + m, n + m);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = g[(i, j)] + nthn[(i, j)];
        }
        for a in 0..m {
            out[(i, n + a)] = hn[(a, i)];
            out[(n + a, i)] = hn[(a, i)];
        }
    }
    for a in 0..m {
        for b in 0..m {
            out[(n + a, n + b)] = h[(a, b)];
        }
    }
    out
}

/// Inverse of [`assemble_coordinate`]: `(g, h, N)` from a coordinate metric.
pub fn split_coordinate(gc: &Mat<f64>, n: usize) -> Result<(Mat<f64>, Mat<f64>, Mat<f64>)> {
    let d = gc.rows;
    let m = d - n;
    let h = Mat::from_fn(m, m, |a, b| gc[(n + a, n + b)]);
    let hvh = Mat::from_fn(m, n, |a, i| gc[(n + a, i)]);
    let nv = h.inverse()?.matmul(&hvh);
    let nthn = nv.transpose().matmul(&h.matmul(&nv));
    let g = Mat::from_fn(n, n, |i, j| gc[(i, j)] - nthn[(i, j)]);
    Ok((g, h, nv))
}

/// `sasaki_lift` as a free function.
pub fn sasaki_lift(g: &MetricField) -> Result<DMetric> {
    DMetric::sasaki_lift(g)
}

/// Values, inverses and all frame derivatives of the blocks at a point.
pub(crate) struct FrameData<T> {
    pub n: usize,
    pub m: usize,
    pub g: Mat<T>,
    pub gi: Mat<T>,
    pub h: Mat<T>,
    pub hi: Mat<T>,
    /// `∂_α N`, `α ∈ 0..n+m`.
    pub dn: Vec<Mat<T>>,
    /// `e_α g_ij`.
    pub eg: Vec<Mat<T>>,
    /// `e_α h_ab`.
    pub eh: Vec<Mat<T>>,
}

pub(crate) fn frame_data<T: Real>(dm: &DMetric, u: &[T]) -> Result<FrameData<T>> {
    let (n, m) = (dm.n, dm.m);
    let d = n + m;
    if u.len() != d {
        return Err(Error::Dimension { expected: d, got: u.len() });
    }
    let mut g = None;
    let mut h = None;
    let mut nv = None;
    let mut dg = Vec::with_capacity(d);
    let mut dh = Vec::with_capacity(d);
    let mut dn = Vec::with_capacity(d);
    for al in 0..d {
        let ud: Vec<Dual<T>> = seed(u, al);
        let (gd, hd, nd) = dm.blocks(&ud)?;
        if al == 0 {
            g = Some(gd.re());
            h = Some(hd.re());
            nv = Some(nd.re());
        }
        dg.push(gd.eps());
        dh.push(hd.eps());
        dn.push(nd.eps());
    }
    let (g, h, nv) = (g.unwrap(), h.unwrap(), nv.unwrap());
    let elongate = |dx: &Vec<Mat<T>>| -> Vec<Mat<T>> {
        (0..d)
            .map(|al| {
                if al >= n {
                    return dx[al].clone();
                }
                let mut e = dx[al].clone();
                for a in 0..m {
                    e = e.sub(&dx[n + a].scale(nv[(a, al)]));
                }
                e
            })
            .collect()
    };
    let eg = elongate(&dg);
    let eh = elongate(&dh);
    let gi = g.inverse()?;
    let hi = h.inverse()?;
    Ok(FrameData { n, m, g, gi, h, hi, dn, eg, eh })
}

/// Coefficient tables of a d-connection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coeffs<T> {
    pub lh: Tensor<T>,
    pub lv: Tensor<T>,
    pub ch: Tensor<T>,
    pub cv: Tensor<T>,
}

impl<T: Real> Coeffs<T> {
    pub fn zeros(n: usize, m: usize) -> Self {
        Coeffs {
            lh: Tensor::zeros(&[n, n, n]),
            lv: Tensor::zeros(&[m, m, n]),
            ch: Tensor::zeros(&[n, n, m]),
            cv: Tensor::zeros(&[m, m, m]),
        }
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U + Copy) -> Coeffs<U> {
        Coeffs { lh: self.lh.map(f), lv: self.lv.map(f), ch: self.ch.map(f), cv: self.cv.map(f) }
    }

    pub fn max_abs(&self) -> f64 {
        self.lh.max_abs().max(self.lv.max_abs()).max(self.ch.max_abs()).max(self.cv.max_abs())
    }
}

/// Which d-connection to build from a d-metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConnectionKind {
    /// The canonical d-connection (tangent-bundle form when the d-metric is in TM mode).
    Canonical,
    /// All coefficients zero.
    Zero,
    /// Canonical coefficients multiplied by a constant; metric-incompatible unless the factor is 1.
    Scaled(f64),
}

pub(crate) fn canonical_coeffs<T: Real>(fd: &FrameData<T>, tm: bool) -> Coeffs<T> {
    let (n, m) = (fd.n, fd.m);
    let mut c = Coeffs::zeros(n, m);
    for i in 0..n {
        for j in 0..n {
            for k in j..n {
                let mut s = T::zero();
                for r in 0..n {
                    s += fd.gi[(i, r)] * (fd.eg[k][(j, r)] + fd.eg[j][(k, r)] - fd.eg[r][(j, k)]);
                }
                let v = s * 0.5;
                c.lh.set(&[i, j, k], v);
                c.lh.set(&[i, k, j], v);
            }
        }
    }
    for a in 0..m {
        for b in 0..m {
            for cc in b..m {
                let mut s = T::zero();
                for dd in 0..m {
                    s += fd.hi[(a, dd)] * (fd.eh[n + cc][(b, dd)] + fd.eh[n + b][(cc, dd)] - fd.eh[n + dd][(b, cc)]);
                }
                let v = s * 0.5;
                c.cv.set(&[a, b, cc], v);
                c.cv.set(&[a, cc, b], v);
            }
        }
    }
    if tm {
        for a in 0..n {
            for b in 0..n {
                for k in 0..n {
                    c.lv.set(&[a, b, k], c.lh.at(&[a, b, k]));
                    c.ch.set(&[a, b, k], c.cv.at(&[a, b, k]));
                }
            }
        }
        return c;
    }
    for a in 0..m {
        for b in 0..m {
            for k in 0..n {
                let mut s = T::zero();
                for cc in 0..m {
                    let mut t = fd.eh[k][(b, cc)];
                    for dd in 0..m {
                        t -= fd.h[(dd, cc)] * fd.dn[n + b][(dd, k)] + fd.h[(dd, b)] * fd.dn[n + cc][(dd, k)];
                    }
                    s += fd.hi[(a, cc)] * t;
                }
                c.lv.set(&[a, b, k], fd.dn[n + b][(a, k)] + s * 0.5);
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            for cc in 0..m {
                let mut s = T::zero();
                for k in 0..n {
                    s += fd.gi[(i, k)] * fd.eg[n + cc][(j, k)];
                }
                c.ch.set(&[i, j, cc], s * 0.5);
            }
        }
    }
    c
}

pub(crate) fn coeffs_of<T: Real>(dm: &DMetric, kind: ConnectionKind, u: &[T]) -> Result<Coeffs<T>> {
    match kind {
        ConnectionKind::Zero => {
            if u.len() != dm.dim() {
                return Err(Error::Dimension { expected: dm.dim(), got: u.len() });
            }
            Ok(Coeffs::zeros(dm.n, dm.m))
        }
        ConnectionKind::Canonical => Ok(canonical_coeffs(&frame_data(dm, u)?, dm.tm)),
        ConnectionKind::Scaled(f) => Ok(canonical_coeffs(&frame_data(dm, u)?, dm.tm).map(|x| x * f)),
    }
}

/// Coefficients of a d-connection at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DConnection {
    pub n: usize,
    pub m: usize,
    pub tm: bool,
    pub kind: ConnectionKind,
    pub coeffs: Coeffs<f64>,
}

impl DConnection {
    pub fn zero(n: usize, m: usize) -> Self {
        DConnection { n, m, tm: false, kind: ConnectionKind::Zero, coeffs: Coeffs::zeros(n, m) }
    }
}

pub fn dconnection(dm: &DMetric, kind: ConnectionKind, u: &[f64]) -> Result<DConnection> {
    Ok(DConnection { n: dm.n, m: dm.m, tm: dm.tm, kind, coeffs: coeffs_of(dm, kind, u)? })
}

/// The canonical d-connection; in TM mode `L^a_bk` and `C^i_jc` are the identified copies.
pub fn canonical_dconnection(dm: &DMetric, u: &[f64]) -> Result<DConnection> {
    dconnection(dm, ConnectionKind::Canonical, u)
}

/// d-torsion blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorsionBlocks {
    /// `T^i_jk = L^i_jk − L^i_kj`.
    pub hhh: Tensor<f64>,
    /// `T^i_ja = C^i_ja`.
    pub hhv: Tensor<f64>,
    /// `T^a_ji = Ω^a_ji`.
    pub vhh: Tensor<f64>,
    /// `T^a_bi = ∂N^a_i/∂y^b − L^a_bi`.
    pub vvh: Tensor<f64>,
    /// `T^a_bc = C^a_bc − C^a_cb`.
    pub vvv: Tensor<f64>,
}

pub(crate) fn torsion_from(c: &Coeffs<f64>, dn: &[Mat<f64>], om: &Tensor<f64>, n: usize, m: usize) -> TorsionBlocks {
    let mut t = TorsionBlocks {
        hhh: Tensor::zeros(&[n, n, n]),
        hhv: c.ch.clone(),
        vhh: om.clone(),
        vvh: Tensor::zeros(&[m, m, n]),
        vvv: Tensor::zeros(&[m, m, m]),
    };
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                t.hhh.set(&[i, j, k], c.lh.at(&[i, j, k]) - c.lh.at(&[i, k, j]));
            }
        }
    }
    for a in 0..m {
        for b in 0..m {
            for i in 0..n {
                t.vvh.set(&[a, b, i], dn[n + b][(a, i)] - c.lv.at(&[a, b, i]));
            }
            for cc in 0..m {
                t.vvv.set(&[a, b, cc], c.cv.at(&[a, b, cc]) - c.cv.at(&[a, cc, b]));
            }
        }
    }
    t
}

pub fn dtorsion(dc: &DConnection, nconn: &NConnection, u: &[f64]) -> Result<TorsionBlocks> {
    let (nv, dn) = nconn.jet(u)?;
    let om = curvature_from_jet(&nv, &dn, dc.n, dc.m);
    Ok(torsion_from(&dc.coeffs, &dn, &om, dc.n, dc.m))
}

/// Max over `D_j g_kl, D_a g_kl, D_j h_ab, D_a h_bc`.
pub fn compatibility_residual(dc: &DConnection, dm: &DMetric, u: &[f64]) -> Result<f64> {
    let fd = frame_data::<f64>(dm, u)?;
    let (n, m) = (dm.n, dm.m);
    let c = &dc.coeffs;
    let mut worst: f64 = 0.0;
    for k in 0..n {
        for l in 0..n {
            for j in 0..n {
                let mut s = fd.eg[j][(k, l)];
                for q in 0..n {
                    s -= c.lh.at(&[q, k, j]) * fd.g[(q, l)] + c.lh.at(&[q, l, j]) * fd.g[(k, q)];
                }
                worst = worst.max(s.abs());
            }
            for a in 0..m {
                let mut s = fd.eg[n + a][(k, l)];
                for q in 0..n {
                    s -= c.ch.at(&[q, k, a]) * fd.g[(q, l)] + c.ch.at(&[q, l, a]) * fd.g[(k, q)];
                }
                worst = worst.max(s.abs());
            }
        }
    }
    for a in 0..m {
        for b in 0..m {
            for j in 0..n {
                let mut s = fd.eh[j][(a, b)];
                for q in 0..m {
                    s -= c.lv.at(&[q, a, j]) * fd.h[(q, b)] + c.lv.at(&[q, b, j]) * fd.h[(a, q)];
                }
                worst = worst.max(s.abs());
            }
            for cc in 0..m {
                let mut s = fd.eh[n + cc][(a, b)];
                for q in 0..m {
                    s -= c.cv.at(&[q, a, cc]) * fd.h[(q, b)] + c.cv.at(&[q, b, cc]) * fd.h[(a, q)];
                }
                worst = worst.max(s.abs());
            }
        }
    }
    Ok(worst)
}

fn christoffel_of<T: Real>(gc: &Mat<T>, dgc: &[Mat<T>]) -> Result<Tensor<T>> {
    let d = gc.rows;
    let gi = gc.inverse()?;
    let mut out = Tensor::zeros(&[d, d, d]);
    for mu in 0..d {
        for nu in 0..d {
            for la in nu..d {
                let mut s = T::zero();
                for si in 0..d {
                    s += gi[(mu, si)] * (dgc[nu][(si, la)] + dgc[la][(si, nu)] - dgc[si][(nu, la)]);
                }
                let v = s * 0.5;
                out.set(&[mu, nu, la], v);
                out.set(&[mu, la, nu], v);
            }
        }
    }
    Ok(out)
}

/// Coordinate Christoffel symbols `Γ^μ_νλ` of the coordinate form of the d-metric.
pub fn levi_civita(dm: &DMetric, u: &[f64]) -> Result<Tensor<f64>> {
    let d = dm.dim();
    let mut gc = None;
    let mut dgc = Vec::with_capacity(d);
    for al in 0..d {
        let m = dm.coordinate_metric(&seed(u, al))?;
        if al == 0 {
            gc = Some(m.re());
        }
        dgc.push(m.eps());
    }
    christoffel_of(&gc.unwrap(), &dgc)
}

/// `max |∇_λ ĝ_μν|` for the Levi-Civita connection.
pub fn levi_civita_residual(dm: &DMetric, u: &[f64]) -> Result<f64> {
    let d = dm.dim();
    let gam = levi_civita(dm, u)?;
    let gc = dm.coordinate_metric(u)?;
    let mut worst: f64 = 0.0;
    for la in 0..d {
        let dg = dm.coordinate_metric(&seed(u, la))?.eps();
        for mu in 0..d {
            for nu in 0..d {
                let mut s = dg[(mu, nu)];
                for si in 0..d {
                    s -= gam.at(&[si, la, mu]) * gc[(si, nu)] + gam.at(&[si, la, nu]) * gc[(mu, si)];
                }
                worst = worst.max(s.abs());
            }
        }
    }
    Ok(worst)
}

/// Levi-Civita coefficients in the N-adapted frame: `∇_{e_α} e_β = Γ^γ_αβ e_γ`, indexed `[γ, α, β]`.
pub fn levi_civita_in_frame(dm: &DMetric, u: &[f64]) -> Result<Tensor<f64>> {
    let (n, m) = (dm.n, dm.m);
    let d = n + m;
    let gam = levi_civita(dm, u)?;
    let (nv, dn) = dm.nconn.jet(u)?;
    let fr = crate::nconnection::NAdaptedFrame::from_coefficients(&nv, n, m);
    // ∂_ν E_β^μ: only the vertical components of horizontal frame vectors vary.
    let d_frame = |nu: usize, beta: usize, mu: usize| -> f64 {
        if beta < n && mu >= n {
            -dn[nu][(mu - n, beta)]
        } else {
            0.0
        }
    };
    let e = &fr.frame;
    let th = &fr.coframe;
    let mut out = Tensor::zeros(&[d, d, d]);
    for al in 0..d {
        for be in 0..d {
            let mut v = vec![0.0; d];
            for (mu, vm) in v.iter_mut().enumerate() {
                let mut s = 0.0;
                for nu in 0..d {
                    let ea = e[(nu, al)];
                    if ea == 0.0 {
                        continue;
                    }
                    s += ea * d_frame(nu, be, mu);
                    for la in 0..d {
                        s += ea * e[(la, be)] * gam.at(&[mu, nu, la]);
                    }
                }
                *vm = s;
            }
            for ga in 0..d {
                let mut s = 0.0;
                for mu in 0..d {
                    s += th[(ga, mu)] * v[mu];
                }
                out.set(&[ga, al, be], s);
            }
        }
    }
    Ok(out)
}

/// Largest difference between `(L^i_jk, C^a_bc)` and the frame Levi-Civita blocks.
pub fn tm_coincidence(dm: &DMetric, u: &[f64]) -> Result<f64> {
    let (n, m) = (dm.n, dm.m);
    let dc = canonical_dconnection(dm, u)?;
    let lc = levi_civita_in_frame(dm, u)?;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                worst = worst.max((dc.coeffs.lh.at(&[i, j, k]) - lc.at(&[i, k, j])).abs());
            }
        }
    }
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                worst = worst.max((dc.coeffs.cv.at(&[a, b, c]) - lc.at(&[n + a, n + c, n + b])).abs());
            }
        }
    }
    Ok(worst)
}

/// `A` with `Aᵀ g A = η` per block, via `LDLᵀ`; block-diagonal `(n+m)×(n+m)`.
pub fn orthonormalize(dm: &DMetric, u: &[f64], eta: Option<&[f64]>) -> Result<Mat<f64>> {
    let (g, h, _) = dm.blocks(u)?;
    let (n, m) = (dm.n, dm.m);
    let ah = block_orthonormal(&g, eta.map(|e| &e[..n]))?;
    let av = block_orthonormal(&h, eta.map(|e| &e[n..n + m]))?;
    let mut a = Mat::zeros(n + m, n + m);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = ah[(i, j)];
        }
    }
    for i in 0..m {
        for j in 0..m {
            a[(n + i, n + j)] = av[(i, j)];
        }
    }
    Ok(a)
}

fn ldl<T: Real>(g: &Mat<T>, eta: Option<&[f64]>) -> Result<(Mat<T>, Vec<T>)> {
    let n = g.rows;
    let mut l = Mat::<T>::identity(n);
    let mut dvals = vec![T::zero(); n];
    for j in 0..n {
        let mut dj = g[(j, j)];
        for k in 0..j {
            dj -= l[(j, k)] * l[(j, k)] * dvals[k];
        }
        if dj.val().abs() < 1e-14 {
            return Err(Error::Signature(format!("zero pivot in block factorisation at index {j}")));
        }
        dvals[j] = dj;
        for i in j + 1..n {
            let mut s = g[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)] * dvals[k];
            }
            l[(i, j)] = s / dj;
        }
    }
    if let Some(eta) = eta {
        for (j, d) in dvals.iter().enumerate() {
            if d.val().signum() != eta[j].signum() {
                return Err(Error::Signature(format!(
                    "pivot {j} has sign {} but the declared signature is {}",
                    d.val().signum(),
                    eta[j]
                )));
            }
        }
    }
    Ok((l, dvals))
}

/// `F = L |D|^{1/2}` from `g = L D Lᵀ`, so that `g = F sign(D) Fᵀ`.
pub fn block_factor<T: Real>(g: &Mat<T>) -> Result<Mat<T>> {
    let (l, dvals) = ldl(g, None)?;
    Ok(Mat::from_fn(g.rows, g.rows, |i, j| {
        let d = dvals[j];
        let s = if d.val() < 0.0 { -d } else { d };
        l[(i, j)] * s.sqrt()
    }))
}

/// `A = L⁻ᵀ |D|^{-1/2}` from `g = L D Lᵀ`, so that `Aᵀ g A = sign(D)`.
pub fn block_orthonormal<T: Real>(g: &Mat<T>, eta: Option<&[f64]>) -> Result<Mat<T>> {
    let n = g.rows;
    let (l, dvals) = ldl(g, eta)?;
    let linv_t = l.inverse()?.transpose();
    Ok(Mat::from_fn(n, n, |i, j| {
        let d = dvals[j];
        let s = if d.val() < 0.0 { -d } else { d };
        linv_t[(i, j)] / s.sqrt()
    }))
}
