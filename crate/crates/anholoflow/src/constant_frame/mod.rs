//! Vertical vielbeins with constant target metrics and constant-curvature checks.

use crate::dgeometry::{block_orthonormal, coeffs_of, dcurvature, dtorsion, dconnection, ConnectionKind, DMetric};
use crate::error::{Error, Result};
use crate::nconnection::NConnection;
use crate::tensor_core::{seed_along, Completion, Dual, Mat, MetricField, Real, Tensor};
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// `e_a^ā(x)` with `e_a^ā e_b^b̄ g_āb̄(x) = g̊_ab`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VielbeinField {
    pub base: MetricField,
    #[serde(default)]
    pub completion: Completion,
    pub target: Mat<f64>,
}

fn to_na(a: &Mat<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.rows, a.cols, |i, j| a[(i, j)])
}

fn from_na(a: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Eigenpairs sorted positive-first, descending magnitude inside each sign class.
fn sorted_eigen(a: &Mat<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(to_na(a));
    let mut idx: Vec<usize> = (0..a.rows).collect();
    idx.sort_by(|&p, &q| {
        let (lp, lq) = (eig.eigenvalues[p], eig.eigenvalues[q]);
        (lq > 0.0).cmp(&(lp > 0.0)).then(lq.abs().total_cmp(&lp.abs()))
    });
    let vals = idx.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = DMatrix::from_fn(a.rows, a.rows, |i, j| eig.eigenvectors[(i, idx[j])]);
    (vals, vecs)
}

fn sym_sqrt(a: &Mat<f64>, power: f64) -> Mat<f64> {
    let eig = SymmetricEigen::new(to_na(a));
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.powf(power)));
    from_na(&(&eig.eigenvectors * d * eig.eigenvectors.transpose()))
}

fn inertia(vals: &[f64]) -> (usize, usize) {
    let p = vals.iter().filter(|&&l| l > 0.0).count();
    (p, vals.len() - p)
}

impl VielbeinField {
    pub fn size(&self) -> usize {
        self.target.rows
    }

    /// Base metric completed to the fiber size at `x`.
    pub fn base_block(&self, x: &[f64]) -> Result<Mat<f64>> {
        let g = self.base.eval_checked(x)?;
        Ok(self.completion.complete(&g, self.size()))
    }

    /// `E[(a, ā)] = e_a^ā`.
    pub fn eval(&self, x: &[f64]) -> Result<Mat<f64>> {
        let g = self.base_block(x)?;
        vielbein_matrix(&g, &self.target)
    }

    /// `max |½ ∂²(e_a^ā e_b^b̄ y^a y^b g_āb̄)/∂y^e∂y^f − g̊_ef|`, second derivatives by nested duals.
    pub fn residual(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let e = self.eval(x)?;
        let g = self.base_block(x)?;
        let m = self.size();
        if y.len() < m {
            return Err(Error::Dimension { expected: m, got: y.len() });
        }
        let mut worst: f64 = 0.0;
        for p in 0..m {
            for q in 0..m {
                let yy: Vec<Dual<Dual<f64>>> = (0..m)
                    .map(|k| {
                        let inner = Dual::new(y[k], if k == q { 1.0 } else { 0.0 });
                        Dual::new(inner, if k == p { Dual::one() } else { Dual::zero() })
                    })
                    .collect();
                // z^ā = e_a^ā y^a
                let z: Vec<Dual<Dual<f64>>> = (0..m)
                    .map(|ab| {
                        let mut s = Dual::zero();
                        for a in 0..m {
                            s += yy[a] * e[(a, ab)];
                        }
                        s
                    })
                    .collect();
                let mut l = Dual::<Dual<f64>>::zero();
                for a in 0..m {
                    for b in 0..m {
                        l += z[a] * z[b] * g[(a, b)];
                    }
                }
                worst = worst.max((l.eps.eps * 0.5 - self.target[(p, q)]).abs());
            }
        }
        Ok(worst)
    }

    /// The constant-coefficient d-metric `g̊_ij e^i e^j + g̊_ab e^a e^b` with any N.
    pub fn dmetric(&self, g_h: Mat<f64>, nconn: NConnection) -> Result<DMetric> {
        DMetric::constant(g_h, self.target.clone(), nconn)
    }
}

/// `E` with `E G Eᵀ = g̊`: symmetric square-root form when `g̊` is definite,
/// eigenframe matching otherwise.
pub fn vielbein_matrix(g: &Mat<f64>, target: &Mat<f64>) -> Result<Mat<f64>> {
    let (tv, tq) = sorted_eigen(target);
    let (gv, gq) = sorted_eigen(g);
    if inertia(&tv) != inertia(&gv) {
        return Err(Error::Signature(format!(
            "target inertia {:?} differs from base inertia {:?}",
            inertia(&tv),
            inertia(&gv)
        )));
    }
    if tv.iter().all(|&l| l > 0.0) {
        let s = sym_sqrt(target, 0.5);
        let sgs = s.matmul(g).matmul(&s);
        return Ok(s.matmul(&sym_sqrt(&sgs, -0.5)).matmul(&s));
    }
    let dt = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(tv.len(), tv.iter().map(|l| l.abs().sqrt())));
    let dg = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(gv.len(), gv.iter().map(|l| 1.0 / l.abs().sqrt())));
    Ok(from_na(&(tq * dt * dg * gq.transpose())))
}

pub fn solve_vertical_vielbein(g_base: &MetricField, target: &Mat<f64>) -> Result<VielbeinField> {
    solve_vertical_vielbein_completed(g_base, target, Completion::default())
}

pub fn solve_vertical_vielbein_completed(g_base: &MetricField, target: &Mat<f64>, completion: Completion) -> Result<VielbeinField> {
    if target.rows != target.cols || target.symmetry_defect() > 1e-12 {
        return Err(Error::config("target", "must be a symmetric square matrix"));
    }
    if target.rows < g_base.dim() {
        return Err(Error::Dimension { expected: g_base.dim(), got: target.rows });
    }
    let det = target.det();
    if !(det.abs() > crate::tensor_core::DEGENERACY_TOL) {
        return Err(Error::SingularMetric { det });
    }
    let vf = VielbeinField { base: g_base.clone(), completion, target: target.clone() };
    // Probe the signature once at the origin of the chart and once off it.
    for x in [vec![0.3; g_base.dim()], vec![1.1; g_base.dim()]] {
        if let Ok(g) = vf.base_block(&x) {
            vielbein_matrix(&g, target)?;
            break;
        }
    }
    Ok(vf)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSpread {
    pub block: String,
    pub spread: f64,
    pub max_abs: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantCurvatureReport {
    pub samples: usize,
    pub tol: f64,
    pub blocks: Vec<BlockSpread>,
    pub torsion_max: Vec<(String, f64)>,
    pub pass: bool,
}

impl ConstantCurvatureReport {
    pub fn max_spread(&self) -> f64 {
        self.blocks.iter().fold(0.0, |m, b| m.max(b.spread))
    }

    pub fn max_curvature(&self) -> f64 {
        self.blocks.iter().fold(0.0, |m, b| m.max(b.max_abs))
    }
}

/// Rewrites a block `T^p_{qrs}` in orthonormal frames: upper index with `A⁻¹`,
/// lower indices with `A` (horizontal or vertical per slot).
fn to_orthonormal(t: &Tensor<f64>, slots: &[bool], ah: &Mat<f64>, av: &Mat<f64>, ahi: &Mat<f64>, avi: &Mat<f64>) -> Tensor<f64> {
    let mut cur = t.clone();
    for (pos, &vertical) in slots.iter().enumerate() {
        let mat = match (pos == 0, vertical) {
            (true, false) => ahi.transpose(),
            (true, true) => avi.transpose(),
            (false, false) => ah.clone(),
            (false, true) => av.clone(),
        };
        // new[.., k', ..] = Σ_k old[.., k, ..] M[k, k']
        let mut next = Tensor::zeros(&cur.shape);
        let shape = cur.shape.clone();
        let total: usize = shape.iter().product();
        let mut idx = vec![0usize; shape.len()];
        for flat in 0..total {
            let mut r = flat;
            for s in (0..shape.len()).rev() {
                idx[s] = r % shape[s];
                r /= shape[s];
            }
            let kp = idx[pos];
            let mut acc = 0.0;
            let mut src = idx.clone();
            for k in 0..shape[pos] {
                src[pos] = k;
                acc += cur.at(&src) * mat[(k, kp)];
            }
            next.data[flat] = acc;
        }
        cur = next;
    }
    cur
}

/// Curvature blocks of the canonical d-connection in the orthonormal d-frame at `u`.
pub fn orthonormal_curvature(dm: &DMetric, u: &[f64]) -> Result<Vec<(String, Tensor<f64>)>> {
    let cb = dcurvature(dm, ConnectionKind::Canonical, u)?;
    let (g, h, _) = dm.blocks(u)?;
    let ah = block_orthonormal(&g, None)?;
    let av = block_orthonormal(&h, None)?;
    let (ahi, avi) = (ah.inverse()?, av.inverse()?);
    let layouts: [&[bool]; 6] = [
        &[false, false, false, false],
        &[true, true, false, false],
        &[false, false, false, true],
        &[true, true, false, true],
        &[false, false, true, true],
        &[true, true, true, true],
    ];
    Ok(cb
        .blocks()
        .iter()
        .zip(layouts)
        .map(|((name, t), slots)| (name.to_string(), to_orthonormal(t, slots, &ah, &av, &ahi, &avi)))
        .collect())
}

pub fn constant_curvature_check(dm: &DMetric, sample: &[Vec<f64>], tol: f64) -> Result<ConstantCurvatureReport> {
    if sample.len() < 2 {
        return Err(Error::config("samples", "at least two sample points are needed"));
    }
    let per: Vec<(Vec<(String, Tensor<f64>)>, Vec<(String, f64)>)> = sample
        .par_iter()
        .map(|u| -> Result<_> {
            let blocks = orthonormal_curvature(dm, u)?;
            let dc = dconnection(dm, ConnectionKind::Canonical, u)?;
            let t = dtorsion(&dc, &dm.nconn, u)?;
            let tor = vec![
                ("T_hhh".to_string(), t.hhh.max_abs()),
                ("T_hhv".to_string(), t.hhv.max_abs()),
                ("T_vhh".to_string(), t.vhh.max_abs()),
                ("T_vvh".to_string(), t.vvh.max_abs()),
                ("T_vvv".to_string(), t.vvv.max_abs()),
            ];
            Ok((blocks, tor))
        })
        .collect::<Result<_>>()?;
    let k = per.len() as f64;
    let nblocks = per[0].0.len();
    let mut blocks = Vec::with_capacity(nblocks);
    for b in 0..nblocks {
        let len = per[0].0[b].1.data.len();
        let mut mean = vec![0.0; len];
        for (bl, _) in &per {
            for (mv, v) in mean.iter_mut().zip(&bl[b].1.data) {
                *mv += v / k;
            }
        }
        let mut spread: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for (bl, _) in &per {
            for (mv, v) in mean.iter().zip(&bl[b].1.data) {
                spread = spread.max((v - mv).abs());
                max_abs = max_abs.max(v.abs());
            }
        }
        blocks.push(BlockSpread { block: per[0].0[b].0.clone(), spread, max_abs, pass: spread <= tol });
    }
    let mut torsion_max: Vec<(String, f64)> = per[0].1.iter().map(|(n, _)| (n.clone(), 0.0)).collect();
    for (_, tor) in &per {
        for (acc, (_, v)) in torsion_max.iter_mut().zip(tor) {
            acc.1 = acc.1.max(*v);
        }
    }
    let pass = blocks.iter().all(|b| b.pass);
    Ok(ConstantCurvatureReport { samples: sample.len(), tol, blocks, torsion_max, pass })
}

/// Skew-symmetry defect of the connection matrices `ω(X)` in the orthonormal frame.
///
/// `X` holds N-adapted components `(X^i, X^a)` and must satisfy `g(X, X) = 1`.
pub fn skew_structure_check(dm: &DMetric, kind: ConnectionKind, x_vec: &[f64], u: &[f64]) -> Result<f64> {
    let (n, m) = (dm.n, dm.m);
    if x_vec.len() != n + m {
        return Err(Error::Dimension { expected: n + m, got: x_vec.len() });
    }
    let (g, h, nv) = dm.blocks(u)?;
    let mut norm = 0.0;
    for i in 0..n {
        for j in 0..n {
            norm += g[(i, j)] * x_vec[i] * x_vec[j];
        }
    }
    for a in 0..m {
        for b in 0..m {
            norm += h[(a, b)] * x_vec[n + a] * x_vec[n + b];
        }
    }
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::Normalization { norm });
    }
    let c = coeffs_of::<f64>(dm, kind, u)?;
    // Coordinate components of X = X^i e_i + X^a e_a.
    let mut v = x_vec.to_vec();
    for a in 0..m {
        for i in 0..n {
            v[n + a] -= nv[(a, i)] * x_vec[i];
        }
    }
    let ud = seed_along(u, &v);
    let (gd, hd, _) = dm.blocks(&ud)?;
    let ahd = block_orthonormal(&gd, None)?;
    let avd = block_orthonormal(&hd, None)?;
    let gam_h = Mat::from_fn(n, n, |i, j| {
        (0..n).map(|k| c.lh.at(&[i, j, k]) * x_vec[k]).sum::<f64>() + (0..m).map(|a| c.ch.at(&[i, j, a]) * x_vec[n + a]).sum::<f64>()
    });
    let gam_v = Mat::from_fn(m, m, |a, b| {
        (0..n).map(|k| c.lv.at(&[a, b, k]) * x_vec[k]).sum::<f64>() + (0..m).map(|cc| c.cv.at(&[a, b, cc]) * x_vec[n + cc]).sum::<f64>()
    });
    let mut worst: f64 = 0.0;
    for (gam, ad, blk) in [(gam_h, ahd, &g), (gam_v, avd, &h)] {
        let a = ad.re();
        // ω = A⁻¹(Γ(X) A + X(A))
        let omega = a.inverse()?.matmul(&gam.matmul(&a).add(&ad.eps()));
        let e = a.transpose().matmul(blk).matmul(&a);
        let s = a.rows;
        for i in 0..s {
            for j in 0..s {
                let lo = e[(i, i)].signum() * omega[(i, j)] + e[(j, j)].signum() * omega[(j, i)];
                worst = worst.max(lo.abs());
            }
        }
    }
    Ok(worst)
}
