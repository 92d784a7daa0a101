//! Six curvature blocks, Ricci contractions and the bundle of all derived tensors.

use super::{coeffs_of, torsion_from, Coeffs, ConnectionKind, DMetric, TorsionBlocks};
use crate::error::Result;
use crate::nconnection::curvature_from_jet;
use crate::tensor_core::{seed, Mat, Tensor};
use serde::{Deserialize, Serialize};

/// Curvature blocks, indices in written order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureBlocks {
    /// `R^i_hjk` `[n,n,n,n]`.
    pub r_h: Tensor<f64>,
    /// `R^a_bjk` `[m,m,n,n]`.
    pub r_v: Tensor<f64>,
    /// `P^i_jka` `[n,n,n,m]`.
    pub p_h: Tensor<f64>,
    /// `P^c_bka` `[m,m,n,m]`.
    pub p_v: Tensor<f64>,
    /// `S^i_jbc` `[n,n,m,m]`.
    pub s_h: Tensor<f64>,
    /// `S^a_bcd` `[m,m,m,m]`.
    pub s_v: Tensor<f64>,
}

impl CurvatureBlocks {
    pub fn max_abs(&self) -> f64 {
        [&self.r_h, &self.r_v, &self.p_h, &self.p_v, &self.s_h, &self.s_v]
            .iter()
            .fold(0.0f64, |m, t| m.max(t.max_abs()))
    }

    pub fn blocks(&self) -> [(&'static str, &Tensor<f64>); 6] {
        [
            ("R_h", &self.r_h),
            ("R_v", &self.r_v),
            ("P_h", &self.p_h),
            ("P_v", &self.p_v),
            ("S_h", &self.s_h),
            ("S_v", &self.s_v),
        ]
    }

    /// Largest violation of `R^i_hjk = −R^i_hkj`, `R^a_bjk = −R^a_bkj`,
    /// `S^i_jbc = −S^i_jcb`, `S^a_bcd = −S^a_bdc`.
    pub fn antisymmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for t in [&self.r_h, &self.r_v, &self.s_h, &self.s_v] {
            let (p, q, r) = (t.shape[0], t.shape[1], t.shape[2]);
            for a in 0..p {
                for b in 0..q {
                    for c in 0..r {
                        for d in 0..r {
                            worst = worst.max((t.at(&[a, b, c, d]) + t.at(&[a, b, d, c])).abs());
                        }
                    }
                }
            }
        }
        worst
    }
}

/// Ricci blocks and the two partial scalar curvatures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RicciBlocks {
    pub r_ij: Mat<f64>,
    /// `R_ia` `[n×m]`.
    pub r_ia: Mat<f64>,
    /// `R_ai` `[m×n]`.
    pub r_ai: Mat<f64>,
    pub s_ab: Mat<f64>,
    pub r_scalar: f64,
    pub s_scalar: f64,
}

impl RicciBlocks {
    pub fn total_scalar(&self) -> f64 {
        self.r_scalar + self.s_scalar
    }
}

/// Everything derived from one d-connection at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureBundle {
    pub n: usize,
    pub m: usize,
    pub tm: bool,
    pub point: Vec<f64>,
    pub coeffs: Coeffs<f64>,
    pub torsion: TorsionBlocks,
    pub curvature: CurvatureBlocks,
    pub ricci: RicciBlocks,
}

impl CurvatureBundle {
    pub fn compute(dm: &DMetric, kind: ConnectionKind, u: &[f64]) -> Result<Self> {
        let (coeffs, torsion, curvature) = dcurvature_full(dm, kind, u)?;
        let ricci = ricci_and_scalar(dm, &curvature, u)?;
        Ok(CurvatureBundle { n: dm.n, m: dm.m, tm: dm.tm, point: u.to_vec(), coeffs, torsion, curvature, ricci })
    }
}

/// Curvature blocks of the chosen d-connection at `u`.
pub fn dcurvature(dm: &DMetric, kind: ConnectionKind, u: &[f64]) -> Result<CurvatureBlocks> {
    Ok(dcurvature_full(dm, kind, u)?.2)
}

fn dcurvature_full(dm: &DMetric, kind: ConnectionKind, u: &[f64]) -> Result<(Coeffs<f64>, TorsionBlocks, CurvatureBlocks)> {
    let (n, m) = (dm.n, dm.m);
    let d = n + m;
    // Coefficients and their partials ∂_α from one dual evaluation per direction.
    let mut c0: Option<Coeffs<f64>> = None;
    let mut dc: Vec<Coeffs<f64>> = Vec::with_capacity(d);
    for al in 0..d {
        let cd = coeffs_of(dm, kind, &seed(u, al))?;
        if c0.is_none() {
            c0 = Some(cd.map(|x| x.re));
        }
        dc.push(cd.map(|x| x.eps));
    }
    let c = c0.expect("positive dimension");
    let (nv, dn) = dm.nconn.jet(u)?;
    let om = curvature_from_jet(&nv, &dn, n, m);
    let tor = torsion_from(&c, &dn, &om, n, m);
    // e_k X = ∂_k X − N^a_k ∂_a X, e_a X = ∂_a X.
    let e = |t: Which, al: usize, idx: &[usize]| -> f64 {
        let mut s = dc[al].pick(t).at(idx);
        if al < n {
            for a in 0..m {
                s -= nv[(a, al)] * dc[n + a].pick(t).at(idx);
            }
        }
        s
    };
    // T^b_ka = −(∂_a N^b_k − L^b_ak).
    let t_ka = |b: usize, k: usize, a: usize| -> f64 { -tor.vvh.at(&[b, a, k]) };

    let mut r_h = Tensor::zeros(&[n, n, n, n]);
    for i in 0..n {
        for h in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut s = e(Which::Lh, k, &[i, h, j]) - e(Which::Lh, j, &[i, h, k]);
                    for q in 0..n {
                        s += c.lh.at(&[q, h, j]) * c.lh.at(&[i, q, k]) - c.lh.at(&[q, h, k]) * c.lh.at(&[i, q, j]);
                    }
                    for a in 0..m {
                        s -= c.ch.at(&[i, h, a]) * om.at(&[a, k, j]);
                    }
                    r_h.set(&[i, h, j, k], s);
                }
            }
        }
    }
    let mut r_v = Tensor::zeros(&[m, m, n, n]);
    for a in 0..m {
        for b in 0..m {
            for j in 0..n {
                for k in 0..n {
                    let mut s = e(Which::Lv, k, &[a, b, j]) - e(Which::Lv, j, &[a, b, k]);
                    for q in 0..m {
                        s += c.lv.at(&[q, b, j]) * c.lv.at(&[a, q, k]) - c.lv.at(&[q, b, k]) * c.lv.at(&[a, q, j]);
                        s -= c.cv.at(&[a, b, q]) * om.at(&[q, k, j]);
                    }
                    r_v.set(&[a, b, j, k], s);
                }
            }
        }
    }
    let mut p_h = Tensor::zeros(&[n, n, n, m]);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for a in 0..m {
                    // D_k C^i_ja
                    let mut dkc = e(Which::Ch, k, &[i, j, a]);
                    for q in 0..n {
                        dkc += c.lh.at(&[i, q, k]) * c.ch.at(&[q, j, a]) - c.lh.at(&[q, j, k]) * c.ch.at(&[i, q, a]);
                    }
                    for b in 0..m {
                        dkc -= c.lv.at(&[b, a, k]) * c.ch.at(&[i, j, b]);
                    }
                    let mut s = e(Which::Lh, n + a, &[i, j, k]) - dkc;
                    for b in 0..m {
                        s += c.ch.at(&[i, j, b]) * t_ka(b, k, a);
                    }
                    p_h.set(&[i, j, k, a], s);
                }
            }
        }
    }
    let mut p_v = Tensor::zeros(&[m, m, n, m]);
    for cc in 0..m {
        for b in 0..m {
            for k in 0..n {
                for a in 0..m {
                    // D_k C^c_ba
                    let mut dkc = e(Which::Cv, k, &[cc, b, a]);
                    for q in 0..m {
                        dkc += c.lv.at(&[cc, q, k]) * c.cv.at(&[q, b, a])
                            - c.lv.at(&[q, b, k]) * c.cv.at(&[cc, q, a])
                            - c.lv.at(&[q, a, k]) * c.cv.at(&[cc, b, q]);
                    }
                    let mut s = e(Which::Lv, n + a, &[cc, b, k]) - dkc;
                    for q in 0..m {
                        s += c.cv.at(&[cc, b, q]) * t_ka(q, k, a);
                    }
                    p_v.set(&[cc, b, k, a], s);
                }
            }
        }
    }
    let mut s_h = Tensor::zeros(&[n, n, m, m]);
    for i in 0..n {
        for j in 0..n {
            for b in 0..m {
                for cc in 0..m {
                    let mut s = e(Which::Ch, n + cc, &[i, j, b]) - e(Which::Ch, n + b, &[i, j, cc]);
                    for h in 0..n {
                        s += c.ch.at(&[h, j, b]) * c.ch.at(&[i, h, cc]) - c.ch.at(&[h, j, cc]) * c.ch.at(&[i, h, b]);
                    }
                    s_h.set(&[i, j, b, cc], s);
                }
            }
        }
    }
    let mut s_v = Tensor::zeros(&[m, m, m, m]);
    for a in 0..m {
        for b in 0..m {
            for cc in 0..m {
                for dd in 0..m {
                    let mut s = e(Which::Cv, n + dd, &[a, b, cc]) - e(Which::Cv, n + cc, &[a, b, dd]);
                    for q in 0..m {
                        s += c.cv.at(&[q, b, cc]) * c.cv.at(&[a, q, dd]) - c.cv.at(&[q, b, dd]) * c.cv.at(&[a, q, cc]);
                    }
                    s_v.set(&[a, b, cc, dd], s);
                }
            }
        }
    }
    Ok((c, tor, CurvatureBlocks { r_h, r_v, p_h, p_v, s_h, s_v }))
}

#[derive(Clone, Copy)]
enum Which {
    Lh,
    Lv,
    Ch,
    Cv,
}

impl Coeffs<f64> {
    fn pick(&self, w: Which) -> &Tensor<f64> {
        match w {
            Which::Lh => &self.lh,
            Which::Lv => &self.lv,
            Which::Ch => &self.ch,
            Which::Cv => &self.cv,
        }
    }
}

/// `R_ij = R^k_ijk`, `R_ia = −P^k_ika`, `R_ai = P^b_aib`, `S_ab = S^c_abc`,
/// `→R = g^ij R_ij`, `←S = h^ab S_ab`.
pub fn ricci_and_scalar(dm: &DMetric, cb: &CurvatureBlocks, u: &[f64]) -> Result<RicciBlocks> {
    let (n, m) = (dm.n, dm.m);
    let (g, h, _) = dm.blocks(u)?;
    let (gi, hi) = (g.inverse()?, h.inverse()?);
    let r_ij = Mat::from_fn(n, n, |i, j| (0..n).map(|k| cb.r_h.at(&[k, i, j, k])).sum());
    let r_ia = Mat::from_fn(n, m, |i, a| -(0..n).map(|k| cb.p_h.at(&[k, i, k, a])).sum::<f64>());
    let r_ai = Mat::from_fn(m, n, |a, i| (0..m).map(|b| cb.p_v.at(&[b, a, i, b])).sum());
    let s_ab = Mat::from_fn(m, m, |a, b| (0..m).map(|c| cb.s_v.at(&[c, a, b, c])).sum());
    let mut r_scalar = 0.0;
    for i in 0..n {
        for j in 0..n {
            r_scalar += gi[(i, j)] * r_ij[(i, j)];
        }
    }
    let mut s_scalar = 0.0;
    for a in 0..m {
        for b in 0..m {
            s_scalar += hi[(a, b)] * s_ab[(a, b)];
        }
    }
    Ok(RicciBlocks { r_ij, r_ia, r_ai, s_ab, r_scalar, s_scalar })
}
