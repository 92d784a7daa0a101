use anholoflow::error::Error;
use anholoflow::fixtures::{fixture, NAMES};
use anholoflow::nconnection::{
    anholonomy, canonical_nconnection, christoffel, commutator_defect, nconnection_curvature, nonlinear_geodesic,
    semispray, vertical_metric, LinearCoeffs, NAdaptedFrame, NConnection, UserN,
};
use anholoflow::tensor_core::{Mat, MetricField, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn warped() -> MetricField {
    // diag(1, (x¹)²)
    MetricField::diagonal_polynomial(vec![vec![1.0], vec![0.0, 0.0, 1.0]], vec![])
}

/// `γ^i_lm` from central differences of the metric.
fn christoffel_fd(g: &MetricField, x: &[f64]) -> Vec<Vec<Vec<f64>>> {
    let n = x.len();
    let h = 1e-5;
    let dg: Vec<Mat<f64>> = (0..n)
        .map(|k| {
            let (mut a, mut b) = (x.to_vec(), x.to_vec());
            a[k] += h;
            b[k] -= h;
            g.eval_checked(&a).unwrap().sub(&g.eval_checked(&b).unwrap()).scale(0.5 / h)
        })
        .collect();
    let gi = g.eval_checked(x).unwrap().inverse().unwrap();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|l| {
                    (0..n)
                        .map(|m| {
                            0.5 * (0..n).map(|r| gi[(i, r)] * (dg[m][(l, r)] + dg[l][(m, r)] - dg[r][(l, m)])).sum::<f64>()
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

#[test]
fn flat_christoffel_vanishes() {
    let g = MetricField::flat(3);
    assert_eq!(christoffel(&g, &[0.3, -1.0, 2.0]).unwrap().max_abs(), 0.0);
}

#[test]
fn warped_christoffel() {
    let c = christoffel(&warped(), &[2.0, 0.7]).unwrap();
    assert!((c.at(&[0, 1, 1]) + 2.0).abs() < 1e-14);
    assert!((c.at(&[1, 0, 1]) - 0.5).abs() < 1e-14);
    assert!((c.at(&[1, 1, 0]) - 0.5).abs() < 1e-14);
    for idx in [[0, 0, 0], [0, 0, 1], [1, 0, 0], [1, 1, 1]] {
        assert_eq!(c.at(&idx), 0.0);
    }
    let fd = christoffel_fd(&warped(), &[2.0, 0.7]);
    for i in 0..2 {
        for l in 0..2 {
            for m in 0..2 {
                assert!((c.at(&[i, l, m]) - fd[i][l][m]).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn conformal_christoffel() {
    let c = christoffel(&MetricField::conformal(2, 1.0), &[0.0, 0.4]).unwrap();
    assert!((c.at(&[0, 0, 0]) - 1.0).abs() < 1e-14);
    assert!((c.at(&[0, 1, 1]) + 1.0).abs() < 1e-14);
    assert!((c.at(&[1, 0, 1]) - 1.0).abs() < 1e-14);
    assert!(c.at(&[1, 0, 0]).abs() < 1e-14);
}

#[test]
fn christoffel_is_symmetric_in_lower_indices() {
    let g = MetricField::sphere(3, 1.2);
    let c = christoffel(&g, &[0.8, 1.3, 0.2]).unwrap();
    for i in 0..3 {
        for l in 0..3 {
            for m in 0..3 {
                assert_eq!(c.at(&[i, l, m]), c.at(&[i, m, l]));
            }
        }
    }
}

#[test]
fn vertical_metric_reproduces_base_metric() {
    let g = MetricField::conformal_curved(2, 0.3, 0.2);
    let x = [0.4, -0.6];
    let gt = vertical_metric(&g, &x, &[1.3, -0.2]).unwrap();
    assert!(gt.max_diff(&g.eval_checked(&x).unwrap()) < 1e-15);
}

#[test]
fn semispray_flat_is_zero() {
    let g = MetricField::flat(2);
    assert_eq!(semispray(&g, &[0.1, 0.2], &[3.0, -4.0]).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn semispray_matches_term_by_term_assembly() {
    let g = warped();
    let (x, y) = ([2.0, 0.7], [0.3, -1.1]);
    let got = semispray(&g, &x, &y).unwrap();
    let gam = christoffel_fd(&g, &x);
    let gm = g.eval_checked(&x).unwrap();
    let gti = gm.inverse().unwrap();
    for i in 0..2 {
        let mut s = 0.0;
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    for m in 0..2 {
                        s += 0.25 * gti[(i, j)] * gm[(j, k)] * gam[k][l][m] * y[l] * y[m];
                    }
                }
            }
        }
        assert!((got[i] - s).abs() < 1e-8, "{i}: {} vs {s}", got[i]);
    }
}

#[test]
fn semispray_is_quadratically_homogeneous() {
    let g = MetricField::sphere(2, 1.0);
    let x = [1.1, 0.3];
    let y = [0.4, -0.9];
    let a = semispray(&g, &x, &y).unwrap();
    let b = semispray(&g, &x, &[2.0 * y[0], 2.0 * y[1]]).unwrap();
    for i in 0..2 {
        assert!((b[i] - 4.0 * a[i]).abs() < 1e-14);
    }
}

#[test]
fn semispray_on_degenerate_metric_errors() {
    let e = semispray(&warped(), &[0.0, 0.0], &[1.0, 1.0]).unwrap_err();
    assert!(matches!(e, Error::SingularMetric { .. } | Error::Regularity { .. }), "{e:?}");
}

#[test]
fn canonical_nconnection_of_flat_metric_vanishes() {
    let nc = canonical_nconnection(&MetricField::flat(2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10_000 {
        let u: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
        assert_eq!(nc.eval(&u).unwrap().max_abs(), 0.0);
    }
}

#[test]
fn canonical_nconnection_is_y_derivative_of_semispray() {
    let g = warped();
    let nc = canonical_nconnection(&g).unwrap();
    let (x, y) = ([2.0, 0.7], [0.3, -1.1]);
    let u = [x[0], x[1], y[0], y[1]];
    let nv = nc.eval(&u).unwrap();
    let h = 1e-5;
    for j in 0..2 {
        let (mut yp, mut ym) = (y, y);
        yp[j] += h;
        ym[j] -= h;
        let (gp, gm) = (semispray(&g, &x, &yp).unwrap(), semispray(&g, &x, &ym).unwrap());
        for i in 0..2 {
            let fd = (gp[i] - gm[i]) / (2.0 * h);
            assert!((nv[(i, j)] - fd).abs() < 1e-8);
        }
    }
    // Linear in y for a y-independent vertical metric.
    let n2 = nc.eval(&[x[0], x[1], 2.0 * y[0], 2.0 * y[1]]).unwrap();
    assert!(n2.max_diff(&nv.scale(2.0)) < 1e-14);
    let n0 = nc.eval(&[x[0], x[1], 0.0, 0.0]).unwrap();
    assert_eq!(n0.max_abs(), 0.0);
}

#[test]
fn linear_mode_reproduces_gamma_y() {
    let g = MetricField::sphere(2, 1.0);
    let nc = NConnection::Linear { n: 2, m: 2, coeffs: LinearCoeffs::LeviCivita { metric: g.clone() } };
    nc.validate().unwrap();
    let u = [1.2, 0.4, 0.5, -0.8];
    let nv = nc.eval(&u).unwrap();
    let gam = christoffel(&g, &u[..2]).unwrap();
    for a in 0..2 {
        for j in 0..2 {
            let want: f64 = (0..2).map(|b| gam.at(&[a, b, j]) * u[2 + b]).sum();
            assert_eq!(nv[(a, j)], want);
        }
    }
    // W^b_ia = ∂_a N^b_i = Γ^b_ai
    let w = anholonomy(&nc, &u).unwrap();
    for b in 0..2 {
        for i in 0..2 {
            for a in 0..2 {
                assert!((w.at(&[2 + b, i, 2 + a]) - gam.at(&[b, a, i])).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn constant_linear_coefficients() {
    let mut gamma = Tensor::zeros(&[3, 3, 2]);
    gamma.set(&[0, 1, 0], 2.0);
    gamma.set(&[2, 2, 1], -0.5);
    let nc = NConnection::Linear { n: 2, m: 3, coeffs: LinearCoeffs::Constant { gamma } };
    nc.validate().unwrap();
    let nv = nc.eval(&[0.0, 0.0, 1.0, 3.0, 4.0]).unwrap();
    assert_eq!(nv[(0, 0)], 6.0);
    assert_eq!(nv[(2, 1)], -2.0);
    assert_eq!(nv.max_abs(), 6.0);
    let bad = NConnection::Linear { n: 2, m: 3, coeffs: LinearCoeffs::Constant { gamma: Tensor::zeros(&[2, 2, 2]) } };
    assert!(bad.validate().is_err());
}

#[test]
fn zero_nconnection_has_no_anholonomy_or_curvature() {
    let nc = NConnection::zero(2, 3);
    let u = [0.1, 0.2, 0.3, 0.4, 0.5];
    assert_eq!(anholonomy(&nc, &u).unwrap().max_abs(), 0.0);
    assert_eq!(nconnection_curvature(&nc, &u).unwrap().max_abs(), 0.0);
}

fn affine(n: usize, m: usize, entries: &[([usize; 3], f64)]) -> NConnection {
    let d = n + m;
    let mut l = Tensor::zeros(&[m, n, d]);
    for (k, v) in entries {
        l.set(k, *v);
    }
    NConnection::User { n, m, field: UserN::Affine { c: Tensor::zeros(&[m, n]), l } }
}

/// `Ω^a_ij = e_j N^a_i − e_i N^a_j` with `e_j = ∂_j − N^b_j ∂_b`, from finite differences.
fn omega_fd(nc: &NConnection, u: &[f64]) -> Vec<Vec<Vec<f64>>> {
    let (n, m) = (nc.n(), nc.m());
    let h = 1e-5;
    let nv = nc.eval(u).unwrap();
    let dn: Vec<Mat<f64>> = (0..n + m)
        .map(|k| {
            let (mut a, mut b) = (u.to_vec(), u.to_vec());
            a[k] += h;
            b[k] -= h;
            nc.eval(&a).unwrap().sub(&nc.eval(&b).unwrap()).scale(0.5 / h)
        })
        .collect();
    let e = |j: usize, a: usize, i: usize| dn[j][(a, i)] - (0..m).map(|b| nv[(b, j)] * dn[n + b][(a, i)]).sum::<f64>();
    (0..m).map(|a| (0..n).map(|i| (0..n).map(|j| e(j, a, i) - e(i, a, j)).collect()).collect()).collect()
}

#[test]
fn four_term_curvature_oracle() {
    // N¹₁ = y², N²₂ = y¹ on a 2 + 2 chart.
    let nc = affine(2, 2, &[([0, 0, 3], 1.0), ([1, 1, 2], 1.0)]);
    nc.validate().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let u: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let om = nconnection_curvature(&nc, &u).unwrap();
        let fd = omega_fd(&nc, &u);
        for a in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert!((om.at(&[a, i, j]) - fd[a][i][j]).abs() < 1e-8);
                }
            }
        }
        // Closed form: Ω^1_12 = −N^2_2 = −y¹, Ω^2_12 = N^1_1 = y².
        assert!((om.at(&[0, 0, 1]) + u[2]).abs() < 1e-14);
        assert!((om.at(&[1, 0, 1]) - u[3]).abs() < 1e-14);
    }
}

#[test]
fn curl_free_x_only_nconnection_is_flat() {
    // N^a_i = S^a_ij x^j with S symmetric in (i, j).
    let nc = affine(2, 3, &[([0, 0, 1], 0.7), ([0, 1, 0], 0.7), ([1, 0, 0], 2.0), ([2, 1, 1], -1.5), ([2, 0, 1], 0.3), ([2, 1, 0], 0.3)]);
    let u = [0.4, -1.2, 0.3, 0.9, -0.5];
    assert!(nconnection_curvature(&nc, &u).unwrap().max_abs() < 1e-15);
}

#[test]
fn frames_are_mutually_inverse_and_unit_triangular() {
    for name in NAMES {
        let fx = fixture(name).unwrap();
        let (n, m) = (fx.dm.n, fx.dm.m);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for u in fx.samples(&mut rng, 1000) {
            let fr = NAdaptedFrame::at(&fx.dm.nconn, &u).unwrap();
            assert!(fr.inverse_defect() <= 1e-12, "{name}");
            let p = fr.frame.matmul(&fr.coframe);
            assert!(p.max_diff(&Mat::identity(n + m)) <= 1e-12, "{name}");
            for r in 0..n + m {
                assert_eq!(fr.frame[(r, r)], 1.0);
                for c in 0..n + m {
                    let upper = r < n && c != r || (r >= n && c >= n && c != r);
                    if upper {
                        assert_eq!(fr.frame[(r, c)], 0.0, "{name} ({r},{c})");
                        assert_eq!(fr.coframe[(r, c)], 0.0, "{name} ({r},{c})");
                    }
                }
            }
        }
    }
}

#[test]
fn anholonomy_is_antisymmetric_with_documented_blocks() {
    let fx = fixture("bundle").unwrap();
    let (n, m) = (fx.dm.n, fx.dm.m);
    let d = n + m;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for u in fx.samples(&mut rng, 20) {
        let w = anholonomy(&fx.dm.nconn, &u).unwrap();
        let om = nconnection_curvature(&fx.dm.nconn, &u).unwrap();
        for g in 0..d {
            for a in 0..d {
                for b in 0..d {
                    assert_eq!(w.at(&[g, a, b]), -w.at(&[g, b, a]));
                    let allowed = g >= n && ((a < n) ^ (b < n) || (a < n && b < n));
                    if !allowed {
                        assert_eq!(w.at(&[g, a, b]), 0.0, "W^{g}_{a}{b}");
                    }
                    if g >= n && a < n && b < n {
                        assert_eq!(w.at(&[g, a, b]), om.at(&[g - n, a, b]));
                    }
                }
            }
        }
    }
}

#[test]
fn flat_nonlinear_geodesics_are_straight_lines() {
    let g = MetricField::flat(3);
    let (x, v) = nonlinear_geodesic(&g, &[0.0, 1.0, -1.0], &[0.5, 0.25, -2.0], 2.0, 50).unwrap();
    let want = [1.0, 1.5, -5.0];
    for i in 0..3 {
        assert!((x[i] - want[i]).abs() < 1e-14);
    }
    assert_eq!(v, vec![0.5, 0.25, -2.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn commutators_reproduce_anholonomy(which in 0usize..NAMES.len(), seed in any::<u64>()) {
        let fx = fixture(NAMES[which]).unwrap();
        let u = fx.sample(&mut ChaCha8Rng::seed_from_u64(seed));
        let defect = commutator_defect(&fx.dm.nconn, &u).unwrap();
        prop_assert!(defect <= 1e-8, "{}: {defect}", NAMES[which]);
    }

    #[test]
    fn curvature_is_antisymmetric(which in 0usize..NAMES.len(), seed in any::<u64>()) {
        let fx = fixture(NAMES[which]).unwrap();
        let u = fx.sample(&mut ChaCha8Rng::seed_from_u64(seed));
        let om = nconnection_curvature(&fx.dm.nconn, &u).unwrap();
        let (n, m) = (fx.dm.n, fx.dm.m);
        for a in 0..m {
            for i in 0..n {
                prop_assert_eq!(om.at(&[a, i, i]), 0.0);
                for j in 0..n {
                    prop_assert_eq!(om.at(&[a, i, j]), -om.at(&[a, j, i]));
                }
            }
        }
    }
}
