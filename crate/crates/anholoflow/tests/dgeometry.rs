use anholoflow::dgeometry::*;
use anholoflow::fixtures::{self, fixture};
use anholoflow::nconnection::{christoffel, nconnection_curvature, NAdaptedFrame, NConnection};
use anholoflow::tensor_core::{Mat, MetricField};
use anholoflow::Error;
use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LIFTS: [&str; 4] = ["flat", "diagonal-polynomial", "conformal", "sphere"];

#[test]
fn flat_lift_is_identity_and_connection_free() {
    let dm = DMetric::sasaki_lift(&MetricField::flat(3)).unwrap();
    let u = [0.3, -0.2, 0.7, 1.1, -0.4, 0.9];
    assert_eq!(dm.coordinate_metric(&u).unwrap().max_diff(&Mat::identity(6)), 0.0);
    let dc = canonical_dconnection(&dm, &u).unwrap();
    assert_eq!(dc.coeffs.max_abs(), 0.0);
    let cb = CurvatureBundle::compute(&dm, ConnectionKind::Canonical, &u).unwrap();
    assert_eq!(cb.curvature.max_abs(), 0.0);
    assert_eq!(cb.ricci.total_scalar(), 0.0);
}

#[test]
fn coordinate_form_has_the_off_diagonal_block_pattern() {
    let fx = fixture("bundle").unwrap();
    let u = [0.2, -0.5, 0.4, 0.8, -0.3];
    let (g, h, nv) = fx.dm.blocks(&u).unwrap();
    let gc = fx.dm.coordinate_metric(&u).unwrap();
    let (n, m) = (2, 3);
    for i in 0..n {
        for j in 0..n {
            let mut want = g[(i, j)];
            for a in 0..m {
                for b in 0..m {
                    want += nv[(a, i)] * nv[(b, j)] * h[(a, b)];
                }
            }
            assert_abs_diff_eq!(gc[(i, j)], want, epsilon = 1e-14);
        }
        for a in 0..m {
            let want: f64 = (0..m).map(|b| nv[(b, i)] * h[(a, b)]).sum();
            assert_abs_diff_eq!(gc[(i, n + a)], want, epsilon = 1e-14);
            assert_abs_diff_eq!(gc[(n + a, i)], want, epsilon = 1e-14);
        }
    }
    let (g2, h2, n2) = split_coordinate(&gc, n).unwrap();
    assert!(g2.max_diff(&g) < 1e-12 && h2.max_diff(&h) < 1e-12 && n2.max_diff(&nv) < 1e-12);
}

#[test]
fn coordinate_form_is_the_coframe_congruence() {
    let fx = fixture("bundle").unwrap();
    let u = [0.1, 0.6, -0.2, 0.3, 0.5];
    let (g, h, nv) = fx.dm.blocks(&u).unwrap();
    let fr = NAdaptedFrame::from_coefficients(&nv, 2, 3);
    let mut bd = Mat::zeros(5, 5);
    for i in 0..2 {
        for j in 0..2 {
            bd[(i, j)] = g[(i, j)];
        }
    }
    for a in 0..3 {
        for b in 0..3 {
            bd[(2 + a, 2 + b)] = h[(a, b)];
        }
    }
    let want = fr.coframe.transpose().matmul(&bd).matmul(&fr.coframe);
    assert!(fx.dm.coordinate_metric(&u).unwrap().max_diff(&want) < 1e-14);
}

#[test]
fn sasaki_lift_blocks_equal_the_base_metric() {
    let base = MetricField::sphere(2, 1.0);
    let dm = DMetric::sasaki_lift(&base).unwrap();
    let u = [1.0, 0.4, 0.3, -0.7];
    let (g, h, _) = dm.blocks(&u).unwrap();
    let gb = base.eval(&u[..2]).unwrap();
    assert!(g.max_diff(&gb) < 1e-14 && h.max_diff(&gb) < 1e-14);
    assert!(dm.tm);
}

/// Frame derivative by central differences along the coordinate vector of `e_α`.
fn fd_frame_derivative(dm: &DMetric, u: &[f64], alpha: usize, block: usize) -> Mat<f64> {
    let nv = dm.nconn.eval(u).unwrap();
    let fr = NAdaptedFrame::from_coefficients(&nv, dm.n, dm.m);
    let step = 1e-5;
    let shift = |s: f64| -> Vec<f64> { u.iter().enumerate().map(|(mu, &x)| x + s * fr.frame[(mu, alpha)]).collect() };
    let (up, dn) = (dm.blocks(&shift(step)).unwrap(), dm.blocks(&shift(-step)).unwrap());
    let (a, b) = if block == 0 { (up.0, dn.0) } else { (up.1, dn.1) };
    a.sub(&b).scale(0.5 / step)
}

#[test]
fn canonical_coefficients_match_term_by_term_assembly() {
    for name in ["sphere", "bundle"] {
        let fx = fixture(name).unwrap();
        let dm = &fx.dm;
        let (n, m) = (dm.n, dm.m);
        let u = fx.center();
        let (g, h, _) = dm.blocks(&u).unwrap();
        let (gi, hi) = (g.inverse().unwrap(), h.inverse().unwrap());
        let eg: Vec<_> = (0..n + m).map(|al| fd_frame_derivative(dm, &u, al, 0)).collect();
        let eh: Vec<_> = (0..n + m).map(|al| fd_frame_derivative(dm, &u, al, 1)).collect();
        let dc = canonical_dconnection(dm, &u).unwrap();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let want: f64 =
                        (0..n).map(|r| 0.5 * gi[(i, r)] * (eg[k][(j, r)] + eg[j][(k, r)] - eg[r][(j, k)])).sum();
                    assert_abs_diff_eq!(dc.coeffs.lh.at(&[i, j, k]), want, epsilon = 1e-8);
                }
                for c in 0..m {
                    if dm.tm {
                        continue;
                    }
                    let want: f64 = (0..n).map(|k| 0.5 * gi[(i, k)] * eg[n + c][(j, k)]).sum();
                    assert_abs_diff_eq!(dc.coeffs.ch.at(&[i, j, c]), want, epsilon = 1e-8);
                }
            }
        }
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    let want: f64 =
                        (0..m).map(|d| 0.5 * hi[(a, d)] * (eh[n + c][(b, d)] + eh[n + b][(c, d)] - eh[n + d][(b, c)])).sum();
                    assert_abs_diff_eq!(dc.coeffs.cv.at(&[a, b, c]), want, epsilon = 1e-8);
                }
            }
        }
    }
}

#[test]
fn zero_n_connection_reduces_frame_derivatives_to_partials() {
    // y-dependent h-block, N = 0: L^i_jk is the partial-derivative Christoffel form.
    let fx = fixture("bundle").unwrap();
    let dm0 = fx.dm.clone().with_nconn(NConnection::zero(2, 3));
    let u = [0.3, 0.1, -0.4, 0.6, 0.2];
    let step = 1e-5;
    let partial = |al: usize| {
        let mut up = u.to_vec();
        let mut dn = u.to_vec();
        up[al] += step;
        dn[al] -= step;
        dm0.blocks(&up).unwrap().0.sub(&dm0.blocks(&dn).unwrap().0).scale(0.5 / step)
    };
    let dg: Vec<_> = (0..2).map(partial).collect();
    let gi = dm0.blocks(&u).unwrap().0.inverse().unwrap();
    let dc = canonical_dconnection(&dm0, &u).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                let want: f64 = (0..2).map(|r| 0.5 * gi[(i, r)] * (dg[k][(j, r)] + dg[j][(k, r)] - dg[r][(j, k)])).sum();
                assert_abs_diff_eq!(dc.coeffs.lh.at(&[i, j, k]), want, epsilon = 1e-8);
            }
        }
    }
    // With N switched back on the elongation changes the answer.
    let dc1 = canonical_dconnection(&fx.dm, &u).unwrap();
    assert!(dc1.coeffs.lh.max_diff(&dc.coeffs.lh) > 1e-3);
}

#[test]
fn canonical_torsion_vanishes_on_h_and_v_subspaces() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for name in ["sphere", "conformal", "bundle", "constant-generic", "delta-lift"] {
        let fx = fixture(name).unwrap();
        for u in fx.samples(&mut rng, 10) {
            let dc = canonical_dconnection(&fx.dm, &u).unwrap();
            let t = dtorsion(&dc, &fx.dm.nconn, &u).unwrap();
            assert!(t.hhh.max_abs() <= 1e-10, "{name}");
            assert!(t.vvv.max_abs() <= 1e-10, "{name}");
            let om = nconnection_curvature(&fx.dm.nconn, &u).unwrap();
            assert!(t.vhh.max_diff(&om) <= 1e-8);
        }
    }
}

#[test]
fn symmetric_connection_without_n_has_no_torsion() {
    // Blocks depending only on their own coordinates and N = 0.
    let dm = fixture("einstein").unwrap().dm;
    let u = [1.2, 0.3, 1.1, 0.9, 1.4];
    let dc = canonical_dconnection(&dm, &u).unwrap();
    let t = dtorsion(&dc, &dm.nconn, &u).unwrap();
    for blk in [&t.hhh, &t.hhv, &t.vhh, &t.vvh, &t.vvv] {
        assert!(blk.max_abs() < 1e-14);
    }
}

#[test]
fn zero_connection_has_zero_curvature() {
    let fx = fixture("bundle").unwrap();
    let cb = dcurvature(&fx.dm.clone().with_nconn(NConnection::zero(2, 3)), ConnectionKind::Zero, &fx.center()).unwrap();
    assert_eq!(cb.max_abs(), 0.0);
}

#[test]
fn unit_sphere_pins_the_curvature_sign() {
    let dm = DMetric::sasaki_lift(&MetricField::sphere(2, 1.0)).unwrap();
    let th = 1.1;
    let u = [th, 0.4, 0.2, -0.3];
    let cb = CurvatureBundle::compute(&dm, ConnectionKind::Canonical, &u).unwrap();
    // R^θ_φθφ = sin²θ in the standard ordering.
    assert_abs_diff_eq!(cb.curvature.r_h.at(&[0, 1, 1, 0]), th.sin().powi(2), epsilon = 1e-8);
    assert_abs_diff_eq!(cb.ricci.r_scalar, 2.0, epsilon = 1e-8);
    // Same scalar for the base-only block with a flat fiber.
    let fx = fixture("shrinking-sphere").unwrap();
    let cb = CurvatureBundle::compute(&fx.dm, ConnectionKind::Canonical, &u).unwrap();
    assert_abs_diff_eq!(cb.ricci.r_scalar, 2.0, epsilon = 1e-8);
    assert_abs_diff_eq!(cb.ricci.s_scalar, 0.0, epsilon = 1e-12);
}

#[test]
fn einstein_fixture_has_proportional_ricci_blocks() {
    let fx = fixture("einstein").unwrap();
    let u = fx.center();
    let cb = CurvatureBundle::compute(&fx.dm, ConnectionKind::Canonical, &u).unwrap();
    let (g, h, _) = fx.dm.blocks(&u).unwrap();
    assert!(cb.ricci.r_ij.max_diff(&g) < 1e-8);
    assert!(cb.ricci.s_ab.max_diff(&h) < 1e-8);
    assert_abs_diff_eq!(cb.ricci.total_scalar(), 5.0, epsilon = 1e-8);
}

#[test]
fn curvature_blocks_are_antisymmetric() {
    for name in ["sphere", "bundle", "constant-generic", "delta-lift"] {
        let fx = fixture(name).unwrap();
        let cb = dcurvature(&fx.dm, ConnectionKind::Canonical, &fx.center()).unwrap();
        assert!(cb.antisymmetry_defect() < 1e-12, "{name}: {}", cb.antisymmetry_defect());
    }
}

#[test]
fn ricci_blocks_are_the_documented_contractions() {
    let fx = fixture("bundle").unwrap();
    let u = fx.center();
    let cb = CurvatureBundle::compute(&fx.dm, ConnectionKind::Canonical, &u).unwrap();
    let (n, m) = (2, 3);
    let c = &cb.curvature;
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += c.r_h.at(&[k, i, j, k]);
            }
            assert_eq!(s, cb.ricci.r_ij[(i, j)]);
        }
        for a in 0..m {
            let mut s = 0.0;
            for k in 0..n {
                s -= c.p_h.at(&[k, i, k, a]);
            }
            assert_eq!(s, cb.ricci.r_ia[(i, a)]);
            let mut s = 0.0;
            for b in 0..m {
                s += c.p_v.at(&[b, a, i, b]);
            }
            assert_eq!(s, cb.ricci.r_ai[(a, i)]);
        }
    }
    let (g, h, _) = fx.dm.blocks(&u).unwrap();
    let (gi, hi) = (g.inverse().unwrap(), h.inverse().unwrap());
    let mut rs = 0.0;
    for i in 0..n {
        for j in 0..n {
            rs += gi[(i, j)] * cb.ricci.r_ij[(i, j)];
        }
    }
    let mut ss = 0.0;
    for a in 0..m {
        for b in 0..m {
            let sab: f64 = (0..m).map(|cc| c.s_v.at(&[cc, a, b, cc])).sum();
            ss += hi[(a, b)] * sab;
        }
    }
    assert_abs_diff_eq!(rs, cb.ricci.r_scalar, epsilon = 1e-12);
    assert_abs_diff_eq!(ss, cb.ricci.s_scalar, epsilon = 1e-12);
}

#[test]
fn levi_civita_is_symmetric_and_metric() {
    for name in ["sphere", "bundle", "constant-generic"] {
        let fx = fixture(name).unwrap();
        let u = fx.center();
        let gam = levi_civita(&fx.dm, &u).unwrap();
        let d = fx.dm.dim();
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    assert_eq!(gam.at(&[a, b, c]), gam.at(&[a, c, b]));
                }
            }
        }
        assert!(levi_civita_residual(&fx.dm, &u).unwrap() < 1e-8);
    }
}

#[test]
fn levi_civita_of_a_polar_block_matches_christoffel() {
    let base = MetricField::diagonal_polynomial(vec![vec![1.0], vec![0.0, 0.0, 1.0]], vec![0, 0]);
    let dm = DMetric::new(2, 2, BlockField::base(base.clone()), BlockField::constant(Mat::identity(2)), NConnection::zero(2, 2)).unwrap();
    let u = [1.3, 0.4, 0.2, 0.1];
    let gam = levi_civita(&dm, &u).unwrap();
    let ch = christoffel(&base, &u[..2]).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                assert_abs_diff_eq!(gam.at(&[i, j, k]), ch.at(&[i, j, k]), epsilon = 1e-14);
            }
        }
    }
    assert_abs_diff_eq!(ch.at(&[0, 1, 1]), -1.3, epsilon = 1e-14);
    assert_abs_diff_eq!(ch.at(&[1, 0, 1]), 1.0 / 1.3, epsilon = 1e-14);
}

#[test]
fn flat_levi_civita_vanishes() {
    let dm = fixture("flat").unwrap().dm;
    assert_eq!(levi_civita(&dm, &[0.1, 0.2, 0.3, 0.4]).unwrap().max_abs(), 0.0);
}

#[test]
fn canonical_coefficients_coincide_with_frame_levi_civita() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for name in ["sphere", "conformal", "diagonal-polynomial", "bundle", "delta-lift"] {
        let fx = fixture(name).unwrap();
        for u in fx.samples(&mut rng, 5) {
            let r = tm_coincidence(&fx.dm, &u).unwrap();
            assert!(r < 1e-8, "{name}: {r}");
        }
    }
}

#[test]
fn canonical_connection_is_metric_compatible() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for name in LIFTS.iter().copied().chain(["bundle", "constant-generic", "delta-lift"]) {
        let fx = fixture(name).unwrap();
        for u in fx.samples(&mut rng, 20) {
            let dc = canonical_dconnection(&fx.dm, &u).unwrap();
            let r = compatibility_residual(&dc, &fx.dm, &u).unwrap();
            assert!(r <= 1e-8, "{name}: {r}");
        }
    }
}

#[test]
fn zero_connection_residual_is_the_largest_frame_derivative() {
    let fx = fixture("bundle").unwrap();
    let u = fx.center();
    let dc = dconnection(&fx.dm, ConnectionKind::Zero, &u).unwrap();
    let r = compatibility_residual(&dc, &fx.dm, &u).unwrap();
    let mut want: f64 = 0.0;
    for al in 0..5 {
        want = want.max(fd_frame_derivative(&fx.dm, &u, al, 0).max_abs());
        want = want.max(fd_frame_derivative(&fx.dm, &u, al, 1).max_abs());
    }
    assert_abs_diff_eq!(r, want, epsilon = 1e-7);
    assert!(r > 0.01);
}

#[test]
fn constant_blocks_with_base_only_n_give_zero_coefficients() {
    for name in ["constant-trig", "constant-potential"] {
        let fx = fixture(name).unwrap();
        let u = [0.7, -0.4, 1.1, 0.3, -0.9];
        let cb = CurvatureBundle::compute(&fx.dm, ConnectionKind::Canonical, &u).unwrap();
        assert!(cb.coeffs.lh.max_abs() < 1e-14 && cb.coeffs.cv.max_abs() < 1e-14 && cb.coeffs.ch.max_abs() < 1e-14);
        assert!(cb.coeffs.lv.max_abs() < 1e-12, "{name}");
        assert!(cb.curvature.max_abs() < 1e-10, "{name}");
        assert!(cb.torsion.vhh.max_abs() > 1e-3, "{name}: Ω = {}", cb.torsion.vhh.max_abs());
    }
}

#[test]
fn constant_blocks_with_fiber_dependent_n_keep_a_vertical_coefficient() {
    let fx = fixture("constant-generic").unwrap();
    let dc = canonical_dconnection(&fx.dm, &fx.center()).unwrap();
    assert!(dc.coeffs.lh.max_abs() == 0.0 && dc.coeffs.cv.max_abs() == 0.0);
    assert!(dc.coeffs.lv.max_abs() > 1e-3);
}

#[test]
fn orthonormalize_examples() {
    let dm = fixture("flat").unwrap().dm;
    let a = orthonormalize(&dm, &[0.0; 4], None).unwrap();
    assert_eq!(a.max_diff(&Mat::identity(4)), 0.0);

    let dm = DMetric::constant(Mat::diag(&[4.0, 1.0]), Mat::diag(&[9.0, 1.0]), NConnection::zero(2, 2)).unwrap();
    let a = orthonormalize(&dm, &[0.0; 4], None).unwrap();
    assert!(a.max_diff(&Mat::diag(&[0.5, 1.0, 1.0 / 3.0, 1.0])) < 1e-15);

    let err = orthonormalize(&dm, &[0.0; 4], Some(&[1.0, -1.0, 1.0, 1.0])).unwrap_err();
    assert!(matches!(err, Error::Signature(_)));

    let dm = DMetric::constant(Mat::diag(&[1.0, -2.0]), Mat::diag(&[3.0, 1.0]), NConnection::zero(2, 2)).unwrap();
    let a = orthonormalize(&dm, &[0.0; 4], Some(&[1.0, -1.0, 1.0, 1.0])).unwrap();
    let (g, h, _) = dm.blocks(&[0.0; 4]).unwrap();
    let _ = (g, h);
    let gd = Mat::diag(&[1.0, -2.0, 3.0, 1.0]);
    assert!(a.transpose().matmul(&gd).matmul(&a).max_diff(&Mat::diag(&[1.0, -1.0, 1.0, 1.0])) < 1e-14);
}

#[test]
fn unknown_fixture_is_reported() {
    assert!(matches!(fixture("nope"), Err(Error::UnknownFixture(_))));
    for name in fixtures::NAMES {
        fixture(name).unwrap();
    }
}

fn spd(n: usize, seed: &[f64]) -> Mat<f64> {
    let b = Mat::from_fn(n, n, |i, j| seed[(i * n + j) % seed.len()]);
    b.transpose().matmul(&b).add(&Mat::identity(n).scale(0.5))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn orthonormalize_congruence(vals in proptest::collection::vec(-1.0f64..1.0, 9)) {
        let g = spd(2, &vals);
        let h = spd(3, &vals[3..]);
        let dm = DMetric::constant(g.clone(), h.clone(), NConnection::zero(2, 3)).unwrap();
        let a = orthonormalize(&dm, &[0.0; 5], None).unwrap();
        let mut bd = Mat::zeros(5, 5);
        for i in 0..2 { for j in 0..2 { bd[(i, j)] = g[(i, j)]; } }
        for i in 0..3 { for j in 0..3 { bd[(2 + i, 2 + j)] = h[(i, j)]; } }
        prop_assert!(a.transpose().matmul(&bd).matmul(&a).max_diff(&Mat::identity(5)) < 1e-10);
        for i in 0..2 { for j in 2..5 { prop_assert_eq!(a[(i, j)], 0.0); prop_assert_eq!(a[(j, i)], 0.0); } }
    }

    #[test]
    fn coordinate_round_trip(u in proptest::collection::vec(-1.0f64..1.0, 5)) {
        let dm = fixture("bundle").unwrap().dm;
        let (g, h, nv) = dm.blocks(&u).unwrap();
        let (g2, h2, n2) = split_coordinate(&dm.coordinate_metric(&u).unwrap(), 2).unwrap();
        prop_assert!(g2.max_diff(&g) < 1e-12 && h2.max_diff(&h) < 1e-12 && n2.max_diff(&nv) < 1e-12);
    }

    #[test]
    fn compatibility_at_random_points(u in proptest::collection::vec(-1.0f64..1.0, 5)) {
        let dm = fixture("bundle").unwrap().dm;
        let dc = canonical_dconnection(&dm, &u).unwrap();
        prop_assert!(compatibility_residual(&dc, &dm, &u).unwrap() <= 1e-8);
        let t = dtorsion(&dc, &dm.nconn, &u).unwrap();
        prop_assert!(t.hhh.max_abs() <= 1e-10 && t.vvv.max_abs() <= 1e-10);
    }
}
