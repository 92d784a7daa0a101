use anholoflow::fixtures::fixture;
use anholoflow::ricci_flow::*;
use anholoflow::tensor_core::{Mat, Tensor};
use anholoflow::nconnection::{NConnection, UserN};
use anholoflow::Error;
use proptest::prelude::*;

fn setup(name: &str, counts: &[usize], schedule: NSchedule, lambda: LambdaMode) -> FlowSetup {
    let fx = fixture(name).unwrap();
    let lat = Lattice::over(&fx.domain, counts).unwrap();
    FlowSetup::new(fx.dm, lat, schedule, lambda).unwrap()
}

fn max_correction(s: &FlowState) -> f64 {
    s.dg.iter().chain(&s.dh).fold(0.0f64, |a, m| a.max(m.max_abs()))
}

#[test]
fn fornberg_three_point_weights() {
    let h = 0.1;
    let w = fornberg_weights(0.0, &[-h, 0.0, h], 2);
    let d1 = [-0.5 / h, 0.0, 0.5 / h];
    let d2 = [1.0 / (h * h), -2.0 / (h * h), 1.0 / (h * h)];
    for j in 0..3 {
        assert!((w[0][j] - [0.0, 1.0, 0.0][j]).abs() < 1e-14);
        assert!((w[1][j] - d1[j]).abs() < 1e-10);
        assert!((w[2][j] - d2[j]).abs() < 1e-8);
    }
}

#[test]
fn one_sided_stencils_differentiate_polynomials_exactly() {
    let xs: Vec<f64> = (0..7).map(|k| 0.3 * k as f64).collect();
    let w = fornberg_weights(0.0, &xs, 2);
    let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x.powi(3) - 0.1 * x.powi(6);
    let d1: f64 = w[1].iter().zip(&xs).map(|(c, &x)| c * f(x)).sum();
    let d2: f64 = w[2].iter().zip(&xs).map(|(c, &x)| c * f(x)).sum();
    assert!((d1 + 2.0).abs() < 1e-9);
    assert!(d2.abs() < 1e-8);
}

#[test]
fn lattice_indexing_and_weights() {
    let lat = Lattice::new(vec![0.0, -1.0, 5.0], vec![1.0, 1.0, 5.0], vec![3, 5, 1]).unwrap();
    assert_eq!(lat.len(), 15);
    for p in 0..lat.len() {
        assert_eq!(lat.flat(&lat.multi(p)), p);
    }
    assert_eq!(lat.point(lat.flat(&[2, 4, 0])), vec![1.0, 1.0, 5.0]);
    let total: f64 = (0..lat.len()).map(|p| lat.weight(p)).sum();
    assert!((total - 2.0).abs() < 1e-14);
    assert_eq!(Lattice::parse_counts("17x1x3").unwrap(), vec![17, 1, 3]);
    assert!(Lattice::parse_counts("4xa").is_err());
    assert!(Lattice::new(vec![0.0], vec![0.0], vec![2]).is_err());
}

#[test]
fn schedule_factor_and_rate() {
    let s = NSchedule::Polynomial { coeffs: vec![1.0, 1.0, 0.5] };
    assert!((s.factor(2.0) - 5.0).abs() < 1e-15);
    assert!((s.rate(2.0) - 3.0).abs() < 1e-15);
    assert_eq!(NSchedule::Frozen.rate(1.0), 0.0);
}

#[test]
fn flat_lift_is_stationary() {
    let su = setup("flat", &[3, 3, 2, 2], NSchedule::Frozen, LambdaMode::Normalized);
    let s0 = su.initial_state().unwrap();
    assert_eq!(s0.lambda, 0.0);
    assert_eq!(normalization_factor(&su, &s0).unwrap(), 0.0);
    let traj = evolve(&su, s0.clone(), 0.3, 0.1, StepMode::Full, 1).unwrap();
    let last = &traj.snapshots.last().unwrap().state;
    assert_eq!(max_correction(last), 0.0);
    assert_eq!(last.frames, s0.frames);
    assert_eq!(scalar_evolution_residual(&traj, 1).unwrap(), (0.0, 0.0));
    let rep = einstein_extraction_check(&traj, LambdaHat::FromState);
    assert_eq!(rep.max_fe1, 0.0);
    assert_eq!(rep.max_fe2, 0.0);
}

#[test]
fn einstein_fixture_normalizes_to_unit_lambda() {
    let su = setup("einstein", &[3, 1, 3, 3, 1], NSchedule::Frozen, LambdaMode::Normalized);
    let s0 = su.initial_state().unwrap();
    assert!((normalization_factor(&su, &s0).unwrap() - 5.0).abs() < 1e-10);
    assert!((s0.lambda - 1.0).abs() < 1e-11);
    assert!(einstein_residual(&su, &s0).unwrap() < 1e-10);
}

#[test]
fn einstein_fixed_point_is_stationary() {
    let su = setup("einstein", &[3, 1, 3, 3, 1], NSchedule::Frozen, LambdaMode::Normalized);
    let traj = evolve(&su, su.initial_state().unwrap(), 1.0, 0.25, StepMode::Full, 1).unwrap();
    let last = &traj.snapshots.last().unwrap();
    assert!(max_correction(&last.state) < 1e-8);
    assert!((last.state.lambda - 1.0).abs() < 1e-8);
}

#[test]
fn einstein_frames_grow_exponentially() {
    let su = setup("einstein", &[3, 1, 3, 3, 1], NSchedule::Frozen, LambdaMode::Normalized);
    let s0 = su.initial_state().unwrap();
    let traj = evolve(&su, s0.clone(), 0.5, 0.05, StepMode::Full, 10).unwrap();
    let last = &traj.snapshots.last().unwrap().state;
    let scale = 0.5f64.exp();
    for (f, f0) in last.frames.iter().zip(&s0.frames) {
        assert!(f.max_diff(&f0.scale(scale)) < 1e-6);
    }
    assert!(frame_triangularity_defect(&su, last) <= 1e-10);
}

#[test]
fn frame_step_on_flat_lift_is_identity() {
    let su = setup("flat", &[2, 2, 2, 2], NSchedule::Frozen, LambdaMode::Fixed { lambda: 0.0 });
    let s0 = su.initial_state().unwrap();
    assert_eq!(frame_evolution_step(&su, &s0, 0.1).unwrap(), s0.frames);
}

#[test]
fn frames_start_as_the_adapted_basis() {
    let su = setup("bundle", &[2, 1, 1, 1, 2], NSchedule::Frozen, LambdaMode::Fixed { lambda: 0.0 });
    let s0 = su.initial_state().unwrap();
    for (p, f) in s0.frames.iter().enumerate() {
        let nv = su.dm.nconn.eval(&su.lattice.point(p)).unwrap();
        for i in 0..2 {
            for a in 0..3 {
                assert_eq!(f[(i, 2 + a)], -nv[(a, i)]);
                assert_eq!(f[(2 + a, i)], 0.0);
            }
        }
    }
}

#[test]
fn frame_step_halving_is_fifth_order() {
    let su = setup("conformal-flow", &[9, 1, 1, 1], NSchedule::Frozen, LambdaMode::Fixed { lambda: 0.0 });
    let s0 = su.initial_state().unwrap();
    let diff = |h: f64| {
        let one = frame_evolution_step(&su, &s0, h).unwrap();
        let mut half = s0.clone();
        half.frames = frame_evolution_step(&su, &half, 0.5 * h).unwrap();
        half.frames = frame_evolution_step(&su, &half, 0.5 * h).unwrap();
        one.iter().zip(&half.frames).fold(0.0f64, |a, (x, y)| a.max(x.max_diff(y)))
    };
    let (d1, d2) = (diff(0.4), diff(0.2));
    assert!(d1 > 0.0 && d1 / d2 > 20.0, "{d1} {d2}");
}

#[test]
fn shrinking_sphere_follows_minus_twice_ricci() {
    let su = setup("shrinking-sphere", &[17, 1, 1, 1], NSchedule::Frozen, LambdaMode::Fixed { lambda: 0.0 });
    let s0 = su.initial_state().unwrap();
    let h = 1e-3;
    let s1 = ricci_flow_step(&su, &s0, h).unwrap();
    let geo = diagnostics(&su, &s0).unwrap();
    for p in 0..su.lattice.len() {
        let (g, _, _) = node_blocks_full(&su, &s0, p).unwrap();
        let fd = s1.dg[p].scale(1.0 / h);
        assert!(fd.max_diff(&g.scale(-2.0)) < 1e-10);
        assert!((geo.r_nodes[p] - 2.0).abs() < 1e-10);
    }
    assert_eq!(s1.dh, s0.dh);
}

#[test]
fn shrinking_sphere_scalar_matches_closed_form() {
    let su = setup("shrinking-sphere", &[9, 1, 1, 1], NSchedule::Frozen, LambdaMode::Fixed { lambda: 0.0 });
    let traj = evolve(&su, su.initial_state().unwrap(), 0.2, 0.01, StepMode::Full, 5).unwrap();
    let last = traj.snapshots.last().unwrap();
    for r in &last.diag.r_nodes {
        assert!((r - 2.0 / (1.0 - 0.4)).abs() < 1e-7, "{r}");
    }
    let rep = einstein_extraction_check(&traj, LambdaHat::Schedule { lambda0: 2.0 });
    assert!(rep.fe1_h.iter().all(|&x| x < 1e-7));
}

#[test]
fn scalar_evolution_residual_is_second_order() {
    let su = setup("shrinking-sphere", &[9, 1, 1, 1], NSchedule::Frozen, LambdaMode::Fixed { lambda: 0.0 });
    let res = |h: f64| {
        let k = (0.1 / h).round() as usize;
        let traj = evolve(&su, su.initial_state().unwrap(), (k + 1) as f64 * h, h, StepMode::Full, 1).unwrap();
        scalar_evolution_residual(&traj, k).unwrap()
    };
    let (a, b) = (res(0.02), res(0.01));
    let order = (a.0 / b.0).log2();
    assert!(order >= 1.9, "{a:?} {b:?}");
    assert!(b.1 < 1e-10);
}

#[test]
fn step_limit_tracks_lattice_spacing() {
    let coarse = setup("shrinking-sphere", &[9, 1, 1, 1], NSchedule::Frozen, LambdaMode::Fixed { lambda: 0.0 });
    let fine = setup("shrinking-sphere", &[17, 1, 1, 1], NSchedule::Frozen, LambdaMode::Fixed { lambda: 0.0 });
    let a = explicit_step_limit(&coarse, &coarse.initial_state().unwrap()).unwrap();
    let b = explicit_step_limit(&fine, &fine.initial_state().unwrap()).unwrap();
    assert!((a / b - 4.0).abs() < 1e-9, "{a} {b}");
    assert!(a > 0.01 && b < 0.01);
    let single = setup("flat", &[1, 1, 1, 1], NSchedule::Frozen, LambdaMode::Fixed { lambda: 0.0 });
    assert_eq!(explicit_step_limit(&single, &single.initial_state().unwrap()).unwrap(), f64::INFINITY);
}

#[test]
fn boundary_snapshots_need_neighbors() {
    let su = setup("flat", &[2, 2, 1, 1], NSchedule::Frozen, LambdaMode::Fixed { lambda: 0.0 });
    let traj = evolve(&su, su.initial_state().unwrap(), 0.2, 0.1, StepMode::Full, 1).unwrap();
    assert!(matches!(scalar_evolution_residual(&traj, 0), Err(Error::NeedsNeighbors { .. })));
    assert!(matches!(scalar_evolution_residual(&traj, 2), Err(Error::NeedsNeighbors { .. })));
}

#[test]
fn endpoint_error_contracts_under_step_halving() {
    let su = setup("conformal-flow", &[9, 1, 1, 1], NSchedule::Frozen, LambdaMode::Fixed { lambda: 0.0 });
    let run = |h: f64| evolve(&su, su.initial_state().unwrap(), 0.4, h, StepMode::Full, 1000).unwrap().snapshots.pop().unwrap().state;
    let (a, b, c) = (run(0.02), run(0.01), run(0.005));
    let diff = |x: &FlowState, y: &FlowState| x.dg.iter().zip(&y.dg).fold(0.0f64, |m, (p, q)| m.max(p.max_diff(q)));
    let ratio = diff(&a, &b) / diff(&b, &c);
    assert!(ratio >= 8.0, "{ratio}");
}

#[test]
fn block_symmetry_survives_many_steps() {
    let su = setup("conformal-flow", &[9, 1, 1, 1], NSchedule::Frozen, LambdaMode::Fixed { lambda: 0.0 });
    let traj = evolve(&su, su.initial_state().unwrap(), 0.5, 0.005, StepMode::Full, 100).unwrap();
    for s in &traj.snapshots {
        assert!(s.diag.symmetry_defect <= 1e-10);
        assert!(s.diag.offdiag_max <= 1e-8);
        assert!(s.diag.r_nodes.iter().all(|r| r.is_finite()));
    }
    assert!(traj.snapshots.windows(2).all(|w| w[1].diag.chi > w[0].diag.chi));
}

#[test]
fn sasaki_lift_offdiagonal_ricci_is_monitored_small() {
    for name in ["sphere", "conformal", "diagonal-polynomial"] {
        let su = setup(name, &[3, 3, 2, 2], NSchedule::Frozen, LambdaMode::Normalized);
        let d = diagnostics(&su, &su.initial_state().unwrap()).unwrap();
        assert!(d.offdiag_max <= 1e-8, "{name}: {}", d.offdiag_max);
        assert!(d.compat_max <= 1e-8, "{name}: {}", d.compat_max);
    }
}

#[test]
fn sphere_normalization_converges_under_refinement() {
    let coarse = setup("sphere", &[9, 5, 3, 3], NSchedule::Frozen, LambdaMode::Normalized);
    let fine = setup("sphere", &[17, 9, 5, 5], NSchedule::Frozen, LambdaMode::Normalized);
    let rc = normalization_factor(&coarse, &coarse.initial_state().unwrap()).unwrap();
    let rf = normalization_factor(&fine, &fine.initial_state().unwrap()).unwrap();
    assert!(((rc - rf) / rf).abs() < 0.01, "{rc} {rf}");
}

#[test]
fn constant_scalar_curvature_gives_that_normalization() {
    let su = setup("shrinking-sphere", &[9, 3, 2, 2], NSchedule::Frozen, LambdaMode::Normalized);
    let s0 = su.initial_state().unwrap();
    assert!((normalization_factor(&su, &s0).unwrap() - 2.0).abs() < 1e-10);
    assert!((s0.lambda - 0.4).abs() < 1e-10);
}

#[test]
fn constrained_step_with_frozen_n_is_stationary() {
    let su = setup("einstein", &[3, 1, 3, 1, 1], NSchedule::Frozen, LambdaMode::Normalized);
    let s0 = su.initial_state().unwrap();
    let cs = einstein_constrained_step(&su, &s0, 0.1, 1e-8).unwrap();
    assert!(cs.violation.is_none());
    assert_eq!(cs.state.dg, s0.dg);
    assert_eq!(cs.state.dh, s0.dh);
}

#[test]
fn constrained_step_follows_the_n_schedule() {
    let sched = NSchedule::Polynomial { coeffs: vec![1.0, 1.0] };
    let su = setup("constant-trig", &[3, 3, 1, 1, 1], sched, LambdaMode::Fixed { lambda: 0.0 });
    let s0 = su.initial_state().unwrap();
    assert!(einstein_residual(&su, &s0).unwrap() < 1e-10);
    let h = 0.01;
    let cs = einstein_constrained_step(&su, &s0, h, 1e-12).unwrap();
    assert_eq!(cs.state.dh, s0.dh);
    for p in 0..su.lattice.len() {
        let u = su.lattice.point(p);
        let n0 = su.dm.nconn.eval(&u).unwrap();
        let (_, hb, _) = su.dm.blocks(&u).unwrap();
        let nn = n0.transpose().matmul(&hb).matmul(&n0);
        let expect = nn.scale(-((1.0 + h) * (1.0 + h) - 1.0));
        assert!(cs.state.dg[p].max_diff(&expect) < 1e-14);
    }
    assert!(cs.residual > 0.0);
    assert!(matches!(cs.violation, Some(Error::ConstraintViolation { .. })));
}

#[test]
fn evolve_surfaces_constraint_violations() {
    let sched = NSchedule::Polynomial { coeffs: vec![1.0, 1.0] };
    let su = setup("constant-trig", &[2, 2, 1, 1, 1], sched, LambdaMode::Fixed { lambda: 0.0 });
    let err = evolve(&su, su.initial_state().unwrap(), 0.1, 0.05, StepMode::EinsteinConstrained { tol: 1e-12 }, 1).unwrap_err();
    assert!(matches!(err, Error::ConstraintViolation { .. }));
}

#[test]
fn extraction_reports_constant_lambda_as_non_solution() {
    let su = setup("einstein", &[3, 1, 3, 1, 1], NSchedule::Frozen, LambdaMode::Normalized);
    let traj = evolve(&su, su.initial_state().unwrap(), 0.2, 0.1, StepMode::Full, 1).unwrap();
    let rep = einstein_extraction_check(&traj, LambdaHat::FromState);
    assert_eq!(rep.fe2[0], None);
    assert!((rep.fe2[1].unwrap() - 1.0).abs() < 1e-8);
}

#[test]
fn extraction_schedule_satisfies_the_lambda_equation() {
    let su = setup("flat", &[2, 2, 1, 1], NSchedule::Frozen, LambdaMode::Fixed { lambda: 0.0 });
    let fe2 = |h: f64| {
        let traj = evolve(&su, su.initial_state().unwrap(), 0.3, h, StepMode::Full, 1).unwrap();
        einstein_extraction_check(&traj, LambdaHat::Schedule { lambda0: 0.5 }).max_fe2
    };
    let (a, b) = (fe2(0.05), fe2(0.025));
    assert!(a < 1e-3 && (a / b).log2() > 1.9, "{a} {b}");
}

#[test]
fn degenerate_metric_raises_flow_singularity() {
    let su = setup("shrinking-sphere", &[5, 1, 1, 1], NSchedule::Frozen, LambdaMode::Fixed { lambda: 0.0 });
    let err = evolve(&su, su.initial_state().unwrap(), 0.6, 0.1, StepMode::Full, 1).unwrap_err();
    match err {
        Error::FlowSingularity { chi, .. } => assert!(chi > 0.4 && chi <= 0.6, "{chi}"),
        e => panic!("{e}"),
    }
}

#[test]
fn invalid_steps_and_mismatched_lattices_are_rejected() {
    let su = setup("flat", &[2, 2, 1, 1], NSchedule::Frozen, LambdaMode::Fixed { lambda: 0.0 });
    let s0 = su.initial_state().unwrap();
    assert!(ricci_flow_step(&su, &s0, 0.0).is_err());
    assert!(ricci_flow_step(&su, &s0, f64::NAN).is_err());
    let fx = fixture("flat").unwrap();
    let lat = Lattice::new(vec![0.0; 3], vec![1.0; 3], vec![2; 3]).unwrap();
    assert!(FlowSetup::new(fx.dm, lat, NSchedule::Frozen, LambdaMode::Normalized).is_err());
}

#[test]
fn user_schedule_uses_scaled_connection() {
    let n0 = NConnection::User { n: 2, m: 2, field: UserN::Affine { c: Tensor::zeros(&[2, 2]), l: Tensor::zeros(&[2, 2, 4]) } };
    let dm = anholoflow::dgeometry::DMetric::constant(Mat::identity(2), Mat::identity(2), n0).unwrap();
    let su = FlowSetup::new(dm, Lattice::new(vec![0.0; 4], vec![1.0; 4], vec![2, 2, 1, 1]).unwrap(), NSchedule::Polynomial { coeffs: vec![2.0] }, LambdaMode::Einstein { lambda0: 0.5 })
        .unwrap();
    assert!(matches!(su.nconn_at(0.3), NConnection::Scaled { factor, .. } if factor == 2.0));
    assert!((su.initial_state().unwrap().lambda - 0.5).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stencils_are_exact_on_quadratics(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, k in 3usize..20) {
        let lat = Lattice::new(vec![-1.0], vec![1.5], vec![k]).unwrap();
        let st = lat.stencils();
        let f: Vec<f64> = (0..k).map(|p| { let x = lat.point(p)[0]; a + b * x + c * x * x }).collect();
        for p in 0..k {
            let x = lat.point(p)[0];
            let (_, g, h) = lat.scalar_jet(&st, &f, p);
            prop_assert!((g[0] - (b + 2.0 * c * x)).abs() < 1e-8);
            prop_assert!((h[0][0] - 2.0 * c).abs() < 1e-6);
        }
    }
}
