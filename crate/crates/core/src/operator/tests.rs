use super::*;
use crate::geometry::build_discretization;
use crate::scalar::cis;

fn setup(spec: &OperatorSpec) -> (Discretization<f64>, AssembledOperator<f64>) {
    let disc = build_discretization::<f64>(&spec.geometry).unwrap();
    let op = Operator::from_spec(spec).unwrap();
    let a = assemble_operator(&op, &disc).unwrap();
    (disc, a)
}

#[test]
fn cauchy_riemann_tangential_operator_on_modes() {
    let (disc, a) = setup(&OperatorSpec::cauchy_riemann(1.0, 16, 8));
    let b0 = &a.collar[0].b0_h;
    for s in 0..16 {
        if !disc.is_resolved(s) {
            continue;
        }
        let n = disc.modes[s] as f64;
        let mut v = CVec::<f64>::zeros(16);
        v[s] = Complex::new(1.0, 0.0);
        let w = b0 * &v;
        let mut expect = v.clone() * Complex::new(-n, 0.0);
        expect[s] = Complex::new(-n, 0.0);
        assert!((w - expect).norm() <= 1e-12, "mode {n}");
    }
    // nodal check through the DFT
    let nodal = CVec::<f64>::from_fn(16, |j, _| cis(3.0 * disc.theta_nodes[j]));
    let out = disc.boundary_from_modes(&{
        let modes = disc.boundary_to_modes(&CVec::from_fn(32, |q, _| if q % 2 == 0 { nodal[q / 2] } else { Complex::new(0.0, 0.0) }));
        let side0 = CVec::from_fn(16, |s, _| modes[2 * s]);
        let img = b0 * side0;
        CVec::from_fn(32, |q, _| if q % 2 == 0 { img[q / 2] } else { Complex::new(0.0, 0.0) })
    });
    for j in 0..16 {
        assert!((out[2 * j] + nodal[j] * 3.0).norm() <= 1e-12);
    }
}

#[test]
fn dirac_collar_anticommutes() {
    let (_, a) = setup(&OperatorSpec::dirac_sigma1(1.0, 16, 8));
    for cd in &a.collar {
        let ac = &cd.j0_modes * &cd.b0_h + &cd.b0_h * &cd.j0_modes;
        assert!(crate::linalg::max_abs(&ac) <= 1e-12);
    }
    assert!(a.self_adjoint_defect <= 1e-14);
}

#[test]
fn degenerate_symbol_rejected() {
    let mut spec = OperatorSpec::cauchy_riemann(1.0, 8, 8);
    spec.beta1 = CoefficientSpec::zero(1);
    let op = Operator::<f64>::from_spec(&spec).unwrap();
    let disc = build_discretization::<f64>(&spec.geometry).unwrap();
    let err = assemble_operator(&op, &disc).unwrap_err();
    assert!(err.to_string().contains("ellipticity violated"), "{err}");
}

#[test]
fn singular_j_rejected() {
    let mut spec = OperatorSpec::cauchy_riemann(1.0, 8, 8);
    spec.j = CoefficientSpec::monomial(&[vec![[1.0, 0.0]]], 1, 0);
    let op = Operator::<f64>::from_spec(&spec).unwrap();
    let disc = build_discretization::<f64>(&spec.geometry).unwrap();
    assert!(matches!(
        assemble_operator(&op, &disc),
        Err(Error::SingularJ { .. })
    ));
}

#[test]
fn sl_examples() {
    let (disc, a) = setup(&OperatorSpec::cauchy_riemann(1.0, 16, 8));
    let r = check_ellipticity_and_sl(&a.collar, &disc.theta_nodes).unwrap();
    assert!(r.positivity && r.sl_pass);

    let (disc, a) = setup(&OperatorSpec::dirac_sigma1(1.0, 16, 8));
    let r = check_ellipticity_and_sl(&a.collar, &disc.theta_nodes).unwrap();
    assert!(r.positivity && r.sl_pass);
    for cd in &a.collar {
        for (j0, t) in cd.j0.iter().zip(&cd.t) {
            assert!((j0 - t).norm() < 1e-14);
        }
    }

    let (disc, a) = setup(&OperatorSpec::sl_failure(1.0, 8, 8));
    let r = check_ellipticity_and_sl(&a.collar, &disc.theta_nodes).unwrap();
    assert!(!r.positivity);
    assert!(!r.sl_pass);
    assert!(r.witnesses.iter().any(|w| w.side == 0 && w.zeta == 1.0));
    assert!(r.witnesses.iter().all(|w| w.sigma_min <= 1e-12));
}

#[test]
fn second_side_uses_inward_orientation() {
    let (_, a) = setup(&OperatorSpec::cauchy_riemann(1.0, 8, 8));
    let cd = &a.collar[1];
    assert_eq!(cd.inward_sign, -1.0);
    assert!((cd.j0[0][(0, 0)] + Complex::new(1.0, 0.0)).norm() < 1e-15);
    assert!((cd.t[0][(0, 0)] + Complex::new(1.0, 0.0)).norm() < 1e-15);
    // b₀(ζ) = -iζ·i = ζ at x = L
    assert!((cd.b0_symbol(0, 1.0)[(0, 0)] - Complex::new(1.0, 0.0)).norm() < 1e-15);
}

#[test]
fn green_defect_cauchy_riemann_fine_grid() {
    let (disc, a) = setup(&OperatorSpec::cauchy_riemann(1.0, 16, 48));
    assert!(a.green_defect_bound <= 1e-8, "{}", a.green_defect_bound);
    let traces = trace_and_dual(&disc);
    assert!(green_defect(&a, &disc, &traces) == a.green_defect_bound);
}

#[test]
fn green_defect_vanishes_for_compact_support() {
    let (disc, a) = setup(&OperatorSpec::dirac_sigma1(1.0, 8, 24));
    let traces = trace_and_dual(&disc);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let bump = |v: CVec<f64>| {
        let mut v = v;
        for s in 0..disc.n_slots() {
            for i in 0..disc.n_x() {
                let x = disc.x_nodes[i];
                let w = (x * (1.0 - x)).powi(2);
                for c in 0..2 {
                    v[disc.idx_interior(s, i, c)] *= w;
                }
            }
        }
        v
    };
    let s = bump(smooth_test_field(&disc, &mut rng));
    let sp = bump(smooth_test_field(&disc, &mut rng));
    let d = green_defect_pair(&a, &disc, &traces, &s, &sp).norm();
    assert!(d <= 1e-10, "{d}");
}

#[test]
fn zeroth_order_term_leaves_defect_unchanged() {
    let base = OperatorSpec::cauchy_riemann(1.0, 16, 32);
    let mut pert = base.clone();
    pert.c = Some(
        CoefficientSpec::constant(&[vec![[0.3, 0.0]]])
            .add_scaled(&CoefficientSpec::monomial(&[vec![[0.2, 0.1]]], 1, 1), 1.0),
    );
    let (_, a) = setup(&base);
    let (_, b) = setup(&pert);
    assert!((a.green_defect_bound - b.green_defect_bound).abs() <= 1e-10);
    assert!(b.is_coupled() && !a.is_coupled());
}

#[test]
fn coupled_assembly_matches_per_slot_for_constant_coefficients() {
    let spec = OperatorSpec::dirac_sigma1(1.0, 8, 8);
    let disc = build_discretization::<f64>(&spec.geometry).unwrap();
    let op = Operator::<f64>::from_spec(&spec).unwrap();
    let f = |x: f64, th: f64| op.coeffs(x, th);
    let a = collocate_first_order(&disc, &disc.gauss_nodes, Some(&disc.interp_gauss), &disc.deriv_gauss, &f, false);
    let b = collocate_first_order(&disc, &disc.gauss_nodes, Some(&disc.interp_gauss), &disc.deriv_gauss, &f, true);
    assert!((a.to_dense() - b.to_dense()).norm() < 1e-13);
}

#[test]
fn spec_json_round_trip_and_unknown_key() {
    let spec = OperatorSpec::dirac_sigma1(1.0, 16, 8);
    let txt = serde_json::to_string(&spec).unwrap();
    let back: OperatorSpec = serde_json::from_str(&txt).unwrap();
    assert_eq!(spec, back);
    let bad = txt.replacen("\"beta1\"", "\"beta_1\"", 1);
    let err = serde_json::from_str::<OperatorSpec>(&bad).unwrap_err().to_string();
    assert!(err.contains("beta_1"), "{err}");
    let t = serde_json::to_string(&OperatorSpec::sl_failure(1.0, 8, 8).t).unwrap();
    assert!(t.starts_with("{\"explicit\""));
}
