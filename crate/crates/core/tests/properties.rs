use calderonlab::analysis::operator_metrics;
use calderonlab::double::{CalderonTolerances, DEFAULT_RANK_TOL};
use calderonlab::operator::{CoefficientSpec, OperatorSpec};
use calderonlab::oracle::{compare_to_oracle, mode_oracle_cauchy, DEFAULT_ODE_TOL};
use calderonlab::{Pipeline32, Pipeline64};
use proptest::prelude::*;

fn constant(re: f64, im: f64) -> CoefficientSpec {
    CoefficientSpec {
        p: 0,
        m_max: 0,
        data: vec![vec![vec![vec![[re, im]]]]],
    }
}

/// `re + im·i + a·x·cos θ` as a scalar coefficient.
fn varying(re: f64, im: f64, a: f64) -> CoefficientSpec {
    CoefficientSpec {
        p: 1,
        m_max: 1,
        data: vec![
            vec![vec![vec![[0.0, 0.0]]], vec![vec![[re, im]]], vec![vec![[0.0, 0.0]]]],
            vec![vec![vec![[a / 2.0, 0.0]]], vec![vec![[0.0, 0.0]]], vec![vec![[a / 2.0, 0.0]]]],
        ],
    }
}

fn perturbed_cr(c: CoefficientSpec, n_theta: usize, n_x: usize) -> OperatorSpec {
    let mut spec = OperatorSpec::cauchy_riemann(1.0, n_theta, n_x);
    spec.c = Some(c);
    spec
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn calderon_projections_are_complementary_idempotents(
        re in -0.4f64..0.4, im in -0.4f64..0.4, a in -0.3f64..0.3,
    ) {
        let spec = perturbed_cr(varying(re, im, a), 8, 16);
        let p = Pipeline64::run(&spec, DEFAULT_RANK_TOL, &CalderonTolerances::default()).unwrap();
        let d = &p.bundle.diagnostics;
        prop_assert_eq!(d.kernel_dim, 0);
        prop_assert!(d.idem_residual <= 1e-8, "{:?}", d);
        prop_assert!(d.idem_minus_residual <= 1e-8, "{:?}", d);
        prop_assert!(d.compl_residual <= 1e-8, "{:?}", d);
    }

    #[test]
    fn constant_potentials_match_the_exponential_oracle(re in -0.5f64..0.5, im in -0.5f64..0.5) {
        let spec = perturbed_cr(constant(re, im), 16, 32);
        let p = Pipeline64::run(&spec, DEFAULT_RANK_TOL, &CalderonTolerances::default()).unwrap();
        let oracle = mode_oracle_cauchy(&p.op.operator, &p.disc, DEFAULT_ODE_TOL).unwrap();
        let cmp = compare_to_oracle(&p.bundle.c_plus, &p.op, &oracle).unwrap();
        prop_assert!(cmp.max_angle_within(6) <= 1e-6, "{}", cmp.max_angle_within(6));
    }

    #[test]
    fn structural_distance_is_a_pseudometric(
        u in -0.5f64..0.5, v in -0.5f64..0.5, w in -0.5f64..0.5,
    ) {
        let [a, b, c] = [u, v, w].map(|s| perturbed_cr(varying(s, 0.0, s / 2.0), 8, 12));
        let ab = operator_metrics(&a, &b).unwrap();
        let ba = operator_metrics(&b, &a).unwrap();
        let bc = operator_metrics(&b, &c).unwrap();
        let ac = operator_metrics(&a, &c).unwrap();
        prop_assert!(operator_metrics(&a, &a).unwrap().d_str == 0.0);
        prop_assert!((ab.d_str - ba.d_str).abs() <= 1e-12 * (1.0 + ab.d_str));
        prop_assert!(ac.d_str <= ab.d_str + bc.d_str + 1e-12);
        prop_assert!(ab.d0 <= ab.d_str);
    }
}

#[test]
fn single_precision_pipeline_reproduces_the_identities() {
    let spec = OperatorSpec::cauchy_riemann(1.0, 8, 12);
    let tol = CalderonTolerances {
        idem: 1e-3,
        compl: 1e-3,
        sym: 1e-3,
        ker: 1e-2,
    };
    let p = Pipeline32::run(&spec, 1e-5, &tol).unwrap();
    let d = &p.bundle.diagnostics;
    assert_eq!(d.kernel_dim, 0);
    assert!(d.compl_residual <= 1e-4 && d.idem_residual <= 1e-4, "{d:?}");
}
