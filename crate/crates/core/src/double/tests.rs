use super::*;
use crate::geometry::{build_discretization, trace_and_dual};
use crate::operator::{assemble_operator, Operator, OperatorSpec};
use crate::scalar::creal as cplx;

pub(crate) struct Fixture {
    pub disc: Discretization<f64>,
    pub op: AssembledOperator<f64>,
    pub traces: TraceSystem<f64>,
    pub dbl: DoubleOperator<f64>,
}

pub(crate) fn fixture(spec: &OperatorSpec) -> Fixture {
    let disc = build_discretization::<f64>(&spec.geometry).unwrap();
    let op = assemble_operator(&Operator::from_spec(spec).unwrap(), &disc).unwrap();
    let traces = trace_and_dual(&disc);
    let dbl = assemble_double(&op, &traces, DEFAULT_RANK_TOL).unwrap();
    Fixture {
        disc,
        op,
        traces,
        dbl,
    }
}

fn bundle(f: &Fixture) -> CalderonBundle<f64> {
    calderon(&f.dbl, &f.op, &f.disc, &f.traces, &CalderonTolerances::default()).unwrap()
}

#[test]
fn cauchy_riemann_projection_matches_closed_form() {
    let len = 1.0;
    let f = fixture(&OperatorSpec::cauchy_riemann(len, 8, 24));
    let b = bundle(&f);
    assert_eq!(f.dbl.kernel_dim(), 0);
    assert!(f.dbl.positivity);
    for s in 0..8 {
        let n = f.disc.modes[s];
        let e = (-(n.abs() as f64) * len).exp();
        let d = 1.0 + e * e;
        let (a, c) = if n <= 0 { (1.0, e * e) } else { (e * e, 1.0) };
        let expect = CMat::<f64>::from_row_slice(
            2,
            2,
            &[cplx(a / d), cplx(e / d), cplx(e / d), cplx(c / d)],
        );
        let err = (b.c_plus_mode(s) - expect).norm();
        assert!(err <= 1e-10, "mode {n}: {err:e}");
    }
    let d = &b.diagnostics;
    assert!(d.orthogonal_expected);
    assert!(d.idem_residual <= 1e-10 && d.compl_residual <= 1e-10 && d.sym_residual <= 1e-10);
    assert!(d.kernel_residual <= 1e-8, "{}", d.kernel_residual);
}

#[test]
fn dirac_double_is_invertible_and_complementary() {
    let f = fixture(&OperatorSpec::dirac_sigma1(1.0, 8, 24));
    assert_eq!(f.dbl.kernel_dim(), 0);
    let b = bundle(&f);
    let d = &b.diagnostics;
    assert!(d.idem_residual <= 1e-8, "{d:?}");
    assert!(d.compl_residual <= 1e-8, "{d:?}");
    let g = ghost_solutions(&f.op, &f.traces, DEFAULT_RANK_TOL).unwrap();
    assert_eq!(g.dims(), (0, 0));
}

#[test]
fn direct_sum_gives_block_diagonal_projection() {
    let a = OperatorSpec::cauchy_riemann(1.0, 8, 16);
    let b = OperatorSpec::dirac_sigma1(1.0, 8, 16);
    let sum = OperatorSpec::direct_sum(&a, &b).unwrap();
    let (fa, fb, fs) = (fixture(&a), fixture(&b), fixture(&sum));
    let (ba, bb, bs) = (bundle(&fa), bundle(&fb), bundle(&fs));
    for s in 0..8 {
        let ca = ba.c_plus_mode(s);
        let cb = bb.c_plus_mode(s);
        let cs = bs.c_plus_mode(s);
        // (side, c) ordering: c = 0 from A, c = 1..3 from B
        for si in 0..2 {
            for sj in 0..2 {
                assert!((cs[(si * 3, sj * 3)] - ca[(si, sj)]).norm() <= 1e-10);
                for i in 0..2 {
                    assert!(cs[(si * 3, sj * 3 + 1 + i)].norm() <= 1e-10);
                    for j in 0..2 {
                        let diff = cs[(si * 3 + 1 + i, sj * 3 + 1 + j)] - cb[(si * 2 + i, sj * 2 + j)];
                        assert!(diff.norm() <= 1e-10);
                    }
                }
            }
        }
    }
}

#[test]
fn symmetric_defect_of_dirac_double_is_small() {
    let f = fixture(&OperatorSpec::dirac_sigma1(1.0, 8, 48));
    let d = symmetric_defect(&f.op, &f.dbl, &f.disc, &f.traces);
    assert!(d <= 1e-8, "{d:e}");
}

#[test]
fn pseudoinverse_solves_consistent_systems() {
    let f = fixture(&OperatorSpec::cauchy_riemann(1.0, 8, 12));
    let n = f.dbl.matrix.ncols();
    let x = CMat::<f64>::from_fn(n, 1, |i, _| cplx((i as f64 * 0.37).sin()));
    let rhs = f.dbl.matrix.to_dense() * &x;
    let y = f.dbl.solve(&rhs);
    assert!((y - x).norm() <= 1e-8);
}

#[test]
fn kernel_angle_detects_planted_ghosts() {
    // two slots, one interior unknown each; plant a ghost in slot 1 on the minus side
    let ghosts = GhostSpaces::<f64> {
        z_plus: CMat::zeros(2, 0),
        z_minus: CMat::from_column_slice(2, 1, &[cplx(0.0), cplx(1.0)]),
        gap_plus: 1e10,
        gap_minus: 1e10,
    };
    let mut kernel = CMat::<f64>::zeros(4, 1);
    kernel[(3, 0)] = cplx(1.0);
    assert!(kernel_ghost_angle(&kernel, &ghosts, 2, 1) <= 1e-14);
    let mut tilted = CMat::<f64>::zeros(4, 1);
    tilted[(3, 0)] = cplx(0.6);
    tilted[(2, 0)] = cplx(0.8);
    let a = kernel_ghost_angle(&tilted, &ghosts, 2, 1);
    assert!((a - 0.8).abs() <= 1e-12, "{a}");
}

#[test]
fn profile_slope_of_exponential_is_exact() {
    let p: Vec<ModeProfileEntry> = (-16..=16)
        .map(|m: i64| ModeProfileEntry {
            mode: m,
            norm: (-1.5 * m.abs() as f64).exp(),
        })
        .collect();
    assert!((profile_slope(&p, 4, 16) + 1.5).abs() <= 1e-12);
}

#[test]
#[ignore]
fn correction_residual_versus_grid() {
    for (nt, nx) in [(16, 48), (16, 96), (16, 160), (16, 256), (64, 256)] {
        let f = fixture(&OperatorSpec::cauchy_riemann(1.0, nt, nx));
        let b = bundle(&f);
        let t = std::time::Instant::now();
        let limit = nt as i64 / 4;
        let r = correction_formula_check(&f.dbl, &f.op, &f.disc, &b, None, limit).unwrap();
        println!(
            "{nt}x{nx}: residual(|n|<={limit}) {:.3e} slope {:.3} ({:?})",
            r.residual,
            profile_slope(&r.profile, 4, 16),
            t.elapsed()
        );
    }
}
