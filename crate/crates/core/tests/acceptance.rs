//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! a nonzero status if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use calderonlab::analysis::{
    continuity_sweep, lagrangian_and_cobordism, ucp_defect_profile, DoubleSummary, SymplecticForm,
};
use calderonlab::cli::{execute, load_config, Command, TABLE_FILES};
use calderonlab::double::{
    correction_formula_check, ghost_solutions, kernel_ghost_angle, profile_slope, CalderonTolerances,
    GhostSpaces, DEFAULT_RANK_TOL,
};
use calderonlab::linalg::{hermitian_eigen, spectral_norm};
use calderonlab::operator::{CoefficientSpec, OperatorSpec};
use calderonlab::oracle::{compare_to_oracle, constant_coeff_ucp, mode_oracle_cauchy, DEFAULT_ODE_TOL};
use calderonlab::scalar::{creal, CMat, CVec};
use calderonlab::sectorial::{sectorial_projection, SectorialContour};
use calderonlab::Pipeline64;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn pipeline(spec: &OperatorSpec) -> Pipeline64 {
    Pipeline64::run(spec, DEFAULT_RANK_TOL, &CalderonTolerances::default()).expect("pipeline runs")
}

fn configs_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn calderon_identities() -> Outcome {
    let spec = OperatorSpec::cauchy_riemann(1.0, 64, 48);
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let p = single.install(|| pipeline(&spec));
    let secs = start.elapsed().as_secs_f64();
    let d = &p.bundle.diagnostics;
    let pass = d.compl_residual <= 1e-8 && d.idem_residual <= 1e-8 && d.sym_residual <= 1e-8 && secs <= 60.0;
    Outcome::new(
        pass,
        format!(
            "CR 64x48: compl {:.2e}, idem {:.2e}, sym {:.2e} (tol 1e-8); {secs:.2} s on one thread (limit 60 s)",
            d.compl_residual, d.idem_residual, d.sym_residual
        ),
    )
}

fn oracle_agreement() -> Outcome {
    let mut parts = vec![];
    let mut pass = true;
    for spec in [OperatorSpec::cauchy_riemann(1.0, 64, 48), OperatorSpec::dirac_sigma1(1.0, 64, 48)] {
        let p = pipeline(&spec);
        let oracle = mode_oracle_cauchy(&p.op.operator, &p.disc, DEFAULT_ODE_TOL).unwrap();
        let cmp = compare_to_oracle(&p.bundle.c_plus, &p.op, &oracle).unwrap();
        let worst = cmp.max_angle_within(20);
        pass &= worst <= 1e-6;
        parts.push(format!("{} max sin angle {worst:.2e}", spec.name.as_deref().unwrap_or("?")));
    }
    Outcome::new(pass, format!("|n| <= 20: {} (tol 1e-6)", parts.join(", ")))
}

fn correction_formula() -> Outcome {
    let spec = OperatorSpec::cauchy_riemann(1.0, 64, 256);
    let p = pipeline(&spec);
    let limit = 64 / 4;
    let r = correction_formula_check(&p.dbl, &p.op, &p.disc, &p.bundle, None, limit).unwrap();
    let slope = profile_slope(&r.profile, 4, 16);
    let length = 1.0;
    let rel = (slope + length).abs() / length;
    Outcome::new(
        r.residual <= 1e-6 && rel <= 0.2,
        format!(
            "CR 64x256: residual {:.2e} on |n| <= {limit} (tol 1e-6); slope {slope:.4} vs -L = -1 (rel. error {rel:.1e}, limit 0.2)",
            r.residual
        ),
    )
}

fn invertible_double() -> Outcome {
    let mut parts = vec![];
    let mut pass = true;
    for spec in [OperatorSpec::cauchy_riemann(1.0, 64, 48), OperatorSpec::dirac_sigma1(1.0, 64, 48)] {
        let p = pipeline(&spec);
        let s = DoubleSummary::of(&p.dbl, &p.op);
        pass &= s.kernel_dim == 0 && s.gap_ratio >= 10.0;
        parts.push(format!("{} ker {} gap {:.1e}", spec.name.as_deref().unwrap_or("?"), s.kernel_dim, s.gap_ratio));
    }

    // direct sum: C₊ must split into the two summands, and the kernel must
    // agree with the ghost spaces
    let (a, b) = (OperatorSpec::cauchy_riemann(1.0, 16, 32), OperatorSpec::dirac_sigma1(1.0, 16, 32));
    let sum = OperatorSpec::direct_sum(&a, &b).unwrap();
    let (pa, pb, ps) = (pipeline(&a), pipeline(&b), pipeline(&sum));
    let mut split = 0.0f64;
    for slot in 0..ps.disc.n_slots() {
        let (ca, cb, cs) = (pa.bundle.c_plus_mode(slot), pb.bundle.c_plus_mode(slot), ps.bundle.c_plus_mode(slot));
        let mut expected = CMat::<f64>::zeros(6, 6);
        for si in 0..2 {
            for sj in 0..2 {
                expected[(si * 3, sj * 3)] = ca[(si, sj)];
                for i in 0..2 {
                    for j in 0..2 {
                        expected[(si * 3 + 1 + i, sj * 3 + 1 + j)] = cb[(si * 2 + i, sj * 2 + j)];
                    }
                }
            }
        }
        split = split.max(spectral_norm(&(cs - expected)));
    }
    let ghosts = ghost_solutions(&ps.op, &ps.traces, DEFAULT_RANK_TOL).unwrap();
    let angle = kernel_ghost_angle(&ps.dbl.kernel_basis, &ghosts, ps.disc.n_slots(), ps.disc.n_x() * ps.disc.rank());
    let sum_summary = DoubleSummary::of(&ps.dbl, &ps.op);
    let dims_match = sum_summary.kernel_dim == ghosts.dims().0 + ghosts.dims().1;

    // a kernel vector planted inside a ghost space is recognized
    let planted = GhostSpaces::<f64> {
        z_plus: CMat::zeros(2, 0),
        z_minus: CMat::from_column_slice(2, 1, &[creal(0.0), creal(1.0)]),
        gap_plus: 1e10,
        gap_minus: 1e10,
    };
    let mut kernel = CMat::<f64>::zeros(4, 1);
    kernel[(3, 0)] = creal(1.0);
    let planted_angle = kernel_ghost_angle(&kernel, &planted, 2, 1);

    pass &= split <= 1e-10 && dims_match && angle <= 1e-6 && planted_angle <= 1e-6 && sum_summary.gap_ratio >= 10.0;
    Outcome::new(
        pass,
        format!(
            "{}; CR+Dirac sum: block split {split:.1e}, ker {} = ghosts {:?}, angle {angle:.1e}, planted ghost angle {planted_angle:.1e}",
            parts.join(", "),
            sum_summary.kernel_dim,
            ghosts.dims()
        ),
    )
}

fn cobordism() -> Outcome {
    let p = pipeline(&OperatorSpec::dirac_sigma1(1.0, 16, 32));
    let form = SymplecticForm::from_collar(&p.op).unwrap();
    let imag_tol = 1e-9 * p.op.collar.iter().map(|c| spectral_norm(&c.b0_h)).fold(1.0, f64::max);
    let r = lagrangian_and_cobordism(&p.bundle, &p.op, &p.disc, &form, imag_tol, DEFAULT_RANK_TOL).unwrap();
    let pass = r.isotropy_residual <= 1e-8
        && r.transversality_angle >= 1e-3
        && r.signature == 0
        && r.index_b_plus == Some(0);
    Outcome::new(
        pass,
        format!(
            "Dirac 16x32: isotropy {:.1e}, transversality {:.3}, signature {}, ind B+ {:?}",
            r.isotropy_residual, r.transversality_angle, r.signature, r.index_b_plus
        ),
    )
}

fn random_gapped(rng: &mut ChaCha8Rng, n: usize) -> CMat<f64> {
    let d = CVec::<f64>::from_fn(n, |_, _| {
        let re: f64 = rng.random_range(0.5..3.0);
        let im = rng.random_range(-0.8..0.8) * re;
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        Complex::new(sign * re, im)
    });
    let v = CMat::<f64>::from_fn(n, n, |i, j| {
        let off = Complex::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        if i == j {
            off + creal(1.0)
        } else {
            off
        }
    });
    let vi = v.clone().try_inverse().unwrap();
    v * CMat::from_diagonal(&d) * vi
}

fn random_hermitian_gapped(rng: &mut ChaCha8Rng, n: usize) -> CMat<f64> {
    let a = CMat::<f64>::from_fn(n, n, |_, _| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let (_, q) = hermitian_eigen(&(&a + a.adjoint()));
    let d = CVec::<f64>::from_fn(n, |_, _| {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        creal(sign * rng.random_range(0.5..3.0))
    });
    &q * CMat::from_diagonal(&d) * q.adjoint()
}

fn sectorial_calculus() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut quad, mut compl) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let b = random_gapped(&mut rng, 8);
        let s = sectorial_projection(&b, &SectorialContour::default_for(&b)).unwrap();
        quad = quad.max(s.oracle_mismatch);
        compl = compl.max(s.completeness_defect());
    }
    let mut herm = 0.0f64;
    for _ in 0..20 {
        let h = random_hermitian_gapped(&mut rng, 8);
        let contour = SectorialContour::default_for(&h);
        let s = sectorial_projection(&h, &contour).unwrap();
        let (vals, vecs) = hermitian_eigen(&h);
        let mut indicator = CMat::<f64>::zeros(8, 8);
        for (i, &v) in vals.iter().enumerate() {
            if v > 0.0 {
                let col = vecs.column(i);
                indicator += col * col.adjoint();
            }
        }
        herm = herm.max(spectral_norm(&(&s.p_plus - indicator)));
    }
    Outcome::new(
        quad <= 1e-6 && compl <= 1e-8 && herm <= 1e-10,
        format!(
            "100 random 8x8: quadrature vs Schur {quad:.1e} (tol 1e-6), completeness {compl:.1e} (tol 1e-8); Hermitian vs indicator {herm:.1e} (tol 1e-10)"
        ),
    )
}

fn continuity() -> Outcome {
    let base = OperatorSpec::cauchy_riemann(1.0, 8, 16);
    let constant = |v: f64| CoefficientSpec {
        p: 0,
        m_max: 0,
        data: vec![vec![vec![vec![[v, 0.0]]]]],
    };
    let zeroth = |s: f64| {
        let mut sp = base.clone();
        sp.c = Some(constant(s));
        sp
    };
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 0.01).collect();
    let tol = CalderonTolerances::default();
    let z = continuity_sweep(&zeroth, &grid, 0.0, None, DEFAULT_RANK_TOL, &tol).unwrap();
    let zero_ok = z.jumps_c_plus.is_empty()
        && z.jumps_p_plus.is_empty()
        && z.max_step_ratio.is_finite()
        && z.step_ratio_spread <= 10.0
        && z.max_resolvent_ratio.is_finite()
        && z.resolvent_ratio_spread <= 10.0;

    // β₀ = s(1 - x): the boundary eigenvalue s crosses the cut radius 0.55
    // between s = 0.5 and s = 0.6, which is step 6
    let crossing = |s: f64| {
        let mut sp = base.clone();
        sp.beta0 = Some(CoefficientSpec {
            p: 1,
            m_max: 0,
            data: vec![vec![vec![vec![[s, 0.0]]]], vec![vec![vec![[-s, 0.0]]]]],
        });
        sp
    };
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
    let c = continuity_sweep(&crossing, &grid, 0.0, Some(0.55), DEFAULT_RANK_TOL, &tol).unwrap();
    let crossing_ok = c.jumps_p_plus == vec![6];
    Outcome::new(
        zero_ok && crossing_ok,
        format!(
            "zeroth-order: jumps {:?}/{:?}, step ratio max {:.2} spread {:.2}, resolvent ratio max {:.2} spread {:.2}; crossing: P+ jumps {:?} (expected [6])",
            z.jumps_c_plus, z.jumps_p_plus, z.max_step_ratio, z.step_ratio_spread, z.max_resolvent_ratio,
            z.resolvent_ratio_spread, c.jumps_p_plus
        ),
    )
}

fn ucp_profile() -> Outcome {
    let xs = [0.0, 0.25, 0.5, 0.75];
    let mut pass = true;
    let mut parts = vec![];
    for spec in [OperatorSpec::cauchy_riemann(1.0, 16, 32), OperatorSpec::dirac_sigma1(1.0, 16, 32)] {
        let p = pipeline(&spec);
        let prof = ucp_defect_profile(&p.op, &p.disc, &xs, DEFAULT_RANK_TOL).unwrap();
        let oracle = constant_coeff_ucp(&p.op.operator, &p.disc, &xs).unwrap();
        let zero = prof.samples.iter().all(|s| s.d == 0 && s.d_adjoint == 0);
        pass &= zero == oracle.d_identically_zero && zero && prof.all_conclusive;
        parts.push(format!("{} d = 0: {zero} (oracle {})", spec.name.as_deref().unwrap_or("?"), oracle.d_identically_zero));
    }
    let mut min_gap = f64::INFINITY;
    let suite = OperatorSpec::ucp_suite(1.0, 16, 32);
    let count = suite.len();
    for spec in suite {
        let p = pipeline(&spec);
        let prof = ucp_defect_profile(&p.op, &p.disc, &xs, DEFAULT_RANK_TOL).unwrap();
        pass &= prof.inner_index == Some(0) && prof.all_conclusive;
        for s in &prof.samples {
            min_gap = min_gap.min(s.gap_ratio).min(s.gap_ratio_adjoint);
        }
    }
    pass &= count >= 5;
    Outcome::new(
        pass,
        format!("{}; suite of {count} at 16x32: inner index 0 everywhere, min gap ratio {min_gap:.1e}", parts.join(", ")),
    )
}

fn convergence() -> Outcome {
    let (coarse, fine) = (pipeline(&OperatorSpec::cauchy_riemann(1.0, 8, 8)), pipeline(&OperatorSpec::cauchy_riemann(1.0, 16, 16)));
    let (dc, df) = (&coarse.bundle.diagnostics, &fine.bundle.diagnostics);
    let series = [
        ("green_defect", coarse.op.green_defect_bound, fine.op.green_defect_bound),
        ("compl", dc.compl_residual, df.compl_residual),
        ("idem", dc.idem_residual, df.idem_residual),
        ("sym", dc.sym_residual, df.sym_residual),
    ];
    let mut pass = true;
    let parts: Vec<String> = series
        .iter()
        .map(|(name, c, f)| {
            let factor = c / f;
            pass &= factor >= 10.0;
            format!("{name} {c:.1e} -> {f:.1e} ({factor:.2}x)")
        })
        .collect();
    Outcome::new(pass, format!("CR 8x8 -> 16x16: {} (need >= 10x each)", parts.join(", ")))
}

fn determinism() -> Outcome {
    let path = configs_dir().join("calderon_cr.json");
    let bodies = |dir: &Path| -> BTreeMap<String, Vec<u8>> {
        let loaded = load_config(&path).unwrap();
        let mut out = execute(Command::Calderon, loaded, &[], None).unwrap();
        calderonlab::cli::write_report(&mut out.report, &out.tables, dir).unwrap();
        TABLE_FILES
            .iter()
            .filter_map(|f| std::fs::read(dir.join(f)).ok().map(|b| (f.to_string(), b)))
            .collect()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (first, second) = (bodies(a.path()), bodies(b.path()));
    Outcome::new(
        !first.is_empty() && first == second,
        format!("calderon on CR twice: {} CSV files, identical: {}", first.len(), first == second),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "Calderon identities", calderon_identities),
        (2, "oracle agreement", oracle_agreement),
        (3, "correction formula", correction_formula),
        (4, "invertible double", invertible_double),
        (5, "cobordism", cobordism),
        (6, "sectorial calculus", sectorial_calculus),
        (7, "continuity", continuity),
        (8, "UCP profile", ucp_profile),
        (9, "convergence", convergence),
        (10, "determinism", determinism),
    ];
    let mut failed = vec![];
    for (id, title, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2} {verdict} {title}: {} [{:.1} s]",
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
        if !outcome.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
