//! Ground truth for θ-constant coefficients. Each Fourier mode `n` of
//! `Au = 0` is the ODE `u' = -G_n(x)u` with `G_n = inβ₁ + β₀ + J⁻¹C`, whose
//! fundamental solution gives the Cauchy data `{(v, Φ_n(L)v)}` exactly.
//! Nothing here touches the double or the pseudoinverse.

use nalgebra::ComplexField;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Discretization;
use crate::linalg::{expm, gauss_legendre, max_angle_sin, range_basis_dim, riesz_projection, singular_values};
use crate::operator::{AssembledOperator, ModeOp, Operator};
use crate::scalar::{cplx, creal, lit, to_f64, CMat, Real};

pub const DEFAULT_ODE_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct ModeSystem<R: Real> {
    pub mode: i64,
    pub slot: usize,
    /// `Φ_n(L)`, mapping `u(0)` to `u(L)`.
    pub fundamental: CMat<R>,
    pub x_constant: bool,
}

fn g_matrix<R: Real>(op: &Operator<R>, n: i64, x: R) -> CMat<R> {
    let th = R::zero();
    let j = op.j.eval(x, th);
    let jinv = j.try_inverse().unwrap_or_else(|| CMat::zeros(op.k, op.k));
    op.beta1.eval(x, th) * cplx(R::zero(), lit(n as f64)) + op.beta0.eval(x, th) + jinv * op.c.eval(x, th)
}

fn is_x_constant<R: Real>(op: &Operator<R>) -> bool {
    let th = R::zero();
    let probes = [lit::<R>(0.0), lit(0.37), lit(1.0)];
    let len = lit::<R>(op.spec.geometry.length);
    [&op.j, &op.beta1, &op.beta0, &op.c].iter().all(|c| {
        probes
            .iter()
            .all(|&p| crate::linalg::max_abs(&c.dx(p * len, th)) == R::zero())
    })
}

/// Four-stage Gauss–Legendre collocation tableau (order 8).
struct Tableau<R: Real> {
    c: Vec<R>,
    b: Vec<R>,
    a: Vec<Vec<R>>,
}

impl<R: Real> Tableau<R> {
    fn gauss4() -> Self {
        let (t, w) = gauss_legendre::<R>(4);
        let half = lit::<R>(0.5);
        let c: Vec<R> = t.iter().map(|&t| (t + R::one()) * half).collect();
        let b: Vec<R> = w.iter().map(|&w| w * half).collect();
        let lagrange = |j: usize, s: R| -> R {
            let mut v = R::one();
            for m in 0..4 {
                if m != j {
                    v *= (s - c[m]) / (c[j] - c[m]);
                }
            }
            v
        };
        let a = (0..4)
            .map(|i| {
                (0..4)
                    .map(|j| {
                        // exact for the cubic ℓ_j
                        t.iter()
                            .zip(&w)
                            .fold(R::zero(), |acc, (&tq, &wq)| {
                                acc + wq * c[i] * half * lagrange(j, (tq + R::one()) * half * c[i])
                            })
                    })
                    .collect()
            })
            .collect();
        Self { c, b, a }
    }

    fn step(&self, f: &dyn Fn(R) -> CMat<R>, x: R, h: R, y: &CMat<R>) -> CMat<R> {
        let k = y.nrows();
        let fs: Vec<CMat<R>> = self.c.iter().map(|&ci| f(x + ci * h)).collect();
        let mut sys = CMat::<R>::identity(4 * k, 4 * k);
        let mut rhs = CMat::<R>::zeros(4 * k, y.ncols());
        for i in 0..4 {
            for j in 0..4 {
                let blk = &fs[i] * creal(h * self.a[i][j]);
                let mut view = sys.view_mut((i * k, j * k), (k, k));
                view -= blk;
            }
            rhs.rows_mut(i * k, k).copy_from(&(&fs[i] * y));
        }
        let stages = sys.lu().solve(&rhs).expect("Gauss stage system singular");
        let mut out = y.clone();
        for i in 0..4 {
            out += stages.rows(i * k, k) * creal(h * self.b[i]);
        }
        out
    }
}

/// Fundamental matrix of `u' = F(x)u` from `x0` to `x1` by adaptive
/// eighth-order Gauss collocation with step doubling.
pub fn integrate_linear<R: Real>(f: &dyn Fn(R) -> CMat<R>, k: usize, x0: R, x1: R, tol: R) -> CMat<R> {
    let tab = Tableau::<R>::gauss4();
    let mut y = CMat::<R>::identity(k, k);
    let mut x = x0;
    let span = x1 - x0;
    let mut h = span / lit(8.0);
    let two = lit::<R>(2.0);
    let min_h = span.abs() * lit(1e-12);
    while (x1 - x).abs() > span.abs() * lit(1e-15) {
        if (h > R::zero() && x + h > x1) || (h < R::zero() && x + h < x1) {
            h = x1 - x;
        }
        let full = tab.step(f, x, h, &y);
        let halfway = tab.step(f, x, h / two, &y);
        let fine = tab.step(f, x + h / two, h / two, &halfway);
        let scale = crate::linalg::max_abs(&fine).max(R::one());
        let err = crate::linalg::max_abs(&(&fine - &full)) / lit(255.0);
        if err <= tol * scale || h.abs() <= min_h {
            y = &fine + (&fine - &full) / creal(lit(255.0));
            x += h;
            let grow = if err > R::zero() {
                lit::<R>(0.9) * (tol * scale / err).powf(lit(1.0 / 9.0))
            } else {
                lit(4.0)
            };
            h *= grow.min(lit(4.0)).max(lit(0.2));
        } else {
            let shrink = lit::<R>(0.9) * (tol * scale / err).powf(lit(1.0 / 9.0));
            h *= shrink.max(lit(0.1));
        }
    }
    y
}

/// Fundamental matrix from 0 to `x` for mode `n`.
pub fn mode_fundamental<R: Real>(op: &Operator<R>, n: i64, x: R, ode_tol: R) -> CMat<R> {
    if is_x_constant(op) {
        expm(&(g_matrix(op, n, R::zero()) * creal(-x)))
    } else {
        let f = |s: R| -g_matrix(op, n, s);
        integrate_linear(&f, op.k, R::zero(), x, ode_tol)
    }
}

#[derive(Clone, Debug)]
pub struct OracleCauchySpace<R: Real> {
    pub systems: Vec<ModeSystem<R>>,
    /// Orthonormal `2k x k` basis per mode, ordered `(side, c)`.
    pub bases: Vec<CMat<R>>,
    /// Block-orthogonal projection on the resolved modes.
    pub projection: ModeOp<R>,
}

impl<R: Real> OracleCauchySpace<R> {
    pub fn basis_for_mode(&self, n: i64) -> Option<&CMat<R>> {
        self.systems.iter().position(|s| s.mode == n).map(|i| &self.bases[i])
    }
}

pub fn mode_oracle_cauchy<R: Real>(
    op: &Operator<R>,
    disc: &Discretization<R>,
    ode_tol: R,
) -> Result<OracleCauchySpace<R>> {
    if !op.is_theta_constant() {
        return Err(Error::OracleInapplicable(
            "oracle requires θ-constant coefficients".into(),
        ));
    }
    let k = op.k;
    let slots: Vec<usize> = (0..disc.n_slots()).filter(|&s| disc.is_resolved(s)).collect();
    let x_const = is_x_constant(op);
    let systems: Vec<ModeSystem<R>> = slots
        .par_iter()
        .map(|&s| {
            let n = disc.modes[s];
            ModeSystem {
                mode: n,
                slot: s,
                fundamental: mode_fundamental(op, n, disc.length, ode_tol),
                x_constant: x_const,
            }
        })
        .collect();
    let bases: Vec<CMat<R>> = systems
        .iter()
        .map(|m| {
            let mut b = CMat::<R>::zeros(2 * k, k);
            b.view_mut((0, 0), (k, k)).fill_with_identity();
            b.view_mut((k, 0), (k, k)).copy_from(&m.fundamental);
            range_basis_dim(&b, k)
        })
        .collect();
    let mut blocks = vec![CMat::<R>::zeros(2 * k, 2 * k); disc.n_slots()];
    for (m, b) in systems.iter().zip(&bases) {
        blocks[m.slot] = b * b.adjoint();
    }
    Ok(OracleCauchySpace {
        systems,
        bases,
        projection: ModeOp::per_slot(blocks),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeAngle {
    pub mode: i64,
    pub angle_sin: f64,
    /// Largest principal-angle sine between the mode block of `im C₊` and
    /// the APS subspace `im P₊(B₀)` on both boundary components.
    pub aps_angle_sin: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleComparison {
    pub per_mode: Vec<ModeAngle>,
    pub max_angle_sin: f64,
    pub mode_coupling: f64,
}

impl OracleComparison {
    pub fn max_angle_within(&self, limit: i64) -> f64 {
        self.per_mode
            .iter()
            .filter(|m| m.mode.abs() <= limit)
            .map(|m| m.angle_sin)
            .fold(0.0, f64::max)
    }
}

/// Per-mode principal angles between `im C₊` and the oracle Cauchy space.
pub fn compare_to_oracle<R: Real>(
    c_plus: &ModeOp<R>,
    op: &AssembledOperator<R>,
    oracle: &OracleCauchySpace<R>,
) -> Result<OracleComparison> {
    let k = op.operator.k;
    if c_plus.rows != 2 * k || c_plus.n_slots != op.collar[0].j0_modes.nrows() / k {
        return Err(Error::GeometryMismatch("C+ does not match the oracle grid".into()));
    }
    let per_mode: Vec<ModeAngle> = oracle
        .systems
        .par_iter()
        .zip(oracle.bases.par_iter())
        .map(|(m, basis)| {
            let block = c_plus.slot_block(m.slot);
            let range = range_basis_dim(&block, k);
            let mut aps = CMat::<R>::zeros(2 * k, 2 * k);
            for side in 0..2 {
                let b0 = op.collar[side]
                    .b0_h
                    .view((m.slot * k, m.slot * k), (k, k))
                    .into_owned();
                let (p, _) = riesz_projection(&b0, |z| z.re > R::zero());
                aps.view_mut((side * k, side * k), (k, k)).copy_from(&p);
            }
            let aps_basis = range_basis_dim(&aps, k);
            ModeAngle {
                mode: m.mode,
                angle_sin: to_f64(max_angle_sin(&range, basis)),
                aps_angle_sin: to_f64(max_angle_sin(&range, &aps_basis)),
            }
        })
        .collect();
    let mode_coupling = if c_plus.is_coupled() {
        let d = c_plus.to_dense();
        let nb = 2 * k;
        let mut w = 0.0f64;
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                if i / nb != j / nb {
                    w = w.max(to_f64(d[(i, j)].modulus()));
                }
            }
        }
        w
    } else {
        0.0
    };
    Ok(OracleComparison {
        max_angle_sin: per_mode.iter().map(|m| m.angle_sin).fold(0.0, f64::max),
        per_mode,
        mode_coupling,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct UcpVerdict {
    /// `d(x_j) = 0` at every sample.
    pub d_identically_zero: bool,
    /// Smallest singular value of `Φ_n(x_j)` over modes and samples.
    pub min_sigma: f64,
}

/// `d(x) = 0` for `A = J(∂_x + B)` with constant `J`, `B`: a solution
/// vanishing on `Σ(x_j)` has `Φ_n(x_j)u(0) = 0` in each mode, so `u = 0`
/// whenever every `Φ_n(x_j)` is invertible.
pub fn constant_coeff_ucp<R: Real>(
    op: &Operator<R>,
    disc: &Discretization<R>,
    x_samples: &[R],
) -> Result<UcpVerdict> {
    if !op.is_theta_constant() || !is_x_constant(op) {
        return Err(Error::OracleInapplicable(
            "constant-coefficient oracle inapplicable".into(),
        ));
    }
    let mut min_sigma = f64::INFINITY;
    for s in (0..disc.n_slots()).filter(|&s| disc.is_resolved(s)) {
        let g = g_matrix(op, disc.modes[s], R::zero());
        for &x in x_samples {
            let phi = expm(&(&g * creal(-x)));
            let sv = singular_values(&phi);
            min_sigma = min_sigma.min(to_f64(*sv.last().unwrap()));
        }
    }
    Ok(UcpVerdict {
        d_identically_zero: min_sigma > 0.0,
        min_sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_discretization;
    use crate::operator::{assemble_operator, CoefficientSpec, OperatorSpec};
    use crate::sectorial::{q_family, QFamily, SectorialContour};

    fn operator(spec: &OperatorSpec) -> (Operator<f64>, Discretization<f64>) {
        (
            Operator::from_spec(spec).unwrap(),
            build_discretization(&spec.geometry).unwrap(),
        )
    }

    #[test]
    fn cauchy_riemann_oracle_spans_exponential_pairs() {
        let (op, disc) = operator(&OperatorSpec::cauchy_riemann(1.0, 16, 8));
        let o = mode_oracle_cauchy(&op, &disc, DEFAULT_ODE_TOL).unwrap();
        for (m, b) in o.systems.iter().zip(&o.bases) {
            let e = (m.mode as f64).exp();
            let v = CMat::<f64>::from_column_slice(2, 1, &[creal(1.0), creal(e)]);
            let v = v.normalize();
            assert!(max_angle_sin(&v, b) <= 1e-13, "mode {}", m.mode);
        }
        let p0 = o.projection.slot_block(0);
        assert!((p0 - CMat::<f64>::from_element(2, 2, creal(0.5))).norm() <= 1e-14);
    }

    #[test]
    fn integrator_matches_exponential() {
        let g = CMat::<f64>::from_row_slice(2, 2, &[cplx(0.3, 1.0), creal(2.0), creal(-1.0), cplx(0.0, -0.5)]);
        let f = |_x: f64| -g.clone();
        let phi = integrate_linear(&f, 2, 0.0, 1.3, 1e-12);
        let exact = expm(&(&g * creal(-1.3)));
        assert!((phi - exact).norm() <= 1e-10);
    }

    #[test]
    fn x_dependent_mode_uses_integrator() {
        // β₀ = x: u' = -x u  ⇒  Φ(L) = exp(-L²/2) on mode 0
        let mut spec = OperatorSpec::cauchy_riemann(1.0, 8, 8);
        spec.beta0 = Some(CoefficientSpec::monomial(&[vec![[1.0, 0.0]]], 1, 0));
        let (op, _) = operator(&spec);
        let phi = mode_fundamental(&op, 0, 1.0, 1e-12);
        assert!((phi[(0, 0)].re - (-0.5f64).exp()).abs() <= 1e-11);
        let half = mode_fundamental(&op, 0, 1.0, 5e-13);
        assert!((phi - half).norm() <= 1e-11);
    }

    #[test]
    fn theta_dependent_coefficients_are_rejected() {
        let mut spec = OperatorSpec::cauchy_riemann(1.0, 8, 8);
        spec.beta0 = Some(CoefficientSpec::monomial(&[vec![[1.0, 0.0]]], 0, 1));
        let (op, disc) = operator(&spec);
        let err = mode_oracle_cauchy(&op, &disc, 1e-12).unwrap_err();
        assert!(err.to_string().contains("θ-constant"));
        let mut spec = OperatorSpec::cauchy_riemann(1.0, 8, 8);
        spec.beta0 = Some(CoefficientSpec::monomial(&[vec![[1.0, 0.0]]], 1, 0));
        let (op, disc) = operator(&spec);
        let err = constant_coeff_ucp(&op, &disc, &[0.0]).unwrap_err();
        assert!(err.to_string().contains("inapplicable"));
    }

    #[test]
    fn direct_sum_oracle_is_block_sum() {
        let a = OperatorSpec::cauchy_riemann(1.0, 8, 8);
        let b = OperatorSpec::dirac_sigma1(1.0, 8, 8);
        let (oa, da) = operator(&a);
        let (ob, _) = operator(&b);
        let (os, _) = operator(&OperatorSpec::direct_sum(&a, &b).unwrap());
        for s in (0..8).filter(|&s| da.is_resolved(s)) {
            let n = da.modes[s];
            let fs = mode_fundamental(&os, n, 1.0, 1e-12);
            let fa = mode_fundamental(&oa, n, 1.0, 1e-12);
            let fb = mode_fundamental(&ob, n, 1.0, 1e-12);
            assert!((fs[(0, 0)] - fa[(0, 0)]).norm() <= 1e-12);
            assert!((fs.view((1, 1), (2, 2)) - fb).norm() <= 1e-12);
        }
    }

    #[test]
    fn exponential_restricted_to_spectral_subspaces_matches_q_family() {
        let (op, _) = operator(&OperatorSpec::dirac_sigma1(1.0, 8, 8));
        let g = g_matrix(&op, 2, 0.0);
        let contour = SectorialContour::default_for(&g);
        for &x in &[0.0, 0.3, 1.0] {
            let (pp, _) = riesz_projection(&g, |z| z.re > 0.0);
            let q = q_family(&g, &contour, QFamily::Plus, x).unwrap();
            let e = expm(&(&g * creal(-x))) * &pp;
            assert!((q - e).norm() <= 1e-8);
            let (pm, _) = riesz_projection(&g, |z| z.re < 0.0);
            let q = q_family(&g, &contour, QFamily::Minus, -x).unwrap();
            let e = expm(&(&g * creal(x))) * &pm;
            assert!((q - e).norm() <= 1e-8);
        }
    }

    #[test]
    fn oracle_agrees_with_double_for_dirac() {
        let spec = OperatorSpec::dirac_sigma1(1.0, 16, 24);
        let (op, disc) = operator(&spec);
        let a = assemble_operator(&op, &disc).unwrap();
        let traces = crate::geometry::trace_and_dual(&disc);
        let dbl = crate::double::assemble_double(&a, &traces, 1e-10).unwrap();
        let b = crate::double::calderon(&dbl, &a, &disc, &traces, &Default::default()).unwrap();
        let o = mode_oracle_cauchy(&op, &disc, DEFAULT_ODE_TOL).unwrap();
        let cmp = compare_to_oracle(&b.c_plus, &a, &o).unwrap();
        assert!(cmp.max_angle_sin <= 1e-6, "{cmp:?}");
        let self_cmp = compare_to_oracle(&o.projection, &a, &o).unwrap();
        assert!(self_cmp.max_angle_sin <= 1e-14);
    }

    #[test]
    fn constant_coefficient_ucp_verdicts() {
        for spec in [
            OperatorSpec::cauchy_riemann(1.0, 8, 8),
            OperatorSpec::dirac_sigma1(1.0, 8, 8),
        ] {
            let (op, disc) = operator(&spec);
            let v = constant_coeff_ucp(&op, &disc, &[0.0, 0.25, 0.5, 0.75]).unwrap();
            assert!(v.d_identically_zero);
        }
    }
}
