//! First-order elliptic operators `A = J(∂_x + β₁∂_θ + β₀) + C` on the
//! cylinder: specification, discrete assembly, collar data and the
//! ellipticity / Šapiro–Lopatinskii checks.

mod coefficient;
mod collar;
mod modeop;

pub use coefficient::{Coefficient, CoefficientSpec};
pub use collar::{check_ellipticity_and_sl, extract_collar, CollarData, SlReport, SlWitness};
pub use modeop::{Blocks, ModeOp};

use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{trace_and_dual, Discretization, GeometryConfig, TraceSystem, SIDES};
use crate::linalg::{eigenvalues, singular_values};
use crate::scalar::{cplx, lit, to_f64, CMat, CVec, Real};

/// Boundary morphism `T` of the transmission condition `f₋ = T f₊` on ∂M.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BoundaryMorphismSpec {
    /// `T = (J₀*)⁻¹`.
    #[serde(rename = "inverse_J_adjoint")]
    InverseJAdjoint,
    /// `T = J₀ (J₀*J₀)^{-1/2}`.
    #[serde(rename = "J_unitary_part")]
    JUnitaryPart,
    /// θ-dependent matrices on the two circles (`P` must be 0).
    #[serde(rename = "explicit")]
    Explicit {
        x0: CoefficientSpec,
        #[serde(rename = "xL")]
        x_l: CoefficientSpec,
    },
}

fn default_t() -> BoundaryMorphismSpec {
    BoundaryMorphismSpec::InverseJAdjoint
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub geometry: GeometryConfig,
    #[serde(rename = "J")]
    pub j: CoefficientSpec,
    pub beta1: CoefficientSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta0: Option<CoefficientSpec>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<CoefficientSpec>,
    #[serde(rename = "T", default = "default_t")]
    pub t: BoundaryMorphismSpec,
}

fn mat(rows: &[&[(f64, f64)]]) -> Vec<Vec<[f64; 2]>> {
    rows.iter()
        .map(|r| r.iter().map(|&(a, b)| [a, b]).collect())
        .collect()
}

fn block_diag(a: &CoefficientSpec, b: &CoefficientSpec) -> CoefficientSpec {
    let (ka, kb) = (a.rank(), b.rank());
    let k = ka + kb;
    let p = a.p.max(b.p);
    let m_max = a.m_max.max(b.m_max);
    let zero = vec![vec![[0.0, 0.0]; k]; k];
    let mut data = vec![vec![zero; 2 * m_max + 1]; p + 1];
    for (src, off) in [(a, 0usize), (b, ka)] {
        for (pi, block) in src.data.iter().enumerate() {
            for (mi, m) in block.iter().enumerate() {
                let t = mi + m_max - src.m_max;
                for (r, row) in m.iter().enumerate() {
                    for (c, v) in row.iter().enumerate() {
                        data[pi][t][off + r][off + c] = *v;
                    }
                }
            }
        }
    }
    CoefficientSpec { p, m_max, data }
}

impl OperatorSpec {
    pub fn rank(&self) -> usize {
        self.geometry.rank
    }

    pub fn beta0_or_zero(&self) -> CoefficientSpec {
        self.beta0
            .clone()
            .unwrap_or_else(|| CoefficientSpec::zero(self.rank()))
    }

    pub fn c_or_zero(&self) -> CoefficientSpec {
        self.c.clone().unwrap_or_else(|| CoefficientSpec::zero(self.rank()))
    }

    /// Cauchy–Riemann operator `∂_x + i∂_θ` with `T = (J₀*)⁻¹`.
    pub fn cauchy_riemann(length: f64, n_theta: usize, n_x: usize) -> Self {
        Self {
            name: Some("cauchy_riemann".into()),
            geometry: GeometryConfig::new(length, n_theta, n_x, 1),
            j: CoefficientSpec::identity(1),
            beta1: CoefficientSpec::constant(&mat(&[&[(0.0, 1.0)]])),
            beta0: None,
            c: None,
            t: BoundaryMorphismSpec::InverseJAdjoint,
        }
    }

    /// Dirac-type operator `J₀(∂_x + σ₁(-i∂_θ))` with `J₀ = [[0,1],[-1,0]]`
    /// and `T = J₀|J₀|⁻¹`.
    pub fn dirac_sigma1(length: f64, n_theta: usize, n_x: usize) -> Self {
        Self {
            name: Some("dirac_sigma1".into()),
            geometry: GeometryConfig::new(length, n_theta, n_x, 2),
            j: CoefficientSpec::constant(&mat(&[&[(0.0, 0.0), (1.0, 0.0)], &[(-1.0, 0.0), (0.0, 0.0)]])),
            beta1: CoefficientSpec::constant(&mat(&[&[(0.0, 0.0), (0.0, -1.0)], &[(0.0, -1.0), (0.0, 0.0)]])),
            beta0: None,
            c: None,
            t: BoundaryMorphismSpec::JUnitaryPart,
        }
    }

    /// Block-diagonal sum of two specs on the same cylinder. The boundary
    /// morphism is `inverse_J_adjoint` when both summands agree on it,
    /// otherwise `J_unitary_part`.
    pub fn direct_sum(a: &OperatorSpec, b: &OperatorSpec) -> Result<Self> {
        if a.geometry.length != b.geometry.length
            || a.geometry.n_theta != b.geometry.n_theta
            || a.geometry.n_x != b.geometry.n_x
        {
            return Err(Error::GeometryMismatch(
                "direct sum requires identical cylinders".into(),
            ));
        }
        let t = match (&a.t, &b.t) {
            (BoundaryMorphismSpec::InverseJAdjoint, BoundaryMorphismSpec::InverseJAdjoint) => {
                BoundaryMorphismSpec::InverseJAdjoint
            }
            _ => BoundaryMorphismSpec::JUnitaryPart,
        };
        Ok(Self {
            name: Some(format!(
                "{}+{}",
                a.name.as_deref().unwrap_or("a"),
                b.name.as_deref().unwrap_or("b")
            )),
            geometry: GeometryConfig::new(
                a.geometry.length,
                a.geometry.n_theta,
                a.geometry.n_x,
                a.rank() + b.rank(),
            ),
            j: block_diag(&a.j, &b.j),
            beta1: block_diag(&a.beta1, &b.beta1),
            beta0: Some(block_diag(&a.beta0_or_zero(), &b.beta0_or_zero())),
            c: Some(block_diag(&a.c_or_zero(), &b.c_or_zero())),
            t,
        })
    }

    /// `J = I`, `β₁ = -iσ₃` (tangential symbol `ζσ₃` at x = 0) with the
    /// boundary morphism `T = σ₁`, which violates the Šapiro–Lopatinskii
    /// condition.
    pub fn sl_failure(length: f64, n_theta: usize, n_x: usize) -> Self {
        let sigma1 = mat(&[&[(0.0, 0.0), (1.0, 0.0)], &[(1.0, 0.0), (0.0, 0.0)]]);
        Self {
            name: Some("sl_failure".into()),
            geometry: GeometryConfig::new(length, n_theta, n_x, 2),
            j: CoefficientSpec::identity(2),
            beta1: CoefficientSpec::constant(&mat(&[&[(0.0, -1.0), (0.0, 0.0)], &[(0.0, 0.0), (0.0, 1.0)]])),
            beta0: None,
            c: None,
            t: BoundaryMorphismSpec::Explicit {
                x0: CoefficientSpec::constant(&sigma1),
                x_l: CoefficientSpec::constant(&sigma1),
            },
        }
    }

    /// Cauchy–Riemann plus five θ-dependent zeroth-order potentials, used
    /// to explore the inner index beyond constant coefficients.
    pub fn ucp_suite(length: f64, n_theta: usize, n_x: usize) -> Vec<Self> {
        let one = |re: f64, im: f64| vec![vec![[re, im]]];
        let mono = |re: f64, im: f64, p: usize, m: i64| CoefficientSpec::monomial(&one(re, im), p, m);
        let cos = |a: f64, p: usize, m: i64| mono(a / 2.0, 0.0, p, m).add_scaled(&mono(a / 2.0, 0.0, p, -m), 1.0);
        let sin = |a: f64, p: usize, m: i64| mono(0.0, -a / 2.0, p, m).add_scaled(&mono(0.0, a / 2.0, p, -m), 1.0);
        let potentials = [
            ("cos1", cos(0.3, 0, 1)),
            ("sin2_plus_const", sin(0.2, 0, 2).add_scaled(&mono(0.1, 0.0, 0, 0), 1.0)),
            ("x_cos1", cos(0.25, 1, 1)),
            ("imag_exp1", mono(0.0, 0.2, 0, 1)),
            ("mixed", sin(0.15, 0, 1).add_scaled(&sin(0.15, 1, 1), 1.0).add_scaled(&cos(0.1, 0, 3), 1.0)),
        ];
        potentials
            .into_iter()
            .map(|(name, v)| {
                let mut spec = Self::cauchy_riemann(length, n_theta, n_x);
                spec.name = Some(format!("cauchy_riemann+{name}"));
                spec.c = Some(v);
                spec
            })
            .collect()
    }

    pub fn with_geometry(&self, n_theta: usize, n_x: usize) -> Self {
        let mut s = self.clone();
        s.geometry.n_theta = n_theta;
        s.geometry.n_x = n_x;
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let k = self.rank();
        self.j.validate("J", k)?;
        self.beta1.validate("beta1", k)?;
        if let Some(b) = &self.beta0 {
            b.validate("beta0", k)?;
        }
        if let Some(c) = &self.c {
            c.validate("C", k)?;
        }
        if let BoundaryMorphismSpec::Explicit { x0, x_l } = &self.t {
            for (key, c) in [("T.explicit.x0", x0), ("T.explicit.xL", x_l)] {
                c.validate(key, k)?;
                if c.p != 0 {
                    return Err(Error::Config(format!("{key}.P must be 0 (T lives on the boundary)")));
                }
            }
        }
        Ok(())
    }
}

/// Evaluable operator in working precision.
#[derive(Clone, Debug)]
pub struct Operator<R: Real> {
    pub spec: OperatorSpec,
    pub k: usize,
    pub j: Coefficient<R>,
    pub beta1: Coefficient<R>,
    pub beta0: Coefficient<R>,
    pub c: Coefficient<R>,
    pub t_explicit: Option<[Coefficient<R>; 2]>,
}

/// `[J, G, H]` where `A = J∂_x + G∂_θ + H`.
pub type FirstOrderCoeffs<R> = [CMat<R>; 3];

impl<R: Real> Operator<R> {
    pub fn from_spec(spec: &OperatorSpec) -> Result<Self> {
        spec.validate()?;
        let k = spec.rank();
        let t_explicit = match &spec.t {
            BoundaryMorphismSpec::Explicit { x0, x_l } => Some([
                Coefficient::from_spec(x0, "T.explicit.x0", k)?,
                Coefficient::from_spec(x_l, "T.explicit.xL", k)?,
            ]),
            _ => None,
        };
        Ok(Self {
            spec: spec.clone(),
            k,
            j: Coefficient::from_spec(&spec.j, "J", k)?,
            beta1: Coefficient::from_spec(&spec.beta1, "beta1", k)?,
            beta0: Coefficient::from_spec(&spec.beta0_or_zero(), "beta0", k)?,
            c: Coefficient::from_spec(&spec.c_or_zero(), "C", k)?,
            t_explicit,
        })
    }

    pub fn is_theta_constant(&self) -> bool {
        self.j.is_theta_constant()
            && self.beta1.is_theta_constant()
            && self.beta0.is_theta_constant()
            && self.c.is_theta_constant()
            && self
                .t_explicit
                .as_ref()
                .is_none_or(|t| t.iter().all(|c| c.is_theta_constant()))
    }

    pub fn coeffs(&self, x: R, th: R) -> FirstOrderCoeffs<R> {
        let j = self.j.eval(x, th);
        let g = &j * self.beta1.eval(x, th);
        let h = &j * self.beta0.eval(x, th) + self.c.eval(x, th);
        [j, g, h]
    }

    /// `∂_x` of `[J, G, H]`.
    pub fn coeffs_dx(&self, x: R, th: R) -> FirstOrderCoeffs<R> {
        let j = self.j.eval(x, th);
        let jx = self.j.dx(x, th);
        let g = &jx * self.beta1.eval(x, th) + &j * self.beta1.dx(x, th);
        let h = &jx * self.beta0.eval(x, th) + &j * self.beta0.dx(x, th) + self.c.dx(x, th);
        [jx, g, h]
    }

    /// Coefficients of the formal adjoint
    /// `A^t = -J*∂_x - G*∂_θ + (H* - ∂_xJ* - ∂_θG*)`.
    pub fn adjoint_coeffs(&self, x: R, th: R) -> FirstOrderCoeffs<R> {
        let [j, g, h] = self.coeffs(x, th);
        let jx = self.j.dx(x, th);
        let gth = self.j.dtheta(x, th) * self.beta1.eval(x, th) + &j * self.beta1.dtheta(x, th);
        [
            -j.adjoint(),
            -g.adjoint(),
            h.adjoint() - jx.adjoint() - gth.adjoint(),
        ]
    }

    /// Largest coefficient difference between `A` and `A^t` over the grid;
    /// zero iff `A` is formally self-adjoint (up to roundoff).
    pub fn self_adjoint_defect(&self, disc: &Discretization<R>) -> R {
        let mut worst = R::zero();
        for &x in &disc.x_nodes {
            for &th in &disc.theta_nodes {
                let a = self.coeffs(x, th);
                let b = self.adjoint_coeffs(x, th);
                for q in 0..3 {
                    let d = crate::linalg::max_abs(&(&a[q] - &b[q]));
                    if d > worst {
                        worst = d;
                    }
                }
            }
        }
        worst
    }
}

/// Discrete operator together with its collar data.
#[derive(Clone, Debug)]
pub struct AssembledOperator<R: Real> {
    pub operator: Operator<R>,
    /// Square Lobatto collocation of `A` (diagnostics, metrics).
    pub a_h: ModeOp<R>,
    /// Square Lobatto collocation of the formal adjoint.
    pub at_h: ModeOp<R>,
    /// `A` collocated at the first-kind Chebyshev points (double, Poisson).
    pub e: ModeOp<R>,
    pub et: ModeOp<R>,
    pub collar: [CollarData<R>; 2],
    pub green_defect_bound: R,
    pub ellipticity_margin: R,
    pub max_j_condition: R,
    pub self_adjoint_defect: R,
}

impl<R: Real> AssembledOperator<R> {
    pub fn is_coupled(&self) -> bool {
        self.e.is_coupled()
    }
}

type CoeffFn<'a, R> = dyn Fn(R, R) -> FirstOrderCoeffs<R> + Sync + 'a;

/// Collocates `J∂_x + G∂_θ + H` at the abscissae `xs`, where `interp` maps
/// Lobatto values to values at `xs` (identity when `None`) and `deriv` maps
/// Lobatto values to derivatives at `xs`.
pub fn collocate_first_order<R: Real>(
    disc: &Discretization<R>,
    xs: &[R],
    interp: Option<&DMatrix<R>>,
    deriv: &DMatrix<R>,
    coeffs: &CoeffFn<'_, R>,
    coupled: bool,
) -> ModeOp<R> {
    let n = disc.n_slots();
    let nx = disc.n_x();
    let k = disc.rank();
    let nr = xs.len();
    let ival = |r: usize, i: usize| -> R {
        match interp {
            Some(m) => m[(r, i)],
            None => {
                if r == i {
                    R::one()
                } else {
                    R::zero()
                }
            }
        }
    };
    let rows = nr * k;
    let cols = nx * k;
    if !coupled {
        let vals: Vec<FirstOrderCoeffs<R>> = xs.iter().map(|&x| coeffs(x, R::zero())).collect();
        let blocks: Vec<CMat<R>> = (0..n)
            .into_par_iter()
            .map(|s| {
                let mut blk = CMat::<R>::zeros(rows, cols);
                for (r, v) in vals.iter().enumerate() {
                    let mut row = CMat::<R>::zeros(k, cols);
                    let gh = &v[1] * cplx(R::zero(), disc.wavenumbers[s]) + &v[2];
                    for i in 0..nx {
                        let d = deriv[(r, i)];
                        let w = ival(r, i);
                        for a in 0..k {
                            for b in 0..k {
                                row[(a, i * k + b)] = v[0][(a, b)].scale(d) + gh[(a, b)].scale(w);
                            }
                        }
                    }
                    blk.view_mut((r * k, 0), (k, cols)).copy_from(&row);
                }
                blk
            })
            .collect();
        return ModeOp::per_slot(blocks);
    }
    // hats[r][q][d]: Fourier coefficient d of coefficient q at row r
    let hats: Vec<[Vec<CMat<R>>; 3]> = xs
        .par_iter()
        .map(|&x| {
            let samples: Vec<FirstOrderCoeffs<R>> =
                disc.theta_nodes.iter().map(|&th| coeffs(x, th)).collect();
            let pick = |q: usize| -> Vec<CMat<R>> {
                let s: Vec<CMat<R>> = samples.iter().map(|c| c[q].clone()).collect();
                disc.theta_coefficients(&s)
            };
            [pick(0), pick(1), pick(2)]
        })
        .collect();
    let mut full = CMat::<R>::zeros(n * rows, n * cols);
    let strips: Vec<CMat<R>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut strip = CMat::<R>::zeros(rows, n * cols);
            let mut tmp = CMat::<R>::zeros(rows, cols);
            for p in 0..n {
                let d = disc.slot_diff(s, p);
                tmp.fill(cplx(R::zero(), R::zero()));
                for r in 0..nr {
                    let jgh = [&hats[r][0][d], &hats[r][1][d], &hats[r][2][d]];
                    let gh = jgh[1] * cplx(R::zero(), disc.wavenumbers[p]) + jgh[2];
                    for i in 0..nx {
                        let dv = deriv[(r, i)];
                        let v = ival(r, i);
                        for a in 0..k {
                            for b in 0..k {
                                tmp[(r * k + a, i * k + b)] =
                                    jgh[0][(a, b)].scale(dv) + gh[(a, b)].scale(v);
                            }
                        }
                    }
                }
                strip.view_mut((0, p * cols), (rows, cols)).copy_from(&tmp);
            }
            strip
        })
        .collect();
    for (s, strip) in strips.into_iter().enumerate() {
        full.view_mut((s * rows, 0), (rows, n * cols)).copy_from(&strip);
    }
    ModeOp::coupled(n, rows, cols, full)
}

fn check_nodes<R: Real>(op: &Operator<R>, disc: &Discretization<R>) -> Result<(R, R)> {
    let n_angles = 32;
    let nodes: Vec<(R, R)> = disc
        .x_nodes
        .iter()
        .flat_map(|&x| disc.theta_nodes.iter().map(move |&t| (x, t)))
        .collect();
    let per_node: Vec<Result<(R, R)>> = nodes
        .par_iter()
        .map(|&(x, th)| {
            let j = op.j.eval(x, th);
            let sv = singular_values(&j);
            let smin = *sv.last().unwrap();
            let cond = if smin > R::zero() { sv[0] / smin } else { R::max_value().unwrap_or(sv[0]) };
            if smin == R::zero() || cond > lit(1e12) {
                return Err(Error::SingularJ {
                    x: to_f64(x),
                    theta: to_f64(th),
                    cond: to_f64(cond),
                });
            }
            let b1 = op.beta1.eval(x, th);
            let scale = R::one() + crate::linalg::spectral_norm(&b1);
            for lam in eigenvalues(&b1) {
                if lam.im.abs() <= lit::<R>(1e-10) * scale {
                    return Err(Error::Ellipticity(format!(
                        "principal symbol singular at node (x={:.6}, theta={:.6}): beta1 has real eigenvalue {:.6e}",
                        to_f64(x),
                        to_f64(th),
                        to_f64(lam.re)
                    )));
                }
            }
            let mut margin = R::max_value().unwrap_or(lit(1e300));
            for a in 0..n_angles {
                let phi = R::pi() * lit::<R>(a as f64) / lit::<R>(n_angles as f64);
                let (xi, zeta) = (phi.cos(), phi.sin());
                let mut sym = &b1 * cplx(R::zero(), zeta);
                for d in 0..op.k {
                    sym[(d, d)] += cplx(R::zero(), xi);
                }
                let s = &j * sym;
                let sm = *singular_values(&s).last().unwrap();
                if sm < margin {
                    margin = sm;
                }
            }
            if margin <= lit::<R>(1e-10) * sv[0] * scale {
                return Err(Error::Ellipticity(format!(
                    "principal symbol singular at node (x={:.6}, theta={:.6})",
                    to_f64(x),
                    to_f64(th)
                )));
            }
            Ok((margin, cond))
        })
        .collect();
    let mut margin = R::max_value().unwrap_or(lit(1e300));
    let mut cond = R::one();
    for r in per_node {
        let (m, c) = r?;
        margin = margin.min(m);
        cond = cond.max(c);
    }
    Ok((margin, cond))
}

pub fn assemble_operator<R: Real>(
    op: &Operator<R>,
    disc: &Discretization<R>,
) -> Result<AssembledOperator<R>> {
    if disc.rank() != op.k {
        return Err(Error::GeometryMismatch(format!(
            "operator rank {} but discretization rank {}",
            op.k,
            disc.rank()
        )));
    }
    if (to_f64(disc.length) - op.spec.geometry.length).abs() > 1e-12 * op.spec.geometry.length {
        return Err(Error::GeometryMismatch(format!(
            "operator length {} but discretization length {}",
            op.spec.geometry.length,
            to_f64(disc.length)
        )));
    }
    let (ellipticity_margin, max_j_condition) = check_nodes(op, disc)?;
    let coupled = !op.is_theta_constant();
    let fwd = |x: R, th: R| op.coeffs(x, th);
    let adj = |x: R, th: R| op.adjoint_coeffs(x, th);
    let a_h = collocate_first_order(disc, &disc.x_nodes, None, &disc.d_x, &fwd, coupled);
    let at_h = collocate_first_order(disc, &disc.x_nodes, None, &disc.d_x, &adj, coupled);
    let e = collocate_first_order(
        disc,
        &disc.gauss_nodes,
        Some(&disc.interp_gauss),
        &disc.deriv_gauss,
        &fwd,
        coupled,
    );
    let et = collocate_first_order(
        disc,
        &disc.gauss_nodes,
        Some(&disc.interp_gauss),
        &disc.deriv_gauss,
        &adj,
        coupled,
    );
    let collar = [extract_collar(op, disc, 0)?, extract_collar(op, disc, 1)?];
    let mut out = AssembledOperator {
        operator: op.clone(),
        a_h,
        at_h,
        e,
        et,
        collar,
        green_defect_bound: R::zero(),
        ellipticity_margin,
        max_j_condition,
        self_adjoint_defect: op.self_adjoint_defect(disc),
    };
    let traces = trace_and_dual(disc);
    out.green_defect_bound = green_defect(&out, disc, &traces);
    Ok(out)
}

/// Smooth random field `Σ a_q e^{b_q x} e^{i m_q θ}` (per component) in
/// mode space, with `|m_q| ≤ 3` and `b_q ∈ [-1, 1]`.
pub fn smooth_test_field<R: Real>(disc: &Discretization<R>, rng: &mut ChaCha8Rng) -> CVec<R> {
    let mut v = CVec::<R>::zeros(disc.interior_dim());
    for c in 0..disc.rank() {
        for _ in 0..3 {
            let m: i64 = rng.random_range(-3..=3);
            let b: f64 = rng.random_range(-1.0..1.0);
            let a = cplx(lit::<R>(rng.random_range(-1.0..1.0)), lit::<R>(rng.random_range(-1.0..1.0)));
            let s = disc.slot_of_mode(m).expect("n_theta >= 8 resolves |m| <= 3");
            for i in 0..disc.n_x() {
                let x = disc.x_nodes[i];
                v[disc.idx_interior(s, i, c)] += a * (lit::<R>(b) * x).exp();
            }
        }
    }
    v
}

/// `(A s, s') - (s, A^t s') + Σ_sides ∫⟨J₀ ρs, ρs'⟩` for one pair.
pub fn green_defect_pair<R: Real>(
    op: &AssembledOperator<R>,
    disc: &Discretization<R>,
    traces: &TraceSystem<R>,
    s: &CVec<R>,
    sp: &CVec<R>,
) -> Complex<R> {
    let lhs = disc.interior_inner(&op.a_h.apply(s), sp) - disc.interior_inner(s, &op.at_h.apply(sp));
    let mut bdry = cplx(R::zero(), R::zero());
    for side in SIDES {
        let rs = traces.rho_side(side, s);
        let rsp = traces.rho_side(side, sp);
        let j0 = &op.collar[side].j0_modes * rs;
        bdry += j0.dotc(&rsp) * cplx(R::two_pi(), R::zero());
    }
    lhs + bdry
}

/// Largest Green defect over a fixed seeded set of smooth test pairs.
pub fn green_defect<R: Real>(
    op: &AssembledOperator<R>,
    disc: &Discretization<R>,
    traces: &TraceSystem<R>,
) -> R {
    let mut rng = ChaCha8Rng::seed_from_u64(0x61_7265_656e);
    let mut worst = R::zero();
    for _ in 0..4 {
        let s = smooth_test_field(disc, &mut rng);
        let sp = smooth_test_field(disc, &mut rng);
        let d = green_defect_pair(op, disc, traces, &s, &sp).modulus();
        if d > worst {
            worst = d;
        }
    }
    worst
}

#[cfg(test)]
mod tests;
