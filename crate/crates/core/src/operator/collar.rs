//! Collar data `A = J₀(∂_x' + B₀) + C₀ + x'·C₁ + …` at both boundary circles,
//! written in the inward coordinate `x'`, and the boundary-condition checks.

use serde::Serialize;

use super::{BoundaryMorphismSpec, Operator};
use crate::error::{Error, Result};
use crate::geometry::Discretization;
use crate::linalg::{
    eigenvalues, hermitian_eigen, hermitian_function, max_abs, range_basis_dim, riesz_projection,
    singular_values, spectral_norm,
};
use crate::scalar::{cplx, lit, to_f64, CMat, Real};

#[derive(Clone, Debug)]
pub struct CollarData<R: Real> {
    pub side: usize,
    /// `+1` at `x = 0`, `-1` at `x = L` (`x' = L - x`).
    pub inward_sign: R,
    pub x: R,
    /// Per θ node.
    pub j0: Vec<CMat<R>>,
    /// Oriented leading tangential coefficient; `b₀(θ, ζ) = iζ·beta1`.
    pub beta1: Vec<CMat<R>>,
    pub beta0: Vec<CMat<R>>,
    pub c0: Vec<CMat<R>>,
    /// Inward derivative of the tangential part: `∂_x'G` and `∂_x'H`.
    pub c1_first: Vec<CMat<R>>,
    pub c1_zero: Vec<CMat<R>>,
    pub ct0: Vec<CMat<R>>,
    pub ct1_first: Vec<CMat<R>>,
    pub ct1_zero: Vec<CMat<R>>,
    pub t: Vec<CMat<R>>,
    /// Mode-space multiplication by `J₀`, `k N x k N`, ordering `(slot, c)`.
    pub j0_modes: CMat<R>,
    /// Mode-space `B₀ = beta1 ∂_θ + beta0`.
    pub b0_h: CMat<R>,
    pub t_modes: CMat<R>,
}

impl<R: Real> CollarData<R> {
    pub fn b0_symbol(&self, node: usize, zeta: R) -> CMat<R> {
        &self.beta1[node] * cplx(R::zero(), zeta)
    }

    /// `max_θ ‖J₀ + J₀*‖`.
    pub fn j0_skew_defect(&self) -> R {
        self.j0
            .iter()
            .map(|j| max_abs(&(j + j.adjoint())))
            .fold(R::zero(), |a, b| a.max(b))
    }
}

fn boundary_morphism<R: Real>(
    op: &Operator<R>,
    side: usize,
    theta: R,
    j0: &CMat<R>,
) -> Result<CMat<R>> {
    let singular = || Error::SingularT {
        side,
        theta: to_f64(theta),
    };
    let t = match &op.spec.t {
        BoundaryMorphismSpec::InverseJAdjoint => j0.adjoint().try_inverse().ok_or_else(singular)?,
        BoundaryMorphismSpec::JUnitaryPart => {
            let g = j0.adjoint() * j0;
            let (ev, _) = hermitian_eigen(&g);
            if ev[0] <= R::zero() {
                return Err(singular());
            }
            j0 * hermitian_function(&g, |l| R::one() / l.sqrt())
        }
        BoundaryMorphismSpec::Explicit { .. } => {
            let coef = &op.t_explicit.as_ref().expect("parsed with spec")[side];
            coef.eval(R::zero(), theta)
        }
    };
    let sv = singular_values(&t);
    if *sv.last().unwrap() <= lit::<R>(1e-12) * sv[0].max(R::one()) {
        return Err(singular());
    }
    Ok(t)
}

pub fn extract_collar<R: Real>(
    op: &Operator<R>,
    disc: &Discretization<R>,
    side: usize,
) -> Result<CollarData<R>> {
    let sc: R = if side == 0 { R::one() } else { -R::one() };
    let x = if side == 0 { R::zero() } else { disc.length };
    let scc = cplx(sc, R::zero());
    let n = disc.n_slots();
    let mut d = CollarData {
        side,
        inward_sign: sc,
        x,
        j0: Vec::with_capacity(n),
        beta1: Vec::with_capacity(n),
        beta0: Vec::with_capacity(n),
        c0: Vec::with_capacity(n),
        c1_first: Vec::with_capacity(n),
        c1_zero: Vec::with_capacity(n),
        ct0: Vec::with_capacity(n),
        ct1_first: Vec::with_capacity(n),
        ct1_zero: Vec::with_capacity(n),
        t: Vec::with_capacity(n),
        j0_modes: CMat::zeros(0, 0),
        b0_h: CMat::zeros(0, 0),
        t_modes: CMat::zeros(0, 0),
    };
    for &th in &disc.theta_nodes {
        let j = op.j.eval(x, th);
        let j0 = &j * scc;
        let [_, gx, hx] = op.coeffs_dx(x, th);
        let jx = op.j.dx(x, th);
        let c = op.c.eval(x, th);
        d.beta1.push(op.beta1.eval(x, th) * scc);
        d.beta0.push(op.beta0.eval(x, th) * scc);
        d.ct0.push(c.adjoint() - (&jx * scc).adjoint());
        d.c0.push(c);
        let c1f = gx * scc;
        let c1z = hx * scc;
        d.ct1_first.push(-c1f.adjoint());
        d.ct1_zero.push(c1z.adjoint());
        d.c1_first.push(c1f);
        d.c1_zero.push(c1z);
        d.t.push(boundary_morphism(op, side, th, &j0)?);
        d.j0.push(j0);
    }
    d.j0_modes = disc.multiplication_modes(&d.j0);
    d.t_modes = disc.multiplication_modes(&d.t);
    d.b0_h = disc.multiplication_modes(&d.beta1) * disc.d_theta_modes(op.k)
        + disc.multiplication_modes(&d.beta0);
    Ok(d)
}

#[derive(Clone, Debug, Serialize)]
pub struct SlWitness {
    pub side: usize,
    pub theta: f64,
    pub zeta: f64,
    pub sigma_min: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SlReport {
    pub positivity: bool,
    pub sl_pass: bool,
    /// Smallest eigenvalue of the Hermitian part of `J₀*T` over all nodes.
    pub min_positivity_eigenvalue: f64,
    /// Largest `‖J₀*T - (J₀*T)*‖` over all nodes.
    pub positivity_hermitian_defect: f64,
    pub min_sl_sigma: f64,
    pub sl_tolerance: f64,
    pub witnesses: Vec<SlWitness>,
}

/// Relative threshold below which the Šapiro–Lopatinskii map counts as
/// singular.
pub const SL_TOL: f64 = 1e-10;

/// Positivity of `J₀*T` and the Šapiro–Lopatinskii condition: for every θ
/// node and `ζ = ±1` the map `(e₊, e₋) ↦ -J₀^t T e₊ + e₋` on
/// `im P₊(b₀) ⊕ im P₋(b₀*)` is bijective.
pub fn check_ellipticity_and_sl<R: Real>(
    collar: &[CollarData<R>],
    theta_nodes: &[R],
) -> Result<SlReport> {
    let mut rep = SlReport {
        positivity: true,
        sl_pass: true,
        min_positivity_eigenvalue: f64::INFINITY,
        positivity_hermitian_defect: 0.0,
        min_sl_sigma: f64::INFINITY,
        sl_tolerance: SL_TOL,
        witnesses: Vec::new(),
    };
    for cd in collar {
        for (node, &th) in theta_nodes.iter().enumerate() {
            let j0 = &cd.j0[node];
            let t = &cd.t[node];
            let p = j0.adjoint() * t;
            let herm_defect = max_abs(&(&p - p.adjoint()));
            let scale = spectral_norm(&p).max(lit(1e-300));
            let (ev, _) = hermitian_eigen(&((&p + p.adjoint()) * cplx(lit::<R>(0.5), R::zero())));
            rep.positivity_hermitian_defect = rep.positivity_hermitian_defect.max(to_f64(herm_defect));
            rep.min_positivity_eigenvalue = rep.min_positivity_eigenvalue.min(to_f64(ev[0]));
            if herm_defect > lit::<R>(1e-10) * scale || ev[0] <= lit::<R>(1e-12) * scale {
                rep.positivity = false;
            }
            for zeta in [R::one(), -R::one()] {
                let b0 = cd.b0_symbol(node, zeta);
                let nb = spectral_norm(&b0);
                for lam in eigenvalues(&b0) {
                    if lam.re.abs() < lit::<R>(1e-9) * nb || nb == R::zero() {
                        return Err(Error::NoSpectralCutting {
                            theta: to_f64(th),
                            zeta: to_f64(zeta),
                        });
                    }
                }
                let (pp, rp) = riesz_projection(&b0, |z| z.re > R::zero());
                let (pm, rm) = riesz_projection(&b0.adjoint(), |z| z.re < R::zero());
                let k = b0.nrows();
                let sigma = if rp + rm != k {
                    R::zero()
                } else {
                    let up = range_basis_dim(&pp, rp);
                    let um = range_basis_dim(&pm, rm);
                    // -J₀^t T = J₀* T
                    let first = &p * up;
                    let mut m = CMat::<R>::zeros(k, k);
                    m.view_mut((0, 0), (k, rp)).copy_from(&first);
                    m.view_mut((0, rp), (k, rm)).copy_from(&um);
                    let sv = singular_values(&m);
                    *sv.last().unwrap() / sv[0]
                };
                let sf = to_f64(sigma);
                rep.min_sl_sigma = rep.min_sl_sigma.min(sf);
                if sf <= SL_TOL {
                    rep.sl_pass = false;
                    rep.witnesses.push(SlWitness {
                        side: cd.side,
                        theta: to_f64(th),
                        zeta: to_f64(zeta),
                        sigma_min: sf,
                    });
                }
            }
        }
    }
    Ok(rep)
}
