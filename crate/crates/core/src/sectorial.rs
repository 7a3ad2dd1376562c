//! Sectorial (Riesz) projections of tangential operators.
//!
//! `Ω₊ = {c < |λ| < R_max, |arg λ| < π/2 - leg_angle}` is the truncated
//! right sector outside the cut disc and `Ω₋ = -Ω₊`. The positive
//! sectorial projection integrates the regularized resolvent
//! `λ⁻¹(λ - B)⁻¹B` over the counter-clockwise boundary `Γ₊ = ∂Ω₊`; since
//! `0 ∉ Ω₊` the pole at the origin contributes nothing, so no identity
//! term is added. Everything not enclosed by `Γ₊` (the left sector, the
//! cut disc, the imaginary axis) belongs to the complementary family.

use nalgebra::ComplexField;
use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    eigenvalues, gauss_legendre, max_abs, ordered_schur, riesz_exp,
    riesz_projection, signature, spectral_norm,
};
use crate::scalar::{cplx, creal, lit, polar, to_f64, CMat, Real};

const PANEL: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SectorialContour<R: Real> {
    pub cut_radius: R,
    /// Angle between the legs and the imaginary axis.
    pub leg_angle: R,
    pub truncation_radius: R,
    pub n_quad: usize,
    pub quad_tol: R,
    /// Eigenvalues with `|Re λ| <= imag_tol` form the imaginary block `W₀`.
    pub imag_tol: R,
    /// Minimal admissible distance between an eigenvalue and `Γ±`.
    pub gap_tol: R,
}

/// Where an eigenvalue sits relative to the contours.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SpectralClass {
    Plus,
    Minus,
    Imaginary,
}

impl<R: Real> SectorialContour<R> {
    /// Default parameters for a spectrum: `c` is half the smallest
    /// `|Re λ|` off the imaginary axis, `R_max = 4·max(ρ, c)`.
    pub fn from_spectrum(eigs: &[Complex<R>], norm: R) -> Self {
        let imag_tol = lit::<R>(1e-9) * norm;
        let min_re = eigs
            .iter()
            .map(|z| z.re.abs())
            .filter(|&r| r > imag_tol)
            .fold(None, |acc: Option<R>, r| Some(acc.map_or(r, |a| a.min(r))));
        let cut_radius = min_re.map_or(lit(0.5), |m| m * lit(0.5));
        let rho = eigs.iter().fold(R::zero(), |a, z| a.max(z.modulus()));
        Self {
            cut_radius,
            leg_angle: R::frac_pi_6(),
            truncation_radius: lit::<R>(4.0) * rho.max(cut_radius),
            n_quad: 512,
            quad_tol: lit(1e-8),
            imag_tol,
            gap_tol: lit::<R>(1e-8) * rho.max(R::one()),
        }
    }

    pub fn default_for(b: &CMat<R>) -> Self {
        Self::from_spectrum(&eigenvalues(b), spectral_norm(b))
    }

    /// Same contour with a prescribed cut radius (truncation radius kept
    /// above it).
    pub fn with_cut_radius(mut self, c: R) -> Self {
        self.cut_radius = c;
        if self.truncation_radius < lit::<R>(4.0) * c {
            self.truncation_radius = lit::<R>(4.0) * c;
        }
        self
    }

    fn half_opening(&self) -> R {
        R::frac_pi_2() - self.leg_angle
    }

    pub fn in_plus(&self, z: Complex<R>) -> bool {
        let r = z.modulus();
        r > self.cut_radius && r < self.truncation_radius && z.im.atan2(z.re).abs() < self.half_opening()
    }

    pub fn in_minus(&self, z: Complex<R>) -> bool {
        self.in_plus(-z)
    }

    /// Distance from `z` to `Γ₊ = ∂Ω₊`.
    pub fn distance_to_plus(&self, z: Complex<R>) -> R {
        let a = self.half_opening();
        let arc = |rad: R| -> R {
            let phi = z.im.atan2(z.re);
            if phi.abs() <= a {
                (z.modulus() - rad).abs()
            } else {
                let e1 = polar(rad, a);
                let e2 = polar(rad, -a);
                (z - e1).modulus().min((z - e2).modulus())
            }
        };
        let ray = |ang: R| -> R {
            let dir = polar(R::one(), ang);
            let t = (z * dir.conj()).re.max(self.cut_radius).min(self.truncation_radius);
            (z - dir * creal(t)).modulus()
        };
        arc(self.truncation_radius)
            .min(arc(self.cut_radius))
            .min(ray(a))
            .min(ray(-a))
    }

    pub fn distance_to_contours(&self, z: Complex<R>) -> R {
        self.distance_to_plus(z).min(self.distance_to_plus(-z))
    }

    /// Classifies an eigenvalue, rejecting those on a contour or in the
    /// sectors around the imaginary axis outside the cut disc.
    pub fn classify(&self, z: Complex<R>) -> Result<SpectralClass> {
        if z.re.abs() <= self.imag_tol {
            return Ok(SpectralClass::Imaginary);
        }
        if self.distance_to_contours(z) < self.gap_tol {
            return Err(Error::EigenvalueOnContour {
                re: to_f64(z.re),
                im: to_f64(z.im),
            });
        }
        if self.in_plus(z) {
            Ok(SpectralClass::Plus)
        } else if self.in_minus(z) || z.modulus() <= self.cut_radius {
            Ok(SpectralClass::Minus)
        } else {
            Err(Error::ContourNotSeparating {
                re: to_f64(z.re),
                im: to_f64(z.im),
            })
        }
    }

    /// Quadrature nodes `λ_q` and weights `w_q` (including `dλ`) for the
    /// counter-clockwise `Γ₊`: composite Gauss–Legendre panels, uniform on
    /// the arcs and geometrically graded on the legs.
    pub fn nodes(&self) -> Vec<(Complex<R>, Complex<R>)> {
        let panels = (self.n_quad / PANEL).max(8);
        let n_arc = (panels / 8).max(1);
        let n_ray = (panels - 2 * n_arc) / 2;
        let (gx, gw) = gauss_legendre::<R>(PANEL);
        let half: R = lit(0.5);
        let a = self.half_opening();
        let (c, rr) = (self.cut_radius, self.truncation_radius);
        let mut out = Vec::with_capacity(PANEL * (2 * n_arc + 2 * n_ray));
        let mut arc = |rad: R, from: R, to: R| {
            for p in 0..n_arc {
                let lo = from + (to - from) * lit::<R>(p as f64) / lit::<R>(n_arc as f64);
                let hi = from + (to - from) * lit::<R>((p + 1) as f64) / lit::<R>(n_arc as f64);
                for q in 0..PANEL {
                    let phi = (lo + hi) * half + (hi - lo) * half * gx[q];
                    let lam = polar(rad, phi);
                    let w = lam * cplx(R::zero(), (hi - lo) * half * gw[q]);
                    out.push((lam, w));
                }
            }
        };
        arc(rr, -a, a);
        arc(c, a, -a);
        let ratio = (rr / c).powf(R::one() / lit::<R>(n_ray as f64));
        for (ang, inward) in [(a, true), (-a, false)] {
            let dir = polar(R::one(), ang);
            for p in 0..n_ray {
                let r0 = c * ratio.powi(p as i32);
                let r1 = if p + 1 == n_ray { rr } else { c * ratio.powi(p as i32 + 1) };
                let (lo, hi) = if inward { (r1, r0) } else { (r0, r1) };
                for q in 0..PANEL {
                    let r = (lo + hi) * half + (hi - lo) * half * gx[q];
                    out.push((dir * creal(r), dir * creal((hi - lo) * half * gw[q])));
                }
            }
        }
        out
    }
}

/// Region selector for the residue oracle.
#[derive(Clone, Debug)]
pub enum Region<R: Real> {
    Right,
    Left,
    InsideContour(SectorialContour<R>),
}

/// Exact (up to factorization roundoff) Riesz projection from an ordered
/// Schur form.
pub fn spectral_projection_oracle<R: Real>(
    b: &CMat<R>,
    region: &Region<R>,
    gap_tol: R,
) -> Result<CMat<R>> {
    for z in eigenvalues(b) {
        let d = match region {
            Region::Right | Region::Left => z.re.abs(),
            Region::InsideContour(c) => c.distance_to_plus(z),
        };
        if d < gap_tol {
            return Err(Error::EigenvalueOnContour {
                re: to_f64(z.re),
                im: to_f64(z.im),
            });
        }
    }
    Ok(match region {
        Region::Right => riesz_projection(b, |z| z.re > R::zero()).0,
        Region::Left => riesz_projection(b, |z| z.re < R::zero()).0,
        Region::InsideContour(c) => riesz_projection(b, |z| c.in_plus(z)).0,
    })
}

#[derive(Clone, Debug)]
pub struct SpectralSplit<R: Real> {
    /// Quadrature result.
    pub p_plus: CMat<R>,
    pub p_plus_oracle: CMat<R>,
    /// Riesz projection onto the off-axis spectrum outside `Ω₊`.
    pub p_minus: CMat<R>,
    /// Orthogonal projection onto `W₀`.
    pub p0: CMat<R>,
    /// Riesz projection onto `W₀` (along the rest of the spectrum).
    pub p0_riesz: CMat<R>,
    pub w0_basis: CMat<R>,
    pub rank_plus: usize,
    pub rank_minus: usize,
    pub eigenvalues: Vec<Complex<R>>,
    pub classes: Vec<SpectralClass>,
    pub oracle_mismatch: R,
}

impl<R: Real> SpectralSplit<R> {
    pub fn dim_w0(&self) -> usize {
        self.w0_basis.ncols()
    }

    /// `Id - P₊`: the full complementary projection.
    pub fn complement(&self) -> CMat<R> {
        CMat::<R>::identity(self.p_plus.nrows(), self.p_plus.ncols()) - &self.p_plus
    }

    pub fn idempotency_defect(&self) -> R {
        max_abs(&(&self.p_plus * &self.p_plus - &self.p_plus))
    }

    pub fn completeness_defect(&self) -> R {
        let n = self.p_plus.nrows();
        max_abs(&(&self.p_plus + &self.p_minus + &self.p0_riesz - CMat::<R>::identity(n, n)))
    }

    pub fn commutator_defect(&self, b: &CMat<R>) -> R {
        let nb = spectral_norm(b);
        if nb == R::zero() {
            return R::zero();
        }
        spectral_norm(&(&self.p_plus * b - b * &self.p_plus)) / nb
    }
}

/// Quadrature of `(1/2πi)∮_{Γ₊} λ⁻¹(λ - B)⁻¹B dλ`.
pub fn contour_quadrature<R: Real>(b: &CMat<R>, contour: &SectorialContour<R>) -> CMat<R> {
    let n = b.nrows();
    let nodes = contour.nodes();
    let scale = Complex::new(R::zero(), -R::one() / R::two_pi());
    nodes
        .par_iter()
        .map(|&(lam, w)| {
            let mut shifted = -b.clone();
            for i in 0..n {
                shifted[(i, i)] += lam;
            }
            let lu = shifted.lu();
            let x = lu.solve(b).unwrap_or_else(|| CMat::zeros(n, n));
            x * (w / lam)
        })
        .reduce(|| CMat::<R>::zeros(n, n), |a, b| a + b)
        * scale
}

pub fn sectorial_projection<R: Real>(
    b: &CMat<R>,
    contour: &SectorialContour<R>,
) -> Result<SpectralSplit<R>> {
    let eigs = eigenvalues(b);
    let classes = eigs
        .iter()
        .map(|&z| contour.classify(z))
        .collect::<Result<Vec<_>>>()?;
    let p_quad = contour_quadrature(b, contour);
    let plus = |z: Complex<R>| contour.classify(z).ok() == Some(SpectralClass::Plus);
    let minus = |z: Complex<R>| contour.classify(z).ok() == Some(SpectralClass::Minus);
    let imag = |z: Complex<R>| z.re.abs() <= contour.imag_tol;
    let (p_oracle, rank_plus) = riesz_projection(b, plus);
    let (p_minus, rank_minus) = riesz_projection(b, minus);
    let (p0_riesz, _) = riesz_projection(b, imag);
    let s0 = ordered_schur(b, imag);
    let w0_basis = s0.q.columns(0, s0.n_selected).into_owned();
    let p0 = &w0_basis * w0_basis.adjoint();
    let mismatch = spectral_norm(&(&p_quad - &p_oracle));
    let tol = lit::<R>(100.0) * contour.quad_tol * spectral_norm(&p_oracle).max(R::one());
    if !(mismatch <= tol) {
        return Err(Error::ContourUnderResolved {
            mismatch: to_f64(mismatch),
        });
    }
    Ok(SpectralSplit {
        p_plus: p_quad,
        p_plus_oracle: p_oracle,
        p_minus,
        p0,
        p0_riesz,
        w0_basis,
        rank_plus,
        rank_minus,
        eigenvalues: eigs,
        classes,
        oracle_mismatch: mismatch,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QFamily {
    Plus,
    Minus,
}

/// `Q₊(x) = e^{-xB}P₊` for `x >= 0` and `Q₋(x) = e^{-xB}(Id - P₊)` for
/// `x <= 0`, from the ordered-Schur functional calculus.
pub fn q_family<R: Real>(
    b: &CMat<R>,
    contour: &SectorialContour<R>,
    family: QFamily,
    x: R,
) -> Result<CMat<R>> {
    match family {
        QFamily::Plus if x < R::zero() => {
            return Err(Error::Domain("Q+ is defined for x >= 0 only".into()))
        }
        QFamily::Minus if x > R::zero() => {
            return Err(Error::Domain("Q- is defined for x <= 0 only".into()))
        }
        _ => {}
    }
    for z in eigenvalues(b) {
        contour.classify(z)?;
    }
    Ok(match family {
        QFamily::Plus => riesz_exp(b, |z| contour.in_plus(z), -x),
        QFamily::Minus => riesz_exp(b, |z| !contour.in_plus(z), -x),
    })
}

#[derive(Clone, Debug)]
pub struct ImaginaryData<R: Real> {
    pub w0_basis: CMat<R>,
    pub p0: CMat<R>,
    /// `V*(iJ₀)V` for the orthonormal `W₀` basis `V`.
    pub form: CMat<R>,
    pub form_eigenvalues: Vec<R>,
    pub signature: i64,
}

pub fn imaginary_signature_data<R: Real>(
    b0: &CMat<R>,
    j0: &CMat<R>,
    imag_tol: R,
) -> Result<ImaginaryData<R>> {
    let skew = max_abs(&(j0 + j0.adjoint()));
    if skew > lit::<R>(1e-10) * max_abs(j0).max(R::one()) {
        return Err(Error::NotSkew(to_f64(skew)));
    }
    let s = ordered_schur(b0, |z| z.re.abs() <= imag_tol);
    let v = s.q.columns(0, s.n_selected).into_owned();
    let form = v.adjoint() * (j0 * cplx(R::zero(), R::one())) * &v;
    let (sig, vals) = if v.ncols() == 0 {
        (0, vec![])
    } else {
        signature(&form, lit(1e-8))
    };
    Ok(ImaginaryData {
        p0: &v * v.adjoint(),
        w0_basis: v,
        form,
        form_eigenvalues: vals,
        signature: sig,
    })
}
