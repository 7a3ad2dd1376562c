//! Discretized model cylinder `[0, L] x S^1` carrying a rank-`k` bundle.
//!
//! The θ direction is equispaced Fourier collocation, the x direction
//! Chebyshev–Lobatto collocation with the boundary circles as grid lines.
//! Internally every field is stored in *mode space*: Fourier coefficients
//! in θ, nodal values in x, ordered `(slot, x node, component)`. Slots are
//! the Fourier modes in FFT order `0, 1, .., N/2-1, -N/2, .., -1`. With
//! coefficients `f̂_m = (1/N) Σ_j f(θ_j) e^{-imθ_j}` the trapezoid mass in θ
//! becomes `2π` times the Euclidean product of coefficients.

use nalgebra::DMatrix;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cis, creal, lit, CMat, CVec, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub length: f64,
    pub n_theta: usize,
    pub n_x: usize,
    pub rank: usize,
}

impl GeometryConfig {
    pub fn new(length: f64, n_theta: usize, n_x: usize, rank: usize) -> Self {
        Self {
            length,
            n_theta,
            n_x,
            rank,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::Config(format!(
                "length must be positive, got {}",
                self.length
            )));
        }
        if !self.n_theta.is_multiple_of(2) {
            return Err(Error::Config("n_theta must be even".into()));
        }
        if self.n_theta < 8 {
            return Err(Error::Config(format!(
                "n_theta must be at least 8, got {}",
                self.n_theta
            )));
        }
        if self.n_x < 8 {
            return Err(Error::Config(format!(
                "n_x must be at least 8, got {}",
                self.n_x
            )));
        }
        if self.rank == 0 {
            return Err(Error::Config("rank must be at least 1".into()));
        }
        Ok(())
    }
}

/// Boundary circle: `0` is `{0} x S^1`, `1` is `{L} x S^1`.
pub const SIDES: [usize; 2] = [0, 1];

#[derive(Clone, Debug)]
pub struct Discretization<R: Real> {
    pub cfg: GeometryConfig,
    pub length: R,
    pub theta_nodes: Vec<R>,
    /// Chebyshev–Lobatto abscissae on `[0, L]`, ascending.
    pub x_nodes: Vec<R>,
    pub d_x: DMatrix<R>,
    /// Clenshaw–Curtis weights on `x_nodes`.
    pub x_weights: Vec<R>,
    pub theta_weight: R,
    /// Fourier mode index carried by each slot.
    pub modes: Vec<i64>,
    /// Wavenumber used by θ-differentiation. Fields are complex, so the
    /// Nyquist slot carries the genuine mode `e^{-iNθ/2}`.
    pub wavenumbers: Vec<R>,
    /// Chebyshev points of the first kind (`n_x - 1` of them) where the
    /// differential equation is imposed.
    pub gauss_nodes: Vec<R>,
    pub gauss_weights: Vec<R>,
    pub interp_gauss: DMatrix<R>,
    pub deriv_gauss: DMatrix<R>,
    bary: Vec<R>,
    /// Collar width of the extension cutoff.
    pub delta: R,
}

pub fn build_discretization<R: Real>(cfg: &GeometryConfig) -> Result<Discretization<R>> {
    cfg.validate()?;
    let nt = cfg.n_theta;
    let nx = cfg.n_x;
    let length: R = lit(cfg.length);
    let pi = R::pi();
    let half_l = length * lit(0.5);

    let theta_nodes: Vec<R> = (0..nt)
        .map(|j| R::two_pi() * lit::<R>(j as f64) / lit::<R>(nt as f64))
        .collect();
    let modes: Vec<i64> = (0..nt)
        .map(|s| {
            if s < nt / 2 {
                s as i64
            } else {
                s as i64 - nt as i64
            }
        })
        .collect();
    let wavenumbers = modes.iter().map(|&m| lit(m as f64)).collect();

    let nn = nx - 1;
    let t: Vec<R> = (0..nx)
        .map(|j| -(pi * lit::<R>(j as f64) / lit::<R>(nn as f64)).cos())
        .collect();
    let mut x_nodes: Vec<R> = t.iter().map(|&t| half_l * (t + R::one())).collect();
    x_nodes[0] = R::zero();
    x_nodes[nx - 1] = length;

    let bary: Vec<R> = (0..nx)
        .map(|j| {
            let sign = if j % 2 == 0 { R::one() } else { -R::one() };
            if j == 0 || j == nn {
                sign * lit(0.5)
            } else {
                sign
            }
        })
        .collect();

    let mut d_x = DMatrix::<R>::zeros(nx, nx);
    for i in 0..nx {
        let mut diag = R::zero();
        for j in 0..nx {
            if i != j {
                let v = (bary[j] / bary[i]) / (x_nodes[i] - x_nodes[j]);
                d_x[(i, j)] = v;
                diag -= v;
            }
        }
        d_x[(i, i)] = diag;
    }

    let x_weights = clenshaw_curtis::<R>(nn)
        .into_iter()
        .map(|w| w * half_l)
        .collect();

    let ng = nx - 1;
    let (gt, gw) = fejer_first::<R>(ng);
    let gauss_nodes: Vec<R> = gt.iter().map(|&t| half_l * (t + R::one())).collect();
    let gauss_weights: Vec<R> = gw.iter().map(|&w| w * half_l).collect();

    let mut disc = Discretization {
        cfg: cfg.clone(),
        length,
        theta_nodes,
        x_nodes,
        d_x,
        x_weights,
        theta_weight: R::two_pi() / lit::<R>(nt as f64),
        modes,
        wavenumbers,
        gauss_nodes,
        gauss_weights,
        interp_gauss: DMatrix::zeros(0, 0),
        deriv_gauss: DMatrix::zeros(0, 0),
        bary,
        delta: length * lit(0.25),
    };
    let half: R = lit(0.5);
    if half < disc.delta {
        disc.delta = half;
    }
    let mut interp = DMatrix::<R>::zeros(ng, nx);
    for g in 0..ng {
        let row = disc.interpolation_row(disc.gauss_nodes[g]);
        for i in 0..nx {
            interp[(g, i)] = row[i];
        }
    }
    disc.deriv_gauss = &interp * &disc.d_x;
    disc.interp_gauss = interp;
    Ok(disc)
}

/// Clenshaw–Curtis weights for the `n + 1` Chebyshev extreme points on [-1, 1].
fn clenshaw_curtis<R: Real>(n: usize) -> Vec<R> {
    let nf = n as f64;
    let mut w = vec![0.0f64; n + 1];
    let theta: Vec<f64> = (0..=n).map(|j| std::f64::consts::PI * j as f64 / nf).collect();
    let mut v = vec![1.0f64; n.saturating_sub(1)];
    if n.is_multiple_of(2) {
        w[0] = 1.0 / (nf * nf - 1.0);
        w[n] = w[0];
        for k in 1..(n / 2) {
            let kf = k as f64;
            for (ii, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * kf * theta[ii + 1]).cos() / (4.0 * kf * kf - 1.0);
            }
        }
        for (ii, vi) in v.iter_mut().enumerate() {
            *vi -= (nf * theta[ii + 1]).cos() / (nf * nf - 1.0);
        }
    } else {
        w[0] = 1.0 / (nf * nf);
        w[n] = w[0];
        for k in 1..=((n - 1) / 2) {
            let kf = k as f64;
            for (ii, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * kf * theta[ii + 1]).cos() / (4.0 * kf * kf - 1.0);
            }
        }
    }
    for (ii, vi) in v.iter().enumerate() {
        w[ii + 1] = 2.0 * vi / nf;
    }
    w.into_iter().map(lit).collect()
}

/// Fejér's first rule on the `n` Chebyshev points of the first kind,
/// ascending.
fn fejer_first<R: Real>(n: usize) -> (Vec<R>, Vec<R>) {
    let nf = n as f64;
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for g in 0..n {
        let th = std::f64::consts::PI * (2.0 * g as f64 + 1.0) / (2.0 * nf);
        let mut s = 0.0;
        for k in 1..=(n / 2) {
            let kf = k as f64;
            s += (2.0 * kf * th).cos() / (4.0 * kf * kf - 1.0);
        }
        nodes.push(lit(-th.cos()));
        weights.push(lit(2.0 / nf * (1.0 - 2.0 * s)));
    }
    (nodes, weights)
}

impl<R: Real> Discretization<R> {
    pub fn n_slots(&self) -> usize {
        self.cfg.n_theta
    }
    pub fn n_x(&self) -> usize {
        self.cfg.n_x
    }
    pub fn n_gauss(&self) -> usize {
        self.cfg.n_x - 1
    }
    pub fn rank(&self) -> usize {
        self.cfg.rank
    }
    /// Interior unknowns per slot.
    pub fn slot_interior(&self) -> usize {
        self.cfg.n_x * self.cfg.rank
    }
    pub fn slot_boundary(&self) -> usize {
        2 * self.cfg.rank
    }
    pub fn slot_gauss(&self) -> usize {
        (self.cfg.n_x - 1) * self.cfg.rank
    }
    pub fn interior_dim(&self) -> usize {
        self.n_slots() * self.slot_interior()
    }
    pub fn boundary_dim(&self) -> usize {
        self.n_slots() * self.slot_boundary()
    }
    pub fn gauss_dim(&self) -> usize {
        self.n_slots() * self.slot_gauss()
    }
    pub fn idx_interior(&self, slot: usize, i: usize, c: usize) -> usize {
        (slot * self.cfg.n_x + i) * self.cfg.rank + c
    }
    pub fn idx_boundary(&self, slot: usize, side: usize, c: usize) -> usize {
        (slot * 2 + side) * self.cfg.rank + c
    }
    pub fn idx_gauss(&self, slot: usize, g: usize, c: usize) -> usize {
        (slot * (self.cfg.n_x - 1) + g) * self.cfg.rank + c
    }

    /// Slot holding Fourier mode `m`, if it is represented.
    pub fn slot_of_mode(&self, m: i64) -> Option<usize> {
        self.modes.iter().position(|&x| x == m)
    }

    /// Whether the slot carries a fully resolved mode (`|m| < n_theta/2`).
    pub fn is_resolved(&self, slot: usize) -> bool {
        self.modes[slot].unsigned_abs() < (self.cfg.n_theta / 2) as u64
    }

    /// Row vector of barycentric Lagrange interpolation from the Lobatto
    /// grid to the abscissa `x`.
    pub fn interpolation_row(&self, x: R) -> Vec<R> {
        let n = self.x_nodes.len();
        let mut row = vec![R::zero(); n];
        for j in 0..n {
            if x == self.x_nodes[j] {
                row[j] = R::one();
                return row;
            }
        }
        let mut denom = R::zero();
        for j in 0..n {
            let t = self.bary[j] / (x - self.x_nodes[j]);
            row[j] = t;
            denom += t;
        }
        for v in row.iter_mut() {
            *v /= denom;
        }
        row
    }

    /// Fourier differentiation matrix on θ-node samples.
    pub fn d_theta(&self) -> CMat<R> {
        let n = self.n_slots();
        let f = self.dft_forward();
        let mut d = CMat::<R>::zeros(n, n);
        for s in 0..n {
            d[(s, s)] = Complex::new(R::zero(), self.wavenumbers[s]);
        }
        self.dft_inverse() * d * f
    }

    /// `F[s, j] = e^{-i m_s θ_j} / N`.
    pub fn dft_forward(&self) -> CMat<R> {
        let n = self.n_slots();
        let inv_n = R::one() / lit::<R>(n as f64);
        CMat::from_fn(n, n, |s, j| {
            cis(-lit::<R>(self.modes[s] as f64) * self.theta_nodes[j]).scale(inv_n)
        })
    }

    /// `F^{-1}[j, s] = e^{i m_s θ_j}`.
    pub fn dft_inverse(&self) -> CMat<R> {
        let n = self.n_slots();
        CMat::from_fn(n, n, |j, s| {
            cis(lit::<R>(self.modes[s] as f64) * self.theta_nodes[j])
        })
    }

    /// Fourier coefficients `â_d = (1/N) Σ_j a_j e^{-i d θ_j}` of θ-node samples
    /// of a `k x k` matrix function, indexed by slot of `d`.
    pub fn theta_coefficients(&self, samples: &[CMat<R>]) -> Vec<CMat<R>> {
        let n = self.n_slots();
        let inv_n = R::one() / lit::<R>(n as f64);
        (0..n)
            .map(|s| {
                let mut acc = CMat::<R>::zeros(samples[0].nrows(), samples[0].ncols());
                for (j, a) in samples.iter().enumerate() {
                    let ph = cis(-lit::<R>(self.modes[s] as f64) * self.theta_nodes[j]);
                    acc += a * ph;
                }
                acc * creal(inv_n)
            })
            .collect()
    }

    /// Slot index of the mode difference `m_s - m_p` (mod N).
    pub fn slot_diff(&self, s: usize, p: usize) -> usize {
        let n = self.n_slots();
        (s + n - p) % n
    }

    /// Mode-space matrix (`k N x k N`) of multiplication by a θ-dependent
    /// `k x k` matrix given on the θ nodes. Exactly the collocation product.
    pub fn multiplication_modes(&self, samples: &[CMat<R>]) -> CMat<R> {
        let n = self.n_slots();
        let k = samples[0].nrows();
        let hats = self.theta_coefficients(samples);
        let mut out = CMat::<R>::zeros(n * k, n * k);
        for s in 0..n {
            for p in 0..n {
                let h = &hats[self.slot_diff(s, p)];
                out.view_mut((s * k, p * k), (k, k)).copy_from(h);
            }
        }
        out
    }

    /// Mode-space θ-derivative on `k`-vector fields over one circle.
    pub fn d_theta_modes(&self, k: usize) -> CMat<R> {
        let n = self.n_slots();
        let mut out = CMat::<R>::zeros(n * k, n * k);
        for s in 0..n {
            for c in 0..k {
                out[(s * k + c, s * k + c)] = Complex::new(R::zero(), self.wavenumbers[s]);
            }
        }
        out
    }

    /// Per-slot weights `(1 + m^2)^s`.
    pub fn sobolev_weights(&self, s: R) -> Vec<R> {
        self.modes
            .iter()
            .map(|&m| (R::one() + lit::<R>((m * m) as f64)).powf(s))
            .collect()
    }

    /// Mass of the interior quadrature for each mode-space entry
    /// (`2π w_i`), matching the nodal mass `w_i · 2π/N` under the DFT.
    pub fn interior_mass_modes(&self) -> Vec<R> {
        let mut out = Vec::with_capacity(self.interior_dim());
        for _ in 0..self.n_slots() {
            for i in 0..self.n_x() {
                for _ in 0..self.rank() {
                    out.push(R::two_pi() * self.x_weights[i]);
                }
            }
        }
        out
    }

    /// Nodal interior mass `w_i · 2π/N`, nodal ordering `(j, i, c)`.
    pub fn interior_mass_nodal(&self) -> Vec<R> {
        let mut out = Vec::with_capacity(self.interior_dim());
        for _ in 0..self.n_slots() {
            for i in 0..self.n_x() {
                for _ in 0..self.rank() {
                    out.push(self.theta_weight * self.x_weights[i]);
                }
            }
        }
        out
    }

    pub fn interior_inner(&self, a: &CVec<R>, b: &CVec<R>) -> Complex<R> {
        let mut acc = Complex::new(R::zero(), R::zero());
        let n_x = self.n_x();
        let k = self.rank();
        for (idx, (x, y)) in a.iter().zip(b.iter()).enumerate() {
            let i = (idx / k) % n_x;
            acc += x.conj() * y * creal(self.x_weights[i]);
        }
        acc * creal(R::two_pi())
    }

    pub fn boundary_inner(&self, a: &CVec<R>, b: &CVec<R>) -> Complex<R> {
        a.dotc(b) * creal(R::two_pi())
    }

    /// Nodal interior samples, ordering `(j, i, c)`, to mode space.
    pub fn interior_to_modes(&self, nodal: &CVec<R>) -> CVec<R> {
        self.lines_to_modes(nodal, self.slot_interior())
    }

    pub fn interior_from_modes(&self, modes: &CVec<R>) -> CVec<R> {
        self.lines_from_modes(modes, self.slot_interior())
    }

    /// Nodal boundary samples, ordering `(j, side, c)`, to mode space.
    pub fn boundary_to_modes(&self, nodal: &CVec<R>) -> CVec<R> {
        self.lines_to_modes(nodal, self.slot_boundary())
    }

    pub fn boundary_from_modes(&self, modes: &CVec<R>) -> CVec<R> {
        self.lines_from_modes(modes, self.slot_boundary())
    }

    fn lines_to_modes(&self, nodal: &CVec<R>, per: usize) -> CVec<R> {
        let n = self.n_slots();
        let f = self.dft_forward();
        let mut out = CVec::<R>::zeros(n * per);
        for s in 0..n {
            for j in 0..n {
                let w = f[(s, j)];
                for q in 0..per {
                    out[s * per + q] += w * nodal[j * per + q];
                }
            }
        }
        out
    }

    fn lines_from_modes(&self, modes: &CVec<R>, per: usize) -> CVec<R> {
        let n = self.n_slots();
        let fi = self.dft_inverse();
        let mut out = CVec::<R>::zeros(n * per);
        for j in 0..n {
            for s in 0..n {
                let w = fi[(j, s)];
                for q in 0..per {
                    out[j * per + q] += w * modes[s * per + q];
                }
            }
        }
        out
    }

    /// Smooth collar cutoff `φ(x) = exp(1 - 1/(1 - (x/δ)^2))` for `x < δ`.
    pub fn cutoff(&self, x: R) -> R {
        let u = x / self.delta;
        if u.abs() >= R::one() {
            R::zero()
        } else {
            (R::one() - R::one() / (R::one() - u * u)).exp()
        }
    }

    pub fn cutoff_derivative(&self, x: R) -> R {
        let u = x / self.delta;
        if u.abs() >= R::one() {
            R::zero()
        } else {
            let q = R::one() - u * u;
            let two: R = lit(2.0);
            -self.cutoff(x) * two * u / (self.delta * q * q)
        }
    }

    /// Inward collar coordinate of `x` measured from the given side.
    pub fn collar_coordinate(&self, side: usize, x: R) -> R {
        if side == 0 {
            x
        } else {
            self.length - x
        }
    }
}

/// Traces, the mass-dual trace and the collar extension, all in mode space.
#[derive(Clone, Debug)]
pub struct TraceSystem<R: Real> {
    n_slots: usize,
    n_x: usize,
    k: usize,
    x_weights: Vec<R>,
    cutoff_profile: [Vec<R>; 2],
}

pub fn trace_and_dual<R: Real>(disc: &Discretization<R>) -> TraceSystem<R> {
    let profile = |side: usize| -> Vec<R> {
        disc.x_nodes
            .iter()
            .map(|&x| disc.cutoff(disc.collar_coordinate(side, x)))
            .collect()
    };
    TraceSystem {
        n_slots: disc.n_slots(),
        n_x: disc.n_x(),
        k: disc.rank(),
        x_weights: disc.x_weights.clone(),
        cutoff_profile: [profile(0), profile(1)],
    }
}

impl<R: Real> TraceSystem<R> {
    fn node_of_side(&self, side: usize) -> usize {
        if side == 0 {
            0
        } else {
            self.n_x - 1
        }
    }

    /// Per-slot trace matrix (`2k x n_x k`), identical for every slot.
    pub fn rho_block(&self) -> CMat<R> {
        let k = self.k;
        let mut m = CMat::<R>::zeros(2 * k, self.n_x * k);
        for side in SIDES {
            let i = self.node_of_side(side);
            for c in 0..k {
                m[(side * k + c, i * k + c)] = creal(R::one());
            }
        }
        m
    }

    /// Per-slot mass-dual trace `M_int^{-1} ρ^T M_bdry` (`n_x k x 2k`).
    pub fn rho_star_block(&self) -> CMat<R> {
        let mut m = self.rho_block().transpose();
        for side in SIDES {
            let i = self.node_of_side(side);
            for c in 0..self.k {
                m[(i * self.k + c, side * self.k + c)] = creal(R::one() / self.x_weights[i]);
            }
        }
        m
    }

    /// Per-slot extension `e` (`n_x k x 2k`).
    pub fn extension_block(&self) -> CMat<R> {
        let k = self.k;
        let mut m = CMat::<R>::zeros(self.n_x * k, 2 * k);
        for side in SIDES {
            for i in 0..self.n_x {
                for c in 0..k {
                    m[(i * k + c, side * k + c)] = creal(self.cutoff_profile[side][i]);
                }
            }
        }
        m
    }

    fn apply_per_slot(&self, block: &CMat<R>, v: &CVec<R>) -> CVec<R> {
        let (r, c) = block.shape();
        assert_eq!(v.len(), c * self.n_slots, "vector size mismatch");
        let mut out = CVec::<R>::zeros(r * self.n_slots);
        for s in 0..self.n_slots {
            let seg = block * v.rows(s * c, c);
            out.rows_mut(s * r, r).copy_from(&seg);
        }
        out
    }

    pub fn rho(&self, u: &CVec<R>) -> CVec<R> {
        self.apply_per_slot(&self.rho_block(), u)
    }

    /// Trace on one side only, returned as a `k N` vector ordered `(slot, c)`.
    pub fn rho_side(&self, side: usize, u: &CVec<R>) -> CVec<R> {
        let full = self.rho(u);
        let k = self.k;
        CVec::from_fn(self.n_slots * k, |q, _| {
            let (s, c) = (q / k, q % k);
            full[(s * 2 + side) * k + c]
        })
    }

    pub fn rho_star(&self, xi: &CVec<R>) -> CVec<R> {
        self.apply_per_slot(&self.rho_star_block(), xi)
    }

    pub fn extension(&self, xi: &CVec<R>) -> CVec<R> {
        self.apply_per_slot(&self.extension_block(), xi)
    }

    /// `r_+` on stacked `(f_+, f_-)` pairs of interior fields.
    pub fn r_plus(&self, stacked: &CVec<R>) -> CVec<R> {
        let n = self.n_slots * self.n_x * self.k;
        stacked.rows(0, n).into_owned()
    }

    pub fn r_minus(&self, stacked: &CVec<R>) -> CVec<R> {
        let n = self.n_slots * self.n_x * self.k;
        stacked.rows(n, n).into_owned()
    }
}

/// Discrete `L^2_s` norm on boundary circles: the Fourier coefficients
/// weighted by `(1 + n^2)^{s/2}`. `samples` holds one or more circles of
/// θ-node samples, each laid out `(j, c)` with `k = rank` components.
pub fn sobolev_weighted_norm<R: Real>(
    samples: &CVec<R>,
    s: R,
    disc: &Discretization<R>,
) -> Result<R> {
    if s.abs() > R::one() {
        return Err(Error::Domain(format!(
            "Sobolev index {} outside [-1, 1]",
            crate::scalar::to_f64(s)
        )));
    }
    let n = disc.n_slots();
    let k = disc.rank();
    let per_circle = n * k;
    if !samples.len().is_multiple_of(per_circle) || samples.is_empty() {
        return Err(Error::Domain(format!(
            "boundary data length {} is not a multiple of n_theta*k = {}",
            samples.len(),
            per_circle
        )));
    }
    let w = disc.sobolev_weights(s);
    let f = disc.dft_forward();
    let mut acc = R::zero();
    for circle in 0..samples.len() / per_circle {
        for slot in 0..n {
            for c in 0..k {
                let mut hat = Complex::new(R::zero(), R::zero());
                for j in 0..n {
                    hat += f[(slot, j)] * samples[circle * per_circle + j * k + c];
                }
                acc += w[slot] * hat.norm_sqr();
            }
        }
    }
    Ok((acc * R::two_pi()).sqrt())
}

/// Sobolev norm of mode-space boundary data.
pub fn sobolev_norm_modes<R: Real>(v: &CVec<R>, s: R, disc: &Discretization<R>) -> R {
    let w = disc.sobolev_weights(s);
    let per = disc.slot_boundary();
    let mut acc = R::zero();
    for (idx, z) in v.iter().enumerate() {
        acc += w[idx / per] * z.norm_sqr();
    }
    (acc * R::two_pi()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc(l: f64, nt: usize, nx: usize, k: usize) -> Discretization<f64> {
        build_discretization(&GeometryConfig::new(l, nt, nx, k)).unwrap()
    }

    #[test]
    fn fourier_differentiation_is_exact_on_resolved_modes() {
        let d = disc(1.0, 16, 8, 1);
        let dt = d.d_theta();
        for m in [-7i64, -1, 0, 1, 3, 7] {
            let v = CVec::<f64>::from_fn(16, |j, _| cis(m as f64 * d.theta_nodes[j]));
            let dv = &dt * &v;
            for j in 0..16 {
                let expect = Complex::new(0.0, m as f64) * v[j];
                assert!((dv[j] - expect).norm() <= 1e-12, "mode {m}");
            }
        }
    }

    #[test]
    fn interior_mass_integrates_area() {
        let d = disc(2.0, 8, 8, 1);
        let total: f64 = d.interior_mass_nodal().iter().sum();
        assert!((total - 4.0 * std::f64::consts::PI).abs() <= 1e-12);
    }

    #[test]
    fn odd_n_theta_rejected() {
        let err = build_discretization::<f64>(&GeometryConfig::new(1.0, 7, 8, 1)).unwrap_err();
        assert!(err.to_string().contains("n_theta must be even"));
        assert!(build_discretization::<f64>(&GeometryConfig::new(0.0, 8, 8, 1)).is_err());
        assert!(build_discretization::<f64>(&GeometryConfig::new(1.0, 8, 6, 1)).is_err());
        assert!(build_discretization::<f64>(&GeometryConfig::new(1.0, 6, 8, 1)).is_err());
    }

    #[test]
    fn chebyshev_differentiation_exact_on_polynomials() {
        let d = disc(1.5, 8, 10, 1);
        for p in 0..10 {
            let v: Vec<f64> = d.x_nodes.iter().map(|x| x.powi(p)).collect();
            for i in 0..10 {
                let dv: f64 = (0..10).map(|j| d.d_x[(i, j)] * v[j]).sum();
                let exact = if p == 0 { 0.0 } else { p as f64 * d.x_nodes[i].powi(p - 1) };
                assert!((dv - exact).abs() < 1e-10 * (1.0 + exact.abs()), "p={p}");
            }
        }
    }

    #[test]
    fn trace_extension_and_dual() {
        let d = disc(1.0, 16, 12, 1);
        let tr = trace_and_dual(&d);
        // e^{iθ} on {0} x S^1 and zero on {L} x S^1
        let nodal = CVec::<f64>::from_fn(32, |q, _| {
            let (j, side) = (q / 2, q % 2);
            if side == 0 {
                cis(d.theta_nodes[j])
            } else {
                Complex::new(0.0, 0.0)
            }
        });
        let xi = d.boundary_to_modes(&nodal);
        let back = tr.rho(&tr.extension(&xi));
        assert!((back - &xi).norm() < 1e-14);

        let one = CVec::<f64>::from_element(d.interior_dim(), Complex::new(1.0, 0.0));
        let traces = d.boundary_from_modes(&tr.rho(&d.interior_to_modes(&one)));
        assert!(traces.iter().all(|z| (z - Complex::new(1.0, 0.0)).norm() < 1e-13));
    }

    #[test]
    fn sobolev_single_mode() {
        let d = disc(1.0, 16, 8, 1);
        let v = CVec::<f64>::from_fn(16, |j, _| cis(3.0 * d.theta_nodes[j]));
        let norm = sobolev_weighted_norm(&v, 0.5, &d).unwrap();
        let expect = 10f64.powf(0.25) * (2.0 * std::f64::consts::PI).sqrt();
        assert!((norm - expect).abs() < 1e-12);
        assert!(sobolev_weighted_norm(&v, 1.5, &d).is_err());
    }
}
