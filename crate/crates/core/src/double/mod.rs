//! The invertible double `Ã_T = A ⊕ (-A^t)` with the transmission condition
//! `f₋|∂M = T f₊|∂M`, its pseudoinverse, ghost solutions, Poisson operators
//! and Calderón projections, and the sectorial correction formula.
//!
//! Per Fourier slot the unknowns are `(u₊, u₋)`, each `n_x·k` Lobatto
//! values. The rows are `A u₊` and `-A^t u₋` collocated at the `n_x - 1`
//! first-kind Chebyshev points, followed by the `2k` transmission rows
//! `ρu₋ - Tρu₊`. Boundary data `ξ` enter as the transmission jump `-Tξ`,
//! the discrete image of `ρ*J₀ξ`; then `K₊ξ = r₊Ã_T⁻¹(…)`,
//! `K₋ξ = -r₋Ã_T⁻¹(…)`, `C₊ = ρK₊` and `C₋ = T⁻¹ρK₋`.

use nalgebra::ComplexField;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Discretization, TraceSystem, SIDES};
use crate::linalg::{
    gap_ratio, max_abs, ordered_schur, riesz_exp_from_schur, singular_values, spectral_norm,
    svd_sorted, SortedSvd,
};
use crate::operator::{AssembledOperator, ModeOp};
use crate::scalar::{creal, lit, to_f64, CMat, CVec, Real};
use crate::sectorial::{sectorial_projection, SectorialContour};

pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Per-slot (or single coupled) factorization used for the pseudoinverse.
#[derive(Clone, Debug)]
struct Factors<R: Real> {
    svds: Vec<SortedSvd<R>>,
    cutoff: R,
}

impl<R: Real> Factors<R> {
    fn build(blocks: Vec<CMat<R>>, rank_tol: R) -> Self {
        let svds: Vec<SortedSvd<R>> = blocks.par_iter().map(svd_sorted).collect();
        let smax = svds
            .iter()
            .filter_map(|s| s.s.first().copied())
            .fold(R::zero(), |a, b| a.max(b));
        Self {
            svds,
            cutoff: rank_tol * smax,
        }
    }

    fn all_singular_values(&self) -> Vec<R> {
        let mut s: Vec<R> = self.svds.iter().flat_map(|x| x.s.iter().copied()).collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        s
    }

    fn solve_block(&self, b: usize, rhs: &CMat<R>) -> CMat<R> {
        let svd = &self.svds[b];
        let mut c = svd.u.adjoint() * rhs;
        for (i, &s) in svd.s.iter().enumerate() {
            let f = if s > self.cutoff { R::one() / s } else { R::zero() };
            c.row_mut(i).scale_mut(f);
        }
        &svd.v * c
    }

    fn null_block(&self, b: usize) -> CMat<R> {
        let svd = &self.svds[b];
        let rank = svd.s.iter().filter(|&&s| s > self.cutoff).count();
        svd.v.columns(rank, svd.v.ncols() - rank).into_owned()
    }
}

#[derive(Clone, Debug)]
pub struct DoubleOperator<R: Real> {
    pub n_slots: usize,
    pub k: usize,
    pub n_x: usize,
    pub matrix: ModeOp<R>,
    /// `T` on boundary data, `2k` entries per slot ordered `(side, c)`.
    pub t_used: ModeOp<R>,
    pub t_inverse: ModeOp<R>,
    factors: Factors<R>,
    pub rank_tol: R,
    pub rank: usize,
    /// Orthonormal columns spanning the numerical kernel, global ordering.
    pub kernel_basis: CMat<R>,
    pub gap_ratio: R,
    pub sigma_max: R,
    pub sigma_min: R,
    /// Whether `J₀*T` is positive definite (hypothesis of invertibility).
    pub positivity: bool,
}

impl<R: Real> DoubleOperator<R> {
    pub fn unknowns_per_slot(&self) -> usize {
        2 * self.n_x * self.k
    }

    pub fn is_coupled(&self) -> bool {
        self.matrix.is_coupled()
    }

    pub fn kernel_dim(&self) -> usize {
        self.kernel_basis.ncols()
    }

    /// Moore–Penrose solve `Ã_T⁺ rhs` for several right-hand sides.
    pub fn solve(&self, rhs: &CMat<R>) -> CMat<R> {
        let per = self.unknowns_per_slot();
        if self.is_coupled() {
            return self.factors.solve_block(0, rhs);
        }
        let parts: Vec<CMat<R>> = (0..self.n_slots)
            .into_par_iter()
            .map(|s| {
                let r = rhs.rows(s * per, per).into_owned();
                self.factors.solve_block(s, &r)
            })
            .collect();
        let mut out = CMat::<R>::zeros(rhs.nrows(), rhs.ncols());
        for (s, p) in parts.into_iter().enumerate() {
            out.rows_mut(s * per, per).copy_from(&p);
        }
        out
    }

    pub fn singular_values(&self) -> Vec<R> {
        self.factors.all_singular_values()
    }

    /// Explicit `Ã_T⁺`, in the block structure of `matrix`.
    pub fn pseudoinverse(&self) -> ModeOp<R> {
        let explicit = |b: usize| -> CMat<R> {
            let n = self.factors.svds[b].u.nrows();
            self.factors.solve_block(b, &CMat::<R>::identity(n, n))
        };
        if self.is_coupled() {
            let m = explicit(0);
            let per = self.unknowns_per_slot();
            ModeOp::coupled(self.n_slots, per, per, m)
        } else {
            ModeOp::per_slot((0..self.n_slots).into_par_iter().map(explicit).collect())
        }
    }
}

/// Boundary-data operator assembled from per-side mode-space matrices
/// (`k N x k N`, ordering `(slot, c)`).
pub(crate) fn boundary_op<R: Real>(per_side: [&CMat<R>; 2], n: usize, k: usize, coupled: bool) -> ModeOp<R> {
    let block = |s: usize, p: usize| -> CMat<R> {
        let mut b = CMat::<R>::zeros(2 * k, 2 * k);
        for side in SIDES {
            b.view_mut((side * k, side * k), (k, k))
                .copy_from(&per_side[side].view((s * k, p * k), (k, k)));
        }
        b
    };
    if coupled {
        let mut m = CMat::<R>::zeros(2 * k * n, 2 * k * n);
        for s in 0..n {
            for p in 0..n {
                m.view_mut((s * 2 * k, p * 2 * k), (2 * k, 2 * k)).copy_from(&block(s, p));
            }
        }
        ModeOp::coupled(n, 2 * k, 2 * k, m)
    } else {
        ModeOp::per_slot((0..n).map(|s| block(s, s)).collect())
    }
}

fn sub_block<R: Real>(op: &ModeOp<R>, s: usize, p: usize) -> Option<CMat<R>> {
    match &op.blocks {
        crate::operator::Blocks::PerSlot(b) => (s == p).then(|| b[s].clone()),
        crate::operator::Blocks::Coupled(m) => Some(
            m.view((s * op.rows, p * op.cols), (op.rows, op.cols))
                .into_owned(),
        ),
    }
}

pub fn assemble_double<R: Real>(
    op: &AssembledOperator<R>,
    traces: &TraceSystem<R>,
    rank_tol: R,
) -> Result<DoubleOperator<R>> {
    let n = op.e.n_slots;
    let k = op.operator.k;
    let nx = op.e.cols / k;
    let ng = op.e.rows;
    if op.et.rows != ng || op.e.cols != nx * k || op.collar[0].t_modes.nrows() != n * k {
        return Err(Error::GeometryMismatch("operator blocks and collar sizes disagree".into()));
    }
    let coupled = op.e.is_coupled()
        || op
            .operator
            .t_explicit
            .as_ref()
            .is_some_and(|t| t.iter().any(|c| !c.is_theta_constant()));
    let t_used = boundary_op([&op.collar[0].t_modes, &op.collar[1].t_modes], n, k, coupled);
    let t_inv_side: Vec<CMat<R>> = op
        .collar
        .iter()
        .map(|c| {
            c.t_modes.clone().try_inverse().ok_or(Error::SingularT {
                side: c.side,
                theta: f64::NAN,
            })
        })
        .collect::<Result<_>>()?;
    let t_inverse = boundary_op([&t_inv_side[0], &t_inv_side[1]], n, k, coupled);
    let rho = traces.rho_block();
    let per = 2 * nx * k;
    let block = |s: usize, p: usize| -> CMat<R> {
        let mut b = CMat::<R>::zeros(per, per);
        if let Some(e) = sub_block(&op.e, s, p) {
            b.view_mut((0, 0), (ng, nx * k)).copy_from(&e);
        }
        if let Some(et) = sub_block(&op.et, s, p) {
            b.view_mut((ng, nx * k), (ng, nx * k)).copy_from(&(-et));
        }
        if let Some(t) = sub_block(&t_used, s, p) {
            b.view_mut((2 * ng, 0), (2 * k, nx * k)).copy_from(&(-(t * &rho)));
        }
        if s == p {
            b.view_mut((2 * ng, nx * k), (2 * k, nx * k)).copy_from(&rho);
        }
        b
    };
    let (matrix, blocks) = if coupled {
        let mut m = CMat::<R>::zeros(n * per, n * per);
        for s in 0..n {
            for p in 0..n {
                m.view_mut((s * per, p * per), (per, per)).copy_from(&block(s, p));
            }
        }
        (ModeOp::coupled(n, per, per, m.clone()), vec![m])
    } else {
        let b: Vec<CMat<R>> = (0..n).map(|s| block(s, s)).collect();
        (ModeOp::per_slot(b.clone()), b)
    };
    let factors = Factors::build(blocks, rank_tol);
    let svals = factors.all_singular_values();
    let rank = svals.iter().filter(|&&s| s > factors.cutoff).count();
    let mut kernel_cols: Vec<CVec<R>> = Vec::new();
    for b in 0..factors.svds.len() {
        let nb = factors.null_block(b);
        for c in 0..nb.ncols() {
            let mut v = CVec::<R>::zeros(n * per);
            let off = if coupled { 0 } else { b * per };
            v.rows_mut(off, nb.nrows()).copy_from(&nb.column(c));
            kernel_cols.push(v);
        }
    }
    let kernel_basis = if kernel_cols.is_empty() {
        CMat::zeros(n * per, 0)
    } else {
        CMat::from_columns(&kernel_cols)
    };
    let positivity = op.collar.iter().all(|c| {
        c.j0.iter().zip(&c.t).all(|(j, t)| {
            let p = j.adjoint() * t;
            let herm = max_abs(&(&p - p.adjoint())) <= lit::<R>(1e-10) * max_abs(&p);
            let (ev, _) = crate::linalg::hermitian_eigen(&p);
            herm && ev[0] > R::zero()
        })
    });
    Ok(DoubleOperator {
        n_slots: n,
        k,
        n_x: nx,
        matrix,
        t_used,
        t_inverse,
        rank_tol,
        rank,
        gap_ratio: gap_ratio(&svals, rank, rank_tol),
        sigma_max: svals.first().copied().unwrap_or(R::zero()),
        sigma_min: svals.last().copied().unwrap_or(R::zero()),
        kernel_basis,
        factors,
        positivity,
    })
}

/// Bases of `Z₀(A) = {Au = 0, ρu = 0}` and `Z₀(A^t)` (interior fields).
#[derive(Clone, Debug)]
pub struct GhostSpaces<R: Real> {
    pub z_plus: CMat<R>,
    pub z_minus: CMat<R>,
    pub gap_plus: R,
    pub gap_minus: R,
}

impl<R: Real> GhostSpaces<R> {
    pub fn dims(&self) -> (usize, usize) {
        (self.z_plus.ncols(), self.z_minus.ncols())
    }
}

fn stacked_nullspace<R: Real>(
    e: &ModeOp<R>,
    rho: &CMat<R>,
    rank_tol: R,
) -> (CMat<R>, R) {
    let n = e.n_slots;
    let cols = e.cols;
    let stack = |blk: CMat<R>, with_rho: bool| -> CMat<R> {
        let rows = blk.nrows() + if with_rho { rho.nrows() } else { 0 };
        let mut m = CMat::<R>::zeros(rows, blk.ncols());
        m.view_mut((0, 0), blk.shape()).copy_from(&blk);
        if with_rho {
            m.view_mut((blk.nrows(), 0), rho.shape()).copy_from(rho);
        }
        m
    };
    let blocks: Vec<CMat<R>> = if e.is_coupled() {
        let full = e.to_dense();
        let mut rho_full = CMat::<R>::zeros(n * rho.nrows(), n * cols);
        for s in 0..n {
            rho_full
                .view_mut((s * rho.nrows(), s * cols), rho.shape())
                .copy_from(rho);
        }
        let mut m = CMat::<R>::zeros(full.nrows() + rho_full.nrows(), n * cols);
        m.view_mut((0, 0), full.shape()).copy_from(&full);
        m.view_mut((full.nrows(), 0), rho_full.shape()).copy_from(&rho_full);
        vec![m]
    } else {
        (0..n).map(|s| stack(e.slot_block(s), true)).collect()
    };
    let factors = Factors::build(blocks, rank_tol);
    let svals = factors.all_singular_values();
    let rank = svals.iter().filter(|&&s| s > factors.cutoff).count();
    let total = n * cols;
    let mut out: Vec<CVec<R>> = Vec::new();
    for b in 0..factors.svds.len() {
        let nb = factors.null_block(b);
        let off = if e.is_coupled() { 0 } else { b * cols };
        for c in 0..nb.ncols() {
            let mut v = CVec::<R>::zeros(total);
            v.rows_mut(off, nb.nrows()).copy_from(&nb.column(c));
            out.push(v);
        }
    }
    let basis = if out.is_empty() {
        CMat::zeros(total, 0)
    } else {
        CMat::from_columns(&out)
    };
    (basis, gap_ratio(&svals, rank, rank_tol))
}

pub fn ghost_solutions<R: Real>(
    op: &AssembledOperator<R>,
    traces: &TraceSystem<R>,
    rank_tol: R,
) -> Result<GhostSpaces<R>> {
    let rho = traces.rho_block();
    let (z_plus, gap_plus) = stacked_nullspace(&op.e, &rho, rank_tol);
    let (z_minus, gap_minus) = stacked_nullspace(&op.et, &rho, rank_tol);
    for (g, what) in [(gap_plus, "ghost (A)"), (gap_minus, "ghost (A^t)")] {
        if !(g >= lit(10.0)) {
            return Err(Error::RankUnresolved {
                what: what.into(),
                gap: to_f64(g),
            });
        }
    }
    Ok(GhostSpaces {
        z_plus,
        z_minus,
        gap_plus,
        gap_minus,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CalderonTolerances {
    pub idem: f64,
    pub compl: f64,
    pub sym: f64,
    pub ker: f64,
}

impl Default for CalderonTolerances {
    fn default() -> Self {
        Self {
            idem: 1e-8,
            compl: 1e-8,
            sym: 1e-8,
            ker: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CalderonDiagnostics {
    pub idem_residual: f64,
    pub idem_minus_residual: f64,
    pub compl_residual: f64,
    pub sym_residual: f64,
    /// Whether `T = (J₀*)⁻¹`, the case where `C±` are orthogonal.
    pub orthogonal_expected: bool,
    pub kernel_residual: f64,
    /// Largest entry of `C₊` coupling distinct Fourier slots.
    pub mode_coupling: f64,
    pub kernel_dim: usize,
    pub gap_ratio: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

#[derive(Clone, Debug)]
pub struct CalderonBundle<R: Real> {
    pub k_plus: ModeOp<R>,
    pub k_minus: ModeOp<R>,
    pub c_plus: ModeOp<R>,
    pub c_minus: ModeOp<R>,
    pub diagnostics: CalderonDiagnostics,
}

impl<R: Real> CalderonBundle<R> {
    /// `2k x 2k` block of `C₊` on one Fourier slot, ordered `(side, c)`.
    pub fn c_plus_mode(&self, slot: usize) -> CMat<R> {
        self.c_plus.slot_block(slot)
    }
}

fn op_norm<R: Real>(m: &ModeOp<R>) -> R {
    match &m.blocks {
        crate::operator::Blocks::PerSlot(b) => b
            .par_iter()
            .map(|x| spectral_norm(x))
            .reduce(R::zero, |a, b| a.max(b)),
        crate::operator::Blocks::Coupled(x) => spectral_norm(x),
    }
}

fn combine<R: Real>(a: &ModeOp<R>, b: &ModeOp<R>, f: impl Fn(&CMat<R>, &CMat<R>) -> CMat<R>) -> ModeOp<R> {
    match (&a.blocks, &b.blocks) {
        (crate::operator::Blocks::PerSlot(x), crate::operator::Blocks::PerSlot(y)) => {
            ModeOp::per_slot(x.iter().zip(y).map(|(p, q)| f(p, q)).collect())
        }
        _ => {
            let m = f(&a.to_dense(), &b.to_dense());
            ModeOp::coupled(a.n_slots, m.nrows() / a.n_slots, m.ncols() / a.n_slots, m)
        }
    }
}

fn identity_like<R: Real>(a: &ModeOp<R>) -> ModeOp<R> {
    match &a.blocks {
        crate::operator::Blocks::PerSlot(x) => ModeOp::per_slot(
            x.iter()
                .map(|m| CMat::<R>::identity(m.nrows(), m.ncols()))
                .collect(),
        ),
        _ => ModeOp::coupled(
            a.n_slots,
            a.rows,
            a.cols,
            CMat::<R>::identity(a.nrows(), a.ncols()),
        ),
    }
}

/// Whether `T = (J₀*)⁻¹` at every boundary node.
pub fn is_inverse_j_adjoint<R: Real>(op: &AssembledOperator<R>) -> bool {
    op.collar.iter().all(|c| {
        c.j0.iter().zip(&c.t).all(|(j, t)| {
            let p = j.adjoint() * t;
            max_abs(&(p - CMat::<R>::identity(j.nrows(), j.ncols()))) <= lit(1e-12)
        })
    })
}

pub fn calderon<R: Real>(
    dbl: &DoubleOperator<R>,
    op: &AssembledOperator<R>,
    disc: &Discretization<R>,
    traces: &TraceSystem<R>,
    tol: &CalderonTolerances,
) -> Result<CalderonBundle<R>> {
    let n = dbl.n_slots;
    let k = dbl.k;
    let nx = dbl.n_x;
    let per = dbl.unknowns_per_slot();
    let ng = (nx - 1) * k;
    let nb = 2 * k;
    let rho = traces.rho_block();
    // right-hand sides: transmission rows carry -T ξ for every unit ξ
    let t_dense = dbl.t_used.to_dense();
    let mut rhs = CMat::<R>::zeros(n * per, n * nb);
    for s in 0..n {
        for q in 0..nb {
            for col in 0..n * nb {
                rhs[(s * per + 2 * ng + q, col)] = -t_dense[(s * nb + q, col)];
            }
        }
    }
    let sol = if dbl.is_coupled() {
        dbl.solve(&rhs)
    } else {
        // keep per-slot structure: only the slot's own columns are nonzero
        let mut out = CMat::<R>::zeros(n * per, n * nb);
        let parts: Vec<CMat<R>> = (0..n)
            .into_par_iter()
            .map(|s| {
                let r = rhs.view((s * per, s * nb), (per, nb)).into_owned();
                dbl.factors.solve_block(s, &r)
            })
            .collect();
        for (s, p) in parts.into_iter().enumerate() {
            out.view_mut((s * per, s * nb), (per, nb)).copy_from(&p);
        }
        out
    };
    let nxk = nx * k;
    let slot_part = |s: usize, p: usize, minus: bool| -> CMat<R> {
        sol.view((s * per + if minus { nxk } else { 0 }, p * nb), (nxk, nb))
            .into_owned()
    };
    let t_inv = dbl.t_inverse.to_dense();
    let (k_plus, k_minus, c_plus, c_minus) = if dbl.is_coupled() {
        let mut kp = CMat::<R>::zeros(n * nxk, n * nb);
        let mut km = CMat::<R>::zeros(n * nxk, n * nb);
        let mut rp = CMat::<R>::zeros(n * nb, n * nb);
        let mut rm = CMat::<R>::zeros(n * nb, n * nb);
        for s in 0..n {
            for p in 0..n {
                let up = slot_part(s, p, false);
                let um = slot_part(s, p, true);
                rp.view_mut((s * nb, p * nb), (nb, nb)).copy_from(&(&rho * &up));
                rm.view_mut((s * nb, p * nb), (nb, nb)).copy_from(&(&rho * &um));
                kp.view_mut((s * nxk, p * nb), (nxk, nb)).copy_from(&up);
                km.view_mut((s * nxk, p * nb), (nxk, nb)).copy_from(&(-um));
            }
        }
        let cm = -(&t_inv * rm);
        (
            ModeOp::coupled(n, nxk, nb, kp),
            ModeOp::coupled(n, nxk, nb, km),
            ModeOp::coupled(n, nb, nb, rp),
            ModeOp::coupled(n, nb, nb, cm),
        )
    } else {
        let mut kp = Vec::with_capacity(n);
        let mut km = Vec::with_capacity(n);
        let mut cp = Vec::with_capacity(n);
        let mut cm = Vec::with_capacity(n);
        for s in 0..n {
            let up = slot_part(s, s, false);
            let um = slot_part(s, s, true);
            let tinv = dbl.t_inverse.slot_block(s);
            cp.push(&rho * &up);
            cm.push(-(tinv * (&rho * &um)));
            kp.push(up);
            km.push(-um);
        }
        (
            ModeOp::per_slot(kp),
            ModeOp::per_slot(km),
            ModeOp::per_slot(cp),
            ModeOp::per_slot(cm),
        )
    };
    let id = identity_like(&c_plus);
    let idem = op_norm(&combine(&c_plus, &c_plus, |a, _| a * a - a));
    let idem_m = op_norm(&combine(&c_minus, &c_minus, |a, _| a * a - a));
    let compl = op_norm(&combine(&combine(&c_plus, &c_minus, |a, b| a + b), &id, |a, b| a - b));
    let sym = op_norm(&combine(&c_plus, &c_plus, |a, _| a - a.adjoint()));
    let mode_coupling = if c_plus.is_coupled() {
        let d = c_plus.to_dense();
        let mut worst = R::zero();
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                if i / nb != j / nb {
                    worst = worst.max(d[(i, j)].modulus());
                }
            }
        }
        worst
    } else {
        R::zero()
    };
    let kernel_residual = kernel_residual(op, disc, &k_plus);
    let orthogonal_expected = is_inverse_j_adjoint(op);
    let diagnostics = CalderonDiagnostics {
        idem_residual: to_f64(idem),
        idem_minus_residual: to_f64(idem_m),
        compl_residual: to_f64(compl),
        sym_residual: to_f64(sym),
        orthogonal_expected,
        kernel_residual: to_f64(kernel_residual),
        mode_coupling: to_f64(mode_coupling),
        kernel_dim: dbl.kernel_dim(),
        gap_ratio: to_f64(dbl.gap_ratio),
        sigma_min: to_f64(dbl.sigma_min),
        sigma_max: to_f64(dbl.sigma_max),
    };
    let bad = diagnostics.kernel_dim == 0
        && (diagnostics.idem_residual > 100.0 * tol.idem
            || diagnostics.compl_residual > 100.0 * tol.compl
            || (orthogonal_expected && diagnostics.sym_residual > 100.0 * tol.sym)
            || !diagnostics.idem_residual.is_finite());
    if bad {
        return Err(Error::Inconsistent(
            serde_json::to_string(&diagnostics).unwrap_or_default(),
        ));
    }
    Ok(CalderonBundle {
        k_plus,
        k_minus,
        c_plus,
        c_minus,
        diagnostics,
    })
}

/// `max ‖A_h K₊ξ‖/‖ξ‖` over nodes at distance more than `δ` from ∂M.
fn kernel_residual<R: Real>(
    op: &AssembledOperator<R>,
    disc: &Discretization<R>,
    k_plus: &ModeOp<R>,
) -> R {
    let k = disc.rank();
    let keep: Vec<usize> = (0..disc.n_x())
        .filter(|&i| {
            let x = disc.x_nodes[i];
            x > disc.delta && disc.length - x > disc.delta
        })
        .collect();
    let weights: Vec<R> = disc.x_weights.iter().map(|&w| (R::two_pi() * w).sqrt()).collect();
    let restrict = |m: &CMat<R>, rows_per: usize, n_blocks: usize| -> CMat<R> {
        let nx = disc.n_x();
        let mut out = CMat::<R>::zeros(n_blocks * keep.len() * k, m.ncols());
        for b in 0..n_blocks {
            for (q, &i) in keep.iter().enumerate() {
                for c in 0..k {
                    let src = b * rows_per + i * k + c;
                    let dst = (b * keep.len() + q) * k + c;
                    out.row_mut(dst).copy_from(&(m.row(src) * creal(weights[i])));
                }
            }
        }
        let _ = nx;
        out
    };
    let nb = 2 * k;
    let scale = R::one() / R::two_pi().sqrt();
    match (&op.a_h.blocks, &k_plus.blocks) {
        (crate::operator::Blocks::PerSlot(a), crate::operator::Blocks::PerSlot(kp)) => a
            .par_iter()
            .zip(kp.par_iter())
            .map(|(a, kp)| spectral_norm(&restrict(&(a * kp), disc.n_x() * k, 1)) * scale)
            .reduce(R::zero, |x, y| x.max(y)),
        _ => {
            let prod = op.a_h.to_dense() * k_plus.to_dense();
            let _ = nb;
            spectral_norm(&restrict(&prod, disc.n_x() * k, disc.n_slots())) * scale
        }
    }
}

/// Largest relative symmetric defect `|⟨Df, g⟩ - ⟨f, Dg⟩|` of the square
/// collocation double `D(f₊, f₋) = (A_h f₊, -A^t_h f₋)` over smooth test
/// pairs satisfying the transmission condition.
pub fn symmetric_defect<R: Real>(
    op: &AssembledOperator<R>,
    dbl: &DoubleOperator<R>,
    disc: &Discretization<R>,
    traces: &TraceSystem<R>,
) -> R {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    let k = disc.rank();
    let mut field = || -> (CVec<R>, CVec<R>) {
        let fp = crate::operator::smooth_test_field(disc, &mut rng);
        let h = crate::operator::smooth_test_field(disc, &mut rng);
        let jump = dbl.t_used.apply(&traces.rho(&fp)) - traces.rho(&h);
        // polynomial lifting (1 - x/L)·jump₀ + (x/L)·jump_L
        let mut fm = h;
        for s in 0..disc.n_slots() {
            for i in 0..disc.n_x() {
                let t = disc.x_nodes[i] / disc.length;
                for c in 0..k {
                    let j0 = jump[disc.idx_boundary(s, 0, c)];
                    let jl = jump[disc.idx_boundary(s, 1, c)];
                    fm[disc.idx_interior(s, i, c)] += j0 * creal(R::one() - t) + jl * creal(t);
                }
            }
        }
        (fp, fm)
    };
    let apply = |f: &(CVec<R>, CVec<R>)| -> (CVec<R>, CVec<R>) {
        (op.a_h.apply(&f.0), -op.at_h.apply(&f.1))
    };
    let inner = |a: &(CVec<R>, CVec<R>), b: &(CVec<R>, CVec<R>)| {
        disc.interior_inner(&a.0, &b.0) + disc.interior_inner(&a.1, &b.1)
    };
    let mut worst = R::zero();
    for _ in 0..4 {
        let f = field();
        let g = field();
        let df = apply(&f);
        let dg = apply(&g);
        let d = (inner(&df, &g) - inner(&f, &dg)).modulus();
        let scale = inner(&df, &df).re.sqrt() * inner(&g, &g).re.sqrt()
            + inner(&f, &f).re.sqrt() * inner(&dg, &dg).re.sqrt();
        worst = worst.max(d / scale);
    }
    worst
}

/// Largest principal-angle sine between the kernel of `Ã_T` and
/// `Z₀(A) ⊕ Z₀(A^t)` embedded as `(z, 0)` and `(0, z')`.
pub fn kernel_ghost_angle<R: Real>(
    kernel: &CMat<R>,
    ghosts: &GhostSpaces<R>,
    n_slots: usize,
    per_slot_interior: usize,
) -> R {
    let total = 2 * n_slots * per_slot_interior;
    let (dp, dm) = ghosts.dims();
    let mut g = CMat::<R>::zeros(total, dp + dm);
    let embed = |g: &mut CMat<R>, src: &CMat<R>, col0: usize, minus: bool| {
        for c in 0..src.ncols() {
            for r in 0..src.nrows() {
                let (s, q) = (r / per_slot_interior, r % per_slot_interior);
                let row = s * 2 * per_slot_interior + if minus { per_slot_interior } else { 0 } + q;
                g[(row, col0 + c)] = src[(r, c)];
            }
        }
    };
    embed(&mut g, &ghosts.z_plus, 0, false);
    embed(&mut g, &ghosts.z_minus, dp, true);
    let gq = if g.ncols() > 0 { g.clone().qr().q() } else { g };
    crate::linalg::max_angle_sin(kernel, &gq)
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeProfileEntry {
    pub mode: i64,
    pub norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrectionReport {
    pub residual: f64,
    pub mode_limit: i64,
    /// `‖(C₊ - P₊)|mode n‖` on every fully resolved mode.
    pub profile: Vec<ModeProfileEntry>,
    pub commutator_norm: f64,
    pub commutator_zeroth_order: bool,
    pub cond_p_plus_p_minus_adj: f64,
    pub quadrature_oracle_mismatch: f64,
}

/// Compares `C₊` with `(P₊ - ρ₊Ã_T⁻¹S(A,T))(P₊ + P₋*)⁻¹` on modes
/// `|n| <= mode_limit`, where `S(A,T) = Ã_T w` is evaluated from the closed
/// form of the collar parametrix `w₊ = φ(x')Q₊(x')η`,
/// `w₋ = -Tφ(x')Q₋(-x')*η`.
pub fn correction_formula_check<R: Real>(
    dbl: &DoubleOperator<R>,
    op: &AssembledOperator<R>,
    disc: &Discretization<R>,
    bundle: &CalderonBundle<R>,
    contours: Option<[SectorialContour<R>; 2]>,
    mode_limit: i64,
) -> Result<CorrectionReport> {
    let n = disc.n_slots();
    let k = disc.rank();
    let kn = n * k;
    let nx = disc.n_x();
    let ng = nx - 1;
    let per = dbl.unknowns_per_slot();
    let nb = 2 * k;
    let oper = &op.operator;

    // commutator [β₁*, J₀*T] of leading symbols
    let mut comm = R::zero();
    for cd in &op.collar {
        for (node, (j, t)) in cd.j0.iter().zip(&cd.t).enumerate() {
            let p = j.adjoint() * t;
            let b = cd.beta1[node].adjoint();
            comm = comm.max(max_abs(&(&b * &p - &p * &b)));
        }
    }
    let comm_ok = comm <= lit::<R>(1e-10);
    if !comm_ok {
        return Err(Error::Domain(format!(
            "correction formula requires [B0^t, J0*T] of order 0 (leading commutator {:.3e})",
            to_f64(comm)
        )));
    }

    let d_theta = disc.d_theta_modes(k);
    let mut s_full = CMat::<R>::zeros(n * per, n * nb);
    let mut p_plus_eta = CMat::<R>::zeros(n * nb, n * nb);
    let mut p_plus_b = CMat::<R>::zeros(n * nb, n * nb);
    let mut worst_cond = R::zero();
    let mut mismatch = R::zero();
    for side in SIDES {
        let cd = &op.collar[side];
        let b0 = &cd.b0_h;
        let contour = match &contours {
            Some(c) => c[side].clone(),
            None => SectorialContour::default_for(b0),
        };
        let split = sectorial_projection(b0, &contour)?;
        mismatch = mismatch.max(split.oracle_mismatch);
        let pp = split.p_plus.clone();
        let pm = CMat::<R>::identity(kn, kn) - &pp;
        let m = &pp + pm.adjoint();
        let sv = singular_values(&m);
        let cond = sv[0] / *sv.last().unwrap();
        worst_cond = worst_cond.max(cond);
        if !(cond <= lit(1e8)) {
            return Err(Error::IllConditioned(to_f64(cond)));
        }
        let minv = m.try_inverse().ok_or(Error::IllConditioned(f64::INFINITY))?;
        // columns: ξ restricted to this side, embedded in (slot, side, c)
        let embed_cols = |mat: &CMat<R>| -> CMat<R> {
            let mut out = CMat::<R>::zeros(mat.nrows(), n * nb);
            for p in 0..n {
                for c in 0..k {
                    out.set_column(p * nb + side * k + c, &mat.column(p * k + c));
                }
            }
            out
        };
        let eta = embed_cols(&minv); // kN x (n·nb)
        let pe = &pp * &eta;
        for s in 0..n {
            for c in 0..k {
                p_plus_eta.set_row(s * nb + side * k + c, &pe.row(s * k + c));
                for p in 0..n {
                    for c2 in 0..k {
                        p_plus_b[(s * nb + side * k + c, p * nb + side * k + c2)] = pp[(s * k + c, p * k + c2)];
                    }
                }
            }
        }
        let sc = cd.inward_sign;
        let plus_schur = ordered_schur(b0, |z| contour.in_plus(z));
        let minus_schur = ordered_schur(b0, |z| !contour.in_plus(z));
        let t_modes = &cd.t_modes;
        let b0_adj = b0.adjoint();
        let rows: Vec<(usize, CMat<R>, CMat<R>)> = (0..ng)
            .into_par_iter()
            .filter_map(|g| {
                let x = disc.gauss_nodes[g];
                let xp = disc.collar_coordinate(side, x);
                if xp >= disc.delta {
                    return None;
                }
                let phi = creal(disc.cutoff(xp));
                let dphi = creal(disc.cutoff_derivative(xp));
                let q_plus = riesz_exp_from_schur(&plus_schur, -xp);
                let q_minus_adj = riesz_exp_from_schur(&minus_schur, xp).adjoint();
                let wp = &q_plus * phi;
                let dwp = (&q_plus * dphi - b0 * &q_plus * phi) * creal(sc);
                let wm = -(t_modes * &q_minus_adj) * phi;
                let dwm = -(t_modes * (&q_minus_adj * dphi + &q_minus_adj * &b0_adj * phi)) * creal(sc);
                let sample = |f: &dyn Fn(R) -> [CMat<R>; 3]| -> [CMat<R>; 3] {
                    let vals: Vec<[CMat<R>; 3]> = disc.theta_nodes.iter().map(|&th| f(th)).collect();
                    let pick = |q: usize| {
                        let s: Vec<CMat<R>> = vals.iter().map(|v| v[q].clone()).collect();
                        disc.multiplication_modes(&s)
                    };
                    [pick(0), pick(1), pick(2)]
                };
                let [j, gg, h] = sample(&|th| oper.coeffs(x, th));
                let [jt, gt, ht] = sample(&|th| oper.adjoint_coeffs(x, th));
                let sp = &j * &dwp + &gg * &d_theta * &wp + &h * &wp;
                let sm = -(&jt * &dwm + &gt * &d_theta * &wm + &ht * &wm);
                Some((g, sp, sm))
            })
            .collect();
        for (g, sp, sm) in rows {
            let sp = &sp * &eta;
            let sm = &sm * &eta;
            for s in 0..n {
                for c in 0..k {
                    let r_plus = s * per + g * k + c;
                    let r_minus = s * per + ng * k + g * k + c;
                    let src = s * k + c;
                    for col in 0..n * nb {
                        s_full[(r_plus, col)] += sp[(src, col)];
                        s_full[(r_minus, col)] += sm[(src, col)];
                    }
                }
            }
        }
    }
    let z = dbl.solve(&s_full);
    let mut rho_z = CMat::<R>::zeros(n * nb, n * nb);
    for s in 0..n {
        for c in 0..k {
            rho_z.set_row(s * nb + c, &z.row(s * per + c));
            rho_z.set_row(s * nb + k + c, &z.row(s * per + (nx - 1) * k + c));
        }
    }
    let c_corr = p_plus_eta - rho_z;
    let c_plus = bundle.c_plus.to_dense();
    let keep: Vec<usize> = (0..n)
        .filter(|&s| disc.modes[s].abs() <= mode_limit)
        .flat_map(|s| (0..nb).map(move |q| s * nb + q))
        .collect();
    let diff = &c_plus - &c_corr;
    let restricted = CMat::<R>::from_fn(keep.len(), keep.len(), |i, j| diff[(keep[i], keep[j])]);
    let residual = spectral_norm(&restricted);
    let mut profile: Vec<ModeProfileEntry> = (0..n)
        .filter(|&s| disc.is_resolved(s))
        .map(|s| {
            let d = (&c_plus - &p_plus_b).view((s * nb, s * nb), (nb, nb)).into_owned();
            ModeProfileEntry {
                mode: disc.modes[s],
                norm: to_f64(spectral_norm(&d)),
            }
        })
        .collect();
    profile.sort_by_key(|e| e.mode);
    Ok(CorrectionReport {
        residual: to_f64(residual),
        mode_limit,
        profile,
        commutator_norm: to_f64(comm),
        commutator_zeroth_order: comm_ok,
        cond_p_plus_p_minus_adj: to_f64(worst_cond),
        quadrature_oracle_mismatch: to_f64(mismatch),
    })
}

/// Least-squares slope of `ln ‖(C₊ - P₊)|mode n‖` against `|n|` over
/// `lo <= |n| <= hi`.
pub fn profile_slope(profile: &[ModeProfileEntry], lo: i64, hi: i64) -> f64 {
    let pts: Vec<(f64, f64)> = profile
        .iter()
        .filter(|e| e.mode.abs() >= lo && e.mode.abs() <= hi && e.norm > 0.0)
        .map(|e| (e.mode.abs() as f64, e.norm.ln()))
        .collect();
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (m * sxy - sx * sy) / (m * sxx - sx * sx)
}

#[cfg(test)]
mod tests;
