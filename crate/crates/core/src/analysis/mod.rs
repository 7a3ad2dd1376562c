//! Invariant suites and experiments built on top of the double: projection
//! diagnostics, the direct Cauchy-space oracle, Lagrangian and cobordism
//! checks, the UCP-defect profile, operator metrics and continuity sweeps.

mod metrics;
mod sweep;
mod ucp;

pub use metrics::{operator_metrics, operator_metrics_assembled, MetricReport};
pub use sweep::{continuity_sweep, jump_flags, SweepPoint, SweepReport};
pub use ucp::{ucp_defect_profile, UcpProfile, UcpSample};

use rayon::prelude::*;
use serde::Serialize;

use crate::double::{boundary_op, is_inverse_j_adjoint, CalderonBundle, DoubleOperator};
use crate::error::{Error, Result};
use crate::geometry::{Discretization, TraceSystem, SIDES};
use crate::linalg::{
    hermitian_eigen, max_abs, max_angle_sin, min_angle, nullspace, range_basis, range_basis_dim,
};
use crate::operator::{AssembledOperator, Blocks, ModeOp};
use crate::scalar::{cplx, lit, to_f64, CMat, Real};
use crate::sectorial::imaginary_signature_data;

/// Rank decisions below this singular-value gap ratio are flagged.
pub const MIN_GAP_RATIO: f64 = 10.0;

#[derive(Clone, Debug, Serialize)]
pub struct ProjectionInvariants {
    pub idem_residual: f64,
    pub compl_residual: f64,
    pub sym_residual: f64,
    /// `C±` are expected orthogonal only for `T = (J₀*)⁻¹`.
    pub sym_flagged: bool,
    pub direct_cauchy_angle_sin: Option<f64>,
}

pub fn projection_invariants<R: Real>(
    bundle: &CalderonBundle<R>,
    direct: Option<&DirectCauchySpace<R>>,
) -> ProjectionInvariants {
    let d = &bundle.diagnostics;
    ProjectionInvariants {
        idem_residual: d.idem_residual,
        compl_residual: d.compl_residual,
        sym_residual: d.sym_residual,
        sym_flagged: d.orthogonal_expected,
        direct_cauchy_angle_sin: direct.map(|dc| to_f64(dc.angle_to(&bundle.c_plus))),
    }
}

/// Traces of the discrete nullspace of the interior equations, with the
/// boundary values left free. Bases are orthonormal in the boundary mass
/// inner product up to the constant factor `2π`.
#[derive(Clone, Debug)]
pub struct DirectCauchySpace<R: Real> {
    /// One basis per Fourier slot, or a single global basis when coupled.
    pub bases: Vec<CMat<R>>,
    pub coupled: bool,
    pub min_gap_ratio: R,
}

impl<R: Real> DirectCauchySpace<R> {
    pub fn dim(&self) -> usize {
        self.bases.iter().map(|b| b.ncols()).sum()
    }

    /// Largest principal-angle sine between `im C₊` and this space.
    pub fn angle_to(&self, c_plus: &ModeOp<R>) -> R {
        if self.coupled || c_plus.is_coupled() {
            let full = self.global_basis();
            let range = range_basis_dim(&c_plus.to_dense(), full.ncols());
            return max_angle_sin(&range, &full);
        }
        self.bases
            .par_iter()
            .enumerate()
            .map(|(s, b)| max_angle_sin(&range_basis_dim(&c_plus.slot_block(s), b.ncols()), b))
            .reduce(R::zero, |a, b| a.max(b))
    }

    pub fn global_basis(&self) -> CMat<R> {
        if self.coupled {
            return self.bases[0].clone();
        }
        let rows: usize = self.bases.iter().map(|b| b.nrows()).sum();
        let mut out = CMat::<R>::zeros(rows, self.dim());
        let (mut r, mut c) = (0, 0);
        for b in &self.bases {
            out.view_mut((r, c), b.shape()).copy_from(b);
            r += b.nrows();
            c += b.ncols();
        }
        out
    }
}

pub fn cauchy_space_direct<R: Real>(
    op: &AssembledOperator<R>,
    traces: &TraceSystem<R>,
    rank_tol: R,
) -> Result<DirectCauchySpace<R>> {
    let rho = traces.rho_block();
    let n = op.e.n_slots;
    let trace_of = |basis: &CMat<R>, slots: usize| -> CMat<R> {
        let cols = rho.ncols();
        let mut t = CMat::<R>::zeros(slots * rho.nrows(), basis.ncols());
        for s in 0..slots {
            let part = &rho * basis.rows(s * cols, cols);
            t.rows_mut(s * rho.nrows(), rho.nrows()).copy_from(&part);
        }
        t
    };
    let blocks: Vec<CMat<R>> = match &op.e.blocks {
        Blocks::PerSlot(b) => b.clone(),
        Blocks::Coupled(m) => vec![m.clone()],
    };
    let slots_per_block = if op.e.is_coupled() { n } else { 1 };
    let results: Vec<(CMat<R>, R)> = blocks
        .par_iter()
        .map(|e| {
            let ns = nullspace(e, rank_tol);
            let tr = trace_of(&ns.basis, slots_per_block);
            let (basis, gap_t) = range_basis(&tr, rank_tol);
            (basis, ns.gap_ratio.min(gap_t))
        })
        .collect();
    let min_gap = results
        .iter()
        .map(|r| r.1)
        .fold(lit::<R>(f64::MAX), |a, b| a.min(b));
    if !(min_gap >= lit(MIN_GAP_RATIO)) {
        return Err(Error::RankUnresolved {
            what: "Cauchy space".into(),
            gap: to_f64(min_gap),
        });
    }
    Ok(DirectCauchySpace {
        bases: results.into_iter().map(|r| r.0).collect(),
        coupled: op.e.is_coupled(),
        min_gap_ratio: min_gap,
    })
}

/// `ω(u, v) = ⟨-J₀u, v⟩` on boundary data, represented by the matrix `Ω`
/// with `ω(u, v) = u*Ωv` (mass factor `2π` dropped).
#[derive(Clone, Debug)]
pub struct SymplecticForm<R: Real> {
    pub omega: CMat<R>,
}

impl<R: Real> SymplecticForm<R> {
    pub fn from_collar(op: &AssembledOperator<R>) -> Result<Self> {
        let n = op.e.n_slots;
        let k = op.operator.k;
        for c in &op.collar {
            let d = c.j0_skew_defect();
            if d > lit::<R>(1e-10) {
                return Err(Error::NotSkew(to_f64(d)));
            }
        }
        let j0 = boundary_op([&op.collar[0].j0_modes, &op.collar[1].j0_modes], n, k, true).to_dense();
        Ok(Self {
            omega: -j0.adjoint(),
        })
    }

    pub fn eval(&self, u: &CMat<R>, v: &CMat<R>) -> CMat<R> {
        u.adjoint() * &self.omega * v
    }

    /// `ω(u,v) + conj(ω(v,u))`, zero for a form of this type.
    pub fn skew_defect(&self) -> R {
        max_abs(&(&self.omega + self.omega.adjoint()))
    }

    pub fn min_singular_value(&self) -> R {
        *crate::linalg::singular_values(&self.omega).last().unwrap()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SideCobordism {
    pub side: usize,
    pub dim_w0: usize,
    pub signature: i64,
    pub grading_defect: f64,
    pub anticommutation_defect: f64,
    pub index_b_plus: Option<i64>,
    pub index_gap_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LagrangianReport {
    pub isotropy_residual: f64,
    pub transversality_angle: f64,
    pub dim_plus: usize,
    pub dim_minus: usize,
    pub boundary_dim: usize,
    pub lagrangian: bool,
    pub signature: i64,
    pub index_b_plus: Option<i64>,
    pub sides: Vec<SideCobordism>,
    pub form_min_singular_value: f64,
}

/// Isotropy and transversality of `im C₊`, the signature of `iP₀J₀` on
/// `W₀` and the index of `B⁺` for the grading `α = iJ₀(-J₀²)^{-1/2}`.
pub fn lagrangian_and_cobordism<R: Real>(
    bundle: &CalderonBundle<R>,
    op: &AssembledOperator<R>,
    disc: &Discretization<R>,
    form: &SymplecticForm<R>,
    imag_tol: R,
    rank_tol: R,
) -> Result<LagrangianReport> {
    let sa = op.self_adjoint_defect;
    if sa > lit::<R>(1e-10) {
        return Err(Error::NotSelfAdjoint(to_f64(sa)));
    }
    let n = disc.n_slots();
    let k = disc.rank();
    let bdim = 2 * k * n;
    let cp = bundle.c_plus.to_dense();
    let cm = bundle.c_minus.to_dense();
    let (up, _) = range_basis(&cp, lit(1e-8));
    let (um, _) = range_basis(&cm, lit(1e-8));
    let iso = max_abs(&form.eval(&up, &up));
    let transversal = min_angle(&up, &um);
    let lagrangian = iso <= lit(1e-8)
        && transversal >= lit(1e-3)
        && up.ncols() + um.ncols() == bdim;

    let sides: Vec<SideCobordism> = SIDES
        .iter()
        .map(|&side| {
            let cd = &op.collar[side];
            let b0 = &cd.b0_h;
            let j0 = &cd.j0_modes;
            let imag = imaginary_signature_data(b0, j0, imag_tol)?;
            // grading α = iJ₀(-J₀²)^{-1/2}
            let neg_sq = -(j0 * j0);
            let root_inv = crate::linalg::hermitian_function(&((&neg_sq + neg_sq.adjoint()) * cplx(lit(0.5), R::zero())), |v| {
                R::one() / v.sqrt()
            });
            let alpha = j0 * cplx(R::zero(), R::one()) * root_inv;
            let id = CMat::<R>::identity(alpha.nrows(), alpha.ncols());
            let grading_defect = max_abs(&(&alpha * &alpha - &id));
            let anti = max_abs(&(&alpha * b0 + b0 * &alpha));
            let b0_sym = max_abs(&(b0 - b0.adjoint()));
            let scale = max_abs(b0).max(R::one());
            let (index, gap) = if grading_defect <= lit(1e-10)
                && anti <= lit::<R>(1e-10) * scale
                && b0_sym <= lit::<R>(1e-10) * scale
            {
                let h = (&alpha + alpha.adjoint()) * cplx(lit(0.5), R::zero());
                let (vals, vecs) = hermitian_eigen(&h);
                let plus: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > R::zero()).collect();
                let minus: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] < R::zero()).collect();
                let vp = vecs.select_columns(&plus);
                let vm = vecs.select_columns(&minus);
                let b_plus = vm.adjoint() * b0 * &vp;
                let ker = nullspace(&b_plus, rank_tol);
                let coker = nullspace(&b_plus.adjoint(), rank_tol);
                (
                    Some(ker.dim() as i64 - coker.dim() as i64),
                    ker.gap_ratio.min(coker.gap_ratio),
                )
            } else {
                (None, R::zero())
            };
            Ok(SideCobordism {
                side,
                dim_w0: imag.w0_basis.ncols(),
                signature: imag.signature,
                grading_defect: to_f64(grading_defect),
                anticommutation_defect: to_f64(anti),
                index_b_plus: index,
                index_gap_ratio: to_f64(gap),
            })
        })
        .collect::<Result<_>>()?;
    let index_b_plus = sides
        .iter()
        .map(|s| s.index_b_plus)
        .try_fold(0i64, |acc, v| v.map(|v| acc + v));
    Ok(LagrangianReport {
        isotropy_residual: to_f64(iso),
        transversality_angle: to_f64(transversal),
        dim_plus: up.ncols(),
        dim_minus: um.ncols(),
        boundary_dim: bdim,
        lagrangian,
        signature: sides.iter().map(|s| s.signature).sum(),
        index_b_plus,
        sides,
        form_min_singular_value: to_f64(form.min_singular_value()),
    })
}

/// Whether `T` is the unitary part `J₀|J₀|⁻¹` at every boundary node.
pub fn is_unitary_part<R: Real>(op: &AssembledOperator<R>) -> bool {
    op.collar.iter().all(|c| {
        c.j0.iter().zip(&c.t).all(|(j, t)| {
            let h = j.adjoint() * j;
            let inv_root = crate::linalg::hermitian_function(&h, |v| R::one() / v.sqrt());
            max_abs(&(j * inv_root - t)) <= lit(1e-12)
        })
    })
}

/// Kernel diagnostics of the double that depend on the ghost spaces.
#[derive(Clone, Debug, Serialize)]
pub struct DoubleSummary {
    pub kernel_dim: usize,
    pub rank: usize,
    pub gap_ratio: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub positivity: bool,
    pub inverse_j_adjoint: bool,
}

impl DoubleSummary {
    pub fn of<R: Real>(dbl: &DoubleOperator<R>, op: &AssembledOperator<R>) -> Self {
        Self {
            kernel_dim: dbl.kernel_dim(),
            rank: dbl.rank,
            gap_ratio: to_f64(dbl.gap_ratio),
            sigma_min: to_f64(dbl.sigma_min),
            sigma_max: to_f64(dbl.sigma_max),
            positivity: dbl.positivity,
            inverse_j_adjoint: is_inverse_j_adjoint(op),
        }
    }
}
