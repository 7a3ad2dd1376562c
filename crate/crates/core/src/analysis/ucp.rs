use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Discretization;
use crate::linalg::nullspace;
use crate::operator::{AssembledOperator, Blocks, ModeOp};
use crate::scalar::{creal, lit, to_f64, CMat, Real};

use super::MIN_GAP_RATIO;

#[derive(Clone, Debug, Serialize)]
pub struct UcpSample {
    pub x: f64,
    pub d: usize,
    pub d_adjoint: usize,
    pub gap_ratio: f64,
    pub gap_ratio_adjoint: f64,
    pub conclusive: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct UcpProfile {
    pub samples: Vec<UcpSample>,
    /// `d(0) - d'(0)`, present when the sample at `x = 0` is conclusive.
    pub inner_index: Option<i64>,
    pub monotone: bool,
    pub all_conclusive: bool,
}

/// `dim{u : A_h u = 0, u|Σ(x) = 0}` for one operator block structure.
///
/// The trace map is restricted to `ker A_h` before the rank decision. Traces
/// of decaying and growing modes differ by factors like `e^{|n|L}`, so the
/// restricted matrix is equilibrated first; row and column scalings leave its
/// rank unchanged.
fn defect_at<R: Real>(
    e: &ModeOp<R>,
    disc: &Discretization<R>,
    x: R,
    rank_tol: R,
) -> (usize, R) {
    let k = disc.rank();
    let nx = disc.n_x();
    let row = disc.interpolation_row(x);
    let mut sigma = CMat::<R>::zeros(k, nx * k);
    for (i, &w) in row.iter().enumerate() {
        for c in 0..k {
            sigma[(c, i * k + c)] = creal(w);
        }
    }
    let trace = |basis: &CMat<R>, slots: usize| -> CMat<R> {
        let mut m = CMat::<R>::zeros(slots * k, basis.ncols());
        for s in 0..slots {
            let rows = basis.rows(s * nx * k, nx * k);
            m.view_mut((s * k, 0), (k, basis.ncols()))
                .copy_from(&(&sigma * rows));
        }
        m
    };
    let defect = |blk: &CMat<R>, slots: usize| -> (usize, R) {
        let ker = nullspace(blk, rank_tol);
        if ker.dim() == 0 {
            return (0, ker.gap_ratio);
        }
        let mut m = trace(&ker.basis, slots);
        equilibrate(&mut m);
        let ns = nullspace(&m, rank_tol);
        (ns.dim(), ns.gap_ratio.min(ker.gap_ratio))
    };
    let parts: Vec<(usize, R)> = match &e.blocks {
        Blocks::PerSlot(b) => b.par_iter().map(|blk| defect(blk, 1)).collect(),
        Blocks::Coupled(m) => vec![defect(m, e.n_slots)],
    };
    parts
        .into_iter()
        .fold((0, lit(f64::MAX)), |(d, g), (pd, pg)| (d + pd, g.min(pg)))
}

/// Alternating row and column normalization to unit Euclidean norm.
/// Rows or columns that are exactly zero are left alone.
fn equilibrate<R: Real>(m: &mut CMat<R>) {
    for _ in 0..4 {
        for mut col in m.column_iter_mut() {
            let n = col.norm();
            if n > R::zero() {
                col.unscale_mut(n);
            }
        }
        for mut row in m.row_iter_mut() {
            let n = row.norm();
            if n > R::zero() {
                row.unscale_mut(n);
            }
        }
    }
}

/// Samples the UCP-defect dimension `d(x_j)` of `A` and `d'(x_j)` of `A^t`
/// on the parallel circles `Σ(x_j)`, with barycentric traces off the grid.
pub fn ucp_defect_profile<R: Real>(
    op: &AssembledOperator<R>,
    disc: &Discretization<R>,
    x_samples: &[R],
    rank_tol: R,
) -> Result<UcpProfile> {
    let limit = disc.length * lit(0.75);
    if let Some(x) = x_samples.iter().find(|&&x| x < R::zero() || x > limit) {
        return Err(Error::Domain(format!(
            "UCP sample x = {} outside [0, 3L/4]",
            to_f64(*x)
        )));
    }
    let samples: Vec<UcpSample> = x_samples
        .iter()
        .map(|&x| {
            let (d, g) = defect_at(&op.e, disc, x, rank_tol);
            let (da, ga) = defect_at(&op.et, disc, x, rank_tol);
            UcpSample {
                x: to_f64(x),
                d,
                d_adjoint: da,
                gap_ratio: to_f64(g),
                gap_ratio_adjoint: to_f64(ga),
                conclusive: g >= lit(MIN_GAP_RATIO) && ga >= lit(MIN_GAP_RATIO),
            }
        })
        .collect();
    let mut order: Vec<&UcpSample> = samples.iter().collect();
    order.sort_by(|a, b| a.x.total_cmp(&b.x));
    let monotone = order
        .windows(2)
        .all(|w| w[1].d <= w[0].d && w[1].d_adjoint <= w[0].d_adjoint);
    let inner_index = samples
        .iter()
        .find(|s| s.x == 0.0 && s.conclusive)
        .map(|s| s.d as i64 - s.d_adjoint as i64);
    Ok(UcpProfile {
        all_conclusive: samples.iter().all(|s| s.conclusive),
        samples,
        inner_index,
        monotone,
    })
}
