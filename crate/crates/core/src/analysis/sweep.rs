use rayon::prelude::*;
use serde::Serialize;

use crate::double::CalderonTolerances;
use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::operator::{Blocks, ModeOp, OperatorSpec};
use crate::pipeline::Pipeline;
use crate::scalar::{creal, CMat};
use crate::sectorial::{sectorial_projection, SectorialContour};

use super::metrics::operator_metrics_assembled;

/// A step is a jump when it exceeds this multiple of the median of its
/// neighbouring steps (and the absolute floor below).
pub const JUMP_FACTOR: f64 = 10.0;
pub const JUMP_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub s: f64,
    /// `‖C₊(s)‖` in the `L²_σ` operator norm.
    pub c_plus_norm: f64,
    /// `‖C₊(s) - C₊(s₀)‖_σ`.
    pub distance_from_start: f64,
    /// Quantities of the step from the previous grid point (0 at `s₀`).
    pub step_c_plus: f64,
    pub step_p_plus: f64,
    pub step_d0: f64,
    pub step_d_str: f64,
    pub step_ratio: f64,
    pub step_resolvent: f64,
    pub resolvent_ratio: f64,
    pub jump_c_plus: bool,
    pub jump_p_plus: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub sobolev_s: f64,
    pub cut_radius: Option<f64>,
    pub points: Vec<SweepPoint>,
    /// Indices `i` of points whose step from `i - 1` was flagged.
    pub jumps_c_plus: Vec<usize>,
    pub jumps_p_plus: Vec<usize>,
    pub max_step_ratio: f64,
    pub step_ratio_spread: f64,
    pub max_resolvent_ratio: f64,
    pub resolvent_ratio_spread: f64,
    pub max_c_plus_norm: f64,
}

/// Flags `steps[i]` when it exceeds `JUMP_FACTOR` times the median of up
/// to two steps on each side, and `JUMP_FLOOR`.
pub fn jump_flags(steps: &[f64]) -> Vec<bool> {
    (0..steps.len())
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(steps.len());
            let mut nb: Vec<f64> = (lo..hi).filter(|&j| j != i).map(|j| steps[j]).collect();
            if nb.is_empty() {
                return false;
            }
            nb.sort_by(f64::total_cmp);
            let m = nb.len();
            let median = if m % 2 == 1 {
                nb[m / 2]
            } else {
                0.5 * (nb[m / 2 - 1] + nb[m / 2])
            };
            steps[i] > JUMP_FACTOR * median && steps[i] > JUMP_FLOOR
        })
        .collect()
}

fn weighted(c: &CMat<f64>, weights: &[f64]) -> CMat<f64> {
    CMat::<f64>::from_fn(c.nrows(), c.ncols(), |i, j| c[(i, j)] * creal(weights[i] / weights[j]))
}

fn mode_op_diff_norm(a: &ModeOp<f64>, b: &ModeOp<f64>) -> f64 {
    match (&a.blocks, &b.blocks) {
        (Blocks::PerSlot(x), Blocks::PerSlot(y)) => x
            .par_iter()
            .zip(y.par_iter())
            .map(|(p, q)| spectral_norm(&(p - q)))
            .reduce(|| 0.0, f64::max),
        _ => spectral_norm(&(a.to_dense() - b.to_dense())),
    }
}

fn spread(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let vals: Vec<f64> = v.filter(|x| x.is_finite() && *x > 0.0).collect();
    let max = vals.iter().copied().fold(0.0, f64::max);
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    (max, if vals.is_empty() { 1.0 } else { max / min })
}

/// Recomputes the full pipeline at every `s` (in parallel, no shared
/// state), then compares consecutive members. `cut_radius` fixes the
/// sectorial contour used to track `P₊(B₀)`; otherwise it is chosen per
/// member from the spectrum.
pub fn continuity_sweep(
    family: &(dyn Fn(f64) -> OperatorSpec + Sync),
    s_grid: &[f64],
    sobolev_s: f64,
    cut_radius: Option<f64>,
    rank_tol: f64,
    tol: &CalderonTolerances,
) -> Result<SweepReport> {
    if !(-0.5..=0.5).contains(&sobolev_s) {
        return Err(Error::Domain(format!(
            "sweep Sobolev order {sobolev_s} outside [-1/2, 1/2]"
        )));
    }
    type Member = (Pipeline<f64>, [CMat<f64>; 2], ModeOp<f64>);
    let members: Vec<Member> = s_grid
        .par_iter()
        .map(|&s| -> Result<Member> {
            let wrap = |e: Error| Error::SweepMember { s, source: Box::new(e) };
            let p = Pipeline::<f64>::run(&family(s), rank_tol, tol).map_err(wrap)?;
            let proj = |side: usize| -> Result<CMat<f64>> {
                let b0 = &p.op.collar[side].b0_h;
                let mut contour = SectorialContour::default_for(b0);
                if let Some(c) = cut_radius {
                    contour = contour.with_cut_radius(c);
                }
                Ok(sectorial_projection(b0, &contour)?.p_plus)
            };
            let pp = [proj(0).map_err(wrap)?, proj(1).map_err(wrap)?];
            let inv = p.dbl.pseudoinverse();
            Ok((p, pp, inv))
        })
        .collect::<Result<_>>()?;
    let disc = &members[0].0.disc;
    let k = disc.rank();
    let weights: Vec<f64> = (0..2 * k * disc.n_slots())
        .map(|i| (1.0 + (disc.modes[i / (2 * k)].pow(2)) as f64).powf(sobolev_s / 2.0))
        .collect();
    let dense: Vec<CMat<f64>> = members
        .iter()
        .map(|m| weighted(&m.0.bundle.c_plus.to_dense(), &weights))
        .collect();
    let mut points: Vec<SweepPoint> = Vec::with_capacity(s_grid.len());
    for (i, &s) in s_grid.iter().enumerate() {
        let c_plus_norm = spectral_norm(&dense[i]);
        let distance_from_start = spectral_norm(&(&dense[i] - &dense[0]));
        let (step_c, step_p, d0, dstr, res) = if i == 0 {
            (0.0, 0.0, 0.0, 0.0, 0.0)
        } else {
            let (prev, cur) = (&members[i - 1], &members[i]);
            let metrics = operator_metrics_assembled(&cur.0.op, &prev.0.op, &cur.0.disc)?;
            let step_p = (0..2)
                .map(|side| spectral_norm(&(&cur.1[side] - &prev.1[side])))
                .fold(0.0, f64::max);
            (
                spectral_norm(&(&dense[i] - &dense[i - 1])),
                step_p,
                metrics.d0,
                metrics.d_str,
                mode_op_diff_norm(&cur.2, &prev.2),
            )
        };
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        points.push(SweepPoint {
            s,
            c_plus_norm,
            distance_from_start,
            step_c_plus: step_c,
            step_p_plus: step_p,
            step_d0: d0,
            step_d_str: dstr,
            step_ratio: ratio(step_c, dstr),
            step_resolvent: res,
            resolvent_ratio: ratio(res, d0),
            jump_c_plus: false,
            jump_p_plus: false,
        });
    }
    // the first point carries no step
    let flags = |f: &dyn Fn(&SweepPoint) -> f64| -> Vec<usize> {
        let steps: Vec<f64> = points[1..].iter().map(f).collect();
        jump_flags(&steps)
            .into_iter()
            .enumerate()
            .filter(|(_, b)| *b)
            .map(|(i, _)| i + 1)
            .collect()
    };
    let jumps_c_plus = if points.len() > 1 { flags(&|p| p.step_c_plus) } else { vec![] };
    let jumps_p_plus = if points.len() > 1 { flags(&|p| p.step_p_plus) } else { vec![] };
    for &i in &jumps_c_plus {
        points[i].jump_c_plus = true;
    }
    for &i in &jumps_p_plus {
        points[i].jump_p_plus = true;
    }
    let (max_step_ratio, step_ratio_spread) = spread(points.iter().map(|p| p.step_ratio));
    let (max_resolvent_ratio, resolvent_ratio_spread) = spread(points.iter().map(|p| p.resolvent_ratio));
    let max_c_plus_norm = points.iter().map(|p| p.c_plus_norm).fold(0.0, f64::max);
    Ok(SweepReport {
        sobolev_s,
        cut_radius,
        jumps_c_plus,
        jumps_p_plus,
        max_step_ratio,
        step_ratio_spread,
        max_resolvent_ratio,
        resolvent_ratio_spread,
        max_c_plus_norm,
        points,
    })
}
