use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::double::boundary_op;
use crate::error::{Error, Result};
use crate::geometry::{build_discretization, Discretization, SIDES};
use crate::linalg::{hermitian_function, real_to_complex, spectral_norm};
use crate::operator::{assemble_operator, AssembledOperator, Blocks, CollarData, ModeOp, Operator, OperatorSpec};
use crate::scalar::{creal, lit, to_f64, CMat, Real};

/// `N₀`, `N₁` and the metrics `d₀ = N₀`, `d_str = N₀ + N₁` between two
/// operator/boundary-condition pairs on a common grid. Every norm is the
/// largest singular value between the discrete Sobolev spaces; the
/// individual terms are kept in `components`.
#[derive(Clone, Debug, Serialize)]
pub struct MetricReport {
    pub n0: f64,
    pub n1: f64,
    pub d0: f64,
    pub d_str: f64,
    pub components: BTreeMap<String, f64>,
}

/// Interior Gram factors per slot: `G₀^{1/2}` and `G₁^{-1/2}` for the
/// `L²` and `L²₁` inner products.
struct InteriorGram<R: Real> {
    l2_half: Vec<CMat<R>>,
    h1_inv_half: Vec<CMat<R>>,
}

impl<R: Real> InteriorGram<R> {
    fn new(disc: &Discretization<R>) -> Self {
        let k = disc.rank();
        let nx = disc.n_x();
        let two_pi = R::two_pi();
        let w = CMat::<R>::from_diagonal(&nalgebra::DVector::from_iterator(
            nx,
            disc.x_weights.iter().map(|&w| creal(two_pi * w)),
        ));
        let dx = real_to_complex(&disc.d_x);
        let kron = |m: &CMat<R>| -> CMat<R> {
            let mut out = CMat::<R>::zeros(nx * k, nx * k);
            for i in 0..nx {
                for j in 0..nx {
                    for c in 0..k {
                        out[(i * k + c, j * k + c)] = m[(i, j)];
                    }
                }
            }
            out
        };
        let stiff = dx.adjoint() * &w * &dx;
        let l2 = kron(&w.map(|z| creal(z.re.sqrt())));
        let h1: Vec<CMat<R>> = disc
            .modes
            .par_iter()
            .map(|&m| {
                let g = &w * creal(R::one() + lit((m * m) as f64)) + &stiff;
                let g = (&g + g.adjoint()) * creal(lit(0.5));
                kron(&hermitian_function(&g, |v| R::one() / v.sqrt()))
            })
            .collect();
        Self {
            l2_half: vec![l2; disc.n_slots()],
            h1_inv_half: h1,
        }
    }

    fn norm_1_0(&self, x: &ModeOp<R>) -> R {
        match &x.blocks {
            Blocks::PerSlot(b) => b
                .par_iter()
                .enumerate()
                .map(|(s, m)| spectral_norm(&(&self.l2_half[s] * m * &self.h1_inv_half[s])))
                .reduce(R::zero, |a, b| a.max(b)),
            Blocks::Coupled(m) => {
                let l = block_diag(&self.l2_half);
                let r = block_diag(&self.h1_inv_half);
                spectral_norm(&(l * m * r))
            }
        }
    }
}

fn block_diag<R: Real>(blocks: &[CMat<R>]) -> CMat<R> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::<R>::zeros(n, n);
    let mut o = 0;
    for b in blocks {
        out.view_mut((o, o), b.shape()).copy_from(b);
        o += b.nrows();
    }
    out
}

/// `‖Y‖_{s,t}` for `Y` acting on one boundary component, ordering `(slot, c)`.
fn boundary_norm<R: Real>(y: &CMat<R>, disc: &Discretization<R>, s: f64, t: f64) -> R {
    let k = y.nrows() / disc.n_slots();
    let weight = |e: f64| -> Vec<R> {
        disc.modes
            .iter()
            .flat_map(|&m| {
                let w = (R::one() + lit((m * m) as f64)).powf(lit(e / 2.0));
                std::iter::repeat_n(w, k)
            })
            .collect()
    };
    let (left, right) = (weight(t), weight(-s));
    let scaled = CMat::<R>::from_fn(y.nrows(), y.ncols(), |i, j| y[(i, j)] * creal(left[i] * right[j]));
    spectral_norm(&scaled)
}

fn mult_first_order<R: Real>(disc: &Discretization<R>, first: &[CMat<R>], zero: &[CMat<R>]) -> CMat<R> {
    let k = first[0].nrows();
    disc.multiplication_modes(first) * disc.d_theta_modes(k) + disc.multiplication_modes(zero)
}

struct CollarTerms<R: Real> {
    b0: CMat<R>,
    commutator: CMat<R>,
    t: CMat<R>,
    j0: CMat<R>,
    c1: CMat<R>,
    c0: CMat<R>,
    ct1: CMat<R>,
    ct0: CMat<R>,
}

impl<R: Real> CollarTerms<R> {
    fn new(cd: &CollarData<R>, disc: &Discretization<R>) -> Self {
        let jt = cd.j0_modes.adjoint() * &cd.t_modes;
        let b0t = cd.b0_h.adjoint();
        Self {
            commutator: &b0t * &jt - &jt * &b0t,
            b0: cd.b0_h.clone(),
            t: cd.t_modes.clone(),
            j0: cd.j0_modes.clone(),
            c1: mult_first_order(disc, &cd.c1_first, &cd.c1_zero),
            c0: disc.multiplication_modes(&cd.c0),
            ct1: mult_first_order(disc, &cd.ct1_first, &cd.ct1_zero),
            ct0: disc.multiplication_modes(&cd.ct0),
        }
    }
}

fn difference<R: Real>(a: &ModeOp<R>, b: &ModeOp<R>) -> ModeOp<R> {
    match (&a.blocks, &b.blocks) {
        (Blocks::PerSlot(x), Blocks::PerSlot(y)) => {
            ModeOp::per_slot(x.iter().zip(y).map(|(p, q)| p - q).collect())
        }
        _ => ModeOp::coupled(a.n_slots, a.rows, a.cols, a.to_dense() - b.to_dense()),
    }
}

pub fn operator_metrics_assembled<R: Real>(
    a: &AssembledOperator<R>,
    b: &AssembledOperator<R>,
    disc: &Discretization<R>,
) -> Result<MetricReport> {
    if a.a_h.nrows() != b.a_h.nrows() || a.operator.k != b.operator.k {
        return Err(Error::GeometryMismatch("operators live on different grids".into()));
    }
    let gram = InteriorGram::new(disc);
    let mut comp = BTreeMap::new();
    let mut put = |name: &str, v: R| {
        comp.insert(name.to_string(), to_f64(v));
    };
    let a_diff = gram.norm_1_0(&difference(&a.a_h, &b.a_h));
    let at_diff = gram.norm_1_0(&difference(&a.at_h, &b.at_h));
    let n = disc.n_slots();
    let k = disc.rank();
    let t_full = |op: &AssembledOperator<R>| {
        boundary_op([&op.collar[0].t_modes, &op.collar[1].t_modes], n, k, true).to_dense()
    };
    // both components at once: the (slot, side, c) ordering carries the
    // same Sobolev weight on each side
    let t_diff = {
        let d = t_full(a) - t_full(b);
        let w: Vec<R> = (0..d.nrows())
            .map(|i| (R::one() + lit((disc.modes[i / (2 * k)].pow(2)) as f64)).powf(lit(0.25)))
            .collect();
        spectral_norm(&CMat::<R>::from_fn(d.nrows(), d.ncols(), |i, j| {
            d[(i, j)] * creal(w[i] / w[j])
        }))
    };
    put("A_1_0", a_diff);
    put("At_1_0", at_diff);
    put("T_half_half", t_diff);
    let n0 = a_diff + at_diff + t_diff;

    let mut n1 = R::zero();
    for side in SIDES {
        let ta = CollarTerms::new(&a.collar[side], disc);
        let tb = CollarTerms::new(&b.collar[side], disc);
        let terms: [(&str, R); 9] = [
            ("B0_1_0", boundary_norm(&(&ta.b0 - &tb.b0), disc, 1.0, 0.0)),
            ("B0t_1_0", boundary_norm(&(ta.b0.adjoint() - tb.b0.adjoint()), disc, 1.0, 0.0)),
            ("commutator_0", boundary_norm(&(&ta.commutator - &tb.commutator), disc, 0.0, 0.0)),
            ("T_0", boundary_norm(&(&ta.t - &tb.t), disc, 0.0, 0.0)),
            ("J0_0", boundary_norm(&(&ta.j0 - &tb.j0), disc, 0.0, 0.0)),
            ("C1_1_0", boundary_norm(&(&ta.c1 - &tb.c1), disc, 1.0, 0.0)),
            ("C0_0", boundary_norm(&(&ta.c0 - &tb.c0), disc, 0.0, 0.0)),
            ("Ct1_1_0", boundary_norm(&(&ta.ct1 - &tb.ct1), disc, 1.0, 0.0)),
            ("Ct0_0", boundary_norm(&(&ta.ct0 - &tb.ct0), disc, 0.0, 0.0)),
        ];
        for (name, v) in terms.iter() {
            put(&format!("{name}_side{side}"), *v);
            n1 += *v;
        }
    }
    let (n0, n1) = (to_f64(n0), to_f64(n1));
    Ok(MetricReport {
        n0,
        n1,
        d0: n0,
        d_str: n0 + n1,
        components: comp,
    })
}

/// Builds both operators on their (common) grid and compares them.
pub fn operator_metrics(a: &OperatorSpec, b: &OperatorSpec) -> Result<MetricReport> {
    let (ga, gb) = (&a.geometry, &b.geometry);
    if ga.length != gb.length || ga.n_theta != gb.n_theta || ga.n_x != gb.n_x || a.rank() != b.rank() {
        return Err(Error::GeometryMismatch(
            "metrics require identical geometry and rank".into(),
        ));
    }
    let disc = build_discretization::<f64>(ga)?;
    let oa = assemble_operator(&Operator::from_spec(a)?, &disc)?;
    let ob = assemble_operator(&Operator::from_spec(b)?, &disc)?;
    operator_metrics_assembled(&oa, &ob, &disc)
}
