//! Dense complex linear algebra used across the laboratory: ordered Schur
//! forms and Riesz projections, the matrix exponential, rank-revealing SVD,
//! principal angles and Gauss–Legendre rules.

use nalgebra::{ComplexField, DMatrix, SymmetricEigen};
use num_complex::Complex;

use crate::scalar::{creal, lit, to_f64, CMat, Real};

/// Complex Schur form `m = q t q^H` with the selected eigenvalues leading
/// the diagonal of `t`.
#[derive(Clone, Debug)]
pub struct OrderedSchur<R: Real> {
    pub q: CMat<R>,
    pub t: CMat<R>,
    pub n_selected: usize,
}

impl<R: Real> OrderedSchur<R> {
    pub fn eigenvalues(&self) -> Vec<Complex<R>> {
        (0..self.t.nrows()).map(|i| self.t[(i, i)]).collect()
    }
}

pub fn schur<R: Real>(m: &CMat<R>) -> (CMat<R>, CMat<R>) {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "Schur form of a non-square matrix");
    if n == 0 {
        return (CMat::zeros(0, 0), CMat::zeros(0, 0));
    }
    let (q, mut t) = nalgebra::linalg::Schur::new(m.clone()).unpack();
    for j in 0..n {
        for i in (j + 1)..n {
            t[(i, j)] = Complex::new(R::zero(), R::zero());
        }
    }
    (q, t)
}

pub fn eigenvalues<R: Real>(m: &CMat<R>) -> Vec<Complex<R>> {
    let (_, t) = schur(m);
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

/// Swaps the adjacent diagonal entries `p`, `p+1` of an upper triangular
/// `t` with one Givens rotation, accumulating it into `q`.
fn swap_adjacent<R: Real>(t: &mut CMat<R>, q: &mut CMat<R>, p: usize) {
    let n = t.nrows();
    let a = t[(p, p)];
    let b = t[(p + 1, p + 1)];
    let c = t[(p, p + 1)];
    let v1 = c;
    let v2 = b - a;
    let nrm = (v1.norm_sqr() + v2.norm_sqr()).sqrt();
    if nrm == R::zero() {
        return;
    }
    let g11 = v1.unscale(nrm);
    let g21 = v2.unscale(nrm);
    let g12 = -g21.conj();
    let g22 = g11.conj();
    // rows p, p+1 <- G^H rows
    for j in p..n {
        let x = t[(p, j)];
        let y = t[(p + 1, j)];
        t[(p, j)] = g11.conj() * x + g21.conj() * y;
        t[(p + 1, j)] = g12.conj() * x + g22.conj() * y;
    }
    // columns p, p+1 <- columns G
    for i in 0..=(p + 1) {
        let x = t[(i, p)];
        let y = t[(i, p + 1)];
        t[(i, p)] = x * g11 + y * g21;
        t[(i, p + 1)] = x * g12 + y * g22;
    }
    for i in 0..n {
        let x = q[(i, p)];
        let y = q[(i, p + 1)];
        q[(i, p)] = x * g11 + y * g21;
        q[(i, p + 1)] = x * g12 + y * g22;
    }
    t[(p + 1, p)] = Complex::new(R::zero(), R::zero());
    t[(p, p)] = b;
    t[(p + 1, p + 1)] = a;
}

/// Schur form reordered so that every eigenvalue accepted by `select`
/// comes first.
pub fn ordered_schur<R: Real>(
    m: &CMat<R>,
    select: impl Fn(Complex<R>) -> bool,
) -> OrderedSchur<R> {
    let (mut q, mut t) = schur(m);
    let n = t.nrows();
    let mut count = 0;
    for i in 0..n {
        if select(t[(i, i)]) {
            let mut p = i;
            while p > count {
                swap_adjacent(&mut t, &mut q, p - 1);
                p -= 1;
            }
            count += 1;
        }
    }
    OrderedSchur {
        q,
        t,
        n_selected: count,
    }
}

/// Solves `t11 y - y t22 = rhs` for upper triangular `t11`, `t22`.
pub fn triangular_sylvester<R: Real>(t11: &CMat<R>, t22: &CMat<R>, rhs: &CMat<R>) -> CMat<R> {
    let p = t11.nrows();
    let q = t22.nrows();
    let mut y = CMat::<R>::zeros(p, q);
    for j in 0..q {
        let mut col: Vec<Complex<R>> = (0..p).map(|i| rhs[(i, j)]).collect();
        for l in 0..j {
            let s = t22[(l, j)];
            for i in 0..p {
                col[i] += y[(i, l)] * s;
            }
        }
        let shift = t22[(j, j)];
        for i in (0..p).rev() {
            let mut acc = col[i];
            for k in (i + 1)..p {
                acc -= t11[(i, k)] * y[(k, j)];
            }
            y[(i, j)] = acc / (t11[(i, i)] - shift);
        }
    }
    y
}

/// Coupling block `Y` of the spectral projector in Schur coordinates,
/// `P_T = [[I, Y], [0, 0]]`.
fn schur_projector_coupling<R: Real>(s: &OrderedSchur<R>) -> CMat<R> {
    let n = s.t.nrows();
    let k = s.n_selected;
    let t11 = s.t.view((0, 0), (k, k)).into_owned();
    let t22 = s.t.view((k, k), (n - k, n - k)).into_owned();
    let t12 = s.t.view((0, k), (k, n - k)).into_owned();
    triangular_sylvester(&t11, &t22, &t12)
}

/// Riesz projection onto the generalized eigenspaces of the selected
/// eigenvalues, along the complementary ones. Returns the projector and
/// its rank.
pub fn riesz_projection<R: Real>(
    m: &CMat<R>,
    select: impl Fn(Complex<R>) -> bool,
) -> (CMat<R>, usize) {
    let s = ordered_schur(m, select);
    let n = m.nrows();
    let k = s.n_selected;
    if k == 0 {
        return (CMat::zeros(n, n), 0);
    }
    let y = schur_projector_coupling(&s);
    let mut pt = CMat::<R>::zeros(n, n);
    for i in 0..k {
        pt[(i, i)] = creal(R::one());
    }
    pt.view_mut((0, k), (k, n - k)).copy_from(&y);
    (&s.q * pt * s.q.adjoint(), k)
}

/// `exp(t m)` restricted to the selected spectral subspace, i.e.
/// `exp(t m) P_sel`, evaluated in ordered Schur coordinates so that the
/// complementary (possibly exploding) modes never enter.
pub fn riesz_exp<R: Real>(m: &CMat<R>, select: impl Fn(Complex<R>) -> bool, t: R) -> CMat<R> {
    let s = ordered_schur(m, select);
    riesz_exp_from_schur(&s, t)
}

pub fn riesz_exp_from_schur<R: Real>(s: &OrderedSchur<R>, t: R) -> CMat<R> {
    let n = s.t.nrows();
    let k = s.n_selected;
    if k == 0 {
        return CMat::zeros(n, n);
    }
    let y = schur_projector_coupling(s);
    let t11 = s.t.view((0, 0), (k, k)).into_owned() * creal(t);
    let e = expm(&t11);
    let mut pt = CMat::<R>::zeros(n, n);
    pt.view_mut((0, 0), (k, k)).copy_from(&e);
    pt.view_mut((0, k), (k, n - k)).copy_from(&(&e * y));
    &s.q * pt * s.q.adjoint()
}

fn norm1<R: Real>(a: &CMat<R>) -> R {
    let mut best = R::zero();
    for j in 0..a.ncols() {
        let mut s = R::zero();
        for i in 0..a.nrows() {
            s += a[(i, j)].modulus();
        }
        if s > best {
            best = s;
        }
    }
    best
}

/// Matrix exponential by scaling and squaring with the degree-13 Padé
/// approximant.
pub fn expm<R: Real>(a: &CMat<R>) -> CMat<R> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let n = a.nrows();
    if n == 0 {
        return CMat::zeros(0, 0);
    }
    let nrm = crate::scalar::to_f64(norm1(a));
    let s = if nrm > THETA13 {
        (nrm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scale = creal(lit::<R>(0.5f64.powi(s)));
    let a = a * scale;
    let b = |i: usize| creal(lit::<R>(B[i]));
    let id = CMat::<R>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9))
        + &a6 * b(7)
        + &a4 * b(5)
        + &a2 * b(3)
        + &id * b(1);
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8))
        + &a6 * b(6)
        + &a4 * b(4)
        + &a2 * b(2)
        + &id * b(0);
    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut r = lhs
        .lu()
        .solve(&rhs)
        .expect("Padé denominator is nonsingular for scaled arguments");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Thin SVD with singular values sorted in decreasing order.
#[derive(Clone, Debug)]
pub struct SortedSvd<R: Real> {
    pub u: CMat<R>,
    pub s: Vec<R>,
    /// Right singular vectors as columns.
    pub v: CMat<R>,
}

pub fn svd_sorted<R: Real>(a: &CMat<R>) -> SortedSvd<R> {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return SortedSvd {
            u: CMat::zeros(m, 0),
            s: vec![],
            v: CMat::zeros(n, 0),
        };
    }
    // nalgebra's implicit-shift SVD loses accuracy on some blocks (a rank-one
    // 2x2 block came back with sigma 1.0102 instead of 1.0), so the
    // factorization is delegated to faer and carried out in double precision.
    match to_faer(a).thin_svd() {
        Ok(svd) => {
            let s = svd.S().column_vector();
            SortedSvd {
                u: from_faer(svd.U()),
                s: (0..k).map(|i| lit(s[i].re)).collect(),
                v: from_faer(svd.V()),
            }
        }
        Err(_) => jacobi_svd(a),
    }
}

pub fn singular_values<R: Real>(a: &CMat<R>) -> Vec<R> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return vec![];
    }
    match to_faer(a).singular_values() {
        Ok(s) => s.into_iter().map(lit).collect(),
        Err(_) => jacobi_svd(a).s,
    }
}

fn to_faer<R: Real>(a: &CMat<R>) -> faer::Mat<faer::c64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| {
        let z = a[(i, j)];
        faer::c64::new(to_f64(z.re), to_f64(z.im))
    })
}

fn from_faer<R: Real>(a: faer::MatRef<'_, faer::c64>) -> CMat<R> {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| {
        let z = a[(i, j)];
        Complex::new(lit(z.re), lit(z.im))
    })
}

fn sort_svd<R: Real>(u: CMat<R>, s: Vec<R>, v: CMat<R>) -> SortedSvd<R> {
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap_or(std::cmp::Ordering::Equal));
    SortedSvd {
        u: u.select_columns(idx.iter()),
        s: idx.iter().map(|&i| s[i]).collect(),
        v: v.select_columns(idx.iter()),
    }
}

/// One-sided (Hestenes) Jacobi SVD, used when the faer iteration reports
/// non-convergence.
fn jacobi_svd<R: Real>(a: &CMat<R>) -> SortedSvd<R> {
    let (m, n) = a.shape();
    if m < n {
        let t = jacobi_svd(&a.adjoint());
        return SortedSvd { u: t.v, s: t.s, v: t.u };
    }
    let mut w = a.clone();
    let mut v = CMat::<R>::identity(n, n);
    let eps = R::default_epsilon();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dotc(&w.column(q));
                let g = gamma.modulus();
                if g <= eps * (alpha * beta).sqrt() || g == R::zero() {
                    continue;
                }
                rotated = true;
                let phase = gamma / creal(g);
                let zeta = (beta - alpha) / (lit::<R>(2.0) * g);
                let sign = if zeta >= R::zero() { R::one() } else { -R::one() };
                let t = sign / (zeta.abs() + (R::one() + zeta * zeta).sqrt());
                let c = R::one() / (R::one() + t * t).sqrt();
                let s = c * t;
                for mat in [&mut w, &mut v] {
                    for r in 0..mat.nrows() {
                        let xp = mat[(r, p)];
                        let xq = mat[(r, q)];
                        mat[(r, p)] = xp * creal(c) - xq * phase.conj() * creal(s);
                        mat[(r, q)] = xp * phase * creal(s) + xq * creal(c);
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let s: Vec<R> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut u = CMat::<R>::zeros(m, n);
    for j in 0..n {
        if s[j] > R::zero() {
            u.set_column(j, &(w.column(j) / creal(s[j])));
        }
    }
    complete_orthonormal(&mut u, &s);
    sort_svd(u, s, v)
}

/// Replaces the columns of `u` belonging to zero singular values with an
/// orthonormal completion of the others.
fn complete_orthonormal<R: Real>(u: &mut CMat<R>, s: &[R]) {
    let m = u.nrows();
    let mut e = 0;
    for j in 0..s.len() {
        if s[j] > R::zero() {
            continue;
        }
        while e < m {
            let mut x = CMat::<R>::zeros(m, 1);
            x[(e, 0)] = creal(R::one());
            e += 1;
            for i in 0..s.len() {
                if i != j && (s[i] > R::zero() || i < j) {
                    let proj = u.column(i).dotc(&x.column(0));
                    x.column_mut(0).axpy(-proj, &u.column(i), creal(R::one()));
                }
            }
            let nx = x.norm();
            if nx > lit(0.5) {
                u.set_column(j, &(x.column(0) / creal(nx)));
                break;
            }
        }
    }
}

pub fn spectral_norm<R: Real>(a: &CMat<R>) -> R {
    singular_values(a).first().copied().unwrap_or(R::zero())
}

pub fn max_abs<R: Real>(a: &CMat<R>) -> R {
    a.iter().fold(R::zero(), |acc, z| acc.max(z.modulus()))
}

fn infinity<R: Real>() -> R {
    R::from_f64(f64::INFINITY).unwrap_or_else(|| lit(1e300))
}

/// Ratio certifying a rank decision on a decreasing list of singular
/// values: last retained over first dropped. When nothing is dropped the
/// threshold itself plays the role of the first dropped value.
pub fn gap_ratio<R: Real>(s: &[R], rank: usize, rank_tol: R) -> R {
    if s.is_empty() || rank == 0 {
        return infinity();
    }
    let smax = s[0];
    let kept = s[rank - 1];
    let dropped = if rank < s.len() {
        s[rank].max(R::default_epsilon() * smax)
    } else {
        rank_tol * smax
    };
    if dropped == R::zero() {
        infinity()
    } else {
        kept / dropped
    }
}

/// Rank-revealing nullspace of `a` (columns of the result are orthonormal).
#[derive(Clone, Debug)]
pub struct Nullspace<R: Real> {
    pub basis: CMat<R>,
    pub rank: usize,
    pub gap_ratio: R,
    pub singular_values: Vec<R>,
}

impl<R: Real> Nullspace<R> {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

pub fn nullspace<R: Real>(a: &CMat<R>, rank_tol: R) -> Nullspace<R> {
    let (m, n) = a.shape();
    let padded = if m < n {
        let mut p = CMat::<R>::zeros(n, n);
        p.view_mut((0, 0), (m, n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = svd_sorted(&padded);
    let smax = svd.s.first().copied().unwrap_or(R::zero());
    let rank = svd.s.iter().filter(|&&x| x > rank_tol * smax).count();
    let basis = svd.v.columns(rank, n - rank).into_owned();
    Nullspace {
        basis,
        rank,
        gap_ratio: gap_ratio(&svd.s, rank, rank_tol),
        singular_values: svd.s,
    }
}

/// Scales every row to unit Euclidean norm (zero rows are left alone).
pub fn equilibrate_rows<R: Real>(a: &CMat<R>) -> CMat<R> {
    let mut out = a.clone();
    for i in 0..a.nrows() {
        let nrm = a.row(i).norm();
        if nrm > R::zero() {
            let mut row = out.row_mut(i);
            row.unscale_mut(nrm);
        }
    }
    out
}

/// Orthonormal basis of the range of `a` at relative threshold `rank_tol`,
/// together with the gap ratio of that decision.
pub fn range_basis<R: Real>(a: &CMat<R>, rank_tol: R) -> (CMat<R>, R) {
    let svd = svd_sorted(a);
    let smax = svd.s.first().copied().unwrap_or(R::zero());
    let rank = svd.s.iter().filter(|&&x| x > rank_tol * smax).count();
    (
        svd.u.columns(0, rank).into_owned(),
        gap_ratio(&svd.s, rank, rank_tol),
    )
}

/// Orthonormal basis of the range of `a` with prescribed dimension.
pub fn range_basis_dim<R: Real>(a: &CMat<R>, dim: usize) -> CMat<R> {
    let svd = svd_sorted(a);
    svd.u.columns(0, dim.min(svd.u.ncols())).into_owned()
}

/// Sine of the largest principal angle between the ranges of two
/// orthonormal column sets.
pub fn max_angle_sin<R: Real>(u: &CMat<R>, v: &CMat<R>) -> R {
    if u.ncols() != v.ncols() {
        return R::one();
    }
    if u.ncols() == 0 {
        return R::zero();
    }
    let resid = v - u * (u.adjoint() * v);
    let resid2 = u - v * (v.adjoint() * u);
    spectral_norm(&resid).max(spectral_norm(&resid2)).min(R::one())
}

/// Smallest principal angle (radians) between two orthonormal column sets.
pub fn min_angle<R: Real>(u: &CMat<R>, v: &CMat<R>) -> R {
    if u.ncols() == 0 || v.ncols() == 0 {
        return R::frac_pi_2();
    }
    let c = spectral_norm(&(u.adjoint() * v)).min(R::one());
    c.acos()
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen<R: Real>(h: &CMat<R>) -> (Vec<R>, CMat<R>) {
    let n = h.nrows();
    if n == 0 {
        return (vec![], CMat::zeros(0, 0));
    }
    let sym = (h + h.adjoint()) * creal(lit::<R>(0.5));
    let eig = SymmetricEigen::new(sym);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::<R>::zeros(n, n);
    for (dst, &src) in idx.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// `f(h)` for Hermitian `h` via its eigendecomposition.
pub fn hermitian_function<R: Real>(h: &CMat<R>, f: impl Fn(R) -> R) -> CMat<R> {
    let (vals, vecs) = hermitian_eigen(h);
    let n = vals.len();
    let mut d = CMat::<R>::zeros(n, n);
    for i in 0..n {
        d[(i, i)] = creal(f(vals[i]));
    }
    &vecs * d * vecs.adjoint()
}

/// Signature (n_pos - n_neg) of a Hermitian form, eigenvalues with
/// `|λ| <= tol * max|λ|` counted as null.
pub fn signature<R: Real>(h: &CMat<R>, tol: R) -> (i64, Vec<R>) {
    let (vals, _) = hermitian_eigen(h);
    let scale = vals.iter().fold(R::zero(), |a, v| a.max(v.abs()));
    let thr = tol * scale;
    let pos = vals.iter().filter(|&&v| v > thr).count() as i64;
    let neg = vals.iter().filter(|&&v| v < -thr).count() as i64;
    (pos - neg, vals)
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre<R: Real>(n: usize) -> (Vec<R>, Vec<R>) {
    let mut nodes = vec![R::zero(); n];
    let mut weights = vec![R::zero(); n];
    let nf = n as f64;
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0f64, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[n - 1 - i] = lit(x);
        weights[n - 1 - i] = lit(2.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

pub fn real_to_complex<R: Real>(a: &DMatrix<R>) -> CMat<R> {
    a.map(creal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cplx;

    fn c(re: f64, im: f64) -> Complex<f64> {
        cplx(re, im)
    }

    fn svd_is_consistent(a: &CMat<f64>, svd: &SortedSvd<f64>) -> bool {
        let k = svd.s.len();
        let tol = 1e-12 * (a.nrows().max(a.ncols()) as f64);
        let mut us = svd.u.clone();
        for (j, &sj) in svd.s.iter().enumerate() {
            us.column_mut(j).scale_mut(sj);
        }
        let recon = (&us * svd.v.adjoint() - a).norm() / a.norm();
        let eye = CMat::<f64>::identity(k, k);
        let orth_u = (svd.u.adjoint() * &svd.u - &eye).norm();
        let orth_v = (svd.v.adjoint() * &svd.v - &eye).norm();
        svd.s.windows(2).all(|w| w[0] >= w[1]) && recon <= tol && orth_u <= tol && orth_v <= tol
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn svd_recovers_nearly_rank_one_block() {
        // A rank-one 2x2 block on which the library bidiagonal SVD misreports
        // the singular values.
        let a = CMat::<f64>::from_row_slice(
            2,
            2,
            &[
                c(1.79862099620906116e-2, 0.),
                c(1.32901114417035782e-1, 0.),
                c(1.32901114417035282e-1, 0.),
                c(9.82013790037907341e-1, 0.),
            ],
        );
        let svd = svd_sorted(&a);
        assert!(svd_is_consistent(&a, &svd));
        assert!((svd.s[0] - 1.0).abs() < 1e-12, "{:?}", svd.s);
        assert!(svd.s[1] < 1e-12);
        let ratio = svd.u[(1, 0)] / svd.u[(0, 0)];
        assert!((ratio.re - 2f64.exp()).abs() < 1e-10);
    }

    #[test]
    fn svd_paths_are_factorizations() {
        let mut seed = 7u64;
        let mut rnd = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for (m, n, r) in [(4, 4, 4), (5, 3, 3), (3, 6, 2), (6, 6, 1), (1, 4, 1), (120, 90, 60)] {
            let x = CMat::<f64>::from_fn(m, r, |_, _| c(rnd(), rnd()));
            let y = CMat::<f64>::from_fn(r, n, |_, _| c(rnd(), rnd()));
            let a = x * y;
            let svd = jacobi_svd(&a);
            assert!(svd_is_consistent(&a, &svd), "{m}x{n} rank {r}");
            assert!(svd_is_consistent(&a, &svd_sorted(&a)), "{m}x{n} rank {r}");
            let reference = a.singular_values();
            let mut reference: Vec<f64> = reference.iter().copied().collect();
            reference.sort_by(|p, q| q.partial_cmp(p).unwrap());
            for (p, q) in svd.s.iter().zip(&reference) {
                assert!((p - q).abs() < 1e-12, "{p} vs {q}");
            }
        }
    }

    #[test]
    fn riesz_projection_upper_triangular_example() {
        let b = CMat::<f64>::from_row_slice(2, 2, &[c(1., 0.), c(5., 0.), c(0., 0.), c(-1., 0.)]);
        let (p, rank) = riesz_projection(&b, |z| z.re > 0.0);
        assert_eq!(rank, 1);
        let expected =
            CMat::<f64>::from_row_slice(2, 2, &[c(1., 0.), c(2.5, 0.), c(0., 0.), c(0., 0.)]);
        assert!(max_abs(&(p - expected)) < 1e-13);
    }

    #[test]
    fn ordered_schur_reconstructs_matrix() {
        let b = CMat::<f64>::from_fn(5, 5, |i, j| c((i * 3 + j) as f64 % 7.0 - 3.0, (i + 2 * j) as f64 % 3.0));
        let s = ordered_schur(&b, |z| z.re < 0.0);
        let back = &s.q * &s.t * s.q.adjoint();
        assert!(max_abs(&(back - &b)) < 1e-11);
        for i in 0..s.n_selected {
            assert!(s.t[(i, i)].re < 0.0);
        }
        for i in s.n_selected..5 {
            assert!(s.t[(i, i)].re >= 0.0);
        }
    }

    #[test]
    fn expm_of_diagonal_and_nilpotent() {
        let d = CMat::<f64>::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-2., 1.)]);
        let e = expm(&d);
        assert!((e[(0, 0)] - c(1f64.exp(), 0.)).norm() < 1e-13);
        assert!((e[(1, 1)] - c(-2., 1.).exp()).norm() < 1e-13);
        let n = CMat::<f64>::from_row_slice(2, 2, &[c(0., 0.), c(30., 0.), c(0., 0.), c(0., 0.)]);
        let en = expm(&n);
        assert!((en[(0, 1)] - c(30., 0.)).norm() < 1e-11);
    }

    #[test]
    fn nullspace_reports_gap() {
        let a = CMat::<f64>::from_row_slice(2, 3, &[c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.), c(1., 0.), c(0., 0.)]);
        let ns = nullspace(&a, 1e-10);
        assert_eq!(ns.dim(), 1);
        assert!(ns.basis[(2, 0)].norm() > 0.999);
        assert!(ns.gap_ratio > 1e10);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre::<f64>(6);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((integral - 2.0 / 11.0).abs() < 1e-14);
    }
}

