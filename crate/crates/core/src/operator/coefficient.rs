//! Matrix-valued coefficient functions `Σ a_{pm} x^p e^{imθ}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cis, cplx, lit, CMat, Real};

/// Serialized form: `data[p][m + M_max][row][col] = [re, im]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "M_max")]
    pub m_max: usize,
    pub data: Vec<Vec<Vec<Vec<[f64; 2]>>>>,
}

impl CoefficientSpec {
    pub fn zero(k: usize) -> Self {
        Self::constant(&vec![vec![[0.0, 0.0]; k]; k])
    }

    pub fn constant(mat: &[Vec<[f64; 2]>]) -> Self {
        Self {
            p: 0,
            m_max: 0,
            data: vec![vec![mat.to_vec()]],
        }
    }

    pub fn identity(k: usize) -> Self {
        let mut m = vec![vec![[0.0, 0.0]; k]; k];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = [1.0, 0.0];
        }
        Self::constant(&m)
    }

    /// Single term `mat · x^p e^{imθ}`.
    pub fn monomial(mat: &[Vec<[f64; 2]>], p: usize, m: i64) -> Self {
        let k = mat.len();
        let m_max = m.unsigned_abs() as usize;
        let zero = vec![vec![[0.0, 0.0]; k]; k];
        let mut data = vec![vec![zero; 2 * m_max + 1]; p + 1];
        data[p][(m + m_max as i64) as usize] = mat.to_vec();
        Self { p, m_max, data }
    }

    pub fn rank(&self) -> usize {
        self.data
            .first()
            .and_then(|row| row.first())
            .map(|m| m.len())
            .unwrap_or(0)
    }

    /// Checks the array shape against `P`, `M_max` and the fiber rank.
    pub fn validate(&self, key: &str, k: usize) -> Result<()> {
        if self.data.len() != self.p + 1 {
            return Err(Error::Config(format!(
                "{key}.data: expected P+1 = {} x-power blocks, found {}",
                self.p + 1,
                self.data.len()
            )));
        }
        for (pi, block) in self.data.iter().enumerate() {
            if block.len() != 2 * self.m_max + 1 {
                return Err(Error::Config(format!(
                    "{key}.data[{pi}]: expected 2*M_max+1 = {} Fourier entries, found {}",
                    2 * self.m_max + 1,
                    block.len()
                )));
            }
            for (mi, mat) in block.iter().enumerate() {
                if mat.len() != k || mat.iter().any(|row| row.len() != k) {
                    return Err(Error::Config(format!(
                        "{key}.data[{pi}][{mi}]: expected a {k}x{k} matrix"
                    )));
                }
                if mat.iter().flatten().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::Config(format!(
                        "{key}.data[{pi}][{mi}]: non-finite entry"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `self + s · other`, padding to the larger `P` and `M_max`.
    pub fn add_scaled(&self, other: &CoefficientSpec, s: f64) -> CoefficientSpec {
        let k = self.rank().max(other.rank());
        let p = self.p.max(other.p);
        let m_max = self.m_max.max(other.m_max);
        let zero = vec![vec![[0.0, 0.0]; k]; k];
        let mut data = vec![vec![zero; 2 * m_max + 1]; p + 1];
        for (src, scale) in [(self, 1.0), (other, s)] {
            for (pi, block) in src.data.iter().enumerate() {
                for (mi, mat) in block.iter().enumerate() {
                    let target = mi + m_max - src.m_max;
                    for (r, row) in mat.iter().enumerate() {
                        for (c, v) in row.iter().enumerate() {
                            data[pi][target][r][c][0] += scale * v[0];
                            data[pi][target][r][c][1] += scale * v[1];
                        }
                    }
                }
            }
        }
        CoefficientSpec { p, m_max, data }
    }
}

/// Evaluable coefficient in working precision; only nonzero terms are kept.
#[derive(Clone, Debug)]
pub struct Coefficient<R: Real> {
    pub k: usize,
    terms: Vec<(usize, i64, CMat<R>)>,
}

impl<R: Real> Coefficient<R> {
    pub fn from_spec(spec: &CoefficientSpec, key: &str, k: usize) -> Result<Self> {
        spec.validate(key, k)?;
        let mut terms = Vec::new();
        for (pi, block) in spec.data.iter().enumerate() {
            for (mi, mat) in block.iter().enumerate() {
                if mat.iter().flatten().all(|v| v[0] == 0.0 && v[1] == 0.0) {
                    continue;
                }
                let a = CMat::<R>::from_fn(k, k, |r, c| cplx(lit(mat[r][c][0]), lit(mat[r][c][1])));
                terms.push((pi, mi as i64 - spec.m_max as i64, a));
            }
        }
        Ok(Self { k, terms })
    }

    pub fn is_theta_constant(&self) -> bool {
        self.terms.iter().all(|(_, m, _)| *m == 0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn sum(&self, x: R, theta: R, f: impl Fn(usize, i64, R, R) -> num_complex::Complex<R>) -> CMat<R> {
        let mut out = CMat::<R>::zeros(self.k, self.k);
        for (p, m, a) in &self.terms {
            let w = f(*p, *m, x, theta);
            if w.re != R::zero() || w.im != R::zero() {
                out += a * w;
            }
        }
        out
    }

    pub fn eval(&self, x: R, theta: R) -> CMat<R> {
        self.sum(x, theta, |p, m, x, th| {
            cis(lit::<R>(m as f64) * th).scale(x.powi(p as i32))
        })
    }

    pub fn dx(&self, x: R, theta: R) -> CMat<R> {
        self.sum(x, theta, |p, m, x, th| {
            if p == 0 {
                cplx(R::zero(), R::zero())
            } else {
                cis(lit::<R>(m as f64) * th).scale(lit::<R>(p as f64) * x.powi(p as i32 - 1))
            }
        })
    }

    pub fn dtheta(&self, x: R, theta: R) -> CMat<R> {
        self.sum(x, theta, |p, m, x, th| {
            let mf: R = lit(m as f64);
            cis(mf * th) * cplx(R::zero(), mf * x.powi(p as i32))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_closed_form() {
        // 2 x^2 e^{iθ} + (1 + i) x^0 e^{-2iθ}
        let a = CoefficientSpec::monomial(&[vec![[2.0, 0.0]]], 2, 1)
            .add_scaled(&CoefficientSpec::monomial(&[vec![[1.0, 1.0]]], 0, -2), 1.0);
        let c = Coefficient::<f64>::from_spec(&a, "a", 1).unwrap();
        let (x, th) = (0.7, 1.3);
        let e1 = num_complex::Complex::new(0.0, th).exp();
        let e2 = num_complex::Complex::new(0.0, -2.0 * th).exp();
        let v = e1 * 2.0 * x * x + e2 * num_complex::Complex::new(1.0, 1.0);
        assert!((c.eval(x, th)[(0, 0)] - v).norm() < 1e-14);
        assert!((c.dx(x, th)[(0, 0)] - e1 * 4.0 * x).norm() < 1e-14);
        let dth = e1 * num_complex::Complex::new(0.0, 2.0 * x * x)
            + e2 * num_complex::Complex::new(1.0, 1.0) * num_complex::Complex::new(0.0, -2.0);
        assert!((c.dtheta(x, th)[(0, 0)] - dth).norm() < 1e-14);
        assert!(!c.is_theta_constant());
    }

    #[test]
    fn shape_errors_name_the_key() {
        let mut bad = CoefficientSpec::identity(2);
        bad.m_max = 1;
        let err = bad.validate("beta1", 2).unwrap_err().to_string();
        assert!(err.contains("beta1.data[0]"), "{err}");
        let err = CoefficientSpec::identity(2).validate("J", 3).unwrap_err().to_string();
        assert!(err.contains("J.data[0][0]"), "{err}");
    }
}
