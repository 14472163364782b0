//! Dense univariate polynomials and polynomial matrices.

use crate::linalg::Mat;
use crate::scalar::Scalar;

/// `sum c[k] t^k`; trailing zeros are trimmed.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly<F> {
    pub coeffs: Vec<F>,
}

impl<F: Scalar> Poly<F> {
    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn constant(c: F) -> Self {
        Poly::new(vec![c])
    }

    pub fn new(mut coeffs: Vec<F>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    /// The monomial `t`.
    pub fn t() -> Self {
        Poly::new(vec![F::zero(), F::one()])
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn coeff(&self, k: usize) -> F {
        self.coeffs.get(k).cloned().unwrap_or_else(F::zero)
    }

    pub fn eval(&self, t: &F) -> F {
        let mut acc = F::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * t.clone() + c.clone();
        }
        acc
    }

    pub fn eval_f64(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for c in self.coeffs.iter().rev() {
            acc = acc * t + c.to_f64();
        }
        acc
    }

    pub fn add(&self, o: &Self) -> Self {
        let n = self.coeffs.len().max(o.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) + o.coeff(k)).collect())
    }

    pub fn sub(&self, o: &Self) -> Self {
        let n = self.coeffs.len().max(o.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) - o.coeff(k)).collect())
    }

    pub fn scale(&self, c: &F) -> Self {
        Poly::new(self.coeffs.iter().map(|a| a.clone() * c.clone()).collect())
    }

    pub fn mul(&self, o: &Self) -> Self {
        if self.is_zero() || o.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![F::zero(); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in o.coeffs.iter().enumerate() {
                let cur = std::mem::replace(&mut out[i + j], F::zero());
                out[i + j] = cur + a.clone() * b.clone();
            }
        }
        Poly::new(out)
    }

    /// Antiderivative vanishing at zero.
    pub fn integral(&self) -> Self {
        let mut out = vec![F::zero()];
        for (k, c) in self.coeffs.iter().enumerate() {
            out.push(c.clone() / F::from_i64(k as i64 + 1));
        }
        Poly::new(out)
    }

    pub fn derivative(&self) -> Self {
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c.clone() * F::from_i64(k as i64))
                .collect(),
        )
    }

    /// `p(t + s)`.
    pub fn shift(&self, s: &F) -> Self {
        let mut out = Poly::zero();
        let lin = Poly::new(vec![s.clone(), F::one()]);
        for c in self.coeffs.iter().rev() {
            out = out.mul(&lin).add(&Poly::constant(c.clone()));
        }
        out
    }

    pub fn to_f64(&self) -> Poly<f64> {
        Poly::new(self.coeffs.iter().map(|c| c.to_f64()).collect())
    }
}

/// Matrix with polynomial entries, stored as a list of coefficient matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyMat<F> {
    pub rows: usize,
    pub cols: usize,
    /// `terms[k]` multiplies `t^k`.
    pub terms: Vec<Mat<F>>,
}

impl<F: Scalar> PolyMat<F> {
    pub fn constant(m: Mat<F>) -> Self {
        PolyMat { rows: m.rows, cols: m.cols, terms: vec![m] }
    }

    pub fn eval(&self, t: &F) -> Mat<F> {
        let mut acc = Mat::zeros(self.rows, self.cols);
        for m in self.terms.iter().rev() {
            acc = acc.scale(t).add(m);
        }
        acc
    }

    /// Polynomial column vector `self * v`.
    pub fn mul_vec(&self, v: &[F]) -> Vec<Poly<F>> {
        let per_term: Vec<Vec<F>> = self.terms.iter().map(|m| m.mul_vec(v)).collect();
        (0..self.rows)
            .map(|i| Poly::new(per_term.iter().map(|c| c[i].clone()).collect()))
            .collect()
    }

    /// Left multiplication by a constant matrix.
    pub fn left_mul(&self, a: &Mat<F>) -> Self {
        PolyMat { rows: a.rows, cols: self.cols, terms: self.terms.iter().map(|m| a.mul(m)).collect() }
    }
}
