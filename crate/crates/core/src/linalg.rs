//! Dense matrices over a [`Scalar`] and Gaussian elimination.

use std::ops::{Index, IndexMut};

use crate::scalar::Scalar;

/// Default zero threshold for floating elimination.
pub const FLOAT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Mat<F> {
    pub rows: usize,
    pub cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![F::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend(row.iter().cloned());
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn from_cols(cols: &[Vec<F>]) -> Self {
        Self::from_rows(cols).transpose()
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<F> {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<F>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "dimension mismatch in product");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = &other[(k, j)];
                    if b.is_zero() {
                        continue;
                    }
                    let cur = std::mem::replace(&mut out[(i, j)], F::zero());
                    out[(i, j)] = cur + a.clone() * b.clone();
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[F]) -> Vec<F> {
        assert_eq!(self.cols, v.len(), "dimension mismatch in product");
        (0..self.rows)
            .map(|i| {
                let mut acc = F::zero();
                for (a, b) in self.row(i).iter().zip(v) {
                    if !a.is_zero() && !b.is_zero() {
                        acc = acc + a.clone() * b.clone();
                    }
                }
                acc
            })
            .collect()
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a.clone() + b.clone()).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a.clone() - b.clone()).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, c: &F) -> Self {
        let data = self.data.iter().map(|a| a.clone() * c.clone()).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|a| a.is_zero())
    }

    pub fn trace(&self) -> F {
        let mut t = F::zero();
        for i in 0..self.rows.min(self.cols) {
            t = t + self[(i, i)].clone();
        }
        t
    }

    pub fn map<G: Scalar>(&self, f: impl Fn(&F) -> G) -> Mat<G> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }

    pub fn to_f64(&self) -> Mat<f64> {
        self.map(|x| x.to_f64())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.magnitude()).fold(0.0, f64::max)
    }
}

impl<F> Index<(usize, usize)> for Mat<F> {
    type Output = F;
    fn index(&self, (i, j): (usize, usize)) -> &F {
        &self.data[i * self.cols + j]
    }
}

impl<F> IndexMut<(usize, usize)> for Mat<F> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        &mut self.data[i * self.cols + j]
    }
}

/// Reduced row echelon form in place; returns pivot columns.
///
/// Exact scalars pivot on the first nonzero entry; floats use partial
/// pivoting and treat entries with `|x| <= tol` as zero.
pub fn rref<F: Scalar>(m: &mut Mat<F>, tol: f64) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..m.cols {
        if r == m.rows {
            break;
        }
        let mut best: Option<usize> = None;
        for i in r..m.rows {
            if m[(i, c)].near_zero(tol) {
                continue;
            }
            match best {
                None => best = Some(i),
                Some(b) if F::MODE == crate::scalar::Mode::Float
                    && m[(i, c)].magnitude() > m[(b, c)].magnitude() =>
                {
                    best = Some(i)
                }
                _ => {}
            }
            if F::MODE == crate::scalar::Mode::Exact && best.is_some() {
                break;
            }
        }
        let Some(p) = best else { continue };
        if p != r {
            for j in 0..m.cols {
                let tmp = m[(p, j)].clone();
                m[(p, j)] = m[(r, j)].clone();
                m[(r, j)] = tmp;
            }
        }
        let inv = F::one() / m[(r, c)].clone();
        for j in 0..m.cols {
            m[(r, j)] = m[(r, j)].clone() * inv.clone();
        }
        for i in 0..m.rows {
            if i == r {
                continue;
            }
            let f = m[(i, c)].clone();
            if f.is_zero() {
                continue;
            }
            for j in 0..m.cols {
                let pr = m[(r, j)].clone();
                if pr.is_zero() {
                    continue;
                }
                m[(i, j)] = m[(i, j)].clone() - f.clone() * pr;
            }
            m[(i, c)] = F::zero();
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

pub fn rank<F: Scalar>(m: &Mat<F>, tol: f64) -> usize {
    let mut w = m.clone();
    rref(&mut w, tol).len()
}

/// Basis of `{x : m x = 0}`, one vector per free column.
pub fn kernel<F: Scalar>(m: &Mat<F>, tol: f64) -> Vec<Vec<F>> {
    let mut w = m.clone();
    let pivots = rref(&mut w, tol);
    let mut out = Vec::new();
    for free in (0..m.cols).filter(|c| !pivots.contains(c)) {
        let mut v = vec![F::zero(); m.cols];
        v[free] = F::one();
        for (r, &pc) in pivots.iter().enumerate() {
            v[pc] = -w[(r, free)].clone();
        }
        out.push(v);
    }
    out
}

pub fn inverse<F: Scalar>(m: &Mat<F>, tol: f64) -> Option<Mat<F>> {
    assert_eq!(m.rows, m.cols, "inverse of a non-square matrix");
    let n = m.rows;
    let mut aug = Mat::zeros(n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            aug[(i, j)] = m[(i, j)].clone();
        }
        aug[(i, n + i)] = F::one();
    }
    let pivots = rref(&mut aug, tol);
    if pivots.len() < n || pivots[n - 1] != n - 1 {
        return None;
    }
    let mut inv = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            inv[(i, j)] = aug[(i, n + j)].clone();
        }
    }
    Some(inv)
}

/// Some solution of `a x = b`, or `None` when inconsistent.
pub fn solve<F: Scalar>(a: &Mat<F>, b: &[F], tol: f64) -> Option<Vec<F>> {
    assert_eq!(a.rows, b.len());
    let mut aug = Mat::zeros(a.rows, a.cols + 1);
    for i in 0..a.rows {
        for j in 0..a.cols {
            aug[(i, j)] = a[(i, j)].clone();
        }
        aug[(i, a.cols)] = b[i].clone();
    }
    let pivots = rref(&mut aug, tol);
    if pivots.last() == Some(&a.cols) {
        return None;
    }
    let mut x = vec![F::zero(); a.cols];
    for (r, &pc) in pivots.iter().enumerate() {
        x[pc] = aug[(r, a.cols)].clone();
    }
    Some(x)
}

/// Reduced echelon basis of the span of `vectors`.
pub fn span_basis<F: Scalar>(vectors: &[Vec<F>], dim: usize, tol: f64) -> Vec<Vec<F>> {
    if vectors.is_empty() {
        return Vec::new();
    }
    let mut m = Mat::from_rows(vectors);
    assert_eq!(m.cols, dim);
    let k = rref(&mut m, tol).len();
    (0..k).map(|i| m.row(i).to_vec()).collect()
}

/// Numerical rank from singular values relative to the largest one.
pub fn numeric_rank(m: &Mat<f64>, tol: f64) -> usize {
    if m.rows == 0 || m.cols == 0 {
        return 0;
    }
    let dm = nalgebra::DMatrix::from_fn(m.rows, m.cols, |i, j| m[(i, j)]);
    let sv = dm.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > tol * smax.max(1.0)).count()
}

pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    let mut acc = F::zero();
    for (x, y) in a.iter().zip(b) {
        if !x.is_zero() && !y.is_zero() {
            acc = acc + x.clone() * y.clone();
        }
    }
    acc
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
