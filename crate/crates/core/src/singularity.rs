//! Image of the differential of the endpoint map, its annihilator, the
//! moment matrix `M_u(lambda, t)` and the kernel residual.
//!
//! The image is the span of `A(t) Y` over horizontal `Y` and all `t`. On a
//! polynomial piece `A(t)` is a polynomial matrix, so spanning its
//! coefficient vectors gives the continuous span exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chen_flow::{piece_flows, PolyControl};
use crate::error::{Error, Result};
use crate::free_lie::{Algebra, DualCovector};
use crate::linalg::{self, Mat, FLOAT_TOL};
use crate::poly::Poly;
use crate::scalar::{clear_denominators, FromF64Lossy, Mode, Scalar};

/// Span of `A(t) Y`, `Y` horizontal, over the whole control.
#[derive(Clone, Debug)]
pub struct DifferentialImage<F> {
    pub alg: Algebra,
    /// Coefficient vectors of `A(t) e_i` per piece and power of local time.
    pub generators: Vec<Vec<F>>,
    /// Basis of the span (echelon form when exact, orthonormal when float).
    pub basis: Vec<Vec<F>>,
    pub rank: usize,
    /// Rank threshold for float data, `None` when exact.
    pub tol: Option<f64>,
}

impl<F: Scalar> DifferentialImage<F> {
    pub fn codim(&self) -> usize {
        self.alg.dim() - self.rank
    }

    pub fn is_singular(&self) -> bool {
        self.rank < self.alg.dim()
    }

    /// Rank after appending extra vectors, with the same rank rule.
    pub fn rank_with(&self, extra: &[Vec<F>]) -> usize {
        let mut all = self.basis.clone();
        all.extend(extra.iter().cloned());
        span_rank(&all, self.alg.dim(), self.tol)
    }

    /// Whether `v` lies in the span.
    pub fn contains(&self, v: &[F]) -> bool {
        self.rank_with(&[v.to_vec()]) == self.rank
    }
}

fn span_rank<F: Scalar>(vectors: &[Vec<F>], dim: usize, tol: Option<f64>) -> usize {
    if vectors.is_empty() {
        return 0;
    }
    match tol {
        None => linalg::rank(&Mat::from_rows(vectors), 0.0),
        Some(t) => linalg::numeric_rank(&Mat::from_rows(vectors).to_f64(), t),
    }
    .min(dim)
}

/// Orthonormal bases of the row space and of its orthogonal complement.
fn svd_split(vectors: &[Vec<f64>], dim: usize, tol: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let rows = vectors.len().max(dim);
    let m = nalgebra::DMatrix::from_fn(rows, dim, |i, j| vectors.get(i).map(|v| v[j]).unwrap_or(0.0));
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cut = tol * smax.max(1.0);
    let mut range = Vec::new();
    let mut null = Vec::new();
    for (k, s) in svd.singular_values.iter().enumerate() {
        let row: Vec<f64> = vt.row(k).iter().cloned().collect();
        if *s > cut {
            range.push(row);
        } else {
            null.push(row);
        }
    }
    (range, null)
}

/// Exact span in exact mode; singular-value thresholding at `tol` (default
/// `1e-9`) for float data.
pub fn image_of_differential<F: Scalar>(alg: &Algebra, u: &PolyControl<F>) -> Result<DifferentialImage<F>> {
    image_of_differential_tol(alg, u, FLOAT_TOL)
}

pub fn image_of_differential_tol<F: Scalar>(
    alg: &Algebra,
    u: &PolyControl<F>,
    tol: f64,
) -> Result<DifferentialImage<F>> {
    let flows = piece_flows(alg, u)?;
    let r = alg.rank();
    let mut generators = Vec::new();
    for f in &flows {
        for term in &f.global().terms {
            for i in 0..r {
                let c = term.col(i);
                if c.iter().any(|x| !x.is_zero()) {
                    generators.push(c);
                }
            }
        }
    }
    let n = alg.dim();
    let (basis, rank, tol) = match F::MODE {
        Mode::Exact => {
            let b = linalg::span_basis(&generators, n, 0.0);
            let k = b.len();
            (b, k, None)
        }
        Mode::Float => {
            let fl: Vec<Vec<f64>> = generators.iter().map(|v| v.iter().map(|x| x.to_f64()).collect()).collect();
            let (range, _) = svd_split(&fl, n, tol);
            let k = range.len();
            let b = range.into_iter().map(|v| v.into_iter().map(F::from_f64_lossy).collect()).collect();
            (b, k, Some(tol))
        }
    };
    Ok(DifferentialImage { alg: alg.clone(), generators, basis, rank, tol })
}

/// Normalised basis of the annihilator of the image: denominator-cleared
/// with a positive leading entry when exact, unit norm with a positive
/// leading entry when float.
pub fn annihilator<F: Scalar>(img: &DifferentialImage<F>) -> Vec<DualCovector<F>> {
    let n = img.alg.dim();
    let raw: Vec<Vec<F>> = match img.tol {
        None => {
            if img.basis.is_empty() {
                (0..n).map(|i| crate::free_lie::unit(n, i).iter().map(F::from_rational).collect()).collect()
            } else {
                linalg::kernel(&Mat::from_rows(&img.basis), 0.0)
            }
        }
        Some(tol) => {
            let fl: Vec<Vec<f64>> = img.basis.iter().map(|v| v.iter().map(|x| x.to_f64()).collect()).collect();
            let (_, null) = svd_split(&fl, n, tol);
            null.into_iter().map(|v| v.into_iter().map(F::from_f64_lossy).collect()).collect()
        }
    };
    raw.into_iter()
        .map(|v| DualCovector { alg: img.alg.clone(), coords: normalize_covector(&v, img.tol) })
        .collect()
}

fn normalize_covector<F: Scalar>(v: &[F], tol: Option<f64>) -> Vec<F> {
    match F::MODE {
        Mode::Exact => {
            let q: Vec<_> = v.iter().map(|x| x.to_rational()).collect();
            clear_denominators(&q).iter().map(F::from_rational).collect()
        }
        Mode::Float => {
            let t = tol.unwrap_or(FLOAT_TOL);
            let f: Vec<f64> = v.iter().map(|x| x.to_f64()).collect();
            let norm = linalg::norm2(&f);
            let lead = f.iter().find(|x| x.abs() > t * norm.max(1.0)).copied().unwrap_or(1.0);
            let s = if lead < 0.0 { -1.0 / norm } else { 1.0 / norm };
            f.iter().map(|x| F::from_f64_lossy(x * s)).collect()
        }
    }
}

/// True when every covector vanishes on `g2` (the Goh condition).
pub fn goh_holds<F: Scalar>(covectors: &[DualCovector<F>], tol: f64) -> bool {
    covectors.iter().all(|l| {
        l.alg.step() < 2 || l.alg.layer_range(2).all(|i| l.coords[i].near_zero(tol))
    })
}

// ---------------------------------------------------------------------------
// Moment matrix
// ---------------------------------------------------------------------------

/// `M_u(lambda, t)_{ij} = lambda(A(t) [X_i, X_j])`, polynomial per piece.
#[derive(Clone, Debug)]
pub struct MomentMatrix<F> {
    pub size: usize,
    pub pieces: Vec<MomentPiece<F>>,
}

#[derive(Clone, Debug)]
pub struct MomentPiece<F> {
    pub start: F,
    pub duration: F,
    /// `entries[i][j]` in local time.
    pub entries: Vec<Vec<Poly<F>>>,
    /// The control components on this piece.
    pub control: Vec<Poly<F>>,
}

impl<F: Scalar> MomentMatrix<F> {
    fn locate(&self, t: &F) -> Result<(usize, F)> {
        let last = self.pieces.len() - 1;
        for (k, p) in self.pieces.iter().enumerate() {
            let end = p.start.clone() + p.duration.clone();
            if (*t >= p.start && *t < end) || (k == last && *t >= p.start && *t <= end) {
                return Ok((k, t.clone() - p.start.clone()));
            }
        }
        Err(Error::Invalid(format!("time {} outside the control domain", t.to_text())))
    }

    pub fn eval(&self, t: &F) -> Result<Mat<F>> {
        let (k, s) = self.locate(t)?;
        let p = &self.pieces[k];
        let mut m = Mat::zeros(self.size, self.size);
        for i in 0..self.size {
            for j in 0..self.size {
                m[(i, j)] = p.entries[i][j].eval(&s);
            }
        }
        Ok(m)
    }

    /// Polynomial vector `M(t) u(t)` on each piece.
    pub fn kernel_polys(&self) -> Vec<Vec<Poly<F>>> {
        self.pieces
            .iter()
            .map(|p| {
                (0..self.size)
                    .map(|i| {
                        (0..self.size).fold(Poly::zero(), |acc, j| acc.add(&p.entries[i][j].mul(&p.control[j])))
                    })
                    .collect()
            })
            .collect()
    }
}

pub fn moment_matrix<F: Scalar>(u: &PolyControl<F>, lambda: &DualCovector<F>) -> Result<MomentMatrix<F>> {
    let alg = &lambda.alg;
    let r = alg.rank();
    let n = alg.dim();
    let flows = piece_flows(alg, u)?;
    // coordinates of [X_i, X_j]
    let brackets: Vec<Vec<Vec<F>>> = (0..r)
        .map(|i| {
            (0..r)
                .map(|j| {
                    let ei: Vec<F> = (0..n).map(|k| if k == i { F::one() } else { F::zero() }).collect();
                    let ej: Vec<F> = (0..n).map(|k| if k == j { F::one() } else { F::zero() }).collect();
                    alg.bracket_coords(&ei, &ej)
                })
                .collect()
        })
        .collect();
    let mut pieces = Vec::with_capacity(flows.len());
    for (f, cp) in flows.iter().zip(&u.pieces) {
        let g = f.global();
        // lambda^T G_p for each power p
        let rows: Vec<Vec<F>> = g
            .terms
            .iter()
            .map(|m| (0..n).map(|c| linalg::dot(&lambda.coords, &m.col(c))).collect())
            .collect();
        let entries = (0..r)
            .map(|i| {
                (0..r)
                    .map(|j| Poly::new(rows.iter().map(|row| linalg::dot(row, &brackets[i][j])).collect()))
                    .collect()
            })
            .collect();
        pieces.push(MomentPiece {
            start: f.start.clone(),
            duration: f.duration.clone(),
            entries,
            control: cp.poly.clone(),
        });
    }
    Ok(MomentMatrix { size: r, pieces })
}

/// Pfaffian of a 2x2 skew matrix, its `(1,2)` entry.
pub fn pfaffian2<F: Scalar>(m: &Mat<F>) -> Result<F> {
    if m.rows != 2 || m.cols != 2 {
        return Err(Error::Invalid("pfaffian2 expects a 2x2 matrix".into()));
    }
    let scale = m.max_abs().max(1.0);
    let tol = if F::MODE == Mode::Exact { 0.0 } else { 1e-12 * scale };
    if !m[(0, 0)].near_zero(tol)
        || !m[(1, 1)].near_zero(tol)
        || !(m[(0, 1)].clone() + m[(1, 0)].clone()).near_zero(tol)
    {
        return Err(Error::Invalid("pfaffian2 expects a skew-symmetric matrix".into()));
    }
    Ok(m[(0, 1)].clone())
}

// ---------------------------------------------------------------------------
// Kernel residual
// ---------------------------------------------------------------------------

/// Result of a kernel-residual evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    /// Max of `|M_u(lambda, t) u(t)|` over the sample times.
    pub value: f64,
    /// `M u` is the zero polynomial on every piece, so the criterion holds
    /// for all `t` (checked only for exact data).
    pub exact_zero: bool,
}

fn residual_at_times<F: Scalar>(m: &MomentMatrix<F>, polys: &[Vec<Poly<F>>], times: &[F]) -> Result<f64> {
    let mut best: f64 = 0.0;
    for t in times {
        let (k, s) = m.locate(t)?;
        let s = s.to_f64();
        let norm = polys[k].iter().map(|p| p.eval_f64(s).powi(2)).sum::<f64>().sqrt();
        best = best.max(norm);
    }
    Ok(best)
}

/// Max of `|M_u(lambda,t) u(t)|` over `grid` uniform times on `[0, T]`
/// (`u` right-continuous, left limit at `T`). Exact data is first checked
/// symbolically; an identically zero polynomial gives exactly zero.
pub fn kernel_residual<F: Scalar>(u: &PolyControl<F>, lambda: &DualCovector<F>, grid: usize) -> Result<Residual> {
    if grid < 2 {
        return Err(Error::Invalid("kernel residual needs at least two grid points".into()));
    }
    let total = u.total();
    let times: Vec<F> = (0..grid)
        .map(|k| total.clone() * F::from_ratio(k as i64, (grid - 1) as i64))
        .collect();
    kernel_residual_at(u, lambda, &times)
}

/// Same as [`kernel_residual`] at the given times.
pub fn kernel_residual_at<F: Scalar>(u: &PolyControl<F>, lambda: &DualCovector<F>, times: &[F]) -> Result<Residual> {
    let m = moment_matrix(u, lambda)?;
    let polys = m.kernel_polys();
    if F::MODE == Mode::Exact && polys.iter().all(|v| v.iter().all(|p| p.is_zero())) {
        return Ok(Residual { value: 0.0, exact_zero: true });
    }
    Ok(Residual { value: residual_at_times(&m, &polys, times)?, exact_zero: false })
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularityReport {
    pub control: String,
    pub rank: usize,
    pub codim: usize,
    pub annihilator: Vec<BTreeMap<String, String>>,
    /// Whether the annihilator vanishes on `g2`; reported for rank-2 algebras.
    pub goh: Option<bool>,
    /// Kernel residual of the supplied covector, or of the first
    /// annihilator element when none is supplied.
    pub residual: Option<f64>,
    pub residual_exact_zero: Option<bool>,
    pub mode: Mode,
    pub tolerance: Option<f64>,
}

pub const DEFAULT_GRID: usize = 257;

pub fn singularity_report<F: Scalar>(
    name: &str,
    alg: &Algebra,
    u: &PolyControl<F>,
    lambda: Option<&DualCovector<F>>,
    tol: f64,
) -> Result<SingularityReport> {
    let img = image_of_differential_tol(alg, u, tol)?;
    let ann = annihilator(&img);
    let goh = (alg.rank() == 2).then(|| goh_holds(&ann, tol));
    let probe = lambda.or(ann.first());
    let res = match probe {
        Some(l) => Some(kernel_residual(u, l, DEFAULT_GRID)?),
        None => None,
    };
    Ok(SingularityReport {
        control: name.to_string(),
        rank: img.rank,
        codim: img.codim(),
        annihilator: ann.iter().map(|l| l.to_word_map()).collect(),
        goh,
        residual: res.as_ref().map(|r| r.value),
        residual_exact_zero: res.as_ref().map(|r| r.exact_zero),
        mode: F::MODE,
        tolerance: img.tol,
    })
}
