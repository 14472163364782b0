//! Affine systems `x' = M x + v` attached to covectors, their strata and
//! normal forms.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_lie::{Algebra, DualCovector};
use crate::linalg::{self, Mat};
use crate::scalar::{ratio_to_f64, FromF64Lossy, Mode, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseKind {
    R2S3,
    R2S4,
    R3S3,
}

/// Which (rank, step) family a computation belongs to, and whether the
/// algebra is free or a quotient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CaseTag {
    pub kind: CaseKind,
    pub free: bool,
}

impl CaseTag {
    pub fn new(kind: CaseKind, free: bool) -> Self {
        CaseTag { kind, free }
    }

    pub fn rank(&self) -> usize {
        match self.kind {
            CaseKind::R2S3 | CaseKind::R2S4 => 2,
            CaseKind::R3S3 => 3,
        }
    }

    pub fn step(&self) -> usize {
        match self.kind {
            CaseKind::R2S3 | CaseKind::R3S3 => 3,
            CaseKind::R2S4 => 4,
        }
    }

    pub fn name(&self) -> &'static str {
        match (self.kind, self.free) {
            (CaseKind::R2S3, _) => "r2s3",
            (CaseKind::R2S4, _) => "r2s4",
            (CaseKind::R3S3, false) => "r3s3",
            (CaseKind::R3S3, true) => "r3s3-free",
        }
    }

    /// Tag matching the rank and step of `alg`.
    pub fn of_algebra(alg: &Algebra) -> Result<Self> {
        let kind = match (alg.rank(), alg.step()) {
            (2, 3) => CaseKind::R2S3,
            (2, 4) => CaseKind::R2S4,
            (3, 3) => CaseKind::R3S3,
            (r, s) => {
                return Err(Error::Invalid(format!(
                    "no stratification for rank {r} step {s}; supported: (2,3), (2,4), (3,3)"
                )))
            }
        };
        Ok(CaseTag { kind, free: alg.is_free() })
    }

    pub fn check(&self, alg: &Algebra) -> Result<()> {
        if alg.rank() != self.rank() || alg.step() != self.step() {
            return Err(Error::AlgebraMismatch(format!(
                "case {} needs rank {} step {}, algebra has rank {} step {}",
                self.name(),
                self.rank(),
                self.step(),
                alg.rank(),
                alg.step()
            )));
        }
        Ok(())
    }
}

/// `x' = M x + v` read off a covector.
#[derive(Clone, Debug)]
pub struct AffineSystem<F> {
    pub case: CaseTag,
    pub m: Mat<F>,
    pub v: Vec<F>,
    pub lambda: DualCovector<F>,
}

impl<F: Scalar> AffineSystem<F> {
    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn to_f64(&self) -> AffineSystem<f64> {
        AffineSystem { case: self.case, m: self.m.to_f64(), v: self.v.iter().map(|x| x.to_f64()).collect(), lambda: self.lambda.to_f64() }
    }

    pub fn to_rational(&self) -> AffineSystem<BigRational> {
        AffineSystem {
            case: self.case,
            m: self.m.map(|x| x.to_rational()),
            v: self.v.iter().map(|x| x.to_rational()).collect(),
            lambda: DualCovector { alg: self.lambda.alg.clone(), coords: self.lambda.coords.iter().map(|x| x.to_rational()).collect() },
        }
    }

    /// `M x + v`.
    pub fn drift(&self, x: &[F]) -> Vec<F> {
        self.m.mul_vec(x).into_iter().zip(&self.v).map(|(a, b)| a + b.clone()).collect()
    }
}

/// Word values entering `M` and `v`.
pub const R2S4_WORDS: [&str; 5] = ["212", "112", "2112", "2212", "1112"];
pub const R3S3_MATRIX_WORDS: [[&str; 3]; 3] = [["123", "223", "323"], ["131", "231", "331"], ["112", "212", "312"]];
pub const R3S3_DRIFT_WORDS: [&str; 3] = ["23", "31", "12"];

pub fn system_of<F: Scalar>(lambda: &DualCovector<F>, case: CaseTag) -> Result<AffineSystem<F>> {
    let alg = &lambda.alg;
    case.check(alg)?;
    match case.kind {
        CaseKind::R2S3 | CaseKind::R2S4 => lambda.require_vanishing(&[1, 2])?,
        CaseKind::R3S3 => lambda.require_vanishing(&[1])?,
    }
    let w = |t: &str| lambda.eval_word(t);
    let (m, v) = match case.kind {
        CaseKind::R2S3 => (Mat::zeros(2, 2), vec![w("212")?, -w("112")?]),
        CaseKind::R2S4 => {
            let a = w("2112")?;
            if w("1212")? != a {
                return Err(Error::Classification("covector violates the relation between 1212 and 2112".into()));
            }
            let m = Mat::from_rows(&[vec![a.clone(), w("2212")?], vec![-w("1112")?, -a]]);
            (m, vec![w("212")?, -w("112")?])
        }
        CaseKind::R3S3 => {
            let rows = R3S3_MATRIX_WORDS
                .iter()
                .map(|r| r.iter().map(|t| w(t)).collect::<Result<Vec<F>>>())
                .collect::<Result<Vec<_>>>()?;
            let v = R3S3_DRIFT_WORDS.iter().map(|t| w(t)).collect::<Result<Vec<F>>>()?;
            (Mat::from_rows(&rows), v)
        }
    };
    Ok(AffineSystem { case, m, v, lambda: lambda.clone() })
}

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumLabel {
    pub case: CaseTag,
    /// Major stratum index; the unstratified rank-2 step-3 case uses 1.
    pub lambda: usize,
    /// First matching drift set, if the stratum is refined.
    pub xi: Option<usize>,
    /// Every matching drift set; the sets of one stratum may overlap.
    pub xi_all: Vec<usize>,
    /// A float decision was within tolerance of a stratum boundary.
    pub near_boundary: bool,
}

/// Zero/nonzero decisions with a relative tolerance in float mode.
pub(crate) struct Decider {
    tol: f64,
    pub near: bool,
}

impl Decider {
    pub(crate) fn new(tol: f64) -> Self {
        Decider { tol, near: false }
    }

    pub(crate) fn is_zero<F: Scalar>(&mut self, x: &F, scale: f64) -> bool {
        if F::MODE == Mode::Exact {
            return x.is_zero();
        }
        let s = scale.max(1.0);
        let a = x.to_f64().abs();
        if a <= self.tol * s {
            if a != 0.0 {
                self.near = true;
            }
            return true;
        }
        if a <= self.tol.sqrt() * s {
            self.near = true;
        }
        false
    }

    pub(crate) fn sign<F: Scalar>(&mut self, x: &F, scale: f64) -> i8 {
        if self.is_zero(x, scale) {
            0
        } else if x.is_positive() {
            1
        } else {
            -1
        }
    }

    pub(crate) fn rank<F: Scalar>(&mut self, m: &Mat<F>, scale: f64) -> usize {
        linalg::rank(m, self.tol * scale.max(1.0))
    }
}

fn det2<F: Scalar>(m: &Mat<F>, (i, j): (usize, usize)) -> F {
    m[(i, i)].clone() * m[(j, j)].clone() - m[(i, j)].clone() * m[(j, i)].clone()
}

pub(crate) fn det3<F: Scalar>(m: &Mat<F>) -> F {
    let e = |i: usize, j: usize| m[(i, j)].clone();
    e(0, 0) * (e(1, 1) * e(2, 2) - e(1, 2) * e(2, 1)) - e(0, 1) * (e(1, 0) * e(2, 2) - e(1, 2) * e(2, 0))
        + e(0, 2) * (e(1, 0) * e(2, 1) - e(1, 1) * e(2, 0))
}

/// `(p, q)` with characteristic polynomial `t^3 + p t + q` of a trace-free 3x3 matrix.
pub(crate) fn cubic_coeffs<F: Scalar>(m: &Mat<F>) -> (F, F) {
    let p = det2(m, (0, 1)) + det2(m, (0, 2)) + det2(m, (1, 2));
    (p, -det3(m))
}

fn m_minus<F: Scalar>(m: &Mat<F>, c: &F) -> Mat<F> {
    m.sub(&Mat::identity(m.rows).scale(c))
}

pub fn classify<F: Scalar>(lambda: &DualCovector<F>, case: CaseTag, tol: f64) -> Result<StratumLabel> {
    let sys = system_of(lambda, case)?;
    Ok(analyze(&sys, tol)?.0)
}

/// Major stratum of `M`.
pub(crate) fn major<F: Scalar>(sys: &AffineSystem<F>, dec: &mut Decider) -> Result<usize> {
    let m = &sys.m;
    if !m.trace().near_zero(1e-9 * m.max_abs().max(1.0)) {
        return Err(Error::Classification("matrix is not trace free".into()));
    }
    let s = m.max_abs().max(1.0);
    Ok(match sys.case.kind {
        CaseKind::R2S3 => 1,
        CaseKind::R2S4 => {
            let d = det2(m, (0, 1));
            match dec.sign(&d, s * s) {
                -1 => 1,
                1 => 2,
                _ => {
                    if dec.rank(m, s) == 1 {
                        3
                    } else {
                        4
                    }
                }
            }
        }
        CaseKind::R3S3 => {
            let (p, q) = cubic_coeffs(m);
            if !dec.is_zero(&q, s.powi(3)) {
                let disc = -(F::from_i64(4) * p.clone() * p.clone() * p.clone()) - F::from_i64(27) * q.clone() * q.clone();
                match dec.sign(&disc, s.powi(6)) {
                    1 => 1,
                    -1 => 3,
                    _ => {
                        let a = -(F::from_i64(3) * q) / (F::from_i64(2) * p);
                        if dec.rank(&m_minus(m, &a), s) == 1 {
                            2
                        } else {
                            4
                        }
                    }
                }
            } else {
                match dec.rank(m, s) {
                    0 => 9,
                    1 => 8,
                    _ => match dec.sign(&p, s * s) {
                        -1 => 5,
                        1 => 6,
                        _ => 7,
                    },
                }
            }
        }
    })
}

/// Drift sets containing a covector, from which components of `b` vanish.
pub(crate) fn xi_sets(kind: CaseKind, lambda: usize, z: &[bool]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut push = |c: bool, i: usize| {
        if c {
            out.push(i)
        }
    };
    match (kind, lambda) {
        (CaseKind::R2S4, 1) => {
            push(!z[0] && !z[1], 1);
            push(z[0], 2);
            push(z[1], 3);
        }
        (CaseKind::R2S4, 2) => {
            push(z[0] && z[1], 4);
            push(!z[0], 5);
            push(!z[1], 6);
        }
        (CaseKind::R2S4, 3) => {
            push(!z[1], 7);
            push(z[1] && !z[0], 8);
            push(z[0] && z[1], 9);
        }
        (CaseKind::R3S3, 1) | (CaseKind::R3S3, 2) => {
            push(!(z[0] && z[1]) && !z[2], 1);
            push(z[2], 2);
            push(z[0] && z[1], 3);
        }
        (CaseKind::R3S3, 3) => {
            push(!(z[0] && z[1]) && !z[2], 4);
            push(z[0] && z[1], 5);
            push(z[2], 6);
        }
        (CaseKind::R3S3, 5) => {
            push(!z[2], 7);
            push(z[2] && !z[0] && !z[1], 8);
            push(z[2] && z[0], 9);
            push(z[2] && z[1], 10);
        }
        (CaseKind::R3S3, 6) => {
            push(!z[2], 11);
            push(!z[0] && z[2], 12);
            push(!z[1] && z[2], 13);
            push(z.iter().all(|x| *x), 14);
        }
        (CaseKind::R3S3, 7) => {
            push(!z[2], 15);
            push(z[2] && !z[0], 16);
            push(z[2] && !z[1], 17);
            push(z.iter().all(|x| *x), 18);
        }
        (CaseKind::R3S3, 8) => {
            push(!z[1], 19);
            push(!z[2], 20);
            push(z[1] && z[2] && !z[0], 21);
            push(z.iter().all(|x| *x), 22);
        }
        _ => {}
    }
    out
}

// ---------------------------------------------------------------------------
// Normal forms
// ---------------------------------------------------------------------------

/// `M = mu P N P^{-1}` and `b = P^{-1} v / mu`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalForm<F> {
    pub n: Mat<F>,
    pub p: Mat<F>,
    pub b: Vec<F>,
    pub mu: F,
}

impl<F: Scalar> NormalForm<F> {
    pub fn to_f64(&self) -> NormalForm<f64> {
        NormalForm { n: self.n.to_f64(), p: self.p.to_f64(), b: self.b.iter().map(|x| x.to_f64()).collect(), mu: self.mu.to_f64() }
    }

    /// `N z + b`.
    pub fn drift(&self, z: &[F]) -> Vec<F> {
        self.n.mul_vec(z).into_iter().zip(&self.b).map(|(a, b)| a + b.clone()).collect()
    }

    /// Original coordinates `P z`.
    pub fn to_original(&self, z: &[F]) -> Vec<F> {
        self.p.mul_vec(z)
    }
}

/// Stratum plus normal form; the exact form is present when all eigen data are rational.
#[derive(Clone, Debug)]
pub struct NormalizedSystem {
    pub label: StratumLabel,
    pub exact: Option<NormalForm<BigRational>>,
    pub float: NormalForm<f64>,
}

impl NormalizedSystem {
    /// Rotated frame `X_i(lambda) = sum_j P_ji X_j` as horizontal coordinate vectors.
    pub fn frame(&self) -> Vec<Vec<f64>> {
        (0..self.float.p.cols).map(|i| self.float.p.col(i)).collect()
    }

    pub fn dim(&self) -> usize {
        self.float.b.len()
    }
}

pub fn normalize<F: Scalar>(sys: &AffineSystem<F>, tol: f64) -> Result<NormalizedSystem> {
    let (label, frame) = analyze(sys, tol)?;
    match (F::MODE, frame) {
        (Mode::Exact, Some(f)) => {
            let exact = NormalForm {
                n: f.n.map(|x| x.to_rational()),
                p: f.p.map(|x| x.to_rational()),
                b: f.b.iter().map(|x| x.to_rational()).collect(),
                mu: f.mu.to_rational(),
            };
            let float = exact.to_f64();
            Ok(NormalizedSystem { label, exact: Some(exact), float })
        }
        (Mode::Float, Some(f)) => Ok(NormalizedSystem { label, exact: None, float: f.to_f64() }),
        (_, None) => {
            let fs = sys.to_f64();
            let f = build_frame(&fs, label.lambda, tol)?
                .ok_or_else(|| Error::Classification("float normal form unavailable".into()))?;
            Ok(NormalizedSystem { label, exact: None, float: f })
        }
    }
}

/// Label plus, when representable in `F`, the normal form.
pub(crate) fn analyze<F: Scalar>(sys: &AffineSystem<F>, tol: f64) -> Result<(StratumLabel, Option<NormalForm<F>>)> {
    let mut dec = Decider::new(tol);
    let lam = major(sys, &mut dec)?;
    let frame = build_frame(sys, lam, tol)?;
    let zeros = match &frame {
        Some(f) => {
            let s = f.b.iter().map(|x| x.to_f64().abs()).fold(1.0, f64::max);
            f.b.iter().map(|x| dec.is_zero(x, s)).collect::<Vec<_>>()
        }
        None => exact_zero_pattern(&sys.to_rational(), lam)?,
    };
    let xi_all = xi_sets(sys.case.kind, lam, &zeros);
    let label = StratumLabel { case: sys.case, lambda: lam, xi: xi_all.first().copied(), xi_all, near_boundary: dec.near };
    Ok((label, frame))
}

// ---------------------------------------------------------------------------
// Eigen helpers
// ---------------------------------------------------------------------------

pub(crate) fn rational_sqrt(q: &BigRational) -> Option<BigRational> {
    if q.is_negative() {
        return None;
    }
    let n = q.numer().sqrt();
    let d = q.denom().sqrt();
    (&n * &n == *q.numer() && &d * &d == *q.denom()).then(|| BigRational::new(n, d))
}

fn sqrt_of<F: Scalar>(x: &F) -> Option<F> {
    match F::MODE {
        Mode::Exact => rational_sqrt(&x.to_rational()).map(|r| F::from_rational(&r)),
        Mode::Float => {
            let v = x.to_f64();
            (v >= 0.0).then(|| F::from_f64_lossy(v.sqrt()))
        }
    }
}

/// Continued-fraction convergents of `x`, denominators up to `1e7`.
fn convergents(x: f64) -> Vec<BigRational> {
    let mut out = Vec::new();
    if !x.is_finite() {
        return out;
    }
    let (mut h0, mut h1) = (BigInt::from(0), BigInt::from(1));
    let (mut k0, mut k1) = (BigInt::from(1), BigInt::from(0));
    let mut r = x;
    for _ in 0..40 {
        let a = r.floor();
        let ai = BigInt::from(a as i64);
        let h2 = &ai * &h1 + &h0;
        let k2 = &ai * &k1 + &k0;
        if k2 > BigInt::from(10_000_000) {
            break;
        }
        out.push(BigRational::new(h2.clone(), k2.clone()));
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a;
        if frac.abs() < 1e-14 {
            break;
        }
        r = 1.0 / frac;
    }
    out
}

/// Rational root of `t^3 + p t + q` near `x`, if one exists.
fn rational_root(p: &BigRational, q: &BigRational, x: f64) -> Option<BigRational> {
    let near = 1e-6 * x.abs().max(1.0);
    convergents(x)
        .into_iter()
        .filter(|t| (ratio_to_f64(t) - x).abs() <= near)
        .find(|t| t * t * t + p * t + q == BigRational::from_integer(0.into()))
}

/// Real roots of `t^3 + p t + q` in floating point.
pub(crate) fn cubic_real_roots(p: f64, q: f64) -> Vec<f64> {
    let disc = -4.0 * p * p * p - 27.0 * q * q;
    if disc > 0.0 {
        let r = 2.0 * (-p / 3.0).sqrt();
        let phi = ((3.0 * q / (2.0 * p)) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0).acos() / 3.0;
        (0..3).map(|k| r * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos()).collect()
    } else {
        let d = (q * q / 4.0 + p * p * p / 27.0).max(0.0).sqrt();
        vec![(-q / 2.0 + d).cbrt() + (-q / 2.0 - d).cbrt()]
    }
}

/// Real roots in `F`. In exact mode: one rational root found near a float
/// root, the others from the deflated quadratic; `None` when a real root is
/// irrational. Complex pairs are left out.
fn cubic_roots_in<F: Scalar>(p: &F, q: &F) -> Option<Vec<F>> {
    let approx = cubic_real_roots(p.to_f64(), q.to_f64());
    match F::MODE {
        Mode::Float => Some(approx.into_iter().map(F::from_f64_lossy).collect()),
        Mode::Exact => {
            let (pr, qr) = (p.to_rational(), q.to_rational());
            let r = approx.iter().find_map(|x| rational_root(&pr, &qr, *x))?;
            // t^3 + p t + q = (t - r)(t^2 + r t + p + r^2)
            let disc = -BigRational::from_integer(3.into()) * &r * &r - BigRational::from_integer(4.into()) * &pr;
            let two = BigRational::from_integer(2.into());
            let mut out = vec![r.clone()];
            if !disc.is_negative() {
                let s = rational_sqrt(&disc)?;
                out.push((-&r + &s) / &two);
                out.push((-&r - &s) / &two);
            }
            Some(out.iter().map(F::from_rational).collect())
        }
    }
}

/// A basis of `ker a` with exactly `k` vectors.
pub(crate) fn null_space<F: Scalar>(a: &Mat<F>, k: usize, tol: f64) -> Result<Vec<Vec<F>>> {
    match F::MODE {
        Mode::Exact => {
            let ker = linalg::kernel(a, 0.0);
            if ker.len() != k {
                return Err(Error::Classification(format!("expected a {k}-dimensional kernel, found {}", ker.len())));
            }
            Ok(ker)
        }
        Mode::Float => {
            let n = a.cols;
            let rows = a.rows.max(n);
            let dm = nalgebra::DMatrix::from_fn(rows, n, |i, j| if i < a.rows { a[(i, j)].to_f64() } else { 0.0 });
            let svd = dm.svd(false, true);
            let vt = svd.v_t.ok_or_else(|| Error::Classification("svd failed".into()))?;
            let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
            idx.sort_by(|x, y| svd.singular_values[*x].total_cmp(&svd.singular_values[*y]));
            let scale = a.max_abs().max(1.0);
            let small = svd.singular_values[idx[k - 1]];
            let next = idx.get(k).map(|i| svd.singular_values[*i]).unwrap_or(f64::INFINITY);
            let cut = tol.max(1e-12).sqrt() * scale;
            if small > cut || next <= cut {
                return Err(Error::Classification(format!("numerical kernel of dimension {k} not found")));
            }
            Ok(idx[..k].iter().map(|&r| (0..n).map(|j| F::from_f64_lossy(vt[(r, j)])).collect()).collect())
        }
    }
}

/// Deterministic scaling of an eigenvector: primitive integer vector (exact)
/// or unit norm (float), first nonzero entry positive.
pub(crate) fn orient<F: Scalar>(v: Vec<F>) -> Vec<F> {
    match F::MODE {
        Mode::Exact => {
            let q: Vec<BigRational> = v.iter().map(|x| x.to_rational()).collect();
            crate::scalar::clear_denominators(&q).iter().map(F::from_rational).collect()
        }
        Mode::Float => {
            let f: Vec<f64> = v.iter().map(|x| x.to_f64()).collect();
            let n = linalg::norm2(&f);
            let sign = match f.iter().find(|x| x.abs() > 1e-12) {
                Some(x) if *x < 0.0 => -1.0,
                _ => 1.0,
            };
            f.iter().map(|x| F::from_f64_lossy(sign * x / n)).collect()
        }
    }
}

fn unit_len<F: Scalar>(v: Vec<F>) -> Vec<F> {
    match F::MODE {
        Mode::Exact => v,
        Mode::Float => {
            let n = linalg::norm2(&v.iter().map(|x| x.to_f64()).collect::<Vec<_>>());
            v.into_iter().map(|x| x / F::from_f64_lossy(n)).collect()
        }
    }
}

fn eigvec<F: Scalar>(m: &Mat<F>, kappa: &F, tol: f64) -> Result<Vec<F>> {
    Ok(orient(null_space(&m_minus(m, kappa), 1, tol)?.remove(0)))
}

/// First column `M e_k` that is not (numerically) zero, and `k`.
fn first_nonzero_column<F: Scalar>(m: &Mat<F>, tol: f64) -> Result<(usize, Vec<F>)> {
    let s = m.max_abs().max(1.0);
    (0..m.cols)
        .map(|k| (k, m.col(k)))
        .find(|(_, c)| c.iter().any(|x| !x.near_zero(tol * s)))
        .ok_or_else(|| Error::Classification("zero matrix where a nonzero one was expected".into()))
}

fn diag<F: Scalar>(d: &[F]) -> Mat<F> {
    let mut n = Mat::zeros(d.len(), d.len());
    for (i, x) in d.iter().enumerate() {
        n[(i, i)] = x.clone();
    }
    n
}

fn mat_i<F: Scalar>(rows: &[&[i64]]) -> Mat<F> {
    Mat::from_rows(&rows.iter().map(|r| r.iter().map(|x| F::from_i64(*x)).collect()).collect::<Vec<_>>())
}

/// `M = mu P N P^{-1}` for the given major stratum; `None` when the eigen
/// data are irrational in exact mode.
pub(crate) fn build_frame<F: Scalar>(sys: &AffineSystem<F>, lam: usize, tol: f64) -> Result<Option<NormalForm<F>>> {
    let m = &sys.m;
    let one = F::one();
    let (p, n, mu): (Mat<F>, Mat<F>, F) = match (sys.case.kind, lam) {
        (CaseKind::R2S3, _) | (CaseKind::R2S4, 4) => (Mat::identity(2), Mat::zeros(2, 2), one),
        (CaseKind::R3S3, 9) => (Mat::identity(3), Mat::zeros(3, 3), one),
        (CaseKind::R2S4, 1) => {
            let Some(mu) = sqrt_of(&-det2(m, (0, 1))) else { return Ok(None) };
            let p = Mat::from_cols(&[eigvec(m, &mu, tol)?, eigvec(m, &-mu.clone(), tol)?]);
            (p, mat_i(&[&[1, 0], &[0, -1]]), mu)
        }
        (CaseKind::R2S4, 2) => {
            let Some(mu) = sqrt_of(&det2(m, (0, 1))) else { return Ok(None) };
            let (_, c) = first_nonzero_column(m, tol)?;
            let p1 = unit_len(c);
            let p2: Vec<F> = m.mul_vec(&p1).into_iter().map(|x| x / mu.clone()).collect();
            (Mat::from_cols(&[p1, p2]), mat_i(&[&[0, -1], &[1, 0]]), mu)
        }
        (CaseKind::R2S4, 3) => {
            let (k, c) = first_nonzero_column(m, tol)?;
            let mut e = vec![F::zero(); 2];
            e[k] = one.clone();
            (Mat::from_cols(&[c, e]), mat_i(&[&[0, 1], &[0, 0]]), one)
        }
        (CaseKind::R3S3, 1) => {
            let (pc, qc) = cubic_coeffs(m);
            let Some(mut roots) = cubic_roots_in(&pc, &qc) else { return Ok(None) };
            // the root whose sign differs from the other two goes last
            let qs = qc.is_positive();
            roots.sort_by(|x, y| x.to_f64().abs().total_cmp(&y.to_f64().abs()).reverse());
            let odd = roots
                .iter()
                .position(|r| r.is_positive() != qs)
                .ok_or_else(|| Error::Classification("no eigenvalue of opposite sign".into()))?;
            let c = roots.remove(odd);
            let (a, b) = (roots[0].clone(), roots[1].clone());
            let p = Mat::from_cols(&[eigvec(m, &a, tol)?, eigvec(m, &b, tol)?, eigvec(m, &c, tol)?]);
            (p, diag(&[a, b, c]), one)
        }
        (CaseKind::R3S3, 2) | (CaseKind::R3S3, 4) => {
            let (pc, qc) = cubic_coeffs(m);
            let a = -(F::from_i64(3) * qc) / (F::from_i64(2) * pc);
            let c = -(F::from_i64(2) * a.clone());
            let p3 = eigvec(m, &c, tol)?;
            if lam == 2 {
                let ker = null_space(&m_minus(m, &a), 2, tol)?;
                let cols: Vec<Vec<F>> = ker.into_iter().map(orient).chain(std::iter::once(p3)).collect();
                (Mat::from_cols(&cols), diag(&[a.clone(), a.clone(), c]), one)
            } else {
                let sh = m_minus(m, &a);
                let ker = null_space(&sh.mul(&sh), 2, tol)?;
                let score = |x: &Vec<F>| linalg::norm2(&sh.mul_vec(x).iter().map(|y| y.to_f64()).collect::<Vec<_>>());
                let p2 = ker
                    .into_iter()
                    .max_by(|x, y| score(x).total_cmp(&score(y)))
                    .expect("two kernel vectors");
                let p1: Vec<F> = sh.mul_vec(&p2).into_iter().map(|x| x / a.clone()).collect();
                (Mat::from_cols(&[p1, p2, p3]), mat_i(&[&[1, 1, 0], &[0, 1, 0], &[0, 0, -2]]), a)
            }
        }
        (CaseKind::R3S3, 3) => {
            let (pc, qc) = cubic_coeffs(m);
            let Some(roots) = cubic_roots_in(&pc, &qc) else { return Ok(None) };
            let r = roots[0].clone();
            // t^3 + p t + q = (t - r)(t^2 + r t + s)
            let s = pc + r.clone() * r.clone();
            let rho = -(r.clone() / F::from_i64(2));
            let Some(omega) = sqrt_of(&(s - rho.clone() * rho.clone())) else { return Ok(None) };
            let p3 = eigvec(m, &r, tol)?;
            let (_, c) = first_nonzero_column(&m_minus(m, &r), tol)?;
            let p1 = unit_len(c);
            let p2: Vec<F> = m
                .mul_vec(&p1)
                .into_iter()
                .zip(&p1)
                .map(|(x, y)| (x - rho.clone() * y.clone()) / omega.clone())
                .collect();
            let a = omega / rho.clone();
            let mut n = mat_i(&[&[1, 0, 0], &[0, 1, 0], &[0, 0, -2]]);
            n[(0, 1)] = -a.clone();
            n[(1, 0)] = a;
            (Mat::from_cols(&[p1, p2, p3]), n, rho)
        }
        (CaseKind::R3S3, 5) => {
            let (pc, _) = cubic_coeffs(m);
            let Some(mu) = sqrt_of(&-pc) else { return Ok(None) };
            let p = Mat::from_cols(&[
                eigvec(m, &mu, tol)?,
                eigvec(m, &-mu.clone(), tol)?,
                eigvec(m, &F::zero(), tol)?,
            ]);
            (p, mat_i(&[&[1, 0, 0], &[0, -1, 0], &[0, 0, 0]]), mu)
        }
        (CaseKind::R3S3, 6) => {
            let (pc, _) = cubic_coeffs(m);
            let Some(mu) = sqrt_of(&pc) else { return Ok(None) };
            let (_, c) = first_nonzero_column(m, tol)?;
            let p1 = unit_len(c);
            let p2: Vec<F> = m.mul_vec(&p1).into_iter().map(|x| x / mu.clone()).collect();
            let p3 = eigvec(m, &F::zero(), tol)?;
            (Mat::from_cols(&[p1, p2, p3]), mat_i(&[&[0, -1, 0], &[1, 0, 0], &[0, 0, 0]]), mu)
        }
        (CaseKind::R3S3, 7) => {
            let m2 = m.mul(m);
            let (k, c2) = first_nonzero_column(&m2, tol)?;
            let mut e = vec![F::zero(); 3];
            e[k] = one.clone();
            (Mat::from_cols(&[c2, m.col(k), e]), mat_i(&[&[0, 1, 0], &[0, 0, 1], &[0, 0, 0]]), one)
        }
        (CaseKind::R3S3, 8) => {
            let (k, c) = first_nonzero_column(m, tol)?;
            let mut e = vec![F::zero(); 3];
            e[k] = one.clone();
            let ker = null_space(m, 2, tol)?;
            let s = m.max_abs().max(1.0);
            let p3 = ker
                .into_iter()
                .map(orient)
                .find(|x| {
                    let pair = Mat::from_cols(&[c.clone(), x.clone()]);
                    linalg::rank(&pair, tol * s) == 2
                })
                .ok_or_else(|| Error::Classification("kernel of a rank-one matrix is degenerate".into()))?;
            (Mat::from_cols(&[c, e, p3]), mat_i(&[&[0, 1, 0], &[0, 0, 0], &[0, 0, 0]]), one)
        }
        (kind, l) => return Err(Error::Classification(format!("no stratum {l} for {kind:?}"))),
    };
    let pinv = linalg::inverse(&p, tol)
        .ok_or_else(|| Error::Classification("singular change of basis".into()))?;
    let check = pinv.mul(m).mul(&p).scale(&(F::one() / mu.clone())).sub(&n);
    let bad = match F::MODE {
        Mode::Exact => !check.is_zero(),
        Mode::Float => check.max_abs() > 1e-9 * n.max_abs().max(1.0),
    };
    if bad {
        return Err(Error::Classification(format!(
            "normal form check failed for stratum {lam} (residual {:.3e})",
            check.max_abs()
        )));
    }
    let b: Vec<F> = pinv.mul_vec(&sys.v).into_iter().map(|x| x / mu.clone()).collect();
    Ok(Some(NormalForm { n, p, b, mu }))
}

// ---------------------------------------------------------------------------
// Exact drift decisions without a rational frame
// ---------------------------------------------------------------------------

/// Monic minimal polynomial of `v` under `m`, as `c_0..c_{d-1}` with
/// `t^d + sum c_k t^k`.
pub(crate) fn krylov_minpoly(m: &Mat<BigRational>, v: &[BigRational]) -> Vec<BigRational> {
    let mut basis: Vec<Vec<BigRational>> = Vec::new();
    let mut cur = v.to_vec();
    loop {
        if basis.is_empty() {
            if cur.iter().all(Scalar::is_zero) {
                return Vec::new();
            }
        } else {
            let a = Mat::from_cols(&basis);
            if let Some(x) = linalg::solve(&a, &cur, 0.0) {
                return x.into_iter().map(|c| -c).collect();
            }
        }
        basis.push(cur.clone());
        cur = m.mul_vec(&cur);
    }
}

/// Which components of `b` vanish, decided from the minimal polynomial of `v`.
/// Only used when the eigen data are irrational.
fn exact_zero_pattern(sys: &AffineSystem<BigRational>, lam: usize) -> Result<Vec<bool>> {
    let g = krylov_minpoly(&sys.m, &sys.v);
    let d = g.len();
    let zero = |x: &BigRational| Scalar::is_zero(x);
    let pos = |x: &BigRational| Signed::is_positive(x);
    Ok(match (sys.case.kind, lam) {
        (CaseKind::R2S4, 1) | (CaseKind::R3S3, 5) => {
            // roots among {mu, -mu} and, in rank 3, {0}
            let has_zero = d >= 1 && zero(&g[0]);
            let h: Vec<BigRational> = if has_zero { g[1..].to_vec() } else { g.clone() };
            let (plus, minus) = match h.len() {
                0 => (false, false),
                1 => (pos(&-h[0].clone()), !pos(&-h[0].clone())),
                _ => (true, true),
            };
            let mut z = vec![!plus, !minus];
            if sys.case.kind == CaseKind::R3S3 {
                z.push(!has_zero);
            }
            z
        }
        (CaseKind::R3S3, 1) => {
            let (_, q) = cubic_coeffs(&sys.m);
            // the odd eigenvalue has sign opposite to q
            let (pair, odd) = match d {
                0 => (false, false),
                1 => {
                    let kappa = -g[0].clone();
                    if pos(&kappa) != pos(&q) {
                        (false, true)
                    } else {
                        (true, false)
                    }
                }
                2 => (true, !pos(&g[0])),
                _ => (true, true),
            };
            vec![!pair, !pair, !odd]
        }
        (CaseKind::R3S3, 3) => {
            let (pair, real) = match d {
                0 => (false, false),
                1 => (false, true),
                2 => (true, false),
                _ => (true, true),
            };
            vec![!pair, !pair, !real]
        }
        (CaseKind::R2S4, 2) | (CaseKind::R3S3, 6) => {
            let (_, p1) = first_nonzero_column(&sys.m, 0.0)?;
            let mp1 = sys.m.mul_vec(&p1);
            let mut cols = vec![p1, mp1];
            if sys.case.kind == CaseKind::R3S3 {
                cols.push(null_space(&sys.m, 1, 0.0)?.remove(0));
            }
            let x = linalg::solve(&Mat::from_cols(&cols), &sys.v, 0.0)
                .ok_or_else(|| Error::Classification("rotation frame is singular".into()))?;
            x.iter().map(zero).collect()
        }
        (kind, l) => return Err(Error::Classification(format!("stratum {l} of {kind:?} has a rational frame"))),
    })
}
