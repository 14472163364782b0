//! Concatenations of integral curves switching at equilibria, and their lifts.

use num_rational::BigRational;
use serde::Serialize;

use crate::chen_flow::{endpoint, group_product, ControlPiece, GroupElement, PolyControl};
use crate::error::{Error, Result};
use crate::free_lie::{Algebra, DualCovector, LieVector};
use crate::linalg::Mat;
use crate::poly::Poly;
use crate::scalar::{FromF64Lossy, Mode, Scalar};
use crate::singularity::{image_of_differential, kernel_residual_at};

use super::system::{CaseKind, NormalForm, StratumLabel};
use super::trajectory::{is_equilibrium, polynomial_trajectory, trajectory, ClosedFormTrajectory};

/// Default truncation horizon for legs that reach an equilibrium only in the limit.
pub const DEFAULT_HORIZON: f64 = 40.0;
pub const DEFAULT_RESOLUTION: f64 = 1.0 / 16.0;
const JOIN_TOL: f64 = 1e-12;

/// One leg of a concatenation, in normalized coordinates.
#[derive(Clone, Debug, PartialEq)]
pub enum Leg<F> {
    /// The integral curve through `z0` at time zero, run over `[t0, t1]`
    /// (traversed backwards when `t1 < t0`).
    Flow { z0: Vec<F>, t0: F, t1: F },
    /// From `z0` to the equilibrium `eq`, reached as `t -> +inf` or `-inf`.
    ToEquilibrium { z0: Vec<F>, eq: Vec<F> },
    /// From the equilibrium `eq` out to `eq + d` along the curve `eq + e^{Nt} d`.
    FromEquilibrium { eq: Vec<F>, d: Vec<F> },
    /// A straight move inside the equilibrium set.
    Along { from: Vec<F>, to: Vec<F> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConcatenationPlan<F> {
    pub legs: Vec<Leg<F>>,
    /// Truncation horizon for asymptotic legs.
    pub horizon: f64,
    /// Time step for sampled legs.
    pub resolution: f64,
}

impl<F: Scalar> ConcatenationPlan<F> {
    pub fn new(legs: Vec<Leg<F>>) -> Self {
        ConcatenationPlan { legs, horizon: DEFAULT_HORIZON, resolution: DEFAULT_RESOLUTION }
    }

    pub fn with_resolution(mut self, h: f64) -> Self {
        self.resolution = h;
        self
    }

    pub fn with_horizon(mut self, t: f64) -> Self {
        self.horizon = t;
        self
    }
}

/// Plan used when none is given: the tree paths of the two branching drift
/// sets, otherwise the single curve from the origin over `[0, 1]`.
pub fn default_plan<F: Scalar>(label: &StratumLabel, form: &NormalForm<F>) -> ConcatenationPlan<F> {
    let dim = form.b.len();
    let zero = vec![F::zero(); dim];
    let b = &form.b;
    match (label.case.kind, label.lambda) {
        (CaseKind::R2S4, 1) if label.xi_all.contains(&2) => {
            // down the z2-axis to (0, b2), then out along {z2 = b2}
            let eq = vec![F::zero(), b[1].clone()];
            ConcatenationPlan::new(vec![
                Leg::ToEquilibrium { z0: zero, eq: eq.clone() },
                Leg::FromEquilibrium { eq, d: vec![F::one(), F::zero()] },
            ])
        }
        (CaseKind::R3S3, 5) if label.xi_all.contains(&9) => {
            // plane {z1 = 0} to the equilibrium line, along it, then into {z2 = b2}
            let eq = vec![F::zero(), b[1].clone(), F::zero()];
            let moved = vec![F::zero(), b[1].clone(), F::one()];
            ConcatenationPlan::new(vec![
                Leg::ToEquilibrium { z0: zero, eq: eq.clone() },
                Leg::Along { from: eq, to: moved.clone() },
                Leg::FromEquilibrium { eq: moved, d: vec![F::one(), F::zero(), F::zero()] },
            ])
        }
        _ => ConcatenationPlan::new(vec![Leg::Flow { z0: zero, t0: F::zero(), t1: F::one() }]),
    }
}

/// Continuous piecewise-polynomial path in normalized coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcatenatedPath<F> {
    pub pieces: Vec<(F, Vec<Poly<F>>)>,
    /// Index of the first piece of every leg.
    pub leg_starts: Vec<usize>,
    /// Bound on the distance discarded by truncating asymptotic legs.
    pub tail_bound: f64,
    /// Every piece is exact: no sampled leg was used.
    pub exact: bool,
}

impl<F: Scalar> ConcatenatedPath<F> {
    pub fn total(&self) -> F {
        self.pieces.iter().fold(F::zero(), |a, (d, _)| a + d.clone())
    }

    /// Piece endpoints, starting with the origin.
    pub fn vertices(&self) -> Vec<Vec<F>> {
        let mut out = Vec::with_capacity(self.pieces.len() + 1);
        if let Some((_, p)) = self.pieces.first() {
            out.push(p.iter().map(|q| q.coeff(0)).collect());
        }
        for (d, p) in &self.pieces {
            out.push(p.iter().map(|q| q.eval(d)).collect());
        }
        out
    }

    /// The same path with every piece split into equal parts no longer than `h`.
    pub fn refined(&self, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Invalid(format!("refinement step must be positive, got {h}")));
        }
        let mut pieces = Vec::new();
        let mut leg_starts = Vec::new();
        for (k, (d, p)) in self.pieces.iter().enumerate() {
            if self.leg_starts.contains(&k) {
                leg_starts.push(pieces.len());
            }
            let n = (d.to_f64() / h).ceil().max(1.0) as i64;
            let sub = d.clone() / F::from_i64(n);
            for j in 0..n {
                let s = sub.clone() * F::from_i64(j);
                pieces.push((sub.clone(), p.iter().map(|q| q.shift(&s)).collect()));
            }
        }
        Ok(ConcatenatedPath { pieces, leg_starts, tail_bound: self.tail_bound, exact: self.exact })
    }

    /// Velocity `z'` as a control.
    pub fn control(&self) -> Result<PolyControl<F>> {
        let dim = self.pieces.first().map(|(_, p)| p.len()).unwrap_or(0);
        PolyControl::new(
            dim,
            self.pieces
                .iter()
                .map(|(d, p)| ControlPiece { duration: d.clone(), poly: p.iter().map(|q| q.derivative()).collect() })
                .collect(),
        )
    }
}

/// Linear piece from `a` to `b` over `duration`.
fn segment<F: Scalar>(a: &[F], b: &[F], duration: F) -> (F, Vec<Poly<F>>) {
    let p = a
        .iter()
        .zip(b)
        .map(|(x, y)| Poly::new(vec![x.clone(), (y.clone() - x.clone()) / duration.clone()]))
        .collect();
    (duration, p)
}

fn close<F: Scalar>(a: &[F], b: &[F]) -> bool {
    a.len() == b.len()
        && match F::MODE {
            Mode::Exact => a == b,
            Mode::Float => a
                .iter()
                .zip(b)
                .all(|(x, y)| (x.to_f64() - y.to_f64()).abs() <= JOIN_TOL * x.to_f64().abs().max(1.0)),
        }
}

/// Coordinates where `d` is nonzero; all must share one growth sign of `N`.
/// Returns that sign and whether the curve is a straight segment.
fn asymptotic_shape<F: Scalar>(n: &Mat<F>, d: &[F]) -> Result<(f64, bool, f64)> {
    let active: Vec<usize> = (0..d.len()).filter(|i| !d[*i].is_zero()).collect();
    if active.is_empty() {
        return Ok((0.0, true, 0.0));
    }
    let rates: Vec<f64> = active.iter().map(|i| n[(*i, *i)].to_f64()).collect();
    let sign = rates[0].signum();
    if sign == 0.0 || rates.iter().any(|r| r.signum() != sign) {
        return Err(Error::Concatenation(
            "asymptotic leg requested along a direction that does not tend to the equilibrium".into(),
        ));
    }
    // nilpotent coupling from a stable/unstable coordinate into a neutral one
    // would prevent convergence
    for &i in &active {
        for j in 0..d.len() {
            if j != i && !n[(j, i)].is_zero() && n[(j, j)].to_f64().signum() != sign {
                return Err(Error::Concatenation("asymptotic leg couples into a neutral direction".into()));
            }
        }
    }
    let straight = active.iter().all(|&i| {
        n[(i, i)] == n[(active[0], active[0])] && active.iter().all(|&j| j == i || n[(i, j)].is_zero())
    });
    let rate = rates.iter().map(|r| r.abs()).fold(f64::INFINITY, f64::min);
    Ok((sign, straight, rate))
}

/// Piecewise-linear interpolation of `tr` at `times`; `first` replaces the
/// sampled first point when it is known exactly.
fn sampled<F: Scalar>(tr: &ClosedFormTrajectory, times: &[f64], h: f64, first: Option<&[F]>) -> Vec<(F, Vec<Poly<F>>)> {
    let mut pts: Vec<Vec<F>> = times.iter().map(|t| tr.eval(*t).into_iter().map(F::from_f64_lossy).collect()).collect();
    if let Some(p) = first {
        pts[0] = p.to_vec();
    }
    pts.windows(2).map(|w| segment(&w[0], &w[1], F::from_f64_lossy(h))).collect()
}

fn grid(t0: f64, t1: f64, h: f64) -> Vec<f64> {
    let n = ((t1 - t0).abs() / h).ceil().max(1.0) as usize;
    (0..=n).map(|k| t0 + (t1 - t0) * k as f64 / n as f64).collect()
}

/// Builds the path of `plan`; legs must start at the origin and join at equilibria.
pub fn concatenate<F: Scalar>(label: &StratumLabel, form: &NormalForm<F>, plan: &ConcatenationPlan<F>) -> Result<ConcatenatedPath<F>> {
    let dim = form.b.len();
    if plan.legs.is_empty() {
        return Err(Error::Concatenation("empty plan".into()));
    }
    if !(plan.resolution > 0.0) || !(plan.horizon > 0.0) {
        return Err(Error::Concatenation("resolution and horizon must be positive".into()));
    }
    let f64form = form.to_f64();
    let mut pieces: Vec<(F, Vec<Poly<F>>)> = Vec::new();
    let mut leg_starts = Vec::new();
    let mut cur = vec![F::zero(); dim];
    let mut tail: f64 = 0.0;
    let mut exact = true;
    let h = plan.resolution;
    for (k, leg) in plan.legs.iter().enumerate() {
        if k > 0 && !is_equilibrium(form, &cur, JOIN_TOL) {
            return Err(Error::Concatenation(format!("leg {k} starts at a point that is not an equilibrium")));
        }
        leg_starts.push(pieces.len());
        let (start, new): (Vec<F>, Vec<(F, Vec<Poly<F>>)>) = match leg {
            Leg::Flow { z0, t0, t1 } => {
                if z0.len() != dim {
                    return Err(Error::Concatenation(format!("leg {k} has the wrong dimension")));
                }
                if t0 == t1 {
                    return Err(Error::Concatenation(format!("leg {k} has an empty time interval")));
                }
                let exact_polys = if F::MODE == Mode::Exact { polynomial_trajectory(&form.n, &form.b, z0) } else { None };
                match exact_polys {
                    Some(polys) => {
                        // z(t0 + s (t1 - t0)) / reparametrised onto [0, |t1 - t0|]
                        let len = if t1 > t0 { t1.clone() - t0.clone() } else { t0.clone() - t1.clone() };
                        let dir = if t1 > t0 { F::one() } else { -F::one() };
                        let piece: Vec<Poly<F>> = polys
                            .iter()
                            .map(|p| {
                                let shifted = p.shift(t0);
                                let mut pow = F::one();
                                Poly::new(
                                    shifted
                                        .coeffs
                                        .iter()
                                        .map(|c| {
                                            let v = c.clone() * pow.clone();
                                            pow = pow.clone() * dir.clone();
                                            v
                                        })
                                        .collect(),
                                )
                            })
                            .collect();
                        let st: Vec<F> = piece.iter().map(|p| p.coeff(0)).collect();
                        (st, vec![(len, piece)])
                    }
                    None => {
                        exact = false;
                        let tr = trajectory(label, &f64form, &z0.iter().map(|x| x.to_f64()).collect::<Vec<_>>());
                        let times = grid(t0.to_f64(), t1.to_f64(), h);
                        let step = (t1.to_f64() - t0.to_f64()).abs() / (times.len() - 1) as f64;
                        let segs = sampled(&tr, &times, step, t0.is_zero().then_some(z0.as_slice()));
                        let st = segs[0].1.iter().map(|q| q.coeff(0)).collect();
                        (st, segs)
                    }
                }
            }
            Leg::ToEquilibrium { z0, eq } | Leg::FromEquilibrium { eq, d: z0 } => {
                let from_eq = matches!(leg, Leg::FromEquilibrium { .. });
                if !is_equilibrium(form, eq, JOIN_TOL) {
                    return Err(Error::Concatenation(format!("leg {k}: target is not an equilibrium")));
                }
                let d: Vec<F> = if from_eq { z0.clone() } else { z0.iter().zip(eq).map(|(a, b)| a.clone() - b.clone()).collect() };
                let (sign, straight, rate) = asymptotic_shape(&form.n, &d)?;
                let far: Vec<F> = eq.iter().zip(&d).map(|(a, b)| a.clone() + b.clone()).collect();
                let (a, b) = if from_eq { (eq.clone(), far) } else { (far, eq.clone()) };
                if straight {
                    (a.clone(), vec![segment(&a, &b, F::one())])
                } else {
                    exact = false;
                    // eq + e^{Nt} d from t = 0 toward t = -sign * horizon
                    let start: Vec<f64> = eq.iter().zip(&d).map(|(x, y)| x.to_f64() + y.to_f64()).collect();
                    let tr = trajectory(label, &f64form, &start);
                    let times = grid(0.0, -sign * plan.horizon, h);
                    let exact_start: Vec<F> = eq.iter().zip(&d).map(|(a, b)| a.clone() + b.clone()).collect();
                    let mut segs = sampled::<F>(&tr, &times, h, Some(&exact_start));
                    let last = tr.eval(*times.last().unwrap());
                    let dn = d.iter().map(|x| x.to_f64().powi(2)).sum::<f64>().sqrt();
                    tail = tail.max(dn * (-rate * plan.horizon).exp() * (1.0 + plan.horizon).powi(dim as i32));
                    let last_f: Vec<F> = last.into_iter().map(F::from_f64_lossy).collect();
                    segs.push(segment(&last_f, eq, F::from_f64_lossy(h)));
                    if from_eq {
                        // reverse traversal: eq first
                        segs = segs
                            .into_iter()
                            .rev()
                            .map(|(dur, p)| {
                                let e0: Vec<F> = p.iter().map(|q| q.eval(&dur)).collect();
                                let e1: Vec<F> = p.iter().map(|q| q.coeff(0)).collect();
                                segment(&e0, &e1, dur)
                            })
                            .collect();
                    }
                    (a, segs)
                }
            }
            Leg::Along { from, to } => {
                if !is_equilibrium(form, from, JOIN_TOL) || !is_equilibrium(form, to, JOIN_TOL) {
                    return Err(Error::Concatenation(format!("leg {k} leaves the equilibrium set")));
                }
                (from.clone(), vec![segment(from, to, F::one())])
            }
        };
        if !close(&start, &cur) {
            return Err(Error::Concatenation(format!(
                "leg {k} does not start where the previous one ended{}",
                if k == 0 { " (plans start at the origin)" } else { "" }
            )));
        }
        if let Some((d, p)) = new.last() {
            cur = p.iter().map(|q| q.eval(d)).collect();
        }
        pieces.extend(new);
    }
    Ok(ConcatenatedPath { pieces, leg_starts, tail_bound: tail, exact })
}

/// Horizontal curve in the group driven by a concatenation.
#[derive(Clone, Debug)]
pub struct LiftedPath<F> {
    /// Control `u = P z'` in the original frame, rescaled to `[0, 1]`.
    pub control: PolyControl<F>,
    /// Piece end times in `[0, 1]`, starting with zero.
    pub times: Vec<F>,
    /// Group points at those times, starting with the identity.
    pub points: Vec<GroupElement<F>>,
}

/// Lifts `path` through the rotated frame `X_i(lambda) = sum_j P_ji X_j`.
pub fn lift<F: Scalar>(alg: &Algebra, path: &ConcatenatedPath<F>, form: &NormalForm<F>) -> Result<LiftedPath<F>> {
    if alg.rank() != form.p.rows {
        return Err(Error::AlgebraMismatch(format!(
            "frame of size {} for an algebra of rank {}",
            form.p.rows,
            alg.rank()
        )));
    }
    let zc = path.control()?;
    let pieces: Vec<ControlPiece<F>> = zc
        .pieces
        .iter()
        .map(|pc| {
            let deg = pc.poly.iter().map(|q| q.coeffs.len()).max().unwrap_or(0);
            let poly = (0..form.p.rows)
                .map(|i| {
                    Poly::new(
                        (0..deg)
                            .map(|k| {
                                (0..form.p.cols).fold(F::zero(), |acc, j| acc + form.p[(i, j)].clone() * pc.poly[j].coeff(k))
                            })
                            .collect(),
                    )
                })
                .collect();
            ControlPiece { duration: pc.duration.clone(), poly }
        })
        .collect();
    let total = path.total();
    let control = PolyControl::new(alg.rank(), pieces)?.time_scaled(&total);
    let mut times = vec![F::zero()];
    let mut points = vec![GroupElement::identity(alg)];
    let mut t = F::zero();
    for pc in &control.pieces {
        let step = if pc.poly.iter().all(|q| q.degree().unwrap_or(0) == 0) {
            let v: Vec<F> = pc.poly.iter().map(|q| q.coeff(0) * pc.duration.clone()).collect();
            GroupElement::exp(LieVector::horizontal(alg, &v))
        } else {
            endpoint(alg, &PolyControl::new(alg.rank(), vec![pc.clone()])?)?
        };
        let g = group_product(points.last().unwrap(), &step)?;
        t = t + pc.duration.clone();
        times.push(t.clone());
        points.push(g);
    }
    Ok(LiftedPath { control, times, points })
}

/// Kernel residual of the lifted control at the midpoint of every piece.
pub fn midpoint_residual<F: Scalar>(lifted: &LiftedPath<F>, lambda: &DualCovector<F>) -> Result<f64> {
    let two = F::from_i64(2);
    let mids: Vec<F> = lifted.times.windows(2).map(|w| (w[0].clone() + w[1].clone()) / two.clone()).collect();
    Ok(kernel_residual_at(&lifted.control, lambda, &mids)?.value)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ExactCertificate {
    /// `lambda` vanishes on the image of the differential.
    pub annihilates: bool,
    /// `M_u(lambda, t) u(t)` is the zero polynomial on every piece.
    pub residual_zero: bool,
}

impl ExactCertificate {
    pub fn holds(&self) -> bool {
        self.annihilates && self.residual_zero
    }
}

pub fn certify_exact(alg: &Algebra, lifted: &LiftedPath<BigRational>, lambda: &DualCovector<BigRational>) -> Result<ExactCertificate> {
    let img = image_of_differential(alg, &lifted.control)?;
    let annihilates = img.basis.iter().all(|v| Scalar::is_zero(&lambda.pair_coords(v)));
    let residual_zero = kernel_residual_at(&lifted.control, lambda, &[])?.exact_zero;
    Ok(ExactCertificate { annihilates, residual_zero })
}
