//! Closed-form integral curves of `z' = N z + b` and their equilibria.

use serde::Serialize;

use crate::linalg::{self, Mat};
use crate::poly::Poly;
use crate::scalar::{Mode, Scalar};

use super::system::{CaseKind, NormalForm, StratumLabel};

/// Integral curve of the normalized system through `z0` at time zero.
#[derive(Clone, Debug)]
pub struct ClosedFormTrajectory {
    pub kind: CaseKind,
    pub lambda: usize,
    pub n: Mat<f64>,
    pub b: Vec<f64>,
    pub z0: Vec<f64>,
}

pub fn trajectory(label: &StratumLabel, form: &NormalForm<f64>, z0: &[f64]) -> ClosedFormTrajectory {
    ClosedFormTrajectory { kind: label.case.kind, lambda: label.lambda, n: form.n.clone(), b: form.b.clone(), z0: z0.to_vec() }
}

/// `(e^{kt} - 1) / k`, continuous at `k = 0`.
fn phi(k: f64, t: f64) -> f64 {
    if k == 0.0 {
        t
    } else {
        (k * t).exp_m1() / k
    }
}

impl ClosedFormTrajectory {
    pub fn dim(&self) -> usize {
        self.z0.len()
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let (b, z) = (&self.b, &self.z0);
        let line = |i: usize| b[i] * t + z[i];
        let rot = || {
            let (c, s) = (t.cos(), t.sin());
            [(b[1] + z[0]) * c - (z[1] - b[0]) * s - b[1], (b[1] + z[0]) * s + (z[1] - b[0]) * c + b[0]]
        };
        let saddle = || [(t.exp() - 1.0) * b[0] + t.exp() * z[0], -((-t).exp() - 1.0) * b[1] + (-t).exp() * z[1]];
        match (self.kind, self.lambda) {
            (CaseKind::R2S3, _) | (CaseKind::R2S4, 4) | (CaseKind::R3S3, 9) => (0..self.dim()).map(line).collect(),
            (CaseKind::R2S4, 1) => saddle().to_vec(),
            (CaseKind::R2S4, 2) => rot().to_vec(),
            (CaseKind::R2S4, 3) => vec![b[1] * t * t / 2.0 + (b[0] + z[1]) * t + z[0], b[1] * t + z[1]],
            (CaseKind::R3S3, 1) | (CaseKind::R3S3, 2) => (0..3)
                .map(|i| {
                    let k = self.n[(i, i)];
                    phi(k, t) * b[i] + (k * t).exp() * z[i]
                })
                .collect(),
            (CaseKind::R3S3, 3) => {
                let a = self.n[(1, 0)];
                let d = 1.0 + a * a;
                let alpha = b[0] + a * b[1] + d * z[0];
                let beta = -a * b[0] + b[1] + d * z[1];
                let (c, s) = ((a * t).cos(), (a * t).sin());
                let e = t.exp() / d;
                vec![
                    e * (alpha * c - beta * s) - (b[0] + a * b[1]) / d,
                    e * (alpha * s + beta * c) - (-a * b[0] + b[1]) / d,
                    0.5 * (-2.0 * t).exp() * (-b[2] + 2.0 * z[2]) + b[2] / 2.0,
                ]
            }
            (CaseKind::R3S3, 4) => {
                let e = t.exp();
                let f = (-2.0 * t).exp();
                vec![
                    e * z[0] + t * e * (z[1] + b[1]) + (b[0] - b[1]) * (e - 1.0),
                    (e - 1.0) * b[1] + e * z[1],
                    -(f - 1.0) / 2.0 * b[2] + f * z[2],
                ]
            }
            (CaseKind::R3S3, 5) => {
                let s = saddle();
                vec![s[0], s[1], line(2)]
            }
            (CaseKind::R3S3, 6) => {
                let r = rot();
                vec![r[0], r[1], line(2)]
            }
            (CaseKind::R3S3, 7) => {
                let t2 = t * t / 2.0;
                vec![
                    z[0] + (b[0] + z[1]) * t + (b[1] + z[2]) * t2 + b[2] * t * t2 / 3.0,
                    z[1] + (b[1] + z[2]) * t + b[2] * t2,
                    line(2),
                ]
            }
            (CaseKind::R3S3, 8) => vec![z[0] + (b[0] + z[1]) * t + b[1] * t * t / 2.0, line(1), line(2)],
            _ => unreachable!("no stratum {} for {:?}", self.lambda, self.kind),
        }
    }

    /// `N z(t) + b`.
    pub fn velocity(&self, t: f64) -> Vec<f64> {
        let z = self.eval(t);
        self.n.mul_vec(&z).into_iter().zip(&self.b).map(|(x, y)| x + y).collect()
    }

    pub fn equilibria(&self) -> EquilibriumSet<f64> {
        equilibria(&self.n, &self.b, 1e-12)
    }
}

/// Exact polynomial solution for nilpotent `N`:
/// `sum_k N^k (t^k/k! z0 + t^{k+1}/(k+1)! b)`.
pub fn polynomial_trajectory<F: Scalar>(n: &Mat<F>, b: &[F], z0: &[F]) -> Option<Vec<Poly<F>>> {
    let dim = b.len();
    let mut out = vec![Poly::zero(); dim];
    let mut pz = z0.to_vec();
    let mut pb = b.to_vec();
    let mut fact = F::one();
    for k in 0..=dim {
        if pz.iter().all(|x| x.is_zero()) && pb.iter().all(|x| x.is_zero()) {
            return Some(out);
        }
        if k == dim {
            break;
        }
        let next_fact = fact.clone() * F::from_i64(k as i64 + 1);
        for i in 0..dim {
            let mut c = vec![F::zero(); k + 2];
            c[k] = pz[i].clone() / fact.clone();
            c[k + 1] = pb[i].clone() / next_fact.clone();
            out[i] = out[i].add(&Poly::new(c));
        }
        fact = next_fact;
        pz = n.mul_vec(&pz);
        pb = n.mul_vec(&pb);
    }
    // nonzero after `dim` powers: not nilpotent
    None
}

/// The affine set `{z : N z + b = 0}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum EquilibriumSet<F> {
    Empty,
    /// `point + span(directions)`; zero directions is a point, one a line, two a plane.
    Affine { point: Vec<F>, directions: Vec<Vec<F>> },
}

impl<F: Scalar> EquilibriumSet<F> {
    pub fn kind(&self) -> &'static str {
        match self {
            EquilibriumSet::Empty => "none",
            EquilibriumSet::Affine { point, directions } => match directions.len() {
                d if d == point.len() => "everywhere",
                0 => "point",
                1 => "line",
                2 => "plane",
                _ => "affine",
            },
        }
    }

    pub fn to_text(&self) -> EquilibriumSet<String> {
        match self {
            EquilibriumSet::Empty => EquilibriumSet::Empty,
            EquilibriumSet::Affine { point, directions } => EquilibriumSet::Affine {
                point: point.iter().map(|x| x.to_text()).collect(),
                directions: directions.iter().map(|d| d.iter().map(|x| x.to_text()).collect()).collect(),
            },
        }
    }
}

pub fn equilibria<F: Scalar>(n: &Mat<F>, b: &[F], tol: f64) -> EquilibriumSet<F> {
    let minus_b: Vec<F> = b.iter().map(|x| -x.clone()).collect();
    let tol = if F::MODE == Mode::Exact { 0.0 } else { tol };
    match linalg::solve(n, &minus_b, tol) {
        None => EquilibriumSet::Empty,
        Some(point) => EquilibriumSet::Affine { point, directions: linalg::kernel(n, tol) },
    }
}

/// True when `N z + b` vanishes (exactly, or within `tol` in float mode).
pub fn is_equilibrium<F: Scalar>(form: &NormalForm<F>, z: &[F], tol: f64) -> bool {
    let d = form.drift(z);
    match F::MODE {
        Mode::Exact => d.iter().all(|x| x.is_zero()),
        Mode::Float => d.iter().all(|x| x.to_f64().abs() <= tol),
    }
}
