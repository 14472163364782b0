//! Rank-2 step-5 singular curves: the quadratic system in the Heisenberg
//! group, its integration, and certification of the integrated curves.

use std::collections::BTreeMap;
use std::io::Write;

use num_rational::BigRational;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chen_flow::PolyControl;
use crate::error::{Error, Result};
use crate::free_lie::{build_free_algebra, Algebra, DualCovector};
use crate::scalar::{format_rational, parse_rational, rat, rat_int, FromF64Lossy, Scalar};
use crate::singularity::kernel_residual_at;

/// Covector coordinates entering the system, in storage order.
pub const PARAM_WORDS: [&str; 13] = [
    "212", "112", "2112", "2212", "1112", "11212", "21212", "22212", "11112", "21112", "22112", "(12)(212)", "(12)(112)",
];

#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticParams {
    values: Vec<BigRational>,
}

/// Float copy of the parameters arranged as `c + L z + q(z)/2 + k theta`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Coefficients {
    c: [f64; 2],
    lin: [[f64; 2]; 2],
    quad: [[[f64; 2]; 2]; 2],
    theta: [f64; 2],
}

impl QuadraticParams {
    /// Values keyed by word; missing words are zero. Rejects values that no
    /// covector on the free algebra of rank 2 and step 5 can take.
    pub fn new(values: &BTreeMap<String, BigRational>) -> Result<Self> {
        for k in values.keys() {
            if !PARAM_WORDS.contains(&k.as_str()) {
                return Err(Error::Invalid(format!("{k:?} is not a parameter of the quadratic system")));
            }
        }
        let p = QuadraticParams {
            values: PARAM_WORDS.iter().map(|w| values.get(*w).cloned().unwrap_or_else(|| rat_int(0))).collect(),
        };
        p.covector(&build_free_algebra(2, 5)?)?;
        Ok(p)
    }

    pub fn from_covector(lambda: &DualCovector<BigRational>) -> Result<Self> {
        let values = PARAM_WORDS.iter().map(|w| lambda.eval_word(w)).collect::<Result<_>>()?;
        Ok(QuadraticParams { values })
    }

    /// Random parameters read off a random covector on `g3 + g4 + g5`.
    pub fn random<R: Rng>(rng: &mut R, max: i64) -> Self {
        let alg = build_free_algebra(2, 5).expect("free(2,5) fits");
        let mut lambda = DualCovector::zero(&alg);
        for i in alg.layer_range(3).start..alg.dim() {
            let d = rng.gen_range(1..=4);
            lambda.coords[i] = rat(rng.gen_range(-max * d..=max * d), d);
        }
        Self::from_covector(&lambda).expect("words of free(2,5)")
    }

    pub fn get(&self, word: &str) -> Option<&BigRational> {
        PARAM_WORDS.iter().position(|w| *w == word).map(|i| &self.values[i])
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        PARAM_WORDS.iter().zip(&self.values).map(|(w, v)| (w.to_string(), format_rational(v))).collect()
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let parsed = map.iter().map(|(k, v)| Ok((k.clone(), parse_rational(v)?))).collect::<Result<BTreeMap<_, _>>>()?;
        Self::new(&parsed)
    }

    /// The covector with these values, zero on the lower layers and on every
    /// direction the values leave free.
    pub fn covector(&self, alg: &Algebra) -> Result<DualCovector<BigRational>> {
        if alg.rank() != 2 || alg.step() != 5 {
            return Err(Error::AlgebraMismatch("the quadratic system lives on rank 2, step 5".into()));
        }
        let z = rat_int(0);
        let mut pairs: Vec<(&str, BigRational)> = vec![("1", z.clone()), ("2", z.clone()), ("12", z)];
        pairs.extend(PARAM_WORDS.iter().zip(&self.values).map(|(w, v)| (*w, v.clone())));
        let lambda = DualCovector::from_word_values(alg, &pairs).map_err(|_| {
            Error::Invalid(
                "parameters violate the bracket relations (need 11212 = (12)(112) + 21112 and 22112 = 21212)".into(),
            )
        })?;
        let check = |a: &str, b: &[&str]| -> Result<bool> {
            let rhs = b.iter().map(|w| lambda.eval_word(w)).sum::<Result<BigRational>>()?;
            Ok(lambda.eval_word(a)? == rhs)
        };
        if !(check("1212", &["2112"])? && check("12112", &["(12)(112)", "21112"])? && check("12212", &["(12)(212)", "21212"])?) {
            return Err(Error::Invalid("bracket relations fail on the reconstructed covector".into()));
        }
        Ok(lambda)
    }

    fn coefficients(&self) -> Coefficients {
        let f = |w: &str| self.get(w).map(|x| x.to_f64()).unwrap_or(0.0);
        Coefficients {
            c: [f("212"), -f("112")],
            lin: [[f("2112"), f("2212")], [-f("1112"), -f("2112")]],
            quad: [
                [[f("11212"), f("21212")], [f("21212"), f("22212")]],
                [[-f("11112"), -f("21112")], [-f("21112"), -f("22112")]],
            ],
            theta: [f("(12)(212)"), -f("(12)(112)")],
        }
    }

    /// Linear part `(M, v)`: the affine system of the embedded step-4 covector.
    pub fn linear_part(&self) -> ([[f64; 2]; 2], [f64; 2]) {
        let c = self.coefficients();
        (c.lin, c.c)
    }
}

/// Point `(z1, z2, theta)` of the Heisenberg group in exponential
/// coordinates of the second kind.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeisenbergState {
    pub z1: f64,
    pub z2: f64,
    pub theta: f64,
}

impl HeisenbergState {
    pub const ORIGIN: HeisenbergState = HeisenbergState { z1: 0.0, z2: 0.0, theta: 0.0 };

    fn arr(&self) -> [f64; 3] {
        [self.z1, self.z2, self.theta]
    }

    fn from_arr(a: [f64; 3]) -> Self {
        HeisenbergState { z1: a[0], z2: a[1], theta: a[2] }
    }

    pub fn norm(&self) -> f64 {
        self.arr().iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl Coefficients {
    fn v(&self, p: &[f64; 3]) -> [f64; 2] {
        let z = [p[0], p[1]];
        let mut out = [0.0; 2];
        for i in 0..2 {
            let q: f64 = (0..2).map(|a| (0..2).map(|b| z[a] * self.quad[i][a][b] * z[b]).sum::<f64>()).sum();
            out[i] = self.c[i] + self.lin[i][0] * z[0] + self.lin[i][1] * z[1] + 0.5 * q + self.theta[i] * p[2];
        }
        out
    }

    /// `d v_i / d(z1, z2, theta)`.
    fn jacobian(&self, p: &[f64; 3]) -> [[f64; 3]; 2] {
        let mut j = [[0.0; 3]; 2];
        for i in 0..2 {
            for a in 0..2 {
                j[i][a] = self.lin[i][a] + self.quad[i][a][0] * p[0] + self.quad[i][a][1] * p[1];
            }
            j[i][2] = self.theta[i];
        }
        j
    }

    fn velocity(&self, p: &[f64; 3]) -> [f64; 3] {
        let v = self.v(p);
        [v[0], v[1], p[0] * v[1]]
    }
}

/// `v1 Z1 + v2 Z2` at `p`, as `(z1', z2', theta')` with `theta' = z1 v2`.
pub fn rhs(p: &HeisenbergState, params: &QuadraticParams) -> [f64; 3] {
    params.coefficients().velocity(&p.arr())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<HeisenbergState>,
    /// The state norm passed the bound; the trajectory stops there.
    pub blown_up: bool,
}

impl Trajectory {
    pub fn end(&self) -> HeisenbergState {
        *self.states.last().expect("trajectories hold the initial state")
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "z1", "z2", "theta"])?;
        for (t, s) in self.times.iter().zip(&self.states) {
            w.write_record([t, &s.z1, &s.z2, &s.theta].map(|x| format!("{x:e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const DEFAULT_BLOWUP: f64 = 1e6;

fn steps(t1: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0) || !(t1 >= 0.0) || !dt.is_finite() || !t1.is_finite() {
        return Err(Error::Invalid(format!("need dt > 0 and t1 >= 0, got dt = {dt}, t1 = {t1}")));
    }
    let n = (t1 / dt - 1e-9).ceil().max(0.0) as usize;
    Ok((n, if n == 0 { dt } else { t1 / n as f64 }))
}

fn axpy(a: &[f64; 3], s: f64, b: &[f64; 3]) -> [f64; 3] {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

/// Classical fourth-order Runge-Kutta on `[0, t1]` with step `t1 / ceil(t1 / dt)`.
pub fn integrate(params: &QuadraticParams, p0: HeisenbergState, t1: f64, dt: f64, bound: f64) -> Result<Trajectory> {
    let (n, h) = steps(t1, dt)?;
    let c = params.coefficients();
    let mut times = vec![0.0];
    let mut states = vec![p0];
    let mut y = p0.arr();
    let mut blown_up = false;
    for k in 0..n {
        let k1 = c.velocity(&y);
        let k2 = c.velocity(&axpy(&y, h / 2.0, &k1));
        let k3 = c.velocity(&axpy(&y, h / 2.0, &k2));
        let k4 = c.velocity(&axpy(&y, h, &k3));
        for i in 0..3 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let s = HeisenbergState::from_arr(y);
        if !(s.norm() <= bound) {
            blown_up = true;
            break;
        }
        times.push((k + 1) as f64 * h);
        states.push(s);
    }
    Ok(Trajectory { dt: h, times, states, blown_up })
}

/// `f = z1 v2` and its time derivative along the flow.
fn area_rate(c: &Coefficients, p: &[f64; 3]) -> (f64, f64) {
    let vel = c.velocity(p);
    let j = c.jacobian(p);
    let dv2: f64 = (0..3).map(|a| j[1][a] * vel[a]).sum();
    (p[0] * vel[1], vel[0] * vel[1] + p[0] * dv2)
}

/// Fourth-order quadrature of `z1 z2'` along the samples (endpoint-corrected
/// trapezoid rule), one value per sample.
pub fn area_quadrature(traj: &Trajectory, params: &QuadraticParams) -> Vec<f64> {
    let c = params.coefficients();
    let mut out = vec![0.0];
    for (w, t) in traj.states.windows(2).zip(traj.times.windows(2)) {
        let h = t[1] - t[0];
        let (f0, d0) = area_rate(&c, &w[0].arr());
        let (f1, d1) = area_rate(&c, &w[1].arr());
        let last = *out.last().unwrap();
        out.push(last + h / 2.0 * (f0 + f1) + h * h / 12.0 * (d0 - d1));
    }
    out
}

/// `sup_t |theta(t) - theta(0) - int_0^t z1 z2'|` over the samples.
pub fn theta_consistency(traj: &Trajectory, params: &QuadraticParams) -> f64 {
    let th0 = traj.states[0].theta;
    area_quadrature(traj, params)
        .iter()
        .zip(&traj.states)
        .map(|(q, s)| (s.theta - th0 - q).abs())
        .fold(0.0, f64::max)
}

/// Integrates the planar integro-differential form: Runge-Kutta on `z` with
/// `theta` never stepped as a state but recomputed as the running quadrature
/// of `z1 z2'`. Stage values of `theta` come from interpolation over the step.
pub fn integrate_integro(params: &QuadraticParams, z0: [f64; 2], t1: f64, dt: f64, bound: f64) -> Result<Trajectory> {
    let (n, h) = steps(t1, dt)?;
    let c = params.coefficients();
    let mut times = vec![0.0];
    let mut states = vec![HeisenbergState { z1: z0[0], z2: z0[1], theta: 0.0 }];
    let mut z = z0;
    let mut th = 0.0;
    let mut blown_up = false;
    for k in 0..n {
        let p = [z[0], z[1], th];
        let (f, df) = area_rate(&c, &p);
        // first pass extrapolates theta by Taylor; the second interpolates it
        // (cubic Hermite) between the node and the first-pass endpoint
        let mut end: Option<(f64, f64)> = None;
        let mut znew = z;
        let mut thnew = th;
        for _ in 0..2 {
            let theta_at = |s: f64| match end {
                None => th + s * f + s * s / 2.0 * df,
                Some((th1, f1)) => {
                    let x = s / h;
                    let (h00, h10) = (2.0 * x.powi(3) - 3.0 * x * x + 1.0, x.powi(3) - 2.0 * x * x + x);
                    let (h01, h11) = (-2.0 * x.powi(3) + 3.0 * x * x, x.powi(3) - x * x);
                    h00 * th + h10 * h * f + h01 * th1 + h11 * h * f1
                }
            };
            let stage = |z: [f64; 2], s: f64| -> [f64; 2] { c.v(&[z[0], z[1], theta_at(s)]) };
            let k1 = c.v(&p);
            let k2 = stage([z[0] + h / 2.0 * k1[0], z[1] + h / 2.0 * k1[1]], h / 2.0);
            let k3 = stage([z[0] + h / 2.0 * k2[0], z[1] + h / 2.0 * k2[1]], h / 2.0);
            let k4 = stage([z[0] + h * k3[0], z[1] + h * k3[1]], h);
            znew = [
                z[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                z[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            ];
            let guess = [znew[0], znew[1], theta_at(h)];
            let (f1, d1) = area_rate(&c, &guess);
            thnew = th + h / 2.0 * (f + f1) + h * h / 12.0 * (df - d1);
            end = Some((thnew, area_rate(&c, &[znew[0], znew[1], thnew]).0));
        }
        th = thnew;
        z = znew;
        let s = HeisenbergState { z1: z[0], z2: z[1], theta: th };
        if !(s.norm() <= bound) {
            blown_up = true;
            break;
        }
        times.push((k + 1) as f64 * h);
        states.push(s);
    }
    Ok(Trajectory { dt: h, times, states, blown_up })
}

/// Observed order from endpoint differences of runs at `dt`, `dt/2`, `dt/4`.
pub fn richardson_order(params: &QuadraticParams, p0: HeisenbergState, t1: f64, dt: f64) -> Result<f64> {
    let ends: Vec<[f64; 3]> = [dt, dt / 2.0, dt / 4.0]
        .iter()
        .map(|h| {
            let tr = integrate(params, p0, t1, *h, f64::INFINITY)?;
            Ok(tr.end().arr())
        })
        .collect::<Result<_>>()?;
    let dist = |a: &[f64; 3], b: &[f64; 3]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    Ok((dist(&ends[0], &ends[1]) / dist(&ends[1], &ends[2])).log2())
}

// ---------------------------------------------------------------------------
// Certification
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyRow {
    pub dt: f64,
    pub residual: f64,
    pub exact_zero: bool,
}

/// Piecewise-linear control through the sampled `z`, in scalar type `F`.
pub fn surrogate_control<F: Scalar>(traj: &Trajectory) -> Result<PolyControl<F>> {
    let segs: Vec<(Vec<F>, F)> = traj
        .states
        .windows(2)
        .zip(traj.times.windows(2))
        .map(|(s, t)| {
            let h = F::from_f64_lossy(t[1]) - F::from_f64_lossy(t[0]);
            let v = vec![
                (F::from_f64_lossy(s[1].z1) - F::from_f64_lossy(s[0].z1)) / h.clone(),
                (F::from_f64_lossy(s[1].z2) - F::from_f64_lossy(s[0].z2)) / h.clone(),
            ];
            (v, h)
        })
        .collect();
    PolyControl::piecewise_constant(&segs)
}

/// Kernel residual of the surrogate against `lambda` at the midpoints of its
/// pieces. `lambda` defaults to the covector of `params`.
pub fn certify<F: Scalar>(
    params: &QuadraticParams,
    lambda: Option<&DualCovector<BigRational>>,
    traj: &Trajectory,
) -> Result<CertifyRow> {
    if traj.states.len() < 2 {
        return Err(Error::Invalid("certification needs at least one step".into()));
    }
    let alg = build_free_algebra(2, 5)?;
    let lambda = match lambda {
        Some(l) => l.clone(),
        None => params.covector(&alg)?,
    };
    let lf = DualCovector { alg: lambda.alg.clone(), coords: lambda.coords.iter().map(F::from_rational).collect() };
    let u = surrogate_control::<F>(traj)?;
    let two = F::from_i64(2);
    let mids: Vec<F> = traj
        .times
        .windows(2)
        .map(|t| (F::from_f64_lossy(t[0]) + F::from_f64_lossy(t[1])) / two.clone())
        .collect();
    let r = kernel_residual_at(&u, &lf, &mids)?;
    Ok(CertifyRow { dt: traj.dt, residual: r.value, exact_zero: r.exact_zero })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub rows: Vec<CertifyRow>,
    /// Least-squares slope of `log residual` against `log dt`.
    pub order_estimate: Option<f64>,
}

/// Least-squares slope of `log residual` against `log dt` over the rows
/// with a positive residual.
pub fn order_estimate(rows: &[CertifyRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.residual > 0.0).map(|r| (r.dt.ln(), r.residual.ln())).collect();
    (pts.len() >= 2).then(|| {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    })
}

/// Certifies runs from the origin over `[0, t1]` at each step size.
pub fn refinement_study(params: &QuadraticParams, lambda: Option<&DualCovector<BigRational>>, t1: f64, dts: &[f64]) -> Result<RefinementReport> {
    let mut rows = Vec::new();
    for &dt in dts {
        let traj = integrate(params, HeisenbergState::ORIGIN, t1, dt, DEFAULT_BLOWUP)?;
        if traj.blown_up {
            return Err(Error::BlowUp(format!("state norm passed {DEFAULT_BLOWUP:e} at dt = {dt}")));
        }
        rows.push(certify::<f64>(params, lambda, &traj)?);
    }
    let order_estimate = order_estimate(&rows);
    Ok(RefinementReport { rows, order_estimate })
}

// ---------------------------------------------------------------------------
// Equilibria (exploratory)
// ---------------------------------------------------------------------------

/// Output of the damped root search. Never a certificate: the search may
/// stop at a local minimum of `|v|` or miss equilibria entirely.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumCandidate {
    pub point: HeisenbergState,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub certified: bool,
}

/// Damped minimum-norm Newton iteration on `v(z, theta) = 0`.
pub fn find_equilibrium(params: &QuadraticParams, start: HeisenbergState, max_iter: usize, tol: f64) -> EquilibriumCandidate {
    let c = params.coefficients();
    let norm = |p: &[f64; 3]| {
        let v = c.v(p);
        v[0].hypot(v[1])
    };
    let mut p = start.arr();
    let mut r = norm(&p);
    let mut it = 0;
    while it < max_iter && r > tol {
        it += 1;
        let v = c.v(&p);
        let j = c.jacobian(&p);
        // step = -J^T (J J^T)^{-1} v
        let g = [
            [(0..3).map(|k| j[0][k] * j[0][k]).sum::<f64>(), (0..3).map(|k| j[0][k] * j[1][k]).sum::<f64>()],
            [(0..3).map(|k| j[1][k] * j[0][k]).sum::<f64>(), (0..3).map(|k| j[1][k] * j[1][k]).sum::<f64>()],
        ];
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let y = [(g[1][1] * v[0] - g[0][1] * v[1]) / det, (-g[1][0] * v[0] + g[0][0] * v[1]) / det];
        let step: Vec<f64> = (0..3).map(|k| -(j[0][k] * y[0] + j[1][k] * y[1])).collect();
        let mut s = 1.0;
        loop {
            let q = [p[0] + s * step[0], p[1] + s * step[1], p[2] + s * step[2]];
            let rq = norm(&q);
            if rq < r || s < 1e-10 {
                if rq < r {
                    p = q;
                    r = rq;
                }
                break;
            }
            s /= 2.0;
        }
        if s < 1e-10 {
            break;
        }
    }
    EquilibriumCandidate { point: HeisenbergState::from_arr(p), residual: r, iterations: it, converged: r <= tol, certified: false }
}
