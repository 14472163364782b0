//! Piecewise-polynomial controls, truncated Chen series, the group law and
//! the adjoint flow `A(t)` with `A' = A ad(X_u)`, `A(0) = Id`.
//!
//! Tensor words are stored densely per length, lexicographically, so the
//! word `a1 a2 ... ak` (letters `1..=r`) sits at `sum (a_i - 1) r^(k-i)`.
//! The earliest time carries the first letter.

use std::collections::BTreeMap;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_lie::{Algebra, LieVector};
use crate::linalg::Mat;
use crate::poly::{Poly, PolyMat};
use crate::scalar::{parse_rational, Scalar};

/// Default bound on the polynomial degree of a control piece.
pub const DEFAULT_MAX_DEGREE: usize = 4;

/// Largest number of words stored on one tensor level.
pub const MAX_LEVEL_WORDS: usize = 1 << 16;

// ---------------------------------------------------------------------------
// Controls
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct ControlPiece<F> {
    pub duration: F,
    /// One polynomial per component, in local time `0..duration`.
    pub poly: Vec<Poly<F>>,
}

/// Piecewise-polynomial control `u : [0, T] -> R^r`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyControl<F> {
    pub pieces: Vec<ControlPiece<F>>,
    rank: usize,
}

impl<F: Scalar> PolyControl<F> {
    pub fn new(rank: usize, pieces: Vec<ControlPiece<F>>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::Invalid("a control needs at least one piece".into()));
        }
        for (k, p) in pieces.iter().enumerate() {
            if !(p.duration > F::zero()) {
                return Err(Error::Invalid(format!("piece {k} has a non-positive duration")));
            }
            if p.poly.len() != rank {
                return Err(Error::Invalid(format!(
                    "piece {k} has {} components, expected {rank}",
                    p.poly.len()
                )));
            }
        }
        Ok(PolyControl { pieces, rank })
    }

    /// Constant control `v` for `duration`.
    pub fn constant(v: &[F], duration: F) -> Self {
        PolyControl {
            rank: v.len(),
            pieces: vec![ControlPiece {
                duration,
                poly: v.iter().map(|c| Poly::constant(c.clone())).collect(),
            }],
        }
    }

    /// Piecewise-constant control through the given velocities.
    pub fn piecewise_constant(segments: &[(Vec<F>, F)]) -> Result<Self> {
        let rank = segments.first().map(|s| s.0.len()).unwrap_or(0);
        Self::new(
            rank,
            segments
                .iter()
                .map(|(v, d)| ControlPiece {
                    duration: d.clone(),
                    poly: v.iter().map(|c| Poly::constant(c.clone())).collect(),
                })
                .collect(),
        )
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn total(&self) -> F {
        self.pieces.iter().fold(F::zero(), |a, p| a + p.duration.clone())
    }

    pub fn max_degree(&self) -> usize {
        self.pieces
            .iter()
            .flat_map(|p| p.poly.iter().map(|q| q.degree().unwrap_or(0)))
            .max()
            .unwrap_or(0)
    }

    pub fn check_degree(&self, max_degree: usize) -> Result<()> {
        let d = self.max_degree();
        if d > max_degree {
            return Err(Error::Capacity(format!(
                "control piece of degree {d} exceeds the configured maximum {max_degree}"
            )));
        }
        Ok(())
    }

    /// Start times of the pieces.
    pub fn breakpoints(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.pieces.len());
        let mut t = F::zero();
        for p in &self.pieces {
            out.push(t.clone());
            t = t + p.duration.clone();
        }
        out
    }

    /// Piece index and local time; right-continuous, with the final endpoint
    /// assigned to the last piece.
    pub fn locate(&self, t: &F) -> Result<(usize, F)> {
        if *t < F::zero() {
            return Err(Error::Invalid(format!("time {} outside the control domain", t.to_text())));
        }
        let mut start = F::zero();
        let last = self.pieces.len() - 1;
        for (k, p) in self.pieces.iter().enumerate() {
            let end = start.clone() + p.duration.clone();
            if *t < end || (k == last && *t == end) {
                return Ok((k, t.clone() - start));
            }
            start = end;
        }
        if t.to_f64() <= start.to_f64() * (1.0 + 1e-12) && F::MODE == crate::scalar::Mode::Float {
            return Ok((last, self.pieces[last].duration.clone()));
        }
        Err(Error::Invalid(format!("time {} outside the control domain", t.to_text())))
    }

    pub fn eval(&self, t: &F) -> Result<Vec<F>> {
        let (k, s) = self.locate(t)?;
        Ok(self.pieces[k].poly.iter().map(|p| p.eval(&s)).collect())
    }

    /// `t -> -u(T - t)`, the control that retraces the path backwards.
    pub fn reversed(&self) -> Self {
        let pieces = self
            .pieces
            .iter()
            .rev()
            .map(|p| ControlPiece {
                duration: p.duration.clone(),
                poly: p
                    .poly
                    .iter()
                    .map(|q| {
                        let refl = Poly::new(
                            q.coeffs
                                .iter()
                                .enumerate()
                                .map(|(k, c)| if k % 2 == 0 { -c.clone() } else { c.clone() })
                                .collect(),
                        );
                        refl.shift(&(-p.duration.clone()))
                    })
                    .collect(),
            })
            .collect();
        PolyControl { pieces, rank: self.rank }
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.rank != other.rank {
            return Err(Error::Invalid("concatenating controls of different rank".into()));
        }
        let mut pieces = self.pieces.clone();
        pieces.extend(other.pieces.iter().cloned());
        Ok(PolyControl { pieces, rank: self.rank })
    }

    /// Restriction to `[t0, t1]`, re-based to start at zero.
    pub fn restrict(&self, t0: &F, t1: &F) -> Result<Self> {
        if !(t0 < t1) {
            return Err(Error::Invalid("empty restriction interval".into()));
        }
        let total = self.total();
        if *t0 < F::zero() || *t1 > total {
            return Err(Error::Invalid("restriction interval outside the control domain".into()));
        }
        let mut pieces = Vec::new();
        let mut start = F::zero();
        for p in &self.pieces {
            let end = start.clone() + p.duration.clone();
            let a = if *t0 > start { t0.clone() } else { start.clone() };
            let b = if *t1 < end { t1.clone() } else { end.clone() };
            if a < b {
                let off = a.clone() - start.clone();
                pieces.push(ControlPiece {
                    duration: b - a,
                    poly: p.poly.iter().map(|q| q.shift(&off)).collect(),
                });
            }
            start = end;
        }
        Self::new(self.rank, pieces)
    }

    /// Same path run at speed `c > 0` over time `T / c`.
    pub fn time_scaled(&self, c: &F) -> Self {
        let pieces = self
            .pieces
            .iter()
            .map(|p| ControlPiece {
                duration: p.duration.clone() / c.clone(),
                poly: p
                    .poly
                    .iter()
                    .map(|q| {
                        let mut pow = c.clone();
                        Poly::new(
                            q.coeffs
                                .iter()
                                .map(|a| {
                                    let v = a.clone() * pow.clone();
                                    pow = pow.clone() * c.clone();
                                    v
                                })
                                .collect(),
                        )
                    })
                    .collect(),
            })
            .collect();
        PolyControl { pieces, rank: self.rank }
    }

    pub fn primitive(&self) -> Primitive<F> {
        let mut pieces = Vec::new();
        let mut start = F::zero();
        let mut offset = vec![F::zero(); self.rank];
        for p in &self.pieces {
            let poly: Vec<Poly<F>> = p
                .poly
                .iter()
                .zip(&offset)
                .map(|(q, o)| q.integral().add(&Poly::constant(o.clone())))
                .collect();
            let next: Vec<F> = poly.iter().map(|q| q.eval(&p.duration)).collect();
            pieces.push(PrimitivePiece { start: start.clone(), duration: p.duration.clone(), poly });
            start = start + p.duration.clone();
            offset = next;
        }
        Primitive { pieces }
    }

    pub fn to_f64(&self) -> PolyControl<f64> {
        PolyControl {
            rank: self.rank,
            pieces: self
                .pieces
                .iter()
                .map(|p| ControlPiece {
                    duration: p.duration.to_f64(),
                    poly: p.poly.iter().map(|q| q.to_f64()).collect(),
                })
                .collect(),
        }
    }

    pub fn to_file(&self) -> ControlFile {
        ControlFile {
            pieces: self
                .pieces
                .iter()
                .map(|p| PieceFile {
                    duration: NumText::Text(p.duration.to_text()),
                    poly: p
                        .poly
                        .iter()
                        .map(|q| q.coeffs.iter().map(|c| NumText::Text(c.to_text())).collect())
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Path `w(t) = int_0^t u`.
#[derive(Clone, Debug, PartialEq)]
pub struct Primitive<F> {
    pub pieces: Vec<PrimitivePiece<F>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrimitivePiece<F> {
    pub start: F,
    pub duration: F,
    pub poly: Vec<Poly<F>>,
}

impl<F: Scalar> Primitive<F> {
    pub fn eval(&self, t: &F) -> Result<Vec<F>> {
        let last = self.pieces.len() - 1;
        for (k, p) in self.pieces.iter().enumerate() {
            let end = p.start.clone() + p.duration.clone();
            if (*t >= p.start && *t < end) || (k == last && *t >= p.start) {
                if *t > end {
                    break;
                }
                let s = t.clone() - p.start.clone();
                return Ok(p.poly.iter().map(|q| q.eval(&s)).collect());
            }
        }
        Err(Error::Invalid(format!("time {} outside the control domain", t.to_text())))
    }
}

/// A number in a control file: a `"p/q"` string or a JSON number.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum NumText {
    Text(String),
    Int(i64),
    Float(f64),
}

impl NumText {
    /// Exact value; JSON decimals are read through their shortest decimal text.
    pub fn to_rational(&self) -> Result<BigRational> {
        match self {
            NumText::Text(s) => parse_rational(s),
            NumText::Int(i) => Ok(BigRational::from_integer((*i).into())),
            NumText::Float(x) if x.is_finite() => parse_rational(&format!("{x}")),
            NumText::Float(x) => Err(Error::Parse(format!("non-finite number {x}"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PieceFile {
    pub duration: NumText,
    pub poly: Vec<Vec<NumText>>,
}

/// Control file: `{pieces: [{duration, poly: [[c0, c1, ...] per component]}]}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ControlFile {
    pub pieces: Vec<PieceFile>,
}

impl ControlFile {
    pub fn to_control(&self) -> Result<PolyControl<BigRational>> {
        let rank = self.pieces.first().map(|p| p.poly.len()).unwrap_or(0);
        let pieces = self
            .pieces
            .iter()
            .map(|p| {
                Ok(ControlPiece {
                    duration: p.duration.to_rational()?,
                    poly: p
                        .poly
                        .iter()
                        .map(|c| Ok(Poly::new(c.iter().map(|x| x.to_rational()).collect::<Result<_>>()?)))
                        .collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        PolyControl::new(rank, pieces)
    }
}

pub fn load_control(path: &std::path::Path) -> Result<PolyControl<BigRational>> {
    let f: ControlFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    f.to_control()
}

// ---------------------------------------------------------------------------
// Tensor series
// ---------------------------------------------------------------------------

/// Truncated element of the free associative algebra on `rank` letters.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    pub rank: usize,
    /// `levels[k]` has `rank^k` entries.
    pub levels: Vec<Vec<F>>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zero(rank: usize, depth: usize) -> Self {
        Tensor { rank, levels: (0..=depth).map(|k| vec![F::zero(); rank.pow(k as u32)]).collect() }
    }

    pub fn one(rank: usize, depth: usize) -> Self {
        let mut t = Self::zero(rank, depth);
        t.levels[0][0] = F::one();
        t
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn word_index(&self, word: &[u8]) -> usize {
        word.iter().fold(0, |acc, &a| acc * self.rank + (a as usize - 1))
    }

    /// Coefficient of a word given as letters `1..=rank`.
    pub fn coeff(&self, word: &[u8]) -> F {
        if word.len() > self.depth() {
            return F::zero();
        }
        self.levels[word.len()][self.word_index(word)].clone()
    }

    /// Truncated concatenation product.
    pub fn mul(&self, other: &Self) -> Self {
        let depth = self.depth().min(other.depth());
        let mut out = Self::zero(self.rank, depth);
        for n in 0..=depth {
            for i in 0..=n {
                let j = n - i;
                let a = &self.levels[i];
                let b = &other.levels[j];
                let width = b.len();
                for (ia, ca) in a.iter().enumerate() {
                    if ca.is_zero() {
                        continue;
                    }
                    for (ib, cb) in b.iter().enumerate() {
                        if cb.is_zero() {
                            continue;
                        }
                        let slot = &mut out.levels[n][ia * width + ib];
                        let cur = std::mem::replace(slot, F::zero());
                        *slot = cur + ca.clone() * cb.clone();
                    }
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        Tensor {
            rank: self.rank,
            levels: self
                .levels
                .iter()
                .zip(&other.levels)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x.clone() + y.clone()).collect())
                .collect(),
        }
    }

    pub fn scale(&self, c: &F) -> Self {
        Tensor {
            rank: self.rank,
            levels: self.levels.iter().map(|l| l.iter().map(|x| x.clone() * c.clone()).collect()).collect(),
        }
    }

    /// Truncated logarithm of a series with unit constant term.
    pub fn log(&self) -> Result<Self> {
        if self.levels[0][0] != F::one() {
            return Err(Error::Invalid("series is not group-like: empty-word coefficient is not 1".into()));
        }
        let depth = self.depth();
        let mut x = self.clone();
        x.levels[0][0] = F::zero();
        let mut out = Self::zero(self.rank, depth);
        let mut pow = x.clone();
        for n in 1..=depth {
            let c = F::from_ratio(if n % 2 == 1 { 1 } else { -1 }, n as i64);
            out = out.add(&pow.scale(&c));
            pow = pow.mul(&x);
        }
        Ok(out)
    }

    /// Truncated exponential of a series with zero constant term.
    pub fn exp(&self) -> Self {
        let depth = self.depth();
        let mut out = Self::one(self.rank, depth);
        let mut term = Self::one(self.rank, depth);
        for n in 1..=depth {
            term = term.mul(self).scale(&F::from_ratio(1, n as i64));
            out = out.add(&term);
        }
        out
    }

    /// Words of length `k` with their indices.
    pub fn words(&self, k: usize) -> Vec<Vec<u8>> {
        let r = self.rank;
        (0..r.pow(k as u32))
            .map(|mut idx| {
                let mut w = vec![0u8; k];
                for slot in w.iter_mut().rev() {
                    *slot = (idx % r) as u8 + 1;
                    idx /= r;
                }
                w
            })
            .collect()
    }
}

/// Truncated Chen series of a path in the group of an algebra; truncated at
/// the step of the algebra.
#[derive(Clone, Debug)]
pub struct TensorSeries<F> {
    pub alg: Algebra,
    pub tensor: Tensor<F>,
}

impl<F: Scalar> PartialEq for TensorSeries<F> {
    fn eq(&self, other: &Self) -> bool {
        self.alg.fingerprint() == other.alg.fingerprint() && self.tensor == other.tensor
    }
}

impl<F: Scalar> TensorSeries<F> {
    /// Coefficient of a word written with digits, e.g. `"12"`.
    pub fn coeff(&self, word: &str) -> Result<F> {
        let letters: Vec<u8> = word
            .chars()
            .map(|c| {
                c.to_digit(10)
                    .filter(|&d| d >= 1 && d as usize <= self.tensor.rank)
                    .map(|d| d as u8)
                    .ok_or_else(|| Error::Parse(format!("bad tensor word {word:?}")))
            })
            .collect::<Result<_>>()?;
        Ok(self.tensor.coeff(&letters))
    }

    pub fn mul(&self, other: &Self) -> Self {
        TensorSeries { alg: self.alg.clone(), tensor: self.tensor.mul(&other.tensor) }
    }

    pub fn is_group_like(&self) -> bool {
        self.tensor.levels[0][0] == F::one()
    }
}

fn check_level(rank: usize, depth: usize) -> Result<()> {
    match rank.checked_pow(depth as u32) {
        Some(n) if n <= MAX_LEVEL_WORDS => Ok(()),
        _ => Err(Error::Capacity(format!(
            "tensor level {depth} over {rank} letters exceeds {MAX_LEVEL_WORDS} words"
        ))),
    }
}

/// Chen series of one polynomial piece over local time `[0, d]`.
fn piece_signature<F: Scalar>(poly: &[Poly<F>], d: &F, depth: usize) -> Tensor<F> {
    let r = poly.len();
    let mut out = Tensor::one(r, depth);
    let mut prev: Vec<Poly<F>> = vec![Poly::constant(F::one())];
    for k in 1..=depth {
        let mut cur = Vec::with_capacity(prev.len() * r);
        for p in &prev {
            for u in poly {
                cur.push(p.mul(u).integral());
            }
        }
        for (i, p) in cur.iter().enumerate() {
            out.levels[k][i] = p.eval(d);
        }
        prev = cur;
    }
    out
}

/// Iterated integrals of `u` over the simplices of `[t0, t1]`, to the step of `alg`.
pub fn chen_signature<F: Scalar>(alg: &Algebra, u: &PolyControl<F>, t0: &F, t1: &F) -> Result<TensorSeries<F>> {
    if u.rank() != alg.rank() {
        return Err(Error::Invalid(format!("control rank {} vs algebra rank {}", u.rank(), alg.rank())));
    }
    let depth = alg.step();
    check_level(alg.rank(), depth)?;
    let mut s = Tensor::one(alg.rank(), depth);
    if t0 == t1 {
        return Ok(TensorSeries { alg: alg.clone(), tensor: s });
    }
    let part = u.restrict(t0, t1)?;
    for p in &part.pieces {
        s = s.mul(&piece_signature(&p.poly, &p.duration, depth));
    }
    Ok(TensorSeries { alg: alg.clone(), tensor: s })
}

// ---------------------------------------------------------------------------
// Group elements
// ---------------------------------------------------------------------------

/// Group element in exponential coordinates of the first kind.
#[derive(Clone, Debug)]
pub struct GroupElement<F> {
    pub log: LieVector<F>,
}

impl<F: Scalar> PartialEq for GroupElement<F> {
    fn eq(&self, other: &Self) -> bool {
        self.log == other.log
    }
}

impl<F: Scalar> GroupElement<F> {
    pub fn identity(alg: &Algebra) -> Self {
        GroupElement { log: LieVector::zero(alg) }
    }

    pub fn exp(v: LieVector<F>) -> Self {
        GroupElement { log: v }
    }

    pub fn inverse(&self) -> Self {
        GroupElement { log: self.log.neg() }
    }

    pub fn is_identity(&self) -> bool {
        self.log.is_zero()
    }

    pub fn to_word_map(&self) -> BTreeMap<String, String> {
        self.log.to_word_map()
    }
}

/// Right-nested brackets `[x_{w1}, [x_{w2}, ...]]` of every word up to `depth`,
/// with letters standing for the given vectors.
fn right_nested_table<F: Scalar>(alg: &Algebra, letters: &[Vec<F>], depth: usize) -> Vec<Vec<Vec<F>>> {
    let r = letters.len();
    let mut table: Vec<Vec<Vec<F>>> = vec![vec![vec![F::one()]]];
    if depth >= 1 {
        table.push(letters.to_vec());
    }
    for k in 2..=depth {
        let width = r.pow((k - 1) as u32);
        let mut level = Vec::with_capacity(r * width);
        for a in 0..r {
            for tail in &table[k - 1] {
                level.push(alg.bracket_coords(&letters[a], tail));
            }
        }
        debug_assert_eq!(level.len(), r * width);
        table.push(level);
    }
    table
}

/// Projects a Lie series onto `g` with the Dynkin map `w -> r(w)/|w|`.
fn dynkin_project<F: Scalar>(alg: &Algebra, lie: &Tensor<F>, letters: &[Vec<F>]) -> Vec<F> {
    let depth = lie.depth().min(alg.step());
    let table = right_nested_table(alg, letters, depth);
    let mut out = vec![F::zero(); alg.dim()];
    for k in 1..=depth {
        let inv = F::from_ratio(1, k as i64);
        for (c, v) in lie.levels[k].iter().zip(&table[k]) {
            if c.is_zero() {
                continue;
            }
            let f = c.clone() * inv.clone();
            for (o, x) in out.iter_mut().zip(v) {
                if !x.is_zero() {
                    *o = o.clone() + f.clone() * x.clone();
                }
            }
        }
    }
    out
}

/// Exponential coordinates of the group element whose Chen series is `s`.
pub fn log_to_group<F: Scalar>(s: &TensorSeries<F>) -> Result<GroupElement<F>> {
    let lie = s.tensor.log()?;
    let letters: Vec<Vec<F>> = (0..s.alg.rank()).map(|i| LieVector::<F>::basis(&s.alg, i).coords).collect();
    let coords = dynkin_project(&s.alg, &lie, &letters);
    Ok(GroupElement { log: LieVector::new(&s.alg, coords)? })
}

/// Truncated BCH series `log(exp(a) exp(b))` on two letters.
#[derive(Clone, Debug)]
pub struct Bch {
    lie: Tensor<BigRational>,
}

impl Bch {
    pub fn new(depth: usize) -> Self {
        let mut a = Tensor::<BigRational>::zero(2, depth);
        let mut b = Tensor::<BigRational>::zero(2, depth);
        if depth >= 1 {
            a.levels[1][0] = <BigRational as Scalar>::one();
            b.levels[1][1] = <BigRational as Scalar>::one();
        }
        let lie = a.exp().mul(&b.exp()).log().expect("exp is group-like");
        Bch { lie }
    }

    pub fn apply<F: Scalar>(&self, alg: &Algebra, x: &[F], y: &[F]) -> Vec<F> {
        let lie = Tensor {
            rank: 2,
            levels: self.lie.levels.iter().map(|l| l.iter().map(F::from_rational).collect()).collect(),
        };
        dynkin_project(alg, &lie, &[x.to_vec(), y.to_vec()])
    }
}


/// Group law `g h`.
pub fn group_product<F: Scalar>(g: &GroupElement<F>, h: &GroupElement<F>) -> Result<GroupElement<F>> {
    if g.log.alg.fingerprint() != h.log.alg.fingerprint() {
        return Err(Error::AlgebraMismatch("group elements of different algebras".into()));
    }
    let alg = &g.log.alg;
    let z = Bch::new(alg.step()).apply(alg, &g.log.coords, &h.log.coords);
    Ok(GroupElement { log: LieVector::new(alg, z)? })
}

/// Endpoint of the horizontal curve driven by `u` from the identity.
pub fn endpoint<F: Scalar>(alg: &Algebra, u: &PolyControl<F>) -> Result<GroupElement<F>> {
    log_to_group(&chen_signature(alg, u, &F::zero(), &u.total())?)
}

// ---------------------------------------------------------------------------
// Adjoint flow
// ---------------------------------------------------------------------------

/// `A(t)` on one piece: `prefix * local(t - start)`.
#[derive(Clone, Debug)]
pub struct PieceFlow<F> {
    pub start: F,
    pub duration: F,
    /// `A` at the start of the piece.
    pub prefix: Mat<F>,
    /// Local flow, a polynomial matrix in local time with value `Id` at zero.
    pub local: PolyMat<F>,
}

impl<F: Scalar> PieceFlow<F> {
    /// The polynomial matrix `prefix * local(s)`.
    pub fn global(&self) -> PolyMat<F> {
        self.local.left_mul(&self.prefix)
    }
}

/// Picard series of `B' = B ad(X_u)`, `B(0) = Id` for one piece; exact
/// because `ad` is nilpotent of order `step`.
fn local_flow<F: Scalar>(alg: &Algebra, poly: &[Poly<F>]) -> PolyMat<F> {
    let n = alg.dim();
    let maxdeg = poly.iter().map(|p| p.coeffs.len()).max().unwrap_or(0);
    // ad matrices of the coefficient vectors of u
    let ads: Vec<Mat<F>> = (0..maxdeg)
        .map(|m| {
            let x: Vec<F> = poly.iter().map(|p| p.coeff(m)).collect();
            alg.ad_matrix(&LieVector::horizontal(alg, &x).coords)
        })
        .collect();
    let mut total: Vec<Mat<F>> = vec![Mat::identity(n)];
    let mut term: Vec<Mat<F>> = vec![Mat::identity(n)];
    for _ in 1..alg.step() {
        let mut next: Vec<Mat<F>> = Vec::new();
        for (p, bp) in term.iter().enumerate() {
            if bp.is_zero() {
                continue;
            }
            for (m, am) in ads.iter().enumerate() {
                let deg = p + m + 1;
                while next.len() <= deg {
                    next.push(Mat::zeros(n, n));
                }
                let prod = bp.mul(am).scale(&F::from_ratio(1, deg as i64));
                next[deg] = next[deg].add(&prod);
            }
        }
        if next.iter().all(|m| m.is_zero()) {
            break;
        }
        for (k, m) in next.iter().enumerate() {
            while total.len() <= k {
                total.push(Mat::zeros(n, n));
            }
            total[k] = total[k].add(m);
        }
        term = next;
    }
    while total.len() > 1 && total.last().is_some_and(|m| m.is_zero()) {
        total.pop();
    }
    PolyMat { rows: n, cols: n, terms: total }
}

/// Piecewise polynomial form of `A(t)` over the whole control.
pub fn piece_flows<F: Scalar>(alg: &Algebra, u: &PolyControl<F>) -> Result<Vec<PieceFlow<F>>> {
    if u.rank() != alg.rank() {
        return Err(Error::Invalid(format!("control rank {} vs algebra rank {}", u.rank(), alg.rank())));
    }
    let mut out = Vec::with_capacity(u.pieces.len());
    let mut prefix = Mat::identity(alg.dim());
    let mut start = F::zero();
    for p in &u.pieces {
        let local = local_flow(alg, &p.poly);
        let end_local = local.eval(&p.duration);
        out.push(PieceFlow { start: start.clone(), duration: p.duration.clone(), prefix: prefix.clone(), local });
        prefix = prefix.mul(&end_local);
        start = start + p.duration.clone();
    }
    Ok(out)
}

/// `A(t)`, the solution of `A' = A ad(X_{u(t)})`, `A(0) = Id`, as a matrix
/// acting on coordinate columns.
pub fn adjoint_flow<F: Scalar>(alg: &Algebra, u: &PolyControl<F>, t: &F) -> Result<Mat<F>> {
    let (k, s) = u.locate(t)?;
    let flows = piece_flows(alg, u)?;
    Ok(flows[k].prefix.mul(&flows[k].local.eval(&s)))
}
