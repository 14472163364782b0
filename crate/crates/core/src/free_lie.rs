//! Graded nilpotent Lie algebras with exact structure constants.
//!
//! Free algebras use the Lyndon-word Hall basis: each Lyndon word `l` is
//! bracketed by its standard factorisation `l = uv` (with `v` the longest
//! proper Lyndon suffix) and the resulting tree is written in multi-index
//! notation, right-nested with round brackets for priority, so
//! `"112"` is `[X1,[X1,X2]]` and `"(12)2"` is `[[X1,X2],X2]`.
//!
//! Structure constants are computed once, exactly, by expanding brackets in
//! the free associative algebra and reading coordinates off the triangular
//! Lyndon expansion.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::sync::Arc;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{format_rational, parse_rational, Scalar};

/// Default cap on the total dimension of an algebra.
pub const DEFAULT_MAX_DIM: usize = 64;

/// Largest supported rank; generators are written as single digits.
pub const MAX_RANK: usize = 9;

// ---------------------------------------------------------------------------
// Bracket trees and the multi-index notation
// ---------------------------------------------------------------------------

/// Binary bracket tree over generator indices `1..=r`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Tree {
    Leaf(u8),
    Node(Box<Tree>, Box<Tree>),
}

impl Tree {
    pub fn node(a: Tree, b: Tree) -> Tree {
        Tree::Node(Box::new(a), Box::new(b))
    }

    /// Right-nested bracket `[i1,[i2,[...,ik]]]` of a letter sequence.
    pub fn right_nested(letters: &[u8]) -> Tree {
        assert!(!letters.is_empty(), "empty word");
        let mut t = Tree::Leaf(letters[letters.len() - 1]);
        for &a in letters[..letters.len() - 1].iter().rev() {
            t = Tree::node(Tree::Leaf(a), t);
        }
        t
    }

    /// Number of generator leaves.
    pub fn degree(&self) -> usize {
        match self {
            Tree::Leaf(_) => 1,
            Tree::Node(a, b) => a.degree() + b.degree(),
        }
    }

    pub fn max_letter(&self) -> u8 {
        match self {
            Tree::Leaf(i) => *i,
            Tree::Node(a, b) => a.max_letter().max(b.max_letter()),
        }
    }

    /// Leaves from left to right.
    pub fn letters(&self) -> Vec<u8> {
        let mut out = Vec::new();
        fn walk(t: &Tree, out: &mut Vec<u8>) {
            match t {
                Tree::Leaf(i) => out.push(*i),
                Tree::Node(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        walk(self, &mut out);
        out
    }

    /// Canonical multi-index text: the right spine is flattened and every
    /// non-leaf item on it is parenthesised.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut cur = self;
        loop {
            match cur {
                Tree::Leaf(i) => {
                    s.push(char::from(b'0' + i));
                    break;
                }
                Tree::Node(a, b) => {
                    match a.as_ref() {
                        Tree::Leaf(i) => s.push(char::from(b'0' + i)),
                        inner => {
                            s.push('(');
                            s.push_str(&inner.to_text());
                            s.push(')');
                        }
                    }
                    cur = b;
                }
            }
        }
        s
    }

    /// Expansion in the free associative algebra.
    pub fn expand(&self) -> TensorPoly {
        match self {
            Tree::Leaf(i) => {
                let mut p = TensorPoly::new();
                p.insert(vec![*i], BigRational::from_integer(1.into()));
                p
            }
            Tree::Node(a, b) => {
                let pa = a.expand();
                let pb = b.expand();
                let mut out = poly_mul(&pa, &pb);
                for (w, c) in poly_mul(&pb, &pa) {
                    add_term(&mut out, w, -c);
                }
                out
            }
        }
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Parses multi-index notation. A juxtaposed sequence `a b c ...` denotes the
/// right-nested bracket `[a,[b,[c,...]]]`; round brackets group a sub-word.
/// When `rank` is given, generator digits above it are rejected.
pub fn parse_word(text: &str, rank: Option<usize>) -> Result<Tree> {
    let chars: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    if chars.is_empty() {
        return Err(Error::Parse("empty word".into()));
    }
    let mut pos = 0;
    let t = parse_seq(&chars, &mut pos, rank, text)?;
    if pos != chars.len() {
        return Err(Error::Parse(format!("unbalanced parentheses in {text:?}")));
    }
    Ok(t)
}

fn parse_seq(chars: &[char], pos: &mut usize, rank: Option<usize>, src: &str) -> Result<Tree> {
    let mut items = Vec::new();
    while *pos < chars.len() {
        let c = chars[*pos];
        match c {
            '(' => {
                *pos += 1;
                let inner = parse_seq(chars, pos, rank, src)?;
                if *pos >= chars.len() || chars[*pos] != ')' {
                    return Err(Error::Parse(format!("unbalanced parentheses in {src:?}")));
                }
                *pos += 1;
                items.push(inner);
            }
            ')' => break,
            d if d.is_ascii_digit() => {
                let i = d as u8 - b'0';
                if i == 0 || rank.is_some_and(|r| i as usize > r) {
                    return Err(Error::Parse(format!(
                        "generator index {i} out of range in {src:?}"
                    )));
                }
                items.push(Tree::Leaf(i));
                *pos += 1;
            }
            other => {
                return Err(Error::Parse(format!("unexpected character {other:?} in {src:?}")))
            }
        }
    }
    let mut it = items.into_iter().rev();
    let mut t = it
        .next()
        .ok_or_else(|| Error::Parse(format!("empty bracket group in {src:?}")))?;
    for a in it {
        t = Tree::node(a, t);
    }
    Ok(t)
}

// ---------------------------------------------------------------------------
// Free associative algebra helpers
// ---------------------------------------------------------------------------

/// Sparse noncommutative polynomial; keys are words, ordered lexicographically.
pub type TensorPoly = BTreeMap<Vec<u8>, BigRational>;

fn add_term(p: &mut TensorPoly, w: Vec<u8>, c: BigRational) {
    if c.is_zero() {
        return;
    }
    match p.entry(w) {
        std::collections::btree_map::Entry::Vacant(e) => {
            e.insert(c);
        }
        std::collections::btree_map::Entry::Occupied(mut e) => {
            let v = e.get().clone() + c;
            if v.is_zero() {
                e.remove();
            } else {
                *e.get_mut() = v;
            }
        }
    }
}

fn poly_mul(a: &TensorPoly, b: &TensorPoly) -> TensorPoly {
    let mut out = TensorPoly::new();
    for (wa, ca) in a {
        for (wb, cb) in b {
            let mut w = wa.clone();
            w.extend_from_slice(wb);
            add_term(&mut out, w, ca * cb);
        }
    }
    out
}

/// Lyndon words of length exactly `n` over `1..=r`, in lexicographic order
/// (Duval's generation algorithm).
pub fn lyndon_words(r: usize, n: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    if r == 0 || n == 0 {
        return out;
    }
    let mut w: Vec<u8> = vec![1];
    loop {
        if w.len() == n {
            out.push(w.clone());
        }
        // extend periodically to length n
        let m = w.len();
        while w.len() < n {
            let c = w[w.len() - m];
            w.push(c);
        }
        while let Some(&last) = w.last() {
            if last as usize == r {
                w.pop();
            } else {
                break;
            }
        }
        match w.last_mut() {
            None => break,
            Some(x) => *x += 1,
        }
    }
    out
}

fn is_lyndon(w: &[u8]) -> bool {
    (1..w.len()).all(|i| w < &w[i..])
}

/// Standard bracketing of a Lyndon word.
pub fn standard_bracketing(w: &[u8]) -> Tree {
    if w.len() == 1 {
        return Tree::Leaf(w[0]);
    }
    let split = (1..w.len())
        .find(|&i| is_lyndon(&w[i..]))
        .expect("a Lyndon word of length >= 2 has a proper Lyndon suffix");
    Tree::node(standard_bracketing(&w[..split]), standard_bracketing(&w[split..]))
}

// ---------------------------------------------------------------------------
// The algebra
// ---------------------------------------------------------------------------

/// A basis element: its bracket tree, layer and canonical text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HallWord {
    pub tree: Tree,
    pub degree: usize,
    pub text: String,
}

impl HallWord {
    pub fn from_tree(tree: Tree) -> Self {
        let degree = tree.degree();
        let text = tree.to_text();
        HallWord { tree, degree, text }
    }
}

/// Sparse structure constants: `entries[i][j]` lists `(k, c)` with
/// `[X_i, X_j] = sum c X_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureTable<F> {
    pub entries: Vec<Vec<Vec<(usize, F)>>>,
}

impl<F: Scalar> StructureTable<F> {
    fn convert<G: Scalar>(&self, f: impl Fn(&F) -> G) -> StructureTable<G> {
        StructureTable {
            entries: self
                .entries
                .iter()
                .map(|row| row.iter().map(|cell| cell.iter().map(|(k, c)| (*k, f(c))).collect()).collect())
                .collect(),
        }
    }
}

/// Both arithmetic views of one structure table.
#[derive(Clone, Debug)]
pub struct TablePair {
    pub exact: StructureTable<BigRational>,
    pub float: StructureTable<f64>,
}

/// Build options.
#[derive(Clone, Copy, Debug)]
pub struct AlgebraOptions {
    pub max_dim: usize,
}

impl Default for AlgebraOptions {
    fn default() -> Self {
        AlgebraOptions { max_dim: DEFAULT_MAX_DIM }
    }
}

/// A stratified nilpotent Lie algebra `g1 + ... + gs` with a graded basis.
#[derive(Clone, Debug)]
pub struct GradedAlgebra {
    rank: usize,
    step: usize,
    basis: Vec<HallWord>,
    layer_start: Vec<usize>,
    tables: TablePair,
    index: HashMap<String, usize>,
    is_free: bool,
    fingerprint: u64,
}

pub type Algebra = Arc<GradedAlgebra>;

impl GradedAlgebra {
    pub fn rank(&self) -> usize {
        self.rank
    }
    pub fn step(&self) -> usize {
        self.step
    }
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
    pub fn is_free(&self) -> bool {
        self.is_free
    }
    pub fn basis(&self) -> &[HallWord] {
        &self.basis
    }
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Index range of layer `k` (1-based).
    pub fn layer_range(&self, k: usize) -> std::ops::Range<usize> {
        assert!(k >= 1 && k <= self.step, "layer {k} out of range");
        self.layer_start[k - 1]..self.layer_start[k]
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        (1..=self.step).map(|k| self.layer_range(k).len()).collect()
    }

    /// Layer (1-based) of basis index `i`.
    pub fn layer_of(&self, i: usize) -> usize {
        self.basis[i].degree
    }

    pub fn index_of(&self, text: &str) -> Option<usize> {
        self.index.get(text).copied()
    }

    pub fn exact_table(&self) -> &StructureTable<BigRational> {
        &self.tables.exact
    }

    pub fn table<F: Scalar>(&self) -> &StructureTable<F> {
        F::pick_table(&self.tables)
    }

    /// Structure constant `c^k_{i,j}` as an exact rational.
    pub fn constant(&self, i: usize, j: usize, k: usize) -> BigRational {
        self.tables.exact.entries[i][j]
            .iter()
            .find(|(kk, _)| *kk == k)
            .map(|(_, c)| c.clone())
            .unwrap_or_else(BigRational::zero)
    }

    /// Bracket of coordinate vectors.
    pub fn bracket_coords<F: Scalar>(&self, a: &[F], b: &[F]) -> Vec<F> {
        let n = self.dim();
        let t = self.table::<F>();
        let mut out = vec![F::zero(); n];
        for (i, ai) in a.iter().enumerate() {
            if ai.is_zero() {
                continue;
            }
            for (j, bj) in b.iter().enumerate() {
                if bj.is_zero() {
                    continue;
                }
                let cell = &t.entries[i][j];
                if cell.is_empty() {
                    continue;
                }
                let ab = ai.clone() * bj.clone();
                for (k, c) in cell {
                    let cur = std::mem::replace(&mut out[*k], F::zero());
                    out[*k] = cur + ab.clone() * c.clone();
                }
            }
        }
        out
    }

    /// Matrix of `ad x` acting on column coordinate vectors.
    pub fn ad_matrix<F: Scalar>(&self, x: &[F]) -> crate::linalg::Mat<F> {
        let n = self.dim();
        let t = self.table::<F>();
        let mut m = crate::linalg::Mat::zeros(n, n);
        for (i, xi) in x.iter().enumerate() {
            if xi.is_zero() {
                continue;
            }
            for j in 0..n {
                for (k, c) in &t.entries[i][j] {
                    let cur = std::mem::replace(&mut m[(*k, j)], F::zero());
                    m[(*k, j)] = cur + xi.clone() * c.clone();
                }
            }
        }
        m
    }

    /// Exact coordinates of a bracket tree.
    pub fn eval_tree(&self, t: &Tree) -> Result<Vec<BigRational>> {
        match t {
            Tree::Leaf(i) => {
                let i = *i as usize;
                if i == 0 || i > self.rank {
                    return Err(Error::Parse(format!(
                        "generator {i} out of range for rank {}",
                        self.rank
                    )));
                }
                let mut v = vec![BigRational::zero(); self.dim()];
                v[i - 1] = BigRational::from_integer(1.into());
                Ok(v)
            }
            Tree::Node(a, b) => {
                if t.degree() > self.step {
                    return Ok(vec![BigRational::zero(); self.dim()]);
                }
                let va = self.eval_tree(a)?;
                let vb = self.eval_tree(b)?;
                Ok(self.bracket_coords(&va, &vb))
            }
        }
    }

    /// Exact coordinates of the element `X_J` named by a word.
    pub fn word_coords(&self, text: &str) -> Result<Vec<BigRational>> {
        let t = parse_word(text, Some(self.rank))?;
        self.eval_tree(&t)
    }
}

fn fingerprint_of(rank: usize, step: usize, basis: &[HallWord], t: &StructureTable<BigRational>) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    rank.hash(&mut h);
    step.hash(&mut h);
    for w in basis {
        w.text.hash(&mut h);
    }
    for (i, row) in t.entries.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            for (k, c) in cell {
                (i, j, *k, format_rational(c)).hash(&mut h);
            }
        }
    }
    h.finish()
}

fn assemble(
    rank: usize,
    step: usize,
    basis: Vec<HallWord>,
    exact: StructureTable<BigRational>,
    is_free: bool,
) -> GradedAlgebra {
    let mut layer_start = vec![0; step + 1];
    for k in 1..=step {
        layer_start[k] = layer_start[k - 1] + basis.iter().filter(|w| w.degree == k).count();
    }
    let index = basis.iter().enumerate().map(|(i, w)| (w.text.clone(), i)).collect();
    let float = exact.convert(|c| c.to_f64());
    let fingerprint = fingerprint_of(rank, step, &basis, &exact);
    GradedAlgebra {
        rank,
        step,
        basis,
        layer_start,
        tables: TablePair { exact, float },
        index,
        is_free,
        fingerprint,
    }
}

/// Free nilpotent Lie algebra of the given rank and step.
pub fn build_free_algebra(rank: usize, step: usize) -> Result<Algebra> {
    build_free_algebra_with(rank, step, AlgebraOptions::default())
}

pub fn build_free_algebra_with(rank: usize, step: usize, opts: AlgebraOptions) -> Result<Algebra> {
    if rank == 0 || step == 0 {
        return Err(Error::Invalid("rank and step must be at least 1".into()));
    }
    if rank > MAX_RANK {
        return Err(Error::Capacity(format!("rank {rank} exceeds the supported maximum {MAX_RANK}")));
    }
    let words: Vec<Vec<Vec<u8>>> = (1..=step).map(|k| lyndon_words(rank, k)).collect();
    let dim: usize = words.iter().map(|l| l.len()).sum();
    if dim > opts.max_dim {
        return Err(Error::Capacity(format!(
            "free({rank},{step}) has dimension {dim}, above the configured maximum {}",
            opts.max_dim
        )));
    }
    let mut basis = Vec::with_capacity(dim);
    let mut lyndon_of = Vec::with_capacity(dim);
    let mut polys = Vec::with_capacity(dim);
    for layer in &words {
        for w in layer {
            let t = standard_bracketing(w);
            polys.push(t.expand());
            basis.push(HallWord::from_tree(t));
            lyndon_of.push(w.clone());
        }
    }
    let pos: HashMap<Vec<u8>, usize> = lyndon_of.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect();

    // Lie polynomial -> basis coordinates. The expansion of a standard
    // bracketing is its Lyndon word plus lexicographically larger words, so
    // the smallest surviving word always names the next coordinate.
    let coords_of = |mut p: TensorPoly| -> Vec<(usize, BigRational)> {
        let mut out = Vec::new();
        while let Some((w, c)) = p.iter().next().map(|(w, c)| (w.clone(), c.clone())) {
            let idx = *pos
                .get(&w)
                .expect("leading word of a Lie polynomial is a Lyndon word");
            for (u, d) in &polys[idx] {
                add_term(&mut p, u.clone(), -(c.clone() * d));
            }
            out.push((idx, c));
        }
        out.sort_by_key(|(k, _)| *k);
        out
    };

    let mut entries = vec![vec![Vec::new(); dim]; dim];
    for i in 0..dim {
        for j in (i + 1)..dim {
            if basis[i].degree + basis[j].degree > step {
                continue;
            }
            let mut p = poly_mul(&polys[i], &polys[j]);
            for (w, c) in poly_mul(&polys[j], &polys[i]) {
                add_term(&mut p, w, -c);
            }
            let cij = coords_of(p);
            entries[j][i] = cij.iter().map(|(k, c)| (*k, -c.clone())).collect();
            entries[i][j] = cij;
        }
    }
    Ok(Arc::new(assemble(rank, step, basis, StructureTable { entries }, true)))
}

// ---------------------------------------------------------------------------
// Validation and the JSON spec format
// ---------------------------------------------------------------------------

/// Checks antisymmetry, grading and the Jacobi identity on every basis
/// pair/triple; the error names the offending indices.
pub fn validate(alg: &GradedAlgebra) -> Result<()> {
    let n = alg.dim();
    let words = |i: usize| alg.basis[i].text.clone();
    for i in 0..n {
        for j in 0..n {
            for (k, c) in &alg.tables.exact.entries[i][j] {
                let back = alg.constant(j, i, *k);
                if back != -c.clone() {
                    return Err(Error::InvalidAlgebra(format!(
                        "antisymmetry fails on ({}, {}) -> {}",
                        words(i),
                        words(j),
                        words(*k)
                    )));
                }
                let target = alg.basis[i].degree + alg.basis[j].degree;
                if alg.basis[*k].degree != target {
                    return Err(Error::InvalidAlgebra(format!(
                        "grading fails: [{}, {}] has a component on {} outside layer {target}",
                        words(i),
                        words(j),
                        words(*k)
                    )));
                }
            }
        }
    }
    for i in 0..n {
        let ei = unit(n, i);
        for j in (i + 1)..n {
            let ej = unit(n, j);
            let eij = alg.bracket_coords(&ei, &ej);
            for k in (j + 1)..n {
                if alg.basis[i].degree + alg.basis[j].degree + alg.basis[k].degree > alg.step {
                    continue;
                }
                let ek = unit(n, k);
                let ejk = alg.bracket_coords(&ej, &ek);
                let eki = alg.bracket_coords(&ek, &ei);
                let a = alg.bracket_coords(&ei, &ejk);
                let b = alg.bracket_coords(&ej, &eki);
                let c = alg.bracket_coords(&ek, &eij);
                if a.iter().zip(&b).zip(&c).any(|((x, y), z)| !(x.clone() + y.clone() + z.clone()).is_zero()) {
                    return Err(Error::InvalidAlgebra(format!(
                        "Jacobi identity fails on ({}, {}, {})",
                        words(i),
                        words(j),
                        words(k)
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Checks that each layer `k >= 2` is spanned by `[g1, g_{k-1}]`.
pub fn validate_generation(alg: &GradedAlgebra) -> Result<()> {
    let n = alg.dim();
    for k in 2..=alg.step {
        let mut vecs = Vec::new();
        for i in alg.layer_range(1) {
            for j in alg.layer_range(k - 1) {
                vecs.push(alg.bracket_coords(&unit(n, i), &unit(n, j)));
            }
        }
        let r = crate::linalg::span_basis(&vecs, n, 0.0).len();
        if r != alg.layer_range(k).len() {
            return Err(Error::InvalidAlgebra(format!(
                "layer {k} is not generated by brackets with the first layer (rank {r} of {})",
                alg.layer_range(k).len()
            )));
        }
    }
    Ok(())
}

pub(crate) fn unit(n: usize, i: usize) -> Vec<BigRational> {
    let mut v = vec![BigRational::zero(); n];
    v[i] = BigRational::from_integer(1.into());
    v
}

/// Index or word naming a basis element in a spec file.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum BasisRef {
    Index(usize),
    Word(String),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StructureEntry {
    pub i: BasisRef,
    pub j: BasisRef,
    pub out: BTreeMap<String, String>,
}

/// On-disk algebra description.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AlgebraSpecFile {
    pub rank: usize,
    pub step: usize,
    pub layers: Vec<Vec<String>>,
    pub structure: Vec<StructureEntry>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub is_free: bool,
}

impl GradedAlgebra {
    /// Spec with one entry per nonzero bracket `[X_i, X_j]`, `i < j`.
    pub fn to_spec(&self) -> AlgebraSpecFile {
        let layers = (1..=self.step)
            .map(|k| self.layer_range(k).map(|i| self.basis[i].text.clone()).collect())
            .collect();
        let mut structure = Vec::new();
        for i in 0..self.dim() {
            for j in (i + 1)..self.dim() {
                let cell = &self.tables.exact.entries[i][j];
                if cell.is_empty() {
                    continue;
                }
                structure.push(StructureEntry {
                    i: BasisRef::Word(self.basis[i].text.clone()),
                    j: BasisRef::Word(self.basis[j].text.clone()),
                    out: cell
                        .iter()
                        .map(|(k, c)| (self.basis[*k].text.clone(), format_rational(c)))
                        .collect(),
                });
            }
        }
        AlgebraSpecFile { rank: self.rank, step: self.step, layers, structure, is_free: self.is_free }
    }
}

/// Builds and validates an algebra from a spec; rejects invariant violations.
pub fn algebra_from_spec(spec: &AlgebraSpecFile, opts: AlgebraOptions) -> Result<Algebra> {
    let (rank, step) = (spec.rank, spec.step);
    if rank == 0 || step == 0 || rank > MAX_RANK {
        return Err(Error::InvalidAlgebra(format!("unsupported rank/step ({rank},{step})")));
    }
    if spec.layers.len() != step {
        return Err(Error::InvalidAlgebra(format!(
            "expected {step} layers, found {}",
            spec.layers.len()
        )));
    }
    let expected: Vec<String> = (1..=rank).map(|i| i.to_string()).collect();
    if spec.layers[0] != expected {
        return Err(Error::InvalidAlgebra(format!(
            "first layer must list the generators {expected:?}"
        )));
    }
    let mut basis = Vec::new();
    for (k, layer) in spec.layers.iter().enumerate() {
        if layer.is_empty() {
            return Err(Error::InvalidAlgebra(format!("layer {} is empty", k + 1)));
        }
        for w in layer {
            let tree = parse_word(w, Some(rank))?;
            if tree.degree() != k + 1 {
                return Err(Error::InvalidAlgebra(format!(
                    "word {w:?} has degree {} but is listed in layer {}",
                    tree.degree(),
                    k + 1
                )));
            }
            // keep the caller's spelling as the label
            basis.push(HallWord { degree: k + 1, text: w.clone(), tree });
        }
    }
    let n = basis.len();
    if n > opts.max_dim {
        return Err(Error::Capacity(format!("dimension {n} above the configured maximum {}", opts.max_dim)));
    }
    let index: HashMap<&str, usize> = basis.iter().enumerate().map(|(i, w)| (w.text.as_str(), i)).collect();
    if index.len() != n {
        return Err(Error::InvalidAlgebra("duplicate basis words".into()));
    }
    let resolve = |r: &BasisRef| -> Result<usize> {
        match r {
            BasisRef::Index(i) if *i < n => Ok(*i),
            BasisRef::Index(i) => Err(Error::InvalidAlgebra(format!("basis index {i} out of range"))),
            BasisRef::Word(w) => index
                .get(w.as_str())
                .copied()
                .ok_or_else(|| Error::InvalidAlgebra(format!("unknown basis word {w:?}"))),
        }
    };
    let mut given: Vec<Vec<Option<BTreeMap<usize, BigRational>>>> = vec![vec![None; n]; n];
    for e in &spec.structure {
        let (i, j) = (resolve(&e.i)?, resolve(&e.j)?);
        let mut out = BTreeMap::new();
        for (w, c) in &e.out {
            let k = resolve(&BasisRef::Word(w.clone()))?;
            let c = parse_rational(c)?;
            if !c.is_zero() {
                out.insert(k, c);
            }
        }
        if i == j && !out.is_empty() {
            return Err(Error::InvalidAlgebra(format!(
                "antisymmetry fails: [{}, {}] must vanish",
                basis[i].text, basis[j].text
            )));
        }
        if given[i][j].is_some() {
            return Err(Error::InvalidAlgebra(format!(
                "bracket ({}, {}) given twice",
                basis[i].text, basis[j].text
            )));
        }
        given[i][j] = Some(out);
    }
    let mut entries = vec![vec![Vec::new(); n]; n];
    for i in 0..n {
        for j in 0..n {
            let cell = match (&given[i][j], &given[j][i]) {
                (Some(a), Some(b)) => {
                    let neg: BTreeMap<usize, BigRational> = b.iter().map(|(k, c)| (*k, -c.clone())).collect();
                    if *a != neg {
                        return Err(Error::InvalidAlgebra(format!(
                            "antisymmetry fails on ({}, {})",
                            basis[i].text, basis[j].text
                        )));
                    }
                    a.clone()
                }
                (Some(a), None) => a.clone(),
                (None, Some(b)) => b.iter().map(|(k, c)| (*k, -c.clone())).collect(),
                (None, None) => BTreeMap::new(),
            };
            entries[i][j] = cell.into_iter().collect();
        }
    }
    let alg = assemble(rank, step, basis, StructureTable { entries }, spec.is_free);
    validate(&alg)?;
    validate_generation(&alg)?;
    Ok(Arc::new(alg))
}

pub fn load_quotient_algebra(path: &Path) -> Result<Algebra> {
    let text = std::fs::read_to_string(path)?;
    let spec: AlgebraSpecFile = serde_json::from_str(&text)?;
    algebra_from_spec(&spec, AlgebraOptions::default())
}

// ---------------------------------------------------------------------------
// Vectors and covectors
// ---------------------------------------------------------------------------

fn check_same(a: &GradedAlgebra, b: &GradedAlgebra) -> Result<()> {
    if a.fingerprint != b.fingerprint {
        return Err(Error::AlgebraMismatch(format!(
            "algebras ({},{}) and ({},{}) differ",
            a.rank, a.step, b.rank, b.step
        )));
    }
    Ok(())
}

/// Element of `g` in basis coordinates.
#[derive(Clone, Debug)]
pub struct LieVector<F> {
    pub alg: Algebra,
    pub coords: Vec<F>,
}

impl<F: Scalar> PartialEq for LieVector<F> {
    fn eq(&self, other: &Self) -> bool {
        self.alg.fingerprint == other.alg.fingerprint && self.coords == other.coords
    }
}

impl<F: Scalar> LieVector<F> {
    pub fn zero(alg: &Algebra) -> Self {
        LieVector { alg: alg.clone(), coords: vec![F::zero(); alg.dim()] }
    }

    pub fn new(alg: &Algebra, coords: Vec<F>) -> Result<Self> {
        if coords.len() != alg.dim() {
            return Err(Error::Invalid(format!(
                "vector of length {} for an algebra of dimension {}",
                coords.len(),
                alg.dim()
            )));
        }
        Ok(LieVector { alg: alg.clone(), coords })
    }

    pub fn basis(alg: &Algebra, i: usize) -> Self {
        let mut v = Self::zero(alg);
        v.coords[i] = F::one();
        v
    }

    /// The generator `X_i`, `1 <= i <= rank`.
    pub fn generator(alg: &Algebra, i: usize) -> Self {
        assert!(i >= 1 && i <= alg.rank(), "generator index out of range");
        Self::basis(alg, i - 1)
    }

    /// Horizontal element `sum v_i X_i`.
    pub fn horizontal(alg: &Algebra, v: &[F]) -> Self {
        let mut out = Self::zero(alg);
        out.coords[..v.len()].clone_from_slice(v);
        out
    }

    /// `X_J` for a word in multi-index notation.
    pub fn from_word(alg: &Algebra, text: &str) -> Result<Self> {
        let c = alg.word_coords(text)?;
        Ok(LieVector { alg: alg.clone(), coords: c.iter().map(F::from_rational).collect() })
    }

    pub fn bracket(&self, other: &Self) -> Result<Self> {
        check_same(&self.alg, &other.alg)?;
        Ok(LieVector { alg: self.alg.clone(), coords: self.alg.bracket_coords(&self.coords, &other.coords) })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_same(&self.alg, &other.alg)?;
        Ok(LieVector {
            alg: self.alg.clone(),
            coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a.clone() + b.clone()).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_same(&self.alg, &other.alg)?;
        Ok(LieVector {
            alg: self.alg.clone(),
            coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a.clone() - b.clone()).collect(),
        })
    }

    pub fn scale(&self, c: &F) -> Self {
        LieVector { alg: self.alg.clone(), coords: self.coords.iter().map(|a| a.clone() * c.clone()).collect() }
    }

    pub fn neg(&self) -> Self {
        LieVector { alg: self.alg.clone(), coords: self.coords.iter().map(|a| -a.clone()).collect() }
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|c| c.is_zero())
    }

    /// Component in layer `k`.
    pub fn layer(&self, k: usize) -> Self {
        let mut out = Self::zero(&self.alg);
        for i in self.alg.layer_range(k) {
            out.coords[i] = self.coords[i].clone();
        }
        out
    }

    /// Nonzero coordinates keyed by basis word.
    pub fn to_word_map(&self) -> BTreeMap<String, String> {
        self.coords
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, c)| (self.alg.basis[i].text.clone(), c.to_text()))
            .collect()
    }

    pub fn to_f64(&self) -> LieVector<f64> {
        LieVector { alg: self.alg.clone(), coords: self.coords.iter().map(|c| c.to_f64()).collect() }
    }
}

impl LieVector<BigRational> {
    /// Reads `{word: "p/q"}`; words need not be basis words.
    pub fn from_word_map(alg: &Algebra, map: &BTreeMap<String, String>) -> Result<Self> {
        let mut v = Self::zero(alg);
        for (w, c) in map {
            let q = parse_rational(c)?;
            let x = alg.word_coords(w)?;
            for (a, b) in v.coords.iter_mut().zip(x) {
                *a = a.clone() + q.clone() * b;
            }
        }
        Ok(v)
    }
}

/// Element of `g*` in the dual basis: `coords[i] = <lambda, X_i>`.
#[derive(Clone, Debug)]
pub struct DualCovector<F> {
    pub alg: Algebra,
    pub coords: Vec<F>,
}

impl<F: Scalar> PartialEq for DualCovector<F> {
    fn eq(&self, other: &Self) -> bool {
        self.alg.fingerprint == other.alg.fingerprint && self.coords == other.coords
    }
}

impl<F: Scalar> DualCovector<F> {
    pub fn zero(alg: &Algebra) -> Self {
        DualCovector { alg: alg.clone(), coords: vec![F::zero(); alg.dim()] }
    }

    pub fn new(alg: &Algebra, coords: Vec<F>) -> Result<Self> {
        if coords.len() != alg.dim() {
            return Err(Error::Invalid(format!(
                "covector of length {} for an algebra of dimension {}",
                coords.len(),
                alg.dim()
            )));
        }
        Ok(DualCovector { alg: alg.clone(), coords })
    }

    /// Dual basis covector of basis element `i`.
    pub fn dual_basis(alg: &Algebra, i: usize) -> Self {
        let mut l = Self::zero(alg);
        l.coords[i] = F::one();
        l
    }

    pub fn pair(&self, x: &LieVector<F>) -> Result<F> {
        check_same(&self.alg, &x.alg)?;
        Ok(crate::linalg::dot(&self.coords, &x.coords))
    }

    pub fn pair_coords(&self, x: &[F]) -> F {
        crate::linalg::dot(&self.coords, x)
    }

    /// `lambda_J = <lambda, X_J>` for any word `J`.
    pub fn eval_word(&self, text: &str) -> Result<F> {
        let x = self.alg.word_coords(text)?;
        Ok(self.pair_coords(&x.iter().map(F::from_rational).collect::<Vec<_>>()))
    }

    /// True when the restriction to layer `k` vanishes.
    pub fn vanishes_on_layer(&self, k: usize) -> bool {
        self.alg.layer_range(k).all(|i| self.coords[i].is_zero())
    }

    /// Errors unless the restriction to each listed layer vanishes.
    pub fn require_vanishing(&self, layers: &[usize]) -> Result<()> {
        for &k in layers {
            if k <= self.alg.step() && !self.vanishes_on_layer(k) {
                return Err(Error::Precondition(format!(
                    "covector has a nonzero component on layer {k}; zero the g{k}* part"
                )));
            }
        }
        Ok(())
    }

    pub fn scale(&self, c: &F) -> Self {
        DualCovector { alg: self.alg.clone(), coords: self.coords.iter().map(|a| a.clone() * c.clone()).collect() }
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|c| c.is_zero())
    }

    /// Euclidean norm of the coordinates, the quadratic norm used for normalisation.
    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|c| c.to_f64().powi(2)).sum::<f64>().sqrt()
    }

    pub fn to_word_map(&self) -> BTreeMap<String, String> {
        self.coords
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, c)| (self.alg.basis[i].text.clone(), c.to_text()))
            .collect()
    }

    pub fn to_f64(&self) -> DualCovector<f64> {
        DualCovector { alg: self.alg.clone(), coords: self.coords.iter().map(|c| c.to_f64()).collect() }
    }
}

impl DualCovector<BigRational> {
    /// Covector from prescribed values on basis words, `{word: "p/q"}`.
    /// Every key must be a basis word.
    pub fn from_word_map(alg: &Algebra, map: &BTreeMap<String, String>) -> Result<Self> {
        let mut l = Self::zero(alg);
        for (w, c) in map {
            let i = alg
                .index_of(w)
                .ok_or_else(|| Error::Invalid(format!("{w:?} is not a basis word")))?;
            l.coords[i] = parse_rational(c)?;
        }
        Ok(l)
    }

    /// Covector determined by prescribed values `lambda_J` on arbitrary words.
    /// Unconstrained directions are set to zero; inconsistent data is an error.
    pub fn from_word_values(alg: &Algebra, values: &[(&str, BigRational)]) -> Result<Self> {
        use crate::linalg::{solve, Mat};
        let rows: Vec<Vec<BigRational>> = values
            .iter()
            .map(|(w, _)| alg.word_coords(w))
            .collect::<Result<_>>()?;
        let rhs: Vec<BigRational> = values.iter().map(|(_, c)| c.clone()).collect();
        if rows.is_empty() {
            return Ok(Self::zero(alg));
        }
        let a = Mat::from_rows(&rows);
        let x = solve(&a, &rhs, 0.0).ok_or_else(|| {
            Error::Invalid("prescribed word values are inconsistent with the bracket relations".into())
        })?;
        Ok(DualCovector { alg: alg.clone(), coords: x })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat_int;

    #[test]
    fn parse_and_print() {
        let t = parse_word("(12)(112)", Some(2)).unwrap();
        let want = Tree::node(
            Tree::node(Tree::Leaf(1), Tree::Leaf(2)),
            Tree::node(Tree::Leaf(1), Tree::node(Tree::Leaf(1), Tree::Leaf(2))),
        );
        assert_eq!(t, want);
        assert_eq!(parse_word(&t.to_text(), Some(2)).unwrap(), t);
        assert_eq!(parse_word("12", None).unwrap(), Tree::node(Tree::Leaf(1), Tree::Leaf(2)));
        assert!(parse_word("(12", Some(2)).is_err());
        assert!(parse_word("12)", Some(2)).is_err());
        assert!(parse_word("13", Some(2)).is_err());
        assert!(parse_word("", Some(2)).is_err());
    }

    #[test]
    fn lyndon_generation_small() {
        let w: Vec<String> = lyndon_words(2, 4)
            .iter()
            .map(|w| w.iter().map(|c| char::from(b'0' + c)).collect())
            .collect();
        assert_eq!(w, vec!["1112", "1122", "1222"]);
        assert_eq!(standard_bracketing(&[1, 2, 2]).to_text(), "(12)2");
        assert_eq!(standard_bracketing(&[1, 1, 2]).to_text(), "112");
    }

    #[test]
    fn free_23_basis() {
        let g = build_free_algebra(2, 3).unwrap();
        assert_eq!(g.layer_dims(), vec![2, 1, 2]);
        let texts: Vec<_> = g.basis().iter().map(|w| w.text.clone()).collect();
        assert_eq!(texts, vec!["1", "2", "12", "112", "(12)2"]);
        let x1 = LieVector::<BigRational>::generator(&g, 1);
        let x2 = LieVector::<BigRational>::generator(&g, 2);
        let x112 = x1.bracket(&x1.bracket(&x2).unwrap()).unwrap();
        assert_eq!(x112, LieVector::basis(&g, 3));
        assert!(x1.bracket(&x1).unwrap().is_zero());
        let x212 = LieVector::<BigRational>::from_word(&g, "212").unwrap();
        assert_eq!(x212, LieVector::basis(&g, 4).neg());
    }

    #[test]
    fn antisymmetric_word_in_free_22() {
        let g = build_free_algebra(2, 2).unwrap();
        let x21 = LieVector::<BigRational>::from_word(&g, "21").unwrap();
        let x12 = LieVector::<BigRational>::from_word(&g, "12").unwrap();
        assert_eq!(x21, x12.neg());
    }

    #[test]
    fn capacity_error() {
        let err = build_free_algebra(4, 4).unwrap_err();
        assert!(matches!(err, Error::Capacity(_)));
        assert!(build_free_algebra_with(4, 4, AlgebraOptions { max_dim: 100 }).is_ok());
    }

    #[test]
    fn spec_round_trip_and_rejection() {
        let g = build_free_algebra(2, 4).unwrap();
        let spec = g.to_spec();
        let h = algebra_from_spec(&spec, AlgebraOptions::default()).unwrap();
        assert_eq!(g.exact_table(), h.exact_table());
        let mut bad = spec.clone();
        let e = bad
            .structure
            .iter_mut()
            .find(|e| e.i == BasisRef::Word("1".into()) && e.j == BasisRef::Word("(12)2".into()))
            .unwrap();
        e.out.values_mut().for_each(|c| *c = "5".into());
        let err = algebra_from_spec(&bad, AlgebraOptions::default()).unwrap_err();
        assert!(err.to_string().contains("Jacobi"), "{err}");
        let mut bad = spec.clone();
        let mut dup = bad.structure[0].clone();
        std::mem::swap(&mut dup.i, &mut dup.j);
        bad.structure.push(dup);
        let err = algebra_from_spec(&bad, AlgebraOptions::default()).unwrap_err();
        assert!(err.to_string().contains("antisymmetry"), "{err}");
    }

    #[test]
    fn covector_word_values() {
        let g = build_free_algebra(2, 4).unwrap();
        let l = DualCovector::from_word_values(&g, &[("2112", rat_int(3)), ("1112", rat_int(1))]).unwrap();
        assert_eq!(l.eval_word("1212").unwrap(), rat_int(3));
        assert!(DualCovector::from_word_values(&g, &[("2112", rat_int(3)), ("1212", rat_int(1))]).is_err());
    }
}
