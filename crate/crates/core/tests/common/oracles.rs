//! Independent reference computations shared by the integration tests.

use std::collections::BTreeMap;

use carnot_singular::free_lie::{Algebra, Tree};
use carnot_singular::linalg::{rank, Mat};
use carnot_singular::scalar::{rat_int, Scalar};

use super::Q;

/// Every word of length `n` over `1..=r`.
pub fn all_words(r: usize, n: usize) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out.into_iter().flat_map(|w| (1..=r as u8).map(move |a| [w.clone(), vec![a]].concat())).collect();
    }
    out
}

/// Lyndon by definition: strictly smaller than each proper rotation.
pub fn is_lyndon(w: &[u8]) -> bool {
    (1..w.len()).all(|k| {
        let rot: Vec<u8> = w[k..].iter().chain(&w[..k]).cloned().collect();
        w < rot.as_slice()
    })
}

fn mobius(n: usize) -> i64 {
    let (mut n, mut m, mut p) = (n, 1i64, 2);
    while p * p <= n {
        if n % p == 0 {
            n /= p;
            if n % p == 0 {
                return 0;
            }
            m = -m;
        }
        p += 1;
    }
    if n > 1 {
        m = -m;
    }
    m
}

/// Necklace count `(1/n) sum_{d | n} mu(d) r^{n/d}`.
pub fn necklace_count(r: usize, n: usize) -> usize {
    let s: i64 = (1..=n).filter(|d| n.is_multiple_of(*d)).map(|d| mobius(d) * (r as i64).pow((n / d) as u32)).sum();
    (s / n as i64) as usize
}

/// Dimension of the span of all right-nested brackets of length `n`,
/// expanded in the free associative algebra.
pub fn tensor_span_dim(r: usize, n: usize) -> usize {
    let words = all_words(r, n);
    let index: BTreeMap<Vec<u8>, usize> = words.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect();
    let rows: Vec<Vec<Q>> = words
        .iter()
        .map(|w| {
            let mut row = vec![rat_int(0); words.len()];
            for (k, c) in Tree::right_nested(w).expand() {
                row[index[&k]] = c;
            }
            row
        })
        .collect();
    rank(&Mat::from_rows(&rows), 0.0)
}

/// Element of the truncated free associative algebra, keyed by word.
pub type Series = BTreeMap<Vec<u8>, Q>;

fn accumulate(out: &mut Series, w: Vec<u8>, c: Q) {
    let e = out.entry(w).or_insert_with(|| rat_int(0));
    *e = e.clone() + c;
}

pub fn series_mul(a: &Series, b: &Series, depth: usize) -> Series {
    let mut out = Series::new();
    for (u, x) in a {
        for (v, y) in b {
            if u.len() + v.len() <= depth {
                accumulate(&mut out, [u.clone(), v.clone()].concat(), x.clone() * y.clone());
            }
        }
    }
    out.retain(|_, c| !Scalar::is_zero(c));
    out
}

/// `exp(sum v_i e_i)`.
pub fn series_exp(v: &[Q], depth: usize) -> Series {
    let lin: Series = v.iter().enumerate().map(|(i, c)| (vec![i as u8 + 1], c.clone())).collect();
    let mut out = Series::from([(vec![], rat_int(1))]);
    let mut term = out.clone();
    for k in 1..=depth {
        term = series_mul(&term, &lin, depth).into_iter().map(|(w, c)| (w, c / rat_int(k as i64))).collect();
        for (w, c) in &term {
            accumulate(&mut out, w.clone(), c.clone());
        }
    }
    out.retain(|_, c| !Scalar::is_zero(c));
    out
}

/// `log(s)` for `s` with constant term one.
pub fn series_log(s: &Series, depth: usize) -> Series {
    let mut x = s.clone();
    x.remove(&vec![]);
    let mut out = Series::new();
    let mut pow = x.clone();
    for k in 1..=depth {
        let sign = if k % 2 == 1 { 1 } else { -1 };
        for (w, c) in &pow {
            accumulate(&mut out, w.clone(), c.clone() * rat_int(sign) / rat_int(k as i64));
        }
        pow = series_mul(&pow, &x, depth);
    }
    out.retain(|_, c| !Scalar::is_zero(c));
    out
}

/// Lie element with basis coordinates `v`, expanded in the free associative algebra.
pub fn expansion(g: &Algebra, v: &[Q]) -> Series {
    let mut out = Series::new();
    for (i, c) in v.iter().enumerate() {
        if Scalar::is_zero(c) {
            continue;
        }
        for (w, x) in g.basis()[i].tree.expand() {
            accumulate(&mut out, w, c.clone() * x);
        }
    }
    out.retain(|_, c| !Scalar::is_zero(c));
    out
}
