#![allow(dead_code)]

pub mod oracles;

use carnot_singular::free_lie::{build_free_algebra, Algebra, DualCovector};
use carnot_singular::linalg::{inverse, Mat};
use carnot_singular::scalar::{rat, rat_int};
use num_rational::BigRational;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Q = BigRational;

pub fn q(p: i64, d: i64) -> Q {
    rat(p, d)
}

pub fn small_rational(rng: &mut ChaCha8Rng, max: i64) -> Q {
    let d = rng.gen_range(1..=3);
    rat(rng.gen_range(-max * d..=max * d), d)
}

pub fn nonzero_rational(rng: &mut ChaCha8Rng, max: i64) -> Q {
    loop {
        let x = small_rational(rng, max);
        if x != rat_int(0) {
            return x;
        }
    }
}

pub fn positive_rational(rng: &mut ChaCha8Rng, max: i64) -> Q {
    let d = rng.gen_range(1..=3);
    rat(rng.gen_range(1..=max * d), d)
}

/// Random invertible rational matrix with small entries.
pub fn invertible(rng: &mut ChaCha8Rng, n: usize) -> (Mat<Q>, Mat<Q>) {
    loop {
        let rows: Vec<Vec<Q>> = (0..n).map(|_| (0..n).map(|_| rat_int(rng.gen_range(-2..=2))).collect()).collect();
        let p = Mat::from_rows(&rows);
        if let Some(pi) = inverse(&p, 0.0) {
            return (p, pi);
        }
    }
}

fn mat(rows: &[&[Q]]) -> Mat<Q> {
    Mat::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
}

/// Normal form matrix of stratum `lambda`, with random parameters where the
/// stratum has them.
pub fn normal_matrix(rank: usize, lambda: usize, rng: &mut ChaCha8Rng) -> Mat<Q> {
    let (o, z, m) = (rat_int(1), rat_int(0), rat_int(-1));
    if rank == 2 {
        return match lambda {
            1 => mat(&[&[o.clone(), z.clone()], &[z.clone(), m]]),
            2 => mat(&[&[z.clone(), m], &[o, z.clone()]]),
            3 => mat(&[&[z.clone(), o], &[z.clone(), z.clone()]]),
            _ => Mat::zeros(2, 2),
        };
    }
    match lambda {
        1 => loop {
            let a = nonzero_rational(rng, 3);
            let b = nonzero_rational(rng, 3);
            let b = if (a.clone() * b.clone()) < z { -b } else { b };
            let c = -(a.clone() + b.clone());
            if a != b && a != c && b != c {
                return mat(&[&[a, z.clone(), z.clone()], &[z.clone(), b, z.clone()], &[z.clone(), z.clone(), c]]);
            }
        },
        2 => {
            let a = nonzero_rational(rng, 3);
            let c = rat_int(-2) * a.clone();
            mat(&[&[a.clone(), z.clone(), z.clone()], &[z.clone(), a, z.clone()], &[z.clone(), z.clone(), c]])
        }
        3 => {
            let a = nonzero_rational(rng, 2);
            mat(&[&[o.clone(), -a.clone(), z.clone()], &[a, o, z.clone()], &[z.clone(), z.clone(), rat_int(-2)]])
        }
        4 => mat(&[&[o.clone(), o.clone(), z.clone()], &[z.clone(), o, z.clone()], &[z.clone(), z.clone(), rat_int(-2)]]),
        5 => mat(&[&[o, z.clone(), z.clone()], &[z.clone(), m, z.clone()], &[z.clone(), z.clone(), z.clone()]]),
        6 => mat(&[&[z.clone(), m, z.clone()], &[o, z.clone(), z.clone()], &[z.clone(), z.clone(), z.clone()]]),
        7 => mat(&[&[z.clone(), o.clone(), z.clone()], &[z.clone(), z.clone(), o], &[z.clone(), z.clone(), z.clone()]]),
        8 => mat(&[&[z.clone(), o, z.clone()], &[z.clone(), z.clone(), z.clone()], &[z.clone(), z.clone(), z.clone()]]),
        _ => Mat::zeros(3, 3),
    }
}

/// Covector whose affine system is `(M, v)`, built from the
/// coordinate maps; the g1 part vanishes, and in rank 2 the g2 part too.
pub fn covector_from_system(alg: &Algebra, m: &Mat<Q>, v: &[Q]) -> DualCovector<Q> {
    let z = rat_int(0);
    let mut values: Vec<(String, Q)> = Vec::new();
    for g in 1..=alg.rank() {
        values.push((g.to_string(), z.clone()));
    }
    if alg.rank() == 2 {
        values.push(("12".into(), z.clone()));
        values.push(("212".into(), v[0].clone()));
        values.push(("112".into(), -v[1].clone()));
        if alg.step() >= 4 {
            values.push(("2112".into(), m[(0, 0)].clone()));
            values.push(("2212".into(), m[(0, 1)].clone()));
            values.push(("1112".into(), -m[(1, 0)].clone()));
        }
    } else {
        for (w, c) in ["23", "31", "12"].iter().zip(v) {
            values.push((w.to_string(), c.clone()));
        }
        let words = [["123", "223", "323"], ["131", "231", "331"], ["112", "212", "312"]];
        for i in 0..3 {
            for j in 0..3 {
                values.push((words[i][j].into(), m[(i, j)].clone()));
            }
        }
    }
    let refs: Vec<(&str, Q)> = values.iter().map(|(w, c)| (w.as_str(), c.clone())).collect();
    DualCovector::from_word_values(alg, &refs).expect("consistent word values")
}

/// Random `b` with each entry zero with probability one half.
pub fn sparse_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<Q> {
    (0..n).map(|_| if rng.gen_bool(0.5) { rat_int(0) } else { nonzero_rational(rng, 2) }).collect()
}

/// A covector in stratum `lambda` of free(2,4) (rank 2) built as
/// `M = mu P N P^-1`, `v = mu P b`.
pub fn r2s4_representative(rng: &mut ChaCha8Rng, lambda: usize) -> (Algebra, DualCovector<Q>) {
    let alg = build_free_algebra(2, 4).unwrap();
    let n = normal_matrix(2, lambda, rng);
    let (p, pi) = invertible(rng, 2);
    let mu = positive_rational(rng, 3);
    let mut b = sparse_vector(rng, 2);
    if lambda == 4 && b.iter().all(|x| *x == rat_int(0)) {
        b[rng.gen_range(0..2)] = nonzero_rational(rng, 2);
    }
    let m = p.mul(&n).mul(&pi).scale(&mu);
    let v: Vec<Q> = p.mul_vec(&b).into_iter().map(|x| x * mu.clone()).collect();
    (alg.clone(), covector_from_system(&alg, &m, &v))
}

/// A covector in stratum `lambda` of free(3,3).
pub fn r3s3_representative(rng: &mut ChaCha8Rng, lambda: usize) -> (Algebra, DualCovector<Q>) {
    let alg = build_free_algebra(3, 3).unwrap();
    let n = normal_matrix(3, lambda, rng);
    let (p, pi) = invertible(rng, 3);
    let mu = positive_rational(rng, 3);
    let mut b = sparse_vector(rng, 3);
    if lambda == 9 && b.iter().all(|x| *x == rat_int(0)) {
        b[rng.gen_range(0..3)] = nonzero_rational(rng, 2);
    }
    let m = p.mul(&n).mul(&pi).scale(&mu);
    let v: Vec<Q> = p.mul_vec(&b).into_iter().map(|x| x * mu.clone()).collect();
    (alg.clone(), covector_from_system(&alg, &m, &v))
}
