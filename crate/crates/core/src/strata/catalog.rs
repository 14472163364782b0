//! Built-in singular controls with known covectors, and the product-structure
//! check for rank-3 step-3 quotients with a one-dimensional second layer.

use num_rational::BigRational;
use serde::Serialize;

use crate::chen_flow::PolyControl;
use crate::error::{Error, Result};
use crate::free_lie::{build_free_algebra, Algebra, DualCovector};
use crate::linalg::{self, Mat};
use crate::scalar::{rat, rat_int, Scalar};
use crate::singularity::{image_of_differential, kernel_residual, DEFAULT_GRID};

use super::plan::{concatenate, lift, ConcatenationPlan, Leg};
use super::system::{classify, normalize, system_of, CaseKind, CaseTag, StratumLabel};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExpectedReport {
    /// Upper bound on `rank R_u = rank Im - rank g1`.
    pub max_r_rank: Option<usize>,
    /// Expected `(case, Lambda, Xi)`.
    pub stratum: Option<(CaseTag, usize, Option<usize>)>,
}

#[derive(Clone, Debug)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub algebra: Algebra,
    pub control: PolyControl<BigRational>,
    pub lambda: DualCovector<BigRational>,
    pub expected: ExpectedReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct CatalogReport {
    pub name: String,
    pub dim: usize,
    pub image_rank: usize,
    pub r_rank: usize,
    pub lambda_annihilates: bool,
    pub residual_exact_zero: bool,
    pub stratum: Option<StratumLabel>,
    pub pass: bool,
}

fn velocity_pieces(v: &[[BigRational; 3]], duration: BigRational) -> Result<PolyControl<BigRational>> {
    let segs: Vec<(Vec<BigRational>, BigRational)> = v.iter().map(|x| (x.to_vec(), duration.clone())).collect();
    PolyControl::piecewise_constant(&segs)
}

/// Piecewise-linear interpolation of `w` at `times`, as a control.
fn interpolating_control(times: &[BigRational], points: &[Vec<BigRational>]) -> Result<PolyControl<BigRational>> {
    let segs: Vec<(Vec<BigRational>, BigRational)> = times
        .windows(2)
        .zip(points.windows(2))
        .map(|(t, p)| {
            let dt = t[1].clone() - t[0].clone();
            (p[1].iter().zip(&p[0]).map(|(a, b)| (a - b) / &dt).collect(), dt)
        })
        .collect();
    PolyControl::piecewise_constant(&segs)
}

fn dyadic(x: f64, bits: u32) -> BigRational {
    let scale = (1u64 << bits) as f64;
    rat((x * scale).round() as i64, 1i64 << bits)
}

fn coordinate_loop() -> Result<CatalogEntry> {
    let alg = build_free_algebra(3, 3)?;
    let (o, z, m) = (rat_int(1), rat_int(0), rat_int(-1));
    let control = velocity_pieces(
        &[
            [o.clone(), z.clone(), z.clone()],
            [m.clone(), z.clone(), z.clone()],
            [z.clone(), o.clone(), z.clone()],
            [z.clone(), m.clone(), z.clone()],
            [z.clone(), z.clone(), o.clone()],
            [z.clone(), z.clone(), m.clone()],
        ],
        rat(1, 6),
    )?;
    let mut values = vec![("123", o), ("231", m)];
    for w in ["112", "113", "221", "223", "331", "332"] {
        values.push((w, z.clone()));
    }
    let lambda = DualCovector::from_word_values(&alg, &values)?;
    Ok(CatalogEntry {
        name: "coordinate-loop",
        algebra: alg,
        control,
        lambda,
        expected: ExpectedReport { max_r_rank: Some(9), stratum: Some((CaseTag::new(CaseKind::R3S3, true), 5, None)) },
    })
}

fn dual_223(alg: &Algebra) -> Result<DualCovector<BigRational>> {
    DualCovector::from_word_values(alg, &[("223", rat_int(1))])
}

fn lipschitz_plane() -> Result<CatalogEntry> {
    let alg = build_free_algebra(3, 3)?;
    let z = rat_int(0);
    let control = velocity_pieces(
        &[
            [rat_int(1), z.clone(), rat_int(2)],
            [rat_int(-3), z.clone(), rat_int(1)],
            [rat_int(2), z.clone(), rat_int(-1)],
            [rat(1, 2), z.clone(), rat(-3, 2)],
            [rat(-1, 3), z.clone(), rat(5, 2)],
        ],
        rat(1, 5),
    )?;
    let lambda = dual_223(&alg)?;
    Ok(CatalogEntry {
        name: "lipschitz-plane",
        algebra: alg,
        control,
        lambda,
        expected: ExpectedReport { max_r_rank: None, stratum: Some((CaseTag::new(CaseKind::R3S3, true), 8, Some(22))) },
    })
}

/// `w(t) = t (cos s, 0, sin s)`, `s = log(1 - log t)`, sampled at `k / n`.
pub fn spiral_samples(n: usize) -> (Vec<BigRational>, Vec<Vec<BigRational>>) {
    let times: Vec<BigRational> = (0..=n).map(|k| rat(k as i64, n as i64)).collect();
    let points = (0..=n)
        .map(|k| {
            if k == 0 {
                return vec![rat_int(0); 3];
            }
            let t = k as f64 / n as f64;
            let s = (1.0 - t.ln()).ln();
            vec![dyadic(t * s.cos(), 20), rat_int(0), dyadic(t * s.sin(), 20)]
        })
        .collect();
    (times, points)
}

fn spiral_plane() -> Result<CatalogEntry> {
    let alg = build_free_algebra(3, 3)?;
    let (times, points) = spiral_samples(48);
    let control = interpolating_control(&times, &points)?;
    let lambda = dual_223(&alg)?;
    Ok(CatalogEntry {
        name: "spiral-plane",
        algebra: alg,
        control,
        lambda,
        expected: ExpectedReport { max_r_rank: None, stratum: Some((CaseTag::new(CaseKind::R3S3, true), 8, Some(22))) },
    })
}

fn gole_karidi() -> Result<CatalogEntry> {
    let alg = build_free_algebra(2, 4)?;
    let lambda = DualCovector::from_word_values(&alg, &[("2212", rat_int(1)), ("112", rat_int(-1))])?;
    let case = CaseTag::new(CaseKind::R2S4, true);
    let ns = normalize(&system_of(&lambda, case)?, 0.0)?;
    let form = ns.exact.ok_or_else(|| Error::Classification("expected an exact frame".into()))?;
    let plan = ConcatenationPlan::new(vec![Leg::Flow { z0: vec![rat_int(0); 2], t0: rat_int(0), t1: rat_int(1) }]);
    let path = concatenate(&ns.label, &form, &plan)?;
    let control = lift(&alg, &path, &form)?.control;
    Ok(CatalogEntry {
        name: "gole-karidi",
        algebra: alg,
        control,
        lambda,
        expected: ExpectedReport { max_r_rank: None, stratum: Some((case, 3, Some(7))) },
    })
}

pub fn catalog_examples() -> Result<Vec<CatalogEntry>> {
    Ok(vec![coordinate_loop()?, lipschitz_plane()?, spiral_plane()?, gole_karidi()?])
}

/// Recomputes the certificate of an entry and compares with its expectation.
pub fn verify_entry(e: &CatalogEntry) -> Result<CatalogReport> {
    let alg = &e.algebra;
    let img = image_of_differential(alg, &e.control)?;
    let lambda_annihilates = img.basis.iter().all(|v| Scalar::is_zero(&e.lambda.pair_coords(v)));
    let residual_exact_zero = kernel_residual(&e.control, &e.lambda, DEFAULT_GRID)?.exact_zero;
    let r_rank = img.rank - alg.rank();
    let stratum = match CaseTag::of_algebra(alg) {
        Ok(case) => Some(classify(&e.lambda, case, 0.0)?),
        Err(_) => None,
    };
    let rank_ok = e.expected.max_r_rank.is_none_or(|m| r_rank <= m);
    let stratum_ok = match (&e.expected.stratum, &stratum) {
        (None, _) => true,
        (Some((case, l, xi)), Some(got)) => got.case == *case && got.lambda == *l && xi.is_none_or(|x| got.xi_all.contains(&x)),
        (Some(_), None) => false,
    };
    Ok(CatalogReport {
        name: e.name.to_string(),
        dim: alg.dim(),
        image_rank: img.rank,
        r_rank,
        lambda_annihilates,
        residual_exact_zero,
        stratum,
        pass: lambda_annihilates && residual_exact_zero && rank_ok && stratum_ok,
    })
}

// ---------------------------------------------------------------------------
// dim g2 = 1
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ProductKind {
    /// free (2,3) factor
    Free23,
    Engel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductStructure {
    pub kind: ProductKind,
    /// Horizontal direction commuting with everything.
    pub central: Vec<BigRational>,
    /// Horizontal directions spanning the abnormal subgroup, central one last.
    pub abnormal_span: Vec<Vec<BigRational>>,
    pub group_dim: usize,
    pub codim: usize,
}

pub const PRODUCT_CODIM: usize = 3;

/// Detects the splitting of a rank-3 step-3 algebra with `dim g2 = 1` into a
/// rank-2 factor times a line, and the abnormal subgroup it implies.
pub fn product_structure(alg: &Algebra) -> Result<ProductStructure> {
    let dims = alg.layer_dims();
    if alg.rank() != 3 || alg.step() != 3 || dims[1] != 1 {
        return Err(Error::Precondition(format!("needs rank 3, step 3 and dim g2 = 1, got layers {dims:?}")));
    }
    let dim = alg.dim();
    let y = alg.layer_range(2).start;
    let gen = |i: usize| -> Vec<BigRational> { (0..dim).map(|k| if k == i { <BigRational as Scalar>::one() } else { <BigRational as Scalar>::zero() }).collect() };
    let omega = |i: usize, j: usize| alg.bracket_coords(&gen(i), &gen(j))[y].clone();
    let central = vec![omega(1, 2), omega(2, 0), omega(0, 1)];
    if central.iter().all(Scalar::is_zero) {
        return Err(Error::InvalidAlgebra("second layer is not spanned by brackets".into()));
    }
    // two coordinate generators completing the central direction
    let (a, b) = [(0, 1), (0, 2), (1, 2)]
        .into_iter()
        .find(|&(a, b)| {
            let rows = vec![gen(a)[..3].to_vec(), gen(b)[..3].to_vec(), central.clone()];
            linalg::rank(&Mat::from_rows(&rows), 0.0) == 3
        })
        .expect("a nonzero vector has a complement");
    let ya = alg.bracket_coords(&gen(a), &gen(y));
    let yb = alg.bracket_coords(&gen(b), &gen(y));
    let third = Mat::from_cols(&[ya, yb]);
    let (kind, mut span) = match linalg::rank(&third, 0.0) {
        2 => (ProductKind::Free23, vec![gen(a)[..3].to_vec(), gen(b)[..3].to_vec()]),
        1 => {
            let k = linalg::kernel(&third, 0.0);
            let c = &k[0];
            let v: Vec<BigRational> = (0..3).map(|i| c[0].clone() * gen(a)[i].clone() + c[1].clone() * gen(b)[i].clone()).collect();
            (ProductKind::Engel, vec![v])
        }
        _ => return Err(Error::InvalidAlgebra("third layer is not spanned by brackets".into())),
    };
    span.push(central.clone());
    let codim = dim - span.len();
    if codim != PRODUCT_CODIM {
        return Err(Error::FixtureMismatch(format!("product structure gives codimension {codim}, expected {PRODUCT_CODIM}")));
    }
    Ok(ProductStructure { kind, central, abnormal_span: span, group_dim: dim, codim })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::free_lie::{algebra_from_spec, AlgebraOptions, AlgebraSpecFile, BasisRef, StructureEntry};
    use std::collections::BTreeMap;

    fn entry(i: &str, j: &str, out: &[(&str, &str)]) -> StructureEntry {
        StructureEntry {
            i: BasisRef::Word(i.into()),
            j: BasisRef::Word(j.into()),
            out: out.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect::<BTreeMap<_, _>>(),
        }
    }

    #[test]
    fn catalog_certifies() {
        for e in catalog_examples().unwrap() {
            let r = verify_entry(&e).unwrap();
            assert!(r.pass, "{} failed: {r:?}", e.name);
        }
    }

    #[test]
    fn free_factor_times_line() {
        // [1,2] = Y, 3 central
        let spec = AlgebraSpecFile {
            rank: 3,
            step: 3,
            layers: vec![vec!["1".into(), "2".into(), "3".into()], vec!["12".into()], vec!["112".into(), "212".into()]],
            structure: vec![entry("1", "2", &[("12", "1")]), entry("1", "12", &[("112", "1")]), entry("2", "12", &[("212", "1")])],
            is_free: false,
        };
        let alg = algebra_from_spec(&spec, AlgebraOptions::default()).unwrap();
        let p = product_structure(&alg).unwrap();
        assert_eq!(p.kind, ProductKind::Free23);
        assert_eq!(p.central, vec![rat_int(0), rat_int(0), rat_int(1)]);
        assert_eq!(p.codim, 3);
    }

    #[test]
    fn engel_factor_times_line() {
        // [2,3] = Y, [2,Y] spans g3, [3,Y] = 0, 1 central
        let spec = AlgebraSpecFile {
            rank: 3,
            step: 3,
            layers: vec![vec!["1".into(), "2".into(), "3".into()], vec!["23".into()], vec!["223".into()]],
            structure: vec![entry("2", "3", &[("23", "1")]), entry("2", "23", &[("223", "1")])],
            is_free: false,
        };
        let alg = algebra_from_spec(&spec, AlgebraOptions::default()).unwrap();
        let p = product_structure(&alg).unwrap();
        assert_eq!(p.kind, ProductKind::Engel);
        assert_eq!(p.central, vec![rat_int(1), rat_int(0), rat_int(0)]);
        assert_eq!(p.abnormal_span.len(), 2);
        assert_eq!(p.abnormal_span[0][0], rat_int(0));
        assert_eq!(p.abnormal_span[0][1], rat_int(0));
        assert_eq!(p.codim, 3);
    }
}
