//! Successive minima against exhaustive enumeration, plus invariance
//! properties of the minima and the dual.

use dioph::lattice::minima::{minkowski_bounds, minkowski_ratio};
use dioph::lattice::{delta1, delta_last, dual, successive_minima, ExactMatrix, Matrix};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use proptest::prelude::*;

fn to_matrix(rows: &[Vec<i64>]) -> Matrix {
    ExactMatrix::from_i64_rows(rows).unwrap().to_f64()
}

fn det_i64(rows: &[Vec<i64>]) -> i64 {
    let m = ExactMatrix::from_i64_rows(rows).unwrap();
    m.det().to_integer().try_into().unwrap()
}

/// Rank of integer vectors by fraction-free elimination.
fn rank(vectors: &[Vec<i128>]) -> usize {
    let mut rows: Vec<Vec<i128>> = vectors.to_vec();
    let cols = rows.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows.len()).find(|&i| rows[i][c] != 0) else { continue };
        rows.swap(r, p);
        for i in r + 1..rows.len() {
            let (a, b) = (rows[r][c], rows[i][c]);
            for j in 0..cols {
                rows[i][j] = rows[i][j] * a - rows[r][j] * b;
            }
            let g = rows[i].iter().fold(0i128, |g, &v| num_integer::gcd(g, v));
            if g > 1 {
                rows[i].iter_mut().for_each(|v| *v /= g);
            }
        }
        r += 1;
    }
    r
}

/// Greedy over all lattice vectors up to the longest basis column, sorted by
/// length; returns squared minima.
fn brute_minima(rows: &[Vec<i64>]) -> Option<Vec<i128>> {
    let k = rows.len();
    let col = |j: usize| (0..k).map(|i| rows[i][j]).collect::<Vec<_>>();
    let r2: i128 = (0..k).map(|j| col(j).iter().map(|&v| (v * v) as i128).sum()).max()?;
    let inv = ExactMatrix::from_i64_rows(rows).ok()?.inverse().ok()?.to_f64();
    let bounds: Vec<i64> = (0..k)
        .map(|i| {
            let row_norm = (0..k).map(|j| inv[(i, j)].powi(2)).sum::<f64>().sqrt();
            (row_norm * (r2 as f64).sqrt()).floor() as i64 + 1
        })
        .collect();
    let total: f64 = bounds.iter().map(|&b| (2 * b + 1) as f64).product();
    if total > 2e6 {
        return None;
    }
    let mut vecs: Vec<(i128, Vec<i128>)> = Vec::new();
    let mut c: Vec<i64> = bounds.iter().map(|b| -b).collect();
    loop {
        if c.iter().any(|&x| x != 0) {
            let v: Vec<i128> = (0..k).map(|i| (0..k).map(|j| (rows[i][j] * c[j]) as i128).sum()).collect();
            let n2: i128 = v.iter().map(|x| x * x).sum();
            if n2 <= r2 {
                vecs.push((n2, v));
            }
        }
        let mut i = k;
        loop {
            if i == 0 {
                vecs.sort();
                let mut chosen: Vec<Vec<i128>> = Vec::new();
                let mut minima = Vec::new();
                for (n2, v) in vecs {
                    let mut trial = chosen.clone();
                    trial.push(v);
                    if rank(&trial) > chosen.len() {
                        chosen = trial;
                        minima.push(n2);
                        if minima.len() == k {
                            break;
                        }
                    }
                }
                return Some(minima);
            }
            i -= 1;
            if c[i] < bounds[i] {
                c[i] += 1;
                for x in c.iter_mut().skip(i + 1) {
                    *x = 0;
                }
                for (x, b) in c.iter_mut().zip(&bounds).skip(i + 1) {
                    *x = -b;
                }
                break;
            }
        }
    }
}

fn basis_strategy(k: usize) -> impl Strategy<Value = Vec<Vec<i64>>> {
    prop::collection::vec(prop::collection::vec(-6i64..=6, k), k).prop_filter("nonsingular", |rows| det_i64(rows) != 0)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn minima_match_enumeration(rows in prop_oneof![basis_strategy(2), basis_strategy(3)]) {
        if let Some(want) = brute_minima(&rows) {
            let got = successive_minima(&to_matrix(&rows)).unwrap();
            prop_assert_eq!(got.values.len(), want.len());
            for (g, w) in got.values.iter().zip(&want) {
                prop_assert!(close(*g, (*w as f64).sqrt()), "{:?} vs {:?}", got.values, want);
            }
        }
    }

    #[test]
    fn minima_are_basis_invariant(rows in basis_strategy(3), a in -3i64..=3, b in -3i64..=3) {
        // right multiplication by a unimodular matrix keeps the lattice
        let u = vec![vec![1, a, 0], vec![0, 1, b], vec![0, 0, 1]];
        let g = to_matrix(&rows);
        let gu = g.mul(&to_matrix(&u));
        let m1 = successive_minima(&g).unwrap();
        let m2 = successive_minima(&gu).unwrap();
        for (x, y) in m1.values.iter().zip(&m2.values) {
            prop_assert!(close(*x, *y));
        }
    }

    #[test]
    fn minima_scale_linearly(rows in basis_strategy(3), s in 1u32..8) {
        let g = to_matrix(&rows);
        let c = s as f64 / 4.0;
        let m1 = successive_minima(&g).unwrap();
        let m2 = successive_minima(&g.scale(&c)).unwrap();
        for (x, y) in m1.values.iter().zip(&m2.values) {
            prop_assert!(close(c * x, *y));
        }
    }

    #[test]
    fn minkowski_and_transference_hold(rows in prop_oneof![basis_strategy(3), basis_strategy(4)]) {
        let g = to_matrix(&rows);
        let k = rows.len();
        let minima = successive_minima(&g).unwrap();
        let (lo, hi) = minkowski_bounds(k);
        let r = minkowski_ratio(&g, &minima);
        prop_assert!(r >= lo * (1.0 - 1e-9) && r <= hi * (1.0 + 1e-9));
        let p = delta1(&g).unwrap() * delta_last(&dual(&g).unwrap()).unwrap();
        prop_assert!(p >= 1.0 - 1e-9 && p <= k as f64 * (1.0 + 1e-9));
    }

    #[test]
    fn exact_dual_is_an_involution(rows in basis_strategy(3), den in 1i64..9) {
        let m = ExactMatrix::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&v| BigRational::new(BigInt::from(v), BigInt::from(den))).collect())
                .collect(),
        )
        .unwrap();
        prop_assume!(!m.det().is_zero());
        prop_assert_eq!(dual(&dual(&m).unwrap()).unwrap(), m);
    }
}

#[test]
fn skewed_basis_matches_enumeration() {
    let rows = vec![vec![2, 1, 0], vec![0, 3, 1], vec![1, 0, 4]];
    let want = brute_minima(&rows).expect("small enumeration");
    let got = successive_minima(&to_matrix(&rows)).unwrap();
    for (g, w) in got.values.iter().zip(&want) {
        assert!(close(*g, (*w as f64).sqrt()));
    }
}

#[test]
fn integer_lattice_minima_are_one() {
    let m = successive_minima(&Matrix::identity(5)).unwrap();
    assert!(m.values.iter().all(|v| close(*v, 1.0)));
}

#[test]
fn hexagonal_lattice_has_equal_minima() {
    let g = Matrix::from_f64_rows(&[&[1.0, 0.5], &[0.0, 3f64.sqrt() / 2.0]]).unwrap();
    let m = successive_minima(&g).unwrap();
    assert!(close(m.values[0], 1.0) && close(m.values[1], 1.0));
}
