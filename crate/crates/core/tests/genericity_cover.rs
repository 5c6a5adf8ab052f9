//! Cover fractions against a per-cell scan, and the special/inclusion link.

use dioph::counting::{enumerate_n, InhomShift, DEFAULT_BUDGET};
use dioph::genericity::{
    check_inclusion, classify, delta_cover_fraction, dyadic_grid, special_cover, Verdict,
};
use dioph::sampling::grid_points;
use dioph::{paraboloid, veronese, Ball, ManifoldMap};
use proptest::prelude::*;

/// Fraction of grid-cell centers within sup distance ρ of some witness point.
fn naive_cover(map: &ManifoldMap, theta: &[f64], ball: &Ball, eps: f64, t: f64, rho: f64, per_axis: u64) -> f64 {
    let shift = InhomShift::new(theta.to_vec()).unwrap();
    let d = map.d();
    let pts: Vec<Vec<f64>> = enumerate_n(map, &shift, ball, eps, t, DEFAULT_BUDGET)
        .unwrap()
        .iter()
        .map(|w| (0..d).map(|i| (w.p[i] as f64 + theta[i]) / w.q as f64).collect())
        .collect();
    let grid = grid_points(ball, per_axis);
    let hit = grid
        .iter()
        .filter(|c| pts.iter().any(|p| p.iter().zip(c.iter()).all(|(a, b)| (a - b).abs() <= rho)))
        .count();
    hit as f64 / grid.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn curve_cover_matches_cell_scan(t in 2.0f64..4.5, e in 1u32..16, r in 1u32..40, th in 0u32..8) {
        let v = veronese(2).unwrap();
        let ball = Ball::new(vec![0.5], 0.4).unwrap();
        let theta = [th as f64 / 8.0, 0.375];
        let (eps, rho) = (e as f64 / 32.0, r as f64 / 997.0);
        let got = delta_cover_fraction(&v, &InhomShift::new(theta.to_vec()).unwrap(), &ball, eps, t, rho, 4096, DEFAULT_BUDGET).unwrap();
        let want = naive_cover(&v, &theta, &ball, eps, t, rho, 4096);
        prop_assert_eq!(got.fraction, want);
    }

    #[test]
    fn surface_cover_matches_cell_scan(t in 1.5f64..2.6, e in 2u32..16, r in 1u32..40) {
        let p = paraboloid();
        let ball = Ball::new(vec![0.25, 0.25], 0.25).unwrap();
        let theta = [0.0, 0.0, 0.0];
        let (eps, rho) = (e as f64 / 32.0, r as f64 / 797.0);
        let got = delta_cover_fraction(&p, &InhomShift::zero(3), &ball, eps, t, rho, 64, DEFAULT_BUDGET).unwrap();
        let want = naive_cover(&p, &theta, &ball, eps, t, rho, 64);
        prop_assert_eq!(got.fraction, want);
    }

    #[test]
    fn cover_grows_with_radius(t in 3.0f64..5.0, r1 in 1u32..50, r2 in 1u32..50) {
        let v = veronese(2).unwrap();
        let ball = Ball::new(vec![0.5], 0.4).unwrap();
        let sh = InhomShift::new(vec![0.3, 0.7]).unwrap();
        let (a, b) = (r1.min(r2) as f64 / 1000.0, r1.max(r2) as f64 / 1000.0);
        let small = delta_cover_fraction(&v, &sh, &ball, 0.1, t, a, 2048, DEFAULT_BUDGET).unwrap();
        let large = delta_cover_fraction(&v, &sh, &ball, 0.1, t, b, 2048, DEFAULT_BUDGET).unwrap();
        prop_assert!(small.fraction <= large.fraction);
    }
}

#[test]
fn special_points_have_a_finite_inclusion_constant() {
    let v = veronese(2).unwrap();
    let ball = Ball::new(vec![0.5], 0.4).unwrap();
    let (eps, t) = (0.1, 5.0);
    let cover = special_cover(&v, &ball, eps, t, 1024, DEFAULT_BUDGET).unwrap();
    assert!(!cover.is_empty());
    for x in cover.centers() {
        assert_eq!(classify(&v, &x, eps, t).unwrap().verdict, Verdict::SpecialRaw);
        assert!(check_inclusion(&v, &x, eps, t, &dyadic_grid()).unwrap().is_some(), "{x:?}");
    }
}

#[test]
fn coarse_grid_is_rejected() {
    let v = veronese(2).unwrap();
    let ball = Ball::new(vec![0.5], 0.4).unwrap();
    assert!(special_cover(&v, &ball, 0.1, 5.0, 4, DEFAULT_BUDGET).is_err());
}
