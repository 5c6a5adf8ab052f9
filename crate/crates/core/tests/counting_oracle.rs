//! Exact rational brute force against the fast scan for the near-manifold set.

mod common;

use common::{exact, int, oracle, q_range, random_instance};
use dioph::counting::{count_n, enumerate_n, q_block, InhomShift, ScanSpec, DEFAULT_BUDGET};
use dioph::{veronese, Ball};
use num_traits::Signed;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn unit_interval_at_ten_has_48_points() {
    let v = veronese(2).unwrap();
    let ball = Ball::from_bounds(0.0, 1.0, 1).unwrap();
    let (lo, hi) = q_range(10);
    let want = oracle(&v, &[0.0, 0.0], &ball, 0.4, lo, hi);
    assert_eq!(want.len(), 48);
    let got = enumerate_n(&v, &InhomShift::zero(2), &ball, 0.4, 10f64.ln(), DEFAULT_BUDGET).unwrap();
    assert_eq!(got, want);
}

#[test]
fn fifty_random_instances_match_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for i in 0..50 {
        let inst = random_instance(&mut rng);
        let t = (inst.big_q as f64).ln();
        let theta = InhomShift::new(inst.theta.clone()).unwrap();
        assert_eq!(q_block(t), q_range(inst.big_q), "instance {i}");
        let spec = ScanSpec::near(&inst.map, &theta, &inst.ball, inst.eps, t).unwrap();
        assert!(spec.candidates() <= 100_000, "instance {i}: {} candidates", spec.candidates());
        let (lo, hi) = q_range(inst.big_q);
        let want = oracle(&inst.map, &inst.theta, &inst.ball, inst.eps, lo, hi);
        let got = enumerate_n(&inst.map, &theta, &inst.ball, inst.eps, t, DEFAULT_BUDGET).unwrap();
        assert_eq!(got, want, "instance {i}: {} q={} eps={}", inst.map.name(), inst.big_q, inst.eps);
        assert_eq!(
            count_n(&inst.map, &theta, &inst.ball, inst.eps, t, DEFAULT_BUDGET).unwrap(),
            want.len() as u64
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn count_is_monotone_in_eps(big_q in 3i64..120, e1 in 1u32..20, e2 in 1u32..20, th in 0u32..16) {
        let v = veronese(2).unwrap();
        let ball = Ball::from_bounds(0.0, 1.0, 1).unwrap();
        let theta = InhomShift::new(vec![th as f64 / 16.0, 0.25]).unwrap();
        let t = (big_q as f64).ln();
        let (a, b) = (e1.min(e2) as f64 / 32.0, e1.max(e2) as f64 / 32.0);
        let small = count_n(&v, &theta, &ball, a, t, DEFAULT_BUDGET).unwrap();
        let large = count_n(&v, &theta, &ball, b, t, DEFAULT_BUDGET).unwrap();
        prop_assert!(small <= large);
    }

    #[test]
    fn disjoint_halves_add_up(big_q in 3i64..150, e in 1u32..24) {
        let v = veronese(2).unwrap();
        let theta = InhomShift::new(vec![0.5, 0.75]).unwrap();
        let t = (big_q as f64).ln();
        let eps = e as f64 / 32.0;
        let whole = enumerate_n(&v, &theta, &Ball::from_bounds(0.0, 1.0, 1).unwrap(), eps, t, DEFAULT_BUDGET).unwrap();
        let left = enumerate_n(&v, &theta, &Ball::from_bounds(0.0, 0.5, 1).unwrap(), eps, t, DEFAULT_BUDGET).unwrap();
        let right = enumerate_n(&v, &theta, &Ball::from_bounds(0.5, 1.0, 1).unwrap(), eps, t, DEFAULT_BUDGET).unwrap();
        // points on x = 1/2 belong to both halves
        let shared = whole
            .iter()
            .filter(|w| 2 * w.p[0] + 1 == w.q)
            .count();
        prop_assert_eq!(left.len() + right.len(), whole.len() + shared);
    }

    #[test]
    fn witnesses_satisfy_the_defining_inequalities(big_q in 3i64..200, e in 1u32..24, th0 in 0u32..32, th1 in 0u32..32) {
        let v = veronese(2).unwrap();
        let theta = [th0 as f64 / 32.0, th1 as f64 / 32.0];
        let shift = InhomShift::new(theta.to_vec()).unwrap();
        let eps = e as f64 / 32.0;
        let t = (big_q as f64).ln();
        for w in enumerate_n(&v, &shift, &Ball::from_bounds(0.0, 1.0, 1).unwrap(), eps, t, DEFAULT_BUDGET).unwrap() {
            let x = (int(w.p[0]) + exact(theta[0])) / int(w.q);
            prop_assert!(x >= int(0) && x <= int(1));
            let y = int(w.q) * &x * &x - exact(theta[1]) - int(w.p[1]);
            prop_assert!(y.abs() <= exact(eps));
        }
    }
}
