//! Helpers shared by the integration tests: an exact rational brute force
//! for the near-manifold set and a random instance generator.
#![allow(dead_code)]

use dioph::counting::RationalWitness;
use dioph::{paraboloid, veronese, Ball, ManifoldMap};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

pub fn int(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Triple loop over q, p_d and p_m with rational arithmetic throughout.
pub fn oracle(map: &ManifoldMap, theta: &[f64], ball: &Ball, eps: f64, q_lo: i64, q_hi: i64) -> Vec<RationalWitness> {
    let (d, m) = (map.d(), map.m());
    let th: Vec<BigRational> = theta.iter().map(|&v| exact(v)).collect();
    let lo: Vec<BigRational> = (0..d).map(|i| exact(ball.lo(i))).collect();
    let hi: Vec<BigRational> = (0..d).map(|i| exact(ball.hi(i))).collect();
    let e = exact(eps);
    let mut out = Vec::new();
    for q in q_lo..=q_hi {
        let qr = int(q);
        let pd_box: Vec<(i64, i64)> = (0..d)
            .map(|i| {
                let a = (ball.lo(i) * q as f64).floor() as i64 - 2;
                let b = (ball.hi(i) * q as f64).ceil() as i64 + 2;
                (a, b)
            })
            .collect();
        let mut p_d: Vec<i64> = pd_box.iter().map(|b| b.0).collect();
        loop {
            let x: Vec<BigRational> = (0..d).map(|i| (int(p_d[i]) + &th[i]) / &qr).collect();
            if (0..d).all(|i| x[i] >= lo[i] && x[i] <= hi[i]) {
                let f = map.eval_f_exact(&x);
                let ys: Vec<BigRational> = (0..m).map(|j| &qr * &f[j] - &th[d + j]).collect();
                let pm_box: Vec<(i64, i64)> = ys
                    .iter()
                    .map(|y| {
                        let c = y.floor().to_integer().to_i64().unwrap();
                        (c - 3, c + 3)
                    })
                    .collect();
                let mut p_m: Vec<i64> = pm_box.iter().map(|b| b.0).collect();
                loop {
                    if (0..m).all(|j| (&ys[j] - int(p_m[j])).abs() <= e) {
                        let mut p = p_d.clone();
                        p.extend_from_slice(&p_m);
                        out.push(RationalWitness { q, p });
                    }
                    if !advance(&mut p_m, &pm_box) {
                        break;
                    }
                }
            }
            if !advance(&mut p_d, &pd_box) {
                break;
            }
        }
    }
    out.sort();
    out
}

fn advance(v: &mut [i64], bounds: &[(i64, i64)]) -> bool {
    for i in (0..v.len()).rev() {
        if v[i] < bounds[i].1 {
            v[i] += 1;
            for k in i + 1..v.len() {
                v[k] = bounds[k].0;
            }
            return true;
        }
    }
    false
}

/// Denominator range for e^t = big_q, computed without the library helper.
pub fn q_range(big_q: i64) -> (i64, i64) {
    (((big_q as f64) / std::f64::consts::E).ceil() as i64, big_q)
}

pub struct Instance {
    pub map: ManifoldMap,
    pub theta: Vec<f64>,
    pub ball: Ball,
    pub eps: f64,
    pub big_q: i64,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let which = rng.random_range(0..3);
    let (map, big_q) = match which {
        0 => (veronese(2).unwrap(), rng.random_range(3..=250)),
        1 => (veronese(3).unwrap(), rng.random_range(3..=200)),
        _ => (paraboloid(), rng.random_range(3..=30)),
    };
    let d = map.d();
    let dom = map.domain().clone();
    // dyadic centers and radii keep every boundary comparison exact
    let radius = rng.random_range(1..=16) as f64 / 32.0 * dom.radius.min(1.0);
    let center = (0..d)
        .map(|i| {
            let span = ((dom.hi(i) - radius) - (dom.lo(i) + radius)) * 64.0;
            dom.lo(i) + radius + rng.random_range(0..=span as i64) as f64 / 64.0
        })
        .collect();
    Instance {
        theta: (0..map.n()).map(|_| rng.random_range(0..32) as f64 / 32.0).collect(),
        ball: Ball::new(center, radius).unwrap(),
        eps: rng.random_range(1..=24) as f64 / 32.0,
        big_q,
        map,
    }
}

