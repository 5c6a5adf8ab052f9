//! The unipotent and diagonal matrices attached to a Monge map.
//!
//! Row/column layout for size n+1 (0-indexed): rows 0..m carry the
//! components f_m, …, f_1 (reversed), rows m..n carry x_d, …, x_1 (reversed),
//! and row n is the homogenizing coordinate.

use num_rational::BigRational;
use num_traits::One;

use super::matrix::{Entry, ExactMatrix, Matrix, SquareMatrix};
use crate::error::{Error, Result};
use crate::manifold::ManifoldMap;

/// Antidiagonal permutation σ_k.
pub fn weyl<T: Entry>(k: usize) -> SquareMatrix<T> {
    let mut s = SquareMatrix::zeros(k);
    for i in 0..k {
        s[(i, k - 1 - i)] = T::one();
    }
    s
}

/// g* = σ⁻¹ (gᵀ)⁻¹ σ.
pub fn dual<T: Entry>(g: &SquareMatrix<T>) -> Result<SquareMatrix<T>> {
    let sigma = weyl::<T>(g.size());
    let inv_t = g.transpose().inverse()?;
    // σ is its own inverse.
    Ok(sigma.mul(&inv_t).mul(&sigma))
}

fn z_from_parts<T: Entry>(d: usize, m: usize, jac: &[Vec<T>]) -> SquareMatrix<T> {
    let n = d + m;
    let mut z = SquareMatrix::identity(n + 1);
    for r in 0..m {
        for c in 0..d {
            // −σ_m J' σ_d with J'_{j,i} = ∂_i f_j
            z[(r, m + c)] = -jac[d - 1 - c][m - 1 - r].clone();
        }
    }
    z
}

fn u_from_parts<T: Entry>(x: &[T], f: &[T]) -> SquareMatrix<T> {
    let d = x.len();
    let m = f.len();
    let n = d + m;
    let mut u = SquareMatrix::identity(n + 1);
    for r in 0..m {
        u[(r, n)] = f[m - 1 - r].clone();
    }
    for r in 0..d {
        u[(m + r, n)] = x[d - 1 - r].clone();
    }
    u
}

fn u1_from_parts<T: Entry>(x: &[T], f: &[T], jac: &[Vec<T>]) -> SquareMatrix<T> {
    let d = x.len();
    let m = f.len();
    let n = d + m;
    let mut u1 = SquareMatrix::identity(n + 1);
    for r in 0..m {
        let j = m - 1 - r;
        let mut last = f[j].clone();
        for c in 0..d {
            let i = d - 1 - c;
            u1[(r, m + c)] = -jac[i][j].clone();
            last = last - x[i].clone() * jac[i][j].clone();
        }
        u1[(r, n)] = last;
    }
    for r in 0..d {
        u1[(m + r, n)] = x[d - 1 - r].clone();
    }
    u1
}

pub fn z_matrix(map: &ManifoldMap, x: &[f64]) -> Result<Matrix> {
    let jac = map.jacobian(x)?;
    Ok(z_from_parts(map.d(), map.m(), &jac))
}

pub fn u_matrix(map: &ManifoldMap, x: &[f64]) -> Result<Matrix> {
    map.check_domain(x)?;
    Ok(u_from_parts(x, &map.eval_f(x)))
}

pub fn u1_matrix(map: &ManifoldMap, x: &[f64]) -> Result<Matrix> {
    map.check_domain(x)?;
    Ok(u1_unchecked(map, x))
}

/// u₁(x) without the domain check, for hot loops over validated grids.
pub fn u1_unchecked(map: &ManifoldMap, x: &[f64]) -> Matrix {
    u1_from_parts(x, &map.eval_f(x), &map.jacobian_unchecked(x))
}

pub fn z_matrix_exact(map: &ManifoldMap, x: &[BigRational]) -> ExactMatrix {
    z_from_parts(map.d(), map.m(), &map.jacobian_exact(x))
}

pub fn u_matrix_exact(map: &ManifoldMap, x: &[BigRational]) -> ExactMatrix {
    u_from_parts(x, &map.eval_f_exact(x))
}

pub fn u1_matrix_exact(map: &ManifoldMap, x: &[BigRational]) -> ExactMatrix {
    u1_from_parts(x, &map.eval_f_exact(x), &map.jacobian_exact(x))
}

fn check_eps_t(eps: f64, t: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::param(format!("eps must lie in (0, 1], got {eps}")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::param(format!("t must be positive, got {t}")));
    }
    Ok(())
}

/// φ = (εⁿ e^t)^{1/(n+1)}.
pub fn phi(eps: f64, t: f64, n: usize) -> f64 {
    ((n as f64) * eps.ln() + t).exp().powf(1.0 / (n as f64 + 1.0))
}

/// h = d t / (2(n+1)).
pub fn h_exponent(t: f64, n: usize, d: usize) -> f64 {
    d as f64 * t / (2.0 * (n as f64 + 1.0))
}

/// g_{ε,t} = φ diag(ε⁻¹, …, ε⁻¹, e^{-t}).
pub fn g_eps_t(eps: f64, t: f64, n: usize) -> Result<Matrix> {
    check_eps_t(eps, t)?;
    let p = phi(eps, t, n);
    let mut diag = vec![p / eps; n];
    diag.push(p * (-t).exp());
    Ok(Matrix::diag(diag))
}

/// b_t = diag(e^h ×m, e^{-(m+1)t/(2(n+1))} ×d, e^h).
pub fn b_t(t: f64, n: usize, m: usize, d: usize) -> Result<Matrix> {
    check_dims(n, m, d)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::param(format!("t must be positive, got {t}")));
    }
    let h = h_exponent(t, n, d);
    let mid = -((m as f64 + 1.0) * t) / (2.0 * (n as f64 + 1.0));
    let mut diag = vec![h.exp(); m];
    diag.extend(std::iter::repeat_n(mid.exp(), d));
    diag.push(h.exp());
    Ok(Matrix::diag(diag))
}

/// d_ε = diag(1 ×m, ε^{1/2} ×d, 1).
pub fn d_eps(eps: f64, n: usize, m: usize, d: usize) -> Result<Matrix> {
    check_dims(n, m, d)?;
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::param(format!("eps must lie in (0, 1], got {eps}")));
    }
    let mut diag = vec![1.0; m];
    diag.extend(std::iter::repeat_n(eps.sqrt(), d));
    diag.push(1.0);
    Ok(Matrix::diag(diag))
}

/// a_{ε,t,v} = v⁻¹ diag(ε ×m, (ε^m e^t)^{-1/d} ×d, v^{n+1} e^t).
pub fn a_eps_t_v(eps: f64, t: f64, v: f64, n: usize, m: usize, d: usize) -> Result<Matrix> {
    check_dims(n, m, d)?;
    check_eps_t(eps, t)?;
    if !(v > 0.0 && v <= 1.0) {
        return Err(Error::param(format!("v must lie in (0, 1], got {v}")));
    }
    let mid = (-(m as f64 * eps.ln() + t) / d as f64).exp();
    let mut diag = vec![eps / v; m];
    diag.extend(std::iter::repeat_n(mid / v, d));
    diag.push(v.powi(n as i32) * t.exp());
    Ok(Matrix::diag(diag))
}

fn check_dims(n: usize, m: usize, d: usize) -> Result<()> {
    if d == 0 || m == 0 || n != m + d {
        return Err(Error::InvalidDimension(format!("need n = m + d with m, d >= 1, got n={n} m={m} d={d}")));
    }
    Ok(())
}

/// g_{ε,t} with e^t and ε rational and φ = 1, which makes the matrix exactly
/// rational: ε = e^{-t/n}. Used by the exact conjugation check.
pub fn g_exact_unit_phi(eps: &BigRational, n: usize) -> ExactMatrix {
    let mut diag = vec![BigRational::one() / eps.clone(); n];
    let et_inv = num_traits::pow(eps.clone(), n);
    diag.push(et_inv);
    ExactMatrix::diag(diag)
}

/// Exact diagonal matrix from rational entries.
pub fn exact_diag(entries: Vec<BigRational>) -> ExactMatrix {
    ExactMatrix::diag(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::matrix::approx_eq;
    use crate::manifold::veronese;
    use crate::poly::rational;

    #[test]
    fn weyl_examples() {
        let w2: Matrix = weyl(2);
        assert_eq!(w2.rows(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let w1: Matrix = weyl(1);
        assert_eq!(w1.rows(), vec![vec![1.0]]);
        let w3: ExactMatrix = weyl(3);
        assert_eq!(w3.mul(&w3), ExactMatrix::identity(3));
    }

    #[test]
    fn dual_of_diagonal_reverses_and_inverts() {
        let g = exact_diag(vec![rational(2, 1), rational(3, 1), rational(5, 7)]);
        let dual_g = dual(&g).unwrap();
        assert_eq!(
            dual_g,
            exact_diag(vec![rational(7, 5), rational(1, 3), rational(1, 2)])
        );
        assert_eq!(dual(&ExactMatrix::identity(4)).unwrap(), ExactMatrix::identity(4));
    }

    #[test]
    fn veronese_u1_layout() {
        let v = veronese(2).unwrap();
        let x = 0.3;
        let u1 = u1_matrix(&v, &[x]).unwrap();
        let expect = Matrix::from_f64_rows(&[&[1.0, -2.0 * x, -x * x], &[0.0, 1.0, x], &[0.0, 0.0, 1.0]])
            .unwrap();
        assert!(approx_eq(&u1, &expect, 1e-15));
    }

    #[test]
    fn z_times_u_is_u1_exactly() {
        let v = veronese(3).unwrap();
        let x = [rational(2, 7)];
        let z = z_matrix_exact(&v, &x);
        let u = u_matrix_exact(&v, &x);
        assert_eq!(z.mul(&u), u1_matrix_exact(&v, &x));
        assert_eq!(u1_matrix_exact(&v, &x).det(), rational(1, 1));
    }

    #[test]
    fn scaling_determinants() {
        for (n, d) in [(2, 1), (3, 2), (3, 1), (5, 2)] {
            let m = n - d;
            let t = 7.3;
            assert!((b_t(t, n, m, d).unwrap().det() - 1.0).abs() < 1e-12);
            assert!((g_eps_t(0.2, t, n).unwrap().det() - 1.0).abs() < 1e-9);
            assert!((a_eps_t_v(0.2, t, 0.5, n, m, d).unwrap().det() - 1.0).abs() < 1e-9);
            assert_eq!(d_eps(1.0, n, m, d).unwrap(), Matrix::identity(n + 1));
        }
    }

    #[test]
    fn unit_phi_case() {
        let n = 3;
        let t = 6.0;
        let eps = (-t / n as f64).exp();
        assert!((phi(eps, t, n) - 1.0).abs() < 1e-12);
        let g = g_eps_t(eps, t, n).unwrap();
        let mut expect = vec![(t / n as f64).exp(); n];
        expect.push((-t).exp());
        assert!(approx_eq(&g, &Matrix::diag(expect), 1e-12));
    }

    #[test]
    fn parameter_ranges_enforced() {
        assert!(g_eps_t(0.0, 1.0, 2).is_err());
        assert!(g_eps_t(0.5, -1.0, 2).is_err());
        assert!(a_eps_t_v(0.5, 1.0, 1.5, 2, 1, 1).is_err());
        assert!(b_t(1.0, 3, 1, 1).is_err());
    }
}
