//! Structured matrices, duals and Euclidean successive minima.

pub mod matrix;
pub mod minima;
pub mod structured;

pub use matrix::{ExactMatrix, Matrix, SquareMatrix};
pub use minima::{delta1, delta_last, successive_minima, MinimaVector};
pub use structured::{
    a_eps_t_v, b_t, d_eps, dual, g_eps_t, u1_matrix, u1_matrix_exact, u_matrix, weyl, z_matrix,
};
