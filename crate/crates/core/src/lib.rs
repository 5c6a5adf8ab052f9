//! Experimental toolkit for rational points near nondegenerate manifolds:
//! counting, lattice minima, nondivergence measures and Khintchine-type
//! Monte-Carlo experiments.

pub mod counting;
pub mod error;
pub mod genericity;
pub mod harness;
pub mod khintchine;
pub mod lattice;
pub mod manifold;
pub mod nondivergence;
pub mod poly;
pub mod sampling;
pub mod stats;

pub use error::{Error, Result};
pub use manifold::{paraboloid, veronese, Ball, ManifoldMap};
