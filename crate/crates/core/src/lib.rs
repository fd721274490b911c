//! Numerical symbolic dynamics for non-invertible maps of the 2-torus.
//!
//! The pipeline runs bottom-up:
//!
//! * [`torus`]: the map models (a linear toral endomorphism, its slowed-down
//!   variant with a neutral fixed point, and a collapsed variant with a
//!   singular point).
//! * [`orbit`]: finite windows into the natural extension, the shift and the
//!   derivative cocycle.
//! * [`lyapunov`]: hyperbolic splittings, scaling sums and the Lyapunov change
//!   of coordinates.
//! * [`ladder`], [`chart`]: the ladder function, its lattice, chart sizes and
//!   Pesin charts.
//! * [`graph`]: double charts, the edge relation and finite chain graphs.
//! * [`manifold`], [`shadow`], [`partition`]: graph transforms, limit
//!   manifolds, the shadowing map and the Markov refinement.
//! * [`suite`]: the invariant suites shared by the command-line tool and the
//!   acceptance tests.

// `!(x > y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chart;
pub mod config;
pub mod error;
pub mod graph;
pub mod ladder;
pub mod lyapunov;
pub mod manifold;
pub mod orbit;
pub mod partition;
pub mod shadow;
pub mod suite;
pub mod torus;

pub use error::{Error, Result};

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Mat2 = nalgebra::Matrix2<f64>;
