//! Transition path theory toolkit.
//!
//! Simulates a diffusion `dX = b(X) dt + √2 σ(X) dW`, cuts its sampled path into
//! A→B reactive segments, samples the transition path process (the diffusion
//! conditioned to reach B before A, drift `b + 2a∇q/q`), and evaluates the
//! committor-based formulas for rates, reaction and crossover times, exit and
//! entrance distributions, the reactive density and the reactive current.
//!
//! The modules follow the data flow:
//!
//! * [`model`]: drift, diffusion, regions A and B, invariant density
//! * [`integrate`] and [`rng`]: Euler–Maruyama paths on reproducible streams
//! * [`grid`], [`sparse`], [`pde`]: finite differences for committors and hitting times
//! * [`reactive`]: segmentation of sampled paths and empirical statistics
//! * [`tpp`]: the transition path process sampler
//! * [`analysis`]: quadratures, boundary measures and the reactive current
//! * [`stats`], [`io`]: tests and estimators, dump formats

// `!(x > 0.0)` rejects NaN as well; kernels index several arrays in lockstep.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod analysis;
pub mod error;
pub mod grid;
pub mod integrate;
pub mod io;
pub mod measure;
pub mod model;
pub mod pde;
pub mod reactive;
pub mod rng;
pub mod sparse;
pub mod stats;
pub mod tpp;

/// Crate version, recorded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Largest supported state-space dimension.
pub const MAX_DIM: usize = 2;

/// A point in R^d, d ≤ 2. Unused trailing coordinates are zero.
pub type Point = [f64; MAX_DIM];

/// A d×d matrix, row-major; unused rows and columns are zero.
pub type Mat = [[f64; MAX_DIM]; MAX_DIM];

pub use analysis::{BoundaryMeasures, TimeQuadratures, TptAnalytics};
pub use error::{Error, Result};
pub use grid::{Grid, NodeClass, ScalarField, VectorField};
pub use integrate::{simulate, simulate_until, Trajectory};
pub use measure::BoundaryMeasure;
pub use model::{build_model, invariant_density, DiffusionModel, InvariantDensity, ModelDescriptor, Region};
pub use reactive::{segment_reactive, ReactionStatistics, ReactiveSegment};
pub use tpp::{sample_tpp, TppPath};

pub(crate) fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub(crate) fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn mat_vec(m: &Mat, v: &Point) -> Point {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

pub(crate) fn dist(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}
