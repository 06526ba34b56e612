use thiserror::Error;

use crate::Point;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    Model(String),

    #[error("invalid region: {0}")]
    Region(String),

    #[error("closures not disjoint: {0}")]
    NotDisjoint(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("bounding box too small: mass ratio differs by {rel_diff:e} after enlargement")]
    BoxTooSmall { rel_diff: f64 },

    #[error("trajectory left the bounding box at step {step} (state {state:?})")]
    BoxExit { step: usize, state: Point },

    #[error("linear solve did not converge: {iterations} iterations, relative residual {residual:e}")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("committor too small ({value:e}) at a Θ node near {location:?}; refine the grid near ∂A")]
    CommittorVanishes { value: f64, location: Point },

    #[error("cannot sample field on the Θ side of boundary point {0:?}")]
    BoundarySampling(Point),

    #[error("negative boundary flux weight {weight:e} at {location:?} (Hopf sign violated)")]
    HopfSign { weight: f64, location: Point },

    #[error("state {location:?} is {distance:e} from the boundary (limit {limit:e}); reduce dt")]
    FarFromBoundary {
        location: Point,
        distance: f64,
        limit: f64,
    },

    #[error("transition path step rejected {rejections} times in a row at {location:?}")]
    TooManyRejections { rejections: usize, location: Point },

    #[error("interpolated committor is non-positive ({value:e}) at {location:?}")]
    NonPositiveCommittor { value: f64, location: Point },

    #[error("run exhausted {max_steps} steps without reaching its target")]
    StepLimit { max_steps: usize },

    #[error("streamline stagnated near {location:?} after {steps} steps")]
    Stagnation { location: Point, steps: usize },

    #[error("surface intersects a reactant or product region at {0:?}")]
    SurfaceIntersects(Point),

    #[error("measure is not normalized (total mass {0})")]
    NotNormalized(f64),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
