use crate::lattice::Cell;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QcError {
    #[error("unknown topology `{0}`")]
    UnknownTopology(String),
    #[error("malformed topology description: {0}")]
    Topology(String),
    #[error("region selects no unit cells")]
    EmptyDomain,
    #[error("mesh vertex {0:?} is not a lattice site of the domain")]
    NotALatticeSite(Cell),
    #[error("degenerate element {0}")]
    DegenerateElement(usize),
    #[error("quadratic element vertices must lie on even lattice sites: {0:?}")]
    OddVertex(Cell),
    #[error("element {0} overlaps another element")]
    Overlap(usize),
    #[error("mesh is not conforming: {0}")]
    NonConforming(String),
    #[error("coincident points in edge weight computation")]
    CoincidentPoints,
    #[error("degenerate face (collinear vertices)")]
    DegenerateFace,
    #[error("unit cell {0:?} lies in a coarse (quadratic) region")]
    InQuadraticRegion(Cell),
    #[error("unit cell {0:?} is not a representative unit cell")]
    NotRepresentative(Cell),
    #[error("unit cell {0:?} is not part of the domain")]
    NotInDomain(Cell),
    #[error("beam removal touches a coarse region at {0:?}")]
    CrackInCoarseRegion(Cell),
    #[error("singular stiffness matrix")]
    SingularStiffness,
    #[error("solver did not converge after {0} iterations (residual {1:e})")]
    NoConvergence(usize, f64),
    #[error("line search failed at iteration {0}")]
    LineSearchFailed(usize),
    #[error("response is not linear in the load (stress ratio {0:.6} for a doubled load); reduce the applied load")]
    NonlinearRegime(f64),
    #[error("homogenization failed: {0}")]
    Homogenization(String),
    #[error("{0}")]
    InvalidInput(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QcError>;
