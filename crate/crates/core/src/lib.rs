//! Mixed-order quasicontinuum solver for periodic beam lattices.

pub mod assembly;
pub mod beam;
pub mod element;
pub mod error;
pub mod fracture;
pub mod geom;
pub mod io;
pub mod lattice;
pub mod mesh;
pub mod sampling;
pub mod scalar;
pub mod solver;
pub mod weights;

pub use error::{QcError, Result};
pub use lattice::{Cell, DiscreteLattice, UnitCellTopology};
pub use scalar::{Jet1, Jet2, Scalar};

/// Double-precision 2D beam.
pub type Beam2d = beam::Beam2;
/// Double-precision 3D beam.
pub type Beam3d = beam::Beam3;
