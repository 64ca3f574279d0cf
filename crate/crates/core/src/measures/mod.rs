//! Jump-size sets and Lévy measures with closed-form kernel integrals.

pub mod component;
pub mod levy;
pub mod quad;
pub mod set;
pub mod vector;

pub use component::{Kernel, MeasureComponent};
pub use levy::{LevyMeasure, Piece};
pub use set::{combine_sets, JumpSet, SetOp};
pub use vector::{NormKernel, VectorMeasure, VectorPiece};
