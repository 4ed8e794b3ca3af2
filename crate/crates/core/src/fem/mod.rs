//! Continuous Lagrange finite elements on triangles.

mod basis;
mod quadrature;
mod space;
mod transfer;

use thiserror::Error;

pub use basis::{LagrangeBasis, REFERENCE_VERTICES};
pub use quadrature::{edge_rule, triangle_rule, EdgeRule, TriangleRule, MAX_QUADRATURE_DEGREE};
pub use space::{CellMap, CellTabulation, DiscreteFieldPair, FeSpacePair, ReferenceTable, SUPPORTED_DEGREES};
pub use transfer::Prolongation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("polynomial degree {0} is not supported (expected 1..=4)")]
    UnsupportedDegree(usize),
    #[error("no quadrature rule of degree {0}")]
    UnsupportedQuadrature(usize),
    #[error("cell {0} has a degenerate Jacobian")]
    DegenerateCell(usize),
    #[error("meshes are not nested: fine cell {0} is not contained in a coarse cell")]
    NotNested(usize),
    #[error("meshes cover different domains")]
    DomainMismatch,
    #[error("coarse degree {coarse} exceeds fine degree {fine}; embedding would not be exact")]
    DegreeMismatch { coarse: usize, fine: usize },
}
