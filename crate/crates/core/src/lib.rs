//! Mixed least-squares finite elements with stochastic collocation for
//! random elliptic problems in non-divergence form.
//!
//! For each collocation node `y_m` the pair `(u, g)`, with `g` standing in
//! for `grad u`, minimizes a mesh-dependent quadratic functional. The
//! per-node solutions are combined by tensor Lagrange interpolation in the
//! parameter domain.

pub mod assembly;
pub mod coefficients;
pub mod collocation;
pub mod fem;
pub mod mesh;
pub mod norms;
pub mod orthopoly;

pub use assembly::{
    assemble_parametric_system, evaluate_cost, solve_at, solve_deterministic, AssembledSystem, AssemblyOptions,
    BoundaryPenalty, CostBreakdown, Discretization, QuadratureSettings,
};
pub use coefficients::{DensityFamily, Distribution, ParametricProblem};
pub use collocation::{collocate_solve, CollocatedSolution, GaussRule1D, TensorCollocationGrid};
pub use fem::{DiscreteFieldPair, FeSpacePair};
pub use mesh::{Rectangle, SimplicialMesh};
pub use norms::{eoc, p_decay_fit, pair_norm_h, stochastic_error, DecayMode, ErrorRecord};
