//! Least-squares system for one parameter value.
//!
//! For fixed `y` the discrete pair `(u, g)` in `U x G` minimizes
//!
//! ```text
//! E_h(u, g) = |grad u - g|^2 + |curl g|^2 + sum_F (1 + 1/h_{K,F}) |g_t|_F^2 + |A(y):Dg - f(y)|^2
//! ```
//!
//! where `g_t` is the tangential trace on boundary edges `F` and `h_{K,F}` the
//! diameter of the cell owning `F`. The Euler–Lagrange system is symmetric
//! positive definite. Everything except the `A:Dg` block is independent of
//! `y` and assembled once per discretization.

mod solver;
mod sparse;

use std::sync::{Arc, OnceLock};

use thiserror::Error;

pub use solver::{
    certify_positive_definite, solve_spd, CholeskyPlan, LinearSolution, SolveError, SolverKind, SolverOptions,
};
pub use sparse::{CsrMatrix, SparsityPattern};

use crate::coefficients::{Matrix2, ParametricProblem};
use crate::fem::{edge_rule, triangle_rule, DiscreteFieldPair, FeSpacePair, FemError, ReferenceTable};
use crate::mesh::SimplicialMesh;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("parameter has {got} components, problem has {expected}")]
    ParameterDimension { expected: usize, got: usize },
}

/// `curl psi = d1 psi_2 - d2 psi_1`, from the Jacobian `J[c][j] = d_j psi_c`.
pub fn curl2(jacobian: &Matrix2) -> f64 {
    jacobian[1][0] - jacobian[0][1]
}

/// `v - (v . n) n` for a unit normal `n`.
pub fn tangential_part(v: [f64; 2], n: [f64; 2]) -> [f64; 2] {
    let vn = v[0] * n[0] + v[1] * n[1];
    [v[0] - vn * n[0], v[1] - vn * n[1]]
}

/// `A : Dpsi = sum_{ij} a_ij d_j psi_i`.
pub fn frobenius_product(a: &Matrix2, jacobian: &Matrix2) -> f64 {
    a[0][0] * jacobian[0][0] + a[0][1] * jacobian[0][1] + a[1][0] * jacobian[1][0] + a[1][1] * jacobian[1][1]
}

/// Boundary treatment of the tangential trace of `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryPenalty {
    /// Weight `1 + 1/h_{K,F}` per boundary edge (the mesh-dependent functional).
    #[default]
    MeshDependent,
    /// No boundary terms, i.e. the continuous functional restricted to the
    /// discrete spaces. Not coercive on `G` in general.
    None,
}

impl BoundaryPenalty {
    fn weight(self, cell_diameter: f64) -> f64 {
        match self {
            Self::MeshDependent => 1.0 + 1.0 / cell_diameter,
            Self::None => 0.0,
        }
    }
}

/// Quadrature degrees; `None` selects `2k + 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QuadratureSettings {
    pub volume_degree: Option<usize>,
    pub edge_degree: Option<usize>,
}

/// Mesh, spaces, reference tables and the `y`-independent part of the
/// system. Immutable and shareable across threads.
#[derive(Debug)]
pub struct Discretization {
    mesh: Arc<SimplicialMesh>,
    space: Arc<FeSpacePair>,
    volume: ReferenceTable,
    edges: [ReferenceTable; 3],
    volume_degree: usize,
    edge_degree: usize,
    pattern: Arc<SparsityPattern>,
    base: [OnceLock<Vec<f64>>; 2],
    plan: OnceLock<Result<CholeskyPlan, SolveError>>,
}

fn local_u(space: &FeSpacePair, nodes: &[usize]) -> Vec<Option<usize>> {
    nodes.iter().map(|&n| space.u_dof(n)).collect()
}

impl Discretization {
    pub fn new(mesh: Arc<SimplicialMesh>, degree: usize, quad: QuadratureSettings) -> Result<Self, FemError> {
        let space = Arc::new(FeSpacePair::new(&mesh, degree)?);
        Self::with_space(mesh, space, quad)
    }

    pub fn with_space(
        mesh: Arc<SimplicialMesh>,
        space: Arc<FeSpacePair>,
        quad: QuadratureSettings,
    ) -> Result<Self, FemError> {
        let k = space.degree();
        let volume_degree = quad.volume_degree.unwrap_or(2 * k + 2);
        let edge_degree = quad.edge_degree.unwrap_or(2 * k + 2);
        let volume = ReferenceTable::for_triangle(space.basis(), &triangle_rule(volume_degree)?);
        let edges = space.edge_tables(&edge_rule(edge_degree)?);

        let n_loc = space.basis().len();
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); space.dim()];
        let mut dofs = Vec::with_capacity(3 * n_loc);
        for c in 0..mesh.num_cells() {
            dofs.clear();
            for &node in space.cell_nodes(c) {
                dofs.extend(space.u_dof(node));
                dofs.push(space.g_dof(node, 0));
                dofs.push(space.g_dof(node, 1));
            }
            for &i in &dofs {
                rows[i].extend_from_slice(&dofs);
            }
        }
        let pattern = Arc::new(SparsityPattern::from_rows(rows));
        Ok(Self {
            mesh,
            space,
            volume,
            edges,
            volume_degree,
            edge_degree,
            pattern,
            base: [OnceLock::new(), OnceLock::new()],
            plan: OnceLock::new(),
        })
    }

    pub fn mesh(&self) -> &Arc<SimplicialMesh> {
        &self.mesh
    }

    pub fn space(&self) -> &Arc<FeSpacePair> {
        &self.space
    }

    pub fn degree(&self) -> usize {
        self.space.degree()
    }

    pub fn volume_degree(&self) -> usize {
        self.volume_degree
    }

    pub fn edge_degree(&self) -> usize {
        self.edge_degree
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub(crate) fn volume_table(&self) -> &ReferenceTable {
        &self.volume
    }

    pub(crate) fn edge_table(&self, opposite: usize) -> &ReferenceTable {
        &self.edges[opposite]
    }

    /// Symbolic Cholesky analysis, shared by every system on this discretization.
    pub fn cholesky_plan(&self) -> Result<&CholeskyPlan, SolveError> {
        self.plan.get_or_init(|| CholeskyPlan::new(self.pattern.clone())).as_ref().map_err(Clone::clone)
    }

    fn base_values(&self, penalty: BoundaryPenalty) -> &[f64] {
        let slot = match penalty {
            BoundaryPenalty::MeshDependent => 0,
            BoundaryPenalty::None => 1,
        };
        self.base[slot].get_or_init(|| self.assemble_base(penalty))
    }

    /// `<grad u - g, grad u' - g'> + <curl g, curl g'> + boundary penalty`.
    fn assemble_base(&self, penalty: BoundaryPenalty) -> Vec<f64> {
        let space = &*self.space;
        let n_loc = space.basis().len();
        let nl = 3 * n_loc;
        let mut m = CsrMatrix::zeros(self.pattern.clone());
        let mut local = vec![0.0; nl * nl];
        // features per local unknown: (mismatch_x, mismatch_y, curl)
        let mut feat = vec![[0.0; 3]; nl];
        for c in 0..space.num_cells() {
            let map = space.cell_map(c);
            let det = map.det.abs();
            local.iter_mut().for_each(|v| *v = 0.0);
            for q in 0..self.volume.len() {
                let w = self.volume.weights[q] * det;
                let phi = self.volume.values_at(q);
                let grads = self.volume.gradients_at(q);
                for i in 0..n_loc {
                    let g = map.gradient(grads[i]);
                    feat[i] = [g[0], g[1], 0.0];
                    feat[n_loc + 2 * i] = [-phi[i], 0.0, -g[1]];
                    feat[n_loc + 2 * i + 1] = [0.0, -phi[i], g[0]];
                }
                for a in 0..nl {
                    let fa = feat[a];
                    for b in 0..nl {
                        let fb = feat[b];
                        local[a * nl + b] += w * (fa[0] * fb[0] + fa[1] * fb[1] + fa[2] * fb[2]);
                    }
                }
            }
            self.scatter(c, &local, &mut m);
        }

        if penalty != BoundaryPenalty::None {
            for edge in self.mesh.boundary_edges() {
                let weight = penalty.weight(edge.cell_diameter) * edge.length;
                let table = &self.edges[edge.opposite_local];
                let t = edge.tangent;
                local.iter_mut().for_each(|v| *v = 0.0);
                for q in 0..table.len() {
                    let w = table.weights[q] * weight;
                    let phi = table.values_at(q);
                    for i in 0..n_loc {
                        for j in 0..n_loc {
                            let pp = w * (phi[i] * phi[j]);
                            for ci in 0..2 {
                                for cj in 0..2 {
                                    let a = n_loc + 2 * i + ci;
                                    let b = n_loc + 2 * j + cj;
                                    local[a * nl + b] += pp * (t[ci] * t[cj]);
                                }
                            }
                        }
                    }
                }
                self.scatter(edge.cell, &local, &mut m);
            }
        }
        m.values
    }

    /// Adds a local matrix in the layout `[u_0..u_{n-1}, g_{0,x}, g_{0,y}, ...]`.
    fn scatter(&self, cell: usize, local: &[f64], m: &mut CsrMatrix) {
        let space = &*self.space;
        let nodes = space.cell_nodes(cell);
        let n_loc = nodes.len();
        let nl = 3 * n_loc;
        let us = local_u(space, nodes);
        let global = |a: usize| -> Option<usize> {
            if a < n_loc {
                us[a]
            } else {
                let i = (a - n_loc) / 2;
                Some(space.g_dof(nodes[i], (a - n_loc) % 2))
            }
        };
        for a in 0..nl {
            let Some(ga) = global(a) else { continue };
            for b in 0..nl {
                let Some(gb) = global(b) else { continue };
                m.add(ga, gb, local[a * nl + b]);
            }
        }
    }
}

/// The Euler–Lagrange system at one parameter value, with constrained
/// scalar dofs eliminated.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub dim_u: usize,
    pub dim_g: usize,
    /// `|f(y)|^2` under the volume rule, so that
    /// `E_h(z) = z^T M z - 2 b^T z + |f|^2` for packed coefficients `z`.
    pub forcing_norm_sq: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AssemblyOptions {
    pub penalty: BoundaryPenalty,
}

/// Assembles the parametric least-squares system at `y`.
pub fn assemble_parametric_system(
    disc: &Discretization,
    problem: &ParametricProblem,
    y: &[f64],
    opts: &AssemblyOptions,
) -> Result<AssembledSystem, AssemblyError> {
    if y.len() != problem.num_dims() {
        return Err(AssemblyError::ParameterDimension { expected: problem.num_dims(), got: y.len() });
    }
    let space = &*disc.space;
    let k = space.degree();
    let mut warnings = Vec::new();
    if disc.volume_degree < 2 * k {
        warnings.push(format!("volume quadrature degree {} < 2k = {}", disc.volume_degree, 2 * k));
    }
    if disc.edge_degree < 2 * k {
        warnings.push(format!("edge quadrature degree {} < 2k = {}", disc.edge_degree, 2 * k));
    }

    let mut matrix = CsrMatrix::zeros(disc.pattern.clone());
    let mut rhs = vec![0.0; space.dim()];
    let mut forcing_norm_sq = 0.0;
    let n_loc = space.basis().len();
    let table = &disc.volume;
    // A:D(phi_i e_c) for the 2 n_loc vector unknowns
    let mut ad = vec![0.0; 2 * n_loc];
    let mut local = vec![0.0; 4 * n_loc * n_loc];
    let mut local_rhs = vec![0.0; 2 * n_loc];
    for c in 0..space.num_cells() {
        let map = space.cell_map(c);
        let det = map.det.abs();
        local.iter_mut().for_each(|v| *v = 0.0);
        local_rhs.iter_mut().for_each(|v| *v = 0.0);
        for q in 0..table.len() {
            let w = table.weights[q] * det;
            let x = map.to_physical(table.points[q]);
            let a = problem.diffusion_at(y, x);
            let f = problem.forcing_at(y, x);
            forcing_norm_sq += w * f * f;
            let grads = table.gradients_at(q);
            for i in 0..n_loc {
                let g = map.gradient(grads[i]);
                for comp in 0..2 {
                    ad[2 * i + comp] = a[comp][0] * g[0] + a[comp][1] * g[1];
                }
            }
            let nl = 2 * n_loc;
            for p in 0..nl {
                local_rhs[p] += w * ad[p] * f;
                for r in 0..nl {
                    local[p * nl + r] += w * (ad[p] * ad[r]);
                }
            }
        }
        let nodes = space.cell_nodes(c);
        let nl = 2 * n_loc;
        for p in 0..nl {
            let gp = space.g_dof(nodes[p / 2], p % 2);
            rhs[gp] += local_rhs[p];
            for r in 0..nl {
                let gr = space.g_dof(nodes[r / 2], r % 2);
                matrix.add(gp, gr, local[p * nl + r]);
            }
        }
    }
    for (v, b) in matrix.values.iter_mut().zip(disc.base_values(opts.penalty)) {
        *v += b;
    }
    Ok(AssembledSystem { matrix, rhs, dim_u: space.dim_u(), dim_g: space.dim_g(), forcing_norm_sq, warnings })
}

/// Solves an assembled system and unpacks the coefficients.
pub fn solve_deterministic(
    disc: &Discretization,
    system: &AssembledSystem,
    opts: &SolverOptions,
) -> Result<DiscreteFieldPair, AssemblyError> {
    let plan = match opts.kind {
        SolverKind::Cholesky => Some(disc.cholesky_plan()?),
        SolverKind::ConjugateGradient => None,
    };
    let sol = solve_spd(&system.matrix, &system.rhs, opts, plan)?;
    Ok(DiscreteFieldPair::unpack(&disc.space, &sol.x))
}

/// Assemble and solve at one parameter value.
pub fn solve_at(
    disc: &Discretization,
    problem: &ParametricProblem,
    y: &[f64],
    assembly: &AssemblyOptions,
    solver: &SolverOptions,
) -> Result<DiscreteFieldPair, AssemblyError> {
    let system = assemble_parametric_system(disc, problem, y, assembly)?;
    solve_deterministic(disc, &system, solver)
}

/// Terms of the mesh-dependent functional. `total()` is `E_h`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub gradient_mismatch: f64,
    pub curl: f64,
    /// `|g_t|^2` over the whole boundary.
    pub boundary_trace: f64,
    /// `sum_F h_{K,F}^{-1} |g_t|_F^2`.
    pub boundary_penalty: f64,
    pub residual: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.gradient_mismatch + self.curl + self.boundary_trace + self.boundary_penalty + self.residual
    }
}

/// Field values reconstructed at one quadrature point.
pub(crate) struct PointValues {
    pub grad_u: [f64; 2],
    pub g: [f64; 2],
    /// `dg[c][j] = d_j g_c`
    pub dg: Matrix2,
}

pub(crate) fn point_values(
    nodes: &[usize],
    phi: &[f64],
    grads: &[[f64; 2]],
    fields: &DiscreteFieldPair,
) -> PointValues {
    let mut pv = PointValues { grad_u: [0.0; 2], g: [0.0; 2], dg: [[0.0; 2]; 2] };
    for (i, &n) in nodes.iter().enumerate() {
        let (u, gx, gy) = (fields.u[n], fields.g[2 * n], fields.g[2 * n + 1]);
        let gr = grads[i];
        pv.grad_u[0] += u * gr[0];
        pv.grad_u[1] += u * gr[1];
        pv.g[0] += gx * phi[i];
        pv.g[1] += gy * phi[i];
        pv.dg[0][0] += gx * gr[0];
        pv.dg[0][1] += gx * gr[1];
        pv.dg[1][0] += gy * gr[0];
        pv.dg[1][1] += gy * gr[1];
    }
    pv
}

/// Evaluates `E_h(u, g; y)` term by term. With `BoundaryPenalty::None`
/// both boundary terms are omitted.
pub fn evaluate_cost(
    disc: &Discretization,
    problem: &ParametricProblem,
    y: &[f64],
    fields: &DiscreteFieldPair,
    penalty: BoundaryPenalty,
) -> CostBreakdown {
    let space = &*disc.space;
    let table = &disc.volume;
    let n_loc = space.basis().len();
    let mut grads = vec![[0.0; 2]; n_loc];
    let mut out = CostBreakdown::default();
    for c in 0..space.num_cells() {
        let map = space.cell_map(c);
        let det = map.det.abs();
        let nodes = space.cell_nodes(c);
        for q in 0..table.len() {
            let w = table.weights[q] * det;
            let x = map.to_physical(table.points[q]);
            for (g, r) in grads.iter_mut().zip(table.gradients_at(q)) {
                *g = map.gradient(*r);
            }
            let pv = point_values(nodes, table.values_at(q), &grads, fields);
            let mis = [pv.grad_u[0] - pv.g[0], pv.grad_u[1] - pv.g[1]];
            out.gradient_mismatch += w * (mis[0] * mis[0] + mis[1] * mis[1]);
            out.curl += w * curl2(&pv.dg).powi(2);
            let a = problem.diffusion_at(y, x);
            out.residual += w * (frobenius_product(&a, &pv.dg) - problem.forcing_at(y, x)).powi(2);
        }
    }
    if penalty == BoundaryPenalty::MeshDependent {
        for edge in disc.mesh.boundary_edges() {
            let table = &disc.edges[edge.opposite_local];
            let nodes = space.cell_nodes(edge.cell);
            let mut trace = 0.0;
            for q in 0..table.len() {
                let phi = table.values_at(q);
                let mut g = [0.0; 2];
                for (i, &n) in nodes.iter().enumerate() {
                    g[0] += fields.g[2 * n] * phi[i];
                    g[1] += fields.g[2 * n + 1] * phi[i];
                }
                let gt = tangential_part(g, edge.normal);
                trace += table.weights[q] * edge.length * (gt[0] * gt[0] + gt[1] * gt[1]);
            }
            out.boundary_trace += trace;
            out.boundary_penalty += trace / edge.cell_diameter;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Rectangle;

    fn disc(n: usize, k: usize) -> Discretization {
        let mesh = Arc::new(SimplicialMesh::structured(Rectangle::reference_square(), n).unwrap());
        Discretization::new(mesh, k, QuadratureSettings::default()).unwrap()
    }

    #[test]
    fn curl_examples() {
        // psi = (-x2, x1)
        assert_eq!(curl2(&[[0.0, -1.0], [1.0, 0.0]]), 2.0);
        // psi = grad(x1^2 x2) = (2 x1 x2, x1^2) at x = (0.7, -0.2)
        let (x1, x2) = (0.7, -0.2);
        assert_eq!(curl2(&[[2.0 * x2, 2.0 * x1], [2.0 * x1, 0.0]]), 0.0);
        // psi = (x2^2, 0) at x2 = 3
        assert_eq!(curl2(&[[0.0, 6.0], [0.0, 0.0]]), -6.0);
    }

    #[test]
    fn tangential_examples() {
        let n = [0.6, 0.8];
        let t = tangential_part(n, n);
        assert!(t[0].abs() < 1e-16 && t[1].abs() < 1e-16);
        assert_eq!(tangential_part([-0.8, 0.6], n), [-0.8, 0.6]);
        assert_eq!(tangential_part([3.0, 4.0], [1.0, 0.0]), [0.0, 4.0]);
    }

    #[test]
    fn system_order_and_symmetry() {
        let d = disc(2, 1);
        let p = ParametricProblem::manufactured_identity();
        let s = assemble_parametric_system(&d, &p, &[0.0, 0.0], &AssemblyOptions::default()).unwrap();
        assert_eq!(s.matrix.n(), 19);
        assert_eq!((s.dim_u, s.dim_g), (1, 18));
        assert_eq!(s.matrix.symmetry_defect(), 0.0);
        assert!(s.warnings.is_empty());
    }

    #[test]
    fn wrong_parameter_length() {
        let d = disc(1, 1);
        let p = ParametricProblem::manufactured_identity();
        assert!(matches!(
            assemble_parametric_system(&d, &p, &[0.0], &AssemblyOptions::default()),
            Err(AssemblyError::ParameterDimension { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn low_quadrature_warns() {
        let mesh = Arc::new(SimplicialMesh::structured(Rectangle::reference_square(), 2).unwrap());
        let quad = QuadratureSettings { volume_degree: Some(1), edge_degree: None };
        let d = Discretization::new(mesh, 2, quad).unwrap();
        let p = ParametricProblem::manufactured_identity();
        let s = assemble_parametric_system(&d, &p, &[0.0, 0.0], &AssemblyOptions::default()).unwrap();
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let d = disc(3, 2);
        let mut p = ParametricProblem::manufactured_identity();
        p.forcing = Arc::new(|_, _| 0.0);
        let f = solve_at(&d, &p, &[0.0, 0.0], &AssemblyOptions::default(), &SolverOptions::default()).unwrap();
        assert!(f.u.iter().chain(&f.g).all(|&v| v == 0.0));
        let cost = evaluate_cost(&d, &p, &[0.0, 0.0], &f, BoundaryPenalty::MeshDependent);
        assert_eq!(cost.total(), 0.0);
    }
}
