//! Tensor Gauss collocation in the parameter domain.
//!
//! Global node positions are 0-based in memory. `global_index` also provides
//! the 1-based numbering `m = m_1 + sum_i (m_{i+1} - 1) prod_{j<=i} (p_j + 1)`,
//! in which the first dimension varies fastest.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::{solve_at, AssemblyError, AssemblyOptions, Discretization, SolverOptions};
use crate::coefficients::{DensityFamily, ParametricProblem};
use crate::fem::DiscreteFieldPair;
use crate::orthopoly::gauss_rule;

/// Largest number of nodes per dimension.
pub const MAX_RULE_POINTS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollocationError {
    #[error("rule with {0} points requested (supported: 1..=64)")]
    PointCount(usize),
    #[error("multi-index component {component} = {value} outside 1..={max}")]
    IndexOutOfRange { component: usize, value: usize, max: usize },
    #[error("expected {expected} parameter dimensions, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("grid has no dimensions")]
    Empty,
    #[error("processing order is not a permutation of the {0} nodes")]
    BadOrder(usize),
    #[error("collocation node {index} failed: {source}")]
    Node { index: usize, source: AssemblyError },
}

/// Gauss rule for one parameter axis.
#[derive(Debug, Clone)]
pub struct GaussRule1D {
    pub family: DensityFamily,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Barycentric weights for Lagrange evaluation.
    bary: Vec<f64>,
}

impl GaussRule1D {
    pub fn new(family: DensityFamily, count: usize) -> Result<Self, CollocationError> {
        if !(1..=MAX_RULE_POINTS).contains(&count) {
            return Err(CollocationError::PointCount(count));
        }
        let (nodes, weights) = gauss_rule(|n| family.recurrence(n), count);
        let bary = (0..count)
            .map(|j| {
                let prod: f64 = (0..count).filter(|&i| i != j).map(|i| nodes[j] - nodes[i]).product();
                1.0 / prod
            })
            .collect();
        Ok(Self { family, nodes, weights, bary })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Polynomial degree `p` of the interpolation space (`len() - 1`).
    pub fn degree(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Lagrange basis `l_j(y)` for all `j`. At a node the result is an exact
    /// unit vector.
    pub fn lagrange_all(&self, y: f64, out: &mut [f64]) {
        if let Some(hit) = self.nodes.iter().position(|&x| x == y) {
            out.iter_mut().for_each(|v| *v = 0.0);
            out[hit] = 1.0;
            return;
        }
        // first barycentric form: l(y) prod (y - x_i) * b_j / (y - x_j)
        let l: f64 = self.nodes.iter().map(|&x| y - x).product();
        for (j, o) in out.iter_mut().enumerate() {
            *o = l * self.bary[j] / (y - self.nodes[j]);
        }
    }

    pub fn lagrange(&self, j: usize, y: f64) -> f64 {
        let mut out = vec![0.0; self.len()];
        self.lagrange_all(y, &mut out);
        out[j]
    }
}

/// Full tensor grid of Gauss rules.
#[derive(Debug, Clone)]
pub struct TensorCollocationGrid {
    rules: Vec<GaussRule1D>,
}

impl TensorCollocationGrid {
    /// One rule of `p_n + 1` points per dimension.
    pub fn new(families: &[DensityFamily], p: &[usize]) -> Result<Self, CollocationError> {
        if families.is_empty() {
            return Err(CollocationError::Empty);
        }
        if families.len() != p.len() {
            return Err(CollocationError::Dimension { expected: families.len(), got: p.len() });
        }
        let rules =
            families.iter().zip(p).map(|(f, &pn)| GaussRule1D::new(f.clone(), pn + 1)).collect::<Result<_, _>>()?;
        Ok(Self { rules })
    }

    pub fn from_rules(rules: Vec<GaussRule1D>) -> Result<Self, CollocationError> {
        if rules.is_empty() {
            return Err(CollocationError::Empty);
        }
        Ok(Self { rules })
    }

    pub fn rules(&self) -> &[GaussRule1D] {
        &self.rules
    }

    pub fn num_dims(&self) -> usize {
        self.rules.len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.rules.iter().map(GaussRule1D::degree).collect()
    }

    pub fn families(&self) -> Vec<DensityFamily> {
        self.rules.iter().map(|r| r.family.clone()).collect()
    }

    /// `N_p = prod (p_n + 1)`.
    pub fn num_nodes(&self) -> usize {
        self.rules.iter().map(GaussRule1D::len).product()
    }

    /// 1-based global index of the 1-based multi-index `m`.
    pub fn global_index(&self, m: &[usize]) -> Result<usize, CollocationError> {
        global_index(m, &self.degrees())
    }

    /// 0-based per-dimension indices of the node at 0-based position `pos`.
    pub fn multi_index(&self, mut pos: usize) -> Vec<usize> {
        self.rules
            .iter()
            .map(|r| {
                let i = pos % r.len();
                pos /= r.len();
                i
            })
            .collect()
    }

    pub fn node(&self, pos: usize) -> Vec<f64> {
        self.multi_index(pos).iter().zip(&self.rules).map(|(&i, r)| r.nodes[i]).collect()
    }

    pub fn weight(&self, pos: usize) -> f64 {
        self.multi_index(pos).iter().zip(&self.rules).map(|(&i, r)| r.weights[i]).product()
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.num_nodes()).map(|m| self.node(m)).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.num_nodes()).map(|m| self.weight(m)).collect()
    }

    /// `l_m(y) = prod_n l_{n, m_n}(y_n)` for the node at position `pos`.
    pub fn lagrange_eval(&self, pos: usize, y: &[f64]) -> Result<f64, CollocationError> {
        Ok(self.lagrange_weights(y)?[pos])
    }

    /// All `l_m(y)`, in node order.
    pub fn lagrange_weights(&self, y: &[f64]) -> Result<Vec<f64>, CollocationError> {
        if y.len() != self.num_dims() {
            return Err(CollocationError::Dimension { expected: self.num_dims(), got: y.len() });
        }
        let per_dim: Vec<Vec<f64>> = self
            .rules
            .iter()
            .zip(y)
            .map(|(r, &yn)| {
                let mut v = vec![0.0; r.len()];
                r.lagrange_all(yn, &mut v);
                v
            })
            .collect();
        Ok(tensor_product(&per_dim))
    }

    /// `I_p v (y)` for scalar node values.
    pub fn interpolate_values(&self, values: &[f64], y: &[f64]) -> Result<f64, CollocationError> {
        Ok(self.lagrange_weights(y)?.iter().zip(values).map(|(l, v)| l * v).sum())
    }

    /// `sum_m ratio(y_m) w_m v_m`.
    pub fn expectation_values(&self, values: &[f64], ratio: &dyn Fn(&[f64]) -> f64) -> f64 {
        (0..self.num_nodes()).map(|m| ratio(&self.node(m)) * self.weight(m) * values[m]).sum()
    }
}

/// Tensor product with the first factor varying fastest.
fn tensor_product(per_dim: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![1.0];
    for axis in per_dim {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for &a in axis {
            next.extend(out.iter().map(|&o| o * a));
        }
        out = next;
    }
    out
}

/// 1-based global index of the 1-based multi-index `m` for degrees `p`.
pub fn global_index(m: &[usize], p: &[usize]) -> Result<usize, CollocationError> {
    if m.len() != p.len() {
        return Err(CollocationError::Dimension { expected: p.len(), got: m.len() });
    }
    let mut index = 0;
    let mut stride = 1;
    for (n, (&mn, &pn)) in m.iter().zip(p).enumerate() {
        if mn < 1 || mn > pn + 1 {
            return Err(CollocationError::IndexOutOfRange { component: n, value: mn, max: pn + 1 });
        }
        index += (mn - 1) * stride;
        stride *= pn + 1;
    }
    Ok(index + 1)
}

/// Per-node solutions of the parametric problem and the fully discrete
/// interpolant they define.
#[derive(Debug, Clone)]
pub struct CollocatedSolution {
    pub grid: TensorCollocationGrid,
    pub disc: Arc<Discretization>,
    pub nodes: Vec<DiscreteFieldPair>,
    /// `rho / rho_hat` at each node.
    pub ratios: Vec<f64>,
}

impl CollocatedSolution {
    pub fn interpolate(&self, y: &[f64]) -> Result<DiscreteFieldPair, CollocationError> {
        let l = self.grid.lagrange_weights(y)?;
        Ok(self.combine(&l))
    }

    /// Mean pair `sum_m ratio_m w_m (u_m, g_m)`.
    pub fn expectation(&self) -> DiscreteFieldPair {
        let coeffs: Vec<f64> = (0..self.nodes.len()).map(|m| self.ratios[m] * self.grid.weight(m)).collect();
        self.combine(&coeffs)
    }

    /// `sum_m c_m (u_m, g_m)`, skipping exact zeros so nodal evaluation
    /// returns the node's coefficients unchanged.
    pub fn combine(&self, coeffs: &[f64]) -> DiscreteFieldPair {
        let mut out = DiscreteFieldPair { u: vec![0.0; self.nodes[0].u.len()], g: vec![0.0; self.nodes[0].g.len()] };
        for (c, f) in coeffs.iter().zip(&self.nodes) {
            if *c != 0.0 {
                out.axpy(*c, f);
            }
        }
        out
    }
}

/// Solves the parametric system at every grid node, concurrently.
pub fn collocate_solve(
    problem: &ParametricProblem,
    grid: &TensorCollocationGrid,
    disc: &Arc<Discretization>,
    assembly: &AssemblyOptions,
    solver: &SolverOptions,
) -> Result<CollocatedSolution, CollocationError> {
    let order: Vec<usize> = (0..grid.num_nodes()).collect();
    collocate_solve_in_order(problem, grid, disc, assembly, solver, &order)
}

/// As [`collocate_solve`], dispatching nodes in the given order. The result
/// does not depend on the order.
pub fn collocate_solve_in_order(
    problem: &ParametricProblem,
    grid: &TensorCollocationGrid,
    disc: &Arc<Discretization>,
    assembly: &AssemblyOptions,
    solver: &SolverOptions,
    order: &[usize],
) -> Result<CollocatedSolution, CollocationError> {
    let n = grid.num_nodes();
    if grid.num_dims() != problem.num_dims() {
        return Err(CollocationError::Dimension { expected: problem.num_dims(), got: grid.num_dims() });
    }
    let mut seen = vec![false; n];
    if order.len() != n || order.iter().any(|&m| m >= n || std::mem::replace(&mut seen[m], true)) {
        return Err(CollocationError::BadOrder(n));
    }
    // build the shared symbolic factorization once, before fanning out
    if solver.kind == crate::assembly::SolverKind::Cholesky {
        disc.cholesky_plan().map_err(|e| CollocationError::Node { index: 0, source: e.into() })?;
    }
    let solved: Vec<(usize, Result<DiscreteFieldPair, AssemblyError>)> =
        order.par_iter().map(|&m| (m, solve_at(disc, problem, &grid.node(m), assembly, solver))).collect();
    let mut slots: Vec<Option<DiscreteFieldPair>> = vec![None; n];
    for (m, r) in solved {
        slots[m] = Some(r.map_err(|source| CollocationError::Node { index: m, source })?);
    }
    let nodes = slots.into_iter().map(|s| s.expect("every node solved")).collect();
    let ratios = (0..n).map(|m| (problem.ratio)(&grid.node(m))).collect();
    Ok(CollocatedSolution { grid: grid.clone(), disc: disc.clone(), nodes, ratios })
}
