//! Mesh-dependent pair norm, errors against exact or reference solutions,
//! and convergence-rate estimates.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::{point_values, tangential_part, Discretization};
use crate::coefficients::ExactSolution;
use crate::collocation::{CollocatedSolution, CollocationError, TensorCollocationGrid};
use crate::fem::{edge_rule, triangle_rule, DiscreteFieldPair, FemError, Prolongation, ReferenceTable};
use crate::mesh::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Collocation(#[from] CollocationError),
    #[error("{what}: lengths {a} and {b} differ")]
    Length { what: &'static str, a: usize, b: usize },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("error {value} at position {index} is not positive")]
    NonPositiveError { index: usize, value: f64 },
    #[error("mesh sizes must be strictly decreasing")]
    NotDecreasing,
    #[error("polynomial degrees must be strictly increasing")]
    NotIncreasing,
    #[error("evaluation grid has {got} dimensions, solutions have {expected}")]
    GridDimension { expected: usize, got: usize },
}

/// Squared contributions to the pair norm.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormBreakdown {
    /// `|grad phi|^2`
    pub scalar: f64,
    /// `|D psi|^2`
    pub vector: f64,
    /// `|psi_t|^2` on the whole boundary.
    pub boundary_trace: f64,
    /// `sum_F h_{K,F}^{-1} |psi_t|_F^2`
    pub boundary_penalty: f64,
}

impl NormBreakdown {
    pub fn total_sq(&self) -> f64 {
        self.scalar + self.vector + self.boundary_trace + self.boundary_penalty
    }

    pub fn total(&self) -> f64 {
        self.total_sq().sqrt()
    }

    /// The plain `H^1`-type part without boundary terms.
    pub fn interior_sq(&self) -> f64 {
        self.scalar + self.vector
    }

    pub fn boundary_sq(&self) -> f64 {
        self.boundary_trace + self.boundary_penalty
    }

    pub fn scale(self, w: f64) -> Self {
        Self {
            scalar: w * self.scalar,
            vector: w * self.vector,
            boundary_trace: w * self.boundary_trace,
            boundary_penalty: w * self.boundary_penalty,
        }
    }
}

impl std::ops::Add for NormBreakdown {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            scalar: self.scalar + o.scalar,
            vector: self.vector + o.vector,
            boundary_trace: self.boundary_trace + o.boundary_trace,
            boundary_penalty: self.boundary_penalty + o.boundary_penalty,
        }
    }
}

/// Optional exact pair `(u*, grad u*)` subtracted pointwise.
struct Shift<'a> {
    gradient: &'a (dyn Fn(Point) -> [f64; 2] + Send + Sync),
    hessian: &'a (dyn Fn(Point) -> [[f64; 2]; 2] + Send + Sync),
}

fn breakdown(
    disc: &Discretization,
    volume: &ReferenceTable,
    edges: &[ReferenceTable; 3],
    fields: &DiscreteFieldPair,
    shift: Option<&Shift<'_>>,
) -> NormBreakdown {
    let space = disc.space();
    let n_loc = space.basis().len();
    let mut grads = vec![[0.0; 2]; n_loc];
    let mut out = NormBreakdown::default();
    for c in 0..space.num_cells() {
        let map = space.cell_map(c);
        let det = map.det.abs();
        let nodes = space.cell_nodes(c);
        for q in 0..volume.len() {
            let w = volume.weights[q] * det;
            for (g, r) in grads.iter_mut().zip(volume.gradients_at(q)) {
                *g = map.gradient(*r);
            }
            let mut pv = point_values(nodes, volume.values_at(q), &grads, fields);
            if let Some(s) = shift {
                let x = map.to_physical(volume.points[q]);
                let gu = (s.gradient)(x);
                let hu = (s.hessian)(x);
                for i in 0..2 {
                    pv.grad_u[i] -= gu[i];
                    for j in 0..2 {
                        pv.dg[i][j] -= hu[i][j];
                    }
                }
            }
            out.scalar += w * (pv.grad_u[0].powi(2) + pv.grad_u[1].powi(2));
            out.vector += w * pv.dg.iter().flatten().map(|v| v * v).sum::<f64>();
        }
    }
    for edge in disc.mesh().boundary_edges() {
        let table = &edges[edge.opposite_local];
        let nodes = space.cell_nodes(edge.cell);
        let map = space.cell_map(edge.cell);
        let mut trace = 0.0;
        for q in 0..table.len() {
            let phi = table.values_at(q);
            let mut g = [0.0; 2];
            for (i, &n) in nodes.iter().enumerate() {
                g[0] += fields.g[2 * n] * phi[i];
                g[1] += fields.g[2 * n + 1] * phi[i];
            }
            if let Some(s) = shift {
                let gu = (s.gradient)(map.to_physical(table.points[q]));
                g = [g[0] - gu[0], g[1] - gu[1]];
            }
            let gt = tangential_part(g, edge.normal);
            trace += table.weights[q] * edge.length * (gt[0] * gt[0] + gt[1] * gt[1]);
        }
        out.boundary_trace += trace;
        out.boundary_penalty += trace / edge.cell_diameter;
    }
    out
}

/// Squared contributions of the mesh-dependent norm
/// `|grad phi|^2 + |D psi|^2 + |psi_t|^2_bd + sum_F h^{-1} |psi_t|_F^2`,
/// integrated with the discretization's own rules (exact for fields in the
/// space).
pub fn pair_norm_breakdown(disc: &Discretization, fields: &DiscreteFieldPair) -> NormBreakdown {
    let edges = [0, 1, 2].map(|e| disc.edge_table(e).clone());
    breakdown(disc, disc.volume_table(), &edges, fields, None)
}

pub fn pair_norm_h(disc: &Discretization, fields: &DiscreteFieldPair) -> f64 {
    pair_norm_breakdown(disc, fields).total()
}

/// Pair-norm error `(u*, grad u*) - (u_h, g_h)` against a closed-form
/// solution, with rules of the given degree on cells and edges.
pub fn pair_error_exact(
    disc: &Discretization,
    fields: &DiscreteFieldPair,
    exact: &ExactSolution,
    quadrature_degree: usize,
) -> Result<NormBreakdown, NormError> {
    let basis = disc.space().basis();
    let volume = ReferenceTable::for_triangle(basis, &triangle_rule(quadrature_degree)?);
    let edges = disc.space().edge_tables(&edge_rule(quadrature_degree)?);
    let shift = Shift { gradient: exact.gradient.as_ref(), hessian: exact.hessian.as_ref() };
    Ok(breakdown(disc, &volume, &edges, fields, Some(&shift)))
}

/// One row of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub h: f64,
    pub k: usize,
    pub p: Vec<usize>,
    pub error: f64,
    pub err_u: f64,
    pub err_g: f64,
    pub err_bnd: f64,
    pub seconds: f64,
}

impl ErrorRecord {
    pub fn from_breakdown(h: f64, k: usize, p: Vec<usize>, b: &NormBreakdown) -> Self {
        Self {
            h,
            k,
            p,
            error: b.total(),
            err_u: b.scalar.sqrt(),
            err_g: b.vector.sqrt(),
            err_bnd: b.boundary_sq().sqrt(),
            seconds: 0.0,
        }
    }
}

/// Evaluation grid for comparing two collocated solutions: the reference
/// families with `max(p) + 2` points per dimension.
pub fn default_eval_grid(
    coarse: &CollocatedSolution,
    reference: &CollocatedSolution,
) -> Result<TensorCollocationGrid, NormError> {
    let (a, b) = (coarse.grid.degrees(), reference.grid.degrees());
    if a.len() != b.len() {
        return Err(NormError::GridDimension { expected: b.len(), got: a.len() });
    }
    let p: Vec<usize> = a.iter().zip(&b).map(|(x, y)| x.max(y) + 1).collect();
    Ok(TensorCollocationGrid::new(&reference.grid.families(), &p)?)
}

/// Stochastic pair-norm error
/// `sum_j w_j ratio(y_j) |I_p^ref(y_j) - E I_p^coarse(y_j)|^2`
/// on the reference discretization, where `E` embeds the coarse space.
pub fn stochastic_error(
    coarse: &CollocatedSolution,
    reference: &CollocatedSolution,
    eval_grid: &TensorCollocationGrid,
    ratio: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> Result<ErrorRecord, NormError> {
    let dims = reference.grid.num_dims();
    if eval_grid.num_dims() != dims || coarse.grid.num_dims() != dims {
        return Err(NormError::GridDimension { expected: dims, got: eval_grid.num_dims() });
    }
    let embedded: Vec<DiscreteFieldPair> = if Arc::ptr_eq(&coarse.disc, &reference.disc) {
        coarse.nodes.clone()
    } else {
        let prolong =
            Prolongation::new(coarse.disc.mesh(), coarse.disc.space(), reference.disc.mesh(), reference.disc.space())?;
        coarse.nodes.par_iter().map(|f| prolong.apply(f)).collect()
    };
    let lifted = CollocatedSolution {
        grid: coarse.grid.clone(),
        disc: reference.disc.clone(),
        nodes: embedded,
        ratios: coarse.ratios.clone(),
    };
    let parts: Vec<Result<NormBreakdown, NormError>> = (0..eval_grid.num_nodes())
        .into_par_iter()
        .map(|j| {
            let y = eval_grid.node(j);
            let diff = reference.interpolate(&y)?.sub(&lifted.interpolate(&y)?);
            Ok(pair_norm_breakdown(&reference.disc, &diff).scale(eval_grid.weight(j) * ratio(&y)))
        })
        .collect();
    let mut total = NormBreakdown::default();
    for p in parts {
        total = total + p?;
    }
    Ok(ErrorRecord::from_breakdown(coarse.disc.mesh().h(), coarse.disc.degree(), coarse.grid.degrees(), &total))
}

/// Stochastic pair-norm error against a `y`-independent closed-form
/// solution, `sum_j w_j ratio(y_j) |(u*, grad u*) - I_p(y_j)|^2` over the
/// nodes of `eval_grid`.
pub fn stochastic_error_exact(
    solution: &CollocatedSolution,
    exact: &ExactSolution,
    eval_grid: &TensorCollocationGrid,
    ratio: &(dyn Fn(&[f64]) -> f64 + Sync),
    quadrature_degree: usize,
) -> Result<ErrorRecord, NormError> {
    if eval_grid.num_dims() != solution.grid.num_dims() {
        return Err(NormError::GridDimension { expected: solution.grid.num_dims(), got: eval_grid.num_dims() });
    }
    let parts: Vec<Result<NormBreakdown, NormError>> = (0..eval_grid.num_nodes())
        .into_par_iter()
        .map(|j| {
            let y = eval_grid.node(j);
            let fields = solution.interpolate(&y)?;
            let b = pair_error_exact(&solution.disc, &fields, exact, quadrature_degree)?;
            Ok(b.scale(eval_grid.weight(j) * ratio(&y)))
        })
        .collect();
    let mut total = NormBreakdown::default();
    for p in parts {
        total = total + p?;
    }
    let disc = &solution.disc;
    Ok(ErrorRecord::from_breakdown(disc.mesh().h(), disc.degree(), solution.grid.degrees(), &total))
}

/// Experimental orders `log(e_i / e_{i+1}) / log(h_i / h_{i+1})`.
pub fn eoc(errors: &[f64], hs: &[f64]) -> Result<Vec<f64>, NormError> {
    if errors.len() != hs.len() {
        return Err(NormError::Length { what: "errors and mesh sizes", a: errors.len(), b: hs.len() });
    }
    if errors.len() < 2 {
        return Err(NormError::TooFewPoints { needed: 2, got: errors.len() });
    }
    check_positive(errors)?;
    if hs.windows(2).any(|w| !(w[1] < w[0]) || w[1] <= 0.0) {
        return Err(NormError::NotDecreasing);
    }
    Ok(errors.windows(2).zip(hs.windows(2)).map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln()).collect())
}

fn check_positive(errors: &[f64]) -> Result<(), NormError> {
    match errors.iter().position(|&e| !(e > 0.0 && e.is_finite())) {
        Some(index) => Err(NormError::NonPositiveError { index, value: errors[index] }),
        None => Ok(()),
    }
}

/// Abscissa used for the exponential decay fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayMode {
    /// `log e` against `p` (bounded parameter domains).
    Bounded,
    /// `log e` against `sqrt(p)` (unbounded domains).
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// `r` in `e ~ C exp(-r t)`.
    pub rate: f64,
    pub intercept: f64,
    /// Coefficient of determination of the linear fit.
    pub r_squared: f64,
    /// Root-mean-square residual of the linear fit in `log e`.
    pub residual: f64,
}

/// Least-squares fit of `log e = c - r t` with `t = p` or `t = sqrt(p)`.
pub fn p_decay_fit(errors: &[f64], ps: &[usize], mode: DecayMode) -> Result<DecayFit, NormError> {
    if errors.len() != ps.len() {
        return Err(NormError::Length { what: "errors and degrees", a: errors.len(), b: ps.len() });
    }
    if errors.len() < 3 {
        return Err(NormError::TooFewPoints { needed: 3, got: errors.len() });
    }
    check_positive(errors)?;
    if ps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(NormError::NotIncreasing);
    }
    let t: Vec<f64> = ps
        .iter()
        .map(|&p| match mode {
            DecayMode::Bounded => p as f64,
            DecayMode::Unbounded => (p as f64).sqrt(),
        })
        .collect();
    let z: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let zm = z.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|v| (v - tm).powi(2)).sum();
    let stz: f64 = t.iter().zip(&z).map(|(a, b)| (a - tm) * (b - zm)).sum();
    let szz: f64 = z.iter().map(|v| (v - zm).powi(2)).sum();
    let slope = stz / stt;
    let intercept = zm - slope * tm;
    let sse: f64 = t.iter().zip(&z).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if szz > 0.0 { 1.0 - sse / szz } else { 1.0 };
    Ok(DecayFit { rate: -slope, intercept, r_squared, residual: (sse / n).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::QuadratureSettings;
    use crate::mesh::{Rectangle, SimplicialMesh};

    fn disc(n: usize, k: usize) -> Discretization {
        let mesh = Arc::new(SimplicialMesh::structured(Rectangle::reference_square(), n).unwrap());
        Discretization::new(mesh, k, QuadratureSettings::default()).unwrap()
    }

    #[test]
    fn constant_vector_field_on_one_cell_pair() {
        let d = disc(1, 1);
        let mut f = DiscreteFieldPair::zeros(d.space());
        f.g = d.space().interpolate_vector(|_| [1.0, 0.0]);
        let b = pair_norm_breakdown(&d, &f);
        assert!(b.scalar.abs() < 1e-15 && b.vector.abs() < 1e-15);
        assert!((b.boundary_trace - 4.0).abs() < 1e-13);
        assert!((b.total_sq() - (4.0 + 2f64.sqrt())).abs() < 1e-13);
    }

    #[test]
    fn zero_fields_have_zero_norm() {
        let d = disc(2, 2);
        assert_eq!(pair_norm_h(&d, &DiscreteFieldPair::zeros(d.space())), 0.0);
    }

    #[test]
    fn gradient_of_bubble_has_no_boundary_part() {
        // cubic components, reproduced exactly by k = 3
        let d = disc(4, 3);
        let mut f = DiscreteFieldPair::zeros(d.space());
        f.g = d.space().interpolate_vector(|x| [-2.0 * x[0] * (1.0 - x[1] * x[1]), -2.0 * x[1] * (1.0 - x[0] * x[0])]);
        let b = pair_norm_breakdown(&d, &f);
        assert!(b.boundary_sq() < 1e-26);
        // |D psi|^2 = int 4(1-y^2)^2 + 4(1-x^2)^2 + 2 (4xy)^2
        let exact = 2.0 * 4.0 * 2.0 * 16.0 / 15.0 + 2.0 * 16.0 * 4.0 / 9.0;
        assert!((b.vector - exact).abs() < 1e-12, "{}", b.vector);
    }

    #[test]
    fn eoc_examples() {
        assert_eq!(eoc(&[1.0, 0.5], &[1.0, 0.5]).unwrap(), vec![1.0]);
        assert_eq!(eoc(&[1.0, 0.25], &[1.0, 0.5]).unwrap(), vec![2.0]);
        assert!(matches!(eoc(&[1.0, 0.0], &[1.0, 0.5]), Err(NormError::NonPositiveError { index: 1, .. })));
        assert!(matches!(eoc(&[1.0, 0.5], &[0.5, 1.0]), Err(NormError::NotDecreasing)));
    }

    #[test]
    fn exact_exponential_fit() {
        let ps: Vec<usize> = (0..6).collect();
        let e: Vec<f64> = ps.iter().map(|&p| (-2.0 * p as f64).exp()).collect();
        let fit = p_decay_fit(&e, &ps, DecayMode::Bounded).unwrap();
        assert!((fit.rate - 2.0).abs() < 1e-12);
        assert!(fit.residual < 1e-12 && (fit.r_squared - 1.0).abs() < 1e-12);
        assert!(matches!(p_decay_fit(&e[..2], &ps[..2], DecayMode::Bounded), Err(NormError::TooFewPoints { .. })));
    }

    #[test]
    fn unbounded_fit_tends_to_unit_rate() {
        // log e = 0.5 log p - sqrt p; the log term flattens as p grows
        let ps: Vec<usize> = (9..=400).step_by(7).collect();
        let e: Vec<f64> = ps.iter().map(|&p| (p as f64).sqrt() * (-(p as f64).sqrt()).exp()).collect();
        let fit = p_decay_fit(&e, &ps, DecayMode::Unbounded).unwrap();
        assert!((fit.rate - 1.0).abs() < 0.25, "{}", fit.rate);
        assert!(fit.r_squared > 0.99);
    }
}
