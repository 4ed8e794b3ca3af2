//! Symmetric positive definite linear solves.
//!
//! The default path is a sparse Cholesky factorization (fill-reducing
//! ordering, supernodal numeric phase) whose symbolic analysis can be shared
//! by all systems with the same pattern. A Jacobi-preconditioned conjugate
//! gradient method is the fallback.

use std::sync::{Arc, Once};

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::linalg::LltError;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};
use thiserror::Error;

use super::sparse::{CsrMatrix, SparsityPattern};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("matrix is not positive definite (non-positive pivot at {index})")]
    NotPositiveDefinite { index: usize },
    #[error("conjugate gradient found direction of non-positive curvature at iteration {iteration}")]
    Indefinite { iteration: usize },
    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("residual {residual:e} exceeds bound {bound:e}")]
    ResidualTooLarge { residual: f64, bound: f64 },
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("dimension mismatch: matrix {matrix}, right-hand side {rhs}")]
    Dimension { matrix: usize, rhs: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Cholesky,
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub kind: SolverKind,
    pub cg_tolerance: f64,
    /// Iteration cap as a multiple of the system size.
    pub cg_max_iter_factor: usize,
    /// Accept `|Mx - b| <= tol (|b| + |M| |x|)`.
    pub residual_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { kind: SolverKind::Cholesky, cg_tolerance: 1e-12, cg_max_iter_factor: 10, residual_tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

static SEQUENTIAL: Once = Once::new();

/// Symbolic Cholesky analysis for one sparsity pattern.
#[derive(Debug, Clone)]
pub struct CholeskyPlan {
    pattern: Arc<SparsityPattern>,
    symbolic: SymbolicLlt<usize>,
}

fn symbolic_view(p: &SparsityPattern) -> SymbolicSparseColMatRef<'_, usize> {
    // a structurally symmetric CSR pattern is its own CSC transpose
    SymbolicSparseColMatRef::new_checked(p.n, p.n, &p.row_ptr, None, &p.col_idx)
}

impl CholeskyPlan {
    pub fn new(pattern: Arc<SparsityPattern>) -> Result<Self, SolveError> {
        // outer loops parallelize over systems; keep each factorization sequential and reproducible
        SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
        let symbolic = SymbolicLlt::try_new(symbolic_view(&pattern), Side::Lower)
            .map_err(|e| SolveError::Factorization(format!("{e:?}")))?;
        Ok(Self { pattern, symbolic })
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    fn factorize(&self, matrix: &CsrMatrix) -> Result<Llt<usize, f64>, SolveError> {
        let view = SparseColMatRef::new(symbolic_view(&matrix.pattern), &matrix.values);
        Llt::try_new_with_symbolic(self.symbolic.clone(), view, Side::Lower).map_err(|e| match e {
            LltError::Numeric(faer::linalg::cholesky::llt::factor::LltError::NonPositivePivot { index }) => {
                SolveError::NotPositiveDefinite { index }
            }
            other => SolveError::Factorization(format!("{other:?}")),
        })
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual(matrix: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = matrix.mul(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    r
}

/// Checks that the matrix admits a Cholesky factorization, i.e. is
/// numerically positive definite.
pub fn certify_positive_definite(matrix: &CsrMatrix, plan: Option<&CholeskyPlan>) -> Result<(), SolveError> {
    let owned;
    let plan = match plan {
        Some(p) if *p.pattern == *matrix.pattern => p,
        _ => {
            owned = CholeskyPlan::new(matrix.pattern.clone())?;
            &owned
        }
    };
    plan.factorize(matrix).map(|_| ())
}

/// Solves `M x = b` for symmetric positive definite `M`.
pub fn solve_spd(
    matrix: &CsrMatrix,
    rhs: &[f64],
    opts: &SolverOptions,
    plan: Option<&CholeskyPlan>,
) -> Result<LinearSolution, SolveError> {
    let n = matrix.n();
    if rhs.len() != n {
        return Err(SolveError::Dimension { matrix: n, rhs: rhs.len() });
    }
    let (mut x, iterations) = match opts.kind {
        SolverKind::Cholesky => {
            let owned;
            let plan = match plan {
                Some(p) if *p.pattern == *matrix.pattern => p,
                _ => {
                    owned = CholeskyPlan::new(matrix.pattern.clone())?;
                    &owned
                }
            };
            let llt = plan.factorize(matrix)?;
            let mut x = rhs.to_vec();
            llt.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
            let bound = opts.residual_tolerance * (norm2(rhs) + matrix.norm_inf() * norm2(&x));
            let r = residual(matrix, &x, rhs);
            if norm2(&r) > bound {
                // one step of iterative refinement
                let mut d = r;
                llt.solve_in_place(MatMut::from_column_major_slice_mut(&mut d, n, 1));
                for (xi, di) in x.iter_mut().zip(&d) {
                    *xi += di;
                }
            }
            (x, 1)
        }
        SolverKind::ConjugateGradient => conjugate_gradient(matrix, rhs, opts)?,
    };
    let res = norm2(&residual(matrix, &x, rhs));
    let bound = opts.residual_tolerance * (norm2(rhs) + matrix.norm_inf() * norm2(&x));
    if res > bound {
        return Err(SolveError::ResidualTooLarge { residual: res, bound });
    }
    if x.iter().any(|v| !v.is_finite()) {
        x.clear();
        return Err(SolveError::Factorization("non-finite solution".into()));
    }
    Ok(LinearSolution { x, residual: res, iterations })
}

fn conjugate_gradient(matrix: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, usize), SolveError> {
    let n = matrix.n();
    let mut x = vec![0.0; n];
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok((x, 0));
    }
    let inv_diag: Vec<f64> = matrix.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    let max_iter = opts.cg_max_iter_factor.max(1) * n;
    for it in 1..=max_iter {
        matrix.matvec(&p, &mut ap);
        let curvature: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(curvature > 0.0) {
            return Err(SolveError::Indefinite { iteration: it });
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm2(&r) <= opts.cg_tolerance * b_norm {
            return Ok((x, it));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(SolveError::NoConvergence { iterations: max_iter, residual: norm2(&r) / b_norm })
}
