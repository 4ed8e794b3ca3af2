//! Gauss rules from three-term recurrences.
//!
//! A measure `mu` is described by the coefficients of its monic orthogonal
//! polynomials, `p_{n+1}(x) = (x - a_n) p_n(x) - b_n p_{n-1}(x)`, with
//! `b_0 = mu(R)`. Nodes come from the eigenvalues of the Jacobi matrix and are
//! then polished by Newton steps on the orthonormal recurrence; weights are the
//! Christoffel numbers `1 / sum_j q_j(x)^2`.

use nalgebra::{DMatrix, SymmetricEigen};

/// Recurrence coefficients `(a_n, b_n)` of the Legendre polynomials for the
/// uniform probability density on `[-1, 1]`.
pub fn legendre_recurrence(n: usize) -> (f64, f64) {
    if n == 0 {
        (0.0, 1.0)
    } else {
        let nf = n as f64;
        (0.0, nf * nf / (4.0 * nf * nf - 1.0))
    }
}

/// Recurrence coefficients of the probabilists' Hermite polynomials for the
/// standard normal density.
pub fn hermite_recurrence(n: usize) -> (f64, f64) {
    if n == 0 {
        (0.0, 1.0)
    } else {
        (0.0, n as f64)
    }
}

/// Evaluates the orthonormal polynomials `q_0..q_{n-1}` at `x` into `out`
/// and returns `(sqrt(b_n) q_n(x), d/dx of the same)`.
fn orthonormal_values<F: Fn(usize) -> (f64, f64)>(rec: &F, n: usize, x: f64, out: &mut [f64]) -> (f64, f64) {
    let (_, b0) = rec(0);
    let mut q_prev = 0.0;
    let mut dq_prev = 0.0;
    let mut q = 1.0 / b0.sqrt();
    let mut dq = 0.0;
    let mut sb_prev = 0.0;
    for j in 0..n {
        out[j] = q;
        let (a, _) = rec(j);
        let next = (x - a) * q - sb_prev * q_prev;
        let dnext = q + (x - a) * dq - sb_prev * dq_prev;
        if j + 1 == n {
            return (next, dnext);
        }
        let sb = rec(j + 1).1.sqrt();
        q_prev = q;
        dq_prev = dq;
        q = next / sb;
        dq = dnext / sb;
        sb_prev = sb;
    }
    unreachable!("n >= 1")
}

/// Nodes (increasing) and weights of the `n`-point Gauss rule for the
/// measure described by `rec`. Weights sum to `b_0`.
pub fn gauss_rule<F: Fn(usize) -> (f64, f64)>(rec: F, n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        jacobi[(i, i)] = rec(i).0;
        if i + 1 < n {
            let off = rec(i + 1).1.sqrt();
            jacobi[(i, i + 1)] = off;
            jacobi[(i + 1, i)] = off;
        }
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.total_cmp(b));

    let mut q = vec![0.0; n];
    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..8 {
            let (p, dp) = orthonormal_values(&rec, n, *x, &mut q);
            if dp == 0.0 {
                break;
            }
            let step = p / dp;
            *x -= step;
            if step.abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
                break;
            }
        }
        orthonormal_values(&rec, n, *x, &mut q);
        weights.push(1.0 / q.iter().map(|v| v * v).sum::<f64>());
    }
    if (0..n).all(|i| rec(i).0 == 0.0) {
        // symmetric measure: enforce exact mirror symmetry
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let x = 0.5 * (nodes[j] - nodes[i]);
            let w = 0.5 * (weights[i] + weights[j]);
            (nodes[i], nodes[j]) = (-x, x);
            (weights[i], weights[j]) = (w, w);
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
    }
    (nodes, weights)
}

/// `n`-point Gauss–Legendre rule on `[0, 1]` for Lebesgue measure.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_rule(legendre_recurrence, n);
    (x.into_iter().map(|x| 0.5 * (x + 1.0)).collect(), w)
}
