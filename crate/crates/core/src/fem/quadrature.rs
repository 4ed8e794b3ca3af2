//! Quadrature on the reference triangle `{(0,0), (1,0), (0,1)}` and on the
//! unit interval.

use super::FemError;
use crate::orthopoly::gauss_legendre_unit;

/// Highest polynomial degree for which rules are generated.
pub const MAX_QUADRATURE_DEGREE: usize = 60;

#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

#[derive(Debug, Clone)]
pub struct EdgeRule {
    /// Points in `[0, 1]`.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl TriangleRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Rule on the reference triangle, exact for polynomials of total degree
/// `degree`. Low degrees use the centroid and three-point rules; higher
/// degrees use a collapsed tensor Gauss–Legendre rule.
pub fn triangle_rule(degree: usize) -> Result<TriangleRule, FemError> {
    if degree > MAX_QUADRATURE_DEGREE {
        return Err(FemError::UnsupportedQuadrature(degree));
    }
    let (points, weights) = match degree {
        0 | 1 => (vec![[1.0 / 3.0, 1.0 / 3.0]], vec![0.5]),
        2 => (vec![[1.0 / 6.0, 1.0 / 6.0], [2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0]], vec![1.0 / 6.0; 3]),
        _ => {
            // (xi, eta) = (u, (1 - u) v); the Jacobian (1 - u) raises the u-degree by one.
            let n = (degree + 3) / 2;
            let (x, w) = gauss_legendre_unit(n);
            let mut points = Vec::with_capacity(n * n);
            let mut weights = Vec::with_capacity(n * n);
            for (u, wu) in x.iter().zip(&w) {
                for (v, wv) in x.iter().zip(&w) {
                    points.push([*u, (1.0 - u) * v]);
                    weights.push(wu * wv * (1.0 - u));
                }
            }
            (points, weights)
        }
    };
    Ok(TriangleRule { points, weights, degree })
}

/// Gauss–Legendre rule on `[0, 1]` exact for polynomials of degree `degree`.
pub fn edge_rule(degree: usize) -> Result<EdgeRule, FemError> {
    if degree > MAX_QUADRATURE_DEGREE {
        return Err(FemError::UnsupportedQuadrature(degree));
    }
    let (points, weights) = gauss_legendre_unit(degree / 2 + 1);
    Ok(EdgeRule { points, weights, degree })
}
