use std::collections::HashMap;
use std::collections::HashSet;

use super::basis::{LagrangeBasis, REFERENCE_VERTICES};
use super::quadrature::{EdgeRule, TriangleRule};
use super::FemError;
use crate::mesh::{Point, SimplicialMesh};

/// Supported polynomial degrees.
pub const SUPPORTED_DEGREES: std::ops::RangeInclusive<usize> = 1..=4;

/// Affine map from the reference triangle onto a mesh cell.
#[derive(Debug, Clone, Copy)]
pub struct CellMap {
    pub origin: Point,
    /// Columns are the edge vectors `v1 - v0` and `v2 - v0`.
    pub jacobian: [[f64; 2]; 2],
    /// `J^{-T}`, mapping reference gradients to physical gradients.
    pub inverse_transpose: [[f64; 2]; 2],
    pub det: f64,
}

impl CellMap {
    pub fn new(points: [Point; 3]) -> Option<Self> {
        let [a, b, c] = points;
        let j = [[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let scale = (j[0][0].abs() + j[0][1].abs()).max(j[1][0].abs() + j[1][1].abs());
        if !det.is_finite() || det.abs() <= 1e-14 * scale * scale {
            return None;
        }
        let inverse_transpose = [[j[1][1] / det, -j[1][0] / det], [-j[0][1] / det, j[0][0] / det]];
        Some(Self { origin: a, jacobian: j, inverse_transpose, det })
    }

    pub fn to_physical(&self, xi: [f64; 2]) -> Point {
        let j = &self.jacobian;
        [self.origin[0] + j[0][0] * xi[0] + j[0][1] * xi[1], self.origin[1] + j[1][0] * xi[0] + j[1][1] * xi[1]]
    }

    pub fn to_reference(&self, x: Point) -> [f64; 2] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        let it = &self.inverse_transpose;
        // J^{-1} = (J^{-T})^T
        [it[0][0] * d[0] + it[1][0] * d[1], it[0][1] * d[0] + it[1][1] * d[1]]
    }

    pub fn gradient(&self, reference: [f64; 2]) -> [f64; 2] {
        let it = &self.inverse_transpose;
        [it[0][0] * reference[0] + it[0][1] * reference[1], it[1][0] * reference[0] + it[1][1] * reference[1]]
    }
}

/// Basis values and reference gradients at the points of a reference rule.
#[derive(Debug, Clone)]
pub struct ReferenceTable {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub n_basis: usize,
    /// `values[q * n_basis + i]`
    pub values: Vec<f64>,
    pub gradients: Vec<[f64; 2]>,
}

impl ReferenceTable {
    pub fn new(basis: &LagrangeBasis, points: Vec<[f64; 2]>, weights: Vec<f64>) -> Self {
        let n = basis.len();
        let mut values = vec![0.0; points.len() * n];
        let mut gradients = vec![[0.0; 2]; points.len() * n];
        for (q, &p) in points.iter().enumerate() {
            basis.values(p, &mut values[q * n..(q + 1) * n]);
            basis.gradients(p, &mut gradients[q * n..(q + 1) * n]);
        }
        Self { points, weights, n_basis: n, values, gradients }
    }

    pub fn for_triangle(basis: &LagrangeBasis, rule: &TriangleRule) -> Self {
        Self::new(basis, rule.points.clone(), rule.weights.clone())
    }

    /// Table on local edge `opposite` (the edge not containing that local
    /// vertex), traversed counter-clockwise. Weights are for the unit interval.
    pub fn for_edge(basis: &LagrangeBasis, rule: &EdgeRule, opposite: usize) -> Self {
        let a = REFERENCE_VERTICES[(opposite + 1) % 3];
        let b = REFERENCE_VERTICES[(opposite + 2) % 3];
        let points = rule.points.iter().map(|&s| [(1.0 - s) * a[0] + s * b[0], (1.0 - s) * a[1] + s * b[1]]).collect();
        Self::new(basis, points, rule.weights.clone())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn values_at(&self, q: usize) -> &[f64] {
        &self.values[q * self.n_basis..(q + 1) * self.n_basis]
    }

    pub fn gradients_at(&self, q: usize) -> &[[f64; 2]] {
        &self.gradients[q * self.n_basis..(q + 1) * self.n_basis]
    }
}

/// Basis data mapped onto one physical cell.
#[derive(Debug, Clone)]
pub struct CellTabulation {
    pub points: Vec<Point>,
    /// Physical quadrature weights (reference weight times `|det J|`).
    pub weights: Vec<f64>,
    pub n_basis: usize,
    pub values: Vec<f64>,
    pub gradients: Vec<[f64; 2]>,
}

impl CellTabulation {
    pub fn values_at(&self, q: usize) -> &[f64] {
        &self.values[q * self.n_basis..(q + 1) * self.n_basis]
    }

    pub fn gradients_at(&self, q: usize) -> &[[f64; 2]] {
        &self.gradients[q * self.n_basis..(q + 1) * self.n_basis]
    }
}

impl ReferenceTable {
    pub fn map_to(&self, map: &CellMap) -> CellTabulation {
        CellTabulation {
            points: self.points.iter().map(|&p| map.to_physical(p)).collect(),
            weights: self.weights.iter().map(|w| w * map.det.abs()).collect(),
            n_basis: self.n_basis,
            values: self.values.clone(),
            gradients: self.gradients.iter().map(|&g| map.gradient(g)).collect(),
        }
    }
}

/// Continuous P_k scalar space `U` (zero boundary trace) and vector space
/// `G = P_k^2` (unconstrained), sharing one lattice of nodes.
///
/// The mixed unknown vector is laid out as `[u_free; g]`, where `g` stores
/// the two components of every node interleaved.
#[derive(Debug, Clone)]
pub struct FeSpacePair {
    basis: LagrangeBasis,
    nodes: Vec<Point>,
    cell_nodes: Vec<usize>,
    on_boundary: Vec<bool>,
    free_index: Vec<Option<usize>>,
    dim_u: usize,
    maps: Vec<CellMap>,
}

type NodeKey = [(usize, usize); 3];

impl FeSpacePair {
    pub fn new(mesh: &SimplicialMesh, degree: usize) -> Result<Self, FemError> {
        if !SUPPORTED_DEGREES.contains(&degree) {
            return Err(FemError::UnsupportedDegree(degree));
        }
        let basis = LagrangeBasis::new(degree);
        let maps = (0..mesh.num_cells())
            .map(|c| CellMap::new(mesh.cell_points(c)).ok_or(FemError::DegenerateCell(c)))
            .collect::<Result<Vec<_>, _>>()?;

        let boundary_edges: HashSet<(usize, usize)> = mesh
            .boundary_edges()
            .iter()
            .map(|e| (e.vertices[0].min(e.vertices[1]), e.vertices[0].max(e.vertices[1])))
            .collect();
        let boundary_vertices: HashSet<usize> = mesh.boundary_edges().iter().flat_map(|e| e.vertices).collect();

        let k = degree as f64;
        let mut index: HashMap<NodeKey, usize> = HashMap::new();
        let mut nodes = Vec::new();
        let mut on_boundary = Vec::new();
        let mut cell_nodes = Vec::with_capacity(mesh.num_cells() * basis.len());
        for (c, cell) in mesh.cells().iter().enumerate() {
            for a in basis.lattice() {
                let mut key: NodeKey = [(usize::MAX, 0); 3];
                let mut n = 0;
                for l in 0..3 {
                    if a[l] > 0 {
                        key[n] = (cell[l], a[l]);
                        n += 1;
                    }
                }
                key[..n].sort_unstable();
                let id = *index.entry(key).or_insert_with(|| {
                    let pts = mesh.cell_points(c);
                    let mut x = [0.0; 2];
                    for l in 0..3 {
                        x[0] += a[l] as f64 * pts[l][0];
                        x[1] += a[l] as f64 * pts[l][1];
                    }
                    // vertices are reproduced exactly
                    if n == 1 {
                        x = mesh.vertices()[key[0].0];
                    } else {
                        x = [x[0] / k, x[1] / k];
                    }
                    let boundary = match n {
                        1 => boundary_vertices.contains(&key[0].0),
                        2 => boundary_edges.contains(&(key[0].0, key[1].0)),
                        _ => false,
                    };
                    nodes.push(x);
                    on_boundary.push(boundary);
                    nodes.len() - 1
                });
                cell_nodes.push(id);
            }
        }

        let mut dim_u = 0;
        let free_index = on_boundary
            .iter()
            .map(|&b| {
                if b {
                    None
                } else {
                    dim_u += 1;
                    Some(dim_u - 1)
                }
            })
            .collect();
        Ok(Self { basis, nodes, cell_nodes, on_boundary, free_index, dim_u, maps })
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn basis(&self) -> &LagrangeBasis {
        &self.basis
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        self.on_boundary[node]
    }

    pub fn cell_nodes(&self, cell: usize) -> &[usize] {
        let n = self.basis.len();
        &self.cell_nodes[cell * n..(cell + 1) * n]
    }

    pub fn cell_map(&self, cell: usize) -> &CellMap {
        &self.maps[cell]
    }

    pub fn num_cells(&self) -> usize {
        self.maps.len()
    }

    /// Index of a node's scalar dof in the mixed unknown vector, if free.
    pub fn u_dof(&self, node: usize) -> Option<usize> {
        self.free_index[node]
    }

    /// Index of component `c` of a node's vector dof in the mixed unknown vector.
    pub fn g_dof(&self, node: usize, c: usize) -> usize {
        self.dim_u + 2 * node + c
    }

    pub fn dim_u(&self) -> usize {
        self.dim_u
    }

    pub fn dim_g(&self) -> usize {
        2 * self.nodes.len()
    }

    /// `N_{h,k} = dim U + dim G`.
    pub fn dim(&self) -> usize {
        self.dim_u() + self.dim_g()
    }

    /// Physical values and gradients of the local basis of `cell` at the
    /// points of `rule`.
    pub fn tabulate_basis(&self, cell: usize, rule: &TriangleRule) -> CellTabulation {
        ReferenceTable::for_triangle(&self.basis, rule).map_to(&self.maps[cell])
    }

    /// Nodal interpolant `I_U v`, stored on all lattice nodes; constrained
    /// entries are zero.
    pub fn interpolate_scalar<F: Fn(Point) -> f64>(&self, v: F) -> Vec<f64> {
        self.nodes.iter().zip(&self.on_boundary).map(|(&x, &b)| if b { 0.0 } else { v(x) }).collect()
    }

    /// Nodal interpolant `I_G w`, components interleaved per node.
    pub fn interpolate_vector<F: Fn(Point) -> [f64; 2]>(&self, w: F) -> Vec<f64> {
        self.nodes.iter().flat_map(|&x| w(x)).collect()
    }

    /// Barycentric coordinates of `x` with respect to `cell`.
    pub fn barycentric(&self, cell: usize, x: Point) -> [f64; 3] {
        let xi = self.maps[cell].to_reference(x);
        [1.0 - xi[0] - xi[1], xi[0], xi[1]]
    }

    /// Boundary edge rule table for each local edge of the reference cell.
    pub fn edge_tables(&self, rule: &EdgeRule) -> [ReferenceTable; 3] {
        [0, 1, 2].map(|e| ReferenceTable::for_edge(&self.basis, rule, e))
    }
}

/// Coefficients of a pair `(u, g)` in `U x G`, stored per lattice node.
/// Scalar coefficients at constrained nodes are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFieldPair {
    pub u: Vec<f64>,
    pub g: Vec<f64>,
}

impl DiscreteFieldPair {
    pub fn zeros(space: &FeSpacePair) -> Self {
        Self { u: vec![0.0; space.num_nodes()], g: vec![0.0; space.dim_g()] }
    }

    /// Packs into the mixed unknown layout `[u_free; g]`.
    pub fn pack(&self, space: &FeSpacePair) -> Vec<f64> {
        let mut z = vec![0.0; space.dim()];
        for (node, &v) in self.u.iter().enumerate() {
            if let Some(i) = space.u_dof(node) {
                z[i] = v;
            }
        }
        z[space.dim_u()..].copy_from_slice(&self.g);
        z
    }

    pub fn unpack(space: &FeSpacePair, z: &[f64]) -> Self {
        assert_eq!(z.len(), space.dim());
        let u = (0..space.num_nodes()).map(|n| space.u_dof(n).map_or(0.0, |i| z[i])).collect();
        Self { u, g: z[space.dim_u()..].to_vec() }
    }

    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        for (a, b) in self.u.iter_mut().zip(&other.u) {
            *a += alpha * b;
        }
        for (a, b) in self.g.iter_mut().zip(&other.g) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self { u: self.u.iter().map(|v| alpha * v).collect(), g: self.g.iter().map(|v| alpha * v).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }
}
