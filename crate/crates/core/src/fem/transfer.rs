//! Embedding of coarse finite element functions into a nested fine space.

use super::space::{DiscreteFieldPair, FeSpacePair};
use super::FemError;
use crate::mesh::{Point, SimplicialMesh};

const INSIDE_TOL: f64 = 1e-10;

/// Exact prolongation from a coarse space to a space on a nested mesh of
/// equal or higher degree: every fine node takes the value of the coarse
/// piecewise polynomial at its location.
#[derive(Debug, Clone)]
pub struct Prolongation {
    rows: Vec<Vec<(usize, f64)>>,
    fine_boundary: Vec<bool>,
}

struct CellLocator<'a> {
    space: &'a FeSpacePair,
    origin: Point,
    cell_size: [f64; 2],
    n: usize,
    buckets: Vec<Vec<usize>>,
}

impl<'a> CellLocator<'a> {
    fn new(mesh: &SimplicialMesh, space: &'a FeSpacePair) -> Self {
        let bbox = mesh.bounding_box();
        let n = ((mesh.num_cells() as f64).sqrt().ceil() as usize).max(1);
        let cell_size = [(bbox.x1 - bbox.x0) / n as f64, (bbox.y1 - bbox.y0) / n as f64];
        let origin = [bbox.x0, bbox.y0];
        let mut buckets = vec![Vec::new(); n * n];
        let clamp = |v: f64| (v.max(0.0) as usize).min(n - 1);
        for c in 0..mesh.num_cells() {
            let pts = mesh.cell_points(c);
            let lo = [0, 1].map(|d| pts.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min));
            let hi = [0, 1].map(|d| pts.iter().map(|p| p[d]).fold(f64::NEG_INFINITY, f64::max));
            let i0 = clamp((lo[0] - origin[0]) / cell_size[0] - 1e-9);
            let i1 = clamp((hi[0] - origin[0]) / cell_size[0] + 1e-9);
            let j0 = clamp((lo[1] - origin[1]) / cell_size[1] - 1e-9);
            let j1 = clamp((hi[1] - origin[1]) / cell_size[1] + 1e-9);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * n + i].push(c);
                }
            }
        }
        Self { space, origin, cell_size, n, buckets }
    }

    /// Cell containing `x` (largest minimal barycentric coordinate among
    /// candidates), if any.
    fn locate(&self, x: Point) -> Option<usize> {
        let clamp = |v: f64| (v.max(0.0) as usize).min(self.n - 1);
        let i = clamp((x[0] - self.origin[0]) / self.cell_size[0]);
        let j = clamp((x[1] - self.origin[1]) / self.cell_size[1]);
        let mut best: Option<(usize, f64)> = None;
        for &c in &self.buckets[j * self.n + i] {
            let lam = self.space.barycentric(c, x);
            let m = lam.iter().cloned().fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((c, m));
            }
        }
        best.filter(|&(_, m)| m >= -INSIDE_TOL).map(|(c, _)| c)
    }
}

impl Prolongation {
    pub fn new(
        coarse_mesh: &SimplicialMesh,
        coarse: &FeSpacePair,
        fine_mesh: &SimplicialMesh,
        fine: &FeSpacePair,
    ) -> Result<Self, FemError> {
        if coarse.degree() > fine.degree() {
            return Err(FemError::DegreeMismatch { coarse: coarse.degree(), fine: fine.degree() });
        }
        let (a, b) = (coarse_mesh.bounding_box(), fine_mesh.bounding_box());
        let scale = (a.x1 - a.x0).abs().max((a.y1 - a.y0).abs());
        let close = |u: f64, v: f64| (u - v).abs() <= 1e-10 * scale;
        if !(close(a.x0, b.x0) && close(a.x1, b.x1) && close(a.y0, b.y0) && close(a.y1, b.y1))
            || (coarse_mesh.total_area() - fine_mesh.total_area()).abs() > 1e-10 * coarse_mesh.total_area()
        {
            return Err(FemError::DomainMismatch);
        }

        let locator = CellLocator::new(coarse_mesh, coarse);
        let basis = coarse.basis();
        let mut values = vec![0.0; basis.len()];
        let mut rows: Vec<Option<Vec<(usize, f64)>>> = vec![None; fine.num_nodes()];
        for fc in 0..fine_mesh.num_cells() {
            let pts = fine_mesh.cell_points(fc);
            let centroid = [(pts[0][0] + pts[1][0] + pts[2][0]) / 3.0, (pts[0][1] + pts[1][1] + pts[2][1]) / 3.0];
            let cc = locator.locate(centroid).ok_or(FemError::NotNested(fc))?;
            for p in pts {
                let lam = coarse.barycentric(cc, p);
                if lam.iter().any(|&l| l < -INSIDE_TOL) {
                    return Err(FemError::NotNested(fc));
                }
            }
            let coarse_nodes = coarse.cell_nodes(cc);
            for &node in fine.cell_nodes(fc) {
                if rows[node].is_some() {
                    continue;
                }
                let lam = coarse.barycentric(cc, fine.nodes()[node]);
                basis.values([lam[1], lam[2]], &mut values);
                let row = coarse_nodes.iter().zip(&values).filter(|(_, &w)| w != 0.0).map(|(&n, &w)| (n, w)).collect();
                rows[node] = Some(row);
            }
        }
        let fine_boundary = (0..fine.num_nodes()).map(|n| fine.is_boundary_node(n)).collect();
        Ok(Self { rows: rows.into_iter().map(|r| r.unwrap_or_default()).collect(), fine_boundary })
    }

    pub fn apply(&self, coarse: &DiscreteFieldPair) -> DiscreteFieldPair {
        let mut u = Vec::with_capacity(self.rows.len());
        let mut g = Vec::with_capacity(2 * self.rows.len());
        for (row, &bnd) in self.rows.iter().zip(&self.fine_boundary) {
            let mut s = 0.0;
            let mut v = [0.0; 2];
            for &(n, w) in row {
                s += w * coarse.u[n];
                v[0] += w * coarse.g[2 * n];
                v[1] += w * coarse.g[2 * n + 1];
            }
            u.push(if bnd { 0.0 } else { s });
            g.extend(v);
        }
        DiscreteFieldPair { u, g }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Rectangle;

    #[test]
    fn embeds_polynomials_exactly() {
        let coarse_mesh = SimplicialMesh::structured(Rectangle::reference_square(), 2).unwrap();
        let fine_mesh = SimplicialMesh::structured(Rectangle::reference_square(), 8).unwrap();
        let coarse = FeSpacePair::new(&coarse_mesh, 2).unwrap();
        let fine = FeSpacePair::new(&fine_mesh, 3).unwrap();
        let p = Prolongation::new(&coarse_mesh, &coarse, &fine_mesh, &fine).unwrap();
        let quad = |x: Point| x[0] * x[1] + 0.5 * x[0] - x[1] * x[1];
        let vec = |x: Point| [x[0] * x[1] + 0.5, x[1] * x[1] - x[0]];
        let field = DiscreteFieldPair { u: coarse.interpolate_scalar(quad), g: coarse.interpolate_vector(vec) };
        let out = p.apply(&field);
        let expected_g = fine.interpolate_vector(vec);
        // scalar oracle: evaluate the coarse piecewise polynomial by scanning every coarse cell
        let mut values = vec![0.0; coarse.basis().len()];
        for (node, &x) in fine.nodes().iter().enumerate() {
            let cell =
                (0..coarse.num_cells()).find(|&c| coarse.barycentric(c, x).iter().all(|&l| l >= -1e-12)).unwrap();
            let lam = coarse.barycentric(cell, x);
            coarse.basis().values([lam[1], lam[2]], &mut values);
            let v: f64 = coarse.cell_nodes(cell).iter().zip(&values).map(|(&n, w)| w * field.u[n]).sum();
            let expected = if fine.is_boundary_node(node) { 0.0 } else { v };
            assert!((out.u[node] - expected).abs() < 1e-13, "{} {}", out.u[node], expected);
        }
        for (a, b) in out.g.iter().zip(&expected_g) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_bad_pairs() {
        let sq = Rectangle::reference_square();
        let m2 = SimplicialMesh::structured(sq, 2).unwrap();
        let m3 = SimplicialMesh::structured(sq, 3).unwrap();
        let s2 = FeSpacePair::new(&m2, 1).unwrap();
        let s3 = FeSpacePair::new(&m3, 1).unwrap();
        assert!(matches!(Prolongation::new(&m2, &s2, &m3, &s3), Err(FemError::NotNested(_))));

        let other = SimplicialMesh::structured(Rectangle::new(0.0, 1.0, 0.0, 1.0), 4).unwrap();
        let so = FeSpacePair::new(&other, 1).unwrap();
        assert!(matches!(Prolongation::new(&m2, &s2, &other, &so), Err(FemError::DomainMismatch)));

        let s2k2 = FeSpacePair::new(&m2, 2).unwrap();
        let m4 = m2.refine_uniform();
        let s4 = FeSpacePair::new(&m4, 1).unwrap();
        assert!(matches!(Prolongation::new(&m2, &s2k2, &m4, &s4), Err(FemError::DegreeMismatch { .. })));
    }
}
