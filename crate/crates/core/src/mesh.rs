//! Conforming triangulations of planar polygonal domains.
//!
//! Meshes are immutable once built. Boundary edges are derived from the cell
//! list and carry the geometric data needed by boundary penalty terms: the
//! diameter of the owning cell, the outward unit normal and the unit tangent.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use thiserror::Error;

pub type Point = [f64; 2];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("degenerate rectangle [{x0}, {x1}] x [{y0}, {y1}]")]
    DegenerateDomain { x0: f64, x1: f64, y0: f64, y1: f64 },
    #[error("number of subdivisions must be at least 1")]
    NoSubdivisions,
    #[error("cell {cell} references vertex {vertex}, but only {count} vertices exist")]
    VertexOutOfRange { cell: usize, vertex: usize, count: usize },
    #[error("cell {0} has zero area")]
    DegenerateCell(usize),
    #[error("edge ({0}, {1}) is shared by more than two cells")]
    NonManifoldEdge(usize, usize),
    #[error("mesh has no cells")]
    Empty,
    #[error("malformed mesh file at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rectangle {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rectangle {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    /// The square `(-1, 1)^2`.
    pub fn reference_square() -> Self {
        Self::new(-1.0, 1.0, -1.0, 1.0)
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * ((self.x1 - self.x0) + (self.y1 - self.y0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    /// Endpoints ordered counter-clockwise with respect to the owning cell.
    pub vertices: [usize; 2],
    pub cell: usize,
    /// Index of the cell vertex opposite to this edge.
    pub opposite_local: usize,
    pub length: f64,
    /// Diameter of the owning cell.
    pub cell_diameter: f64,
    pub normal: Point,
    pub tangent: Point,
}

#[derive(Debug, Clone)]
pub struct SimplicialMesh {
    vertices: Vec<Point>,
    cells: Vec<[usize; 3]>,
    cell_diameters: Vec<f64>,
    boundary: Vec<BoundaryEdge>,
    h: f64,
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    let e1 = sub(b, a);
    let e2 = sub(c, a);
    0.5 * (e1[0] * e2[1] - e1[1] * e2[0])
}

impl SimplicialMesh {
    /// Uniform triangulation of a rectangle with `n` squares per axis, each
    /// split along the diagonal from its lower-left to its upper-right corner.
    pub fn structured(domain: Rectangle, n: usize) -> Result<Self, MeshError> {
        let Rectangle { x0, x1, y0, y1 } = domain;
        if !(x1 - x0 > 0.0 && y1 - y0 > 0.0) {
            return Err(MeshError::DegenerateDomain { x0, x1, y0, y1 });
        }
        if n == 0 {
            return Err(MeshError::NoSubdivisions);
        }
        let nf = n as f64;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            // interpolate between the endpoints so the corners are reproduced exactly
            let ty = j as f64 / nf;
            let y = if j == n { y1 } else { y0 + (y1 - y0) * ty };
            for i in 0..=n {
                let tx = i as f64 / nf;
                let x = if i == n { x1 } else { x0 + (x1 - x0) * tx };
                vertices.push([x, y]);
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut cells = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                cells.push([a, b, c]);
                cells.push([a, c, d]);
            }
        }
        Self::from_parts(vertices, cells)
    }

    /// Builds a mesh from raw vertex and cell lists. Cells are reoriented
    /// counter-clockwise where needed.
    pub fn from_parts(vertices: Vec<Point>, mut cells: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if cells.is_empty() {
            return Err(MeshError::Empty);
        }
        let count = vertices.len();
        for (c, cell) in cells.iter_mut().enumerate() {
            if let Some(&v) = cell.iter().find(|&&v| v >= count) {
                return Err(MeshError::VertexOutOfRange { cell: c, vertex: v, count });
            }
            let area = signed_area(vertices[cell[0]], vertices[cell[1]], vertices[cell[2]]);
            if area == 0.0 || !area.is_finite() {
                return Err(MeshError::DegenerateCell(c));
            }
            if area < 0.0 {
                cell.swap(1, 2);
            }
        }

        let cell_diameters: Vec<f64> = cells
            .iter()
            .map(|c| {
                let [a, b, d] = c.map(|v| vertices[v]);
                norm(sub(a, b)).max(norm(sub(b, d))).max(norm(sub(d, a)))
            })
            .collect();
        let h = cell_diameters.iter().cloned().fold(0.0, f64::max);

        // local edge `e` is opposite to local vertex `e`
        let mut edge_cells: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        let mut edge_order = Vec::new();
        for (c, cell) in cells.iter().enumerate() {
            for e in 0..3 {
                let a = cell[(e + 1) % 3];
                let b = cell[(e + 2) % 3];
                let key = (a.min(b), a.max(b));
                let entry = edge_cells.entry(key).or_default();
                if entry.is_empty() {
                    edge_order.push(key);
                }
                entry.push((c, e));
                if entry.len() > 2 {
                    return Err(MeshError::NonManifoldEdge(key.0, key.1));
                }
            }
        }

        let mut boundary = Vec::new();
        for key in edge_order {
            let owners = &edge_cells[&key];
            if owners.len() != 1 {
                continue;
            }
            let (c, e) = owners[0];
            let a = cells[c][(e + 1) % 3];
            let b = cells[c][(e + 2) % 3];
            let d = sub(vertices[b], vertices[a]);
            let length = norm(d);
            let tangent = [d[0] / length, d[1] / length];
            // clockwise rotation of the tangent points out of a ccw cell
            let normal = [tangent[1], -tangent[0]];
            boundary.push(BoundaryEdge {
                vertices: [a, b],
                cell: c,
                opposite_local: e,
                length,
                cell_diameter: cell_diameters[c],
                normal,
                tangent,
            });
        }

        Ok(Self { vertices, cells, cell_diameters, boundary, h })
    }

    /// Red refinement: every cell is split into four congruent children
    /// through its edge midpoints. Parent vertices keep their indices.
    pub fn refine_uniform(&self) -> Self {
        let mut vertices = self.vertices.clone();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let (p, q) = (vertices[a], vertices[b]);
                vertices.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                vertices.len() - 1
            })
        };
        let mut cells = Vec::with_capacity(4 * self.cells.len());
        for &[a, b, c] in &self.cells {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            cells.push([a, ab, ca]);
            cells.push([ab, b, bc]);
            cells.push([ca, bc, c]);
            cells.push([ab, bc, ca]);
        }
        Self::from_parts(vertices, cells).expect("refinement of a valid mesh is valid")
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_points(&self, cell: usize) -> [Point; 3] {
        self.cells[cell].map(|v| self.vertices[v])
    }

    pub fn cell_diameter(&self, cell: usize) -> f64 {
        self.cell_diameters[cell]
    }

    pub fn cell_area(&self, cell: usize) -> f64 {
        let [a, b, c] = self.cell_points(cell);
        signed_area(a, b, c)
    }

    /// Maximum cell diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn total_area(&self) -> f64 {
        (0..self.cells.len()).map(|c| self.cell_area(c)).sum()
    }

    /// Axis-aligned bounding box of the vertex set.
    pub fn bounding_box(&self) -> Rectangle {
        let mut r = Rectangle::new(f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            r.x0 = r.x0.min(p[0]);
            r.x1 = r.x1.max(p[0]);
            r.y0 = r.y0.min(p[1]);
            r.y1 = r.y1.max(p[1]);
        }
        r
    }

    /// Writes the `sndc-mesh 1` ASCII format. Coordinates use the shortest
    /// representation that parses back to the same bits.
    pub fn write_ascii<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "sndc-mesh 1")?;
        writeln!(out, "V {}", self.vertices.len())?;
        for p in &self.vertices {
            writeln!(out, "{:e} {:e}", p[0], p[1])?;
        }
        writeln!(out, "C {}", self.cells.len())?;
        for c in &self.cells {
            writeln!(out, "{} {} {}", c[0], c[1], c[2])?;
        }
        Ok(())
    }

    pub fn read_ascii<R: BufRead>(input: R) -> Result<Self, MeshError> {
        let mut lines = input
            .lines()
            .enumerate()
            .map(|(i, l)| l.map(|l| (i + 1, l)))
            .filter(|r| r.as_ref().map_or(true, |(_, l)| !l.trim().is_empty()));
        let mut next = |what: &str| -> Result<(usize, String), MeshError> {
            match lines.next() {
                Some(r) => Ok(r?),
                None => Err(MeshError::Parse { line: 0, message: format!("unexpected end of file, expected {what}") }),
            }
        };
        let parse_err = |line: usize, message: String| MeshError::Parse { line, message };

        let (line, header) = next("header")?;
        if header.trim() != "sndc-mesh 1" {
            return Err(parse_err(line, format!("bad header {header:?}")));
        }
        let count = |tag: &str, (line, text): (usize, String)| -> Result<usize, MeshError> {
            let mut it = text.split_whitespace();
            match (it.next(), it.next().map(str::parse::<usize>), it.next()) {
                (Some(t), Some(Ok(n)), None) if t == tag => Ok(n),
                _ => Err(parse_err(line, format!("expected `{tag} <count>`, found {text:?}"))),
            }
        };

        let nv = count("V", next("vertex count")?)?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (line, text) = next("vertex")?;
            let xs: Vec<f64> = text
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| parse_err(line, format!("{e}")))?;
            if xs.len() != 2 {
                return Err(parse_err(line, "expected two coordinates".into()));
            }
            vertices.push([xs[0], xs[1]]);
        }
        let nc = count("C", next("cell count")?)?;
        let mut cells = Vec::with_capacity(nc);
        for _ in 0..nc {
            let (line, text) = next("cell")?;
            let ids: Vec<usize> = text
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| parse_err(line, format!("{e}")))?;
            if ids.len() != 3 {
                return Err(parse_err(line, "expected three vertex indices".into()));
            }
            cells.push([ids[0], ids[1], ids[2]]);
        }
        Self::from_parts(vertices, cells)
    }
}
