//! Binary solution archive.
//!
//! Layout (all integers u64 little endian, floats f64 little endian):
//!
//! ```text
//! magic "SNDCARCH" | version
//! problem name (len + utf8) | mesh ascii (len + utf8)
//! k | volume degree | edge degree | penalty flag
//! dims | per dim: family name (len + utf8), p
//! nodes | per node: ratio, |u|, u..., |g|, g...
//! sha256 of everything above
//! ```

use std::io::Cursor;
use std::sync::Arc;

use sha2::{Digest, Sha256};
use sndc_core::assembly::{BoundaryPenalty, Discretization, QuadratureSettings};
use sndc_core::coefficients::DensityFamily;
use sndc_core::collocation::{CollocatedSolution, TensorCollocationGrid};
use sndc_core::fem::DiscreteFieldPair;
use sndc_core::mesh::SimplicialMesh;
use thiserror::Error;

const MAGIC: &[u8; 8] = b"SNDCARCH";
pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("not a solution archive")]
    BadMagic,
    #[error("unsupported archive version {0}")]
    Version(u64),
    #[error("archive checksum mismatch")]
    Checksum,
    #[error("archive truncated")]
    Truncated,
    #[error("malformed archive: {0}")]
    Malformed(String),
    #[error("density `{0}` cannot be archived")]
    CustomDensity(String),
    #[error("archive descriptors differ: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything needed to compare two archives without their coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveDescriptor {
    pub problem: String,
    pub mesh_ascii: String,
    pub k: usize,
    pub volume_degree: usize,
    pub edge_degree: usize,
    pub penalty: bool,
    pub families: Vec<String>,
    pub p: Vec<usize>,
}

impl ArchiveDescriptor {
    pub fn ensure_matches(&self, other: &Self) -> Result<(), ArchiveError> {
        let fields = [
            ("problem", self.problem != other.problem),
            ("mesh", self.mesh_ascii != other.mesh_ascii),
            ("k", self.k != other.k),
            ("quadrature", (self.volume_degree, self.edge_degree) != (other.volume_degree, other.edge_degree)),
            ("penalty", self.penalty != other.penalty),
            ("families", self.families != other.families),
            ("p", self.p != other.p),
        ];
        match fields.iter().find(|(_, differs)| *differs) {
            Some((what, _)) => Err(ArchiveError::Mismatch((*what).into())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionArchive {
    pub descriptor: ArchiveDescriptor,
    pub ratios: Vec<f64>,
    pub nodes: Vec<DiscreteFieldPair>,
}

fn mesh_ascii(mesh: &SimplicialMesh) -> String {
    let mut buf = Vec::new();
    mesh.write_ascii(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("mesh ascii is utf8")
}

impl SolutionArchive {
    pub fn from_solution(
        problem: &str,
        solution: &CollocatedSolution,
        penalty: BoundaryPenalty,
    ) -> Result<Self, ArchiveError> {
        let families = solution
            .grid
            .families()
            .iter()
            .map(|f| match f {
                DensityFamily::Custom(c) => Err(ArchiveError::CustomDensity(c.name.clone())),
                other => Ok(other.name().to_string()),
            })
            .collect::<Result<_, _>>()?;
        let disc = &solution.disc;
        Ok(Self {
            descriptor: ArchiveDescriptor {
                problem: problem.into(),
                mesh_ascii: mesh_ascii(disc.mesh()),
                k: disc.degree(),
                volume_degree: disc.volume_degree(),
                edge_degree: disc.edge_degree(),
                penalty: penalty == BoundaryPenalty::MeshDependent,
                families,
                p: solution.grid.degrees(),
            },
            ratios: solution.ratios.clone(),
            nodes: solution.nodes.clone(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let d = &self.descriptor;
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u(FORMAT_VERSION);
        w.s(&d.problem);
        w.s(&d.mesh_ascii);
        for v in [d.k, d.volume_degree, d.edge_degree, d.penalty as usize] {
            w.u(v as u64);
        }
        w.u(d.families.len() as u64);
        for (f, p) in d.families.iter().zip(&d.p) {
            w.s(f);
            w.u(*p as u64);
        }
        w.u(self.nodes.len() as u64);
        for (r, n) in self.ratios.iter().zip(&self.nodes) {
            w.f(*r);
            w.fs(&n.u);
            w.fs(&n.g);
        }
        let digest = Sha256::digest(&w.0);
        w.0.extend_from_slice(&digest);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ArchiveError> {
        if bytes.len() < MAGIC.len() + 32 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(ArchiveError::BadMagic);
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(ArchiveError::Checksum);
        }
        let mut r = Reader(Cursor::new(&body[MAGIC.len()..]));
        let version = r.u()?;
        if version != FORMAT_VERSION {
            return Err(ArchiveError::Version(version));
        }
        let problem = r.s()?;
        let mesh_ascii = r.s()?;
        let k = r.usize()?;
        let volume_degree = r.usize()?;
        let edge_degree = r.usize()?;
        let penalty = r.u()? != 0;
        let dims = r.usize()?;
        let mut families = Vec::new();
        let mut p = Vec::new();
        for _ in 0..dims {
            families.push(r.s()?);
            p.push(r.usize()?);
        }
        let count = r.usize()?;
        let mut ratios = Vec::new();
        let mut nodes = Vec::new();
        for _ in 0..count {
            ratios.push(r.f()?);
            let u = r.fs()?;
            let g = r.fs()?;
            nodes.push(DiscreteFieldPair { u, g });
        }
        if (r.0.position() as usize) != r.0.get_ref().len() {
            return Err(ArchiveError::Malformed("trailing bytes".into()));
        }
        Ok(Self {
            descriptor: ArchiveDescriptor { problem, mesh_ascii, k, volume_degree, edge_degree, penalty, families, p },
            ratios,
            nodes,
        })
    }

    /// Lowercase hex sha256 of the archive bytes' body.
    pub fn checksum_hex(&self) -> String {
        let bytes = self.to_bytes();
        bytes[bytes.len() - 32..].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Rebuilds the mesh, space and grid and checks the coefficient sizes.
    pub fn into_solution(self) -> Result<CollocatedSolution, ArchiveError> {
        let d = &self.descriptor;
        let malformed = |e: &dyn std::fmt::Display| ArchiveError::Malformed(e.to_string());
        let mesh = SimplicialMesh::read_ascii(d.mesh_ascii.as_bytes()).map_err(|e| malformed(&e))?;
        let quad = QuadratureSettings { volume_degree: Some(d.volume_degree), edge_degree: Some(d.edge_degree) };
        let disc = Discretization::new(Arc::new(mesh), d.k, quad).map_err(|e| malformed(&e))?;
        let families = d
            .families
            .iter()
            .map(|f| DensityFamily::from_name(f).ok_or_else(|| ArchiveError::CustomDensity(f.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let grid = TensorCollocationGrid::new(&families, &d.p).map_err(|e| malformed(&e))?;
        let space = disc.space();
        if self.nodes.len() != grid.num_nodes()
            || self.ratios.len() != self.nodes.len()
            || self.nodes.iter().any(|n| n.u.len() != space.num_nodes() || n.g.len() != space.dim_g())
        {
            return Err(ArchiveError::Malformed("coefficient blocks do not match the descriptors".into()));
        }
        Ok(CollocatedSolution { grid, disc: Arc::new(disc), nodes: self.nodes, ratios: self.ratios })
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn s(&mut self, v: &str) {
        self.u(v.len() as u64);
        self.0.extend_from_slice(v.as_bytes());
    }
    fn fs(&mut self, v: &[f64]) {
        self.u(v.len() as u64);
        v.iter().for_each(|x| self.f(*x));
    }
}

struct Reader<'a>(Cursor<&'a [u8]>);

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], ArchiveError> {
        let pos = self.0.position() as usize;
        let data = *self.0.get_ref();
        let end = pos.checked_add(n).filter(|&e| e <= data.len()).ok_or(ArchiveError::Truncated)?;
        self.0.set_position(end as u64);
        Ok(&data[pos..end])
    }
    fn u(&mut self) -> Result<u64, ArchiveError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> Result<usize, ArchiveError> {
        usize::try_from(self.u()?).map_err(|_| ArchiveError::Malformed("length overflow".into()))
    }
    fn f(&mut self) -> Result<f64, ArchiveError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn s(&mut self) -> Result<String, ArchiveError> {
        let n = self.usize()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| ArchiveError::Malformed("invalid utf8".into()))
    }
    fn fs(&mut self) -> Result<Vec<f64>, ArchiveError> {
        let n = self.usize()?;
        let bytes = self.take(n.checked_mul(8).ok_or(ArchiveError::Truncated)?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}
