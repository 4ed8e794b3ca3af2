//! Experiment configuration (TOML).
//!
//! Every key is optional. Example:
//!
//! ```toml
//! problem = "section6-gaussian"
//! n = 16
//! k = 2
//! p = [4, 4]
//! levels = [8, 16, 32]
//! p_sweep = [0, 1, 2, 3, 4, 5]
//!
//! [reference]
//! n = 64
//! k = 3
//! p = [6, 6]
//!
//! [solver]
//! kind = "cholesky"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sndc_core::assembly::{AssemblyOptions, BoundaryPenalty, QuadratureSettings, SolverKind, SolverOptions};
use sndc_core::coefficients::{DensityFamily, ParametricProblem};
use sndc_core::fem::SUPPORTED_DEGREES;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown problem `{0}` (expected section6-uniform, section6-gaussian or manufactured-identity)")]
    UnknownProblem(String),
    #[error("unknown distribution `{0}` (expected uniform or gaussian)")]
    UnknownDistribution(String),
    #[error("distribution `{distribution}` conflicts with problem `{problem}`")]
    DistributionConflict { problem: String, distribution: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    pub n: usize,
    pub k: usize,
    pub p: Vec<usize>,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self { n: 64, k: 3, p: vec![6, 6] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverChoice {
    Cholesky,
    Cg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub kind: SolverChoice,
    pub cg_tolerance: f64,
    pub cg_max_iter_factor: usize,
    pub residual_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            kind: SolverChoice::Cholesky,
            cg_tolerance: d.cg_tolerance,
            cg_max_iter_factor: d.cg_max_iter_factor,
            residual_tolerance: d.residual_tolerance,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    pub volume_degree: Option<usize>,
    pub edge_degree: Option<usize>,
    /// Rule degree for errors against closed-form solutions; default `2k + 8`.
    pub exact_error_degree: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    /// Points per axis of the spatial sample grid.
    pub x_samples: usize,
    /// Points per parameter dimension.
    pub y_samples: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self { x_samples: 101, y_samples: 33 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: String,
    pub distribution: Option<String>,
    /// Subdivisions per axis for `solve` and `p-study`.
    pub n: usize,
    pub k: usize,
    pub p: Vec<usize>,
    /// Subdivisions per axis for `h-study`, coarse to fine.
    pub levels: Vec<usize>,
    /// Degrees of the first parameter dimension for `p-study`.
    pub p_sweep: Vec<usize>,
    /// Degree of the other dimensions in `p-study`; defaults to the
    /// reference degree of the second dimension.
    pub p_pinned: Option<usize>,
    pub reference: ReferenceConfig,
    pub solver: SolverConfig,
    pub quadrature: QuadratureConfig,
    /// `false` drops the boundary terms (continuous functional).
    pub boundary_penalty: bool,
    pub check: CheckConfig,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
    /// Write wall-clock seconds to the CSV files. Off gives byte-identical
    /// reruns.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: "section6-uniform".into(),
            distribution: None,
            n: 16,
            k: 2,
            p: vec![4, 4],
            levels: vec![8, 16, 32],
            p_sweep: (0..=5).collect(),
            p_pinned: None,
            reference: ReferenceConfig::default(),
            solver: SolverConfig::default(),
            quadrature: QuadratureConfig::default(),
            boundary_penalty: true,
            check: CheckConfig::default(),
            output_dir: PathBuf::from("sndc-out"),
            threads: 0,
            record_timing: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        Self::from_toml(&text)
    }

    /// The selected built-in problem with the configured distribution applied.
    pub fn problem(&self) -> Result<ParametricProblem, ConfigError> {
        let mut problem = ParametricProblem::builtin(&self.problem)
            .ok_or_else(|| ConfigError::UnknownProblem(self.problem.clone()))?;
        if let Some(d) = &self.distribution {
            let family = match d.as_str() {
                "uniform" => DensityFamily::LegendreUniform,
                "gaussian" => DensityFamily::HermiteNormal,
                other => return Err(ConfigError::UnknownDistribution(other.into())),
            };
            if problem.name.starts_with("section6") {
                if problem.dims.iter().any(|f| *f != family) {
                    return Err(ConfigError::DistributionConflict {
                        problem: self.problem.clone(),
                        distribution: d.clone(),
                    });
                }
            } else {
                problem.dims = vec![family; problem.dims.len()];
            }
        }
        Ok(problem)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let problem = self.problem()?;
        let dims = problem.num_dims();
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        for (what, k) in [("k", self.k), ("reference.k", self.reference.k)] {
            if !SUPPORTED_DEGREES.contains(&k) {
                return invalid(format!("{what} = {k} is not supported (1..=4)"));
            }
        }
        if self.n == 0 || self.reference.n == 0 || self.levels.contains(&0) {
            return invalid("mesh subdivisions must be positive".into());
        }
        for (what, p) in [("p", &self.p), ("reference.p", &self.reference.p)] {
            if p.len() != dims {
                return invalid(format!("{what} has {} entries, problem has {dims} parameter dimensions", p.len()));
            }
            if p.iter().any(|&v| v >= 64) {
                return invalid(format!("{what} entries must be below 64"));
            }
        }
        if self.p_sweep.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("p_sweep must be strictly increasing".into());
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("levels must be strictly increasing".into());
        }
        if self.reference.k < self.k {
            return invalid("reference.k must be at least k".into());
        }
        if self.reference.p.iter().zip(&self.p).any(|(r, p)| r < p) {
            return invalid("reference.p must dominate p componentwise".into());
        }
        if self.check.x_samples < 2 || self.check.y_samples < 3 {
            return invalid("check needs at least 2 x samples and 3 y samples per axis".into());
        }
        if self.solver.cg_tolerance <= 0.0 || self.solver.residual_tolerance <= 0.0 {
            return invalid("solver tolerances must be positive".into());
        }
        Ok(())
    }

    pub fn pinned_degree(&self) -> usize {
        self.p_pinned.unwrap_or_else(|| self.reference.p.get(1).copied().unwrap_or(self.reference.p[0]))
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            kind: match self.solver.kind {
                SolverChoice::Cholesky => SolverKind::Cholesky,
                SolverChoice::Cg => SolverKind::ConjugateGradient,
            },
            cg_tolerance: self.solver.cg_tolerance,
            cg_max_iter_factor: self.solver.cg_max_iter_factor,
            residual_tolerance: self.solver.residual_tolerance,
        }
    }

    pub fn assembly_options(&self) -> AssemblyOptions {
        AssemblyOptions {
            penalty: if self.boundary_penalty { BoundaryPenalty::MeshDependent } else { BoundaryPenalty::None },
        }
    }

    pub fn quadrature_settings(&self) -> QuadratureSettings {
        QuadratureSettings { volume_degree: self.quadrature.volume_degree, edge_degree: self.quadrature.edge_degree }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_desk_scale() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!((c.n, c.k, c.p.clone()), (16, 2, vec![4, 4]));
        assert_eq!(c.reference, ReferenceConfig { n: 64, k: 3, p: vec![6, 6] });
        assert_eq!(c.pinned_degree(), 6);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(ExperimentConfig::from_toml("k = 7"), Err(ConfigError::Invalid(_))));
        assert!(matches!(ExperimentConfig::from_toml("unknown_key = 1"), Err(ConfigError::Parse(_))));
        assert!(matches!(ExperimentConfig::from_toml("problem = \"x\""), Err(ConfigError::UnknownProblem(_))));
        assert!(matches!(
            ExperimentConfig::from_toml("distribution = \"gaussian\""),
            Err(ConfigError::DistributionConflict { .. })
        ));
        assert!(matches!(ExperimentConfig::from_toml("p = [1, 2, 3]"), Err(ConfigError::Invalid(_))));
        assert!(ExperimentConfig::from_toml("levels = [16, 8]").is_err());
    }

    #[test]
    fn distribution_applies_to_manufactured_problem() {
        let c =
            ExperimentConfig::from_toml("problem = \"manufactured-identity\"\ndistribution = \"gaussian\"").unwrap();
        assert!(c.problem().unwrap().dims.iter().all(|f| *f == DensityFamily::HermiteNormal));
    }
}
