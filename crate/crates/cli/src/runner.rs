//! Experiment orchestration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use sndc_core::assembly::{AssemblyError, Discretization};
use sndc_core::coefficients::{
    check_assumptions, default_x_samples, default_y_samples, CoefficientError, DensityFamily, EllipticityCordesReport,
    ParametricProblem,
};
use sndc_core::collocation::{collocate_solve, CollocatedSolution, CollocationError, TensorCollocationGrid};
use sndc_core::fem::FemError;
use sndc_core::mesh::{MeshError, SimplicialMesh};
use sndc_core::norms::{
    default_eval_grid, eoc, p_decay_fit, stochastic_error, stochastic_error_exact, DecayFit, DecayMode, ErrorRecord,
    NormError,
};
use thiserror::Error;
use tracing::{info, warn};

use crate::archive::{ArchiveError, SolutionArchive};
use crate::config::{ConfigError, ExperimentConfig};

pub const CSV_HEADER: &str = "study,h,k,p,error,err_u,err_g,err_bnd,seconds";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("assumption check failed: {0}")]
    Assumption(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("study failed: {0}")]
    Study(String),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Assumption(_) => 3,
            Self::Solver(_) => 4,
            Self::Study(_) | Self::Archive(_) | Self::Io { .. } => 1,
        }
    }
}

impl From<CollocationError> for RunError {
    fn from(e: CollocationError) -> Self {
        match e {
            CollocationError::Node { .. } => Self::Solver(e.to_string()),
            other => Self::Config(ConfigError::Invalid(other.to_string())),
        }
    }
}

impl From<AssemblyError> for RunError {
    fn from(e: AssemblyError) -> Self {
        Self::Solver(e.to_string())
    }
}

impl From<FemError> for RunError {
    fn from(e: FemError) -> Self {
        Self::Config(ConfigError::Invalid(e.to_string()))
    }
}

impl From<MeshError> for RunError {
    fn from(e: MeshError) -> Self {
        Self::Config(ConfigError::Invalid(e.to_string()))
    }
}

impl From<NormError> for RunError {
    fn from(e: NormError) -> Self {
        match e {
            NormError::Collocation(c) => c.into(),
            NormError::Fem(f) => f.into(),
            other => Self::Study(other.to_string()),
        }
    }
}

/// The only place output files are written. Each file is staged next to its
/// target and renamed into place.
#[derive(Debug, Clone)]
pub struct OutputWriter {
    dir: PathBuf,
}

impl OutputWriter {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, RunError> {
        let target = self.path(name);
        let io = |source| RunError::Io { path: target.clone(), source };
        std::fs::create_dir_all(&self.dir).map_err(io)?;
        let staged = self.dir.join(format!(".{name}.tmp"));
        std::fs::write(&staged, bytes).map_err(io)?;
        std::fs::rename(&staged, &target).map_err(io)?;
        Ok(target)
    }
}

pub fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, RunError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| RunError::Config(ConfigError::Invalid(format!("thread pool: {e}"))))
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub archive: SolutionArchive,
    pub solution: CollocatedSolution,
    pub path: PathBuf,
    pub checksum: String,
}

#[derive(Debug, Clone)]
pub struct StudyOutput {
    pub records: Vec<ErrorRecord>,
    /// Orders between consecutive levels (h-study only).
    pub eoc: Vec<f64>,
    /// Decay fit (p-study only); `None` when errors are at roundoff.
    pub fit: Option<DecayFit>,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct CheckOutput {
    pub report: EllipticityCordesReport,
    pub csv_path: PathBuf,
}

pub struct Runner {
    cfg: ExperimentConfig,
    problem: ParametricProblem,
    out: OutputWriter,
    force: bool,
}

fn format_p(p: &[usize]) -> String {
    p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("x")
}

fn header_line() -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    format!("# generated at unix time {secs}\n")
}

impl Runner {
    pub fn new(cfg: ExperimentConfig, force: bool) -> Result<Self, RunError> {
        cfg.validate()?;
        let problem = cfg.problem()?;
        let out = OutputWriter::new(cfg.output_dir.clone());
        Ok(Self { cfg, problem, out, force })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn problem(&self) -> &ParametricProblem {
        &self.problem
    }

    pub fn output(&self) -> &OutputWriter {
        &self.out
    }

    fn discretization(&self, n: usize, k: usize) -> Result<Arc<Discretization>, RunError> {
        let mesh = SimplicialMesh::structured(self.problem.domain, n)?;
        Ok(Arc::new(Discretization::new(Arc::new(mesh), k, self.cfg.quadrature_settings())?))
    }

    fn collocate(&self, disc: &Arc<Discretization>, p: &[usize]) -> Result<CollocatedSolution, RunError> {
        let grid = TensorCollocationGrid::new(&self.problem.dims, p)?;
        info!(nodes = grid.num_nodes(), dofs = disc.space().dim(), p = %format_p(p), "collocating");
        Ok(collocate_solve(&self.problem, &grid, disc, &self.cfg.assembly_options(), &self.cfg.solver_options())?)
    }

    fn archive_name(n: usize, k: usize, p: &[usize]) -> String {
        format!("solution-n{n}-k{k}-p{}.sndc", format_p(p))
    }

    fn archive(&self, solution: &CollocatedSolution) -> Result<SolutionArchive, RunError> {
        Ok(SolutionArchive::from_solution(&self.problem.name, solution, self.cfg.assembly_options().penalty)?)
    }

    fn assumption_gate(&self) -> Result<(), RunError> {
        let report = self.assumption_report()?;
        if !report.passed {
            let msg = format!("lambda_est = {:.6}, eps_est = {:.6}", report.lambda_est, report.eps_est);
            if !self.force {
                return Err(RunError::Assumption(msg));
            }
            warn!("{msg}; continuing because of --force");
        }
        Ok(())
    }

    fn assumption_report(&self) -> Result<EllipticityCordesReport, RunError> {
        let xs = default_x_samples(&self.problem.domain, self.cfg.check.x_samples);
        let ys = default_y_samples(&self.problem.dims, self.cfg.check.y_samples);
        self.problem.check_ratio(&ys).map_err(|e| RunError::Assumption(e.to_string()))?;
        check_assumptions(&self.problem, &xs, &ys).map_err(|e: CoefficientError| RunError::Assumption(e.to_string()))
    }

    /// Solves at every node of the configured grid and stores the archive.
    pub fn run_solve(&self) -> Result<SolveOutput, RunError> {
        self.assumption_gate()?;
        let disc = self.discretization(self.cfg.n, self.cfg.k)?;
        let solution = self.collocate(&disc, &self.cfg.p)?;
        let archive = self.archive(&solution)?;
        let bytes = archive.to_bytes();
        let path = self.out.write(&Self::archive_name(self.cfg.n, self.cfg.k, &self.cfg.p), &bytes)?;
        let checksum = archive.checksum_hex();
        info!(path = %path.display(), %checksum, "archive written");
        Ok(SolveOutput { archive, solution, path, checksum })
    }

    /// Loads the cached reference archive when its descriptors match,
    /// otherwise solves and caches it.
    fn reference_solution(&self) -> Result<CollocatedSolution, RunError> {
        let r = &self.cfg.reference;
        let name = format!("reference-{}", Self::archive_name(r.n, r.k, &r.p));
        let disc = self.discretization(r.n, r.k)?;
        let path = self.out.path(&name);
        if let Ok(bytes) = std::fs::read(&path) {
            let loaded = SolutionArchive::from_bytes(&bytes).and_then(|a| {
                let expected = self.archive_descriptor_for(&disc, &r.p)?;
                a.descriptor.ensure_matches(&expected)?;
                a.into_solution()
            });
            match loaded {
                Ok(sol) => {
                    info!(path = %path.display(), "using cached reference");
                    return Ok(sol);
                }
                Err(e) => warn!(path = %path.display(), "ignoring cached reference: {e}"),
            }
        }
        let solution = self.collocate(&disc, &r.p)?;
        self.out.write(&name, &self.archive(&solution)?.to_bytes())?;
        Ok(solution)
    }

    fn archive_descriptor_for(
        &self,
        disc: &Arc<Discretization>,
        p: &[usize],
    ) -> Result<crate::archive::ArchiveDescriptor, ArchiveError> {
        let grid =
            TensorCollocationGrid::new(&self.problem.dims, p).map_err(|e| ArchiveError::Malformed(e.to_string()))?;
        let probe = CollocatedSolution { grid, disc: disc.clone(), nodes: Vec::new(), ratios: Vec::new() };
        Ok(self.archive(&probe).map_err(|e| ArchiveError::Malformed(e.to_string()))?.descriptor)
    }

    fn seconds(&self, start: Instant) -> f64 {
        if self.cfg.record_timing {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        }
    }

    fn csv(&self, study: &str, records: &[ErrorRecord]) -> String {
        let mut s = header_line();
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in records {
            let _ = writeln!(
                s,
                "{study},{},{},{},{},{},{},{},{}",
                r.h,
                r.k,
                format_p(&r.p),
                r.error,
                r.err_u,
                r.err_g,
                r.err_bnd,
                r.seconds
            );
        }
        s
    }

    /// Spatial convergence over `levels` at fixed `p`.
    pub fn run_h_study(&self) -> Result<StudyOutput, RunError> {
        let levels = &self.cfg.levels;
        if levels.len() < 2 {
            return Err(ConfigError::Invalid("h-study needs at least two levels".into()).into());
        }
        self.assumption_gate()?;
        let exact = self.problem.exact.clone();
        let reference = match &exact {
            Some(_) => None,
            None => {
                let r = &self.cfg.reference;
                let finest = *levels.last().expect("two levels");
                if let Some(n) = levels.iter().find(|&&n| !r.n.is_multiple_of(n)) {
                    return Err(ConfigError::Invalid(format!(
                        "level n = {n} is not nested in the reference mesh n = {}",
                        r.n
                    ))
                    .into());
                }
                if r.n == finest {
                    warn!("reference mesh equals the finest level; its error will be reported as zero");
                } else if r.n < 2 * finest {
                    return Err(ConfigError::Invalid("reference mesh must be at least twice as fine".into()).into());
                }
                Some(self.reference_solution()?)
            }
        };
        let mut records = Vec::new();
        for &n in levels {
            let start = Instant::now();
            let disc = self.discretization(n, self.cfg.k)?;
            let sol = self.collocate(&disc, &self.cfg.p)?;
            let mut rec = match (&exact, &reference) {
                (Some(ex), _) => {
                    let degree = self.cfg.quadrature.exact_error_degree.unwrap_or(2 * self.cfg.k + 8);
                    let p: Vec<usize> = self.cfg.p.iter().map(|v| v + 1).collect();
                    let eval = TensorCollocationGrid::new(&self.problem.dims, &p)?;
                    stochastic_error_exact(&sol, ex, &eval, self.problem.ratio.as_ref(), degree)?
                }
                (None, Some(reference)) => {
                    let eval = default_eval_grid(&sol, reference)?;
                    stochastic_error(&sol, reference, &eval, self.problem.ratio.as_ref())?
                }
                (None, None) => unreachable!("reference built when no exact solution exists"),
            };
            rec.seconds = self.seconds(start);
            info!(n, error = rec.error, "level done");
            records.push(rec);
        }
        records.sort_by(|a, b| b.h.total_cmp(&a.h));
        let errors: Vec<f64> = records.iter().map(|r| r.error).collect();
        let hs: Vec<f64> = records.iter().map(|r| r.h).collect();
        let rates = match eoc(&errors, &hs) {
            Ok(r) => r,
            Err(NormError::NonPositiveError { .. }) => {
                warn!("an error is zero; orders are undefined");
                vec![f64::NAN; errors.len() - 1]
            }
            Err(e) => return Err(e.into()),
        };
        let mut summary = header_line();
        summary.push_str("study,h_coarse,h_fine,eoc\n");
        for (i, r) in rates.iter().enumerate() {
            let _ = writeln!(summary, "h-study,{},{},{}", hs[i], hs[i + 1], r);
        }
        let csv_path = self.out.write("h_study.csv", self.csv("h-study", &records).as_bytes())?;
        let summary_path = self.out.write("h_study_eoc.csv", summary.as_bytes())?;
        Ok(StudyOutput { records, eoc: rates, fit: None, csv_path, summary_path })
    }

    /// Stochastic convergence in the first parameter dimension, with the
    /// others pinned. The reference shares the study discretization, so the
    /// measured error is the collocation error alone.
    pub fn run_p_study(&self) -> Result<StudyOutput, RunError> {
        let sweep = &self.cfg.p_sweep;
        if sweep.len() < 3 {
            return Err(ConfigError::Invalid("p-study needs at least three degrees".into()).into());
        }
        let pinned = self.cfg.pinned_degree();
        let ref_p = &self.cfg.reference.p;
        let max = *sweep.last().expect("three degrees");
        if ref_p[0] <= max || ref_p[1..].iter().any(|&q| q < pinned) {
            return Err(ConfigError::Invalid(format!(
                "reference p = {} is not finer than the sweep (max {max}, pinned {pinned})",
                format_p(ref_p)
            ))
            .into());
        }
        self.assumption_gate()?;
        let disc = self.discretization(self.cfg.n, self.cfg.k)?;
        let reference = self.collocate(&disc, ref_p)?;
        let mut records = Vec::new();
        for &p1 in sweep {
            let start = Instant::now();
            let mut p = vec![pinned; self.problem.num_dims()];
            p[0] = p1;
            let sol = self.collocate(&disc, &p)?;
            let eval = default_eval_grid(&sol, &reference)?;
            let mut rec = stochastic_error(&sol, &reference, &eval, self.problem.ratio.as_ref())?;
            rec.seconds = self.seconds(start);
            info!(p1, error = rec.error, "degree done");
            records.push(rec);
        }
        records.sort_by_key(|r| r.p[0]);
        let mode = match self.problem.dims[0] {
            DensityFamily::HermiteNormal => DecayMode::Unbounded,
            _ => DecayMode::Bounded,
        };
        let errors: Vec<f64> = records.iter().map(|r| r.error).collect();
        let fit = match p_decay_fit(&errors, sweep, mode) {
            Ok(f) => Some(f),
            Err(NormError::NonPositiveError { .. }) => {
                warn!("errors vanish; the solution does not depend on the swept parameter");
                None
            }
            Err(e) => return Err(e.into()),
        };
        let mut summary = header_line();
        summary.push_str("study,mode,rate,intercept,r_squared,residual\n");
        let mode_name = match mode {
            DecayMode::Bounded => "bounded",
            DecayMode::Unbounded => "unbounded",
        };
        let row = fit.map_or_else(
            || "NaN,NaN,NaN,NaN".to_string(),
            |f| format!("{},{},{},{}", f.rate, f.intercept, f.r_squared, f.residual),
        );
        let _ = writeln!(summary, "p-study,{mode_name},{row}");
        let csv_path = self.out.write("p_study.csv", self.csv("p-study", &records).as_bytes())?;
        let summary_path = self.out.write("p_study_fit.csv", summary.as_bytes())?;
        Ok(StudyOutput { records, eoc: Vec::new(), fit, csv_path, summary_path })
    }

    /// Sampled ellipticity and Cordes check. Never fails on a violated
    /// condition; the verdict is in the report.
    pub fn run_check(&self) -> Result<CheckOutput, RunError> {
        let r = self.assumption_report()?;
        let mut s = header_line();
        s.push_str(
            "problem,lambda_est,eps_est,eps_spectral_bound,min_eigenvalue,max_eigenvalue,max_ratio,x_samples,y_samples,passed\n",
        );
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            self.problem.name,
            r.lambda_est,
            r.eps_est,
            r.eps_spectral_bound,
            r.min_eigenvalue,
            r.max_eigenvalue,
            r.max_ratio,
            r.x_samples,
            r.y_samples,
            r.passed
        );
        let csv_path = self.out.write("check.csv", s.as_bytes())?;
        Ok(CheckOutput { report: r, csv_path })
    }
}
