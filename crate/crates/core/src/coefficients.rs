//! Random data of the parametric problem `A(y, x) : D^2 u = f(y, x)` and
//! sampling-based certificates for uniform ellipticity and the Cordes
//! condition.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::mesh::{Point, Rectangle};
use crate::orthopoly::{gauss_rule, hermite_recurrence, legendre_recurrence};

pub type Matrix2 = [[f64; 2]; 2];
pub type DiffusionFn = Arc<dyn Fn(&[f64], Point) -> Matrix2 + Send + Sync>;
pub type ForcingFn = Arc<dyn Fn(&[f64], Point) -> f64 + Send + Sync>;
pub type RatioFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type RecurrenceFn = Arc<dyn Fn(usize) -> (f64, f64) + Send + Sync>;

/// Gaussian dimensions are truncated to this interval for sampling checks.
pub const GAUSSIAN_SAMPLING_HALF_WIDTH: f64 = 8.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoefficientError {
    #[error("A is not symmetric at x = {x:?}, y = {y:?}")]
    NotSymmetric { x: Point, y: Vec<f64> },
    #[error("tr A = {trace} is not positive at x = {x:?}, y = {y:?}")]
    NonPositiveTrace { trace: f64, x: Point, y: Vec<f64> },
    #[error("no samples supplied")]
    NoSamples,
    #[error("density ratio is not finite and nonnegative at y = {0:?}")]
    BadRatio(Vec<f64>),
}

/// A probability density on one parameter axis, described by the
/// recurrence of its monic orthogonal polynomials.
#[derive(Clone)]
pub enum DensityFamily {
    /// Uniform density `1/2` on `[-1, 1]`.
    LegendreUniform,
    /// Standard normal density on the real line.
    HermiteNormal,
    Custom(CustomDensity),
}

#[derive(Clone)]
pub struct CustomDensity {
    pub name: String,
    /// `(a_n, b_n)` with `b_0 = 1`.
    pub recurrence: RecurrenceFn,
    /// Interval containing the support; may be infinite.
    pub support: (f64, f64),
}

impl fmt::Debug for DensityFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl PartialEq for DensityFamily {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Self::LegendreUniform, Self::LegendreUniform) | (Self::HermiteNormal, Self::HermiteNormal) => true,
            (Self::Custom(a), Self::Custom(b)) => Arc::ptr_eq(&a.recurrence, &b.recurrence),
            _ => false,
        }
    }
}

impl DensityFamily {
    pub fn name(&self) -> &str {
        match self {
            Self::LegendreUniform => "legendre-uniform",
            Self::HermiteNormal => "hermite-normal",
            Self::Custom(c) => &c.name,
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "legendre-uniform" => Some(Self::LegendreUniform),
            "hermite-normal" => Some(Self::HermiteNormal),
            _ => None,
        }
    }

    pub fn recurrence(&self, n: usize) -> (f64, f64) {
        match self {
            Self::LegendreUniform => legendre_recurrence(n),
            Self::HermiteNormal => hermite_recurrence(n),
            Self::Custom(c) => (c.recurrence)(n),
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            Self::LegendreUniform => (-1.0, 1.0),
            Self::HermiteNormal => (f64::NEG_INFINITY, f64::INFINITY),
            Self::Custom(c) => c.support,
        }
    }

    /// Bounded interval used for sampling-based checks.
    pub fn sampling_interval(&self) -> (f64, f64) {
        let (a, b) = self.support();
        (a.max(-GAUSSIAN_SAMPLING_HALF_WIDTH), b.min(GAUSSIAN_SAMPLING_HALF_WIDTH))
    }
}

/// Named distributions of the built-in problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    Uniform,
    Gaussian,
}

impl Distribution {
    pub fn family(self) -> DensityFamily {
        match self {
            Self::Uniform => DensityFamily::LegendreUniform,
            Self::Gaussian => DensityFamily::HermiteNormal,
        }
    }
}

/// Closed-form `y`-independent solution, for manufactured problems.
#[derive(Clone)]
pub struct ExactSolution {
    pub u: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
    pub gradient: Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>,
    pub hessian: Arc<dyn Fn(Point) -> Matrix2 + Send + Sync>,
}

#[derive(Clone)]
pub struct ParametricProblem {
    pub name: String,
    pub domain: Rectangle,
    /// One density per random dimension; `N = dims.len()`.
    pub dims: Vec<DensityFamily>,
    pub diffusion: DiffusionFn,
    pub forcing: ForcingFn,
    /// `rho / rho_hat`; identically one when the collocation density is the
    /// true joint density.
    pub ratio: RatioFn,
    pub exact: Option<ExactSolution>,
}

impl fmt::Debug for ParametricProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParametricProblem")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("dims", &self.dims)
            .finish_non_exhaustive()
    }
}

fn unit_ratio() -> RatioFn {
    Arc::new(|_| 1.0)
}

impl ParametricProblem {
    pub fn num_dims(&self) -> usize {
        self.dims.len()
    }

    pub fn diffusion_at(&self, y: &[f64], x: Point) -> Matrix2 {
        (self.diffusion)(y, x)
    }

    pub fn forcing_at(&self, y: &[f64], x: Point) -> f64 {
        (self.forcing)(y, x)
    }

    /// Problem on `(-1, 1)^2` with two i.i.d. parameters:
    /// `A = diag(5/2 + e^{-y1^2/100}(cos pi x1 + sin pi x2), 5/2 + e^{-y2^2/100}(sin pi x1 + cos pi x2))`,
    /// `f = (2 - x1^2 - x2^2) / 8`.
    pub fn section6(distribution: Distribution) -> Self {
        let name = match distribution {
            Distribution::Uniform => "section6-uniform",
            Distribution::Gaussian => "section6-gaussian",
        };
        Self {
            name: name.into(),
            domain: Rectangle::reference_square(),
            dims: vec![distribution.family(); 2],
            diffusion: Arc::new(|y, x| {
                let (s1, c1) = (PI * x[0]).sin_cos();
                let (s2, c2) = (PI * x[1]).sin_cos();
                let a11 = 2.5 + (-y[0] * y[0] / 100.0).exp() * (c1 + s2);
                let a22 = 2.5 + (-y[1] * y[1] / 100.0).exp() * (s1 + c2);
                [[a11, 0.0], [0.0, a22]]
            }),
            forcing: Arc::new(|_, x| (2.0 - x[0] * x[0] - x[1] * x[1]) / 8.0),
            ratio: unit_ratio(),
            exact: None,
        }
    }

    /// `A = I` with the smooth solution `u = sin(pi x1) sin(pi x2)` on
    /// `(-1, 1)^2`. The two uniform parameters do not enter the data.
    pub fn manufactured_identity() -> Self {
        let u = |x: Point| (PI * x[0]).sin() * (PI * x[1]).sin();
        Self {
            name: "manufactured-identity".into(),
            domain: Rectangle::reference_square(),
            dims: vec![DensityFamily::LegendreUniform; 2],
            diffusion: Arc::new(|_, _| [[1.0, 0.0], [0.0, 1.0]]),
            forcing: Arc::new(move |_, x| -2.0 * PI * PI * u(x)),
            ratio: unit_ratio(),
            exact: Some(ExactSolution {
                u: Arc::new(u),
                gradient: Arc::new(|x| {
                    let (s1, c1) = (PI * x[0]).sin_cos();
                    let (s2, c2) = (PI * x[1]).sin_cos();
                    [PI * c1 * s2, PI * s1 * c2]
                }),
                hessian: Arc::new(|x| {
                    let (s1, c1) = (PI * x[0]).sin_cos();
                    let (s2, c2) = (PI * x[1]).sin_cos();
                    let p2 = PI * PI;
                    [[-p2 * s1 * s2, p2 * c1 * c2], [p2 * c1 * c2, -p2 * s1 * s2]]
                }),
            }),
        }
    }

    /// `A = I` with the bubble `u = (1 - x1^2)(1 - x2^2)`, whose pair
    /// `(u, grad u)` lies in the P_4 spaces.
    pub fn bubble_identity() -> Self {
        Self {
            name: "bubble-identity".into(),
            domain: Rectangle::reference_square(),
            dims: vec![DensityFamily::LegendreUniform],
            diffusion: Arc::new(|_, _| [[1.0, 0.0], [0.0, 1.0]]),
            forcing: Arc::new(|_, x| -2.0 * (1.0 - x[1] * x[1]) - 2.0 * (1.0 - x[0] * x[0])),
            ratio: unit_ratio(),
            exact: Some(ExactSolution {
                u: Arc::new(|x| (1.0 - x[0] * x[0]) * (1.0 - x[1] * x[1])),
                gradient: Arc::new(|x| [-2.0 * x[0] * (1.0 - x[1] * x[1]), -2.0 * x[1] * (1.0 - x[0] * x[0])]),
                hessian: Arc::new(|x| {
                    let off = 4.0 * x[0] * x[1];
                    [[-2.0 * (1.0 - x[1] * x[1]), off], [off, -2.0 * (1.0 - x[0] * x[0])]]
                }),
            }),
        }
    }

    /// Looks up a config-selectable built-in problem.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "section6-uniform" => Some(Self::section6(Distribution::Uniform)),
            "section6-gaussian" => Some(Self::section6(Distribution::Gaussian)),
            "manufactured-identity" => Some(Self::manufactured_identity()),
            _ => None,
        }
    }

    /// Checks `rho / rho_hat` is finite and nonnegative at the given points.
    pub fn check_ratio(&self, ys: &[Vec<f64>]) -> Result<(), CoefficientError> {
        match ys.iter().find(|y| {
            let r = (self.ratio)(y);
            !(r.is_finite() && r >= 0.0)
        }) {
            Some(y) => Err(CoefficientError::BadRatio(y.clone())),
            None => Ok(()),
        }
    }
}

pub fn trace(a: &Matrix2) -> f64 {
    a[0][0] + a[1][1]
}

/// Squared Frobenius norm.
pub fn frobenius_sq(a: &Matrix2) -> f64 {
    a[0][0] * a[0][0] + a[0][1] * a[0][1] + a[1][0] * a[1][0] + a[1][1] * a[1][1]
}

fn is_symmetric(a: &Matrix2) -> bool {
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    (a[0][1] - a[1][0]).abs() <= 1e-12 * scale
}

/// Eigenvalues of a symmetric 2x2 matrix, ascending.
pub fn symmetric_eigenvalues(a: &Matrix2) -> (f64, f64) {
    let mean = 0.5 * (a[0][0] + a[1][1]);
    let half_diff = 0.5 * (a[0][0] - a[1][1]);
    let r = half_diff.hypot(a[0][1]);
    (mean - r, mean + r)
}

/// `gamma = tr A / |A|^2`.
pub fn gamma_scaling(problem: &ParametricProblem, y: &[f64], x: Point) -> Result<f64, CoefficientError> {
    let a = problem.diffusion_at(y, x);
    let tr = trace(&a);
    if !(tr > 0.0) {
        return Err(CoefficientError::NonPositiveTrace { trace: tr, x, y: y.to_vec() });
    }
    Ok(tr / frobenius_sq(&a))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipticityCordesReport {
    /// `min over samples of min(lambda_min(A), 1 / lambda_max(A))`, capped at one.
    pub lambda_est: f64,
    /// `1 / r_max - (d - 1)` with `r_max = max |A|^2 / (tr A)^2`.
    pub eps_est: f64,
    /// Cordes constant implied by the global eigenvalue range alone,
    /// `(m + M)^2 / (m^2 + M^2) - 1`; never larger than `eps_est` in 2D.
    pub eps_spectral_bound: f64,
    pub max_ratio: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// `max |gamma A - I|^2`; equals `1 - eps_est` in two dimensions.
    pub max_scaled_deviation: f64,
    pub x_samples: usize,
    pub y_samples: usize,
    pub worst_lambda_at: (Point, Vec<f64>),
    pub worst_ratio_at: (Point, Vec<f64>),
    pub passed: bool,
}

/// Evaluates `A` on every `(x, y)` sample pair.
pub fn check_assumptions(
    problem: &ParametricProblem,
    x_samples: &[Point],
    y_samples: &[Vec<f64>],
) -> Result<EllipticityCordesReport, CoefficientError> {
    if x_samples.is_empty() || y_samples.is_empty() {
        return Err(CoefficientError::NoSamples);
    }
    let d = 2.0;
    let mut lambda = f64::INFINITY;
    let mut max_ratio = 0.0f64;
    let mut min_eig = f64::INFINITY;
    let mut max_eig = f64::NEG_INFINITY;
    let mut max_dev = 0.0f64;
    let mut worst_lambda_at = (x_samples[0], y_samples[0].clone());
    let mut worst_ratio_at = worst_lambda_at.clone();
    for y in y_samples {
        for &x in x_samples {
            let a = problem.diffusion_at(y, x);
            if !is_symmetric(&a) {
                return Err(CoefficientError::NotSymmetric { x, y: y.clone() });
            }
            let tr = trace(&a);
            if !(tr > 0.0) {
                return Err(CoefficientError::NonPositiveTrace { trace: tr, x, y: y.clone() });
            }
            let (lo, hi) = symmetric_eigenvalues(&a);
            min_eig = min_eig.min(lo);
            max_eig = max_eig.max(hi);
            let l = lo.min(1.0 / hi);
            if l < lambda {
                lambda = l;
                worst_lambda_at = (x, y.clone());
            }
            let fro = frobenius_sq(&a);
            let ratio = fro / (tr * tr);
            if ratio > max_ratio {
                max_ratio = ratio;
                worst_ratio_at = (x, y.clone());
            }
            let gamma = tr / fro;
            let dev = [[gamma * a[0][0] - 1.0, gamma * a[0][1]], [gamma * a[1][0], gamma * a[1][1] - 1.0]];
            max_dev = max_dev.max(frobenius_sq(&dev));
        }
    }
    let lambda_est = lambda.min(1.0);
    let eps_est = 1.0 / max_ratio - (d - 1.0);
    let eps_spectral_bound = if min_eig > 0.0 {
        (min_eig + max_eig).powi(2) / (min_eig * min_eig + max_eig * max_eig) - (d - 1.0)
    } else {
        f64::NEG_INFINITY
    };
    Ok(EllipticityCordesReport {
        lambda_est,
        eps_est,
        eps_spectral_bound,
        max_ratio,
        min_eigenvalue: min_eig,
        max_eigenvalue: max_eig,
        max_scaled_deviation: max_dev,
        x_samples: x_samples.len(),
        y_samples: y_samples.len(),
        worst_lambda_at,
        worst_ratio_at,
        passed: lambda_est > 0.0 && eps_est > 0.0,
    })
}

/// Uniform `nx x nx` grid over the problem domain (boundary included).
pub fn default_x_samples(domain: &Rectangle, nx: usize) -> Vec<Point> {
    let nx = nx.max(2);
    let t = |i: usize| i as f64 / (nx - 1) as f64;
    (0..nx)
        .flat_map(|j| {
            (0..nx)
                .map(move |i| [domain.x0 + (domain.x1 - domain.x0) * t(i), domain.y0 + (domain.y1 - domain.y0) * t(j)])
        })
        .collect()
}

/// Per-dimension sample values: the Gauss nodes of `per_dim - 2` points plus
/// both ends of the sampling interval. The result is the tensor product.
pub fn default_y_samples(dims: &[DensityFamily], per_dim: usize) -> Vec<Vec<f64>> {
    let per_dim = per_dim.max(3);
    let axes: Vec<Vec<f64>> = dims
        .iter()
        .map(|fam| {
            let (nodes, _) = gauss_rule(|n| fam.recurrence(n), per_dim - 2);
            let (lo, hi) = fam.sampling_interval();
            let mut v = vec![lo];
            v.extend(nodes.into_iter().filter(|y| *y > lo && *y < hi));
            v.push(hi);
            v
        })
        .collect();
    let mut out = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(a: Matrix2) -> ParametricProblem {
        let mut p = ParametricProblem::manufactured_identity();
        p.diffusion = Arc::new(move |_, _| a);
        p
    }

    #[test]
    fn identity_report() {
        let p = constant([[1.0, 0.0], [0.0, 1.0]]);
        let r = check_assumptions(&p, &[[0.0, 0.0]], &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(r.lambda_est, 1.0);
        assert_eq!(r.eps_est, 1.0);
        assert!(r.passed);
    }

    #[test]
    fn diagonal_report() {
        let p = constant([[0.5, 0.0], [0.0, 4.5]]);
        let r = check_assumptions(&p, &[[0.0, 0.0]], &[vec![0.0, 0.0]]).unwrap();
        // |A|^2 = 0.25 + 20.25 = 20.5, (tr A)^2 = 25
        assert!((r.max_ratio - 0.82).abs() < 1e-15);
        assert!((r.eps_est - (25.0 / 20.5 - 1.0)).abs() < 1e-14);
        assert!((r.lambda_est - 2.0 / 9.0).abs() < 1e-15);
        assert!((r.eps_spectral_bound - r.eps_est).abs() < 1e-14);
    }

    #[test]
    fn non_symmetric_and_bad_trace_rejected() {
        let p = constant([[1.0, 0.5], [0.0, 1.0]]);
        assert!(matches!(
            check_assumptions(&p, &[[0.0, 0.0]], &[vec![0.0]]),
            Err(CoefficientError::NotSymmetric { .. })
        ));
        let p = constant([[-1.0, 0.0], [0.0, 0.5]]);
        assert!(matches!(
            check_assumptions(&p, &[[0.0, 0.0]], &[vec![0.0]]),
            Err(CoefficientError::NonPositiveTrace { .. })
        ));
        assert!(gamma_scaling(&p, &[0.0], [0.0, 0.0]).is_err());
        assert_eq!(check_assumptions(&p, &[], &[vec![0.0]]), Err(CoefficientError::NoSamples));
    }

    #[test]
    fn gamma_values() {
        let g = |a: Matrix2| gamma_scaling(&constant(a), &[0.0], [0.3, 0.1]).unwrap();
        assert_eq!(g([[1.0, 0.0], [0.0, 1.0]]), 1.0);
        assert_eq!(g([[2.0, 0.0], [0.0, 2.0]]), 0.5);
        assert!((g([[0.5, 0.0], [0.0, 4.5]]) - 5.0 / 20.5).abs() < 1e-15);
    }

    #[test]
    fn section6_values() {
        let p = ParametricProblem::section6(Distribution::Uniform);
        let a = p.diffusion_at(&[0.0, 0.0], [0.0, 0.0]);
        assert!((a[0][0] - 3.5).abs() < 1e-15 && (a[1][1] - 3.5).abs() < 1e-15);
        assert_eq!(a[0][1], 0.0);
        assert_eq!(p.forcing_at(&[0.3, 0.1], [0.0, 0.0]), 0.25);
        assert_eq!(p.forcing_at(&[0.3, 0.1], [1.0, 1.0]), 0.0);
        let far = p.diffusion_at(&[1e3, -1e3], [0.3, 0.7]);
        assert!((far[0][0] - 2.5).abs() < 1e-12 && (far[1][1] - 2.5).abs() < 1e-12);
        assert_eq!((p.ratio)(&[0.2, 0.9]), 1.0);
    }

    #[test]
    fn manufactured_data_consistent() {
        let p = ParametricProblem::manufactured_identity();
        let e = p.exact.clone().unwrap();
        let x = [0.31, -0.47];
        let h = (e.hessian)(x);
        assert!((h[0][0] + h[1][1] - p.forcing_at(&[0.0, 0.0], x)).abs() < 1e-12);
        let b = ParametricProblem::bubble_identity();
        let e = b.exact.clone().unwrap();
        let h = (e.hessian)(x);
        assert!((h[0][0] + h[1][1] - b.forcing_at(&[0.0], x)).abs() < 1e-14);
    }

    #[test]
    fn sample_grids() {
        let xs = default_x_samples(&Rectangle::reference_square(), 101);
        assert_eq!(xs.len(), 101 * 101);
        let uniform = default_y_samples(&[DensityFamily::LegendreUniform, DensityFamily::LegendreUniform], 33);
        assert_eq!(uniform.len(), 33 * 33);
        let ys = default_y_samples(&[DensityFamily::HermiteNormal, DensityFamily::LegendreUniform], 33);
        // outer Hermite nodes lie beyond the sampling window and are dropped
        assert!(ys.len() < 33 * 33 && ys.len().is_multiple_of(33));
        assert!(ys.iter().all(|y| y[0].abs() <= 8.0 && y[1].abs() <= 1.0));
        assert!(ys.iter().any(|y| y[0] == -8.0) && ys.iter().any(|y| y[1] == 1.0));
    }
}
