use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sndc_core::assembly::{AssemblyOptions, Discretization, QuadratureSettings, SolverOptions};
use sndc_core::coefficients::{Distribution, ParametricProblem};
use sndc_core::collocation::{collocate_solve, TensorCollocationGrid};
use sndc_core::fem::DiscreteFieldPair;
use sndc_core::mesh::{Rectangle, SimplicialMesh};
use sndc_core::norms::*;

fn disc(n: usize, k: usize) -> Arc<Discretization> {
    let mesh = Arc::new(SimplicialMesh::structured(Rectangle::reference_square(), n).unwrap());
    Arc::new(Discretization::new(mesh, k, QuadratureSettings::default()).unwrap())
}

fn random_pair(d: &Discretization, rng: &mut ChaCha8Rng) -> DiscreteFieldPair {
    let z: Vec<f64> = (0..d.space().dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    DiscreteFieldPair::unpack(d.space(), &z)
}

#[test]
fn norm_axioms_on_random_pairs() {
    let d = disc(3, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let (a, b) = (random_pair(&d, &mut rng), random_pair(&d, &mut rng));
        let c: f64 = rng.random_range(-5.0..5.0);
        let na = pair_norm_h(&d, &a);
        assert!(na > 0.0);
        assert!((pair_norm_h(&d, &a.scaled(c)) - c.abs() * na).abs() <= 1e-12 * c.abs() * na);
        let mut sum = a.clone();
        sum.axpy(1.0, &b);
        assert!(pair_norm_h(&d, &sum) <= na + pair_norm_h(&d, &b) + 1e-10);
        let b = pair_norm_breakdown(&d, &a);
        let r = ErrorRecord::from_breakdown(1.0, 2, vec![], &b);
        let comps = r.err_u.powi(2) + r.err_g.powi(2) + r.err_bnd.powi(2);
        assert!((r.error.powi(2) - comps).abs() <= 1e-10 * comps);
    }
    assert_eq!(pair_norm_h(&d, &DiscreteFieldPair::zeros(d.space())), 0.0);
}

#[test]
fn stochastic_error_basics() {
    let p = ParametricProblem::section6(Distribution::Uniform);
    let grid = TensorCollocationGrid::new(&p.dims, &[1, 1]).unwrap();
    let d = disc(4, 1);
    let sol = collocate_solve(&p, &grid, &d, &AssemblyOptions::default(), &SolverOptions::default()).unwrap();
    let own = stochastic_error(&sol, &sol, &grid, &|_| 1.0).unwrap();
    assert_eq!(own.error, 0.0);
    let eval = default_eval_grid(&sol, &sol).unwrap();
    assert!(stochastic_error(&sol, &sol, &eval, &|_| 1.0).unwrap().error < 1e-13);

    let mut errs = vec![];
    for delta in [1e-2, 1e-3, 1e-4] {
        let mut pert = sol.clone();
        pert.nodes[2].g[5] += delta;
        errs.push(stochastic_error(&pert, &sol, &eval, &|_| 1.0).unwrap().error);
    }
    assert!(errs[0] > 0.0);
    assert!((errs[0] / errs[1] - 10.0).abs() < 1e-6 && (errs[1] / errs[2] - 10.0).abs() < 1e-6);
}

#[test]
fn nested_transfer_and_rejection() {
    let p = ParametricProblem::section6(Distribution::Uniform);
    let grid = TensorCollocationGrid::new(&p.dims, &[1, 1]).unwrap();
    let (a, s) = (AssemblyOptions::default(), SolverOptions::default());
    let reference = collocate_solve(&p, &grid, &disc(16, 2), &a, &s).unwrap();
    let mut errs = vec![];
    for n in [4, 8] {
        let coarse = collocate_solve(&p, &grid, &disc(n, 2), &a, &s).unwrap();
        errs.push(stochastic_error(&coarse, &reference, &grid, &|_| 1.0).unwrap().error);
    }
    assert!(errs[0] > errs[1] && errs[1] > 0.0);
    let odd = collocate_solve(&p, &grid, &disc(3, 2), &a, &s).unwrap();
    assert!(matches!(stochastic_error(&odd, &reference, &grid, &|_| 1.0), Err(NormError::Fem(_))));
}
