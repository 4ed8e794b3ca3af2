use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sndc_core::assembly::{AssemblyOptions, Discretization, QuadratureSettings, SolverOptions};
use sndc_core::coefficients::{DensityFamily, Distribution, ParametricProblem};
use sndc_core::collocation::*;
use sndc_core::mesh::{Rectangle, SimplicialMesh};

fn uniform_moment(j: u32) -> f64 {
    if j % 2 == 1 {
        0.0
    } else {
        1.0 / (j as f64 + 1.0)
    }
}

fn normal_moment(j: u32) -> f64 {
    if j % 2 == 1 {
        0.0
    } else {
        (1..j).step_by(2).map(f64::from).product()
    }
}

fn family(gaussian: bool) -> DensityFamily {
    if gaussian {
        DensityFamily::HermiteNormal
    } else {
        DensityFamily::LegendreUniform
    }
}

proptest! {
    #[test]
    fn rules_integrate_monomials(p in 0usize..=12, gaussian in any::<bool>()) {
        let r = GaussRule1D::new(family(gaussian), p + 1).unwrap();
        prop_assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
        prop_assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        for j in 0..=(2 * p as u32 + 1) {
            let q: f64 = r.nodes.iter().zip(&r.weights).map(|(y, w)| w * y.powi(j as i32)).sum();
            let exact = if gaussian { normal_moment(j) } else { uniform_moment(j) };
            // cancellation scale of the sum
            let scale: f64 = r.nodes.iter().zip(&r.weights).map(|(y, w)| w * y.abs().powi(j as i32)).sum::<f64>().max(1.0);
            prop_assert!((q - exact).abs() <= 1e-12 * scale, "j={} q={} exact={}", j, q, exact);
        }
    }

    #[test]
    fn tensor_partition_of_unity(seed in any::<u64>(), p1 in 0usize..5, p2 in 0usize..5) {
        let grid = TensorCollocationGrid::new(&[DensityFamily::LegendreUniform, DensityFamily::HermiteNormal], &[p1, p2]).unwrap();
        prop_assert!((grid.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = [rng.random_range(-1.0..1.0), rng.random_range(-3.0..3.0)];
        let l = grid.lagrange_weights(&y).unwrap();
        prop_assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

/// Monomial coefficients of the 1D Lagrange basis polynomial `l_j`.
fn lagrange_coefficients(nodes: &[f64], j: usize) -> Vec<f64> {
    let mut c = vec![1.0];
    for (i, &x) in nodes.iter().enumerate() {
        if i == j {
            continue;
        }
        let d = nodes[j] - x;
        let mut next = vec![0.0; c.len() + 1];
        for (k, &ck) in c.iter().enumerate() {
            next[k + 1] += ck / d;
            next[k] -= ck * x / d;
        }
        c = next;
    }
    c
}

#[test]
fn weights_equal_lagrange_integrals() {
    for gaussian in [false, true] {
        let moment = |j: usize| if gaussian { normal_moment(j as u32) } else { uniform_moment(j as u32) };
        for p in 0..=8 {
            let r = GaussRule1D::new(family(gaussian), p + 1).unwrap();
            for j in 0..=p {
                let c = lagrange_coefficients(&r.nodes, j);
                let int_l: f64 = c.iter().enumerate().map(|(k, ck)| ck * moment(k)).sum();
                let mut sq = vec![0.0; 2 * c.len() - 1];
                for (a, ca) in c.iter().enumerate() {
                    for (b, cb) in c.iter().enumerate() {
                        sq[a + b] += ca * cb;
                    }
                }
                let int_l2: f64 = sq.iter().enumerate().map(|(k, ck)| ck * moment(k)).sum();
                assert!((int_l - int_l2).abs() < 1e-10, "p={p} j={j}: {int_l} {int_l2}");
                assert!((int_l - r.weights[j]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn global_index_is_a_bijection() {
    for p in [vec![3], vec![1, 1], vec![8, 8], vec![1, 2, 1], vec![4, 0, 6], vec![9, 9, 9, 9]] {
        let np: usize = p.iter().map(|v| v + 1).product();
        assert!(np <= 10_000);
        let mut hit = vec![false; np];
        let mut m = vec![1; p.len()];
        loop {
            let g = global_index(&m, &p).unwrap();
            assert!(!std::mem::replace(&mut hit[g - 1], true));
            let mut d = 0;
            while d < p.len() && m[d] == p[d] + 1 {
                m[d] = 1;
                d += 1;
            }
            if d == p.len() {
                break;
            }
            m[d] += 1;
        }
        assert!(hit.iter().all(|&h| h));
    }
}

#[test]
fn surrogate_interpolation_and_expectation() {
    let grid = TensorCollocationGrid::new(&vec![DensityFamily::LegendreUniform; 2], &[2, 1]).unwrap();
    let v = |y: &[f64]| y[0] * y[0] * y[1];
    let values: Vec<f64> = grid.nodes().iter().map(|y| v(y)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let y = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        assert!((grid.interpolate_values(&values, &y).unwrap() - v(&y)).abs() < 1e-12);
    }
    // idempotence: interpolating the interpolant at the nodes changes nothing
    let again: Vec<f64> = grid.nodes().iter().map(|y| grid.interpolate_values(&values, y).unwrap()).collect();
    assert_eq!(again, values);
    let grid = TensorCollocationGrid::new(&vec![DensityFamily::LegendreUniform; 2], &[2, 2]).unwrap();
    let y1: Vec<f64> = grid.nodes().iter().map(|y| y[0]).collect();
    assert!(grid.expectation_values(&y1, &|_| 1.0).abs() < 1e-14);
}

fn disc(n: usize, k: usize) -> Arc<Discretization> {
    let mesh = Arc::new(SimplicialMesh::structured(Rectangle::reference_square(), n).unwrap());
    Arc::new(Discretization::new(mesh, k, QuadratureSettings::default()).unwrap())
}

#[test]
fn single_node_zero_data() {
    let mut p = ParametricProblem::manufactured_identity();
    p.forcing = Arc::new(|_, _| 0.0);
    let grid = TensorCollocationGrid::new(&p.dims, &[0, 0]).unwrap();
    let s = collocate_solve(&p, &grid, &disc(3, 1), &AssemblyOptions::default(), &SolverOptions::default()).unwrap();
    assert_eq!(s.nodes.len(), 1);
    assert!(s.nodes[0].u.iter().chain(&s.nodes[0].g).all(|&v| v == 0.0));
}

#[test]
fn parameter_independent_problem_gives_identical_nodes() {
    let p = ParametricProblem::manufactured_identity();
    let grid = TensorCollocationGrid::new(&p.dims, &[2, 1]).unwrap();
    let s = collocate_solve(&p, &grid, &disc(4, 2), &AssemblyOptions::default(), &SolverOptions::default()).unwrap();
    for n in &s.nodes[1..] {
        assert_eq!(n, &s.nodes[0]);
    }
    let mean = s.expectation();
    let at = s.interpolate(&[0.123, -0.77]).unwrap();
    for (a, b) in mean.g.iter().zip(&s.nodes[0].g) {
        assert!((a - b).abs() <= 1e-13 * b.abs().max(1.0));
    }
    for (a, b) in at.g.iter().zip(&s.nodes[0].g) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
}

#[test]
fn nodal_reproduction_and_order_independence() {
    let p = ParametricProblem::section6(Distribution::Uniform);
    let grid = TensorCollocationGrid::new(&p.dims, &[2, 2]).unwrap();
    let d = disc(8, 2);
    let (a, s) = (AssemblyOptions::default(), SolverOptions::default());
    let sol = collocate_solve(&p, &grid, &d, &a, &s).unwrap();
    assert_eq!(sol.nodes.len(), 9);
    for m in 0..9 {
        assert_eq!(sol.interpolate(&grid.node(m)).unwrap(), sol.nodes[m]);
    }
    let reversed: Vec<usize> = (0..9).rev().collect();
    let other = collocate_solve_in_order(&p, &grid, &d, &a, &s, &reversed).unwrap();
    assert_eq!(other.nodes, sol.nodes);
    assert!(matches!(
        collocate_solve_in_order(&p, &grid, &d, &a, &s, &[0, 0, 1, 2, 3, 4, 5, 6, 7]),
        Err(CollocationError::BadOrder(9))
    ));
}
