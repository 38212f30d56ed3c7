mod common;

use common::*;
use eeg_grouplasso::model::{GroupStructure, ProblemInstance};
use eeg_grouplasso::solver::{alpha_max, bcd_solve, group_update, kkt_residual, objective, SolverConfig};
use nalgebra::{DMatrix, DVector};

fn problem(c: &DMatrix<f64>, b: &DVector<f64>, groups: &[Vec<usize>]) -> ProblemInstance {
    ProblemInstance::new(c.clone(), b.clone(), GroupStructure::new(groups.to_vec(), c.ncols()).unwrap()).unwrap()
}

#[test]
fn objective_matches_entrywise_evaluation() {
    let mut rng = rng(11);
    let groups = contiguous(4, 3);
    for _ in 0..10 {
        let c = gaussian(8, 12, &mut rng);
        let b = gaussian_vec(8, &mut rng);
        let x = gaussian_vec(12, &mut rng);
        let p = problem(&c, &b, &groups);
        let got = objective(&p, 0.37, &x).unwrap();
        let want = group_lasso_objective(&c, &b, &groups, 0.37, &x);
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn group_update_matches_descent_oracle() {
    let mut rng = rng(5);
    let groups = vec![vec![0, 1, 2]];
    let mut active = 0;
    for _ in 0..20 {
        let c = gaussian(5, 3, &mut rng);
        let r = gaussian_vec(5, &mut rng);
        let p = problem(&c, &r, &groups);
        let alpha = 0.7;
        let x = group_update(&p, 0, &r, alpha).unwrap();
        let f = |x: &DVector<f64>| group_lasso_objective(&c, &r, &groups, alpha, x);
        let projected = (&c * c.clone().pseudo_inverse(1e-14).unwrap() * &r).norm();
        if projected <= alpha {
            assert_eq!(x.norm(), 0.0);
            // Zero must beat every nearby point.
            for _ in 0..50 {
                let probe = gaussian_vec(3, &mut rng) * 0.1;
                assert!(f(&x) <= f(&probe) + 1e-14);
            }
        } else {
            active += 1;
            let oracle = block_descent_oracle(&c, &r, alpha, 200_000);
            assert!(f(&x) <= f(&oracle) + 1e-10, "{} vs {}", f(&x), f(&oracle));
            assert!((&x - &oracle).norm() <= 1e-5 * oracle.norm().max(1.0));
        }
    }
    assert!(active >= 5);
}

#[test]
fn bcd_matches_prox_gradient_on_small_instances() {
    let mut rng = rng(21);
    let groups = contiguous(4, 3);
    for _ in 0..8 {
        let c = gaussian(8, 12, &mut rng);
        let b = gaussian_vec(8, &mut rng);
        let p = problem(&c, &b, &groups);
        let alpha = 0.3 * alpha_max(&p);
        let res = bcd_solve(&p, alpha, &DVector::zeros(12), &SolverConfig::default()).unwrap();
        assert!(res.converged);
        assert!(res.kkt_residual <= 1e-6);
        let oracle = prox_gradient_objective(&c, &b, &groups, alpha, 200_000);
        let scale = 0.5 * b.norm_squared();
        assert!((res.objective - oracle) / scale <= 1e-8, "bcd {} oracle {}", res.objective, oracle);
        assert!((res.objective - oracle) / scale >= -1e-6);
    }
}

#[test]
fn singleton_groups_reduce_to_weighted_lasso() {
    let mut rng = rng(3);
    for _ in 0..10 {
        let c = gaussian(10, 15, &mut rng);
        let b = gaussian_vec(10, &mut rng);
        let p = ProblemInstance::new(c.clone(), b.clone(), GroupStructure::singletons(15).unwrap()).unwrap();
        let alpha = 0.2 * alpha_max(&p);
        let res = bcd_solve(&p, alpha, &DVector::zeros(15), &SolverConfig::precise()).unwrap();
        let oracle = lasso_coordinate_descent(&c, &b, alpha, 1_000_000);
        assert!((res.x_vector() - oracle).amax() <= 1e-10);
    }
}

#[test]
fn objective_trace_never_increases() {
    let mut rng = rng(8);
    let groups = contiguous(10, 3);
    for _ in 0..10 {
        let c = gaussian(12, 30, &mut rng);
        let b = gaussian_vec(12, &mut rng);
        let p = problem(&c, &b, &groups);
        let res = bcd_solve(&p, 0.05 * alpha_max(&p), &DVector::zeros(30), &SolverConfig::default()).unwrap();
        for w in res.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
        }
    }
}

#[test]
fn scaling_data_and_alpha_scales_the_minimizer() {
    let mut rng = rng(13);
    let groups = contiguous(4, 3);
    let c = gaussian(8, 12, &mut rng);
    let b = gaussian_vec(8, &mut rng);
    let p = problem(&c, &b, &groups);
    let alpha = 0.25 * alpha_max(&p);
    let x1 = bcd_solve(&p, alpha, &DVector::zeros(12), &SolverConfig::precise()).unwrap().x_vector();
    let s = 7.5;
    let p2 = problem(&c, &(&b * s), &groups);
    let x2 = bcd_solve(&p2, alpha * s, &DVector::zeros(12), &SolverConfig::precise()).unwrap().x_vector();
    assert!((x2 - x1 * s).norm() <= 1e-8 * s * b.norm());
}

#[test]
fn perturbing_an_active_block_does_not_lower_the_objective() {
    let mut rng = rng(17);
    let groups = contiguous(6, 3);
    let c = gaussian(10, 18, &mut rng);
    let b = gaussian_vec(10, &mut rng);
    let p = problem(&c, &b, &groups);
    let alpha = 0.2 * alpha_max(&p);
    let res = bcd_solve(&p, alpha, &DVector::zeros(18), &SolverConfig::precise()).unwrap();
    let x = res.x_vector();
    let g = res.active_groups[0];
    for _ in 0..20 {
        let mut y = x.clone();
        let d = gaussian_vec(3, &mut rng);
        for (k, &i) in groups[g].iter().enumerate() {
            y[i] += 1e-3 * d[k];
        }
        assert!(objective(&p, alpha, &y).unwrap() >= res.objective - 1e-12);
        assert!(kkt_residual(&p, alpha, &y).unwrap() > res.kkt_residual);
    }
}

#[test]
fn every_converged_solve_is_certified() {
    let mut rng = rng(29);
    let groups = contiguous(10, 3);
    for _ in 0..20 {
        let c = gaussian(12, 30, &mut rng);
        let b = gaussian_vec(12, &mut rng);
        let p = problem(&c, &b, &groups);
        for f in [0.9, 0.3, 0.05] {
            let res = bcd_solve(&p, f * alpha_max(&p), &DVector::zeros(30), &SolverConfig::default()).unwrap();
            assert!(res.converged);
            assert!(kkt_residual(&p, res.alpha, &res.x_vector()).unwrap() <= 1e-6);
        }
    }
}

#[test]
fn alpha_max_zeroes_the_solution_and_slightly_less_does_not() {
    let mut rng = rng(31);
    let groups = contiguous(5, 3);
    let c = gaussian(9, 15, &mut rng);
    let b = gaussian_vec(9, &mut rng);
    let p = problem(&c, &b, &groups);
    let a = alpha_max(&p);
    let at = bcd_solve(&p, a, &DVector::zeros(15), &SolverConfig::default()).unwrap();
    assert_eq!(at.x_vector().norm(), 0.0);
    let below = bcd_solve(&p, 0.99 * a, &DVector::zeros(15), &SolverConfig::default()).unwrap();
    assert_eq!(below.active_groups.len(), 1);
}
