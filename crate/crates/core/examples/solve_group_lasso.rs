// Solves a small Group Lasso problem at a few regularization weights and
// prints the certificate of each solve.

use eeg_grouplasso::model::ProblemInstance;
use eeg_grouplasso::solver::{alpha_max, bcd_solve, kkt_residual, SolverConfig};
use eeg_grouplasso::theory::instances::{contiguous_groups, gaussian_matrix, gaussian_vector};
use eeg_grouplasso::Result;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let groups = contiguous_groups(10, 3)?;
    let c = gaussian_matrix(12, 30, &mut rng);
    let b = gaussian_vector(12, &mut rng);
    let problem = ProblemInstance::new(c, b, groups)?;
    let a_max = alpha_max(&problem);
    println!("alpha_max = {a_max:.4}");

    let mut warm = DVector::zeros(problem.n());
    for f in [0.9, 0.5, 0.2, 0.05] {
        let res = bcd_solve(&problem, f * a_max, &warm, &SolverConfig::default())?;
        println!(
            "alpha = {:.4}: objective {:.6}, misfit {:.4}, active groups {:?}, {} sweeps, KKT {:.1e}",
            res.alpha, res.objective, res.discrepancy_transformed, res.active_groups, res.iterations, res.kkt_residual
        );
        assert!(res.converged);
        assert_eq!(kkt_residual(&problem, res.alpha, &res.x_vector())?, res.kkt_residual);
        warm = res.x_vector();
    }
    Ok(())
}

fn main() -> Result<()> {
    run_example()
}
