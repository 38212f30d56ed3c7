// Recovers a planted single-group source from exact data by driving the
// regularization weight towards zero, then undoes the shrinkage.

use eeg_grouplasso::model::{scatter, ProblemInstance};
use eeg_grouplasso::solver::{pursuit_solve, SolverConfig};
use eeg_grouplasso::theory::instances::random_single_group;
use eeg_grouplasso::theory::{rescale_by_gamma, PURSUIT_EPSILON};
use eeg_grouplasso::Result;
use nalgebra::DVector;

pub fn run_example() -> Result<()> {
    let inst = random_single_group(12, 10, 3, 7)?;
    let mut x_star = DVector::zeros(inst.groups.n());
    scatter(&mut x_star, inst.groups.group(inst.g_star), &inst.x_star_g);
    let problem = ProblemInstance::new(inst.c.clone(), &inst.c * &x_star, inst.groups.clone())?;
    let outcome = pursuit_solve(&problem, PURSUIT_EPSILON, &SolverConfig::precise())?;
    for stage in outcome.stages.iter().step_by(8) {
        println!("alpha {:.3e}: active {:?}, residual {:.3e}", stage.alpha, stage.active_groups, stage.residual);
    }
    let x_hat = rescale_by_gamma(&problem, &outcome.result);
    println!(
        "{:?} after {} stages; planted group {}, recovered {:?}, relative error {:.2e}",
        outcome.stop,
        outcome.stages.len(),
        inst.g_star,
        outcome.result.active_groups,
        (&x_hat - &x_star).norm() / x_star.norm()
    );
    Ok(())
}

fn main() -> Result<()> {
    run_example()
}
