// Picks the regularization weight of one simulated EEG trial by the
// discrepancy principle, for both weightings, and prints the search.

use eeg_grouplasso::experiment::{build_setup, noise_estimate, plant_trial, trial_seed, ExperimentConfig, GeometryConfig};
use eeg_grouplasso::metrics::{dle, doe, extract_dipoles};
use eeg_grouplasso::solver::{alpha_max, morozov_select_alpha};
use eeg_grouplasso::weighting::{compose_operator, problem_for_data, weighting_from_spec};
use eeg_grouplasso::Result;

pub fn run_example() -> Result<()> {
    let config = ExperimentConfig {
        geometry: GeometryConfig {
            inverse_grid_size: 200,
            true_grid_size: 200,
            ..GeometryConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let setup = build_setup(&config.geometry, 42)?;
    let (sources, meas) = plant_trial(&config, &setup, trial_seed(42, 0))?;
    let lf = &setup.inverse_lead_field;
    let groups = lf.groups();
    let m = &config.morozov;
    for spec in &config.weightings {
        let weighting = weighting_from_spec(lf, spec)?;
        let op = compose_operator(lf, &weighting, &groups)?;
        let problem = problem_for_data(&op, &weighting, &meas.noisy_vector())?;
        let delta = noise_estimate(&config, &problem, &meas);
        let a_max = alpha_max(&problem);
        let sel = morozov_select_alpha(&problem, delta, m.tau, (m.alpha_lo_fraction * a_max, a_max), m.max_bisections, m.measure, &config.solver)?;
        println!("{} (k = {:?}): delta = {delta:.4e}", weighting.kind, weighting.k);
        for (alpha, misfit) in &sel.evaluations {
            println!("    alpha/alpha_max = {:.3e}  misfit/delta = {:.4}", alpha / a_max, misfit / delta);
        }
        let est = extract_dipoles(&sel.result.x_vector(), &groups, &setup.inverse.source_positions, 1)?;
        println!(
            "    {:?} after {} solves; DLE {:.2} mm, DOE {:.3} rad",
            sel.status,
            sel.evaluations.len(),
            dle(&sources[0].position, &est[0].position),
            doe(&sources[0].moment, &est[0].moment)?
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    run_example()
}
