// Builds a 32-electrode montage and a random source grid, assembles the
// average-referenced lead field and simulates one noisy measurement.

use eeg_grouplasso::forward::{build_lead_field, place_electrodes, sample_source_grid, simulate_measurement, GridSampling, HeadGeometry, DEFAULT_CONDUCTIVITY};
use eeg_grouplasso::model::DipoleSource;
use eeg_grouplasso::Result;
use nalgebra::Vector3;

pub fn run_example() -> Result<()> {
    let electrodes = place_electrodes(32, 90.0)?;
    let grid = sample_source_grid(
        &GridSampling {
            count: 100,
            ball_radius: 76.5,
            min_separation: 2.0,
            min_electrode_distance: 15.0,
            seed: 1,
            max_attempts: 100_000,
        },
        &electrodes,
    )?;
    let head = HeadGeometry {
        scalp_radius: 90.0,
        source_shell_fraction: 0.85,
        conductivity: DEFAULT_CONDUCTIVITY,
        min_separation: 2.0,
        electrode_positions: electrodes,
        source_positions: grid,
    };
    head.validate()?;
    let lf = build_lead_field(&head)?;
    println!("lead field: {} channels x {} unknowns", lf.rows(), lf.cols());

    // Column-block norms fall off with depth.
    let mut by_radius: Vec<(f64, f64)> = (0..lf.num_positions())
        .map(|j| (head.source_positions[j].norm(), lf.matrix.columns(3 * j, 3).norm()))
        .collect();
    by_radius.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (deep, shallow) = (by_radius[0], by_radius[by_radius.len() - 1]);
    println!("deepest source r = {:.1} mm: block norm {:.3e}", deep.0, deep.1);
    println!("shallowest source r = {:.1} mm: block norm {:.3e}", shallow.0, shallow.1);

    let source = DipoleSource::new(head.source_positions[7], Vector3::new(0.0, 0.0, 1.0), 7)?;
    let meas = simulate_measurement(&lf, &[source], 0.05, 99)?;
    println!(
        "clean norm {:.3e}, noise norm {:.3e} ({:.1}% of clean)",
        meas.clean_vector().norm(),
        meas.noise_norm(),
        100.0 * meas.noise_norm() / meas.clean_vector().norm()
    );
    Ok(())
}

fn main() -> Result<()> {
    run_example()
}
