// Runs the localization experiment comparing the identity weighting with
// the truncated pseudoinverse on identical trials.
//
// `cargo run --release --example depth_bias_experiment -- [trials] [seed]`

use eeg_grouplasso::experiment::{run_experiment, write_csv, ExperimentConfig};
use eeg_grouplasso::Result;

pub fn run_example(trials: usize, seed: u64) -> Result<()> {
    let config = ExperimentConfig {
        trials,
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&config, seed)?;
    for s in &report.summary {
        println!(
            "{:>24} k={:<4} mean DLE {:6.3} mm  median {:6.3} mm  mean DOE {:.4} rad  grid floor {:.3} mm  in bracket {}/{}",
            s.weighting.to_string(),
            s.k.map_or("-".into(), |k| k.to_string()),
            s.mean_dle_mm,
            s.median_dle_mm,
            s.mean_doe_rad,
            s.mean_theoretical_min_dle_mm,
            s.in_bracket,
            s.rows
        );
    }
    let mut csv = Vec::new();
    write_csv(&report.rows, &mut csv)?;
    println!("{} CSV rows", csv.split(|&b| b == b'\n').filter(|l| !l.is_empty()).count() - 1);
    Ok(())
}

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let trials = args.next().map_or(Ok(10), |a| a.parse()).expect("trials must be an integer");
    let seed = args.next().map_or(Ok(42), |a| a.parse()).expect("seed must be an integer");
    run_example(trials, seed)
}
