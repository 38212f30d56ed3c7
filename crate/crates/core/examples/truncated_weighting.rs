// Compares the group operators produced by the identity weighting and by
// the truncated pseudoinverse on a desk-scale head model: how strongly
// each group's penalty norm depends on source depth.

use eeg_grouplasso::experiment::{build_setup, GeometryConfig};
use eeg_grouplasso::metrics::depth;
use eeg_grouplasso::weighting::{compose_operator, default_truncation_rank, truncated_pseudoinverse, WeightingOperator};
use eeg_grouplasso::Result;

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

pub fn run_example() -> Result<()> {
    let geometry = GeometryConfig {
        inverse_grid_size: 200,
        true_grid_size: 10,
        ..GeometryConfig::default()
    };
    let setup = build_setup(&geometry, 42)?;
    let lf = &setup.inverse_lead_field;
    let groups = lf.groups();
    let depths: Vec<f64> = setup.inverse.source_positions.iter().map(|p| depth(p, &setup.inverse)).collect();
    let k = default_truncation_rank(lf.rows());
    println!("{} channels, {} positions, truncation rank {k}", lf.rows(), lf.num_positions());

    for weighting in [WeightingOperator::identity(lf.rows()), truncated_pseudoinverse(lf, k)?] {
        let op = compose_operator(lf, &weighting, &groups)?;
        // Largest singular value of each C_g: how cheaply the penalty lets a group fit data.
        let gains: Vec<f64> = op.factors().iter().map(|f| f.singular_values.iter().cloned().fold(0.0, f64::max).ln()).collect();
        let spread = gains.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - gains.iter().cloned().fold(f64::INFINITY, f64::min);
        println!(
            "{:>24}: corr(log gain, depth) = {:+.3}, log gain spread = {:.2}",
            weighting.kind.to_string(),
            correlation(&gains, &depths),
            spread
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    run_example()
}
