// Certifies the recovery guarantees on seeded instances: single-group
// pursuit, the shrinkage law, disjoint multi-group recovery, and a
// degenerate instance whose assumption fails.

use eeg_grouplasso::theory::instances::dense_multi_group;
use eeg_grouplasso::theory::{check_disjoint_images, run_suite, SuiteConfig, SUPPORT_TOL};
use eeg_grouplasso::Result;

pub fn run_example() -> Result<()> {
    let report = run_suite(&SuiteConfig {
        seeds: 5,
        ..SuiteConfig::default()
    })?;
    for r in &report.reports {
        let worst = r.error_metrics.iter().filter(|(k, _)| k.contains("error") || k.contains("deviation")).map(|(_, v)| *v).fold(0.0, f64::max);
        println!(
            "{:?} seed {:?}: {:?}, support {:?}, worst error {worst:.1e}",
            r.theorem_id, r.instance.seed, r.verdict, r.recovered_support
        );
    }
    println!("passed {}, failed {}, not applicable {}", report.passed, report.failed, report.not_applicable);

    // On a dense Gaussian operator every group image is everything.
    let d = dense_multi_group(12, 10, 2, 0)?;
    let check = check_disjoint_images(&d.c, &d.groups, &d.planted, SUPPORT_TOL)?;
    println!("dense operator, planted {:?}: disjoint = {}, witness {:?}", d.planted, check.pass, check.witness);
    Ok(())
}

fn main() -> Result<()> {
    run_example()
}
