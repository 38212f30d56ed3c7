use std::f64::consts::PI;

use eeg_grouplasso::metrics::{dle, doe};
use eeg_grouplasso::model::{scatter, subvector, ColumnLayout, GroupStructure, LeadField, ProblemInstance};
use eeg_grouplasso::solver::{alpha_max, bcd_solve, SolverConfig};
use eeg_grouplasso::theory::group_image;
use nalgebra::{DMatrix, DVector, Vector3};
use proptest::prelude::*;

fn vec3() -> impl Strategy<Value = Vector3<f64>> {
    (-100.0..100.0f64, -100.0..100.0f64, -100.0..100.0f64).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn nonzero_vec3() -> impl Strategy<Value = Vector3<f64>> {
    vec3().prop_filter("nonzero", |v| v.norm() > 1e-3)
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0..1.0f64, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

proptest! {
    #[test]
    fn scatter_inverts_subvector(values in prop::collection::vec(-10.0..10.0f64, 12), g in 0usize..4) {
        let groups = GroupStructure::dipoles(4).unwrap();
        let x = DVector::from_vec(values);
        let sub = subvector(&x, groups.group(g)).unwrap();
        let mut y = DVector::zeros(12);
        scatter(&mut y, groups.group(g), &sub);
        for i in 0..12 {
            let expected = if groups.group(g).contains(&i) { x[i] } else { 0.0 };
            prop_assert_eq!(y[i], expected);
        }
    }

    #[test]
    fn dle_is_a_metric(a in vec3(), b in vec3(), c in vec3()) {
        prop_assert!(dle(&a, &b) >= 0.0);
        prop_assert_eq!(dle(&a, &a), 0.0);
        prop_assert!((dle(&a, &b) - dle(&b, &a)).abs() <= 1e-12);
        prop_assert!(dle(&a, &c) <= dle(&a, &b) + dle(&b, &c) + 1e-9);
    }

    #[test]
    fn doe_is_sign_complementary_and_scale_free(q1 in nonzero_vec3(), q2 in nonzero_vec3(), s in 0.01..100.0f64) {
        let d = doe(&q1, &q2).unwrap();
        prop_assert!((0.0..=PI).contains(&d));
        prop_assert!((doe(&q1, &-q2).unwrap() - (PI - d)).abs() <= 1e-6);
        prop_assert!((doe(&q1, &(q2 * s)).unwrap() - d).abs() <= 1e-6);
    }

    #[test]
    fn group_image_grows_as_the_threshold_shrinks(c in matrix(6, 12), g in 0usize..4) {
        let groups = GroupStructure::dipoles(4).unwrap();
        let loose = group_image(&c, &groups, g, 1e-2).unwrap().groups;
        let tight = group_image(&c, &groups, g, 1e-10).unwrap().groups;
        prop_assert!(loose.is_subset(&tight));
    }

    #[test]
    fn relayout_round_trips(c in matrix(4, 9)) {
        let lf = LeadField::new(c, ColumnLayout::ComponentMajor).unwrap();
        let back = lf.relayout(ColumnLayout::Stacked).relayout(ColumnLayout::ComponentMajor);
        prop_assert_eq!(back, lf);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fit_and_penalty_are_monotone_in_alpha(c in matrix(8, 12), b in prop::collection::vec(-1.0..1.0f64, 8)) {
        let p = ProblemInstance::new(c, DVector::from_vec(b), GroupStructure::dipoles(4).unwrap()).unwrap();
        let a = alpha_max(&p);
        prop_assume!(a > 1e-6);
        let cfg = SolverConfig::default();
        let zero = DVector::zeros(12);
        let mut prev: Option<(f64, f64)> = None;
        for f in [0.9, 0.5, 0.2, 0.05] {
            let res = bcd_solve(&p, f * a, &zero, &cfg).unwrap();
            prop_assert!(res.converged);
            let fit = res.discrepancy_transformed;
            let pen = (res.objective - 0.5 * fit * fit) / res.alpha;
            // Smaller α never worsens the fit nor shrinks the penalty.
            if let Some((fit0, pen0)) = prev {
                prop_assert!(fit <= fit0 + 1e-6);
                prop_assert!(pen + 1e-6 >= pen0);
            }
            prev = Some((fit, pen));
        }
    }
}
