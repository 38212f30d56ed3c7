mod common;

use std::f64::consts::PI;

use common::*;
use eeg_grouplasso::metrics::{depth, dle, doe, extract_dipoles, match_sources, theoretical_min_dle};
use eeg_grouplasso::model::GroupStructure;
use eeg_grouplasso::forward::HeadGeometry;
use nalgebra::{DVector, Vector3};
use rand::Rng;

fn random_points(count: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| Vector3::new(r.gen_range(-50.0..50.0), r.gen_range(-50.0..50.0), r.gen_range(-50.0..50.0)))
        .collect()
}

#[test]
fn dle_and_doe_from_coordinates() {
    let a = Vector3::new(1.0, 2.0, 3.0);
    let b = Vector3::new(4.0, 6.0, 3.0);
    assert_eq!(dle(&a, &b), 5.0);
    let x = Vector3::new(1.0, 0.0, 0.0);
    let y = Vector3::new(0.0, 2.0, 0.0);
    assert!((doe(&x, &y).unwrap() - PI / 2.0).abs() < 1e-15);
    assert!((doe(&x, &(x * 3.0)).unwrap()).abs() < 1e-7);
    assert!((doe(&x, &(-x)).unwrap() - PI).abs() < 1e-7);
    let diag = Vector3::new(1.0, 1.0, 0.0);
    assert!((doe(&x, &diag).unwrap() - PI / 4.0).abs() < 1e-12);
    assert!(doe(&x, &Vector3::zeros()).is_err());
}

#[test]
fn matching_agrees_with_subset_dynamic_programming() {
    for seed in 0..200 {
        let t = random_points(1 + (seed as usize % 3), seed);
        let e = random_points(3, 1000 + seed);
        let m = match_sources(&t, &e).unwrap();
        let cost: Vec<Vec<f64>> = t.iter().map(|p| e.iter().map(|q| dle(p, q)).collect()).collect();
        let oracle = min_assignment_cost(&cost);
        assert!((m.total_dle - oracle).abs() <= 1e-9, "seed {seed}");
        assert_eq!(m.pairs.len(), t.len());
        assert_eq!(m.unmatched_estimated.len(), e.len() - t.len());
        let recomputed: f64 = m.pairs.iter().map(|&(i, j)| dle(&t[i], &e[j])).sum();
        assert!((recomputed - m.total_dle).abs() <= 1e-12);
    }
}

#[test]
fn matching_with_fewer_estimates_leaves_true_sources_unmatched() {
    let t = random_points(3, 1);
    let e = vec![t[2] + Vector3::new(0.1, 0.0, 0.0)];
    let m = match_sources(&t, &e).unwrap();
    assert_eq!(m.pairs, vec![(2, 0)]);
    assert_eq!(m.unmatched_true, vec![0, 1]);
    assert!(match_sources(&random_points(5, 2), &e).is_err());
}

#[test]
fn theoretical_minimum_is_the_nearest_grid_point() {
    let grid = random_points(500, 3);
    for q in random_points(20, 4) {
        let scan = grid.iter().map(|p| (p - q).norm()).fold(f64::INFINITY, f64::min);
        assert_eq!(theoretical_min_dle(&q, &grid).unwrap(), scan);
    }
    assert_eq!(theoretical_min_dle(&grid[17], &grid).unwrap(), 0.0);
    assert!(theoretical_min_dle(&grid[0], &[]).is_err());
}

#[test]
fn strongest_groups_are_extracted_first() {
    let groups = GroupStructure::dipoles(4).unwrap();
    let grid = random_points(4, 5);
    let x = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 3.0, 4.0, 0.1, 0.0, 0.0]);
    let est = extract_dipoles(&x, &groups, &grid, 2).unwrap();
    assert_eq!(est.iter().map(|e| e.group).collect::<Vec<_>>(), vec![2, 1]);
    assert_eq!(est[0].position, grid[2]);
    assert_eq!(est[0].moment, Vector3::new(0.0, 3.0, 4.0));
    assert_eq!(est[0].amplitude, 5.0);
    // Zero groups are never reported.
    assert_eq!(extract_dipoles(&x, &groups, &grid, 4).unwrap().len(), 3);
}

#[test]
fn depth_is_distance_below_the_scalp() {
    let g = HeadGeometry {
        scalp_radius: 90.0,
        source_shell_fraction: 0.85,
        conductivity: 3.3e-4,
        min_separation: 2.0,
        electrode_positions: Vec::new(),
        source_positions: Vec::new(),
    };
    assert_eq!(depth(&Vector3::new(0.0, 30.0, 40.0), &g), 40.0);
    assert_eq!(depth(&Vector3::zeros(), &g), 90.0);
}
