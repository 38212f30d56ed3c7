//! Reading dipoles off a minimizer and scoring them: localization error,
//! orientation error, source matching and depth.

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::forward::HeadGeometry;
use crate::model::GroupStructure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedDipole {
    pub group: usize,
    pub position: Vector3<f64>,
    pub moment: Vector3<f64>,
    pub amplitude: f64,
}

/// The `count` groups of largest `‖x_g‖₂`, strongest first. Groups are
/// matched to `grid` by index.
pub fn extract_dipoles(
    x: &DVector<f64>,
    groups: &GroupStructure,
    grid: &[Vector3<f64>],
    count: usize,
) -> Result<Vec<EstimatedDipole>> {
    if count == 0 {
        return invalid("count must be at least 1");
    }
    if grid.len() != groups.len() {
        return invalid(format!("grid has {} positions but there are {} groups", grid.len(), groups.len()));
    }
    if x.len() != groups.n() {
        return invalid("x length does not match the group structure");
    }
    let norms = groups.group_norms(x);
    let mut order: Vec<usize> = (0..norms.len()).filter(|&g| norms[g] > 0.0).collect();
    // Stable on ties: lower group id first.
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    Ok(order
        .into_iter()
        .take(count)
        .map(|g| {
            let idx = groups.group(g);
            let mut moment = Vector3::zeros();
            for (c, &i) in idx.iter().take(3).enumerate() {
                moment[c] = x[i];
            }
            EstimatedDipole {
                group: g,
                position: grid[g],
                moment,
                amplitude: norms[g],
            }
        })
        .collect())
}

/// Dipole localization error, in the units of the positions.
pub fn dle(true_position: &Vector3<f64>, estimated_position: &Vector3<f64>) -> f64 {
    (true_position - estimated_position).norm()
}

/// Dipole orientation error in radians, in `[0, π]`.
pub fn doe(true_moment: &Vector3<f64>, estimated_moment: &Vector3<f64>) -> Result<f64> {
    let (a, b) = (true_moment.norm(), estimated_moment.norm());
    if a == 0.0 || b == 0.0 {
        return invalid("orientation error needs nonzero moments");
    }
    Ok((true_moment.dot(estimated_moment) / (a * b)).clamp(-1.0, 1.0).acos())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// `(true index, estimated index)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_true: Vec<usize>,
    pub unmatched_estimated: Vec<usize>,
    pub total_dle: f64,
}

const MAX_MATCH: usize = 4;

fn permutations(items: &[usize], k: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if prefix.len() == k {
        out.push(prefix.clone());
        return;
    }
    for &i in items {
        if !prefix.contains(&i) {
            prefix.push(i);
            permutations(items, k, prefix, out);
            prefix.pop();
        }
    }
}

/// Assignment of estimates to true sources minimizing the summed DLE, found
/// by enumerating all injective maps from the smaller list into the larger.
pub fn match_sources(true_positions: &[Vector3<f64>], estimated: &[Vector3<f64>]) -> Result<Matching> {
    if true_positions.len() > MAX_MATCH || estimated.len() > MAX_MATCH {
        return invalid(format!("matching supports at most {MAX_MATCH} sources per side"));
    }
    let k = true_positions.len().min(estimated.len());
    let est_ids: Vec<usize> = (0..estimated.len()).collect();
    let true_ids: Vec<usize> = (0..true_positions.len()).collect();
    let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
    let mut candidates = Vec::new();
    if true_positions.len() <= estimated.len() {
        permutations(&est_ids, k, &mut Vec::new(), &mut candidates);
        for perm in candidates {
            let pairs: Vec<(usize, usize)> = true_ids.iter().copied().zip(perm).collect();
            let cost: f64 = pairs.iter().map(|&(t, e)| dle(&true_positions[t], &estimated[e])).sum();
            if best.as_ref().map_or(true, |(c, _)| cost < *c) {
                best = Some((cost, pairs));
            }
        }
    } else {
        permutations(&true_ids, k, &mut Vec::new(), &mut candidates);
        for perm in candidates {
            let mut pairs: Vec<(usize, usize)> = perm.into_iter().zip(est_ids.iter().copied()).collect();
            pairs.sort_unstable();
            let cost: f64 = pairs.iter().map(|&(t, e)| dle(&true_positions[t], &estimated[e])).sum();
            if best.as_ref().map_or(true, |(c, _)| cost < *c) {
                best = Some((cost, pairs));
            }
        }
    }
    let (total_dle, pairs) = best.unwrap_or((0.0, Vec::new()));
    let unmatched_true = true_ids.into_iter().filter(|t| !pairs.iter().any(|p| p.0 == *t)).collect();
    let unmatched_estimated = est_ids.into_iter().filter(|e| !pairs.iter().any(|p| p.1 == *e)).collect();
    Ok(Matching {
        pairs,
        unmatched_true,
        unmatched_estimated,
        total_dle,
    })
}

/// Distance from `position` to the scalp sphere.
pub fn depth(position: &Vector3<f64>, geometry: &HeadGeometry) -> f64 {
    geometry.scalp_radius - position.norm()
}

/// Best achievable DLE when estimates are restricted to `grid`.
pub fn theoretical_min_dle(true_position: &Vector3<f64>, grid: &[Vector3<f64>]) -> Result<f64> {
    if grid.is_empty() {
        return invalid("inverse grid is empty");
    }
    Ok(grid.iter().map(|p| dle(true_position, p)).fold(f64::INFINITY, f64::min))
}
