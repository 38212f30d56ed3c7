//! Weighting operators `B` and composition of the transformed problem `C = B·A`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{GroupOperator, GroupStructure, LeadField, ProblemInstance, WeightingInfo, WeightingKind};

/// Relative cutoff below which a singular value of `A` counts as zero.
pub const RANK_TOL: f64 = 1e-12;

/// Truncation rank used with a 228-channel montage.
pub const REFERENCE_TRUNCATION: usize = 150;
pub const REFERENCE_CHANNELS: usize = 228;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightingOperator {
    pub kind: WeightingKind,
    pub k: Option<usize>,
    pub matrix: DMatrix<f64>,
}

impl WeightingOperator {
    pub fn identity(m: usize) -> Self {
        Self {
            kind: WeightingKind::Identity,
            k: None,
            matrix: DMatrix::identity(m, m),
        }
    }

    pub fn info(&self) -> WeightingInfo {
        WeightingInfo {
            kind: self.kind,
            k: self.k,
        }
    }
}

/// Weighting selection as it appears in configs and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightingSpec {
    pub kind: WeightingKind,
    /// Truncation rank; `None` picks [`default_truncation_rank`].
    pub k: Option<usize>,
}

/// `min(m, 150) · m / 228` rounded and clamped to `[1, m]`; 150 at 228 channels.
pub fn default_truncation_rank(m: usize) -> usize {
    let base = m.min(REFERENCE_TRUNCATION) as f64;
    let scaled = (base * m as f64 / REFERENCE_CHANNELS as f64).round() as usize;
    scaled.clamp(1, m.max(1))
}

/// Singular triplets of `a` sorted by decreasing singular value.
pub(crate) fn sorted_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    let s: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u_sorted = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v_sorted = DMatrix::from_fn(v_t.ncols(), order.len(), |r, c| v_t[(order[c], r)]);
    (u_sorted, s, v_sorted)
}

/// `A_k^† = Σ_{i≤k} σ_i⁻¹ v_i u_iᵀ`.
pub fn truncated_pseudoinverse(a: &LeadField, k: usize) -> Result<WeightingOperator> {
    let (m, n) = (a.rows(), a.cols());
    if k == 0 || k > m.min(n) {
        return invalid(format!("truncation rank {k} outside 1..={}", m.min(n)));
    }
    let (u, s, v) = sorted_svd(&a.matrix);
    let top = s.first().copied().unwrap_or(0.0);
    let effective = s.iter().filter(|&&v| top > 0.0 && v > RANK_TOL * top).count();
    if k > effective {
        return Err(Error::Rank {
            requested: k,
            effective,
        });
    }
    let mut vk = v.columns(0, k).into_owned();
    for (i, sigma) in s.iter().take(k).enumerate() {
        vk.column_mut(i).scale_mut(1.0 / sigma);
    }
    let matrix = vk * u.columns(0, k).transpose();
    Ok(WeightingOperator {
        kind: WeightingKind::TruncatedPseudoinverse,
        k: Some(k),
        matrix,
    })
}

pub fn weighting_from_spec(a: &LeadField, spec: &WeightingSpec) -> Result<WeightingOperator> {
    match spec.kind {
        WeightingKind::Identity => Ok(WeightingOperator::identity(a.rows())),
        WeightingKind::TruncatedPseudoinverse => {
            let k = spec.k.unwrap_or_else(|| default_truncation_rank(a.rows()));
            truncated_pseudoinverse(a, k)
        }
    }
}

/// Builds the shared operator part of `C = B·A` with factorizations cached.
pub fn compose_operator(
    a: &LeadField,
    b: &WeightingOperator,
    groups: &GroupStructure,
) -> Result<Arc<GroupOperator>> {
    if b.matrix.ncols() != a.rows() {
        return invalid(format!(
            "weighting has {} columns but lead field has {} rows",
            b.matrix.ncols(),
            a.rows()
        ));
    }
    if groups.n() != a.cols() {
        return invalid(format!(
            "groups span {} unknowns but lead field has {} columns",
            groups.n(),
            a.cols()
        ));
    }
    let c = &b.matrix * &a.matrix;
    let (u, s, v) = sorted_svd(&b.matrix);
    let top = s.first().copied().unwrap_or(0.0);
    let rank = s.iter().filter(|&&x| top > 0.0 && x > RANK_TOL * top).count();
    // Both C and Bb lie in range(B); iterate in an orthonormal basis of it.
    let embedding = (b.matrix.nrows() > rank).then(|| u.columns(0, rank).into_owned());
    let retained = (rank < b.matrix.ncols()).then(|| v.columns(0, rank).into_owned());
    Ok(Arc::new(GroupOperator::build(
        c,
        groups.clone(),
        embedding,
        Some(a.matrix.clone()),
        retained,
        Some(b.info()),
    )?))
}

/// The transformed problem for data `b` on a prepared operator.
pub fn problem_for_data(
    op: &Arc<GroupOperator>,
    b_op: &WeightingOperator,
    b: &DVector<f64>,
) -> Result<ProblemInstance> {
    if b.len() != b_op.matrix.ncols() {
        return invalid(format!(
            "measurement has length {} but weighting expects {}",
            b.len(),
            b_op.matrix.ncols()
        ));
    }
    ProblemInstance::from_operator(Arc::clone(op), &b_op.matrix * b, Some(b.clone()))
}

pub fn compose_problem(
    a: &LeadField,
    b_op: &WeightingOperator,
    b: &DVector<f64>,
    groups: &GroupStructure,
) -> Result<ProblemInstance> {
    let op = compose_operator(a, b_op, groups)?;
    problem_for_data(&op, b_op, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ColumnLayout;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    fn diag_field() -> LeadField {
        // 2x3 so the column count is a multiple of three; third column zero.
        let m = DMatrix::from_row_slice(2, 3, &[2.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        LeadField::new(m, ColumnLayout::ComponentMajor).unwrap()
    }

    #[test]
    fn diagonal_pseudoinverse() {
        let b = truncated_pseudoinverse(&diag_field(), 2).unwrap();
        let expect = DMatrix::from_row_slice(3, 2, &[0.5, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!((b.matrix - expect).norm() < 1e-15);

        let b = truncated_pseudoinverse(&diag_field(), 1).unwrap();
        let expect = DMatrix::from_row_slice(3, 2, &[0.5, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((b.matrix - expect).norm() < 1e-15);
    }

    #[test]
    fn rank_error_reports_effective_rank() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let lf = LeadField::new(m, ColumnLayout::ComponentMajor).unwrap();
        match truncated_pseudoinverse(&lf, 3) {
            Err(Error::Rank { requested: 3, effective: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(truncated_pseudoinverse(&lf, 0).is_err());
    }

    #[test]
    fn default_rank_scales_with_channels() {
        assert_eq!(default_truncation_rank(228), 150);
        assert_eq!(default_truncation_rank(64), 18);
        assert_eq!(default_truncation_rank(256), 168);
        assert_eq!(default_truncation_rank(1), 1);
    }

    #[test]
    fn identity_composition_is_passthrough() {
        let a = LeadField::new(gaussian(4, 9, 1), ColumnLayout::ComponentMajor).unwrap();
        let b = DVector::zeros(4);
        let p = compose_problem(&a, &WeightingOperator::identity(4), &b, &a.groups()).unwrap();
        assert_eq!(p.c(), &a.matrix);
        assert_eq!(p.rhs(), &DVector::zeros(4));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = LeadField::new(gaussian(4, 9, 1), ColumnLayout::ComponentMajor).unwrap();
        let b = DVector::zeros(5);
        assert!(compose_problem(&a, &WeightingOperator::identity(4), &b, &a.groups()).is_err());
        assert!(compose_problem(&a, &WeightingOperator::identity(5), &DVector::zeros(4), &a.groups()).is_err());
    }
}
