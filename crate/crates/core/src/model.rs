//! Shared domain types: group partitions, lead fields, planted dipoles and the
//! composed problem with its cached per-group factorizations.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::solver::SolverConfig;

/// Relative singular-value cutoff defining the numerical rank of a group block.
pub const GROUP_RANK_TOL: f64 = 1e-10;

/// Relative cutoff used to decide whether a group is active.
pub const ACTIVITY_TOL: f64 = 1e-8;

/// Partition (not necessarily covering) of `0..n` into non-empty disjoint groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStructure {
    groups: Vec<Vec<usize>>,
    n: usize,
}

impl GroupStructure {
    pub fn new(groups: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for (gi, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return invalid(format!("group {gi} is empty"));
            }
            for &i in g {
                if i >= n {
                    return invalid(format!("group {gi} index {i} out of range 0..{n}"));
                }
                if seen[i] {
                    return invalid(format!("index {i} appears in more than one group"));
                }
                seen[i] = true;
            }
        }
        Ok(Self { groups, n })
    }

    /// Dipole preset: position `j` owns components `{3j, 3j+1, 3j+2}`.
    pub fn dipoles(num_positions: usize) -> Result<Self> {
        make_dipole_groups(num_positions)
    }

    /// Every index forms its own group.
    pub fn singletons(n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("singleton structure needs n >= 1");
        }
        Self::new((0..n).map(|i| vec![i]).collect(), n)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn group(&self, g: usize) -> &[usize] {
        &self.groups[g]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.groups.iter().map(|g| g.as_slice())
    }

    pub fn covers(&self) -> bool {
        self.groups.iter().map(Vec::len).sum::<usize>() == self.n
    }

    /// Euclidean norm of every group block of `x`.
    pub fn group_norms(&self, x: &DVector<f64>) -> Vec<f64> {
        self.groups
            .iter()
            .map(|g| g.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt())
            .collect()
    }

    /// Groups whose block norm exceeds `ACTIVITY_TOL` times the largest block norm.
    pub fn active_groups(&self, x: &DVector<f64>) -> Vec<usize> {
        let norms = self.group_norms(x);
        let top = norms.iter().cloned().fold(0.0, f64::max);
        if top == 0.0 {
            return Vec::new();
        }
        norms
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > ACTIVITY_TOL * top)
            .map(|(g, _)| g)
            .collect()
    }

    /// Columns of `m` belonging to group `g`, in group order.
    pub fn columns(&self, m: &DMatrix<f64>, g: usize) -> DMatrix<f64> {
        m.select_columns(self.group(g))
    }
}

pub fn make_dipole_groups(num_positions: usize) -> Result<GroupStructure> {
    if num_positions == 0 {
        return invalid("dipole group structure needs at least one position");
    }
    let groups = (0..num_positions)
        .map(|j| vec![3 * j, 3 * j + 1, 3 * j + 2])
        .collect();
    Ok(GroupStructure {
        groups,
        n: 3 * num_positions,
    })
}

pub fn subvector(x: &DVector<f64>, g: &[usize]) -> Result<DVector<f64>> {
    if let Some(&bad) = g.iter().find(|&&i| i >= x.len()) {
        return invalid(format!("index {bad} out of range for vector of length {}", x.len()));
    }
    Ok(DVector::from_iterator(g.len(), g.iter().map(|&i| x[i])))
}

/// Writes `values` into `x` at the indices of `g`.
pub fn scatter(x: &mut DVector<f64>, g: &[usize], values: &DVector<f64>) {
    for (k, &i) in g.iter().enumerate() {
        x[i] = values[k];
    }
}

/// Column ordering convention of a lead field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnLayout {
    /// Columns `3j, 3j+1, 3j+2` are the x/y/z moments of position `j`.
    ComponentMajor,
    /// All x components, then all y, then all z: `{j, j+p, j+2p}`.
    Stacked,
}

impl ColumnLayout {
    /// Column holding component `c` of position `j` among `p` positions.
    pub fn column(self, j: usize, c: usize, p: usize) -> usize {
        match self {
            ColumnLayout::ComponentMajor => 3 * j + c,
            ColumnLayout::Stacked => j + c * p,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeadField {
    pub matrix: DMatrix<f64>,
    pub layout: ColumnLayout,
}

impl LeadField {
    pub fn new(matrix: DMatrix<f64>, layout: ColumnLayout) -> Result<Self> {
        if matrix.ncols() % 3 != 0 {
            return invalid(format!("lead field has {} columns, not a multiple of 3", matrix.ncols()));
        }
        if let Some(k) = matrix.iter().position(|v| !v.is_finite()) {
            return invalid(format!("lead field entry {k} is not finite"));
        }
        Ok(Self { matrix, layout })
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn num_positions(&self) -> usize {
        self.matrix.ncols() / 3
    }

    pub fn is_underdetermined(&self) -> bool {
        self.rows() < self.cols()
    }

    /// Same operator with its columns reordered into `layout`.
    pub fn relayout(&self, layout: ColumnLayout) -> LeadField {
        if layout == self.layout {
            return self.clone();
        }
        let p = self.num_positions();
        let mut out = DMatrix::zeros(self.rows(), self.cols());
        for j in 0..p {
            for c in 0..3 {
                let src = self.layout.column(j, c, p);
                let dst = layout.column(j, c, p);
                out.set_column(dst, &self.matrix.column(src));
            }
        }
        LeadField { matrix: out, layout }
    }

    /// Group structure matching this lead field's layout.
    pub fn groups(&self) -> GroupStructure {
        let p = self.num_positions();
        let groups = (0..p)
            .map(|j| (0..3).map(|c| self.layout.column(j, c, p)).collect())
            .collect();
        GroupStructure {
            groups,
            n: self.cols(),
        }
    }
}

/// A planted current dipole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipoleSource {
    pub position: Vector3<f64>,
    pub moment: Vector3<f64>,
    pub group_id: usize,
}

impl DipoleSource {
    pub fn new(position: Vector3<f64>, moment: Vector3<f64>, group_id: usize) -> Result<Self> {
        if moment.norm() == 0.0 {
            return invalid("planted dipole moment must be nonzero");
        }
        Ok(Self {
            position,
            moment,
            group_id,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingKind {
    Identity,
    TruncatedPseudoinverse,
}

impl std::fmt::Display for WeightingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WeightingKind::Identity => "identity",
            WeightingKind::TruncatedPseudoinverse => "truncated_pseudoinverse",
        })
    }
}

/// Provenance tag for results: which weighting operator produced the problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightingInfo {
    pub kind: WeightingKind,
    pub k: Option<usize>,
}

/// Thin SVD of one group block `C_g = Q_g diag(s) V_gᵀ`, restricted to its numerical rank.
///
/// `Q_g` lives in the solver's working row space (see [`GroupOperator`]).
#[derive(Debug, Clone)]
pub struct GroupFactor {
    pub basis: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub right: DMatrix<f64>,
}

impl GroupFactor {
    pub fn from_block(block: &DMatrix<f64>) -> Self {
        let width = block.ncols();
        let rows = block.nrows();
        let svd = block.clone().svd(true, true);
        let u = svd.u.expect("svd u");
        let v_t = svd.v_t.expect("svd v_t");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let top = order.first().map(|&i| svd.singular_values[i]).unwrap_or(0.0);
        let kept: Vec<usize> = order
            .into_iter()
            .filter(|&i| top > 0.0 && svd.singular_values[i] > GROUP_RANK_TOL * top)
            .collect();
        let mut basis = DMatrix::zeros(rows, kept.len());
        let mut right = DMatrix::zeros(width, kept.len());
        let mut singular_values = Vec::with_capacity(kept.len());
        for (k, &i) in kept.iter().enumerate() {
            basis.set_column(k, &u.column(i));
            right.set_column(k, &v_t.row(i).transpose());
            singular_values.push(svd.singular_values[i]);
        }
        Self {
            basis,
            singular_values,
            right,
        }
    }

    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Coordinates of `C_g x_g` in the basis `Q_g`.
    pub fn coords(&self, x_g: &DVector<f64>) -> DVector<f64> {
        let mut z = self.right.tr_mul(x_g);
        for (k, s) in self.singular_values.iter().enumerate() {
            z[k] *= s;
        }
        z
    }

    /// Minimum-norm `x_g` with `C_g x_g = Q_g z`.
    pub fn solve(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut w = z.clone();
        for (k, s) in self.singular_values.iter().enumerate() {
            w[k] /= s;
        }
        &self.right * w
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.basis.clone();
        for (k, s) in self.singular_values.iter().enumerate() {
            us.column_mut(k).scale_mut(*s);
        }
        us * self.right.transpose()
    }
}

/// The operator side of a problem: `C`, its groups and cached factorizations.
///
/// When `C` has more rows than its range can need (e.g. `C = A_k^† A`, which is
/// `n × n` but of rank `k`), the solver works in an orthonormal coordinate
/// system `E` of the row space that contains both `C` and every admissible
/// right-hand side: `C = E · work_c`. All norms the objective uses are
/// preserved by `E`.
#[derive(Debug, Clone)]
pub struct GroupOperator {
    c: DMatrix<f64>,
    groups: GroupStructure,
    embedding: Option<DMatrix<f64>>,
    work_c: Option<DMatrix<f64>>,
    factors: Vec<GroupFactor>,
    original: Option<DMatrix<f64>>,
    retained: Option<DMatrix<f64>>,
    weighting: Option<WeightingInfo>,
}

impl GroupOperator {
    pub fn new(c: DMatrix<f64>, groups: GroupStructure) -> Result<Self> {
        Self::build(c, groups, None, None, None, None)
    }

    pub(crate) fn build(
        c: DMatrix<f64>,
        groups: GroupStructure,
        embedding: Option<DMatrix<f64>>,
        original: Option<DMatrix<f64>>,
        retained: Option<DMatrix<f64>>,
        weighting: Option<WeightingInfo>,
    ) -> Result<Self> {
        if c.ncols() != groups.n() {
            return invalid(format!(
                "operator has {} columns but groups span {}",
                c.ncols(),
                groups.n()
            ));
        }
        if let Some(k) = c.iter().position(|v| !v.is_finite()) {
            return invalid(format!("operator entry {k} is not finite"));
        }
        if let Some(e) = &embedding {
            if e.nrows() != c.nrows() {
                return invalid("embedding row count differs from operator");
            }
        }
        if let Some(a) = &original {
            if a.ncols() != c.ncols() {
                return invalid("original operator column count differs");
            }
            if let Some(w) = &retained {
                if w.nrows() != a.nrows() {
                    return invalid("retained basis row count differs from original operator");
                }
            }
        }
        let work_c = embedding.as_ref().map(|e| e.tr_mul(&c));
        let work = work_c.as_ref().unwrap_or(&c);
        let factors = (0..groups.len())
            .map(|g| GroupFactor::from_block(&groups.columns(work, g)))
            .collect();
        Ok(Self {
            c,
            groups,
            embedding,
            work_c,
            factors,
            original,
            retained,
            weighting,
        })
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn groups(&self) -> &GroupStructure {
        &self.groups
    }

    pub fn factors(&self) -> &[GroupFactor] {
        &self.factors
    }

    pub fn weighting(&self) -> Option<WeightingInfo> {
        self.weighting
    }

    pub fn original(&self) -> Option<&DMatrix<f64>> {
        self.original.as_ref()
    }

    /// Orthonormal basis of the measurement subspace `range(Bᵀ)` kept by the
    /// weighting; `None` means the whole measurement space.
    pub fn retained(&self) -> Option<&DMatrix<f64>> {
        self.retained.as_ref()
    }

    pub fn embedding(&self) -> Option<&DMatrix<f64>> {
        self.embedding.as_ref()
    }

    /// Matrix the solver iterates with (`C` itself, or `Eᵀ C`).
    pub fn work_c(&self) -> &DMatrix<f64> {
        self.work_c.as_ref().unwrap_or(&self.c)
    }

    pub fn to_work(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.embedding {
            Some(e) => e.tr_mul(v),
            None => v.clone(),
        }
    }

    /// Orthonormal basis of `range(C_g)` expressed in the row space of `C`.
    pub fn group_basis(&self, g: usize) -> DMatrix<f64> {
        match &self.embedding {
            Some(e) => e * &self.factors[g].basis,
            None => self.factors[g].basis.clone(),
        }
    }

    pub fn group_block(&self, g: usize) -> DMatrix<f64> {
        self.groups.columns(&self.c, g)
    }
}

/// `C`, `Bb` and (optionally) the untransformed `A`, `b` for discrepancy reporting.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    op: Arc<GroupOperator>,
    rhs: DVector<f64>,
    work_rhs: DVector<f64>,
    original_b: Option<DVector<f64>>,
}

impl ProblemInstance {
    pub fn new(c: DMatrix<f64>, rhs: DVector<f64>, groups: GroupStructure) -> Result<Self> {
        let op = Arc::new(GroupOperator::new(c, groups)?);
        Self::from_operator(op, rhs, None)
    }

    pub fn from_operator(
        op: Arc<GroupOperator>,
        rhs: DVector<f64>,
        original_b: Option<DVector<f64>>,
    ) -> Result<Self> {
        if rhs.len() != op.c.nrows() {
            return invalid(format!(
                "rhs has length {} but operator has {} rows",
                rhs.len(),
                op.c.nrows()
            ));
        }
        if let (Some(a), Some(b)) = (&op.original, &original_b) {
            if a.nrows() != b.len() {
                return invalid("original data length differs from original operator rows");
            }
        }
        let work_rhs = op.to_work(&rhs);
        Ok(Self {
            op,
            rhs,
            work_rhs,
            original_b,
        })
    }

    /// Same operator, new right-hand side (factorizations are shared).
    pub fn with_rhs(&self, rhs: DVector<f64>, original_b: Option<DVector<f64>>) -> Result<Self> {
        Self::from_operator(Arc::clone(&self.op), rhs, original_b)
    }

    pub fn operator(&self) -> &Arc<GroupOperator> {
        &self.op
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.op.c
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    pub fn groups(&self) -> &GroupStructure {
        &self.op.groups
    }

    pub fn group_factors(&self) -> &[GroupFactor] {
        &self.op.factors
    }

    pub fn n(&self) -> usize {
        self.op.groups.n()
    }

    pub(crate) fn work_rhs(&self) -> &DVector<f64> {
        &self.work_rhs
    }

    pub fn original_b(&self) -> Option<&DVector<f64>> {
        self.original_b.as_ref()
    }

    /// `‖Cx − Bb‖`.
    pub fn discrepancy_transformed(&self, x: &DVector<f64>) -> f64 {
        (self.op.work_c() * x - &self.work_rhs).norm()
    }

    /// `‖P_B(Ax − b)‖`, the measurement-space misfit restricted to the
    /// subspace `range(Bᵀ)` the weighting retains. Equals
    /// [`discrepancy_original`](Self::discrepancy_original) when `B` keeps everything.
    pub fn discrepancy_retained(&self, x: &DVector<f64>) -> f64 {
        match (&self.op.original, &self.original_b, &self.op.retained) {
            (Some(a), Some(b), Some(w)) => w.tr_mul(&(a * x - b)).norm(),
            _ => self.discrepancy_original(x),
        }
    }

    /// `‖Ax − b‖` when the untransformed problem is known, else `‖Cx − Bb‖`.
    pub fn discrepancy_original(&self, x: &DVector<f64>) -> f64 {
        match (&self.op.original, &self.original_b) {
            (Some(a), Some(b)) => (a * x - b).norm(),
            _ => self.discrepancy_transformed(x),
        }
    }
}

/// Output of one regularized solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub alpha: f64,
    pub objective: f64,
    pub discrepancy_original: f64,
    pub discrepancy_transformed: f64,
    /// `‖P_B(Ax − b)‖` with `P_B` the projector onto `range(Bᵀ)`.
    pub discrepancy_retained: f64,
    pub iterations: usize,
    pub converged: bool,
    pub active_groups: Vec<usize>,
    pub kkt_residual: f64,
    /// Objective after every sweep.
    pub objective_trace: Vec<f64>,
    pub config: SolverConfig,
    pub weighting: Option<WeightingInfo>,
}

impl SolveResult {
    pub fn x_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dipole_groups_layout() {
        let g = make_dipole_groups(1).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.n(), 3);
        assert_eq!(g.group(0), &[0, 1, 2]);

        let g = make_dipole_groups(2).unwrap();
        assert_eq!(g.group(0), &[0, 1, 2]);
        assert_eq!(g.group(1), &[3, 4, 5]);

        let g = make_dipole_groups(4).unwrap();
        assert_eq!(g.n(), 12);
        assert_eq!(g.group(3), &[9, 10, 11]);
        assert!(g.covers());
    }

    #[test]
    fn zero_positions_rejected() {
        assert!(make_dipole_groups(0).is_err());
    }

    #[test]
    fn structure_validation() {
        assert!(GroupStructure::new(vec![vec![0, 1], vec![1, 2]], 3).is_err());
        assert!(GroupStructure::new(vec![vec![0, 3]], 3).is_err());
        assert!(GroupStructure::new(vec![vec![]], 3).is_err());
        let partial = GroupStructure::new(vec![vec![0], vec![2]], 3).unwrap();
        assert!(!partial.covers());
    }

    #[test]
    fn subvector_examples() {
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(subvector(&x, &[3, 4, 5]).unwrap().as_slice(), &[4.0, 5.0, 6.0]);
        let z = DVector::zeros(6);
        assert_eq!(subvector(&z, &[0, 1, 2]).unwrap(), DVector::zeros(3));
        let x = DVector::from_vec(vec![7.0, 0.0, 0.0]);
        assert_eq!(subvector(&x, &[0, 1, 2]).unwrap().as_slice(), &[7.0, 0.0, 0.0]);
        assert!(subvector(&x, &[3]).is_err());
    }

    #[test]
    fn zero_moment_rejected() {
        assert!(DipoleSource::new(Vector3::zeros(), Vector3::zeros(), 0).is_err());
    }

    #[test]
    fn stacked_relayout_roundtrip() {
        let m = DMatrix::from_fn(4, 9, |i, j| (i * 9 + j) as f64);
        let lf = LeadField::new(m, ColumnLayout::ComponentMajor).unwrap();
        let stacked = lf.relayout(ColumnLayout::Stacked);
        // position 1, component y: column 4 component-major, column 1 + 3 stacked
        assert_eq!(stacked.matrix.column(4), lf.matrix.column(4));
        assert_eq!(stacked.matrix.column(1), lf.matrix.column(3));
        assert_eq!(stacked.groups().group(1), &[1, 4, 7]);
        assert_eq!(stacked.relayout(ColumnLayout::ComponentMajor), lf);
    }

    #[test]
    fn rank_deficient_group_factor() {
        let block = DMatrix::from_row_slice(4, 3, &[
            1.0, 2.0, 0.0, //
            0.0, 0.0, 1.0, //
            2.0, 4.0, 0.0, //
            1.0, 2.0, 1.0,
        ]);
        let f = GroupFactor::from_block(&block);
        assert_eq!(f.rank(), 2);
        assert!((f.reconstruct() - &block).norm() <= 1e-12 * block.norm());
        let zero = GroupFactor::from_block(&DMatrix::zeros(4, 3));
        assert_eq!(zero.rank(), 0);
    }
}
