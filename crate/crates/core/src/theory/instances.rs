//! Seeded instance generators for recovery certification.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::model::GroupStructure;

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(len: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Contiguous groups of equal size over `num_groups · group_size` unknowns.
pub fn contiguous_groups(num_groups: usize, group_size: usize) -> Result<GroupStructure> {
    if num_groups == 0 || group_size == 0 {
        return invalid("need at least one non-empty group");
    }
    let groups = (0..num_groups)
        .map(|g| (g * group_size..(g + 1) * group_size).collect())
        .collect();
    GroupStructure::new(groups, num_groups * group_size)
}

/// A planted single-group source.
#[derive(Debug, Clone)]
pub struct SingleGroupInstance {
    pub c: DMatrix<f64>,
    pub groups: GroupStructure,
    pub g_star: usize,
    pub x_star_g: DVector<f64>,
    pub seed: u64,
}

/// Gaussian `rows × (num_groups·group_size)` operator with one random planted group.
pub fn random_single_group(rows: usize, num_groups: usize, group_size: usize, seed: u64) -> Result<SingleGroupInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = contiguous_groups(num_groups, group_size)?;
    let c = gaussian_matrix(rows, groups.n(), &mut rng);
    let g_star = rng.gen_range(0..num_groups);
    let x_star_g = gaussian_vector(group_size, &mut rng);
    Ok(SingleGroupInstance {
        c,
        groups,
        g_star,
        x_star_g,
        seed,
    })
}

/// Same as [`random_single_group`] but group 1 duplicates the columns of group 0,
/// so the pairwise-independence assumption fails for that pair.
pub fn duplicated_group(rows: usize, num_groups: usize, group_size: usize, seed: u64) -> Result<SingleGroupInstance> {
    if num_groups < 2 {
        return invalid("duplicated instance needs at least two groups");
    }
    let mut inst = random_single_group(rows, num_groups, group_size, seed)?;
    for k in 0..group_size {
        let col = inst.c.column(k).into_owned();
        inst.c.set_column(group_size + k, &col);
    }
    inst.g_star = 0;
    Ok(inst)
}

/// Planted groups with mutually orthogonal ranges, plus background groups that
/// overlap each other freely in a separate subspace.
#[derive(Debug, Clone)]
pub struct DisjointInstance {
    pub c: DMatrix<f64>,
    pub groups: GroupStructure,
    pub planted: Vec<usize>,
    pub x_star: Vec<DVector<f64>>,
    pub seed: u64,
}

/// `C = [Q_1 G_1, …, Q_J G_J, Q_0 H]`: each planted group `j` spans its own
/// 3-dimensional block `Q_j`; `background` further groups share a
/// `background_dim`-dimensional block `Q_0` orthogonal to all `Q_j`.
pub fn orthogonal_blocks(planted: usize, background: usize, background_dim: usize, seed: u64) -> Result<DisjointInstance> {
    const GROUP: usize = 3;
    if planted == 0 {
        return invalid("need at least one planted group");
    }
    let rows = GROUP * planted + background_dim;
    let num_groups = planted + background;
    let groups = contiguous_groups(num_groups, GROUP)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = gaussian_matrix(rows, rows, &mut rng).qr().q();
    let mut c = DMatrix::zeros(rows, groups.n());
    for j in 0..planted {
        let block = q.columns(GROUP * j, GROUP) * gaussian_matrix(GROUP, GROUP, &mut rng);
        c.columns_mut(GROUP * j, GROUP).copy_from(&block);
    }
    if background > 0 {
        if background_dim == 0 {
            return invalid("background groups need a non-empty subspace");
        }
        let basis = q.columns(GROUP * planted, background_dim);
        let block = basis * gaussian_matrix(background_dim, GROUP * background, &mut rng);
        c.columns_mut(GROUP * planted, GROUP * background).copy_from(&block);
    }
    // Shuffle planted ids among all groups so they are not always first.
    let mut order: Vec<usize> = (0..num_groups).collect();
    for i in (1..num_groups).rev() {
        let k = rng.gen_range(0..=i);
        order.swap(i, k);
    }
    let mut shuffled = DMatrix::zeros(rows, groups.n());
    for (src, &dst) in order.iter().enumerate() {
        shuffled
            .columns_mut(GROUP * dst, GROUP)
            .copy_from(&c.columns(GROUP * src, GROUP));
    }
    let planted_ids: Vec<usize> = order[..planted].to_vec();
    let x_star: Vec<DVector<f64>> = (0..planted).map(|_| gaussian_vector(GROUP, &mut rng)).collect();
    let mut pairs: Vec<(usize, DVector<f64>)> = planted_ids.into_iter().zip(x_star).collect();
    pairs.sort_by_key(|(g, _)| *g);
    let (planted, x_star) = pairs.into_iter().unzip();
    Ok(DisjointInstance {
        c: shuffled,
        groups,
        planted,
        x_star,
        seed,
    })
}

/// Dense Gaussian operator with several planted groups (disjointness fails generically).
pub fn dense_multi_group(rows: usize, num_groups: usize, planted: usize, seed: u64) -> Result<DisjointInstance> {
    if planted > num_groups {
        return invalid("more planted groups than groups");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = contiguous_groups(num_groups, 3)?;
    let c = gaussian_matrix(rows, groups.n(), &mut rng);
    let mut ids: Vec<usize> = (0..num_groups).collect();
    for i in (1..num_groups).rev() {
        let k = rng.gen_range(0..=i);
        ids.swap(i, k);
    }
    let mut planted_ids = ids[..planted].to_vec();
    planted_ids.sort_unstable();
    let x_star = (0..planted).map(|_| gaussian_vector(3, &mut rng)).collect();
    Ok(DisjointInstance {
        c,
        groups,
        planted: planted_ids,
        x_star,
        seed,
    })
}
