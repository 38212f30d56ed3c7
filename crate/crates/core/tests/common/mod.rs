//! Reference implementations used as oracles. Nothing here calls into the
//! crate's numerics; they are deliberately naive.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vec(len: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

pub fn contiguous(num_groups: usize, size: usize) -> Vec<Vec<usize>> {
    (0..num_groups).map(|g| (g * size..(g + 1) * size).collect()).collect()
}

/// `½‖Cx − b‖² + α Σ_g ‖C_g x_g‖`, summed entry by entry.
pub fn group_lasso_objective(c: &DMatrix<f64>, b: &DVector<f64>, groups: &[Vec<usize>], alpha: f64, x: &DVector<f64>) -> f64 {
    let mut fit = 0.0;
    for i in 0..c.nrows() {
        let mut row = -b[i];
        for j in 0..c.ncols() {
            row += c[(i, j)] * x[j];
        }
        fit += row * row;
    }
    let mut penalty = 0.0;
    for g in groups {
        let mut sq = 0.0;
        for i in 0..c.nrows() {
            let v: f64 = g.iter().map(|&j| c[(i, j)] * x[j]).sum();
            sq += v * v;
        }
        penalty += sq.sqrt();
    }
    0.5 * fit + alpha * penalty
}

/// Orthonormal basis of the column span of `m` by modified Gram-Schmidt,
/// dropping directions whose remaining norm is below `tol` times the largest
/// column norm.
pub fn gram_schmidt(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let scale = (0..m.ncols()).map(|j| m.column(j).norm()).fold(0.0, f64::max);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..m.ncols() {
        let mut v: DVector<f64> = m.column(j).into_owned();
        for _ in 0..2 {
            for q in &basis {
                let p = q.dot(&v);
                v -= q * p;
            }
        }
        let n = v.norm();
        if n > tol * scale {
            basis.push(v / n);
        }
    }
    if basis.is_empty() {
        return DMatrix::zeros(m.nrows(), 0);
    }
    DMatrix::from_columns(&basis)
}

/// Largest singular value by power iteration on `MᵀM`.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let mut v = DVector::from_element(m.ncols(), 1.0);
    v /= v.norm();
    let mut s = 0.0;
    for _ in 0..5000 {
        let w = m.transpose() * (m * &v);
        let n = w.norm();
        if n == 0.0 {
            return 0.0;
        }
        v = w / n;
        s = n.sqrt();
    }
    s
}

/// Accelerated proximal gradient (FISTA with gradient restart) on the
/// reparametrized problem `min ½‖Σ Q_g w_g − b‖² + α Σ ‖w_g‖`, where `Q_g`
/// is a Gram-Schmidt basis of `range(C_g)`. Returns the best objective seen.
pub fn prox_gradient_objective(c: &DMatrix<f64>, b: &DVector<f64>, groups: &[Vec<usize>], alpha: f64, iters: usize) -> f64 {
    let bases: Vec<DMatrix<f64>> = groups.iter().map(|g| gram_schmidt(&c.select_columns(g), 1e-10)).collect();
    let dims: Vec<usize> = bases.iter().map(|q| q.ncols()).collect();
    let total: usize = dims.iter().sum();
    let mut q = DMatrix::zeros(c.nrows(), total);
    let mut off = 0;
    for basis in &bases {
        q.columns_mut(off, basis.ncols()).copy_from(basis);
        off += basis.ncols();
    }
    let step = 1.0 / spectral_norm(&q).powi(2);
    // Work with G = QᵀQ and h = Qᵀb so one iteration is a small mat-vec.
    let gram = q.transpose() * &q;
    let g: Vec<f64> = (0..total * total).map(|k| gram[(k / total, k % total)]).collect();
    let h: Vec<f64> = (q.transpose() * b).iter().copied().collect();
    let half_bb = 0.5 * b.norm_squared();
    let value = |w: &[f64]| {
        let mut quad = 0.0;
        for i in 0..total {
            let gw: f64 = (0..total).map(|j| g[i * total + j] * w[j]).sum();
            quad += w[i] * (0.5 * gw - h[i]);
        }
        let mut pen = 0.0;
        let mut off = 0;
        for &d in &dims {
            pen += w[off..off + d].iter().map(|v| v * v).sum::<f64>().sqrt();
            off += d;
        }
        quad + half_bb + alpha * pen
    };
    let mut w = vec![0.0; total];
    let mut y = vec![0.0; total];
    let mut w_next = vec![0.0; total];
    let mut t: f64 = 1.0;
    let mut best = value(&w);
    for it in 0..iters {
        for i in 0..total {
            let gy: f64 = (0..total).map(|j| g[i * total + j] * y[j]).sum();
            w_next[i] = y[i] - step * (gy - h[i]);
        }
        let mut off = 0;
        for &d in &dims {
            let n = w_next[off..off + d].iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = if n <= alpha * step { 0.0 } else { 1.0 - alpha * step / n };
            w_next[off..off + d].iter_mut().for_each(|v| *v *= scale);
            off += d;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        // Restart momentum when it points uphill.
        let uphill: f64 = (0..total).map(|i| (y[i] - w_next[i]) * (w_next[i] - w[i])).sum();
        if uphill > 0.0 {
            t = 1.0;
            y.copy_from_slice(&w_next);
        } else {
            let beta = (t - 1.0) / t_next;
            for i in 0..total {
                y[i] = w_next[i] + beta * (w_next[i] - w[i]);
            }
            t = t_next;
        }
        std::mem::swap(&mut w, &mut w_next);
        if it % 64 == 0 || it + 1 == iters {
            best = best.min(value(&w));
        }
    }
    best
}

/// Minimizer of `½‖r − M x‖² + α‖M x‖` over `x` by gradient descent with
/// Armijo backtracking; the objective is smooth wherever `Mx ≠ 0`.
pub fn block_descent_oracle(m: &DMatrix<f64>, r: &DVector<f64>, alpha: f64, iters: usize) -> DVector<f64> {
    let f = |x: &DVector<f64>| {
        let mx = m * x;
        0.5 * (r - &mx).norm_squared() + alpha * mx.norm()
    };
    let mut x = m.transpose() * r / m.norm_squared();
    let mut fx = f(&x);
    let mut step = 1.0;
    for _ in 0..iters {
        let mx = m * &x;
        let n = mx.norm();
        if n == 0.0 {
            break;
        }
        let grad = m.transpose() * (&mx - r + &mx * (alpha / n));
        let gg = grad.norm_squared();
        if gg < 1e-30 {
            break;
        }
        step *= 2.0;
        loop {
            let cand = &x - &grad * step;
            let fc = f(&cand);
            if fc <= fx - 0.5 * step * gg {
                x = cand;
                fx = fc;
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                return x;
            }
        }
    }
    x
}

/// Cyclic coordinate descent for `½‖Cx − b‖² + α Σ_j ‖c_j‖·|x_j|`.
pub fn lasso_coordinate_descent(c: &DMatrix<f64>, b: &DVector<f64>, alpha: f64, sweeps: usize) -> DVector<f64> {
    let n = c.ncols();
    let norms: Vec<f64> = (0..n).map(|j| c.column(j).norm_squared()).collect();
    let mut x: DVector<f64> = DVector::zeros(n);
    let mut r = b.clone();
    for _ in 0..sweeps {
        let mut moved: f64 = 0.0;
        for j in 0..n {
            if norms[j] == 0.0 {
                continue;
            }
            let rho = c.column(j).dot(&r) + norms[j] * x[j];
            let thr = alpha * norms[j].sqrt();
            let new = if rho > thr {
                (rho - thr) / norms[j]
            } else if rho < -thr {
                (rho + thr) / norms[j]
            } else {
                0.0
            };
            let d: f64 = new - x[j];
            if d != 0.0 {
                r.axpy(-d, &c.column(j), 1.0);
                x[j] = new;
                moved = moved.max(d.abs());
            }
        }
        if moved == 0.0 {
            break;
        }
    }
    x
}

/// Projection onto the span of the top-`k` eigenvectors of `AᵀA`, built from
/// a symmetric eigendecomposition rather than an SVD.
pub fn top_right_singular_projector(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let eig = (a.transpose() * a).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let n = a.ncols();
    let mut p = DMatrix::zeros(n, n);
    for &i in order.iter().take(k) {
        let v = eig.eigenvectors.column(i);
        p += v * v.transpose();
    }
    p
}

/// Potential at `electrode` of a unit-current dipole `q` at `r0` in an
/// infinite homogeneous medium, as the limit of a current source/sink pair.
pub fn monopole_pair_potential(electrode: &Vector3<f64>, r0: &Vector3<f64>, q: &Vector3<f64>, sigma: f64, h: f64) -> f64 {
    let plus = r0 + q * (0.5 * h);
    let minus = r0 - q * (0.5 * h);
    let k = 1.0 / (4.0 * std::f64::consts::PI * sigma);
    k * (1.0 / (electrode - plus).norm() - 1.0 / (electrode - minus).norm()) / h
}

/// Minimum total cost of an injective assignment of rows to columns (rows ≤
/// columns), by dynamic programming over subsets of used columns.
pub fn min_assignment_cost(cost: &[Vec<f64>]) -> f64 {
    let rows = cost.len();
    if rows == 0 {
        return 0.0;
    }
    let cols = cost[0].len();
    let mut best = vec![f64::INFINITY; 1 << cols];
    best[0] = 0.0;
    for mask in 0..(1usize << cols) {
        let row = mask.count_ones() as usize;
        if row >= rows || best[mask].is_infinite() {
            continue;
        }
        for col in 0..cols {
            if mask & (1 << col) == 0 {
                let next = mask | (1 << col);
                best[next] = best[next].min(best[mask] + cost[row][col]);
            }
        }
    }
    (0..(1usize << cols))
        .filter(|m| m.count_ones() as usize == rows)
        .map(|m| best[m])
        .fold(f64::INFINITY, f64::min)
}
