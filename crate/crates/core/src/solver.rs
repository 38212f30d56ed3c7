//! Cyclic block coordinate descent for
//! `min_x ½‖Cx − Bb‖² + α Σ_g ‖C_g x_g‖`,
//! plus first-order certification, discrepancy-principle selection of `α`
//! and an `α`-continuation surrogate for the constrained group pursuit.
//!
//! Each block update works in the coordinates of a cached orthonormal basis
//! `Q_g` of `range(C_g)`: writing `C_g x_g = Q_g z_g`, the block subproblem is
//! `½‖c − z_g‖² + α‖z_g‖` with `c = Q_gᵀ(r + C_g x_g)`, solved by group soft
//! thresholding, and `x_g` is recovered as the minimum-norm preimage of `z_g`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{GroupFactor, ProblemInstance, SolveResult};

/// Below this `‖C_g x_g‖` a group is treated as inactive in the KKT residual.
pub const ZERO_NORM_GUARD: f64 = 1e-14;

/// Largest active coordinate count for which the Newton polish is attempted.
const NEWTON_MAX_DIM: usize = 240;
const NEWTON_MAX_STEPS: usize = 30;
/// Inner active-set passes between Newton attempts.
const NEWTON_PERIOD: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Relative objective decrease per sweep below which the objective test passes.
    pub tol_objective: f64,
    /// Largest block change relative to the largest block below which the step test passes.
    pub tol_x: f64,
    pub max_sweeps: usize,
    /// A solve is reported converged only when its KKT residual is at most this.
    pub kkt_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_objective: 1e-10,
            tol_x: 1e-8,
            max_sweeps: 10_000,
            kkt_tol: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_objective > 0.0 && self.tol_x > 0.0 && self.kkt_tol > 0.0) {
            return invalid("solver tolerances must be positive");
        }
        if self.max_sweeps == 0 {
            return invalid("max_sweeps must be at least 1");
        }
        Ok(())
    }

    /// Tight settings used by recovery certification.
    pub fn precise() -> Self {
        Self {
            tol_objective: 1e-15,
            tol_x: 1e-12,
            max_sweeps: 100_000,
            kkt_tol: 1e-10,
        }
    }
}

fn check_dims(problem: &ProblemInstance, x: &DVector<f64>) -> Result<()> {
    if x.len() != problem.n() {
        return invalid(format!("x has length {} but problem has {} unknowns", x.len(), problem.n()));
    }
    Ok(())
}

/// `½‖Cx − Bb‖² + α Σ_g ‖C_g x_g‖`.
pub fn objective(problem: &ProblemInstance, alpha: f64, x: &DVector<f64>) -> Result<f64> {
    check_dims(problem, x)?;
    if !(alpha >= 0.0) {
        return invalid("alpha must be non-negative");
    }
    let op = problem.operator();
    let residual = op.work_c() * x - problem.work_rhs();
    let penalty: f64 = (0..problem.groups().len())
        .map(|g| {
            let x_g = DVector::from_iterator(problem.groups().group(g).len(), problem.groups().group(g).iter().map(|&i| x[i]));
            op.factors()[g].coords(&x_g).norm()
        })
        .sum();
    Ok(0.5 * residual.norm_squared() + alpha * penalty)
}

/// Smallest `α` for which `x = 0` is optimal: `max_g ‖P_g(Bb)‖`.
pub fn alpha_max(problem: &ProblemInstance) -> f64 {
    problem
        .group_factors()
        .iter()
        .map(|f| f.basis.tr_mul(problem.work_rhs()).norm())
        .fold(0.0, f64::max)
}

fn soft_threshold_block(c: &DVector<f64>, alpha: f64) -> DVector<f64> {
    let nc = c.norm();
    if nc <= alpha {
        DVector::zeros(c.len())
    } else {
        c * (1.0 - alpha / nc)
    }
}

/// Exact minimizer over `x_g` of `½‖r − C_g x_g‖² + α‖C_g x_g‖`, where `r` is
/// the partial residual `Bb − Σ_{g'≠g} C_{g'} x_{g'}` in the row space of `C`.
pub fn group_update(problem: &ProblemInstance, g: usize, r: &DVector<f64>, alpha: f64) -> Result<DVector<f64>> {
    if g >= problem.groups().len() {
        return invalid(format!("group {g} out of range"));
    }
    if r.len() != problem.c().nrows() {
        return invalid("partial residual has wrong length");
    }
    let op = problem.operator();
    let f = &op.factors()[g];
    let c = f.basis.tr_mul(&op.to_work(r));
    Ok(f.solve(&soft_threshold_block(&c, alpha)))
}

/// First-order optimality residual of `x` (see module docs for the scaling).
///
/// Active groups contribute `‖C_gᵀr + α C_gᵀC_g x_g/‖C_g x_g‖‖ / (1 + ‖C_gᵀ Bb‖)`
/// with `r = Cx − Bb`; inactive groups contribute `max(0, ‖P_g r‖ − α)/α`.
pub fn kkt_residual(problem: &ProblemInstance, alpha: f64, x: &DVector<f64>) -> Result<f64> {
    check_dims(problem, x)?;
    let op = problem.operator();
    let r = op.work_c() * x - problem.work_rhs();
    let groups = problem.groups();
    let mut worst: f64 = 0.0;
    for g in 0..groups.len() {
        let f = &op.factors()[g];
        let idx = groups.group(g);
        let x_g = DVector::from_iterator(idx.len(), idx.iter().map(|&i| x[i]));
        let z = f.coords(&x_g);
        let cz = z.norm();
        let qr = f.basis.tr_mul(&r);
        let term = if x_g.norm() > 0.0 && cz >= ZERO_NORM_GUARD {
            // C_gᵀ v = V S (Q_gᵀ v) for v in the working space.
            let grad = &qr + &z * (alpha / cz);
            let scaled = DVector::from_iterator(f.rank(), grad.iter().zip(&f.singular_values).map(|(v, s)| v * s));
            // V_g has orthonormal columns, so ‖V S w‖ = ‖S w‖.
            let crhs = f.basis.tr_mul(problem.work_rhs());
            let crhs = crhs.iter().zip(&f.singular_values).map(|(v, s)| (v * s).powi(2)).sum::<f64>().sqrt();
            scaled.norm() / (1.0 + crhs)
        } else if alpha > 0.0 {
            (qr.norm() - alpha).max(0.0) / alpha
        } else {
            qr.norm()
        };
        worst = worst.max(term);
    }
    Ok(worst)
}

/// Incremental BCD state: `x`, per-group coordinates `z_g` and working residual `Bb − Cx`.
struct BcdState<'a> {
    problem: &'a ProblemInstance,
    x: DVector<f64>,
    z: Vec<DVector<f64>>,
    r: DVector<f64>,
}

impl<'a> BcdState<'a> {
    fn new(problem: &'a ProblemInstance, x0: &DVector<f64>) -> Self {
        let groups = problem.groups();
        let factors = problem.group_factors();
        let mut x = DVector::zeros(problem.n());
        let mut z = Vec::with_capacity(groups.len());
        for (g, f) in factors.iter().enumerate() {
            let idx = groups.group(g);
            let x_g = DVector::from_iterator(idx.len(), idx.iter().map(|&i| x0[i]));
            for (k, &i) in idx.iter().enumerate() {
                x[i] = x_g[k];
            }
            z.push(f.coords(&x_g));
        }
        let mut state = Self {
            problem,
            x,
            z,
            r: DVector::zeros(0),
        };
        state.refresh_residual();
        state
    }

    fn refresh_residual(&mut self) {
        let mut r = self.problem.work_rhs().clone();
        for (f, z) in self.problem.group_factors().iter().zip(&self.z) {
            if f.rank() > 0 {
                r.gemv(-1.0, &f.basis, z, 1.0);
            }
        }
        self.r = r;
    }

    fn objective(&self, alpha: f64) -> f64 {
        0.5 * self.r.norm_squared() + alpha * self.z.iter().map(|z| z.norm()).sum::<f64>()
    }

    fn block_norm(&self, g: usize) -> f64 {
        self.problem.groups().group(g).iter().map(|&i| self.x[i] * self.x[i]).sum::<f64>().sqrt()
    }

    /// KKT residual restricted to the groups in `order` (same scaling as
    /// [`kkt_residual`]; `rhs_scale[g] = 1 + ‖C_gᵀ Bb‖`).
    fn partial_kkt(&self, order: &[usize], alpha: f64, rhs_scale: &[f64]) -> f64 {
        let factors = self.problem.group_factors();
        let mut worst: f64 = 0.0;
        for &g in order {
            let f = &factors[g];
            if f.rank() == 0 {
                continue;
            }
            // state.r = Bb − Cx, so Q_gᵀ(Cx − Bb) = −Q_gᵀ r.
            let qr = f.basis.tr_mul(&self.r);
            let cz = self.z[g].norm();
            let term = if cz >= ZERO_NORM_GUARD {
                let grad = &self.z[g] * (alpha / cz) - qr;
                let scaled: f64 = grad.iter().zip(&f.singular_values).map(|(v, s)| (v * s).powi(2)).sum();
                scaled.sqrt() / rhs_scale[g]
            } else {
                (qr.norm() - alpha).max(0.0) / alpha
            };
            worst = worst.max(term);
        }
        worst
    }

    /// Damped Newton steps on the objective restricted to `active`, where it
    /// is smooth as long as no block reaches zero. Accepted objective values
    /// are appended to `trace`; a step is taken only if it strictly decreases
    /// the objective, so the caller's full sweeps still decide the support.
    fn newton_polish(&mut self, active: &[usize], alpha: f64, trace: &mut Vec<f64>) {
        let factors = self.problem.group_factors();
        let blocks: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&g| factors[g].rank() > 0 && self.z[g].norm() >= ZERO_NORM_GUARD)
            .collect();
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut dim = 0;
        for &g in &blocks {
            offsets.push(dim);
            dim += factors[g].rank();
        }
        if dim == 0 || dim > NEWTON_MAX_DIM {
            return;
        }
        let mut basis = DMatrix::zeros(self.r.len(), dim);
        for (&g, &o) in blocks.iter().zip(&offsets) {
            basis.columns_mut(o, factors[g].rank()).copy_from(&factors[g].basis);
        }
        let gram = basis.tr_mul(&basis);
        let penalty = |z: &[DVector<f64>]| alpha * blocks.iter().map(|&g| z[g].norm()).sum::<f64>();
        let mut f = self.objective(alpha);

        for _ in 0..NEWTON_MAX_STEPS {
            let corr = basis.tr_mul(&self.r);
            let mut grad = DVector::zeros(dim);
            let mut hess = gram.clone();
            for (&g, &o) in blocks.iter().zip(&offsets) {
                let z = &self.z[g];
                let nz = z.norm();
                if nz < ZERO_NORM_GUARD {
                    return;
                }
                let u = z / nz;
                for i in 0..z.len() {
                    grad[o + i] = alpha * u[i] - corr[o + i];
                    for j in 0..z.len() {
                        let eye = if i == j { 1.0 } else { 0.0 };
                        hess[(o + i, o + j)] += alpha / nz * (eye - u[i] * u[j]);
                    }
                }
            }
            if grad.iter().all(|&v| v == 0.0) {
                return;
            }
            let top = hess.diagonal().max().max(f64::MIN_POSITIVE);
            let mut damping = 0.0;
            let step = loop {
                let mut h = hess.clone();
                for i in 0..dim {
                    h[(i, i)] += damping;
                }
                if let Some(chol) = h.cholesky() {
                    break chol.solve(&(-&grad));
                }
                damping = if damping == 0.0 { 1e-12 * top } else { damping * 10.0 };
                if damping > top {
                    return;
                }
            };
            let old_penalty = penalty(&self.z);
            let mut t = 1.0;
            let mut accepted = None;
            while t > 1e-10 {
                // Blocks the step would push through the origin are set to zero.
                let mut z = self.z.clone();
                let mut eff = DVector::zeros(dim);
                let mut dropped = false;
                for (&g, &o) in blocks.iter().zip(&offsets) {
                    let k = z[g].len();
                    let cand = &z[g] + step.rows(o, k) * t;
                    let next = if cand.dot(&z[g]) <= 0.0 || cand.norm() < ZERO_NORM_GUARD {
                        dropped = true;
                        DVector::zeros(k)
                    } else {
                        cand
                    };
                    eff.rows_mut(o, k).copy_from(&(&next - &z[g]));
                    z[g] = next;
                }
                let r = &self.r - &basis * &eff;
                let f_new = 0.5 * r.norm_squared() + f - 0.5 * self.r.norm_squared() - old_penalty + penalty(&z);
                if f_new < f {
                    accepted = Some((z, r, f_new, dropped));
                    break;
                }
                t *= 0.5;
            }
            let Some((z, r, f_new, dropped)) = accepted else { break };
            self.z = z;
            self.r = r;
            f = f_new;
            trace.push(f);
            if dropped {
                break;
            }
        }

        let groups = self.problem.groups();
        for &g in &blocks {
            let x_g = factors[g].solve(&self.z[g]);
            for (k, &i) in groups.group(g).iter().enumerate() {
                self.x[i] = x_g[k];
            }
        }
    }

    /// One pass over `order`; returns the largest block change `‖Δx_g‖`.
    fn sweep(&mut self, order: &[usize], alpha: f64) -> f64 {
        let groups = self.problem.groups();
        let factors = self.problem.group_factors();
        let mut max_change: f64 = 0.0;
        for &g in order {
            let f: &GroupFactor = &factors[g];
            let idx = groups.group(g);
            let new_x_g = if f.rank() == 0 {
                DVector::zeros(idx.len())
            } else {
                let c = f.basis.tr_mul(&self.r) + &self.z[g];
                let z_new = soft_threshold_block(&c, alpha);
                let delta = &self.z[g] - &z_new;
                if delta.iter().any(|&d| d != 0.0) {
                    self.r.gemv(1.0, &f.basis, &delta, 1.0);
                }
                let x_new = f.solve(&z_new);
                self.z[g] = z_new;
                x_new
            };
            let mut change = 0.0;
            for (k, &i) in idx.iter().enumerate() {
                let d = new_x_g[k] - self.x[i];
                change += d * d;
                self.x[i] = new_x_g[k];
            }
            max_change = max_change.max(change.sqrt());
        }
        max_change
    }
}

/// Cyclic BCD from `x0`.
///
/// Every pass visits groups in increasing index order. Between full passes the
/// solver repeats passes restricted to the currently active groups; a result is
/// declared converged only after a full pass meets both stopping tests and the
/// KKT residual is within `config.kkt_tol`.
pub fn bcd_solve(problem: &ProblemInstance, alpha: f64, x0: &DVector<f64>, config: &SolverConfig) -> Result<SolveResult> {
    if !(alpha > 0.0) {
        return invalid("alpha must be positive");
    }
    check_dims(problem, x0)?;
    config.validate()?;

    let all: Vec<usize> = (0..problem.groups().len()).collect();
    let mut state = BcdState::new(problem, x0);
    let mut f_prev = state.objective(alpha);
    let mut trace = Vec::new();
    let mut sweeps = 0usize;
    let mut converged = false;

    let rhs_scale: Vec<f64> = problem
        .group_factors()
        .iter()
        .map(|f| {
            let q = f.basis.tr_mul(problem.work_rhs());
            1.0 + q.iter().zip(&f.singular_values).map(|(v, s)| (v * s).powi(2)).sum::<f64>().sqrt()
        })
        .collect();

    let passes = |state: &BcdState, f_prev: f64, f: f64, change: f64| {
        let scale = (0..all.len()).map(|g| state.block_norm(g)).fold(0.0, f64::max);
        let rel_dec = (f_prev - f) / f.abs().max(f64::MIN_POSITIVE);
        let rel_change = if scale > 0.0 { change / scale } else { change };
        rel_dec <= config.tol_objective && rel_change <= config.tol_x
    };

    'outer: while sweeps < config.max_sweeps {
        let change = state.sweep(&all, alpha);
        state.refresh_residual();
        sweeps += 1;
        let f = state.objective(alpha);
        trace.push(f);
        let ok = passes(&state, f_prev, f, change);
        f_prev = f;
        if ok && kkt_residual(problem, alpha, &state.x)? <= config.kkt_tol {
            converged = true;
            break;
        }

        let active: Vec<usize> = all.iter().copied().filter(|&g| state.z[g].norm() > 0.0).collect();
        if active.is_empty() {
            continue;
        }
        for inner in 1.. {
            if sweeps >= config.max_sweeps {
                break 'outer;
            }
            let change = state.sweep(&active, alpha);
            sweeps += 1;
            if inner % NEWTON_PERIOD == 0 {
                state.newton_polish(&active, alpha, &mut trace);
            }
            let f = state.objective(alpha);
            trace.push(f);
            let stalled = f >= f_prev && change == 0.0;
            f_prev = f;
            if stalled {
                break;
            }
            if state.partial_kkt(&active, alpha, &rhs_scale) <= 0.5 * config.kkt_tol {
                state.newton_polish(&active, alpha, &mut trace);
                f_prev = state.objective(alpha);
                break;
            }
        }
    }

    state.refresh_residual();
    Ok(finish(problem, alpha, state.x, sweeps, converged, trace, config))
}

fn finish(
    problem: &ProblemInstance,
    alpha: f64,
    x: DVector<f64>,
    iterations: usize,
    converged: bool,
    objective_trace: Vec<f64>,
    config: &SolverConfig,
) -> SolveResult {
    let objective = objective(problem, alpha, &x).expect("dimensions checked");
    let kkt = kkt_residual(problem, alpha, &x).expect("dimensions checked");
    SolveResult {
        alpha,
        objective,
        discrepancy_original: problem.discrepancy_original(&x),
        discrepancy_transformed: problem.discrepancy_transformed(&x),
        discrepancy_retained: problem.discrepancy_retained(&x),
        iterations,
        converged,
        active_groups: problem.groups().active_groups(&x),
        kkt_residual: kkt,
        objective_trace,
        config: *config,
        weighting: problem.operator().weighting(),
        x: x.as_slice().to_vec(),
    }
}

/// Outcome classification of a discrepancy-principle search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BracketStatus {
    InBracket,
    /// Even the smallest admissible `α` leaves a misfit above `τδ`.
    LowerBoundary,
    /// Even `α_hi` (where `x = 0`) fits the data below `δ`.
    UpperBoundary,
    /// Bisection budget used up without landing in the bracket.
    Exhausted,
}

/// Which misfit the discrepancy principle compares against `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscrepancyMeasure {
    /// `‖Ax − b‖`.
    Original,
    /// `‖P_B(Ax − b)‖`, restricted to the measurement subspace the weighting
    /// keeps; `δ` must then be the noise level inside that subspace.
    #[default]
    Retained,
}

impl DiscrepancyMeasure {
    pub fn of(self, result: &SolveResult) -> f64 {
        match self {
            DiscrepancyMeasure::Original => result.discrepancy_original,
            DiscrepancyMeasure::Retained => result.discrepancy_retained,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MorozovConfig {
    pub tau: f64,
    /// Lower end of the search interval as a fraction of `α_max`.
    pub alpha_lo_fraction: f64,
    /// Upper end of the search interval as a multiple of `α_max` (at least 1).
    pub alpha_hi_factor: f64,
    pub max_bisections: usize,
    pub measure: DiscrepancyMeasure,
}

impl Default for MorozovConfig {
    fn default() -> Self {
        Self {
            tau: 1.05,
            alpha_lo_fraction: 1e-6,
            alpha_hi_factor: 1.0,
            max_bisections: 40,
            measure: DiscrepancyMeasure::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MorozovOutcome {
    pub alpha: f64,
    pub status: BracketStatus,
    pub delta: f64,
    pub tau: f64,
    /// `(α, misfit)` for every solve performed, in order.
    pub evaluations: Vec<(f64, f64)>,
    pub result: SolveResult,
}

/// Chooses `α` in `[alpha_lo, alpha_hi]` so that the misfit selected by
/// `measure` lands in `[δ, τδ]`, bisecting on `log α` with warm starts.
pub fn morozov_select_alpha(
    problem: &ProblemInstance,
    delta: f64,
    tau: f64,
    alpha_range: (f64, f64),
    max_bisections: usize,
    measure: DiscrepancyMeasure,
    config: &SolverConfig,
) -> Result<MorozovOutcome> {
    if !(delta > 0.0) {
        return invalid("noise estimate delta must be positive");
    }
    if !(tau >= 1.0) {
        return invalid("safety factor tau must be at least 1");
    }
    let (lo0, hi0) = alpha_range;
    if !(lo0 > 0.0 && hi0 > lo0) {
        return invalid("alpha range must satisfy 0 < lo < hi");
    }
    let upper = tau * delta;
    let mut evaluations = Vec::new();
    let in_bracket = |d: f64| d >= delta && d <= upper;
    let outcome = |alpha, status, evaluations, result| MorozovOutcome {
        alpha,
        status,
        delta,
        tau,
        evaluations,
        result,
    };

    let zero = DVector::zeros(problem.n());
    let at_hi = bcd_solve(problem, hi0, &zero, config)?;
    evaluations.push((hi0, measure.of(&at_hi)));
    if in_bracket(measure.of(&at_hi)) {
        return Ok(outcome(hi0, BracketStatus::InBracket, evaluations, at_hi));
    }
    if measure.of(&at_hi) < delta {
        return Ok(outcome(hi0, BracketStatus::UpperBoundary, evaluations, at_hi));
    }

    let (mut lo, mut hi) = (lo0.ln(), hi0.ln());
    let mut warm = at_hi.x_vector();
    let mut saw_below = false;
    let mut last = at_hi;
    for _ in 0..max_bisections {
        let mid = 0.5 * (lo + hi);
        let alpha = mid.exp();
        let res = bcd_solve(problem, alpha, &warm, config)?;
        let d = measure.of(&res);
        evaluations.push((alpha, d));
        if in_bracket(d) {
            return Ok(outcome(alpha, BracketStatus::InBracket, evaluations, res));
        }
        if d < delta {
            saw_below = true;
            lo = mid;
        } else {
            hi = mid;
        }
        warm = res.x_vector();
        last = res;
    }

    if !saw_below {
        let res = bcd_solve(problem, lo0, &warm, config)?;
        evaluations.push((lo0, measure.of(&res)));
        let status = if in_bracket(measure.of(&res)) {
            BracketStatus::InBracket
        } else {
            BracketStatus::LowerBoundary
        };
        return Ok(outcome(lo0, status, evaluations, res));
    }
    Ok(outcome(last.alpha, BracketStatus::Exhausted, evaluations, last))
}

/// Which condition ended an `α`-continuation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PursuitStop {
    /// `‖Cx − Bb‖ ≤ ε‖Bb‖` reached.
    Feasible,
    /// `α` dropped below `1e-12 · α_max` first.
    AlphaUnderflow,
    /// `Bb = 0`; `x = 0` is the answer.
    ZeroData,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PursuitStage {
    pub alpha: f64,
    pub active_groups: Vec<usize>,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PursuitOutcome {
    pub stop: PursuitStop,
    pub stages: Vec<PursuitStage>,
    pub result: SolveResult,
}

/// Halving factor between continuation stages.
pub const CONTINUATION_FACTOR: f64 = 0.5;
/// Continuation stops once `α` falls below this fraction of `α_max`.
pub const CONTINUATION_FLOOR: f64 = 1e-12;

/// Approximates `min Σ_g‖C_g x_g‖ s.t. Cx = Bb` by driving `α` from `α_max`
/// towards zero, halving each stage and warm-starting from the previous one.
pub fn pursuit_solve(problem: &ProblemInstance, epsilon: f64, config: &SolverConfig) -> Result<PursuitOutcome> {
    if !(epsilon > 0.0) {
        return invalid("epsilon must be positive");
    }
    config.validate()?;
    let zero = DVector::zeros(problem.n());
    let rhs_norm = problem.work_rhs().norm();
    let a_max = alpha_max(problem);
    if rhs_norm == 0.0 || a_max == 0.0 {
        let result = finish(problem, a_max.max(f64::MIN_POSITIVE), zero, 0, true, Vec::new(), config);
        return Ok(PursuitOutcome {
            stop: PursuitStop::ZeroData,
            stages: Vec::new(),
            result,
        });
    }
    let target = epsilon * rhs_norm;
    let mut alpha = a_max;
    let mut result = bcd_solve(problem, alpha, &zero, config)?;
    let mut stages = vec![PursuitStage {
        alpha,
        active_groups: result.active_groups.clone(),
        residual: result.discrepancy_transformed,
    }];
    let stop = loop {
        if result.discrepancy_transformed <= target {
            break PursuitStop::Feasible;
        }
        alpha *= CONTINUATION_FACTOR;
        if alpha < CONTINUATION_FLOOR * a_max {
            break PursuitStop::AlphaUnderflow;
        }
        result = bcd_solve(problem, alpha, &result.x_vector(), config)?;
        stages.push(PursuitStage {
            alpha,
            active_groups: result.active_groups.clone(),
            residual: result.discrepancy_transformed,
        });
    };
    Ok(PursuitOutcome { stop, stages, result })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GroupStructure;
    use nalgebra::DMatrix;

    fn identity_problem(rhs: &[f64]) -> ProblemInstance {
        let n = rhs.len();
        let groups = GroupStructure::dipoles(n / 3).unwrap();
        ProblemInstance::new(DMatrix::identity(n, n), DVector::from_column_slice(rhs), groups).unwrap()
    }

    #[test]
    fn objective_trivial_cases() {
        let p = identity_problem(&[1.0, 2.0, 2.0, 0.0, 0.0, 0.0]);
        let zero = DVector::zeros(6);
        assert!((objective(&p, 0.7, &zero).unwrap() - 4.5).abs() < 1e-15);
        let x = DVector::from_column_slice(&[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        // residual (0,2,2,0,0,-1): ½·9
        assert!((objective(&p, 0.0, &x).unwrap() - 4.5).abs() < 1e-14);
        assert!(objective(&p, -1.0, &x).is_err());
    }

    #[test]
    fn group_update_examples() {
        let p = identity_problem(&[0.0; 6]);
        let r = DVector::from_column_slice(&[3.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let x = group_update(&p, 0, &r, 1.0).unwrap();
        assert!((x - DVector::from_column_slice(&[2.0, 0.0, 0.0])).norm() < 1e-14);
        assert_eq!(group_update(&p, 0, &r, 3.0).unwrap(), DVector::zeros(3));
        assert_eq!(group_update(&p, 1, &DVector::zeros(6), 0.5).unwrap(), DVector::zeros(3));
    }

    #[test]
    fn below_threshold_gives_zero_after_one_sweep() {
        let p = identity_problem(&[0.1, 0.1, 0.0, 0.0, 0.2, 0.0]);
        let res = bcd_solve(&p, 1.0, &DVector::zeros(6), &SolverConfig::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
        assert!(res.x.iter().all(|&v| v == 0.0));
        assert!(res.active_groups.is_empty());
        assert_eq!(res.kkt_residual, 0.0);
    }

    #[test]
    fn single_group_closed_form() {
        let c = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 1.0, 3.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        let rhs = DVector::from_column_slice(&[1.0, -2.0, 0.5, 3.0]);
        let p = ProblemInstance::new(c, rhs, GroupStructure::dipoles(1).unwrap()).unwrap();
        let res = bcd_solve(&p, 0.3, &DVector::zeros(3), &SolverConfig::default()).unwrap();
        let one_step = group_update(&p, 0, p.rhs(), 0.3).unwrap();
        assert!((res.x_vector() - one_step).norm() < 1e-14);
        assert!(res.converged);
        assert!(res.kkt_residual <= 1e-10);
    }

    #[test]
    fn pursuit_trivial_cases() {
        let p = identity_problem(&[0.0; 6]);
        let out = pursuit_solve(&p, 1e-6, &SolverConfig::default()).unwrap();
        assert_eq!(out.stop, PursuitStop::ZeroData);
        assert!(out.result.x.iter().all(|&v| v == 0.0));

        let p = identity_problem(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let out = pursuit_solve(&p, 1.0, &SolverConfig::default()).unwrap();
        assert_eq!(out.stop, PursuitStop::Feasible);
        assert_eq!(out.stages.len(), 1);
        assert_eq!(out.result.alpha, alpha_max(&p));
        assert!(out.result.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn morozov_argument_validation() {
        let p = identity_problem(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let cfg = SolverConfig::default();
        assert!(morozov_select_alpha(&p, 0.0, 1.05, (1e-3, 1.0), 40, DiscrepancyMeasure::Original, &cfg).is_err());
        assert!(morozov_select_alpha(&p, 0.1, 0.9, (1e-3, 1.0), 40, DiscrepancyMeasure::Original, &cfg).is_err());
        assert!(morozov_select_alpha(&p, 0.1, 1.05, (1.0, 1e-3), 40, DiscrepancyMeasure::Original, &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            tol_x: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
