//! Randomized localization experiments on the spherical surrogate.
//!
//! One experiment fixes a montage, an inverse grid and a disjoint true grid,
//! then runs independent trials: plant sources on the true grid, simulate
//! noisy data, select `α` by the discrepancy principle for every configured
//! weighting, and score the recovered dipoles.

use std::io::Write;
use std::sync::Arc;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::forward::{
    build_lead_field, min_cross_distance, place_electrodes, sample_source_grid, simulate_measurement, GridSampling,
    HeadGeometry, MeasurementSet, DEFAULT_CONDUCTIVITY, DEFAULT_MAX_ATTEMPTS, DEFAULT_MIN_ELECTRODE_DISTANCE,
    DEFAULT_MIN_SEPARATION, DEFAULT_SCALP_RADIUS, DEFAULT_SOURCE_SHELL_FRACTION,
};
use crate::metrics::{depth, dle, doe, extract_dipoles, match_sources, theoretical_min_dle};
use crate::model::{DipoleSource, GroupOperator, LeadField, ProblemInstance, WeightingKind};
use crate::solver::{alpha_max, morozov_select_alpha, BracketStatus, DiscrepancyMeasure, MorozovConfig, SolverConfig};
use crate::weighting::{compose_operator, problem_for_data, weighting_from_spec, WeightingOperator, WeightingSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub electrodes: usize,
    pub scalp_radius: f64,
    pub source_shell_fraction: f64,
    pub conductivity: f64,
    pub inverse_grid_size: usize,
    pub true_grid_size: usize,
    pub min_separation: f64,
    pub min_electrode_distance: f64,
    pub max_attempts: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            electrodes: 64,
            scalp_radius: DEFAULT_SCALP_RADIUS,
            source_shell_fraction: DEFAULT_SOURCE_SHELL_FRACTION,
            conductivity: DEFAULT_CONDUCTIVITY,
            inverse_grid_size: 600,
            true_grid_size: 600,
            min_separation: DEFAULT_MIN_SEPARATION,
            min_electrode_distance: DEFAULT_MIN_ELECTRODE_DISTANCE,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMode {
    /// `δ = ‖ε‖`, the realized noise norm.
    KnownNoise,
    /// `δ = level · ‖b‖ / √(1 + level²)`, from the configured relative level only.
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub trials: usize,
    pub sources_per_trial: usize,
    pub noise_level: f64,
    /// Weightings evaluated on identical data in every trial.
    pub weightings: Vec<WeightingSpec>,
    /// Plant sources on inverse-grid positions instead of the true grid.
    pub sources_on_inverse_grid: bool,
    pub delta_mode: DeltaMode,
    /// Lower bound on `δ` relative to `‖b‖` (keeps noiseless runs well posed).
    pub delta_floor: f64,
    pub morozov: MorozovConfig,
    pub solver: SolverConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig::default(),
            trials: 50,
            sources_per_trial: 1,
            noise_level: 0.01,
            weightings: vec![
                WeightingSpec {
                    kind: WeightingKind::Identity,
                    k: None,
                },
                WeightingSpec {
                    kind: WeightingKind::TruncatedPseudoinverse,
                    k: None,
                },
            ],
            sources_on_inverse_grid: false,
            delta_mode: DeltaMode::KnownNoise,
            delta_floor: 1e-8,
            morozov: MorozovConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.geometry.electrodes < 4 {
            return invalid(format!("need at least 4 electrodes, got {}", self.geometry.electrodes));
        }
        if self.geometry.inverse_grid_size == 0 || self.geometry.true_grid_size == 0 {
            return invalid("grids must be non-empty");
        }
        if self.sources_per_trial == 0 || self.sources_per_trial > 4 {
            return invalid("sources per trial must be within 1..=4");
        }
        if self.weightings.is_empty() {
            return invalid("at least one weighting is required");
        }
        if !(self.noise_level >= 0.0) || !(self.delta_floor > 0.0) {
            return invalid("noise level must be >= 0 and delta floor > 0");
        }
        if !(self.morozov.alpha_hi_factor >= 1.0) || !(self.morozov.alpha_lo_fraction > 0.0 && self.morozov.alpha_lo_fraction < 1.0) {
            return invalid("morozov range must satisfy 0 < lo_fraction < 1 <= hi_factor");
        }
        self.solver.validate()
    }
}

/// SplitMix64 finalizer, used to derive independent sub-seeds.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const INVERSE_GRID_STREAM: u64 = 1;
pub const TRUE_GRID_STREAM: u64 = 2;
const TRIAL_STREAM: u64 = 1_000;

/// Montage, both grids and both lead fields for one master seed.
#[derive(Debug, Clone)]
pub struct Setup {
    pub inverse: HeadGeometry,
    pub truth: HeadGeometry,
    pub inverse_lead_field: LeadField,
    pub true_lead_field: LeadField,
    pub inverse_grid_seed: u64,
    pub true_grid_seed: u64,
    pub inverse_sampling: GridSampling,
    pub true_sampling: GridSampling,
}

/// Seed of trial `t` under `master_seed`.
pub fn trial_seed(master_seed: u64, t: usize) -> u64 {
    derive_seed(master_seed, TRIAL_STREAM + t as u64)
}

pub fn build_setup(geometry: &GeometryConfig, master_seed: u64) -> Result<Setup> {
    let electrodes = place_electrodes(geometry.electrodes, geometry.scalp_radius)?;
    let ball_radius = geometry.scalp_radius * geometry.source_shell_fraction;
    let inverse_grid_seed = derive_seed(master_seed, INVERSE_GRID_STREAM);
    let true_grid_seed = derive_seed(master_seed, TRUE_GRID_STREAM);
    let inverse_sampling = GridSampling {
        count: geometry.inverse_grid_size,
        ball_radius,
        min_separation: geometry.min_separation,
        min_electrode_distance: 0.0,
        seed: inverse_grid_seed,
        max_attempts: geometry.max_attempts,
    };
    let true_sampling = GridSampling {
        count: geometry.true_grid_size,
        ball_radius,
        min_separation: geometry.min_separation,
        min_electrode_distance: geometry.min_electrode_distance,
        seed: true_grid_seed,
        max_attempts: geometry.max_attempts,
    };
    let inverse_positions = sample_source_grid(&inverse_sampling, &electrodes)?;
    let true_positions = sample_source_grid(&true_sampling, &electrodes)?;
    if min_cross_distance(&inverse_positions, &true_positions) <= 0.0 {
        return invalid("true and inverse grids share a position");
    }
    let inverse = HeadGeometry {
        scalp_radius: geometry.scalp_radius,
        source_shell_fraction: geometry.source_shell_fraction,
        conductivity: geometry.conductivity,
        min_separation: geometry.min_separation,
        electrode_positions: electrodes,
        source_positions: inverse_positions,
    };
    inverse.validate()?;
    let truth = inverse.with_sources(true_positions);
    truth.validate()?;
    Ok(Setup {
        inverse_lead_field: build_lead_field(&inverse)?,
        true_lead_field: build_lead_field(&truth)?,
        inverse,
        truth,
        inverse_grid_seed,
        true_grid_seed,
        inverse_sampling,
        true_sampling,
    })
}

/// One CSV row: a (trial, weighting, true source) triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub weighting: WeightingKind,
    pub k: Option<usize>,
    pub source_idx: usize,
    pub true_position: Vector3<f64>,
    pub true_moment: Vector3<f64>,
    pub est_position: Option<Vector3<f64>>,
    pub est_moment: Option<Vector3<f64>>,
    pub dle_mm: Option<f64>,
    pub doe_rad: Option<f64>,
    pub theoretical_min_dle_mm: f64,
    pub true_depth_mm: f64,
    pub est_depth_mm: Option<f64>,
    pub alpha: f64,
    pub discrepancy: f64,
    pub delta: f64,
    pub bracket: Option<BracketStatus>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightingSummary {
    pub weighting: WeightingKind,
    pub k: Option<usize>,
    pub rows: usize,
    pub matched: usize,
    pub mean_dle_mm: f64,
    pub median_dle_mm: f64,
    pub mean_doe_rad: f64,
    pub mean_theoretical_min_dle_mm: f64,
    pub in_bracket: usize,
    pub converged: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub inverse_grid_seed: u64,
    pub true_grid_seed: u64,
    pub summary: Vec<WeightingSummary>,
    pub rows: Vec<TrialRow>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Per-weighting statistics, in order of first appearance in `rows`.
pub fn summarize(rows: &[TrialRow]) -> Vec<WeightingSummary> {
    let mut kinds: Vec<(WeightingKind, Option<usize>)> = Vec::new();
    for r in rows {
        if !kinds.contains(&(r.weighting, r.k)) {
            kinds.push((r.weighting, r.k));
        }
    }
    kinds
        .into_iter()
        .map(|(kind, k)| {
            let sel: Vec<&TrialRow> = rows.iter().filter(|r| r.weighting == kind && r.k == k).collect();
            let dles: Vec<f64> = sel.iter().filter_map(|r| r.dle_mm).collect();
            let does: Vec<f64> = sel.iter().filter_map(|r| r.doe_rad).collect();
            let floors: Vec<f64> = sel.iter().map(|r| r.theoretical_min_dle_mm).collect();
            WeightingSummary {
                weighting: kind,
                k,
                rows: sel.len(),
                matched: dles.len(),
                mean_dle_mm: mean(&dles),
                median_dle_mm: median(&dles),
                mean_doe_rad: mean(&does),
                mean_theoretical_min_dle_mm: mean(&floors),
                in_bracket: sel.iter().filter(|r| r.bracket == Some(BracketStatus::InBracket)).count(),
                converged: sel.iter().filter(|r| r.converged).count(),
                failed: sel.iter().filter(|r| r.error.is_some()).count(),
            }
        })
        .collect()
}

struct Prepared {
    weighting: WeightingOperator,
    operator: Arc<GroupOperator>,
}

fn random_direction(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        let n: f64 = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Planted sources and data for one trial.
pub fn plant_trial(
    config: &ExperimentConfig,
    setup: &Setup,
    trial_seed: u64,
) -> Result<(Vec<DipoleSource>, MeasurementSet)> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    let (grid, lead_field) = if config.sources_on_inverse_grid {
        (&setup.inverse.source_positions, &setup.inverse_lead_field)
    } else {
        (&setup.truth.source_positions, &setup.true_lead_field)
    };
    if config.sources_per_trial > grid.len() {
        return invalid("more sources per trial than grid positions");
    }
    let ids = rand::seq::index::sample(&mut rng, grid.len(), config.sources_per_trial).into_vec();
    let sources = ids
        .into_iter()
        .map(|j| DipoleSource::new(grid[j], random_direction(&mut rng), j))
        .collect::<Result<Vec<_>>>()?;
    let noise_seed = rng.gen();
    let meas = simulate_measurement(lead_field, &sources, config.noise_level, noise_seed)?;
    Ok((sources, meas))
}

/// Noise level matched to the configured misfit. Under the retained measure
/// the noise is projected onto the kept subspace when known, and scaled by
/// `√(r/m)` (the expected fraction for white noise) when estimated.
pub fn noise_estimate(config: &ExperimentConfig, problem: &ProblemInstance, meas: &MeasurementSet) -> f64 {
    let b = meas.noisy_vector();
    let retained = match config.morozov.measure {
        DiscrepancyMeasure::Original => None,
        DiscrepancyMeasure::Retained => problem.operator().retained(),
    };
    let raw = match (config.delta_mode, retained) {
        (DeltaMode::KnownNoise, None) => meas.noise_norm(),
        (DeltaMode::KnownNoise, Some(w)) => w.tr_mul(&(&b - meas.clean_vector())).norm(),
        (DeltaMode::Estimated, w) => {
            let full = config.noise_level * b.norm() / (1.0 + config.noise_level * config.noise_level).sqrt();
            let fraction = w.map_or(1.0, |w| w.ncols() as f64 / w.nrows() as f64);
            full * fraction.sqrt()
        }
    };
    raw.max(config.delta_floor * b.norm())
}

fn failed_rows(trial: usize, prepared: &Prepared, sources: &[DipoleSource], setup: &Setup, err: String) -> Vec<TrialRow> {
    sources
        .iter()
        .enumerate()
        .map(|(s, src)| TrialRow {
            trial,
            weighting: prepared.weighting.kind,
            k: prepared.weighting.k,
            source_idx: s,
            true_position: src.position,
            true_moment: src.moment,
            est_position: None,
            est_moment: None,
            dle_mm: None,
            doe_rad: None,
            theoretical_min_dle_mm: theoretical_min_dle(&src.position, &setup.inverse.source_positions).unwrap_or(f64::NAN),
            true_depth_mm: depth(&src.position, &setup.inverse),
            est_depth_mm: None,
            alpha: f64::NAN,
            discrepancy: f64::NAN,
            delta: f64::NAN,
            bracket: None,
            converged: false,
            error: Some(err.clone()),
        })
        .collect()
}

fn score_trial(
    trial: usize,
    config: &ExperimentConfig,
    setup: &Setup,
    prepared: &Prepared,
    sources: &[DipoleSource],
    meas: &MeasurementSet,
) -> Result<Vec<TrialRow>> {
    let b = meas.noisy_vector();
    let problem = problem_for_data(&prepared.operator, &prepared.weighting, &b)?;
    let delta = noise_estimate(config, &problem, meas);
    let a_max = alpha_max(&problem);
    if a_max <= 0.0 {
        return invalid("data vanish on every group");
    }
    let range = (config.morozov.alpha_lo_fraction * a_max, config.morozov.alpha_hi_factor * a_max);
    let sel = morozov_select_alpha(&problem, delta, config.morozov.tau, range, config.morozov.max_bisections, config.morozov.measure, &config.solver)?;
    let x = sel.result.x_vector();
    let groups = problem.groups();
    let estimated = extract_dipoles(&x, groups, &setup.inverse.source_positions, sources.len())?;
    let true_pos: Vec<Vector3<f64>> = sources.iter().map(|s| s.position).collect();
    let est_pos: Vec<Vector3<f64>> = estimated.iter().map(|e| e.position).collect();
    let matching = match_sources(&true_pos, &est_pos)?;
    let mut rows = Vec::with_capacity(sources.len());
    for (s, src) in sources.iter().enumerate() {
        let est = matching.pairs.iter().find(|p| p.0 == s).map(|p| &estimated[p.1]);
        rows.push(TrialRow {
            trial,
            weighting: prepared.weighting.kind,
            k: prepared.weighting.k,
            source_idx: s,
            true_position: src.position,
            true_moment: src.moment,
            est_position: est.map(|e| e.position),
            est_moment: est.map(|e| e.moment),
            dle_mm: est.map(|e| dle(&src.position, &e.position)),
            doe_rad: est.map(|e| doe(&src.moment, &e.moment)).transpose()?,
            theoretical_min_dle_mm: theoretical_min_dle(&src.position, &setup.inverse.source_positions)?,
            true_depth_mm: depth(&src.position, &setup.inverse),
            est_depth_mm: est.map(|e| depth(&e.position, &setup.inverse)),
            alpha: sel.alpha,
            discrepancy: config.morozov.measure.of(&sel.result),
            delta,
            bracket: Some(sel.status),
            converged: sel.result.converged,
            error: None,
        });
    }
    Ok(rows)
}

/// Runs every trial; per-trial failures are recorded in the rows.
/// Output is identical for identical `(config, master_seed)` regardless of
/// thread scheduling.
pub fn run_experiment(config: &ExperimentConfig, master_seed: u64) -> Result<ExperimentReport> {
    config.validate()?;
    let setup = build_setup(&config.geometry, master_seed)?;
    let groups = setup.inverse_lead_field.groups();
    let prepared = config
        .weightings
        .iter()
        .map(|spec| {
            let weighting = weighting_from_spec(&setup.inverse_lead_field, spec)?;
            let operator = compose_operator(&setup.inverse_lead_field, &weighting, &groups)?;
            Ok(Prepared { weighting, operator })
        })
        .collect::<Result<Vec<_>>>()?;

    let per_trial: Vec<Vec<TrialRow>> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(master_seed, t);
            let (sources, meas) = match plant_trial(config, &setup, seed) {
                Ok(v) => v,
                Err(e) => {
                    return prepared
                        .iter()
                        .map(|p| TrialRow {
                            trial: t,
                            weighting: p.weighting.kind,
                            k: p.weighting.k,
                            source_idx: 0,
                            true_position: Vector3::zeros(),
                            true_moment: Vector3::zeros(),
                            est_position: None,
                            est_moment: None,
                            dle_mm: None,
                            doe_rad: None,
                            theoretical_min_dle_mm: f64::NAN,
                            true_depth_mm: f64::NAN,
                            est_depth_mm: None,
                            alpha: f64::NAN,
                            discrepancy: f64::NAN,
                            delta: f64::NAN,
                            bracket: None,
                            converged: false,
                            error: Some(e.to_string()),
                        })
                        .collect();
                }
            };
            prepared
                .iter()
                .flat_map(|p| {
                    score_trial(t, config, &setup, p, &sources, &meas)
                        .unwrap_or_else(|e| failed_rows(t, p, &sources, &setup, e.to_string()))
                })
                .collect()
        })
        .collect();
    let rows: Vec<TrialRow> = per_trial.into_iter().flatten().collect();
    Ok(ExperimentReport {
        summary: summarize(&rows),
        config: config.clone(),
        master_seed,
        inverse_grid_seed: setup.inverse_grid_seed,
        true_grid_seed: setup.true_grid_seed,
        rows,
    })
}

pub const CSV_HEADER: &str =
    "trial,weighting,source_idx,true_x,true_y,true_z,est_x,est_y,est_z,dle_mm,doe_rad,true_depth_mm,est_depth_mm,alpha,discrepancy,converged";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-row CSV with the fixed header; missing estimates are empty fields.
pub fn write_csv(rows: &[TrialRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        let est = r.est_position;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.trial,
            r.weighting,
            r.source_idx,
            r.true_position.x,
            r.true_position.y,
            r.true_position.z,
            opt(est.map(|p| p.x)),
            opt(est.map(|p| p.y)),
            opt(est.map(|p| p.z)),
            opt(r.dle_mm),
            opt(r.doe_rad),
            r.true_depth_mm,
            opt(r.est_depth_mm),
            r.alpha,
            r.discrepancy,
            r.converged
        )?;
    }
    Ok(())
}

/// JSON summary: config, seeds and statistics (rows go to the CSV).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportSummary {
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub inverse_grid_seed: u64,
    pub true_grid_seed: u64,
    pub summary: Vec<WeightingSummary>,
}

impl From<&ExperimentReport> for ReportSummary {
    fn from(r: &ExperimentReport) -> Self {
        Self {
            config: r.config.clone(),
            master_seed: r.master_seed,
            inverse_grid_seed: r.inverse_grid_seed,
            true_grid_seed: r.true_grid_seed,
            summary: r.summary.clone(),
        }
    }
}
