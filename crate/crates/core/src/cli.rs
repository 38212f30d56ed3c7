//! Command-line front end: `generate`, `solve`, `verify` and `experiment`,
//! all driven by one strict JSON [`RunConfig`] with flag overrides.
//!
//! Exit codes: 0 success, 2 usage or validation, 3 I/O, 4 verification failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{
    build_setup, noise_estimate, plant_trial, run_experiment, trial_seed, write_csv, DeltaMode, ExperimentConfig,
    GeometryConfig, ReportSummary, Setup,
};
use crate::forward::build_lead_field;
use crate::io::{
    read_json, read_lead_field, write_json, write_lead_field, GeometryFile, GridFile, GEOMETRY_FILE, INVERSE_GRID_FILE,
    LEAD_FIELD_FILE, LEAD_FIELD_HEADER_FILE, TRUE_GRID_FILE,
};
use crate::metrics::{extract_dipoles, EstimatedDipole};
use crate::model::{ColumnLayout, DipoleSource, SolveResult, WeightingKind};
use crate::solver::{
    alpha_max, bcd_solve, morozov_select_alpha, BracketStatus, DiscrepancyMeasure, MorozovConfig, SolverConfig,
};
use crate::theory::{run_suite, SuiteConfig, SuiteReport};
use crate::weighting::{compose_operator, problem_for_data, weighting_from_spec, WeightingSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

pub const DEFAULT_MASTER_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightingSection {
    pub kind: WeightingKind,
    /// Truncation rank; omitted means `round(min(m, 150) · m / 228)`.
    pub k: Option<usize>,
}

impl Default for WeightingSection {
    fn default() -> Self {
        Self {
            kind: WeightingKind::TruncatedPseudoinverse,
            k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MorozovSection {
    pub tau: f64,
    pub delta_mode: DeltaMode,
    pub delta_floor: f64,
    pub measure: DiscrepancyMeasure,
    pub alpha_lo_fraction: f64,
    pub alpha_hi_factor: f64,
    pub max_bisections: usize,
}

impl Default for MorozovSection {
    fn default() -> Self {
        let m = MorozovConfig::default();
        Self {
            tau: m.tau,
            delta_mode: DeltaMode::KnownNoise,
            delta_floor: 1e-8,
            measure: m.measure,
            alpha_lo_fraction: m.alpha_lo_fraction,
            alpha_hi_factor: m.alpha_hi_factor,
            max_bisections: m.max_bisections,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub trials: usize,
    pub sources_per_trial: usize,
    pub noise_level: f64,
    /// Run identity and the configured truncated weighting on identical data.
    pub comparison: bool,
    pub sources_on_inverse_grid: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            trials: 50,
            sources_per_trial: 1,
            noise_level: 0.01,
            comparison: true,
            sources_on_inverse_grid: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSection {
    /// Fixed `α`; omitted selects `α` by the discrepancy principle.
    pub alpha: Option<f64>,
    /// Which trial's sources and noise to simulate.
    pub trial: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub seeds: usize,
    pub rows: usize,
    pub num_groups: usize,
    pub gamma_fractions: Vec<f64>,
    pub epsilon: f64,
    pub include_degenerate: bool,
}

impl Default for VerifySection {
    fn default() -> Self {
        let s = SuiteConfig::default();
        Self {
            seeds: s.seeds,
            rows: s.rows,
            num_groups: s.num_groups,
            gamma_fractions: s.gamma_fractions,
            epsilon: s.epsilon,
            include_degenerate: s.include_degenerate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub master: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            master: DEFAULT_MASTER_SEED,
        }
    }
}

/// Everything a run depends on. Every output file embeds the final value
/// (after flag overrides), so a run can be replayed from its own output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub weighting: WeightingSection,
    pub solver: SolverConfig,
    pub morozov: MorozovSection,
    pub experiment: ExperimentSection,
    pub solve: SolveSection,
    pub verify: VerifySection,
    pub seeds: Seeds,
}

impl RunConfig {
    pub fn weightings(&self) -> Vec<WeightingSpec> {
        let chosen = WeightingSpec {
            kind: self.weighting.kind,
            k: self.weighting.k,
        };
        if !self.experiment.comparison {
            return vec![chosen];
        }
        let truncated = WeightingSpec {
            kind: WeightingKind::TruncatedPseudoinverse,
            k: self.weighting.k,
        };
        vec![
            WeightingSpec {
                kind: WeightingKind::Identity,
                k: None,
            },
            truncated,
        ]
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            geometry: self.geometry.clone(),
            trials: self.experiment.trials,
            sources_per_trial: self.experiment.sources_per_trial,
            noise_level: self.experiment.noise_level,
            weightings: self.weightings(),
            sources_on_inverse_grid: self.experiment.sources_on_inverse_grid,
            delta_mode: self.morozov.delta_mode,
            delta_floor: self.morozov.delta_floor,
            morozov: MorozovConfig {
                tau: self.morozov.tau,
                alpha_lo_fraction: self.morozov.alpha_lo_fraction,
                alpha_hi_factor: self.morozov.alpha_hi_factor,
                max_bisections: self.morozov.max_bisections,
                measure: self.morozov.measure,
            },
            solver: self.solver,
        }
    }

    pub fn suite_config(&self) -> SuiteConfig {
        SuiteConfig {
            seeds: self.verify.seeds,
            base_seed: self.seeds.master,
            rows: self.verify.rows,
            num_groups: self.verify.num_groups,
            gamma_fractions: self.verify.gamma_fractions.clone(),
            epsilon: self.verify.epsilon,
            include_degenerate: self.verify.include_degenerate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment_config().validate()?;
        if let Some(a) = self.solve.alpha {
            if !(a > 0.0) {
                return Err(Error::InvalidArgument("solve.alpha must be positive".into()));
            }
        }
        if self.verify.seeds == 0 || !(self.verify.epsilon > 0.0) {
            return Err(Error::InvalidArgument("verify needs seeds >= 1 and epsilon > 0".into()));
        }
        Ok(())
    }
}

/// Config and seed recorded in every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
}

impl Provenance {
    fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            seed: config.seeds.master,
            config: config.clone(),
        }
    }

    fn value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("provenance serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Identity,
    TruncatedPseudoinverse,
}

impl From<KindArg> for WeightingKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Identity => WeightingKind::Identity,
            KindArg::TruncatedPseudoinverse => WeightingKind::TruncatedPseudoinverse,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayoutArg {
    ComponentMajor,
    Stacked,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration; missing keys take the defaults listed below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides seeds.master).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct WeightingArgs {
    /// Weighting kind (overrides weighting.kind).
    #[arg(long, value_enum)]
    pub weighting: Option<KindArg>,
    /// Truncation rank (overrides weighting.k).
    #[arg(long)]
    pub k: Option<usize>,
    /// Only the configured weighting instead of identity and truncated side by side.
    #[arg(long)]
    pub no_comparison: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write montage, both grids and the inverse lead field.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        electrodes: Option<usize>,
        #[arg(long)]
        inverse_grid: Option<usize>,
        #[arg(long)]
        true_grid: Option<usize>,
        /// Column layout of the exported lead field.
        #[arg(long, value_enum, default_value = "component-major")]
        layout: LayoutArg,
    },
    /// Simulate one trial on generated data and solve it per weighting.
    Solve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        weighting: WeightingArgs,
        /// Directory written by `generate`.
        #[arg(long)]
        data: PathBuf,
        /// Output directory for `solve_<kind>.json`.
        #[arg(long)]
        out: PathBuf,
        /// Fixed regularization weight (overrides solve.alpha).
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        trial: Option<usize>,
        #[arg(long)]
        noise_level: Option<f64>,
    },
    /// Run the theorem certification suite; exit 4 if any verdict fails.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Output JSON file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Run the localization experiment; writes experiment.json and experiment.csv.
    Experiment {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        weighting: WeightingArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        noise_level: Option<f64>,
    },
}

#[derive(Debug, Parser)]
#[command(name = "eeg-grouplasso", version, about = "Weighted Group Lasso EEG source localization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// The clap command with the default configuration appended to `--help`.
pub fn command() -> clap::Command {
    let defaults = serde_json::to_string_pretty(&RunConfig::default()).expect("defaults serialize");
    Cli::command().after_help(format!("Default configuration:\n{defaults}"))
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) => EXIT_IO,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn load_config(common: &Common) -> std::result::Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure {
                code: EXIT_IO,
                message: format!("cannot read config {}: {e}", path.display()),
            })?;
            serde_json::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seeds.master = seed;
    }
    Ok(cfg)
}

fn apply_weighting(cfg: &mut RunConfig, w: &WeightingArgs) {
    if let Some(kind) = w.weighting {
        cfg.weighting.kind = kind.into();
    }
    if w.k.is_some() {
        cfg.weighting.k = w.k;
    }
    if w.no_comparison {
        cfg.experiment.comparison = false;
    }
}

fn ensure_dir(path: &Path) -> std::result::Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("cannot create {}: {e}", path.display()),
    })
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Messages go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_USAGE;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(command: Command) -> std::result::Result<i32, Failure> {
    match command {
        Command::Generate {
            common,
            out,
            electrodes,
            inverse_grid,
            true_grid,
            layout,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(e) = electrodes {
                cfg.geometry.electrodes = e;
            }
            if let Some(n) = inverse_grid {
                cfg.geometry.inverse_grid_size = n;
            }
            if let Some(n) = true_grid {
                cfg.geometry.true_grid_size = n;
            }
            cfg.validate()?;
            let layout = match layout {
                LayoutArg::ComponentMajor => ColumnLayout::ComponentMajor,
                LayoutArg::Stacked => ColumnLayout::Stacked,
            };
            ensure_dir(&out)?;
            cmd_generate(&cfg, &out, layout)?;
            Ok(EXIT_OK)
        }
        Command::Solve {
            common,
            weighting,
            data,
            out,
            alpha,
            trial,
            noise_level,
        } => {
            let mut cfg = load_config(&common)?;
            apply_weighting(&mut cfg, &weighting);
            if alpha.is_some() {
                cfg.solve.alpha = alpha;
            }
            if let Some(t) = trial {
                cfg.solve.trial = t;
            }
            if let Some(n) = noise_level {
                cfg.experiment.noise_level = n;
            }
            cfg.validate()?;
            for name in [GEOMETRY_FILE, INVERSE_GRID_FILE, TRUE_GRID_FILE, LEAD_FIELD_FILE, LEAD_FIELD_HEADER_FILE] {
                if !data.join(name).is_file() {
                    return Err(usage(format!("missing {} in {}", name, data.display())));
                }
            }
            ensure_dir(&out)?;
            cmd_solve(&cfg, &data, &out)?;
            Ok(EXIT_OK)
        }
        Command::Verify { common, out, seeds } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = seeds {
                cfg.verify.seeds = s;
            }
            cfg.validate()?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                ensure_dir(parent)?;
            }
            let report = cmd_verify(&cfg, &out)?;
            eprintln!(
                "verify: {} passed, {} failed, {} not applicable",
                report.passed, report.failed, report.not_applicable
            );
            Ok(if report.all_pass() { EXIT_OK } else { EXIT_VERIFY })
        }
        Command::Experiment {
            common,
            weighting,
            out,
            trials,
            noise_level,
        } => {
            let mut cfg = load_config(&common)?;
            apply_weighting(&mut cfg, &weighting);
            if let Some(t) = trials {
                cfg.experiment.trials = t;
            }
            if let Some(n) = noise_level {
                cfg.experiment.noise_level = n;
            }
            cfg.validate()?;
            ensure_dir(&out)?;
            cmd_experiment(&cfg, &out)?;
            Ok(EXIT_OK)
        }
    }
}

/// Writes `geometry.json`, `inverse_grid.json`, `true_grid.json`,
/// `lead_field.bin` and `lead_field.json` into `out`.
pub fn cmd_generate(cfg: &RunConfig, out: &Path, layout: ColumnLayout) -> Result<()> {
    let setup = build_setup(&cfg.geometry, cfg.seeds.master)?;
    let provenance = Provenance::new("generate", cfg).value();
    write_json(
        out.join(GEOMETRY_FILE),
        &GeometryFile {
            head: setup.inverse.with_sources(Vec::new()),
            provenance: provenance.clone(),
        },
    )?;
    write_json(
        out.join(INVERSE_GRID_FILE),
        &GridFile {
            positions: setup.inverse.source_positions.clone(),
            sampling: setup.inverse_sampling.clone(),
            provenance: provenance.clone(),
        },
    )?;
    write_json(
        out.join(TRUE_GRID_FILE),
        &GridFile {
            positions: setup.truth.source_positions.clone(),
            sampling: setup.true_sampling.clone(),
            provenance: provenance.clone(),
        },
    )?;
    write_lead_field(out, &setup.inverse_lead_field.relayout(layout), provenance)?;
    Ok(())
}

/// Rebuilds a [`Setup`] from files written by [`cmd_generate`].
pub fn load_setup(data: &Path) -> Result<Setup> {
    let geometry: GeometryFile = read_json(data.join(GEOMETRY_FILE))?;
    let inverse_grid: GridFile = read_json(data.join(INVERSE_GRID_FILE))?;
    let true_grid: GridFile = read_json(data.join(TRUE_GRID_FILE))?;
    let (lead_field, _) = read_lead_field(data)?;
    let inverse = geometry.head.with_sources(inverse_grid.positions);
    let truth = geometry.head.with_sources(true_grid.positions);
    inverse.validate()?;
    truth.validate()?;
    if lead_field.rows() != inverse.electrode_positions.len() || lead_field.num_positions() != inverse.source_positions.len() {
        return Err(Error::InvalidArgument(format!(
            "lead field is {}x{} but geometry has {} electrodes and {} inverse positions",
            lead_field.rows(),
            lead_field.cols(),
            inverse.electrode_positions.len(),
            inverse.source_positions.len()
        )));
    }
    Ok(Setup {
        true_lead_field: build_lead_field(&truth)?,
        inverse_lead_field: lead_field,
        inverse,
        truth,
        inverse_grid_seed: inverse_grid.sampling.seed,
        true_grid_seed: true_grid.sampling.seed,
        inverse_sampling: inverse_grid.sampling,
        true_sampling: true_grid.sampling,
    })
}

/// Discrepancy-principle details of a solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionInfo {
    pub status: BracketStatus,
    pub delta: f64,
    pub tau: f64,
    pub evaluations: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOutput {
    pub provenance: Provenance,
    pub trial_seed: u64,
    pub alpha_max: f64,
    pub selection: Option<SelectionInfo>,
    pub true_sources: Vec<DipoleSource>,
    pub estimated: Vec<EstimatedDipole>,
    pub result: SolveResult,
}

/// Writes one `solve_<kind>.json` per configured weighting; returns the paths.
pub fn cmd_solve(cfg: &RunConfig, data: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let setup = load_setup(data)?;
    let exp = cfg.experiment_config();
    let seed = trial_seed(cfg.seeds.master, cfg.solve.trial);
    let (sources, meas) = plant_trial(&exp, &setup, seed)?;
    let b: DVector<f64> = meas.noisy_vector();
    let lf = &setup.inverse_lead_field;
    let groups = lf.groups();
    let mut written = Vec::new();
    for spec in &exp.weightings {
        let weighting = weighting_from_spec(lf, spec)?;
        let op = compose_operator(lf, &weighting, &groups)?;
        let problem = problem_for_data(&op, &weighting, &b)?;
        let a_max = alpha_max(&problem);
        let (result, selection) = match cfg.solve.alpha {
            Some(alpha) => (bcd_solve(&problem, alpha, &DVector::zeros(problem.n()), &cfg.solver)?, None),
            None => {
                if a_max <= 0.0 {
                    return Err(Error::InvalidArgument("data vanish on every group".into()));
                }
                let delta = noise_estimate(&exp, &problem, &meas);
                let range = (exp.morozov.alpha_lo_fraction * a_max, exp.morozov.alpha_hi_factor * a_max);
                let sel = morozov_select_alpha(
                    &problem,
                    delta,
                    exp.morozov.tau,
                    range,
                    exp.morozov.max_bisections,
                    exp.morozov.measure,
                    &cfg.solver,
                )?;
                let info = SelectionInfo {
                    status: sel.status,
                    delta: sel.delta,
                    tau: sel.tau,
                    evaluations: sel.evaluations,
                };
                (sel.result, Some(info))
            }
        };
        let estimated = extract_dipoles(&result.x_vector(), &groups, &setup.inverse.source_positions, sources.len())?;
        let output = SolveOutput {
            provenance: Provenance::new("solve", cfg),
            trial_seed: seed,
            alpha_max: a_max,
            selection,
            true_sources: sources.clone(),
            estimated,
            result,
        };
        let path = out.join(format!("solve_{}.json", spec.kind));
        write_json(&path, &output)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyOutput {
    pub provenance: Provenance,
    pub report: SuiteReport,
}

pub fn cmd_verify(cfg: &RunConfig, out: &Path) -> Result<SuiteReport> {
    let report = run_suite(&cfg.suite_config())?;
    write_json(
        out,
        &VerifyOutput {
            provenance: Provenance::new("verify", cfg),
            report: report.clone(),
        },
    )?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub provenance: Provenance,
    pub report: ReportSummary,
}

pub const EXPERIMENT_JSON: &str = "experiment.json";
pub const EXPERIMENT_CSV: &str = "experiment.csv";

pub fn cmd_experiment(cfg: &RunConfig, out: &Path) -> Result<ReportSummary> {
    let report = run_experiment(&cfg.experiment_config(), cfg.seeds.master)?;
    let summary = ReportSummary::from(&report);
    write_json(
        out.join(EXPERIMENT_JSON),
        &ExperimentOutput {
            provenance: Provenance::new("experiment", cfg),
            report: summary.clone(),
        },
    )?;
    let mut csv = Vec::new();
    write_csv(&report.rows, &mut csv)?;
    fs::write(out.join(EXPERIMENT_CSV), csv)?;
    Ok(summary)
}
