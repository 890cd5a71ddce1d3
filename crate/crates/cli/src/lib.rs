//! Library side of the `mcie` binary: staged Monte-Carlo solves, confidence bands and studies for the
//! built-in integral-equation cases.

pub mod config;
pub mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mcie_core::cases::{manufactured_case, CaseProblem, ManufacturedCase, CASE_IDS};
use mcie_core::grid::{build_grid, GridSpec};
use mcie_core::inference::study::{
    band_points, band_run, coverage_study, rate_study, BandOptions, StudyProblem,
};
use mcie_core::inference::CovarianceSource;
use mcie_core::partition::{paper_optimal, ScheduleKind};
use mcie_core::rng::RandomStream;
use mcie_core::tau::uniform_tau_grid;
use serde_json::json;
use thiserror::Error;

use crate::config::{ConfigError, PartialConfig, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "mcie",
    version,
    about = "Monte-Carlo solvers and confidence bands for integral equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One Monte-Carlo solve next to the deterministic iterate, as CSV.
    Solve(Common),
    /// Uniform confidence band of one replication, as CSV (plus an optional JSON summary).
    Band(BandArgs),
    /// Convergence-rate study over a list of budgets, as JSON.
    Rate(Common),
    /// Replicated band coverage, as JSON.
    Coverage(BandArgs),
    /// Stage sizes of a partition schedule, as JSON.
    Partition(Common),
    /// List the built-in cases.
    Cases,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    case: Option<String>,
    /// Total sample budget; a comma-separated list for `rate`.
    #[arg(long = "N", value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Number of Picard stages.
    #[arg(long)]
    m: Option<usize>,
    /// uniform, paper-optimal or budget-consistent.
    #[arg(long)]
    schedule: Option<ScheduleKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// Band confidence level in (0, 1).
    #[arg(long)]
    level: Option<f64>,
    /// Replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Grid points per axis (Fredholm cases).
    #[arg(long)]
    grid: Option<usize>,
    /// Number of τ-nodes (Volterra cases).
    #[arg(long = "tau-grid")]
    tau_grid: Option<usize>,
    /// Gaussian simulations per quantile.
    #[arg(long = "n-sim")]
    n_sim: Option<usize>,
    /// Output file; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BandArgs {
    #[command(flatten)]
    common: Common,
    /// empirical or limit.
    #[arg(long, default_value = "empirical", value_parser = parse_source)]
    covariance: CovarianceSource,
    /// JSON summary path (`band` only).
    #[arg(long)]
    summary: Option<PathBuf>,
}

fn parse_source(s: &str) -> Result<CovarianceSource, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("`{s}` is not one of empirical, limit"))
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<mcie_core::Error> for CliError {
    fn from(e: mcie_core::Error) -> Self {
        use mcie_core::Error as E;
        match e {
            E::InvalidArgument { .. } | E::UnknownCase(_) | E::Infeasible(_) => {
                CliError::Validation(e.to_string())
            }
            E::NonFinite { .. } | E::Undefined(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl Common {
    fn resolve(&self, require_case: bool, summary: Option<PathBuf>) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(path) => PartialConfig::from_file(path)?,
            None => PartialConfig::default(),
        };
        let flags = PartialConfig {
            case: self.case.clone(),
            n: self.n.clone(),
            m: self.m,
            schedule: self.schedule,
            seed: self.seed,
            level: self.level,
            reps: self.reps,
            grid: self.grid,
            tau_grid: self.tau_grid,
            n_sim: self.n_sim,
            out: self.out.clone(),
            summary,
        };
        Ok(file.overridden_by(flags).resolve(require_case)?)
    }
}

/// The case with the requested grid and τ-resolution applied.
fn load_case(cfg: &RunConfig) -> Result<ManufacturedCase, CliError> {
    let mut case = manufactured_case(&cfg.case)?;
    match &mut case.problem {
        CaseProblem::Fredholm(p) => {
            if cfg.tau_grid.is_some() {
                return Err(CliError::Validation(format!(
                    "tau_grid: case {} has no τ-axis",
                    cfg.case
                )));
            }
            if let Some(n) = cfg.grid {
                let spec = match p.grid().spec() {
                    Some(s) => GridSpec {
                        points_per_axis: n,
                        ..*s
                    },
                    None => GridSpec::new(p.grid().dim(), n),
                };
                *p = p.with_grid(build_grid(&spec)?)?;
            }
        }
        CaseProblem::Volterra(p) => {
            if cfg.grid.is_some() {
                return Err(CliError::Validation(format!(
                    "grid: case {} has a fixed atom grid",
                    cfg.case
                )));
            }
            if let Some(n) = cfg.tau_grid {
                *p = p.with_tau_grid(uniform_tau_grid(n)?)?;
            }
        }
    }
    Ok(case)
}

fn study_problem(case: &ManufacturedCase) -> StudyProblem<'_> {
    match &case.problem {
        CaseProblem::Fredholm(p) => StudyProblem::Fredholm(p),
        CaseProblem::Volterra(p) => StudyProblem::Volterra(p),
    }
}

fn band_options(cfg: &RunConfig, covariance: CovarianceSource, all_tau: bool) -> BandOptions {
    BandOptions {
        level: cfg.level,
        n_sim: cfg.n_sim,
        covariance,
        tau_points: if all_tau {
            usize::MAX
        } else {
            BandOptions::default().tau_points
        },
    }
}

fn band_command(
    cfg: &RunConfig,
    covariance: CovarianceSource,
    all_tau: bool,
) -> Result<(), CliError> {
    let case = load_case(cfg)?;
    let schedule = cfg.schedule.build(cfg.budget()?, cfg.m)?;
    let stream = RandomStream::new(cfg.seed);
    let run = band_run(
        study_problem(&case),
        &schedule,
        &stream,
        0,
        &band_options(cfg, covariance, all_tau),
    )?;
    output::write(cfg.out.as_deref(), &output::band_csv(&run)?)?;
    if let Some(path) = &cfg.summary {
        let summary = json!({
            "command": "band",
            "config": cfg,
            "q": schedule.sizes(),
            "q_m": run.band.q_m,
            "quantile": run.band.quantile,
            "halfwidth": run.band.halfwidth,
            "covariance": run.covariance,
            "covers_deterministic": run.band.covers(&run.det_values),
            "apriori_widening": run.apriori_widening,
        });
        output::write(Some(path), &output::json(&summary)?)?;
    }
    Ok(())
}

fn rate_command(cfg: &RunConfig) -> Result<(), CliError> {
    let case = load_case(cfg)?;
    let study = rate_study(
        study_problem(&case),
        cfg.m,
        &cfg.n,
        cfg.schedule,
        cfg.reps,
        &RandomStream::new(cfg.seed),
    )?;
    let summary = json!({ "command": "rate", "case": cfg.case, "config": cfg, "seed": cfg.seed, "result": study, "slope": study.slope });
    output::write(cfg.out.as_deref(), &output::json(&summary)?)
}

fn coverage_command(cfg: &RunConfig, covariance: CovarianceSource) -> Result<(), CliError> {
    let case = load_case(cfg)?;
    let problem = study_problem(&case);
    let options = band_options(cfg, covariance, false);
    let reference: Vec<f64> = band_points(problem, options.tau_points)?
        .iter()
        .map(|p| match problem {
            StudyProblem::Fredholm(_) => case.reference_at(p),
            StudyProblem::Volterra(_) => case.reference_at_tau(p[0], &p[1..]),
        })
        .collect::<Option<_>>()
        .ok_or_else(|| CliError::Runtime("case reference does not match its problem".into()))?;
    let schedule = cfg.schedule.build(cfg.budget()?, cfg.m)?;
    let study = coverage_study(
        problem,
        &schedule,
        cfg.reps,
        &RandomStream::new(cfg.seed),
        &options,
        Some(&reference),
    )?;
    let summary = json!({
        "command": "coverage",
        "case": cfg.case,
        "config": cfg,
        "seed": cfg.seed,
        "coverage": study.coverage,
        "result": study,
    });
    output::write(cfg.out.as_deref(), &output::json(&summary)?)
}

fn partition_command(cfg: &RunConfig) -> Result<(), CliError> {
    let budget = cfg.budget()?;
    let value = match cfg.schedule {
        ScheduleKind::PaperOptimal => serde_json::to_value(paper_optimal(budget, cfg.m, 1.0, 1.0)?),
        kind => {
            let s = kind.build(budget, cfg.m)?;
            Ok(json!({ "q": s.sizes(), "sum": s.total(), "budget": s.budget() }))
        }
    }
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    output::write(cfg.out.as_deref(), &output::json(&value)?)
}

fn cases_command() -> Result<(), CliError> {
    let mut text = String::new();
    for id in CASE_IDS {
        let case = manufactured_case(id)?;
        let kind = match case.problem {
            CaseProblem::Fredholm(_) => "fredholm",
            CaseProblem::Volterra(_) => "volterra",
        };
        text.push_str(&format!("{id}\t{kind}\t{}\n", case.description));
    }
    output::write(None, &text)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(c) => {
            band_command(&c.resolve(true, None)?, CovarianceSource::Empirical, true)
        }
        Command::Band(b) => band_command(
            &b.common.resolve(true, b.summary.clone())?,
            b.covariance,
            false,
        ),
        Command::Rate(c) => rate_command(&c.resolve(true, None)?),
        Command::Coverage(b) => coverage_command(&b.common.resolve(true, None)?, b.covariance),
        Command::Partition(c) => partition_command(&c.resolve(false, None)?),
        Command::Cases => cases_command(),
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// exit code: 0 on success, 1 on validation errors, 2 on runtime failures.
pub fn run_argv<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
