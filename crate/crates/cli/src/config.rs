//! Run configuration: JSON file values overridden by command-line flags.

use std::path::{Path, PathBuf};

use mcie_core::cases::CASE_IDS;
use mcie_core::partition::ScheduleKind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_N: usize = 10_000;
pub const DEFAULT_M: usize = 3;
pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_REPS: usize = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config schema error: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("invalid config field `{field}`: {reason}")]
    Field { field: &'static str, reason: String },
}

impl ConfigError {
    fn field(field: &'static str, reason: impl Into<String>) -> Self {
        Self::Field {
            field,
            reason: reason.into(),
        }
    }
}

/// `N` may be one budget or a list (for rate studies).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum Budgets {
    One(usize),
    Many(Vec<usize>),
}

/// Optional values as they come from a file or from flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct PartialConfig {
    pub case: Option<String>,
    #[serde(rename = "N", default, deserialize_with = "budgets")]
    pub n: Option<Vec<usize>>,
    pub m: Option<usize>,
    pub schedule: Option<ScheduleKind>,
    pub seed: Option<u64>,
    pub level: Option<f64>,
    pub reps: Option<usize>,
    pub grid: Option<usize>,
    pub tau_grid: Option<usize>,
    pub n_sim: Option<usize>,
    pub out: Option<PathBuf>,
    pub summary: Option<PathBuf>,
}

fn budgets<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<Vec<usize>>, D::Error> {
    Ok(Option::<Budgets>::deserialize(d)?.map(|b| match b {
        Budgets::One(n) => vec![n],
        Budgets::Many(v) => v,
    }))
}

/// Validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    /// Empty for subcommands that take no case.
    pub case: String,
    #[serde(rename = "N")]
    pub n: Vec<usize>,
    pub m: usize,
    pub schedule: ScheduleKind,
    pub seed: u64,
    pub level: f64,
    pub reps: usize,
    pub grid: Option<usize>,
    pub tau_grid: Option<usize>,
    pub n_sim: usize,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub summary: Option<PathBuf>,
}

impl RunConfig {
    /// The single budget of non-study runs.
    pub fn budget(&self) -> Result<usize, ConfigError> {
        match self.n.as_slice() {
            [n] => Ok(*n),
            _ => Err(ConfigError::field("N", "expected a single budget")),
        }
    }
}

impl PartialConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Values of `other` win where present.
    pub fn overridden_by(self, other: PartialConfig) -> Self {
        Self {
            case: other.case.or(self.case),
            n: other.n.or(self.n),
            m: other.m.or(self.m),
            schedule: other.schedule.or(self.schedule),
            seed: other.seed.or(self.seed),
            level: other.level.or(self.level),
            reps: other.reps.or(self.reps),
            grid: other.grid.or(self.grid),
            tau_grid: other.tau_grid.or(self.tau_grid),
            n_sim: other.n_sim.or(self.n_sim),
            out: other.out.or(self.out),
            summary: other.summary.or(self.summary),
        }
    }

    pub fn resolve(self, require_case: bool) -> Result<RunConfig, ConfigError> {
        let case = match self.case {
            Some(c) if CASE_IDS.contains(&c.as_str()) => c,
            Some(c) => {
                return Err(ConfigError::field(
                    "case",
                    format!("unknown case {c:?}; known: {}", CASE_IDS.join(", ")),
                ))
            }
            None if require_case => return Err(ConfigError::field("case", "missing")),
            None => String::new(),
        };
        let n = self.n.unwrap_or_else(|| vec![DEFAULT_N]);
        if n.is_empty() || n.contains(&0) {
            return Err(ConfigError::field("N", "budgets must be positive"));
        }
        let level = self.level.unwrap_or(DEFAULT_LEVEL);
        if !(level > 0.0 && level < 1.0) {
            return Err(ConfigError::field(
                "level",
                format!("{level} is not in (0, 1)"),
            ));
        }
        let positive = |field, v: Option<usize>, default| match v.unwrap_or(default) {
            0 => Err(ConfigError::field(field, "must be positive")),
            v => Ok(v),
        };
        let grid = self
            .grid
            .map(|g| positive("grid", Some(g), 0))
            .transpose()?;
        if grid.is_some_and(|g| g < 2) {
            return Err(ConfigError::field("grid", "need at least 2 points"));
        }
        let tau_grid = self
            .tau_grid
            .map(|g| positive("tau_grid", Some(g), 0))
            .transpose()?;
        if tau_grid.is_some_and(|g| g < 4) {
            return Err(ConfigError::field("tau_grid", "need at least 4 nodes"));
        }
        Ok(RunConfig {
            case,
            n,
            m: positive("m", self.m, DEFAULT_M)?,
            schedule: self.schedule.unwrap_or_default(),
            seed: self.seed.unwrap_or(0),
            level,
            reps: positive("reps", self.reps, DEFAULT_REPS)?,
            grid,
            tau_grid,
            n_sim: positive(
                "n_sim",
                self.n_sim,
                mcie_core::inference::gaussian::DEFAULT_N_SIM,
            )?,
            out: self.out,
            summary: self.summary,
        })
    }
}

/// Reads and validates a config file on its own; a case id is required.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    PartialConfig::from_file(path)?.resolve(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        serde_json::from_str::<PartialConfig>(text)?.resolve(true)
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let c = parse(r#"{"case": "fred-smooth"}"#).unwrap();
        assert_eq!(c.level, 0.95);
        assert_eq!(c.reps, 1);
        assert_eq!(c.n, vec![DEFAULT_N]);
        assert_eq!(c.schedule, ScheduleKind::Uniform);
    }

    #[test]
    fn level_out_of_range_names_the_field() {
        let e = parse(r#"{"case": "fred-smooth", "level": 1.5}"#).unwrap_err();
        assert!(e.to_string().contains("level"), "{e}");
    }

    #[test]
    fn missing_case_is_an_error() {
        let e = parse(r#"{"N": 100}"#).unwrap_err();
        assert!(e.to_string().contains("case"), "{e}");
    }

    #[test]
    fn unknown_keys_and_bad_types_are_schema_errors() {
        assert!(matches!(
            parse(r#"{"case": "fred-smooth", "lvl": 0.5}"#),
            Err(ConfigError::Schema(_))
        ));
        assert!(matches!(
            parse(r#"{"case": "fred-smooth", "m": -1}"#),
            Err(ConfigError::Schema(_))
        ));
        assert!(matches!(
            parse(r#"{"case": "fred-smooth", "schedule": "greedy"}"#),
            Err(ConfigError::Schema(_))
        ));
    }

    #[test]
    fn budgets_accept_number_or_list() {
        assert_eq!(parse(r#"{"case": "volt-exp", "N": 5}"#).unwrap().n, vec![5]);
        assert_eq!(
            parse(r#"{"case": "volt-exp", "N": [1, 2]}"#).unwrap().n,
            vec![1, 2]
        );
    }

    #[test]
    fn flags_override_file() {
        let file = PartialConfig {
            case: Some("fred-smooth".into()),
            seed: Some(3),
            ..Default::default()
        };
        let flags = PartialConfig {
            seed: Some(9),
            ..Default::default()
        };
        let c = file.overridden_by(flags).resolve(true).unwrap();
        assert_eq!((c.case.as_str(), c.seed), ("fred-smooth", 9));
    }

    #[test]
    fn unknown_case_is_rejected() {
        let e = parse(r#"{"case": "nope"}"#).unwrap_err();
        assert!(e.to_string().contains("case"), "{e}");
    }
}
