//! Run configuration, shared by the flag-based subcommands and `run --config`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use peo_core::profiles::ProblemSpec;
use peo_core::{io, preset, Grid, ProblemData, SearchSpace, SolverConfig};
use serde::{Deserialize, Serialize};

pub const OUTPUT_DIR_ENV: &str = "PEO_OUTPUT_DIR";
pub const DEFAULT_GRID_SIZE: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Solve,
    Analyze,
    Certify,
    Sweep,
    ReproduceFigure,
}

/// A preset name or a full problem description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemRef {
    Preset(String),
    Spec(ProblemSpec),
}

/// Solver settings; anything left out keeps its default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub max_iterations: Option<usize>,
    pub tolerance: Option<f64>,
    pub armijo_c: Option<f64>,
    pub armijo_shrink: Option<f64>,
    pub initial_step: Option<f64>,
    /// `"cumulative"` or `"increments"`.
    pub search_space: Option<String>,
    pub warm_start: Option<bool>,
    pub parallel: Option<bool>,
    pub support_tol: Option<f64>,
    pub atom_ratio: Option<f64>,
    /// CSV file with columns `t, alpha` used as the starting profile.
    pub restart_profile: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    #[serde(default)]
    pub problem: Option<ProblemRef>,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default)]
    pub eta_bar: Option<f64>,
    #[serde(default)]
    pub eta_list: Option<Vec<f64>>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Profile to check, for `certify`.
    #[serde(default)]
    pub profile: Option<PathBuf>,
    /// Target name, for `reproduce-figure`.
    #[serde(default)]
    pub figure: Option<String>,
}

fn default_grid_size() -> usize {
    DEFAULT_GRID_SIZE
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn new(subcommand: Subcommand) -> Self {
        Self {
            subcommand,
            problem: None,
            grid_size: DEFAULT_GRID_SIZE,
            eta_bar: None,
            eta_list: None,
            solver: SolverSettings::default(),
            output_dir: default_output_dir(),
            profile: None,
            figure: None,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Output directory after applying the environment override.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }

    /// Checks the combinations each subcommand accepts.
    pub fn validate(&self) -> Result<()> {
        use Subcommand::*;
        if self.eta_bar.is_some() && self.eta_list.is_some() {
            bail!("give either eta_bar or eta_list, not both");
        }
        match self.subcommand {
            Sweep => {
                if self.eta_list.as_ref().is_none_or(|l| l.is_empty()) {
                    bail!("sweep needs a non-empty eta_list");
                }
            }
            Solve | Certify | Analyze => {
                if self.eta_list.is_some() {
                    bail!("eta_list is only used by sweep");
                }
            }
            ReproduceFigure => {
                if self.figure.is_none() {
                    bail!("reproduce-figure needs a figure name");
                }
                if self.eta_bar.is_some() || self.eta_list.is_some() || self.problem.is_some() {
                    bail!("reproduce-figure fixes its own problem and eta values");
                }
            }
        }
        if self.subcommand != ReproduceFigure && self.problem.is_none() {
            bail!("a problem (preset name or description) is required");
        }
        if self.subcommand == Certify && self.profile.is_none() {
            bail!("certify needs a profile CSV");
        }
        for &e in self.eta_bar.iter().chain(self.eta_list.iter().flatten()) {
            if !(e > 0.0 && e.is_finite()) {
                bail!("eta_bar must be positive and finite, got {e}");
            }
        }
        Ok(())
    }

    /// Problem at `eta_bar`, or at the configured value. A problem
    /// description may carry its own `eta_bar`, which the configured one
    /// overrides.
    pub fn problem_at(&self, eta_bar: Option<f64>) -> Result<ProblemData> {
        let eta = eta_bar.or(self.eta_bar);
        match self.problem.as_ref().context("no problem given")? {
            ProblemRef::Preset(name) => {
                let eta = eta.context("eta_bar is required")?;
                Ok(preset(name, eta)?)
            }
            ProblemRef::Spec(spec) => {
                let mut spec = spec.clone();
                if eta.is_some() {
                    spec.eta_bar = eta;
                }
                Ok(spec.to_problem()?)
            }
        }
    }

    pub fn grid(&self, p: &ProblemData) -> Result<Grid> {
        Ok(Grid::build(p, self.grid_size, &[])?)
    }

    pub fn solver_config(&self, p: &ProblemData) -> Result<SolverConfig> {
        let s = &self.solver;
        let d = SolverConfig::default();
        let search_space = match s.search_space.as_deref() {
            None | Some("cumulative") => SearchSpace::Cumulative,
            Some("increments") => SearchSpace::Increments,
            Some(other) => bail!("unknown search_space `{other}` (cumulative or increments)"),
        };
        let restart_profile = match &s.restart_profile {
            Some(path) => Some(read_profile(path, p)?),
            None => None,
        };
        let cfg = SolverConfig {
            max_iterations: s.max_iterations.unwrap_or(d.max_iterations),
            tolerance: s.tolerance.unwrap_or(d.tolerance),
            armijo_c: s.armijo_c.unwrap_or(d.armijo_c),
            armijo_shrink: s.armijo_shrink.unwrap_or(d.armijo_shrink),
            initial_step: s.initial_step.unwrap_or(d.initial_step),
            restart_profile,
            search_space,
            warm_start: s.warm_start.unwrap_or(d.warm_start),
            parallel: s.parallel.unwrap_or(d.parallel),
            support_tol: s.support_tol.or(d.support_tol),
            atom_ratio: s.atom_ratio.unwrap_or(d.atom_ratio),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn read_profile(path: &Path, p: &ProblemData) -> Result<peo_core::EffortProfile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    io::read_profile_csv(&text, p.period()).with_context(|| format!("parsing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"subcommand": "solve", "problem": "fig1", "eta_bar": 2}"#).unwrap();
        assert_eq!(c.grid_size, DEFAULT_GRID_SIZE);
        assert_eq!(c.output_dir, PathBuf::from("out"));
        c.validate().unwrap();
        let p = c.problem_at(None).unwrap();
        assert_eq!(p.eta_bar, 2.0);
        assert_eq!(c.solver_config(&p).unwrap(), SolverConfig::default());
    }

    #[test]
    fn inline_problem_and_settings() {
        let c: RunConfig = serde_json::from_str(
            r#"{"subcommand": "sweep", "eta_list": [0.5, 1.0],
                "problem": {"period": 1, "delta": 1, "c": [{"t": 0, "kind": "const", "coeffs": [1]}],
                            "w": [{"t": 0, "kind": "const", "coeffs": [1]}]},
                "solver": {"tolerance": 1e-9, "search_space": "increments", "warm_start": false}}"#,
        )
        .unwrap();
        c.validate().unwrap();
        let p = c.problem_at(Some(0.5)).unwrap();
        let cfg = c.solver_config(&p).unwrap();
        assert_eq!(cfg.tolerance, 1e-9);
        assert_eq!(cfg.search_space, SearchSpace::Increments);
        assert!(!cfg.warm_start);
    }

    #[test]
    fn invalid_combinations_are_rejected() {
        let parse = |s: &str| serde_json::from_str::<RunConfig>(s);
        assert!(parse(r#"{"subcommand": "solve", "problem": "fig1", "bogus": 1}"#).is_err());
        assert!(parse(r#"{"subcommand": "plot", "problem": "fig1"}"#).is_err());
        let both = parse(r#"{"subcommand": "solve", "problem": "fig1", "eta_bar": 1, "eta_list": [1]}"#).unwrap();
        assert!(both.validate().is_err());
        let neg = parse(r#"{"subcommand": "solve", "problem": "fig1", "eta_bar": -1}"#).unwrap();
        assert!(neg.validate().is_err());
        let no_list = parse(r#"{"subcommand": "sweep", "problem": "fig1"}"#).unwrap();
        assert!(no_list.validate().is_err());
        let no_profile = parse(r#"{"subcommand": "certify", "problem": "fig1", "eta_bar": 1}"#).unwrap();
        assert!(no_profile.validate().is_err());
        let bad_space = parse(r#"{"subcommand": "solve", "problem": "fig1", "eta_bar": 1, "solver": {"search_space": "x"}}"#).unwrap();
        let p = bad_space.problem_at(None).unwrap();
        assert!(bad_space.solver_config(&p).is_err());
    }
}
