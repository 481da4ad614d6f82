//! Execution of a validated [`RunConfig`].

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use peo_core::io::{self, AnalysisJson, SolveJson};
use peo_core::{assess, solve, sweep_eta, ProblemData, Sweep};
use serde::Serialize;

use crate::config::{read_profile, ProblemRef, RunConfig, Subcommand};

/// Outcome of a run that produced its artifacts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Converged,
    NotConverged,
}

impl Status {
    fn from_flags(all: impl IntoIterator<Item = bool>) -> Self {
        if all.into_iter().all(|c| c) {
            Status::Converged
        } else {
            Status::NotConverged
        }
    }
}

/// A named set of eta values for one preset.
pub struct Figure {
    pub name: &'static str,
    pub preset: &'static str,
    pub eta_bars: Vec<f64>,
    /// Write one per-node CSV per eta value.
    pub per_run_csv: bool,
}

pub const FIGURE_NAMES: [&str; 6] = ["fig1", "fig2", "fig2_5", "fig3", "fig4", "fig6"];

pub fn figure(name: &str) -> Result<Figure> {
    let (preset, eta_bars, per_run_csv) = match name {
        "fig1" => ("fig1", vec![2.0, 8.0, 20.0], true),
        "fig2" => ("fig2_sawtooth", vec![0.2, 0.6, 1.2, 6.0], true),
        "fig2_5" => {
            let (lo, hi, n) = (0.05f64, 10.0f64, 40);
            let etas = (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect();
            ("fig2_sawtooth", etas, false)
        }
        "fig3" => ("fig3_rising_sawtooth", vec![1.0, 4.0, 10.0], true),
        "fig4" => ("fig4_square", vec![0.2, 2.0, 10.0], true),
        "fig6" => ("fig6_tent", vec![0.5, 3.0, 10.0], true),
        other => bail!("unknown figure `{other}`; expected one of {}", FIGURE_NAMES.join(", ")),
    };
    let name = FIGURE_NAMES.iter().find(|n| **n == name).unwrap();
    Ok(Figure { name, preset, eta_bars, per_run_csv })
}

fn write(dir: &Path, file: &str, contents: &str) -> Result<()> {
    let path = dir.join(file);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
#[serde(untagged)]
enum SweepItem {
    Ok(Box<SolveJson>),
    Err { eta_bar: f64, error: String },
}

#[derive(Serialize)]
struct SweepJson {
    eta_bar: Vec<f64>,
    /// Between consecutive points; `null` where a point failed.
    dominance_violations: Vec<Option<f64>>,
    reports: Vec<SweepItem>,
}

impl SweepJson {
    fn new(base: &ProblemData, sweep: &Sweep) -> Result<Self> {
        let reports = sweep
            .eta_bar
            .iter()
            .zip(&sweep.reports)
            .map(|(&eta, r)| match r {
                Ok(r) => Ok(SweepItem::Ok(Box::new(SolveJson::new(&base.with_eta_bar(eta)?, r)))),
                Err(e) => Ok(SweepItem::Err { eta_bar: eta, error: e.to_string() }),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { eta_bar: sweep.eta_bar.clone(), dominance_violations: sweep.dominance_violations.clone(), reports })
    }
}

#[derive(Serialize)]
struct FigureJson {
    figure: String,
    preset: String,
    grid_size: usize,
    analysis: AnalysisJson,
    sweep: SweepJson,
}

fn sweep_status(sweep: &Sweep) -> Status {
    Status::from_flags(sweep.reports.iter().map(|r| r.as_ref().is_ok_and(|r| r.converged)))
}

pub fn execute(cfg: &RunConfig) -> Result<Status> {
    cfg.validate()?;
    let dir = cfg.resolved_output_dir();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    match cfg.subcommand {
        Subcommand::Solve => {
            let p = cfg.problem_at(None)?;
            let g = cfg.grid(&p)?;
            let r = solve(&p, &g, &cfg.solver_config(&p)?)?;
            write(&dir, "run.csv", &io::run_csv(&r)?)?;
            write(&dir, "report.json", &io::to_json(&SolveJson::new(&p, &r))?)?;
            Ok(Status::from_flags([r.converged]))
        }
        Subcommand::Certify => {
            let p = cfg.problem_at(None)?;
            let profile = read_profile(cfg.profile.as_ref().unwrap(), &p)?;
            let r = assess(&p, &profile, &cfg.solver_config(&p)?)?;
            write(&dir, "run.csv", &io::run_csv(&r)?)?;
            write(&dir, "report.json", &io::to_json(&SolveJson::new(&p, &r))?)?;
            Ok(Status::Converged)
        }
        Subcommand::Analyze => {
            let p = cfg.problem_at(Some(cfg.eta_bar.unwrap_or(1.0)))?;
            let g = cfg.grid(&p)?;
            write(&dir, "report.json", &io::to_json(&AnalysisJson::new(&p, &g))?)?;
            Ok(Status::Converged)
        }
        Subcommand::Sweep => {
            let etas = cfg.eta_list.clone().unwrap();
            let p = cfg.problem_at(Some(etas[0]))?;
            let g = cfg.grid(&p)?;
            let sweep = sweep_eta(&p, &g, &etas, &cfg.solver_config(&p)?)?;
            write(&dir, "sweep.csv", &io::sweep_csv(&p, &sweep)?)?;
            write(&dir, "report.json", &io::to_json(&SweepJson::new(&p, &sweep)?)?)?;
            Ok(sweep_status(&sweep))
        }
        Subcommand::ReproduceFigure => {
            let fig = figure(cfg.figure.as_deref().unwrap())?;
            let mut inner = cfg.clone();
            inner.problem = Some(ProblemRef::Preset(fig.preset.into()));
            let p = inner.problem_at(Some(fig.eta_bars[0]))?;
            let g = inner.grid(&p)?;
            let sweep = sweep_eta(&p, &g, &fig.eta_bars, &inner.solver_config(&p)?)?;
            if fig.per_run_csv {
                for (eta, r) in fig.eta_bars.iter().zip(&sweep.reports) {
                    if let Ok(r) = r {
                        write(&dir, &format!("run_eta_{eta}.csv"), &io::run_csv(r)?)?;
                    }
                }
            }
            write(&dir, "sweep.csv", &io::sweep_csv(&p, &sweep)?)?;
            let report = FigureJson {
                figure: fig.name.into(),
                preset: fig.preset.into(),
                grid_size: cfg.grid_size,
                analysis: AnalysisJson::new(&p, &g),
                sweep: SweepJson::new(&p, &sweep)?,
            };
            write(&dir, "report.json", &io::to_json(&report)?)?;
            Ok(sweep_status(&sweep))
        }
    }
}
