//! `peo`: solve, analyze, certify and sweep periodic effort problems.
//!
//! Exit status is 0 when every solve converged, 2 when artifacts were
//! written but some solve did not converge, and 1 on configuration or
//! input errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};

use commands::{execute, Status};
use config::{ProblemRef, RunConfig, SolverSettings, Subcommand, DEFAULT_GRID_SIZE};

#[derive(Parser)]
#[command(name = "peo", version, about = "Optimal periodic effort profiles")]
enum Cli {
    /// Minimize the cost and write run.csv and report.json.
    Solve(Common),
    /// Thresholds, concentration point and jump classification (report.json).
    Analyze(Common),
    /// Evaluate the optimality certificate of a given profile.
    Certify {
        #[command(flatten)]
        common: Common,
        /// CSV with columns `t` and `alpha`.
        #[arg(long)]
        profile: PathBuf,
    },
    /// Solve along an increasing list of eta_bar values (sweep.csv).
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated, strictly increasing.
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        eta_list: Vec<f64>,
    },
    /// Regenerate the data behind one figure.
    ReproduceFigure {
        /// fig1, fig2, fig2_5, fig3, fig4 or fig6.
        #[arg(long)]
        figure: String,
        #[arg(long = "K", default_value_t = DEFAULT_GRID_SIZE)]
        k: usize,
        #[arg(long, default_value = "out")]
        output_dir: PathBuf,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        max_iterations: Option<usize>,
    },
    /// Execute a JSON run configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Built-in problem: fig1, fig2_sawtooth, fig3_rising_sawtooth, fig4_square, fig6_tent.
    #[arg(long, conflicts_with = "problem", required_unless_present = "problem")]
    preset: Option<String>,
    /// JSON problem description.
    #[arg(long)]
    problem: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    eta_bar: Option<f64>,
    /// Number of base grid intervals.
    #[arg(long = "K", default_value_t = DEFAULT_GRID_SIZE)]
    k: usize,
    /// Overridden by the PEO_OUTPUT_DIR environment variable.
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
}

impl Common {
    fn into_config(self, subcommand: Subcommand) -> anyhow::Result<RunConfig> {
        let problem = match (self.preset, self.problem) {
            (Some(name), _) => ProblemRef::Preset(name),
            (None, Some(path)) => {
                let text = std::fs::read_to_string(&path)?;
                ProblemRef::Spec(peo_core::profiles::ProblemSpec::from_json(&text)?)
            }
            (None, None) => anyhow::bail!("give --preset or --problem"),
        };
        Ok(RunConfig {
            problem: Some(problem),
            grid_size: self.k,
            eta_bar: self.eta_bar,
            output_dir: self.output_dir,
            solver: SolverSettings { tolerance: self.tolerance, max_iterations: self.max_iterations, ..Default::default() },
            ..RunConfig::new(subcommand)
        })
    }
}

fn config_from(cli: Cli) -> anyhow::Result<RunConfig> {
    Ok(match cli {
        Cli::Solve(c) => c.into_config(Subcommand::Solve)?,
        Cli::Analyze(c) => c.into_config(Subcommand::Analyze)?,
        Cli::Certify { common, profile } => RunConfig { profile: Some(profile), ..common.into_config(Subcommand::Certify)? },
        Cli::Sweep { common, eta_list } => RunConfig { eta_list: Some(eta_list), ..common.into_config(Subcommand::Sweep)? },
        Cli::ReproduceFigure { figure, k, output_dir, tolerance, max_iterations } => RunConfig {
            figure: Some(figure),
            grid_size: k,
            output_dir,
            solver: SolverSettings { tolerance, max_iterations, ..Default::default() },
            ..RunConfig::new(Subcommand::ReproduceFigure)
        },
        Cli::Run { config } => RunConfig::from_file(&config)?,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = config_from(cli).and_then(|cfg| execute(&cfg).map(|s| (s, cfg)));
    match outcome {
        Ok((status, cfg)) => {
            let dir = cfg.resolved_output_dir();
            match status {
                Status::Converged => {
                    eprintln!("wrote results to {}", dir.display());
                    ExitCode::SUCCESS
                }
                Status::NotConverged => {
                    eprintln!("wrote results to {}; some solves did not converge", dir.display());
                    ExitCode::from(2)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
