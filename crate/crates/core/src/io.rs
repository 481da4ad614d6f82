//! CSV and JSON artifacts. Numbers are written in shortest round-trip
//! decimal form, CSV uses LF line endings and a fixed header, so identical
//! inputs give byte-identical files.

use serde::Serialize;

use crate::analytic::{
    classify_discontinuities, closed_form_solution, concentration_function, eta_bar_threshold, pure_atom_threshold,
    DiscontinuityReport,
};
use crate::error::{Error, Result};
use crate::firstorder::fixed_point_residual;
use crate::measure::EffortProfile;
use crate::profiles::{Grid, ProblemData};
use crate::solver::{SolveReport, Sweep};

pub const RUN_CSV_HEADER: [&str; 6] = ["t", "alpha", "eta", "S", "psi", "h"];

/// Shortest round-trip decimal, in exponent form outside `[1e-5, 1e16)`.
fn fmt(x: f64) -> String {
    let a = x.abs();
    if x.is_nan() {
        "NaN".into()
    } else if a == 0.0 || a.is_infinite() || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn write_csv(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ascii"))
}

/// Per-node table of a solve: `t, alpha, eta, S, psi, h`.
pub fn run_csv(report: &SolveReport<f64>) -> Result<String> {
    let c = &report.certificate;
    let eta = report.profile.node_densities();
    let header: Vec<String> = RUN_CSV_HEADER.iter().map(|s| s.to_string()).collect();
    let rows = (0..c.times.len()).map(|k| {
        vec![fmt(c.times[k]), fmt(report.profile.alpha()[k]), fmt(eta[k]), fmt(c.state[k]), fmt(c.psi[k]), fmt(c.h[k])]
    });
    write_csv(&header, rows)
}

/// Reads a profile from CSV with columns `t` and `alpha` (others ignored).
/// A repeated time marks a jump; the grid is rebuilt from the listed times.
pub fn read_profile_csv(text: &str, period: f64) -> Result<EffortProfile<f64>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Csv(format!("missing column `{name}`")))
    };
    let (it, ia) = (col("t")?, col("alpha")?);
    let mut times = Vec::new();
    let mut alpha = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Csv(format!("row {}: not a number in column {}", line + 2, i + 1)))
        };
        times.push(num(it)?);
        alpha.push(num(ia)?);
    }
    EffortProfile::new(Grid::from_times(period, times)?, alpha)
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct AtomJson {
    pub t: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SupportJson {
    pub intervals: Vec<[f64; 2]>,
    pub atoms: Vec<f64>,
    pub measure: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CertificateJson {
    pub psi_max: f64,
    pub certificate_residual: f64,
    pub atom_sign_violation: f64,
    pub identity_residual: f64,
    pub fixed_point_residual: f64,
    pub support_tol: f64,
}

/// Contents of `report.json` for a solve or a certificate check.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SolveJson {
    pub eta_bar: f64,
    pub grid_nodes: usize,
    pub phi: f64,
    pub phi_discrete: f64,
    pub lambda: f64,
    pub lambda_spread: f64,
    pub eta_bar_m: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_map_norm: f64,
    pub certificate: CertificateJson,
    pub support: SupportJson,
    pub atoms: Vec<AtomJson>,
}

impl SolveJson {
    pub fn new(p: &ProblemData<f64>, r: &SolveReport<f64>) -> Self {
        let c = &r.certificate;
        Self {
            eta_bar: r.eta_bar,
            grid_nodes: r.profile.grid().len(),
            phi: r.phi,
            phi_discrete: r.phi_discrete,
            lambda: r.lambda_estimate,
            lambda_spread: r.lambda_spread,
            eta_bar_m: eta_bar_threshold(p),
            iterations: r.iterations,
            converged: r.converged,
            gradient_map_norm: r.gradient_map_norm,
            certificate: CertificateJson {
                psi_max: c.psi_max,
                certificate_residual: c.certificate_residual,
                atom_sign_violation: c.atom_sign_violation,
                identity_residual: c.identity_residual,
                fixed_point_residual: fixed_point_residual(p, &r.profile, Some(c.support_tol)).unwrap_or(f64::NAN),
                support_tol: c.support_tol,
            },
            support: SupportJson {
                intervals: r.support.intervals.iter().map(|&(a, b)| [a, b]).collect(),
                atoms: r.support.atoms.clone(),
                measure: r.support.measure(),
            },
            atoms: r.atoms.iter().map(|a| AtomJson { t: a.time, mass: a.mass }).collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct JumpAtomJson {
    pub t: f64,
    pub mass: f64,
    pub s_ratio: f64,
}

/// Contents of `report.json` for `analyze`. `phi_min` is present only when
/// the closed form applies; `pure_atom_threshold` only for a single
/// downward jump under its hypotheses.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct AnalysisJson {
    pub eta_bar_m: f64,
    pub phi_min: Option<f64>,
    pub t_max: f64,
    pub d_plus: Vec<f64>,
    pub d_minus: Vec<JumpAtomJson>,
    pub pure_atom_threshold: Option<f64>,
}

impl AnalysisJson {
    pub fn new(p: &ProblemData<f64>, grid: &Grid<f64>) -> Self {
        let DiscontinuityReport { d_plus, d_minus } = classify_discontinuities(p);
        let threshold = match d_minus.as_slice() {
            [single] => pure_atom_threshold(p, single.t).ok(),
            _ => None,
        };
        Self {
            eta_bar_m: eta_bar_threshold(p),
            phi_min: closed_form_solution(p, grid).ok().map(|s| s.phi_min),
            t_max: concentration_function(p, grid).t_max,
            d_plus,
            d_minus: d_minus.iter().map(|j| JumpAtomJson { t: j.t, mass: j.mass, s_ratio: j.s_ratio }).collect(),
            pure_atom_threshold: threshold,
        }
    }
}

/// Pretty JSON with a trailing newline; non-finite numbers become `null`.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// Total mass of the detected atoms within `radius` of `t`.
fn atom_mass_near(r: &SolveReport<f64>, t: f64, radius: f64) -> f64 {
    r.atoms.iter().filter(|a| (a.time - t).abs() <= radius).fold(0.0, |acc, a| acc + a.mass)
}

/// One row per sweep point: `eta_bar, phi, support_measure, converged`, then
/// the atom mass found at each downward jump of the data. Failed points
/// carry `NaN`.
pub fn sweep_csv(p: &ProblemData<f64>, sweep: &Sweep<f64>) -> Result<String> {
    let jumps: Vec<f64> = classify_discontinuities(p).d_minus.iter().map(|j| j.t).collect();
    let mut header: Vec<String> = ["eta_bar", "phi", "support_measure", "converged"].iter().map(|s| s.to_string()).collect();
    header.extend(jumps.iter().map(|t| format!("atom_mass_at_{}", fmt(*t))));
    let rows = sweep.eta_bar.iter().zip(&sweep.reports).map(|(&eta, r)| {
        let mut row = vec![fmt(eta)];
        match r {
            Ok(r) => {
                let radius = 2.0 * r.profile.grid().max_spacing();
                row.push(fmt(r.phi));
                row.push(fmt(r.support.measure()));
                row.push(r.converged.to_string());
                row.extend(jumps.iter().map(|&t| fmt(atom_mass_near(r, t, radius))));
            }
            Err(_) => {
                row.extend(["NaN", "NaN", "false"].iter().map(|s| s.to_string()));
                row.extend(jumps.iter().map(|_| "NaN".to_string()));
            }
        }
        row
    });
    write_csv(&header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::preset;
    use crate::solver::{solve, SolverConfig};

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0, 1e-5, 9.999e-6] {
            assert_eq!(fmt(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt(0.5), "0.5");
        assert_eq!(fmt(-1.5e-12), "-1.5e-12");
        assert_eq!(fmt(2e20), "2e20");
    }

    #[test]
    fn run_csv_round_trips_through_reader() {
        let p = preset::<f64>("fig2_sawtooth", 2.0).unwrap();
        let g = Grid::build(&p, 32, &[]).unwrap();
        let r = solve(&p, &g, &SolverConfig::default()).unwrap();
        let text = run_csv(&r).unwrap();
        assert!(text.starts_with("t,alpha,eta,S,psi,h\n"));
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().count(), g.len() + 1);
        let back = read_profile_csv(&text, 1.0).unwrap();
        assert_eq!(back.alpha(), r.profile.alpha());
        assert_eq!(back.grid(), &g);
    }

    #[test]
    fn reader_rejects_bad_input() {
        assert!(matches!(read_profile_csv("t,beta\n0,0\n", 1.0), Err(Error::Csv(_))));
        assert!(matches!(read_profile_csv("t,alpha\n0,0\n0.5,x\n1,1\n", 1.0), Err(Error::Csv(_))));
        assert!(read_profile_csv("t,alpha\n0,0\n0.5,0.7\n1,0.6\n", 1.0).is_err());
    }

    #[test]
    fn analysis_json_for_sawtooth() {
        let p = preset::<f64>("fig2_sawtooth", 1.0).unwrap();
        let g = Grid::build(&p, 200, &[]).unwrap();
        let a = AnalysisJson::new(&p, &g);
        assert!(a.eta_bar_m.is_infinite() || a.d_plus.is_empty());
        assert_eq!(a.d_minus.len(), 1);
        assert!((a.d_minus[0].mass - 0.5 * 3f64.ln()).abs() < 1e-12);
        assert!(a.phi_min.is_none());
        let text = to_json(&a).unwrap();
        assert!(text.contains("\"pure_atom_threshold\""));
    }
}
