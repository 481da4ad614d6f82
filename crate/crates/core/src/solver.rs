//! Projected-gradient minimization of the discrete cost over profiles of
//! fixed mass, with Barzilai-Borwein steps and an Armijo safeguard, and
//! sweeps over the mean effort.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::firstorder::{certificate, FirstOrderDiagnostics, Parts};
use crate::forward::{cost_continuous, Kernel, Samples};
use crate::measure::{default_support_tol, detect_atoms, support, Atom, EffortProfile, SupportSet, DEFAULT_ATOM_RATIO};
use crate::profiles::{Grid, ProblemData};
use crate::scalar::Scalar;

/// Euclidean projection of `d` onto `{x >= 0, sum x = mass}` by sorting and
/// thresholding. The result is rescaled so its sum is `mass` to rounding.
pub fn project_simplex<S: Scalar>(d: &[S], mass: S) -> Vec<S> {
    let mut u = d.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut acc = S::zero();
    let mut theta = S::zero();
    for (j, &v) in u.iter().enumerate() {
        acc = acc + v;
        let t = (acc - mass) / S::from_usize(j + 1);
        if v - t > S::zero() {
            theta = t;
        }
    }
    let mut out: Vec<S> = d.iter().map(|&v| (v - theta).max(S::zero())).collect();
    let total: S = out.iter().copied().sum();
    if total > S::zero() {
        let f = mass / total;
        for v in &mut out {
            *v = *v * f;
        }
    }
    out
}

/// Weighted least-squares projection of `y` onto non-decreasing sequences
/// with values in `[lo, hi]` (pool adjacent violators, then clamp).
pub fn project_monotone<S: Scalar>(y: &[S], weights: &[S], lo: S, hi: S) -> Vec<S> {
    let mut blocks: Vec<(S, S, usize)> = Vec::with_capacity(y.len());
    for (&v, &w) in y.iter().zip(weights) {
        let mut cur = (v, w, 1usize);
        while let Some(&(pv, pw, pn)) = blocks.last() {
            if pv <= cur.0 {
                break;
            }
            blocks.pop();
            let tw = pw + cur.1;
            cur = ((pv * pw + cur.0 * cur.1) / tw, tw, pn + cur.2);
        }
        blocks.push(cur);
    }
    let mut out = Vec::with_capacity(y.len());
    for (v, _, n) in blocks {
        let v = v.max(lo).min(hi);
        out.extend(std::iter::repeat_n(v, n));
    }
    out
}

/// Weighted least-squares projection of `y` onto
/// `{y_0 <= y_1 <= ... <= y_{n-1} <= y_0 + mass}`.
///
/// For a fixed `y_0 = s` the answer is the isotonic regression of the tail
/// clamped to `[s, s + mass]`; the optimal `s` is the root of a monotone
/// piecewise-linear equation, found exactly from prefix sums.
pub fn project_circular<S: Scalar>(y: &[S], weights: &[S], mass: S) -> Vec<S> {
    let n = y.len();
    if n == 1 {
        return y.to_vec();
    }
    let z = project_monotone(&y[1..], &weights[1..], S::neg_infinity(), S::infinity());
    let mut cw = vec![S::zero(); n];
    let mut cwy = vec![S::zero(); n];
    for k in 1..n {
        cw[k] = cw[k - 1] + weights[k];
        cwy[k] = cwy[k - 1] + weights[k] * y[k];
    }
    let (w0, y0) = (weights[0], y[0]);
    // active sets at s: tail entries z_k < s sit at s, entries z_k > s + mass at s + mass
    let active = |s: S| (z.partition_point(|&v| v < s), z.partition_point(|&v| v <= s + mass));
    let linear = |(lo, hi): (usize, usize)| {
        let a = w0 + cw[lo] + (cw[n - 1] - cw[hi]);
        let b = -w0 * y0 - cwy[lo] + (cw[n - 1] - cw[hi]) * mass - (cwy[n - 1] - cwy[hi]);
        (a, b)
    };
    let ymin = y.iter().copied().fold(S::infinity(), S::min);
    let ymax = y.iter().copied().fold(S::neg_infinity(), S::max);
    let mut lo = ymin - mass - S::one();
    let mut hi = ymax + S::one();
    let mut s = (lo + hi) / S::of(2.0);
    for _ in 0..200 {
        let (alo, ahi) = (active(lo), active(hi));
        if alo == ahi {
            let (a, b) = linear(alo);
            s = (-b / a).max(lo).min(hi);
            break;
        }
        let mid = (lo + hi) / S::of(2.0);
        if mid <= lo || mid >= hi {
            s = mid;
            break;
        }
        let (a, b) = linear(active(mid));
        if a * mid + b < S::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
        s = mid;
    }
    let mut out = Vec::with_capacity(n);
    out.push(s);
    out.extend(z.iter().map(|&v| v.max(s).min(s + mass)));
    out
}

/// Coordinates the projected gradient works in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SearchSpace {
    /// Node values `alpha_0..alpha_{K-1}` with `alpha_K = alpha_0 + mass`, in
    /// the trapezoid-weighted metric, projected by [`project_circular`]. The
    /// cost is invariant under a common shift of all node values, so leaving
    /// `alpha_0` free makes `t = 0` an ordinary point of the circle and the
    /// conditioning does not degrade with `K`.
    #[default]
    Cumulative,
    /// Gap increments in the Euclidean metric, projected onto the simplex.
    Increments,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig<S> {
    pub max_iterations: usize,
    /// Bound on the gradient-mapping norm; `tolerance^2` bounds the relative
    /// cost decrease over the last 10 iterations.
    pub tolerance: S,
    pub armijo_c: S,
    pub armijo_shrink: S,
    /// Size of the first trial step, as the largest change of `alpha` it may
    /// cause relative to `eta_bar T`.
    pub initial_step: S,
    pub restart_profile: Option<EffortProfile<S>>,
    pub search_space: SearchSpace,
    /// Warm-start each sweep point from the previous solution.
    pub warm_start: bool,
    /// Run independent sweep points in parallel (only without warm starts).
    pub parallel: bool,
    /// Density threshold for the support; `None` uses `1e-4 eta_bar`.
    pub support_tol: Option<S>,
    pub atom_ratio: S,
}

impl<S: Scalar> Default for SolverConfig<S> {
    fn default() -> Self {
        Self {
            max_iterations: 50_000,
            tolerance: S::of(1e-8),
            armijo_c: S::of(1e-4),
            armijo_shrink: S::of(0.5),
            initial_step: S::of(0.1),
            restart_profile: None,
            search_space: SearchSpace::Cumulative,
            warm_start: true,
            parallel: false,
            support_tol: None,
            atom_ratio: S::of(DEFAULT_ATOM_RATIO),
        }
    }
}

impl<S: Scalar> SolverConfig<S> {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |x: S| x > S::zero() && x < S::one();
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be positive".into()));
        }
        if !(self.tolerance > S::zero()) || !(self.initial_step > S::zero()) {
            return Err(Error::InvalidConfig("tolerance and initial_step must be positive".into()));
        }
        if !open_unit(self.armijo_c) || !open_unit(self.armijo_shrink) {
            return Err(Error::InvalidConfig("armijo_c and armijo_shrink must lie in (0, 1)".into()));
        }
        if !(self.atom_ratio > S::one()) {
            return Err(Error::InvalidConfig("atom_ratio must exceed 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport<S> {
    pub eta_bar: S,
    pub profile: EffortProfile<S>,
    /// Cost of the returned profile, see [`cost_continuous`].
    pub phi: S,
    /// Value of the discrete objective that was minimized.
    pub phi_discrete: S,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_map_norm: S,
    pub certificate: FirstOrderDiagnostics<S>,
    pub support: SupportSet<S>,
    pub atoms: Vec<Atom<S>>,
    /// Mean of `S sqrt(w / c)` over nodes inside the support.
    pub lambda_estimate: S,
    /// Relative standard deviation of the same quantity.
    pub lambda_spread: S,
    /// Discrete objective after every accepted iterate, starting with the
    /// initial profile.
    pub phi_trace: Vec<S>,
}

struct Evaluation<S> {
    phi: S,
    /// Gradient in the working coordinates.
    grad: Vec<S>,
    /// Preconditioned descent direction.
    dir: Vec<S>,
}

struct Problem<S> {
    samples: Samples<S>,
    mass: S,
    space: SearchSpace,
    /// Metric weights of the working coordinates.
    metric: Vec<S>,
}

impl<S: Scalar> Problem<S> {
    fn alpha_of(&self, x: &[S]) -> Vec<S> {
        match self.space {
            SearchSpace::Cumulative => {
                let base = x[0];
                let mut alpha: Vec<S> = x.iter().map(|&v| (v - base).max(S::zero()).min(self.mass)).collect();
                alpha.push(self.mass);
                alpha
            }
            SearchSpace::Increments => {
                let mut alpha = Vec::with_capacity(x.len() + 1);
                let mut acc = S::zero();
                alpha.push(acc);
                for &d in x {
                    acc = acc + d;
                    alpha.push(acc);
                }
                let last = alpha.len() - 1;
                alpha[last] = self.mass;
                alpha
            }
        }
    }

    fn coords_of(&self, alpha: &[S]) -> Vec<S> {
        match self.space {
            SearchSpace::Cumulative => alpha[..alpha.len() - 1].to_vec(),
            SearchSpace::Increments => alpha.windows(2).map(|w| w[1] - w[0]).collect(),
        }
    }

    fn project(&self, y: &[S]) -> Vec<S> {
        match self.space {
            SearchSpace::Cumulative => project_circular(y, &self.metric, self.mass),
            SearchSpace::Increments => project_simplex(y, self.mass),
        }
    }

    fn cost(&self, x: &[S]) -> S {
        Kernel::from_samples(&self.samples, &self.alpha_of(x)).cost()
    }

    fn evaluate(&self, x: &[S]) -> Evaluation<S> {
        let parts = Parts::from_kernel(Kernel::from_samples(&self.samples, &self.alpha_of(x)));
        let phi = parts.kernel.cost();
        let n = parts.h.len();
        match self.space {
            SearchSpace::Cumulative => {
                let dir = parts.h[..n - 1].to_vec();
                let grad: Vec<S> = dir.iter().zip(&self.metric).map(|(&h, &w)| -h * w).collect();
                Evaluation { phi, grad, dir }
            }
            SearchSpace::Increments => {
                // suffix sums of -h omega
                let mut grad = vec![S::zero(); n - 1];
                let mut acc = S::zero();
                for j in (0..n - 1).rev() {
                    acc = acc - parts.h[j + 1] * parts.kernel.omega[j + 1];
                    grad[j] = acc;
                }
                let dir = grad.iter().map(|&g| -g).collect();
                Evaluation { phi, grad, dir }
            }
        }
    }

    fn metric_norm(&self, v: &[S]) -> S {
        v.iter().zip(&self.metric).map(|(&x, &w)| w * x * x).sum::<S>().sqrt()
    }

    /// `x - P(x + dir)`, the projected-gradient mapping at unit step.
    fn gradient_map_norm(&self, x: &[S], dir: &[S]) -> S {
        let y: Vec<S> = x.iter().zip(dir).map(|(&a, &b)| a + b).collect();
        let p = self.project(&y);
        let diff: Vec<S> = x.iter().zip(&p).map(|(&a, &b)| a - b).collect();
        self.metric_norm(&diff)
    }
}

fn lambda_stats<S: Scalar>(k: &FirstOrderDiagnostics<S>, problem: &ProblemData<S>, grid: &Grid<S>) -> (S, S) {
    let n = grid.len();
    let finite = |j: usize| grid.gap_width(j) > S::zero();
    let mut values = Vec::new();
    for i in 1..n - 1 {
        if grid.is_paired(i) || !finite(i - 1) || !finite(i) || !k.support[i - 1] || !k.support[i] {
            continue;
        }
        let side = grid.side(i);
        let t = grid.times()[i];
        let ratio = problem.w.eval(t, side) / problem.c.eval(t, side);
        values.push(k.state[i] * ratio.sqrt());
    }
    if values.is_empty() {
        return (S::nan(), S::nan());
    }
    let count = S::from_usize(values.len());
    let mean = values.iter().copied().sum::<S>() / count;
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / count;
    (mean, var.sqrt() / mean)
}

impl<S: Scalar> Problem<S> {
    fn build(p: &ProblemData<S>, grid: &Grid<S>, space: SearchSpace) -> Result<Self> {
        let samples = Samples::new(p, grid)?;
        let metric = match space {
            SearchSpace::Cumulative => {
                let n = samples.omega.len();
                let mut m = samples.omega[..n - 1].to_vec();
                m[0] = m[0] + samples.omega[n - 1];
                m
            }
            SearchSpace::Increments => vec![S::one(); grid.gaps()],
        };
        Ok(Self { samples, mass: p.mass(), space, metric })
    }
}

/// Report on a given profile without iterating: cost, certificate, support
/// and the gradient-mapping norm, with `converged` set when that norm is
/// below the tolerance.
pub fn assess<S: Scalar>(p: &ProblemData<S>, profile: &EffortProfile<S>, cfg: &SolverConfig<S>) -> Result<SolveReport<S>> {
    cfg.validate()?;
    let grid = profile.grid();
    let prob = Problem::build(p, grid, cfg.search_space)?;
    profile.check_mass(prob.mass, S::of(1e-9))?;
    let x = prob.coords_of(profile.alpha());
    let ev = prob.evaluate(&x);
    let gm = prob.gradient_map_norm(&x, &ev.dir);
    finish(p, grid, cfg, profile.clone(), 0, gm < cfg.tolerance, gm, vec![ev.phi])
}

/// Minimizes the discrete cost on `grid`.
pub fn solve<S: Scalar>(p: &ProblemData<S>, grid: &Grid<S>, cfg: &SolverConfig<S>) -> Result<SolveReport<S>> {
    cfg.validate()?;
    let prob = Problem::build(p, grid, cfg.search_space)?;
    let mass = prob.mass;

    let start = match &cfg.restart_profile {
        Some(r) => {
            if r.grid() != grid {
                return Err(Error::GridMismatch);
            }
            r.check_mass(mass, S::of(1e-9))?;
            r.alpha().to_vec()
        }
        None => EffortProfile::uniform(grid.clone(), mass).alpha().to_vec(),
    };
    let mut x = prob.project(&prob.coords_of(&start));
    let mut ev = prob.evaluate(&x);
    let mut trace = vec![ev.phi];
    let dir_max = ev.dir.iter().fold(S::zero(), |m, v| m.max(v.abs()));
    let mut step = if dir_max > S::zero() { cfg.initial_step * mass / dir_max } else { S::one() };
    let step_floor = S::min_positive_value().sqrt();
    let mut converged = false;
    let mut gm = prob.gradient_map_norm(&x, &ev.dir);
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        if gm < cfg.tolerance {
            converged = true;
            break;
        }
        let n_tr = trace.len();
        if n_tr > 10 {
            let old = trace[n_tr - 11];
            if (old - ev.phi) <= cfg.tolerance * cfg.tolerance * ev.phi.abs() {
                converged = true;
                break;
            }
        }
        iterations += 1;

        let mut accepted = None;
        let mut s = step;
        while s > step_floor {
            let y: Vec<S> = x.iter().zip(&ev.dir).map(|(&a, &b)| a + s * b).collect();
            let trial = prob.project(&y);
            let pred: S = trial.iter().zip(&x).zip(&ev.grad).map(|((&t, &a), &g)| g * (t - a)).sum();
            if !(pred < S::zero()) {
                break;
            }
            let phi_t = prob.cost(&trial);
            if phi_t <= ev.phi + cfg.armijo_c * pred {
                accepted = Some(trial);
                break;
            }
            s = s * cfg.armijo_shrink;
        }
        let Some(trial) = accepted else {
            // no descent possible at representable step sizes
            converged = gm < cfg.tolerance.sqrt();
            break;
        };

        let next = prob.evaluate(&trial);
        let dx: Vec<S> = trial.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let sy: S = dx.iter().zip(next.grad.iter().zip(&ev.grad)).map(|(&d, (&g1, &g0))| d * (g1 - g0)).sum();
        let ss: S = dx.iter().zip(&prob.metric).map(|(&d, &w)| w * d * d).sum();
        step = if sy > S::zero() { ss / sy } else { s / cfg.armijo_shrink };
        x = trial;
        ev = next;
        trace.push(ev.phi);
        gm = prob.gradient_map_norm(&x, &ev.dir);
    }

    let profile = EffortProfile::new(grid.clone(), prob.alpha_of(&x))?;
    finish(p, grid, cfg, profile, iterations, converged, gm, trace)
}

#[allow(clippy::too_many_arguments)]
fn finish<S: Scalar>(
    p: &ProblemData<S>,
    grid: &Grid<S>,
    cfg: &SolverConfig<S>,
    profile: EffortProfile<S>,
    iterations: usize,
    converged: bool,
    gradient_map_norm: S,
    phi_trace: Vec<S>,
) -> Result<SolveReport<S>> {
    let tol = cfg.support_tol.unwrap_or_else(|| default_support_tol(&profile));
    let cert = certificate(p, &profile, Some(tol))?;
    let supp = support(&profile, tol);
    let atoms = detect_atoms(&profile, cfg.atom_ratio);
    let (lambda_estimate, lambda_spread) = lambda_stats(&cert, p, grid);
    let phi_discrete = *phi_trace.last().unwrap();
    let phi = cost_continuous(p, &profile)?;
    Ok(SolveReport {
        eta_bar: p.eta_bar,
        profile,
        phi,
        phi_discrete,
        iterations,
        converged,
        gradient_map_norm,
        certificate: cert,
        support: supp,
        atoms,
        lambda_estimate,
        lambda_spread,
        phi_trace,
    })
}

/// Results of a sweep over increasing `eta_bar`.
#[derive(Debug)]
pub struct Sweep<S> {
    pub eta_bar: Vec<S>,
    pub reports: Vec<Result<SolveReport<S>>>,
    /// For consecutive points `eta_1 < eta_2`, the largest
    /// `[alpha_1(t) - alpha_1(s)] - [alpha_2(t) - alpha_2(s)]` over node
    /// pairs `s < t`; positive values mean the larger budget fails to
    /// dominate the smaller one somewhere. Diagnostic only.
    pub dominance_violations: Vec<Option<S>>,
}

/// Largest rise of `alpha_1 - alpha_2` over node pairs `s < t`.
pub fn dominance_violation<S: Scalar>(a1: &EffortProfile<S>, a2: &EffortProfile<S>) -> Result<S> {
    if a1.grid() != a2.grid() {
        return Err(Error::GridMismatch);
    }
    let mut lowest = S::infinity();
    let mut worst = S::neg_infinity();
    for (&x, &y) in a1.alpha().iter().zip(a2.alpha()) {
        let d = x - y;
        worst = worst.max(d - lowest);
        lowest = lowest.min(d);
    }
    Ok(worst)
}

/// Solves for each `eta_bar` in the increasing list `eta_list`.
pub fn sweep_eta<S: Scalar>(p: &ProblemData<S>, grid: &Grid<S>, eta_list: &[S], cfg: &SolverConfig<S>) -> Result<Sweep<S>> {
    cfg.validate()?;
    if eta_list.is_empty() {
        return Err(Error::InvalidConfig("eta_list is empty".into()));
    }
    if eta_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidConfig("eta_list must be strictly increasing".into()));
    }
    let problems: Vec<Result<ProblemData<S>>> = eta_list.iter().map(|&e| p.with_eta_bar(e)).collect();
    let reports: Vec<Result<SolveReport<S>>> = if cfg.warm_start {
        let mut out: Vec<Result<SolveReport<S>>> = Vec::with_capacity(eta_list.len());
        let mut previous: Option<EffortProfile<S>> = cfg.restart_profile.clone();
        for pb in problems {
            let r = pb.and_then(|pb| {
                let mut c = cfg.clone();
                c.restart_profile = match &previous {
                    Some(prev) => Some(prev.rescaled(pb.mass())?),
                    None => None,
                };
                solve(&pb, grid, &c)
            });
            if let Ok(rep) = &r {
                previous = Some(rep.profile.clone());
            }
            out.push(r);
        }
        out
    } else {
        let run = |pb: Result<ProblemData<S>>| {
            pb.and_then(|pb| {
                let mut c = cfg.clone();
                c.restart_profile = None;
                solve(&pb, grid, &c)
            })
        };
        if cfg.parallel {
            problems.into_par_iter().map(run).collect()
        } else {
            problems.into_iter().map(run).collect()
        }
    };
    let dominance_violations = reports
        .windows(2)
        .map(|w| match (&w[0], &w[1]) {
            (Ok(a), Ok(b)) => dominance_violation(&a.profile, &b.profile).ok(),
            _ => None,
        })
        .collect();
    Ok(Sweep { eta_bar: eta_list.to_vec(), reports, dominance_violations })
}
