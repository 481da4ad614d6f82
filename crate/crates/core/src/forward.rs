//! Periodic state and cost of a discrete effort profile.
//!
//! All sums are carried in normalized form, with every exponential factor of
//! the shape `exp(a_j - a_k)` for `j <= k` where `a = alpha + delta t`, so no
//! factor exceeds one and large `alpha(T)` cannot overflow.

use crate::error::{Error, Result};
use crate::measure::EffortProfile;
use crate::profiles::{Grid, ProblemData, Side};
use crate::quad::gauss_legendre;
use crate::scalar::Scalar;

/// Everything the state, cost, gradient and switching function need, built
/// once per profile.
#[derive(Clone, Debug)]
pub struct Kernel<S> {
    pub times: Vec<S>,
    /// Trapezoid node weights.
    pub omega: Vec<S>,
    pub c: Vec<S>,
    pub w: Vec<S>,
    /// `a_k = alpha_k + delta t_k`.
    pub a: Vec<S>,
    /// `exp(a_k - a_{k+1})`, one per gap.
    pub step: Vec<S>,
    /// `q = exp(-a_K)`.
    pub q: S,
    /// State at the nodes.
    pub s: Vec<S>,
    /// `sum_{j<k} omega_j c_j exp(a_j - a_k)`.
    pub pc: Vec<S>,
    /// `sum_{j>=k} omega_j w_j exp(a_k - a_j)`.
    pub bw: Vec<S>,
    /// `sum_{j<k} omega_j w_j exp(-a_j)`.
    pub fw: Vec<S>,
    /// `sum_{j>=k} omega_j c_j exp(a_j - a_K)`.
    pub ec: Vec<S>,
    /// `sum_j omega_j w_j exp(-a_j)`.
    pub w_total: S,
}

/// Data and quadrature weights sampled on a grid, independent of the profile.
#[derive(Clone, Debug)]
pub struct Samples<S> {
    pub times: Vec<S>,
    pub omega: Vec<S>,
    pub c: Vec<S>,
    pub w: Vec<S>,
    pub delta: S,
}

impl<S: Scalar> Samples<S> {
    pub fn new(problem: &ProblemData<S>, grid: &Grid<S>) -> Result<Self> {
        let tol = S::of(1e-12) * problem.period();
        if (grid.period() - problem.period()).abs() > tol {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            times: grid.times().to_vec(),
            omega: grid.weights(),
            c: grid.sample(&problem.c),
            w: grid.sample(&problem.w),
            delta: problem.delta,
        })
    }
}

impl<S: Scalar> Kernel<S> {
    /// Kernel of a profile bound to `problem`.
    pub fn new(problem: &ProblemData<S>, profile: &EffortProfile<S>) -> Result<Self> {
        let samples = Samples::new(problem, profile.grid())?;
        profile.check_mass(problem.mass(), S::of(1e-9))?;
        Ok(Self::from_samples(&samples, profile.alpha()))
    }

    /// Kernel for raw node values `alpha` (with `alpha[0] = 0`); no checks.
    pub fn from_samples(samples: &Samples<S>, alpha: &[S]) -> Self {
        let times = samples.times.clone();
        let n = times.len();
        let omega = samples.omega.clone();
        let c = samples.c.clone();
        let w = samples.w.clone();
        let a: Vec<S> = alpha.iter().zip(&times).map(|(&al, &t)| al + samples.delta * t).collect();
        let step: Vec<S> = a.windows(2).map(|p| (p[0] - p[1]).exp()).collect();
        let q = (-a[n - 1]).exp();
        let one_minus_q = S::one() - q;
        let half = S::of(0.5);

        // trapezoid P_k = exp(-a_k) int_0^{t_k} c exp(a)
        let mut p = vec![S::zero(); n];
        for k in 0..n - 1 {
            let dt = times[k + 1] - times[k];
            p[k + 1] = step[k] * p[k] + half * dt * (c[k] * step[k] + c[k + 1]);
        }
        let carry = p[n - 1] / one_minus_q;
        let mut s = vec![S::zero(); n];
        for k in 0..n {
            s[k] = p[k] + (-a[k]).exp() * carry;
        }

        let mut pc = vec![S::zero(); n];
        for k in 0..n - 1 {
            pc[k + 1] = step[k] * (pc[k] + omega[k] * c[k]);
        }
        let mut bw = vec![S::zero(); n];
        bw[n - 1] = omega[n - 1] * w[n - 1];
        for k in (0..n - 1).rev() {
            bw[k] = omega[k] * w[k] + step[k] * bw[k + 1];
        }
        let mut fw = vec![S::zero(); n];
        for k in 0..n - 1 {
            fw[k + 1] = fw[k] + omega[k] * w[k] * (-a[k]).exp();
        }
        let w_total = fw[n - 1] + omega[n - 1] * w[n - 1] * (-a[n - 1]).exp();
        let mut ec = vec![S::zero(); n];
        ec[n - 1] = omega[n - 1] * c[n - 1];
        for k in (0..n - 1).rev() {
            ec[k] = ec[k + 1] + omega[k] * c[k] * (a[k] - a[n - 1]).exp();
        }

        Self { times, omega, c, w, a, step, q, s, pc, bw, fw, ec, w_total }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Trapezoid value of `int w S`.
    pub fn cost(&self) -> S {
        self.omega.iter().zip(&self.w).zip(&self.s).map(|((&o, &w), &s)| o * w * s).sum()
    }
}

/// Periodic state sampled at the grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct StateTrajectory<S> {
    pub times: Vec<S>,
    pub values: Vec<S>,
}

impl<S: Scalar> StateTrajectory<S> {
    /// Largest `|S(0) - S(T)|` relative to `max |S|`.
    pub fn periodicity_defect(&self) -> S {
        let n = self.values.len();
        let scale = self.values.iter().fold(S::zero(), |m, v| m.max(v.abs()));
        (self.values[0] - self.values[n - 1]).abs() / scale.max(S::min_positive_value())
    }
}

/// The unique `T`-periodic solution of `S' = c - (delta + eta) S` with the
/// atoms of the profile acting as multiplicative jumps.
pub fn periodic_state<S: Scalar>(problem: &ProblemData<S>, profile: &EffortProfile<S>) -> Result<StateTrajectory<S>> {
    let k = Kernel::new(problem, profile)?;
    Ok(StateTrajectory { times: k.times, values: k.s })
}

/// Trapezoid value of `int_0^T w S dt`. The profile must carry mass `T eta_bar`.
pub fn cost<S: Scalar>(problem: &ProblemData<S>, profile: &EffortProfile<S>) -> Result<S> {
    Ok(Kernel::new(problem, profile)?.cost())
}

/// `int_0^T w S dt` for the profile whose cumulative effort is linear between
/// nodes, with the data evaluated exactly and every gap integrated by nested
/// Gauss–Legendre rules. Unlike [`cost`] this carries no quadrature error of
/// order `h^2`, so it measures the true cost of a computed profile.
pub fn cost_continuous<S: Scalar>(problem: &ProblemData<S>, profile: &EffortProfile<S>) -> Result<S> {
    Samples::new(problem, profile.grid())?;
    profile.check_mass(problem.mass(), S::of(1e-9))?;
    let t = profile.times();
    let n = t.len();
    let a: Vec<S> = profile.alpha().iter().zip(t).map(|(&al, &tk)| al + problem.delta * tk).collect();
    let slope = |j: usize| {
        let d = t[j + 1] - t[j];
        if d > S::zero() {
            (a[j + 1] - a[j]) / d
        } else {
            S::zero()
        }
    };
    let c = |s: S| problem.c.eval(s, Side::Right);
    let w = |s: S| problem.w.eval(s, Side::Right);
    // exp(-a(x)) int_{t_j}^{x} c exp(a) on gap j
    let inner = |j: usize, x: S| {
        let r = slope(j);
        gauss_legendre(|s| c(s) * (r * (s - x)).exp(), t[j], x, 1)
    };
    let mut p = vec![S::zero(); n];
    for j in 0..n - 1 {
        let decay = (a[j] - a[j + 1]).exp();
        p[j + 1] = decay * p[j] + if t[j + 1] > t[j] { inner(j, t[j + 1]) } else { S::zero() };
    }
    let q = (a[0] - a[n - 1]).exp();
    let carry = p[n - 1] / (S::one() - q);
    let mut total = S::zero();
    for j in 0..n - 1 {
        if t[j + 1] <= t[j] {
            continue;
        }
        let r = slope(j);
        let state = |x: S| {
            let back = (-r * (x - t[j])).exp();
            back * p[j] + inner(j, x) + (a[0] - a[j] - r * (x - t[j])).exp() * carry
        };
        total = total + gauss_legendre(|x| w(x) * state(x), t[j], t[j + 1], 1);
    }
    Ok(total)
}

/// Cost along the straight segment `(1 - theta) p0 + theta p1` at each `theta`.
pub fn cost_along_segment<S: Scalar>(
    problem: &ProblemData<S>,
    p0: &EffortProfile<S>,
    p1: &EffortProfile<S>,
    thetas: &[S],
) -> Result<Vec<S>> {
    thetas.iter().map(|&th| cost(problem, &p0.blend(p1, th)?)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{preset, PeriodicPiecewise};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Direct evaluation of the discrete state formula with explicit
    /// exponentials, used as an oracle for the normalized recurrences.
    fn naive_state(problem: &ProblemData<f64>, profile: &EffortProfile<f64>) -> Vec<f64> {
        let g = profile.grid();
        let t = g.times();
        let c = g.sample(&problem.c);
        let a: Vec<f64> = profile.alpha().iter().zip(t).map(|(al, t)| al + problem.delta * t).collect();
        let n = t.len();
        let f: Vec<f64> = (0..n).map(|k| c[k] * a[k].exp()).collect();
        let integral = crate::quad::cumtrapz(t, &f);
        let q = (-a[n - 1]).exp();
        (0..n)
            .map(|k| (-a[k]).exp() / (1.0 - q) * (integral[k] + q * (integral[n - 1] - integral[k])))
            .collect()
    }

    fn constant_problem(eta_bar: f64) -> ProblemData<f64> {
        let one = PeriodicPiecewise::constant(1.0, 1.0).unwrap();
        ProblemData::new(one.clone(), one, 1.0, eta_bar).unwrap()
    }

    #[test]
    fn constant_data_uniform_profile_has_constant_state() {
        let p = constant_problem(3.0);
        let g = Grid::build(&p, 64, &[]).unwrap();
        let prof = EffortProfile::uniform(g, 3.0);
        let s = periodic_state(&p, &prof).unwrap();
        // exact continuous value is 1 / (delta + eta) = 0.25; trapezoid error O(h^2)
        for v in &s.values {
            assert!((v - 0.25).abs() < 1e-4, "{v}");
        }
        assert!(s.periodicity_defect() < 1e-12);
    }

    #[test]
    fn matches_naive_formula() {
        let p = preset::<f64>("fig1", 4.0).unwrap();
        let g = Grid::build(&p, 50, &[]).unwrap();
        let prof = EffortProfile::from_density_fn(g, |t| 4.0 + 3.0 * (6.0 * t).sin()).unwrap().rescaled(4.0).unwrap();
        let fast = periodic_state(&p, &prof).unwrap().values;
        let slow = naive_state(&p, &prof);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-13 * b.abs().max(1.0));
        }
    }

    #[test]
    fn atom_divides_state() {
        let p = preset::<f64>("fig2_sawtooth", 2.0).unwrap();
        let g = Grid::build(&p, 32, &[]).unwrap();
        let prof = EffortProfile::pure_atom(g.clone(), 0.5, 2.0).unwrap();
        let s = periodic_state(&p, &prof).unwrap().values;
        let i = g.node_at(0.5).unwrap();
        assert!((s[i + 1] / s[i] - (-2.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn large_mass_does_not_overflow() {
        let p = preset::<f64>("fig1", 2000.0).unwrap();
        let g = Grid::build(&p, 64, &[]).unwrap();
        let prof = EffortProfile::uniform(g, 2000.0);
        let k = Kernel::new(&p, &prof).unwrap();
        assert!(k.s.iter().all(|v| v.is_finite() && *v > 0.0));
        assert!(k.cost().is_finite());
        let prof32 = prof.cast::<f32>();
        let k32 = Kernel::new(&p.cast::<f32>(), &prof32).unwrap();
        assert!(k32.s.iter().all(|v| v.is_finite() && *v > 0.0));
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let p = constant_problem(1.0);
        let other = PeriodicPiecewise::constant(2.0, 1.0).unwrap();
        let q = ProblemData::new(other.clone(), other, 1.0, 1.0).unwrap();
        let g = Grid::build(&q, 16, &[]).unwrap();
        assert!(matches!(cost(&p, &EffortProfile::uniform(g, 1.0)), Err(Error::GridMismatch)));
        let g = Grid::build(&p, 16, &[]).unwrap();
        assert!(matches!(cost(&p, &EffortProfile::uniform(g, 1.5)), Err(Error::Unbound { .. })));
    }

    proptest! {
        #[test]
        fn state_is_positive_and_periodic(d in proptest::collection::vec(0.0f64..2.0, 34), which in 0usize..5) {
            let p = preset::<f64>(crate::profiles::PRESET_NAMES[which], 1.0).unwrap();
            let g = Grid::build(&p, 32, &[]).unwrap();
            let d = &d[..g.gaps()];
            let prof = EffortProfile::from_increments(g, d).unwrap();
            prop_assume!(prof.mass() > 1e-3);
            let prof = prof.rescaled(p.mass()).unwrap();
            let s = periodic_state(&p, &prof).unwrap();
            prop_assert!(s.values.iter().all(|&v| v > 0.0));
            // with alpha(0) = 0 the state at T equals the state at 0 after the jump at T
            let naive = naive_state(&p, &prof);
            for (a, b) in s.values.iter().zip(&naive) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }

        #[test]
        fn cost_is_convex_along_segments(
            d1 in proptest::collection::vec(0.01f64..2.0, 32),
            d2 in proptest::collection::vec(0.01f64..2.0, 32),
            theta in 0.0f64..1.0,
        ) {
            let p = preset::<f64>("fig1", 5.0).unwrap();
            let g = Grid::build(&p, 32, &[]).unwrap();
            let a = EffortProfile::from_increments(g.clone(), &d1).unwrap().rescaled(5.0).unwrap();
            let b = EffortProfile::from_increments(g, &d2).unwrap().rescaled(5.0).unwrap();
            let v = cost_along_segment(&p, &a, &b, &[0.0, theta, 1.0]).unwrap();
            let chord = (1.0 - theta) * v[0] + theta * v[2];
            prop_assert!(v[1] <= chord + 1e-12 * chord.abs());
        }
    }

    #[test]
    fn continuous_cost_of_uniform_profile_is_exact() {
        let p = constant_problem(1.0);
        let g = Grid::build(&p, 16, &[]).unwrap();
        let v = cost_continuous(&p, &EffortProfile::uniform(g, 1.0)).unwrap();
        assert!((v - 0.5).abs() < 1e-14, "{v}");
    }

    #[test]
    fn continuous_cost_is_the_limit_of_the_trapezoid_cost() {
        let p = preset::<f64>("fig1", 3.0).unwrap();
        let g = Grid::build(&p, 64, &[]).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let inc: Vec<f64> = (0..g.gaps()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let sum: f64 = inc.iter().sum();
        let inc: Vec<f64> = inc.iter().map(|v| v * 3.0 / sum).collect();
        let coarse = EffortProfile::from_increments(g.clone(), &inc).unwrap();
        let exact = cost_continuous(&p, &coarse).unwrap();
        // refine each gap into m equal parts with alpha linear inside
        let mut errs = vec![];
        for m in [4usize, 8, 16] {
            let mut times = vec![];
            let mut alpha = vec![];
            for j in 0..g.gaps() {
                let (t0, t1) = (g.times()[j], g.times()[j + 1]);
                let (a0, a1) = (coarse.alpha()[j], coarse.alpha()[j + 1]);
                for i in 0..m {
                    let th = i as f64 / m as f64;
                    times.push(t0 + th * (t1 - t0));
                    alpha.push(a0 + th * (a1 - a0));
                }
            }
            times.push(1.0);
            alpha.push(3.0);
            let fine = EffortProfile::new(Grid::from_times(1.0, times).unwrap(), alpha).unwrap();
            errs.push((cost(&p, &fine).unwrap() - exact).abs());
        }
        assert!(errs[0] / errs[1] > 3.8 && errs[1] / errs[2] > 3.8, "{errs:?}");
    }

}
