//! Effort profiles: discrete cumulative profiles on a grid, their atoms, and
//! their support.

use crate::error::{Error, Result};
use crate::profiles::{Grid, Side};
use crate::scalar::Scalar;

/// Cumulative effort `alpha` sampled at the nodes of a grid. Gap `j` carries
/// the increment `alpha[j + 1] - alpha[j]`; a positive increment on a
/// zero-width gap is an atom.
#[derive(Clone, Debug, PartialEq)]
pub struct EffortProfile<S> {
    grid: Grid<S>,
    alpha: Vec<S>,
}

impl<S: Scalar> EffortProfile<S> {
    /// Validates `alpha[0] = 0`, finiteness and monotonicity.
    pub fn new(grid: Grid<S>, alpha: Vec<S>) -> Result<Self> {
        if alpha.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidProfile("alpha must be finite".into()));
        }
        if alpha[0] != S::zero() {
            return Err(Error::InvalidProfile(format!("alpha(0) must be 0, got {}", alpha[0])));
        }
        for j in 0..alpha.len() - 1 {
            let d = alpha[j + 1] - alpha[j];
            if d < S::zero() {
                return Err(Error::NegativeDensity { index: j, value: d.as_f64() });
            }
        }
        Ok(Self { grid, alpha })
    }

    /// Cumulative profile from per-gap increments.
    pub fn from_increments(grid: Grid<S>, increments: &[S]) -> Result<Self> {
        if increments.len() != grid.gaps() {
            return Err(Error::GridMismatch);
        }
        let mut alpha = Vec::with_capacity(grid.len());
        let mut acc = S::zero();
        alpha.push(acc);
        for &d in increments {
            acc = acc + d;
            alpha.push(acc);
        }
        for (j, &d) in increments.iter().enumerate() {
            if d < S::zero() {
                return Err(Error::NegativeDensity { index: j, value: d.as_f64() });
            }
        }
        Self::new(grid, alpha)
    }

    /// Cumulative trapezoid of per-node densities `eta`.
    pub fn from_density(grid: Grid<S>, eta: &[S]) -> Result<Self> {
        if eta.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if let Some(k) = eta.iter().position(|&e| !(e >= S::zero())) {
            return Err(Error::NegativeDensity { index: k, value: eta[k].as_f64() });
        }
        let alpha = crate::quad::cumtrapz(grid.times(), eta);
        Self::new(grid, alpha)
    }

    /// Profile with density `eta(t)` sampled at gap midpoints.
    pub fn from_density_fn<F: Fn(S) -> S>(grid: Grid<S>, eta: F) -> Result<Self> {
        let half = S::of(0.5);
        let d: Vec<S> = (0..grid.gaps())
            .map(|j| {
                let (a, b) = (grid.times()[j], grid.times()[j + 1]);
                eta(half * (a + b)) * (b - a)
            })
            .collect();
        Self::from_increments(grid, &d)
    }

    /// Constant density `mass / T`.
    pub fn uniform(grid: Grid<S>, mass: S) -> Self {
        let period = grid.period();
        let alpha = grid.times().iter().map(|&t| mass * t / period).collect();
        Self { grid, alpha }
    }

    /// All of `mass` on the gap at time `t` (the zero-width gap of a node
    /// pair when there is one, otherwise the finite gap containing `t`).
    pub fn pure_atom(grid: Grid<S>, t: S, mass: S) -> Result<Self> {
        let times = grid.times();
        let tau = crate::profiles::reduce_mod(t, grid.period());
        let gap = (0..grid.gaps())
            .find(|&j| times[j] == times[j + 1] && times[j] == tau)
            .unwrap_or_else(|| {
                let i = times.partition_point(|&x| x <= tau);
                i.clamp(1, grid.gaps()) - 1
            });
        let mut d = vec![S::zero(); grid.gaps()];
        d[gap] = mass;
        Self::from_increments(grid, &d)
    }

    pub fn grid(&self) -> &Grid<S> {
        &self.grid
    }

    pub fn alpha(&self) -> &[S] {
        &self.alpha
    }

    pub fn times(&self) -> &[S] {
        self.grid.times()
    }

    /// Total mass `alpha(T)`.
    pub fn mass(&self) -> S {
        self.alpha[self.alpha.len() - 1]
    }

    pub fn increments(&self) -> Vec<S> {
        self.alpha.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Mean density on each gap; infinite on a zero-width gap with mass.
    pub fn densities(&self) -> Vec<S> {
        self.increments()
            .into_iter()
            .zip(self.grid.gap_widths())
            .map(|(d, dt)| {
                if dt > S::zero() {
                    d / dt
                } else if d > S::zero() {
                    S::infinity()
                } else {
                    S::zero()
                }
            })
            .collect()
    }

    /// Density reported at each node: the mean over its two neighbouring
    /// gaps, taken periodically at `t = 0` and `t = T`, or the one finite
    /// neighbour when the other gap has zero width (either copy of a pair).
    pub fn node_densities(&self) -> Vec<S> {
        let dens = self.densities();
        let widths = self.grid.gap_widths();
        let n = self.alpha.len();
        let gaps = n - 1;
        (0..n)
            .map(|k| {
                let left = if k == 0 { gaps - 1 } else { k - 1 };
                let right = if k == gaps { 0 } else { k };
                match (widths[left] > S::zero(), widths[right] > S::zero()) {
                    (true, true) => S::of(0.5) * (dens[left] + dens[right]),
                    (true, false) => dens[left],
                    (false, true) => dens[right],
                    (false, false) => S::zero(),
                }
            })
            .collect()
    }

    /// `alpha(t-)` or `alpha(t+)` by linear interpolation, extended to all
    /// real `t` by `alpha(t + T) = alpha(t) + alpha(T)`. An atom stored on
    /// the node pair at `T` belongs to the period ending there.
    pub fn alpha_at(&self, t: S, side: Side) -> S {
        let period = self.grid.period();
        let n = (t / period).floor();
        let tau = crate::profiles::reduce_mod(t, period);
        if tau == S::zero() && side == Side::Left {
            return self.local_alpha(period, Side::Left) + (n - S::one()) * self.mass();
        }
        self.local_alpha(tau, side) + n * self.mass()
    }

    fn local_alpha(&self, t: S, side: Side) -> S {
        let times = self.grid.times();
        if t <= S::zero() {
            return S::zero();
        }
        let hi = times.partition_point(|&x| x < t);
        if hi == times.len() {
            return self.mass();
        }
        if times[hi] == t {
            return match side {
                Side::Left => self.alpha[hi],
                Side::Right => {
                    let last = hi + times[hi..].iter().take_while(|&&x| x == t).count() - 1;
                    self.alpha[last]
                }
            };
        }
        let lo = hi - 1;
        let s = (t - times[lo]) / (times[hi] - times[lo]);
        self.alpha[lo] + s * (self.alpha[hi] - self.alpha[lo])
    }

    /// Same shape scaled to total mass `mass`.
    pub fn rescaled(&self, mass: S) -> Result<Self> {
        let total = self.mass();
        if !(total > S::zero()) {
            return Err(Error::InvalidProfile("cannot rescale a zero profile".into()));
        }
        let f = mass / total;
        Ok(Self { grid: self.grid.clone(), alpha: self.alpha.iter().map(|&a| a * f).collect() })
    }

    /// `(1 - theta) self + theta other` on the same grid.
    pub fn blend(&self, other: &Self, theta: S) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let alpha = self
            .alpha
            .iter()
            .zip(&other.alpha)
            .map(|(&a, &b)| (S::one() - theta) * a + theta * b)
            .collect();
        Ok(Self { grid: self.grid.clone(), alpha })
    }

    /// Errors unless `|alpha(T) - mass| <= tol * max(1, mass)`.
    pub fn check_mass(&self, mass: S, tol: S) -> Result<()> {
        if (self.mass() - mass).abs() > tol * mass.max(S::one()) {
            return Err(Error::Unbound { mass: self.mass().as_f64(), expected: mass.as_f64() });
        }
        Ok(())
    }

    pub fn cast<R: Scalar>(&self) -> EffortProfile<R> {
        EffortProfile { grid: self.grid.cast(), alpha: self.alpha.iter().map(|a| R::of(a.as_f64())).collect() }
    }
}

/// A point mass found in a discrete profile.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom<S> {
    pub time: S,
    pub mass: S,
    /// Gaps `first_gap..=last_gap` were merged into this atom.
    pub first_gap: usize,
    pub last_gap: usize,
}

pub const DEFAULT_ATOM_RATIO: f64 = 10.0;

/// Gaps carrying far more mass than the mean density would give them.
///
/// A finite gap is flagged when its increment exceeds `ratio * dt * alpha(T) / T`;
/// a zero-width gap when its increment exceeds `1e-9 alpha(T)`. Runs of
/// adjacent flagged gaps are merged into one atom, located at the zero-width
/// gap if the run has one, else at the mass-weighted midpoint.
pub fn detect_atoms<S: Scalar>(profile: &EffortProfile<S>, ratio: S) -> Vec<Atom<S>> {
    let grid = profile.grid();
    let times = grid.times();
    let d = profile.increments();
    let total = profile.mass();
    if !(total > S::zero()) {
        return Vec::new();
    }
    let mean = total / grid.period();
    let flagged: Vec<bool> = (0..d.len())
        .map(|j| {
            let dt = grid.gap_width(j);
            if dt > S::zero() {
                d[j] > ratio * dt * mean
            } else {
                d[j] > S::of(1e-9) * total
            }
        })
        .collect();

    let mut atoms = Vec::new();
    let mut j = 0;
    while j < d.len() {
        if !flagged[j] {
            j += 1;
            continue;
        }
        let start = j;
        while j + 1 < d.len() && flagged[j + 1] {
            j += 1;
        }
        let run = start..=j;
        let mass: S = run.clone().map(|i| d[i]).sum();
        let time = match run.clone().find(|&i| times[i] == times[i + 1] && d[i] > S::zero()) {
            Some(i) => times[i],
            None => {
                let half = S::of(0.5);
                run.clone().map(|i| d[i] * half * (times[i] + times[i + 1])).sum::<S>() / mass
            }
        };
        atoms.push(Atom { time, mass, first_gap: start, last_gap: j });
        j += 1;
    }
    atoms
}

/// Per-gap support flag: finite gaps with density above `tol`, zero-width
/// gaps with an atom.
pub fn support_mask<S: Scalar>(profile: &EffortProfile<S>, tol: S) -> Vec<bool> {
    let total = profile.mass();
    profile
        .increments()
        .into_iter()
        .zip(profile.grid().gap_widths())
        .map(|(d, dt)| if dt > S::zero() { d > tol * dt } else { d > S::of(1e-9) * total })
        .collect()
}

/// Closed intervals of positive density together with atom locations.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportSet<S> {
    pub intervals: Vec<(S, S)>,
    pub atoms: Vec<S>,
}

impl<S: Scalar> SupportSet<S> {
    /// Lebesgue measure of the intervals.
    pub fn measure(&self) -> S {
        self.intervals.iter().fold(S::zero(), |acc, &(a, b)| acc + (b - a))
    }

    pub fn contains(&self, t: S) -> bool {
        self.intervals.iter().any(|&(a, b)| t >= a && t <= b) || self.atoms.contains(&t)
    }
}

/// Default density threshold for [`support`]: `1e-4` of the mean density.
pub fn default_support_tol<S: Scalar>(profile: &EffortProfile<S>) -> S {
    S::of(1e-4) * profile.mass() / profile.grid().period()
}

/// Support of a discrete profile. Consecutive finite gaps above `tol` form
/// one interval; zero-width gaps neither break nor start an interval.
pub fn support<S: Scalar>(profile: &EffortProfile<S>, tol: S) -> SupportSet<S> {
    let grid = profile.grid();
    let times = grid.times();
    let mask = support_mask(profile, tol);
    let mut intervals: Vec<(S, S)> = Vec::new();
    let mut open: Option<S> = None;
    let mut end = S::zero();
    for j in 0..grid.gaps() {
        if grid.gap_width(j) == S::zero() {
            continue;
        }
        if mask[j] {
            if open.is_none() {
                open = Some(times[j]);
            }
            end = times[j + 1];
        } else if let Some(a) = open.take() {
            intervals.push((a, end));
        }
    }
    if let Some(a) = open {
        intervals.push((a, end));
    }
    let atoms = detect_atoms(profile, S::of(DEFAULT_ATOM_RATIO)).into_iter().map(|a| a.time).collect();
    SupportSet { intervals, atoms }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{preset, ProblemData};
    use proptest::prelude::*;

    fn grid(name: &str, k: usize) -> Grid<f64> {
        let p: ProblemData<f64> = preset(name, 1.0).unwrap();
        Grid::build(&p, k, &[]).unwrap()
    }

    #[test]
    fn uniform_profile_has_constant_density() {
        let g = grid("fig1", 32);
        let p = EffortProfile::uniform(g, 3.0);
        assert!(p.densities().iter().all(|&e| (e - 3.0).abs() < 1e-12));
        assert!(detect_atoms(&p, 10.0).is_empty());
        let s = support(&p, 1e-6);
        assert_eq!(s.intervals, vec![(0.0, 1.0)]);
        assert!((s.measure() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_decreasing_and_mismatched_profiles() {
        let g = grid("fig1", 16);
        let mut a: Vec<f64> = g.times().to_vec();
        a[5] = a[3];
        assert!(matches!(EffortProfile::new(g.clone(), a), Err(Error::NegativeDensity { index: 4, .. })));
        assert!(matches!(EffortProfile::new(g.clone(), vec![0.0; 3]), Err(Error::GridMismatch)));
        let mut a = vec![0.0; g.len()];
        a[0] = 0.1;
        assert!(EffortProfile::new(g, a).is_err());
    }

    #[test]
    fn pure_atom_on_jump_pair() {
        let g = grid("fig2_sawtooth", 16);
        let p = EffortProfile::pure_atom(g, 0.5, 2.0).unwrap();
        let atoms = detect_atoms(&p, 10.0);
        assert_eq!(atoms.len(), 1);
        assert_eq!(atoms[0].time, 0.5);
        assert_eq!(atoms[0].mass, 2.0);
        assert_eq!(p.alpha_at(0.5, Side::Left), 0.0);
        assert_eq!(p.alpha_at(0.5, Side::Right), 2.0);
        let s = support(&p, 1e-6);
        assert!(s.intervals.is_empty());
        assert_eq!(s.atoms, vec![0.5]);
        assert_eq!(s.measure(), 0.0);
        assert!(s.contains(0.5));
    }

    #[test]
    fn support_splits_on_holidays() {
        let g = grid("fig1", 20);
        let p = EffortProfile::from_density_fn(g, |t| if (0.25..0.5).contains(&t) { 0.0 } else { 1.0 }).unwrap();
        let s = support(&p, 1e-6);
        assert_eq!(s.intervals, vec![(0.0, 0.25), (0.5, 1.0)]);
        assert!((s.measure() - 0.75).abs() < 1e-12);
        assert!(!s.contains(0.3) && s.contains(0.6));
    }

    #[test]
    fn concentrated_finite_gap_is_an_atom() {
        let g = grid("fig1", 100);
        let mut d = vec![0.01; 100];
        d[40] = 1.0;
        d[41] = 1.0;
        let p = EffortProfile::from_increments(g, &d).unwrap();
        let atoms = detect_atoms(&p, 10.0);
        assert_eq!(atoms.len(), 1);
        assert!((atoms[0].time - 0.41).abs() < 1e-12);
        assert!((atoms[0].mass - 2.0).abs() < 1e-12);
    }

    #[test]
    fn node_densities_skip_zero_width_gaps() {
        let g = grid("fig2_sawtooth", 16);
        let p = EffortProfile::from_density_fn(g.clone(), |t| if t < 0.5 { 1.0 } else { 2.0 }).unwrap();
        let e = p.node_densities();
        let i = g.node_at(0.5).unwrap();
        assert!((e[i] - 1.0).abs() < 1e-12);
        assert!((e[i + 1] - 2.0).abs() < 1e-12);
        // t = 0 and t = T see the last gap and the first one
        assert!((e[0] - 1.5).abs() < 1e-12);
        assert!((e[g.len() - 1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn node_densities_are_exact_for_linear_density() {
        let g = grid("fig1", 32);
        let p = EffortProfile::from_density_fn(g.clone(), |t| 1.0 + t).unwrap();
        let e = p.node_densities();
        for k in 1..g.len() - 1 {
            assert!((e[k] - 1.0 - g.times()[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn from_density_integrates_node_rates() {
        let g = grid("fig1", 16);
        let p = EffortProfile::from_density(g.clone(), &vec![2.5; g.len()]).unwrap();
        for (a, t) in p.alpha().iter().zip(g.times()) {
            assert!((a - 2.5 * t).abs() < 1e-15);
        }
        let z = EffortProfile::from_density(g.clone(), &vec![0.0; g.len()]).unwrap();
        assert!(z.alpha().iter().all(|&a| a == 0.0));
        let mut bad = vec![1.0; g.len()];
        bad[3] = -1.0;
        assert!(matches!(EffortProfile::from_density(g, &bad), Err(Error::NegativeDensity { index: 3, .. })));
    }

    #[test]
    fn alpha_at_extends_periodically() {
        let g = grid("fig1", 16);
        let p = EffortProfile::uniform(g, 1.0);
        assert!((p.alpha_at(1.5, Side::Right) - 1.5).abs() < 1e-15);
        assert!((p.alpha_at(-0.25, Side::Left) + 0.25).abs() < 1e-15);
        assert_eq!(p.alpha_at(0.0, Side::Right), 0.0);
        assert_eq!(p.alpha_at(1.0, Side::Right) - p.alpha_at(0.0, Side::Right), 1.0);
    }

    proptest! {
        #[test]
        fn difference_quotient_recovers_piecewise_constant_density(lo in 0.0f64..5.0, hi in 0.0f64..5.0) {
            let g = grid("fig2_sawtooth", 32);
            let eta: Vec<f64> = g.times().iter().enumerate()
                .map(|(k, &t)| if t < 0.5 || (t == 0.5 && g.kinds()[k] == crate::profiles::NodeKind::JumpLeft) { lo } else { hi })
                .collect();
            let p = EffortProfile::from_density(g.clone(), &eta).unwrap();
            for (j, dens) in p.densities().iter().enumerate() {
                if g.gap_width(j) > 0.0 {
                    prop_assert!((dens - eta[j]).abs() <= 1e-12 * (1.0 + eta[j]));
                }
            }
        }

        #[test]
        fn alpha_at_is_monotone_and_periodic(
            d in proptest::collection::vec(0.0f64..2.0, 17),
            s in -2.0f64..2.0, gap in 0.0f64..2.0, left in any::<bool>(),
        ) {
            let g = grid("fig2_sawtooth", 16);
            let p = EffortProfile::from_increments(g, &d).unwrap();
            let m = p.mass();
            let side = if left { Side::Left } else { Side::Right };
            prop_assert!(p.alpha_at(s, Side::Left) <= p.alpha_at(s + gap, Side::Right) + 1e-12 * m.max(1.0));
            let diff = p.alpha_at(s + 1.0, side) - p.alpha_at(s, side);
            prop_assert!((diff - m).abs() <= 1e-12 * m.max(1.0) * 4.0);
        }

        #[test]
        fn rescale_and_blend_keep_admissibility(
            d1 in proptest::collection::vec(0.0f64..3.0, 17),
            d2 in proptest::collection::vec(0.0f64..3.0, 17),
            theta in 0.0f64..1.0,
            m in 0.1f64..50.0,
        ) {
            let g = grid("fig2_sawtooth", 16);
            prop_assume!(d1.iter().sum::<f64>() > 1e-3 && d2.iter().sum::<f64>() > 1e-3);
            let a = EffortProfile::from_increments(g.clone(), &d1).unwrap().rescaled(m).unwrap();
            let b = EffortProfile::from_increments(g, &d2).unwrap().rescaled(m).unwrap();
            let c = a.blend(&b, theta).unwrap();
            prop_assert!(c.check_mass(m, 1e-12).is_ok());
            prop_assert!(c.alpha()[0] == 0.0);
            prop_assert!(c.increments().iter().all(|&x| x >= -1e-12 * m));
        }
    }
}
