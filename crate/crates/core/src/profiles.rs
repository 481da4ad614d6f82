//! Problem instances: periodic piecewise data functions, the scalar
//! parameters, computational grids, and the worked-example presets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::scalar::Scalar;

/// Which one-sided limit to take at a breakpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

/// Closed-form expression valid on one piece. Time is absolute (not shifted
/// to the piece start), reduced to `[0, T)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr<S> {
    Const(S),
    /// `coeffs[0] + coeffs[1] t + coeffs[2] t^2 + ...`
    Poly(Vec<S>),
    /// `a + b cos(omega t)`
    Cos { a: S, b: S, omega: S },
    /// `a + b sin(omega t)`
    Sin { a: S, b: S, omega: S },
}

impl<S: Scalar> Expr<S> {
    pub fn eval(&self, t: S) -> S {
        match self {
            Expr::Const(v) => *v,
            Expr::Poly(coeffs) => coeffs.iter().rev().fold(S::zero(), |acc, &c| acc * t + c),
            Expr::Cos { a, b, omega } => *a + *b * (*omega * t).cos(),
            Expr::Sin { a, b, omega } => *a + *b * (*omega * t).sin(),
        }
    }

    pub fn derivative(&self, t: S) -> S {
        match self {
            Expr::Const(_) => S::zero(),
            Expr::Poly(coeffs) => {
                let mut acc = S::zero();
                for (i, &c) in coeffs.iter().enumerate().skip(1).rev() {
                    acc = acc * t + c * S::from_usize(i);
                }
                acc
            }
            Expr::Cos { b, omega, .. } => -*b * *omega * (*omega * t).sin(),
            Expr::Sin { b, omega, .. } => *b * *omega * (*omega * t).cos(),
        }
    }

    fn cast<R: Scalar>(&self) -> Expr<R> {
        let c = |x: &S| R::of(x.as_f64());
        match self {
            Expr::Const(v) => Expr::Const(c(v)),
            Expr::Poly(coeffs) => Expr::Poly(coeffs.iter().map(c).collect()),
            Expr::Cos { a, b, omega } => Expr::Cos { a: c(a), b: c(b), omega: c(omega) },
            Expr::Sin { a, b, omega } => Expr::Sin { a: c(a), b: c(b), omega: c(omega) },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Piece<S> {
    pub start: S,
    pub expr: Expr<S>,
}

/// A `T`-periodic function given piece by piece on `[0, T)`; piece `i` is
/// valid on `[start_i, start_{i+1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicPiecewise<S> {
    period: S,
    pieces: Vec<Piece<S>>,
}

impl<S: Scalar> PeriodicPiecewise<S> {
    pub fn new(period: S, pieces: Vec<Piece<S>>) -> Result<Self> {
        if !(period > S::zero()) || !period.is_finite() {
            return Err(Error::InvalidPiecewise(format!("period must be positive, got {period}")));
        }
        if pieces.is_empty() {
            return Err(Error::InvalidPiecewise("no pieces".into()));
        }
        if pieces[0].start != S::zero() {
            return Err(Error::InvalidPiecewise("first breakpoint must be 0".into()));
        }
        for pair in pieces.windows(2) {
            if !(pair[1].start > pair[0].start) {
                return Err(Error::InvalidPiecewise("breakpoints must be strictly increasing".into()));
            }
        }
        if !(pieces[pieces.len() - 1].start < period) {
            return Err(Error::InvalidPiecewise("breakpoints must lie in [0, T)".into()));
        }
        Ok(Self { period, pieces })
    }

    pub fn constant(period: S, value: S) -> Result<Self> {
        Self::new(period, vec![Piece { start: S::zero(), expr: Expr::Const(value) }])
    }

    pub fn single(period: S, expr: Expr<S>) -> Result<Self> {
        Self::new(period, vec![Piece { start: S::zero(), expr }])
    }

    pub fn period(&self) -> S {
        self.period
    }

    pub fn pieces(&self) -> &[Piece<S>] {
        &self.pieces
    }

    /// Piece start times, the first of which is always 0.
    pub fn breakpoints(&self) -> Vec<S> {
        self.pieces.iter().map(|p| p.start).collect()
    }

    /// `t mod T` in `[0, T)`, using an explicit floor so negative `t` works.
    pub fn reduce(&self, t: S) -> S {
        reduce_mod(t, self.period)
    }

    /// Index of the piece used for the given one-sided limit at reduced time
    /// `tau`, plus the time at which to evaluate its expression.
    fn locate(&self, tau: S, side: Side) -> (usize, S) {
        let i = self.pieces.partition_point(|p| p.start <= tau) - 1;
        if side == Side::Left && self.pieces[i].start == tau {
            if i == 0 {
                (self.pieces.len() - 1, self.period)
            } else {
                (i - 1, tau)
            }
        } else {
            (i, tau)
        }
    }

    /// One-sided value `f(t-)` or `f(t+)`.
    pub fn eval(&self, t: S, side: Side) -> S {
        let (i, x) = self.locate(self.reduce(t), side);
        self.pieces[i].expr.eval(x)
    }

    /// One-sided derivative, from the closed-form piece derivative.
    pub fn derivative(&self, t: S, side: Side) -> S {
        let (i, x) = self.locate(self.reduce(t), side);
        self.pieces[i].expr.derivative(x)
    }

    /// True if the left and right limits differ at `t`.
    pub fn jumps_at(&self, t: S) -> bool {
        let l = self.eval(t, Side::Left);
        let r = self.eval(t, Side::Right);
        (l - r).abs() > S::of(1e-12) * (S::one() + l.abs().max(r.abs()))
    }

    pub fn cast<R: Scalar>(&self) -> PeriodicPiecewise<R> {
        PeriodicPiecewise {
            period: R::of(self.period.as_f64()),
            pieces: self
                .pieces
                .iter()
                .map(|p| Piece { start: R::of(p.start.as_f64()), expr: p.expr.cast() })
                .collect(),
        }
    }
}

pub(crate) fn reduce_mod<S: Scalar>(t: S, period: S) -> S {
    let tau = t - period * (t / period).floor();
    if tau >= period || tau < S::zero() {
        S::zero()
    } else {
        tau
    }
}

/// All data of one instance: inflow `c`, weight `w`, base decay `delta`,
/// and the mean effort `eta_bar`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemData<S> {
    pub c: PeriodicPiecewise<S>,
    pub w: PeriodicPiecewise<S>,
    pub delta: S,
    pub eta_bar: S,
}

impl<S: Scalar> ProblemData<S> {
    pub fn new(c: PeriodicPiecewise<S>, w: PeriodicPiecewise<S>, delta: S, eta_bar: S) -> Result<Self> {
        if c.period() != w.period() {
            return Err(Error::InvalidProblem("c and w must share the same period".into()));
        }
        if !(delta > S::zero()) || !delta.is_finite() {
            return Err(Error::InvalidProblem(format!("delta must be positive, got {delta}")));
        }
        let p = Self { c, w, delta, eta_bar };
        p.check_eta_bar(eta_bar)?;
        p.check_positive()?;
        Ok(p)
    }

    fn check_eta_bar(&self, eta_bar: S) -> Result<()> {
        if !(eta_bar > S::zero()) || !eta_bar.is_finite() {
            return Err(Error::InvalidProblem(format!("eta_bar must be positive, got {eta_bar}")));
        }
        Ok(())
    }

    /// Both one-sided limits of c and w must be strictly positive. Checked at
    /// every breakpoint and on a fixed sample inside each piece.
    fn check_positive(&self) -> Result<()> {
        let t_end = self.period();
        let mut probes = Vec::new();
        let bps = self.breakpoints();
        for (i, &a) in bps.iter().enumerate() {
            let b = bps.get(i + 1).copied().unwrap_or(t_end);
            for j in 0..=64 {
                probes.push(a + (b - a) * S::from_usize(j) / S::of(64.0));
            }
        }
        for t in probes {
            for side in [Side::Left, Side::Right] {
                let cv = self.c.eval(t, side);
                let wv = self.w.eval(t, side);
                if !(cv > S::zero()) || !(wv > S::zero()) {
                    return Err(Error::InvalidProblem(format!(
                        "c and w must be strictly positive; c = {cv}, w = {wv} at t = {t} ({side:?})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn with_eta_bar(&self, eta_bar: S) -> Result<Self> {
        self.check_eta_bar(eta_bar)?;
        Ok(Self { eta_bar, ..self.clone() })
    }

    pub fn period(&self) -> S {
        self.c.period()
    }

    /// Total effort per period, `T * eta_bar`.
    pub fn mass(&self) -> S {
        self.period() * self.eta_bar
    }

    /// `exp(-(eta_bar + delta) T)`.
    pub fn decay_factor(&self) -> S {
        (-(self.eta_bar + self.delta) * self.period()).exp()
    }

    /// Sorted union of the breakpoints of c and w (always contains 0).
    pub fn breakpoints(&self) -> Vec<S> {
        let mut all = self.c.breakpoints();
        all.extend(self.w.breakpoints());
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all.dedup();
        all
    }

    /// Breakpoints at which c or w actually jumps.
    pub fn jump_points(&self) -> Vec<S> {
        self.breakpoints()
            .into_iter()
            .filter(|&t| self.c.jumps_at(t) || self.w.jumps_at(t))
            .collect()
    }

    /// `phi = c / w`.
    pub fn phi(&self, t: S, side: Side) -> S {
        self.c.eval(t, side) / self.w.eval(t, side)
    }

    /// `[ln(c/w)]' = c'/c - w'/w` from the closed-form piece derivatives.
    pub fn ln_phi_derivative(&self, t: S, side: Side) -> S {
        self.c.derivative(t, side) / self.c.eval(t, side) - self.w.derivative(t, side) / self.w.eval(t, side)
    }

    /// Integral of `g` over `[a, b]` (`0 <= a <= b <= T`) split at the data
    /// breakpoints so each panel sees a smooth integrand.
    pub fn integrate<F: Fn(S) -> S>(&self, g: F, a: S, b: S) -> S {
        if !(b > a) {
            return S::zero();
        }
        let mut cuts = vec![a];
        cuts.extend(self.breakpoints().into_iter().filter(|&t| t > a && t < b));
        cuts.push(b);
        let period = self.period();
        cuts.windows(2)
            .map(|w| {
                let share = ((w[1] - w[0]) / period * S::of(256.0)).ceil().as_f64() as usize;
                quad::gauss_legendre(&g, w[0], w[1], share.clamp(2, 256))
            })
            .sum()
    }

    pub fn cast<R: Scalar>(&self) -> ProblemData<R> {
        ProblemData {
            c: self.c.cast(),
            w: self.w.cast(),
            delta: R::of(self.delta.as_f64()),
            eta_bar: R::of(self.eta_bar.as_f64()),
        }
    }
}

/// Role of a grid node: ordinary, or one copy of a left/right pair
/// recording both sides of a data discontinuity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Single,
    JumpLeft,
    JumpRight,
}

/// Nodes `0 = t_0 <= t_1 <= ... <= t_K = T`. Equal consecutive times only
/// occur as a `JumpLeft`/`JumpRight` pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<S> {
    period: S,
    times: Vec<S>,
    kinds: Vec<NodeKind>,
}

pub const MIN_GRID_INTERVALS: usize = 16;

impl<S: Scalar> Grid<S> {
    /// Uniform `k`-interval grid with every data breakpoint and every time in
    /// `refine_near` inserted. Breakpoints where c or w jumps become node
    /// pairs; a jump at `t = 0` is stored as a pair at `t = T`.
    pub fn build(p: &ProblemData<S>, k: usize, refine_near: &[S]) -> Result<Self> {
        if k < MIN_GRID_INTERVALS {
            return Err(Error::GridTooCoarse(k));
        }
        let period = p.period();
        let h = period / S::from_usize(k);
        let snap = h * S::of(1e-9);
        let mut points: Vec<(S, bool)> = (0..=k).map(|i| (h * S::from_usize(i), false)).collect();
        points[k].0 = period;

        let insert = |t: S, pair: bool, points: &mut Vec<(S, bool)>| {
            let idx = points.partition_point(|q| q.0 < t - snap);
            if idx < points.len() && (points[idx].0 - t).abs() <= snap {
                if idx != 0 && idx != points.len() - 1 {
                    points[idx].0 = t;
                }
                points[idx].1 |= pair;
            } else {
                points.insert(idx, (t, pair));
            }
        };

        for t in p.breakpoints() {
            let jump = p.c.jumps_at(t) || p.w.jumps_at(t);
            if t == S::zero() {
                if jump {
                    let last = points.len() - 1;
                    points[last].1 = true;
                }
            } else {
                insert(t, jump, &mut points);
            }
        }
        for &t in refine_near {
            let tau = reduce_mod(t, period);
            if tau > S::zero() {
                insert(tau, false, &mut points);
            }
        }

        let mut times = Vec::with_capacity(points.len() + 4);
        let mut kinds = Vec::with_capacity(points.len() + 4);
        for (t, pair) in points {
            if pair {
                times.push(t);
                kinds.push(NodeKind::JumpLeft);
                times.push(t);
                kinds.push(NodeKind::JumpRight);
            } else {
                times.push(t);
                kinds.push(NodeKind::Single);
            }
        }
        Ok(Self { period, times, kinds })
    }

    /// Grid from explicit node times (e.g. read back from a CSV file). Equal
    /// consecutive times are interpreted as a left/right pair.
    pub fn from_times(period: S, times: Vec<S>) -> Result<Self> {
        if times.len() < 3 {
            return Err(Error::InvalidGrid("need at least three nodes".into()));
        }
        if times[0] != S::zero() {
            return Err(Error::InvalidGrid("first node must be 0".into()));
        }
        let tol = period * S::of(1e-12);
        if (times[times.len() - 1] - period).abs() > tol {
            return Err(Error::InvalidGrid(format!("last node must be T = {period}")));
        }
        let mut times = times;
        let last = times.len() - 1;
        times[last] = period;
        let mut kinds = vec![NodeKind::Single; times.len()];
        let mut k = 1;
        while k < times.len() {
            let dt = times[k] - times[k - 1];
            if dt < S::zero() {
                return Err(Error::InvalidGrid("node times must be nondecreasing".into()));
            }
            if dt == S::zero() {
                if k == 1 || kinds[k - 1] != NodeKind::Single {
                    return Err(Error::InvalidGrid("a time may appear at most twice, not at t = 0".into()));
                }
                kinds[k - 1] = NodeKind::JumpLeft;
                kinds[k] = NodeKind::JumpRight;
            }
            k += 1;
        }
        Ok(Self { period, times, kinds })
    }

    pub fn period(&self) -> S {
        self.period
    }

    pub fn times(&self) -> &[S] {
        &self.times
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    /// Number of nodes (`K + 1`).
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of gaps (`K`); gap `j` joins nodes `j` and `j + 1`.
    pub fn gaps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn gap_width(&self, j: usize) -> S {
        self.times[j + 1] - self.times[j]
    }

    pub fn gap_widths(&self) -> Vec<S> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Trapezoid weights.
    pub fn weights(&self) -> Vec<S> {
        quad::trapezoid_weights(&self.times)
    }

    /// Side from which data are sampled at node `k`.
    pub fn side(&self, k: usize) -> Side {
        match self.kinds[k] {
            NodeKind::JumpLeft => Side::Left,
            NodeKind::JumpRight => Side::Right,
            NodeKind::Single if k + 1 == self.times.len() => Side::Left,
            NodeKind::Single => Side::Right,
        }
    }

    /// True when node `k` is one copy of a left/right pair.
    pub fn is_paired(&self, k: usize) -> bool {
        self.kinds[k] != NodeKind::Single
    }

    pub fn sample(&self, f: &PeriodicPiecewise<S>) -> Vec<S> {
        (0..self.len()).map(|k| f.eval(self.times[k], self.side(k))).collect()
    }

    /// Largest gap width.
    pub fn max_spacing(&self) -> S {
        self.gap_widths().into_iter().fold(S::zero(), S::max)
    }

    /// Index of the first node at time `t`, if any.
    pub fn node_at(&self, t: S) -> Option<usize> {
        let tol = self.period * S::of(1e-12);
        let i = self.times.partition_point(|&x| x < t - tol);
        (i < self.times.len() && (self.times[i] - t).abs() <= tol).then_some(i)
    }

    pub fn cast<R: Scalar>(&self) -> Grid<R> {
        Grid {
            period: R::of(self.period.as_f64()),
            times: self.times.iter().map(|t| R::of(t.as_f64())).collect(),
            kinds: self.kinds.clone(),
        }
    }
}

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 5] = ["fig1", "fig2_sawtooth", "fig3_rising_sawtooth", "fig4_square", "fig6_tent"];

/// Worked-example instances; all use `w = 1`, `delta = 1`, `T = 1`.
///
/// * `fig1`: `c = 1 - 0.9 cos(2 pi t)`
/// * `fig2_sawtooth`: `c = t + 1` on `[0, .5)`, `t` on `[.5, 1)`
/// * `fig3_rising_sawtooth`: `c = 1 - t` on `[0, .5)`, `2 - t` on `[.5, 1)`
/// * `fig4_square`: `c = .25, 1.75, .25` on `[0, .25), [.25, .75), [.75, 1)`
/// * `fig6_tent`: `c = 1 + 3t` on `[0, .5)`, `3 - 2t` on `[.5, 1)`
pub fn preset<S: Scalar>(name: &str, eta_bar: S) -> Result<ProblemData<S>> {
    let one = S::one();
    let f = S::of;
    let c = match name {
        "fig1" => PeriodicPiecewise::single(one, Expr::Cos { a: one, b: f(-0.9), omega: f(2.0) * S::PI() })?,
        "fig2_sawtooth" => PeriodicPiecewise::new(
            one,
            vec![
                Piece { start: S::zero(), expr: Expr::Poly(vec![one, one]) },
                Piece { start: f(0.5), expr: Expr::Poly(vec![S::zero(), one]) },
            ],
        )?,
        "fig3_rising_sawtooth" => PeriodicPiecewise::new(
            one,
            vec![
                Piece { start: S::zero(), expr: Expr::Poly(vec![one, -one]) },
                Piece { start: f(0.5), expr: Expr::Poly(vec![f(2.0), -one]) },
            ],
        )?,
        "fig4_square" => PeriodicPiecewise::new(
            one,
            vec![
                Piece { start: S::zero(), expr: Expr::Const(f(0.25)) },
                Piece { start: f(0.25), expr: Expr::Const(f(1.75)) },
                Piece { start: f(0.75), expr: Expr::Const(f(0.25)) },
            ],
        )?,
        "fig6_tent" => PeriodicPiecewise::new(
            one,
            vec![
                Piece { start: S::zero(), expr: Expr::Poly(vec![one, f(3.0)]) },
                Piece { start: f(0.5), expr: Expr::Poly(vec![f(3.0), f(-2.0)]) },
            ],
        )?,
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    ProblemData::new(c, PeriodicPiecewise::constant(one, one)?, one, eta_bar)
}

/// JSON form of one piece: `{"t": start, "kind": "poly"|"cos"|"sin"|"const", "coeffs": [...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PieceSpec {
    pub t: f64,
    pub kind: String,
    pub coeffs: Vec<f64>,
}

/// JSON form of a problem instance. `eta_bar` may be left out and supplied
/// later, for example by a run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub period: f64,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_bar: Option<f64>,
    pub c: Vec<PieceSpec>,
    pub w: Vec<PieceSpec>,
}

impl PieceSpec {
    fn to_piece<S: Scalar>(&self, period: f64) -> Result<Piece<S>> {
        let k = &self.coeffs;
        let bad = |msg: &str| Error::InvalidPiecewise(format!("piece at t = {}: {msg}", self.t));
        let expr = match self.kind.as_str() {
            "const" => match k.as_slice() {
                [v] => Expr::Const(S::of(*v)),
                _ => return Err(bad("const takes exactly one coefficient")),
            },
            "poly" => {
                if k.is_empty() {
                    return Err(bad("poly needs at least one coefficient"));
                }
                Expr::Poly(k.iter().map(|&x| S::of(x)).collect())
            }
            "cos" | "sin" => {
                let (a, b, omega) = match k.as_slice() {
                    [a, b] => (*a, *b, 2.0 * std::f64::consts::PI / period),
                    [a, b, omega] => (*a, *b, *omega),
                    _ => return Err(bad("cos/sin take [a, b] or [a, b, omega]")),
                };
                let (a, b, omega) = (S::of(a), S::of(b), S::of(omega));
                if self.kind == "cos" {
                    Expr::Cos { a, b, omega }
                } else {
                    Expr::Sin { a, b, omega }
                }
            }
            other => return Err(bad(&format!("unknown kind `{other}`"))),
        };
        if k.iter().any(|x| !x.is_finite()) {
            return Err(bad("coefficients must be finite"));
        }
        Ok(Piece { start: S::of(self.t), expr })
    }

    fn from_piece<S: Scalar>(p: &Piece<S>) -> Self {
        let f = |x: S| x.as_f64();
        let (kind, coeffs) = match &p.expr {
            Expr::Const(v) => ("const", vec![f(*v)]),
            Expr::Poly(c) => ("poly", c.iter().map(|&x| f(x)).collect()),
            Expr::Cos { a, b, omega } => ("cos", vec![f(*a), f(*b), f(*omega)]),
            Expr::Sin { a, b, omega } => ("sin", vec![f(*a), f(*b), f(*omega)]),
        };
        Self { t: f(p.start), kind: kind.to_string(), coeffs }
    }
}

impl ProblemSpec {
    pub fn to_problem<S: Scalar>(&self) -> Result<ProblemData<S>> {
        let build = |pieces: &[PieceSpec]| -> Result<PeriodicPiecewise<S>> {
            let pieces = pieces.iter().map(|p| p.to_piece(self.period)).collect::<Result<Vec<_>>>()?;
            PeriodicPiecewise::new(S::of(self.period), pieces)
        };
        let eta_bar = self.eta_bar.ok_or_else(|| Error::InvalidProblem("eta_bar is not set".into()))?;
        ProblemData::new(build(&self.c)?, build(&self.w)?, S::of(self.delta), S::of(eta_bar))
    }

    pub fn from_problem<S: Scalar>(p: &ProblemData<S>) -> Self {
        Self {
            period: p.period().as_f64(),
            delta: p.delta.as_f64(),
            eta_bar: Some(p.eta_bar.as_f64()),
            c: p.c.pieces().iter().map(PieceSpec::from_piece).collect(),
            w: p.w.pieces().iter().map(PieceSpec::from_piece).collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
