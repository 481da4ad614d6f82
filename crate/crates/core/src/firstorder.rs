//! First-order objects of the discrete cost: `h`, the switching function
//! `psi = -int h`, the exact gradient, the optimality certificate, and the
//! residual of the pointwise identity linking `psi`, `h` and `S`.
//!
//! `h` is defined from the exact discrete gradient, `g_k = -omega_k h_k`,
//! so that `psi` (prefix sums of `-h omega`) is exactly the quantity whose
//! maximality over the support is the KKT condition of the discrete problem.

use crate::error::Result;
use crate::forward::Kernel;
use crate::measure::{default_support_tol, support_mask, EffortProfile};
use crate::profiles::ProblemData;
use crate::scalar::Scalar;

/// Per-node pieces shared by all first-order quantities.
#[derive(Clone, Debug)]
pub(crate) struct Parts<S> {
    pub(crate) kernel: Kernel<S>,
    /// Unmerged `h` per node.
    h_raw: Vec<S>,
    /// `h` with the two end nodes merged into one periodic value.
    pub(crate) h: Vec<S>,
    m: S,
}

impl<S: Scalar> Parts<S> {
    fn new(problem: &ProblemData<S>, profile: &EffortProfile<S>) -> Result<Self> {
        Ok(Self::from_kernel(Kernel::new(problem, profile)?))
    }

    pub(crate) fn from_kernel(k: Kernel<S>) -> Self {
        let n = k.len();
        let one_minus_q = S::one() - k.q;
        let half = S::of(0.5);
        let tail = k.w_total / one_minus_q;
        let a_end = k.a[n - 1];
        let h_raw: Vec<S> = (0..n)
            .map(|j| {
                let ahead = if j + 1 < n { k.step[j] * k.bw[j + 1] } else { S::zero() };
                let left_gap = if j > 0 { k.times[j] - k.times[j - 1] } else { S::zero() };
                let back = ahead + k.w[j] * left_gap * half + (k.a[j] - a_end).exp() * tail;
                k.w[j] * k.s[j] - k.c[j] * back
            })
            .collect();
        let m = k.w_total * k.ec[0] / (one_minus_q * one_minus_q);
        let mut h = h_raw.clone();
        let ends = k.omega[0] + k.omega[n - 1];
        let merged = (k.omega[0] * h_raw[0] + k.omega[n - 1] * h_raw[n - 1]) / ends;
        h[0] = merged;
        h[n - 1] = merged;
        Self { kernel: k, h_raw, h, m }
    }

    /// Closed-form switching function from the normalized prefix/suffix sums.
    pub(crate) fn psi(&self) -> Vec<S> {
        let k = &self.kernel;
        let n = k.len();
        let one_minus_q = S::one() - k.q;
        let shift = (self.h_raw[0] - self.h[0]) * k.omega[0];
        let mut psi = vec![S::zero(); n];
        for i in 1..n {
            psi[i] = (k.pc[i] * k.bw[i] - k.fw[i] * k.ec[i]) / one_minus_q + shift;
        }
        psi
    }

    fn node_gradient(&self) -> Vec<S> {
        self.h.iter().zip(&self.kernel.omega).map(|(&h, &o)| -h * o).collect()
    }
}

/// `h` at every node. Paired nodes carry the one-sided values; the end nodes
/// share one value because `h` is periodic.
pub fn h_function<S: Scalar>(problem: &ProblemData<S>, profile: &EffortProfile<S>) -> Result<Vec<S>> {
    Ok(Parts::new(problem, profile)?.h)
}

/// `psi(t_k) = -sum_{j<k} h_j omega_j`, so `psi(0) = 0`.
pub fn psi_function<S: Scalar>(problem: &ProblemData<S>, profile: &EffortProfile<S>) -> Result<Vec<S>> {
    Ok(Parts::new(problem, profile)?.psi())
}

/// Exact gradient of the discrete cost on the fixed-mass set.
///
/// `nodes[k] = -h_k omega_k` is the partial derivative with respect to
/// `alpha_k` at every interior node. The end nodes carry the merged periodic
/// value, so `nodes` sums to zero. `increments` are its suffix sums; they
/// differ from the unconstrained partials with respect to each gap increment
/// by one common constant, which cancels along every mass-preserving direction.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient<S> {
    pub nodes: Vec<S>,
    pub increments: Vec<S>,
}

pub fn gradient<S: Scalar>(problem: &ProblemData<S>, profile: &EffortProfile<S>) -> Result<Gradient<S>> {
    let nodes = Parts::new(problem, profile)?.node_gradient();
    let n = nodes.len();
    let mut increments = vec![S::zero(); n - 1];
    let mut acc = S::zero();
    for j in (0..n - 1).rev() {
        acc = acc + nodes[j + 1];
        increments[j] = acc;
    }
    Ok(Gradient { nodes, increments })
}

/// Everything the certificate computes, per node and in summary.
#[derive(Clone, Debug, PartialEq)]
pub struct FirstOrderDiagnostics<S> {
    pub times: Vec<S>,
    pub h: Vec<S>,
    pub psi: Vec<S>,
    pub state: Vec<S>,
    /// Maximum of `psi` over `(0, T]`, i.e. over the right ends of all gaps.
    pub psi_max: S,
    /// Largest `psi_max - psi` over gaps in the support.
    pub certificate_residual: S,
    /// Largest violation of `h(t+) >= 0`, `h(t-) <= 0` at atoms.
    pub atom_sign_violation: S,
    pub identity_residual: S,
    /// Constant of the pointwise identity.
    pub m: S,
    pub support_tol: S,
    /// Support flag per gap.
    pub support: Vec<bool>,
}

/// Optimality certificate of `profile`: the support may only contain gaps
/// where `psi` is maximal.
pub fn certificate<S: Scalar>(
    problem: &ProblemData<S>,
    profile: &EffortProfile<S>,
    support_tol: Option<S>,
) -> Result<FirstOrderDiagnostics<S>> {
    let parts = Parts::new(problem, profile)?;
    let psi = parts.psi();
    let n = psi.len();
    let tol = support_tol.unwrap_or_else(|| default_support_tol(profile));
    let mask = support_mask(profile, tol);
    let psi_max = psi[1..].iter().copied().fold(S::neg_infinity(), S::max);
    let certificate_residual = (0..n - 1)
        .filter(|&j| mask[j])
        .map(|j| psi_max - psi[j + 1])
        .fold(S::zero(), S::max);

    let grid = profile.grid();
    let mut atom_sign_violation = S::zero();
    for j in 0..n - 1 {
        if mask[j] && grid.gap_width(j) == S::zero() {
            atom_sign_violation = atom_sign_violation.max(parts.h[j]).max(-parts.h[j + 1]);
        }
    }
    let identity_residual = identity_from_parts(&parts, profile);
    Ok(FirstOrderDiagnostics {
        times: parts.kernel.times.clone(),
        h: parts.h.clone(),
        psi,
        state: parts.kernel.s.clone(),
        psi_max,
        certificate_residual,
        atom_sign_violation,
        identity_residual,
        m: parts.m,
        support_tol: tol,
        support: mask,
    })
}

fn identity_from_parts<S: Scalar>(parts: &Parts<S>, profile: &EffortProfile<S>) -> S {
    let k = &parts.kernel;
    let grid = profile.grid();
    let psi_hat = crate::quad::cumtrapz(&k.times, &parts.h);
    (0..k.len())
        .filter(|&i| !grid.is_paired(i) && k.c[i] > S::of(1e-12))
        .map(|i| {
            let s = k.s[i];
            let lhs = -psi_hat[i] + parts.h[i] * s / k.c[i] + parts.m;
            (lhs - k.w[i] * s * s / k.c[i]).abs()
        })
        .fold(S::zero(), S::max)
}

/// Largest node deviation in `psi + h S / c + M = w S^2 / c`, with `psi`
/// taken as the trapezoid integral of `-h`. Paired nodes are skipped.
pub fn identity_residual<S: Scalar>(problem: &ProblemData<S>, profile: &EffortProfile<S>) -> Result<S> {
    let parts = Parts::new(problem, profile)?;
    Ok(identity_from_parts(&parts, profile))
}

/// Largest `|rho - alpha|` over unpaired nodes touching the support, where
/// `rho = alpha + ln(w S / (c B)) / 2` is the implicit fixed-point form of
/// the optimal profile and `c B = w S - h`. Zero at an exact optimum.
pub fn fixed_point_residual<S: Scalar>(
    problem: &ProblemData<S>,
    profile: &EffortProfile<S>,
    support_tol: Option<S>,
) -> Result<S> {
    let parts = Parts::new(problem, profile)?;
    let k = &parts.kernel;
    let grid = profile.grid();
    let tol = support_tol.unwrap_or_else(|| default_support_tol(profile));
    let mask = support_mask(profile, tol);
    let n = k.len();
    let half = S::of(0.5);
    Ok((0..n)
        .filter(|&i| !grid.is_paired(i))
        .filter(|&i| (i > 0 && mask[i - 1]) || (i + 1 < n && mask[i]))
        .map(|i| {
            let ws = k.w[i] * k.s[i];
            (half * (ws / (ws - parts.h[i])).ln()).abs()
        })
        .fold(S::zero(), S::max))
}
