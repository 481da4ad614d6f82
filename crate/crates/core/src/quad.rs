//! Quadrature and 1-D search helpers.

use crate::scalar::Scalar;

/// Trapezoid node weights on a (possibly non-uniform, possibly repeated) grid.
///
/// Repeated nodes produce zero-width gaps that contribute nothing, so a jump
/// stored as a left/right node pair is never straddled.
pub fn trapezoid_weights<S: Scalar>(times: &[S]) -> Vec<S> {
    let n = times.len();
    let mut w = vec![S::zero(); n];
    let half = S::of(0.5);
    for k in 1..n {
        let dt = times[k] - times[k - 1];
        w[k - 1] = w[k - 1] + half * dt;
        w[k] = w[k] + half * dt;
    }
    w
}

/// Composite trapezoid cumulative integral, starting at zero.
pub fn cumtrapz<S: Scalar>(times: &[S], values: &[S]) -> Vec<S> {
    debug_assert_eq!(times.len(), values.len());
    let mut out = Vec::with_capacity(times.len());
    let mut acc = S::zero();
    let half = S::of(0.5);
    out.push(acc);
    for k in 1..times.len() {
        acc = acc + half * (times[k] - times[k - 1]) * (values[k - 1] + values[k]);
        out.push(acc);
    }
    out
}

pub fn trapz<S: Scalar>(times: &[S], values: &[S]) -> S {
    cumtrapz(times, values).last().copied().unwrap_or_else(S::zero)
}

const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];

const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Composite 8-point Gauss–Legendre rule over `panels` equal panels of `[a, b]`.
///
/// The integrand is only sampled at interior points, so a jump exactly at
/// `a` or `b` is harmless.
pub fn gauss_legendre<S: Scalar, F: Fn(S) -> S>(f: F, a: S, b: S, panels: usize) -> S {
    if b == a {
        return S::zero();
    }
    let panels = panels.max(1);
    let width = (b - a) / S::from_usize(panels);
    let half = S::of(0.5) * width;
    let mut total = S::zero();
    for p in 0..panels {
        let mid = a + width * (S::from_usize(p) + S::of(0.5));
        let mut acc = S::zero();
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
            acc = acc + S::of(*w) * f(mid + half * S::of(*x));
        }
        total = total + acc * half;
    }
    total
}

/// Golden-section search for a maximum of a unimodal function on `[a, b]`.
pub fn golden_max<S: Scalar, F: Fn(S) -> S>(f: F, mut a: S, mut b: S, tol: S) -> (S, S) {
    let inv_phi = S::of(0.618_033_988_749_894_9);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iter = 0;
    while (b - a).abs() > tol && iter < 200 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        }
        iter += 1;
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Maximize `f` on `[a, b]` by dense sampling followed by golden-section
/// refinement around the best sample. Endpoint samples are included.
pub fn sampled_max<S: Scalar, F: Fn(S) -> S>(f: F, a: S, b: S, samples: usize, tol: S) -> (S, S) {
    let samples = samples.max(2);
    let step = (b - a) / S::from_usize(samples);
    let mut best = (a, f(a));
    let mut best_i = 0;
    for i in 1..=samples {
        let x = if i == samples { b } else { a + step * S::from_usize(i) };
        let v = f(x);
        if v > best.1 {
            best = (x, v);
            best_i = i;
        }
    }
    if step == S::zero() {
        return best;
    }
    let lo = if best_i == 0 { a } else { a + step * S::from_usize(best_i - 1) };
    let hi = if best_i == samples { b } else { (a + step * S::from_usize(best_i + 1)).min(b) };
    let refined = golden_max(&f, lo, hi, tol);
    if refined.1 > best.1 {
        refined
    } else {
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_length_and_skip_zero_gaps() {
        let t = [0.0, 0.25, 0.5, 0.5, 1.0];
        let w = trapezoid_weights(&t);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(w, vec![0.125, 0.25, 0.125, 0.25, 0.25]);
    }

    #[test]
    fn cumtrapz_is_exact_for_linear() {
        let t: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let v: Vec<f64> = t.iter().map(|x| 2.0 * x + 1.0).collect();
        let c = cumtrapz(&t, &v);
        for (ti, ci) in t.iter().zip(&c) {
            assert!((ci - (ti * ti + ti)).abs() < 1e-14);
        }
    }

    #[test]
    fn gauss_legendre_integrates_exp() {
        let v = gauss_legendre(f64::exp, 0.0, 1.0, 4);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, _) = golden_max(|x: f64| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
        let (x, _) = sampled_max(|x: f64| (6.0 * x).sin(), 0.0, 1.0, 50, 1e-12);
        assert!((x - std::f64::consts::PI / 12.0).abs() < 1e-7);
    }
}
