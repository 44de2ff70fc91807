//! Numerical inversion of Laplace transforms.
//!
//! `talbot` uses the optimized cotangent contour of Weideman & Trefethen;
//! `euler` is the Abate–Whitt Bromwich/Euler-summation scheme, which only
//! evaluates the transform on a vertical line and is the fallback for
//! transforms that cannot be continued into the left half-plane.

use crate::error::{Error, Result};
use num_complex::Complex64;

const TALBOT_SIGMA: f64 = -0.6122;
const TALBOT_MU: f64 = 0.5017;
const TALBOT_ALPHA: f64 = 0.6407;
const TALBOT_NU: f64 = 0.2645;

/// Inverts `f` at `t > 0` with `n` contour nodes. The contour is translated
/// right by `shift`, which must exceed the abscissa of every singularity.
pub fn talbot<F: Fn(Complex64) -> Complex64>(f: F, t: f64, n: usize, shift: f64) -> f64 {
    let nf = n as f64;
    let h = 2.0 * std::f64::consts::PI / nf;
    let scale = nf / t;
    let mut acc = 0.0;
    for k in 0..n {
        let theta = -std::f64::consts::PI + (k as f64 + 0.5) * h;
        let at = TALBOT_ALPHA * theta;
        let cot = at.cos() / at.sin();
        let s = Complex64::new(
            shift + scale * (TALBOT_SIGMA + TALBOT_MU * theta * cot),
            scale * TALBOT_NU * theta,
        );
        let ds = Complex64::new(
            scale * TALBOT_MU * (cot - at / (at.sin() * at.sin())),
            scale * TALBOT_NU,
        );
        let term = (s * t).exp() * f(s) * ds;
        acc += term.im;
    }
    acc / nf
}

/// Talbot inversion evaluated at two node counts; fails when they disagree,
/// which is how oscillation or a misplaced singularity shows up.
pub fn talbot_checked<F: Fn(Complex64) -> Complex64>(
    f: F,
    t: f64,
    n: usize,
    shift: f64,
    tol: f64,
) -> Result<f64> {
    let a = talbot(&f, t, n, shift);
    let b = talbot(&f, t, n + n / 2, shift);
    if !a.is_finite() || !b.is_finite() || (a - b).abs() > tol * b.abs().max(1e-8) {
        return Err(Error::Numeric(format!(
            "Laplace inversion unstable at t={t}: {a:e} vs {b:e} (nodes {n} / {})",
            n + n / 2
        )));
    }
    Ok(b)
}

/// Abate–Whitt Euler inversion. `shift` plays the same role as in `talbot`.
pub fn euler<F: Fn(Complex64) -> Complex64>(f: F, t: f64, shift: f64) -> f64 {
    const A: f64 = 18.4;
    const NTERMS: usize = 15;
    const MAVG: usize = 11;
    let u = (A / 2.0).exp() / t;
    let x = A / (2.0 * t);
    let h = std::f64::consts::PI / t;
    let fs = |s: Complex64| f(s + shift).re;
    let mut sum = fs(Complex64::new(x, 0.0)) / 2.0;
    for k in 1..=NTERMS {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * fs(Complex64::new(x, k as f64 * h));
    }
    let mut partial = Vec::with_capacity(MAVG + 1);
    partial.push(sum);
    for k in NTERMS + 1..=NTERMS + MAVG {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * fs(Complex64::new(x, k as f64 * h));
        partial.push(sum);
    }
    // binomial averaging of the last MAVG+1 partial sums
    let mut binom = 1.0;
    let mut avg = 0.0;
    for (j, s) in partial.iter().enumerate() {
        avg += binom * s;
        binom *= (MAVG - j) as f64 / (j + 1) as f64;
    }
    avg /= 2f64.powi(MAVG as i32);
    (shift * t).exp() * u * avg
}
