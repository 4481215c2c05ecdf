//! Scalar quadrature and Gaussian helpers.

use libm::erfc;
use std::f64::consts::{PI, SQRT_2};

const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance
/// `tol`. The interval is first split into `panels` equal pieces so that
/// oscillatory integrands are not accepted on a coarse lucky sample.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, panels: usize) -> f64 {
    if a == b {
        return 0.0;
    }
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let panel_tol = tol / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let lo = a + h * i as f64;
        let hi = if i + 1 == panels { b } else { lo + h };
        let flo = f(lo);
        let fhi = f(hi);
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        total += simpson_step(&f, lo, hi, flo, fmid, fhi, whole, panel_tol, MAX_DEPTH);
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Centered Gaussian density with variance `var > 0`.
pub fn normal_pdf(var: f64, x: f64) -> f64 {
    (-x * x / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// `P(N(0, var) > x)`, through `erfc` so that large positive `x` keeps
/// relative precision.
pub fn normal_upper(var: f64, x: f64) -> f64 {
    if var == 0.0 {
        return if x < 0.0 { 1.0 } else { 0.0 };
    }
    0.5 * erfc(x / (SQRT_2 * var.sqrt()))
}

/// `P(N(0, var) <= x)`.
pub fn normal_cdf(var: f64, x: f64) -> f64 {
    if var == 0.0 {
        return if x >= 0.0 { 1.0 } else { 0.0 };
    }
    0.5 * erfc(-x / (SQRT_2 * var.sqrt()))
}

/// Ordinary least-squares slope of `ys` on `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomials_and_oscillation() {
        let v = adaptive_simpson(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12, 1);
        assert!((v - 0.0).abs() < 1e-12);
        let v = adaptive_simpson(|x| (25.0 * x).cos(), 0.0, PI, 1e-12, 32);
        assert!(v.abs() < 1e-11);
        let v = adaptive_simpson(|x| (-x * x).exp(), -8.0, 8.0, 1e-13, 8);
        assert!((v - PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn gaussian_tails() {
        assert!((normal_cdf(1.0, 0.0) - 0.5).abs() < 1e-16);
        let v = normal_upper(4.0, 2.0);
        assert!((v - 0.158_655_253_931_457_07).abs() < 1e-15, "{v:e}");
        let far = normal_upper(1.0, 30.0);
        assert!(far > 0.0 && far < 1e-190);
        assert_eq!(normal_upper(0.0, -1.0), 1.0);
        assert_eq!(normal_cdf(0.0, -1.0), 0.0);
    }

    #[test]
    fn slope_of_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        assert!((ols_slope(&xs, &ys) - 3.0).abs() < 1e-14);
    }
}
