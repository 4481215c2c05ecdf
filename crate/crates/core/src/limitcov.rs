//! Covariance of the Gaussian limit of the scaled height fluctuations.
//!
//! `Psi_v(x) = v phi_v(x) - x (1 - Phi_v(x))` with `phi_v`, `Phi_v` the
//! `N(0, v)` density and distribution function; `Psi_0(x) = max(-x, 0)`.
//! Both kernels `Gamma_1` and `Gamma_2` come with a closed form in `Psi` and
//! an independent quadrature route.

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::quad::{adaptive_simpson, normal_cdf, normal_pdf, normal_upper};

/// Macroscopic space-time point `(t, r)`, `t >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub t: f64,
    pub r: f64,
}

impl SpaceTimePoint {
    pub fn new(t: f64, r: f64) -> Self {
        assert!(
            t >= 0.0 && t.is_finite() && r.is_finite(),
            "invalid space-time point ({t}, {r})"
        );
        SpaceTimePoint { t, r }
    }
}

/// Coefficients of the limit covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitParams {
    pub sigma1_sq: f64,
    pub noise_variance: f64,
    pub rho0: f64,
}

impl LimitParams {
    pub fn new(sigma1_sq: f64, noise_variance: f64, rho0: f64) -> Result<Self> {
        let ok = sigma1_sq > 0.0 && noise_variance >= 0.0 && rho0 >= 0.0;
        if !(ok && sigma1_sq.is_finite() && noise_variance.is_finite() && rho0.is_finite()) {
            return Err(HarnessError::InvalidConfig(format!(
                "limit parameters must be finite with sigma1^2 > 0, noise variance >= 0, rho0 >= 0; got ({sigma1_sq}, {noise_variance}, {rho0})"
            )));
        }
        Ok(LimitParams {
            sigma1_sq,
            noise_variance,
            rho0,
        })
    }

    /// Stationary initial data: `rho0 = sigma_xi^2 / sigma_1^2`.
    pub fn stationary(sigma1_sq: f64, noise_variance: f64) -> Result<Self> {
        LimitParams::new(sigma1_sq, noise_variance, noise_variance / sigma1_sq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Closed,
    Integral,
}

/// `Psi_{nu2}(x)`.
pub fn psi(nu2: f64, x: f64) -> f64 {
    assert!(nu2 >= 0.0, "negative variance {nu2}");
    if nu2 == 0.0 {
        return (-x).max(0.0);
    }
    nu2 * normal_pdf(nu2, x) - x * normal_upper(nu2, x)
}

/// Order a pair canonically so the kernels are symmetric to the last bit.
fn ordered(a: SpaceTimePoint, b: SpaceTimePoint) -> (SpaceTimePoint, SpaceTimePoint) {
    if (a.t, a.r) <= (b.t, b.r) {
        (a, b)
    } else {
        (b, a)
    }
}

/// `Gamma_1((s,q),(t,r)) = Psi_{s1(t+s)}(r-q) - Psi_{s1|t-s|}(r-q)`, or
/// `(1/2) int_{s1|t-s|}^{s1(t+s)} phi_v(r - q) dv` by quadrature.
pub fn gamma1(p1: SpaceTimePoint, p2: SpaceTimePoint, sigma1_sq: f64, route: Route) -> f64 {
    let (a, b) = ordered(p1, p2);
    // Even in r - q.
    let x = (b.r - a.r).abs();
    let lo = sigma1_sq * (b.t - a.t).abs();
    let hi = sigma1_sq * (b.t + a.t);
    match route {
        Route::Closed => psi(hi, x) - psi(lo, x),
        Route::Integral => {
            // v = w^2 removes the v^{-1/2} endpoint singularity.
            let c = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
            let f = |w: f64| {
                if w == 0.0 {
                    if x == 0.0 {
                        c
                    } else {
                        0.0
                    }
                } else {
                    c * (-x * x / (2.0 * w * w)).exp()
                }
            };
            adaptive_simpson(f, lo.sqrt(), hi.sqrt(), 1e-13, 16)
        }
    }
}

/// `Gamma_2((s,q),(t,r)) = Psi_{s1 s}(-q) + Psi_{s1 t}(r) - Psi_{s1(t+s)}(r-q)`,
/// or by quadrature of
/// `int_{-inf}^0 P(B_{s1 s} > q-x) P(B_{s1 t} > r-x) dx + int_0^inf P(B_{s1 s} <= q-x) P(B_{s1 t} <= r-x) dx`.
pub fn gamma2(p1: SpaceTimePoint, p2: SpaceTimePoint, sigma1_sq: f64, route: Route) -> f64 {
    let (a, b) = ordered(p1, p2);
    let (s, q, t, r) = (a.t, a.r, b.t, b.r);
    match route {
        Route::Closed => psi(sigma1_sq * s, -q) + psi(sigma1_sq * t, r) - psi(sigma1_sq * (t + s), r - q),
        Route::Integral => {
            let (vs, vt) = (sigma1_sq * s, sigma1_sq * t);
            let reach = q.abs() + r.abs() + 8.0 * (sigma1_sq * (t + s)).sqrt();
            let left = |x: f64| normal_upper(vs, q - x) * normal_upper(vt, r - x);
            let right = |x: f64| normal_cdf(vs, q - x) * normal_cdf(vt, r - x);
            // Split at the kinks q and r (steps when a variance is zero).
            let mut cuts = vec![-reach, 0.0, reach, q, r];
            cuts.retain(|c| c.abs() <= reach);
            cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
            cuts.dedup();
            let mut total = 0.0;
            for w in cuts.windows(2) {
                let (lo, hi) = (w[0], w[1]);
                if hi <= lo {
                    continue;
                }
                total += if hi <= 0.0 {
                    adaptive_simpson(left, lo, hi, 1e-12, 16)
                } else {
                    adaptive_simpson(right, lo, hi, 1e-12, 16)
                };
            }
            total
        }
    }
}

/// Limit covariance `(s2 / s1) Gamma_1 + rho0 Gamma_2`.
pub fn z_cov(params: &LimitParams, p1: SpaceTimePoint, p2: SpaceTimePoint) -> f64 {
    params.noise_variance / params.sigma1_sq * gamma1(p1, p2, params.sigma1_sq, Route::Closed)
        + params.rho0 * gamma2(p1, p2, params.sigma1_sq, Route::Closed)
}

/// `s2 / sqrt(2 pi s1) (sqrt s + sqrt t - sqrt |t - s|)`: the covariance at
/// `r = q = 0` under stationary initial data.
pub fn fbm_cov(params: &LimitParams, s: f64, t: f64) -> Result<f64> {
    let expected = params.noise_variance / params.sigma1_sq;
    if (params.rho0 - expected).abs() > 1e-12 * expected.max(1.0) {
        return Err(HarnessError::InvalidConfig(format!(
            "fractional Brownian covariance needs rho0 = sigma_xi^2/sigma_1^2 = {expected}, got {}",
            params.rho0
        )));
    }
    let c = params.noise_variance / (2.0 * std::f64::consts::PI * params.sigma1_sq).sqrt();
    Ok(c * (s.sqrt() + t.sqrt() - (t - s).abs().sqrt()))
}

/// One row of the kernel table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitRow {
    pub s: f64,
    pub q: f64,
    pub t: f64,
    pub r: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub zcov: f64,
}

/// Kernel values for every ordered pair of `points` (including diagonal).
pub fn limit_table(params: &LimitParams, points: &[SpaceTimePoint]) -> Vec<LimitRow> {
    let mut rows = Vec::new();
    for (i, a) in points.iter().enumerate() {
        for b in &points[i..] {
            rows.push(LimitRow {
                s: a.t,
                q: a.r,
                t: b.t,
                r: b.r,
                gamma1: gamma1(*a, *b, params.sigma1_sq, Route::Closed),
                gamma2: gamma2(*a, *b, params.sigma1_sq, Route::Closed),
                zcov: z_cov(params, *a, *b),
            });
        }
    }
    rows
}
