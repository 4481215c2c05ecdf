//! Invariant increment laws: the stationary covariance `V0`, samplers for
//! the minimal-variance stationary law, harmonic shifts, and diagnostics
//! for relaxation and for the absence of stationary heights in `d <= 2`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::kernel::{KernelAnalysis, Walk};
use crate::lattice::{Grid, LatticeBox};
use crate::noise::{NoiseField, NoiseModel};
use crate::process::{evolve_height, evolve_height_snapshots, required_window, HeightField, IncrementField};
use crate::quad::adaptive_simpson;
use crate::stats::{bootstrap_stderr, covariance_jackknife, variance_stderr};

/// Default series depth when the Gaussian tail completion is on.
pub const DEFAULT_DEPTH: usize = 256;

const COMPLETION_TAG: u64 = 0xC0_4E7E;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum V0Method {
    Fourier,
    KernelA,
}

/// `(1 - cos theta) / (1 - phi_q(theta))`, with its limit `1/sigma_q^2` at 0.
fn spectral_ratio(kernel: &KernelAnalysis, theta: f64) -> f64 {
    let s = (0.5 * theta).sin();
    let num = 2.0 * s * s;
    if num < 1e-300 {
        return 1.0 / (2.0 * kernel.variance());
    }
    num / kernel.one_minus_phi_q(theta)
}

fn require_1d(kernel: &KernelAnalysis, op: &'static str) -> Result<()> {
    if kernel.dim() == 1 {
        Ok(())
    } else {
        Err(HarnessError::DimensionUnsupported { op, dim: kernel.dim() })
    }
}

/// Stationary increment covariance `V0(0, x)` in one dimension.
///
/// `Fourier` integrates `(2 s2 / pi) int_0^pi (1 - cos t)/(1 - phi_q(t)) cos(x t) dt`;
/// `KernelA` uses the second difference `s2 [a(x-1) + a(x+1) - 2 a(x)]`.
pub fn v0(kernel: &KernelAnalysis, noise_variance: f64, x: i64, method: V0Method) -> Result<f64> {
    require_1d(kernel, "v0")?;
    match method {
        V0Method::Fourier => {
            let xf = x as f64;
            let panels = 16 + 2 * x.unsigned_abs() as usize;
            let integral = adaptive_simpson(
                |th| spectral_ratio(kernel, th) * (xf * th).cos(),
                0.0,
                PI,
                1e-13,
                panels,
            );
            Ok(2.0 * noise_variance / PI * integral)
        }
        V0Method::KernelA => {
            let a = |y: i64| kernel.potential_kernel_a(y);
            Ok(noise_variance * (a(x - 1)? + a(x + 1)? - 2.0 * a(x)?))
        }
    }
}

/// Omitted variance of the series truncated after `depth` steps:
/// `2 s2 [a(1) - sum_{k<=K} (q^k(0) - q^k(1))]`, evaluated through its
/// Fourier form `(2 s2 / pi) int_0^pi (1 - cos t) phi_q^{K+1} / (1 - phi_q) dt`,
/// which stays accurate when the difference is tiny.
pub fn series_tail_variance(kernel: &KernelAnalysis, noise_variance: f64, depth: usize) -> Result<f64> {
    require_1d(kernel, "series_tail_variance")?;
    let power = depth as i32 + 1;
    let width = (1.0 / (kernel.variance() * (depth as f64 + 1.0))).sqrt();
    let f = |th: f64| spectral_ratio(kernel, th) * (1.0 - kernel.one_minus_phi_q(th)).powi(power);
    // Most of the mass sits within a few `width`s of zero.
    let split = (12.0 * width).min(PI);
    let near = adaptive_simpson(f, 0.0, split, 1e-15, 32);
    let far = adaptive_simpson(f, split, PI, 1e-15, 32);
    Ok((2.0 * noise_variance / PI * (near + far)).max(0.0))
}

type FftPlan = (Arc<dyn Fft<f64>>, Arc<Vec<f64>>);

/// Sampler for the minimal-variance stationary increment law.
///
/// The first `depth + 1` terms of the moving-average series are realized
/// exactly by running the height process from a flat start at time
/// `-depth - 1` up to time 0 (noise keys `(-k, y, replica)`) and
/// differencing. Optionally the remaining terms are replaced by a stationary
/// Gaussian field with exactly their covariance, drawn by FFT on a circle
/// much larger than the window. That completion is exact in law for Gaussian
/// noise and second-order exact otherwise.
pub struct StationarySampler<'a> {
    kernel: &'a KernelAnalysis,
    noise: NoiseField,
    depth: usize,
    completion: bool,
    series_tail: f64,
    plans: Mutex<HashMap<usize, FftPlan>>,
}

impl<'a> StationarySampler<'a> {
    /// Series of depth `depth` with Gaussian tail completion (one dimension).
    pub fn completed(kernel: &'a KernelAnalysis, noise: NoiseField, depth: usize) -> Result<Self> {
        require_1d(kernel, "stationary sampler with completion")?;
        Self::build(kernel, noise, depth, true)
    }

    /// Plain truncated series.
    pub fn truncated(kernel: &'a KernelAnalysis, noise: NoiseField, depth: usize) -> Result<Self> {
        Self::build(kernel, noise, depth, false)
    }

    /// Plain truncated series with the smallest depth whose omitted variance
    /// is at most `eps * V0(0,0)`.
    pub fn with_tolerance(kernel: &'a KernelAnalysis, noise: NoiseField, eps: f64) -> Result<Self> {
        let depth = depth_for_tolerance(kernel, noise.model().variance, eps)?;
        Self::build(kernel, noise, depth, false)
    }

    fn build(kernel: &'a KernelAnalysis, noise: NoiseField, depth: usize, completion: bool) -> Result<Self> {
        let series_tail = if kernel.dim() == 1 {
            series_tail_variance(kernel, noise.model().variance, depth)?
        } else {
            f64::NAN
        };
        Ok(StationarySampler {
            kernel,
            noise,
            depth,
            completion,
            series_tail,
            plans: Mutex::new(HashMap::new()),
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn is_completed(&self) -> bool {
        self.completion
    }

    pub fn noise(&self) -> &NoiseField {
        &self.noise
    }

    /// Variance of the series terms beyond `depth` (per coordinate).
    pub fn series_tail(&self) -> f64 {
        self.series_tail
    }

    /// Variance missing from a sample: the series tail, or zero when the
    /// completion supplies it.
    pub fn omitted_variance(&self) -> f64 {
        if self.completion {
            0.0
        } else {
            self.series_tail
        }
    }

    /// Increments `eta(x - e_i, x)` on `window` for `replica`.
    pub fn sample(&self, window: &LatticeBox, replica: u64) -> Result<IncrementField> {
        let d = self.kernel.dim();
        let h_box = window.expand(&vec![-1; d], &vec![0; d]);
        let steps = self.depth + 1;
        let start = HeightField::new(
            Grid::zeros(required_window(self.kernel, &h_box, steps)),
            -(steps as i64),
        );
        let h = evolve_height(&start, self.kernel, &self.noise, replica, steps, &h_box)?;
        let mut eta = IncrementField::from_height(&h);
        eta.time = 0;
        if self.completion {
            let tail = self.tail_field(window.lo()[0], window.extent(0), replica);
            for (v, t) in eta.comps[0].data_mut().iter_mut().zip(tail) {
                *v += t;
            }
        }
        Ok(eta)
    }

    fn plan(&self, n: usize) -> FftPlan {
        let mut plans = self.plans.lock().unwrap();
        plans
            .entry(n)
            .or_insert_with(|| {
                let fft = FftPlanner::new().plan_fft_forward(n);
                let s2 = self.noise.model().variance;
                let power = self.depth as i32 + 1;
                let amp = (0..n)
                    .map(|j| {
                        let th = 2.0 * PI * j as f64 / n as f64;
                        let phi = 1.0 - self.kernel.one_minus_phi_q(th);
                        let s = 2.0 * s2 * spectral_ratio(self.kernel, th) * phi.powi(power);
                        (s.max(0.0) / n as f64).sqrt()
                    })
                    .collect();
                (fft, Arc::new(amp))
            })
            .clone()
    }

    /// Stationary Gaussian field on `len` consecutive sites whose covariance
    /// is that of the omitted series tail.
    fn tail_field(&self, lo: i64, len: usize, replica: u64) -> Vec<f64> {
        let reach = 20.0 * (2.0 * self.kernel.variance() * (self.depth as f64 + 1.0)).sqrt();
        let n = (len + reach.ceil() as usize + 64).next_power_of_two();
        let (fft, amp) = self.plan(n);
        let gauss = self.noise.derive(COMPLETION_TAG).with_model(NoiseModel::gaussian(1.0));
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        gauss.fill_row(0, &[lo], 0, replica, &mut re);
        gauss.fill_row(1, &[lo], 0, replica, &mut im);
        let mut buf: Vec<Complex64> = (0..n).map(|j| Complex64::new(re[j], im[j]) * amp[j]).collect();
        fft.process(&mut buf);
        buf.into_iter().take(len).map(|c| c.re).collect()
    }
}

/// Smallest depth whose series tail is at most `eps * V0(0,0)`.
pub fn depth_for_tolerance(kernel: &KernelAnalysis, noise_variance: f64, eps: f64) -> Result<usize> {
    let target = eps * v0(kernel, noise_variance, 0, V0Method::Fourier)?;
    let tail = |k: usize| series_tail_variance(kernel, noise_variance, k);
    if tail(0)? <= target {
        return Ok(0);
    }
    let mut hi = 1usize;
    while tail(hi)? > target {
        hi *= 2;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if tail(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// One row of a `V0` comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct V0Row {
    pub x: i64,
    pub fourier: f64,
    pub kernel_a: f64,
    pub mc: Option<f64>,
    pub stderr: Option<f64>,
}

/// Monte Carlo `Cov(eta(0), eta(x))` for `x = 0..=max_lag`, with jackknife
/// standard errors.
pub fn v0_monte_carlo(sampler: &StationarySampler, max_lag: i64, replicas: u64) -> Result<Vec<(f64, f64)>> {
    let window = LatticeBox::interval(0, max_lag);
    let rows = crate::par::try_map_replicas(replicas, |r| {
        sampler.sample(&window, r).map(|eta| eta.comps[0].data().to_vec())
    })?;
    let est = covariance_jackknife(&rows);
    Ok((0..=max_lag as usize)
        .map(|x| (est.at(0, x), est.stderr_at(0, x)))
        .collect())
}

/// Analytic `V0` by both routes for `|x| <= max_lag`, plus Monte Carlo
/// columns for `x >= 0` when a sampler is given.
pub fn v0_table(
    kernel: &KernelAnalysis,
    noise_variance: f64,
    max_lag: i64,
    mc: Option<(&StationarySampler, u64)>,
) -> Result<Vec<V0Row>> {
    let mc_vals = match mc {
        Some((s, r)) => Some(v0_monte_carlo(s, max_lag, r)?),
        None => None,
    };
    (-max_lag..=max_lag)
        .map(|x| {
            let m = mc_vals.as_ref().filter(|_| x >= 0).map(|v| v[x as usize]);
            Ok(V0Row {
                x,
                fourier: v0(kernel, noise_variance, x, V0Method::Fourier)?,
                kernel_a: v0(kernel, noise_variance, x, V0Method::KernelA)?,
                mc: m.map(|p| p.0),
                stderr: m.map(|p| p.1),
            })
        })
        .collect()
}

/// A tabulated vector field `u: Z^d -> R^d` that has passed the harmonicity
/// check on `checked`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicFn {
    pub comps: Vec<Grid>,
    pub checked: LatticeBox,
    pub residual: f64,
}

/// `max_{x in window} |sum_y p(x,y) u(y) - u(x)|`. `u` must cover `window`
/// dilated by the jump range.
pub fn check_harmonic(kernel: &KernelAnalysis, u: &Grid, window: &LatticeBox) -> Result<f64> {
    let need = required_window(kernel, window, 1);
    if !u.bounds().contains(&need) {
        return Err(HarnessError::WindowTooSmall(format!(
            "harmonic table {:?} does not cover {need:?}",
            u.bounds()
        )));
    }
    let jumps = kernel.jumps(Walk::P);
    let mut worst = 0.0f64;
    for x in window.points() {
        let avg: f64 = jumps
            .iter()
            .map(|j| {
                let y: Vec<i64> = x.iter().zip(&j.offset).map(|(a, b)| a + b).collect();
                j.prob * u.at(&y)
            })
            .sum();
        worst = worst.max((avg - u.at(&x)).abs());
    }
    Ok(worst)
}

impl HarmonicFn {
    /// Validate user tables: every component harmonic on `window` within `tol`.
    pub fn new(kernel: &KernelAnalysis, comps: Vec<Grid>, window: LatticeBox, tol: f64) -> Result<Self> {
        if comps.len() != kernel.dim() {
            return Err(HarnessError::InvalidConfig(format!(
                "harmonic function needs {} components, got {}",
                kernel.dim(),
                comps.len()
            )));
        }
        let mut residual = 0.0f64;
        for c in &comps {
            residual = residual.max(check_harmonic(kernel, c, &window)?);
        }
        if residual > tol {
            return Err(HarnessError::InvalidConfig(format!(
                "table is not harmonic: residual {residual:e} > {tol:e}"
            )));
        }
        Ok(HarmonicFn {
            comps,
            checked: window,
            residual,
        })
    }

    /// Constant shift `u(x) = c`.
    pub fn constant(kernel: &KernelAnalysis, c: &[f64], window: LatticeBox) -> Result<Self> {
        let wide = required_window(kernel, &window, 1);
        let comps = c.iter().map(|v| Grid::constant(wide.clone(), *v)).collect();
        HarmonicFn::new(kernel, comps, window, 1e-12)
    }

    /// `u_i(x) = sum_j a[i][j] x_j + c_i`; harmonic only for centered kernels.
    pub fn linear(kernel: &KernelAnalysis, a: &[Vec<f64>], c: &[f64], window: LatticeBox) -> Result<Self> {
        let wide = required_window(kernel, &window, 1);
        let comps = (0..kernel.dim())
            .map(|i| {
                Grid::from_fn(wide.clone(), |x| {
                    c[i] + a[i].iter().zip(x).map(|(aij, xj)| aij * *xj as f64).sum::<f64>()
                })
            })
            .collect();
        HarmonicFn::new(kernel, comps, window, 1e-9)
    }
}

/// Shift a stationary sample by a harmonic field: `eta^u = u + eta`.
pub fn add_harmonic(sample: &IncrementField, u: &HarmonicFn) -> Result<IncrementField> {
    let comps: Option<Vec<Grid>> = u.comps.iter().map(|c| c.restrict(sample.window())).collect();
    let comps = comps.ok_or_else(|| HarnessError::WindowTooSmall("harmonic table does not cover sample".into()))?;
    Ok(sample.add(&IncrementField::new(comps, sample.time)))
}

/// Truncated stationary height series in `d >= 3`, with the variance bound
/// `s2 * (Green tail bound)` of the omitted terms.
pub fn sample_chi(
    kernel: &KernelAnalysis,
    noise: &NoiseField,
    depth: usize,
    window: &LatticeBox,
    replica: u64,
) -> Result<(HeightField, f64)> {
    let d = kernel.dim();
    if d <= 2 {
        return Err(HarnessError::DimensionUnsupported {
            op: "sample_chi",
            dim: d,
        });
    }
    let steps = depth + 1;
    let start = HeightField::new(Grid::zeros(required_window(kernel, window, steps)), -(steps as i64));
    let h = evolve_height(&start, kernel, noise, replica, steps, window)?;
    let green = kernel.green_function(&vec![0; d], depth)?;
    Ok((h, noise.model().variance * green.tail_bound))
}

/// One row of the characteristic-function diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharFnRow {
    pub t: usize,
    pub empirical: f64,
    pub stderr: f64,
    pub theory: f64,
}

/// `|E exp(i alpha h_t)|` from a flat start, estimated per replica by the
/// spatial average over `sites` consecutive sites and then across
/// replicas; bootstrap standard error over replicas. Theory column:
/// `exp(-alpha^2 s2 sum_{k<t} q^k(0,0) / 2)`.
pub fn charfn_diagnostic(
    kernel: &KernelAnalysis,
    noise: &NoiseField,
    alpha: f64,
    times: &[usize],
    replicas: u64,
    sites: usize,
) -> Result<Vec<CharFnRow>> {
    let d = kernel.dim();
    if d > 2 {
        return Err(HarnessError::DimensionUnsupported {
            op: "charfn_diagnostic",
            dim: d,
        });
    }
    let mut hi = vec![0i64; d];
    hi[d - 1] = sites as i64 - 1;
    let eval = LatticeBox::new(vec![0; d], hi);
    let t_max = times.iter().copied().max().unwrap_or(0);
    let requests: Vec<(usize, LatticeBox)> = times.iter().map(|t| (*t, eval.clone())).collect();
    let per_replica = crate::par::try_map_replicas(replicas, |r| {
        let h0 = HeightField::new(Grid::zeros(required_window(kernel, &eval, t_max)), 0);
        let snaps = evolve_height_snapshots(&h0, kernel, noise, r, &requests)?;
        Ok(snaps
            .iter()
            .map(|h| {
                let n = h.grid.data().len() as f64;
                let c = h.grid.data().iter().map(|v| (alpha * v).cos()).sum::<f64>() / n;
                let s = h.grid.data().iter().map(|v| (alpha * v).sin()).sum::<f64>() / n;
                (c, s)
            })
            .collect::<Vec<_>>())
    })?;
    let s2 = noise.model().variance;
    Ok(times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let cs: Vec<(f64, f64)> = per_replica.iter().map(|v| v[i]).collect();
            let modulus = |idx: &[usize]| {
                let n = idx.len() as f64;
                let (c, s) = idx.iter().fold((0.0, 0.0), |(a, b), &j| (a + cs[j].0, b + cs[j].1));
                (c / n).hypot(s / n)
            };
            let all: Vec<usize> = (0..cs.len()).collect();
            CharFnRow {
                t,
                empirical: modulus(&all),
                stderr: bootstrap_stderr(cs.len(), 200, noise.seed() ^ t as u64, modulus),
                theory: (-0.5 * alpha * alpha * s2 * kernel.return_sum(t)).exp(),
            }
        })
        .collect())
}

/// `Var eta_t(0)` exactly, for initial increments with covariance `cov0(m)`
/// independent of the noise:
/// `sum_m q^t(0,m) cov0(m) + 2 s2 sum_{k<t} (q^k(0) - q^k(1))`.
pub fn exact_increment_variance(
    kernel: &KernelAnalysis,
    noise_variance: f64,
    cov0: impl Fn(i64) -> f64,
    t: usize,
) -> Result<f64> {
    require_1d(kernel, "exact_increment_variance")?;
    let mut stream = kernel.power_stream(Walk::Q);
    let mut noise_part = 0.0;
    for k in 0..t {
        if k > 0 {
            stream.advance();
        }
        noise_part += stream.prob(&[0]) - stream.prob(&[1]);
    }
    if t > 0 {
        stream.advance();
    }
    let q = stream.current();
    let init: f64 = q.bounds().points().zip(q.data()).map(|(m, w)| w * cov0(m[0])).sum();
    Ok(init + 2.0 * noise_variance * noise_part)
}

/// One row of a variance trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceRow {
    pub t: usize,
    pub var: f64,
    pub stderr: f64,
    pub theory: f64,
}

/// `Var eta_t(0)` across replicas along one trajectory per replica,
/// started from `sample_initial(replica)`; the theory column is supplied
/// per time by the caller.
pub fn convergence_probe<F>(
    kernel: &KernelAnalysis,
    noise: &NoiseField,
    sample_initial: F,
    times: &[usize],
    replicas: u64,
    theory: impl Fn(usize) -> f64,
) -> Result<Vec<VarianceRow>>
where
    F: Fn(&LatticeBox, u64) -> Result<IncrementField> + Sync + Send,
{
    require_1d(kernel, "convergence_probe")?;
    let site = LatticeBox::interval(0, 0);
    let t_max = times.iter().copied().max().unwrap_or(0);
    let window = required_window(kernel, &site, t_max);
    let values = crate::par::try_map_replicas(replicas, |r| {
        let eta0 = sample_initial(&window, r)?;
        times
            .iter()
            .map(|&t| crate::process::evolve_increment(&eta0, kernel, noise, r, t, &site).map(|e| e.comps[0].data()[0]))
            .collect::<Result<Vec<f64>>>()
    })?;
    Ok(times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let col: Vec<f64> = values.iter().map(|v| v[i]).collect();
            let (var, stderr) = variance_stderr(&col);
            VarianceRow {
                t,
                var,
                stderr,
                theory: theory(t),
            }
        })
        .collect())
}

/// Monte Carlo check of `Var h_t(0)` from a flat start for each `t`,
/// against the exact flat-start variance.
pub fn flat_variance_probe(
    kernel: &KernelAnalysis,
    noise: &NoiseField,
    times: &[usize],
    replicas: u64,
) -> Result<Vec<VarianceRow>> {
    let d = kernel.dim();
    let site = LatticeBox::cube(d, 0, 0);
    let t_max = times.iter().copied().max().unwrap_or(0);
    let requests: Vec<(usize, LatticeBox)> = times.iter().map(|t| (*t, site.clone())).collect();
    let values = crate::par::try_map_replicas(replicas, |r| {
        let h0 = HeightField::new(Grid::zeros(required_window(kernel, &site, t_max)), 0);
        evolve_height_snapshots(&h0, kernel, noise, r, &requests)
            .map(|snaps| snaps.iter().map(|h| h.grid.data()[0]).collect::<Vec<f64>>())
    })?;
    let s2 = noise.model().variance;
    Ok(times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let col: Vec<f64> = values.iter().map(|v| v[i]).collect();
            let (var, stderr) = variance_stderr(&col);
            VarianceRow {
                t,
                var,
                stderr,
                theory: crate::process::variance_flat(kernel, s2, t),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{validate_kernel, KernelSpec};
    use crate::noise::NoiseFamily;
    use approx::assert_abs_diff_eq;

    fn lazy() -> KernelAnalysis {
        validate_kernel(&KernelSpec::lazy()).unwrap()
    }

    fn three_point() -> KernelAnalysis {
        validate_kernel(&KernelSpec::one_dim(&[(0, 0.5), (1, 0.25), (2, 0.25)])).unwrap()
    }

    #[test]
    fn lazy_v0_values() {
        let k = lazy();
        for m in [V0Method::Fourier, V0Method::KernelA] {
            assert_abs_diff_eq!(v0(&k, 1.0, 0, m).unwrap(), 4.0, epsilon = 1e-8);
            assert_abs_diff_eq!(v0(&k, 2.5, 0, m).unwrap(), 10.0, epsilon = 1e-8);
            for x in [1, 2, -3, 7] {
                assert_abs_diff_eq!(v0(&k, 1.0, x, m).unwrap(), 0.0, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn v0_routes_agree_and_sum() {
        let k = three_point();
        for x in -10..=10 {
            let f = v0(&k, 1.3, x, V0Method::Fourier).unwrap();
            let a = v0(&k, 1.3, x, V0Method::KernelA).unwrap();
            assert!((f - a).abs() < 1e-6, "x={x}: {f} vs {a}");
            assert_eq!(f, v0(&k, 1.3, -x, V0Method::Fourier).unwrap());
        }
        let total: f64 = (-60..=60).map(|x| v0(&k, 1.0, x, V0Method::Fourier).unwrap()).sum();
        assert!((total - 1.0 / k.variance()).abs() < 1e-6);
        assert!(v0(&k, 1.0, 60, V0Method::Fourier).unwrap().abs() < 1e-9);
    }

    #[test]
    fn v0_decays_exponentially() {
        let k = three_point();
        let xs: Vec<f64> = (2..=20).map(|x| x as f64).collect();
        let ys: Vec<f64> = (2..=20)
            .map(|x| v0(&k, 1.0, x, V0Method::Fourier).unwrap().abs().ln())
            .collect();
        assert!(crate::quad::ols_slope(&xs, &ys) < 0.0);
    }

    #[test]
    fn tail_variance_matches_partial_sums() {
        let k = three_point();
        let a1 = k.potential_kernel_a(1).unwrap();
        let mut stream = k.power_stream(Walk::Q);
        let mut partial = 0.0;
        for depth in 0..=30 {
            if depth > 0 {
                stream.advance();
            }
            partial += stream.prob(&[0]) - stream.prob(&[1]);
            let direct = 2.0 * (a1 - partial);
            let fourier = series_tail_variance(&k, 1.0, depth).unwrap();
            assert!((direct - fourier).abs() < 1e-8, "K={depth}");
        }
        assert!(series_tail_variance(&k, 1.0, 100).unwrap() < series_tail_variance(&k, 1.0, 50).unwrap());
    }

    #[test]
    fn depth_zero_sampler_is_noise_difference() {
        let k = lazy();
        let f = NoiseField::new(NoiseModel::gaussian(1.0), 3);
        let s = StationarySampler::truncated(&k, f, 0).unwrap();
        let eta = s.sample(&LatticeBox::interval(-3, 3), 9).unwrap();
        for x in -3..=3 {
            let want = f.sample(0, &[x], 9) - f.sample(0, &[x - 1], 9);
            assert_abs_diff_eq!(eta.at(0, &[x]), want, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(s.series_tail(), 4.0 - 2.0, epsilon = 1e-9);
    }

    #[test]
    fn tolerance_depth_is_minimal() {
        let k = three_point();
        let target = 0.05 * v0(&k, 1.0, 0, V0Method::Fourier).unwrap();
        let depth = depth_for_tolerance(&k, 1.0, 0.05).unwrap();
        assert!(series_tail_variance(&k, 1.0, depth).unwrap() <= target);
        assert!(series_tail_variance(&k, 1.0, depth - 1).unwrap() > target);
    }

    #[test]
    fn completion_is_deterministic_and_window_consistent() {
        let k = three_point();
        let f = NoiseField::new(NoiseModel::gaussian(1.0), 4);
        let s = StationarySampler::completed(&k, f, 16).unwrap();
        let a = s.sample(&LatticeBox::interval(0, 9), 2).unwrap();
        let b = s.sample(&LatticeBox::interval(0, 9), 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(s.omitted_variance(), 0.0);
    }

    #[test]
    fn completed_sampler_covariances() {
        let k = three_point();
        let f = NoiseField::new(NoiseModel::gaussian(1.0), 11);
        let s = StationarySampler::completed(&k, f, 8).unwrap();
        let mc = v0_monte_carlo(&s, 3, 20_000).unwrap();
        for (x, (est, se)) in mc.iter().enumerate() {
            let exact = v0(&k, 1.0, x as i64, V0Method::Fourier).unwrap();
            assert!((est - exact).abs() < 4.0 * se, "lag {x}: {est} vs {exact} (se {se})");
        }
    }

    #[test]
    fn harmonic_checks() {
        let k = lazy();
        let w = LatticeBox::interval(-5, 5);
        let wide = required_window(&k, &w, 1);
        assert_eq!(check_harmonic(&k, &Grid::constant(wide.clone(), 5.0), &w).unwrap(), 0.0);
        let lin = Grid::from_fn(wide.clone(), |x| x[0] as f64);
        assert_abs_diff_eq!(check_harmonic(&k, &lin, &w).unwrap(), 0.5);
        assert!(HarmonicFn::linear(&k, &[vec![1.0]], &[0.0], w.clone()).is_err());
        let centered = validate_kernel(&KernelSpec::one_dim(&[
            (-1, 1.0 / 3.0),
            (0, 1.0 / 3.0),
            (1, 1.0 / 3.0 + 1e-16),
        ]))
        .unwrap();
        let u = HarmonicFn::linear(&centered, &[vec![1.0]], &[0.5], w.clone()).unwrap();
        assert!(u.residual < 1e-12);
        let too_small = Grid::constant(w.clone(), 1.0);
        assert!(check_harmonic(&k, &too_small, &w).is_err());
    }

    #[test]
    fn harmonic_shift_is_pointwise() {
        let k = lazy();
        let f = NoiseField::new(NoiseModel::gaussian(1.0), 1);
        let s = StationarySampler::truncated(&k, f, 4).unwrap();
        let w = LatticeBox::interval(0, 6);
        let eta = s.sample(&w, 0).unwrap();
        let zero = HarmonicFn::constant(&k, &[0.0], w.clone()).unwrap();
        assert_eq!(add_harmonic(&eta, &zero).unwrap(), eta);
        let u = HarmonicFn::constant(&k, &[1.5], w.clone()).unwrap();
        let shifted = add_harmonic(&eta, &u).unwrap();
        for x in 0..=6 {
            assert_abs_diff_eq!(shifted.at(0, &[x]) - eta.at(0, &[x]), 1.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn chi_dimension_gate_and_depth_zero() {
        let f = NoiseField::new(NoiseModel::new(NoiseFamily::RademacherScaled, 1.0).unwrap(), 2);
        assert!(matches!(
            sample_chi(&lazy(), &f, 3, &LatticeBox::interval(0, 2), 0),
            Err(HarnessError::DimensionUnsupported { .. })
        ));
        let k3 = validate_kernel(&KernelSpec::product(3, &[(0, 0.5), (1, 0.5)])).unwrap();
        let w = LatticeBox::cube(3, 0, 1);
        let (chi, bound) = sample_chi(&k3, &f, 0, &w, 5).unwrap();
        for x in w.points() {
            assert_eq!(chi.at(&x), f.sample(0, &x, 5));
        }
        assert!(bound > 0.0);
    }

    #[test]
    fn exact_variance_small_t() {
        let k = lazy();
        // t = 0 returns the initial variance; pi0 covariance is invariant.
        assert_abs_diff_eq!(
            exact_increment_variance(&k, 1.0, |m| if m == 0 { 7.0 } else { 0.0 }, 0).unwrap(),
            7.0
        );
        let stat = exact_increment_variance(&k, 1.0, |m| v0(&k, 1.0, m, V0Method::Fourier).unwrap(), 5).unwrap();
        assert_abs_diff_eq!(stat, 4.0, epsilon = 1e-8);
        // iid start, one step: q(0) s0^2 + 2 s2 (1 - 0).
        let one = exact_increment_variance(&k, 1.0, |m| if m == 0 { 40.0 } else { 0.0 }, 1).unwrap();
        assert_abs_diff_eq!(one, 0.5 * 40.0 + 2.0, epsilon = 1e-12);
    }
}
