//! The one-dimensional fluctuation experiment.
//!
//! For scale `n` and a macroscopic point `(t, r)` the field is
//! `Y_n(t, r) = n^{-1/4} (h_T(y) - mu0 r sqrt(n))` with `T = floor(n t)` and
//! `y = floor(r sqrt(n)) + floor(n t b)`, `b = -mean`. All points of a
//! replica are read off one trajectory.

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::initialdata::{InitialIncrementLaw, InitialSampler};
use crate::invariant::{flat_variance_probe, VarianceRow};
use crate::kernel::{KernelAnalysis, KernelSpec, Walk};
use crate::lattice::{Grid, LatticeBox};
use crate::limitcov::{z_cov, LimitParams, SpaceTimePoint};
use crate::noise::{NoiseField, NoiseModel};
use crate::par::try_map_replicas;
use crate::process::{evolve_height_snapshots, noise_dot, required_window, variance_flat, HeightField};
use crate::quad::ols_slope;
use crate::stats::{covariance_jackknife, CovEstimate};

/// Largest `n` for which [`FluctRun::decompose`] builds exact power tables.
pub const DECOMPOSE_MAX_N: u64 = 256;

fn default_max_time() -> f64 {
    4.0
}

fn default_max_space() -> f64 {
    8.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctConfig {
    pub kernel: KernelSpec,
    pub noise: NoiseModel,
    pub initial: InitialIncrementLaw,
    pub n: u64,
    pub points: Vec<SpaceTimePoint>,
    pub replicas: u64,
    #[serde(default)]
    pub seed: u64,
    /// Bounds on `t` and `|r|` of the evaluation points.
    #[serde(default = "default_max_time")]
    pub max_time: f64,
    #[serde(default = "default_max_space")]
    pub max_space: f64,
}

impl FluctConfig {
    /// Checks that do not need the kernel analysis.
    pub fn validate(&self) -> Result<()> {
        if self.kernel.dim != 1 {
            return Err(HarnessError::DimensionUnsupported {
                op: "fluctuation field",
                dim: self.kernel.dim,
            });
        }
        if self.n < 16 {
            return Err(HarnessError::InvalidConfig(format!("n = {} is below 16", self.n)));
        }
        if self.points.is_empty() {
            return Err(HarnessError::InvalidConfig("no evaluation points".into()));
        }
        for p in &self.points {
            if !(p.t >= 0.0 && p.t <= self.max_time && p.r.abs() <= self.max_space && p.r.is_finite()) {
                return Err(HarnessError::InvalidConfig(format!(
                    "point (t={}, r={}) outside [0, {}] x [-{}, {}]",
                    p.t, p.r, self.max_time, self.max_space, self.max_space
                )));
            }
        }
        self.noise.validate()?;
        self.initial.validate()
    }
}

/// `(T, y)` lattice coordinates of a macroscopic point.
pub fn lattice_point(n: u64, b: f64, p: SpaceTimePoint) -> (usize, i64) {
    let nf = n as f64;
    let steps = (nf * p.t).floor() as usize;
    let site = (p.r * nf.sqrt()).floor() as i64 + (nf * p.t * b).floor() as i64;
    (steps, site)
}

/// The pieces of `Y_n = mu0 H + F + S` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Decomposition {
    pub mu0: f64,
    pub h_bar: f64,
    pub f_bar: f64,
    pub s_bar: f64,
    /// The field value from direct evolution.
    pub y: f64,
}

impl Decomposition {
    /// `|mu0 H + F + S - Y|`.
    pub fn residual(&self) -> f64 {
        (self.mu0 * self.h_bar + self.f_bar + self.s_bar - self.y).abs()
    }
}

/// A validated configuration bound to its kernel and samplers.
pub struct FluctRun<'a> {
    config: &'a FluctConfig,
    kernel: &'a KernelAnalysis,
    noise: NoiseField,
    initial: InitialSampler<'a>,
    lattice: Vec<(usize, i64)>,
    hbox: LatticeBox,
}

impl<'a> FluctRun<'a> {
    pub fn new(config: &'a FluctConfig, kernel: &'a KernelAnalysis) -> Result<Self> {
        config.validate()?;
        if kernel.spec() != &config.kernel {
            return Err(HarnessError::InvalidConfig(
                "kernel analysis does not match the config".into(),
            ));
        }
        let noise = NoiseField::new(config.noise, config.seed);
        let initial = InitialSampler::new(config.initial.clone(), kernel, noise)?;
        let b = kernel.drift();
        let lattice: Vec<(usize, i64)> = config.points.iter().map(|p| lattice_point(config.n, b, *p)).collect();
        let mut hbox = LatticeBox::interval(-1, 0);
        for &(steps, site) in &lattice {
            hbox = hbox.hull(&required_window(kernel, &LatticeBox::point(&[site]), steps));
        }
        Ok(FluctRun {
            config,
            kernel,
            noise,
            initial,
            lattice,
            hbox,
        })
    }

    pub fn config(&self) -> &FluctConfig {
        self.config
    }

    /// `(T, y)` for every evaluation point.
    pub fn lattice_points(&self) -> &[(usize, i64)] {
        &self.lattice
    }

    /// Window of initial heights that covers every light cone.
    pub fn initial_window(&self) -> &LatticeBox {
        &self.hbox
    }

    /// Limit parameters implied by the kernel, noise and initial law.
    pub fn limit_params(&self) -> Result<LimitParams> {
        let s2 = self.config.noise.variance;
        LimitParams::new(self.kernel.variance(), s2, self.config.initial.rho0(self.kernel, s2))
    }

    fn scale(&self) -> f64 {
        (self.config.n as f64).powf(-0.25)
    }

    fn heights(&self, replica: u64) -> Result<(HeightField, Vec<f64>)> {
        let h0 = self.initial.sample_heights(&self.hbox, replica)?;
        let requests: Vec<(usize, LatticeBox)> = self
            .lattice
            .iter()
            .map(|&(steps, site)| (steps, LatticeBox::point(&[site])))
            .collect();
        let snaps = evolve_height_snapshots(&h0, self.kernel, &self.noise, replica, &requests)?;
        let mu0 = self.config.initial.mu0();
        let sqrt_n = (self.config.n as f64).sqrt();
        let ys = snaps
            .iter()
            .zip(&self.config.points)
            .map(|(h, p)| self.scale() * (h.grid.data()[0] - mu0 * p.r * sqrt_n))
            .collect();
        Ok((h0, ys))
    }

    /// `Y_n` at every point for one replica.
    pub fn eval_field(&self, replica: u64) -> Result<Vec<f64>> {
        self.heights(replica).map(|(_, ys)| ys)
    }

    /// Exact split of `Y_n` at point `index` into its mean, noise and
    /// initial-data parts.
    pub fn decompose(&self, replica: u64, index: usize) -> Result<Decomposition> {
        if self.config.n > DECOMPOSE_MAX_N {
            return Err(HarnessError::ResourceLimit {
                requested: self.config.n as usize,
                cap: DECOMPOSE_MAX_N as usize,
            });
        }
        let point = self.config.points[index];
        let (steps, site) = self.lattice[index];
        let (h0, ys) = self.heights(replica)?;
        let scale = self.scale();
        let mu0 = self.config.initial.mu0();

        let mean_x = site as f64 + self.kernel.mean()[0] * steps as f64;
        let h_bar = scale * (mean_x - point.r * (self.config.n as f64).sqrt());

        let mut f = 0.0;
        for k in 1..=steps {
            let pk = self.kernel.convolve_power(Walk::P, steps - k)?;
            f += noise_dot(&self.noise, k as i64, pk.grid(), &[site], replica);
        }

        // X_T = site + (sum of T steps); weights are P(X_T >= i) for i > 0
        // and -P(X_T < i) for i <= 0.
        let pt = self.kernel.convolve_power(Walk::P, steps)?;
        let (lo, hi) = (site + pt.bounds().lo()[0], site + pt.bounds().hi()[0]);
        let probs = pt.grid().data();
        let mut at_least = vec![0.0; probs.len() + 1];
        for j in (0..probs.len()).rev() {
            at_least[j] = at_least[j + 1] + probs[j];
        }
        let below = |i: i64| -> f64 {
            let j = (i - lo).clamp(0, probs.len() as i64) as usize;
            1.0 - at_least[j]
        };
        let at_or_above = |i: i64| -> f64 {
            let j = (i - lo).clamp(0, probs.len() as i64) as usize;
            at_least[j]
        };
        let mut s = 0.0;
        for i in (lo + 1).min(1)..=hi.max(0) {
            let w = if i > 0 { at_or_above(i) } else { -below(i) };
            if w != 0.0 {
                s += (h0.at(&[i]) - h0.at(&[i - 1]) - mu0) * w;
            }
        }

        Ok(Decomposition {
            mu0,
            h_bar,
            f_bar: scale * f,
            s_bar: scale * s,
            y: ys[index],
        })
    }

    /// Sample covariance of the field across replicas with jackknife errors.
    pub fn estimate_cov(&self) -> Result<CovEstimate> {
        if self.config.replicas < 30 {
            return Err(HarnessError::InvalidConfig(format!(
                "{} replicas; covariance estimates need at least 30",
                self.config.replicas
            )));
        }
        self.config.initial.require_moment(4, &self.config.noise)?;
        let samples = try_map_replicas(self.config.replicas, |r| self.eval_field(r))?;
        Ok(covariance_jackknife(&samples))
    }
}

/// One matrix entry of a comparison against the limit covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompareEntry {
    pub i: usize,
    pub j: usize,
    pub est: f64,
    pub stderr: f64,
    pub theory: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    /// Upper triangle, row by row.
    pub entries: Vec<CompareEntry>,
    pub max_abs_z: f64,
    /// Entries with `|z| > threshold`.
    pub flagged: usize,
    pub threshold: f64,
}

impl CompareReport {
    pub fn passed(&self) -> bool {
        self.flagged == 0
    }
}

/// z-scores of `est` against `z_cov` at `points`.
pub fn compare(est: &CovEstimate, params: &LimitParams, points: &[SpaceTimePoint]) -> CompareReport {
    assert_eq!(est.dim, points.len());
    let threshold = 3.0;
    let mut entries = Vec::new();
    for i in 0..est.dim {
        for j in i..est.dim {
            let theory = z_cov(params, points[i], points[j]);
            let stderr = est.stderr_at(i, j);
            let diff = est.at(i, j) - theory;
            let z = if stderr > 0.0 {
                diff / stderr
            } else if diff == 0.0 {
                0.0
            } else {
                diff.signum() * f64::INFINITY
            };
            entries.push(CompareEntry {
                i,
                j,
                est: est.at(i, j),
                stderr,
                theory,
                z,
            });
        }
    }
    let max_abs_z = entries.iter().map(|e| e.z.abs()).fold(0.0, f64::max);
    let flagged = entries.iter().filter(|e| e.z.abs() > threshold).count();
    CompareReport {
        entries,
        max_abs_z,
        flagged,
        threshold,
    }
}

/// Sup error of the rescaled height against the transported profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HydroRow {
    pub n: u64,
    pub sup_error: f64,
}

/// Number of macroscopic sample points in [`hydro_check`].
pub const HYDRO_POINTS: usize = 64;

/// Starts from `h0(x) = floor(n u0(x / n))`, runs `floor(n t)` steps with
/// replica 0 and compares `h(floor(n x)) / n` with `u0(x + t mean)` on 64
/// evenly spaced `x` in `[-r_box, r_box]`.
pub fn hydro_check<U>(
    kernel: &KernelAnalysis,
    noise: &NoiseField,
    u0: U,
    n_list: &[u64],
    t: f64,
    r_box: f64,
) -> Result<Vec<HydroRow>>
where
    U: Fn(f64) -> f64,
{
    if kernel.dim() != 1 {
        return Err(HarnessError::DimensionUnsupported {
            op: "hydro_check",
            dim: kernel.dim(),
        });
    }
    if !(t >= 0.0 && r_box > 0.0) {
        return Err(HarnessError::InvalidConfig(format!("t = {t}, r_box = {r_box}")));
    }
    let xs: Vec<f64> = (0..HYDRO_POINTS)
        .map(|j| -r_box + 2.0 * r_box * j as f64 / (HYDRO_POINTS - 1) as f64)
        .collect();
    let mean = kernel.mean()[0];
    n_list
        .iter()
        .map(|&n| {
            let nf = n as f64;
            let steps = (nf * t).floor() as usize;
            let sites: Vec<i64> = xs.iter().map(|x| (nf * x).floor() as i64).collect();
            let eval = LatticeBox::interval(sites[0], sites[HYDRO_POINTS - 1]);
            let window = required_window(kernel, &eval, steps);
            let h0 = HeightField::new(Grid::from_fn(window, |x| (nf * u0(x[0] as f64 / nf)).floor()), 0);
            let h = evolve_height_snapshots(&h0, kernel, noise, 0, &[(steps, eval)])?
                .pop()
                .unwrap();
            let sup_error = xs
                .iter()
                .zip(&sites)
                .map(|(x, s)| (h.at(&[*s]) / nf - u0(x + t * mean)).abs())
                .fold(0.0, f64::max);
            Ok(HydroRow { n, sup_error })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    /// `(t, Var h_t(0))` from the exact flat-start formula.
    pub exact: Vec<(usize, f64)>,
    /// Half the log-log slope of the exact variance, i.e. the height exponent.
    pub exact_slope: f64,
    /// Monte Carlo rows, empty when no replicas were requested.
    pub rows: Vec<VarianceRow>,
    pub mc_slope: Option<f64>,
}

/// Log-log slope of `Var h_t(0)` from a flat start, exact and (for
/// `replicas > 0`) by simulation.
pub fn variance_scaling(
    kernel: &KernelAnalysis,
    noise: &NoiseField,
    times: &[usize],
    replicas: u64,
) -> Result<ScalingReport> {
    if times.len() < 2 || times.contains(&0) {
        return Err(HarnessError::InvalidConfig("need at least two positive times".into()));
    }
    let s2 = noise.model().variance;
    let exact: Vec<(usize, f64)> = times.iter().map(|&t| (t, variance_flat(kernel, s2, t))).collect();
    let logt: Vec<f64> = times.iter().map(|&t| (t as f64).ln()).collect();
    let slope = |vars: &[f64]| ols_slope(&logt, &vars.iter().map(|v| v.ln()).collect::<Vec<_>>());
    let exact_slope = slope(&exact.iter().map(|e| e.1).collect::<Vec<_>>());
    let (rows, mc_slope) = if replicas > 0 {
        let rows = flat_variance_probe(kernel, noise, times, replicas)?;
        let s = slope(&rows.iter().map(|r| r.var).collect::<Vec<_>>());
        (rows, Some(s))
    } else {
        (Vec::new(), None)
    };
    Ok(ScalingReport {
        exact,
        exact_slope,
        rows,
        mc_slope,
    })
}
