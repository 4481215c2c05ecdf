//! JSON configurations, one per subcommand.

use harnesslab::fluct::FluctConfig;
use harnesslab::initialdata::InitialIncrementLaw;
use harnesslab::limitcov::SpaceTimePoint;
use harnesslab::{HarnessError, KernelSpec, NoiseModel};
use serde::{Deserialize, Serialize};

fn default_noise() -> NoiseModel {
    NoiseModel::gaussian(1.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    pub kernel: KernelSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub kernel: KernelSpec,
    #[serde(default = "default_noise")]
    pub noise: NoiseModel,
    /// One-dimensional runs only; higher dimensions start flat at zero.
    #[serde(default)]
    pub initial: Option<InitialIncrementLaw>,
    pub steps: usize,
    /// Evaluation box corners.
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
    #[serde(default = "one")]
    pub replicas: u64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantConfig {
    pub kernel: KernelSpec,
    #[serde(default = "default_noise")]
    pub noise: NoiseModel,
    #[serde(default = "five")]
    pub max_lag: i64,
    /// Monte Carlo replicas for the stationary sampler; 0 skips it.
    #[serde(default)]
    pub replicas: u64,
    #[serde(default)]
    pub depth: Option<usize>,
    #[serde(default = "yes")]
    pub completion: bool,
    #[serde(default)]
    pub seed: u64,
}

fn five() -> i64 {
    5
}

fn yes() -> bool {
    true
}

/// Macroscopic initial profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum Profile {
    Zero,
    Sin {
        #[serde(default = "unit")]
        amplitude: f64,
    },
    Linear {
        slope: f64,
    },
    /// Piecewise linear through `(xs, ys)`, constant outside.
    Table {
        xs: Vec<f64>,
        ys: Vec<f64>,
    },
}

fn unit() -> f64 {
    1.0
}

impl Profile {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if let Profile::Table { xs, ys } = self {
            if xs.len() != ys.len() || xs.is_empty() || xs.windows(2).any(|w| w[0] >= w[1]) {
                return Err(HarnessError::InvalidConfig(
                    "profile table needs matching, non-empty, increasing xs".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Sin { amplitude } => amplitude * x.sin(),
            Profile::Linear { slope } => slope * x,
            Profile::Table { xs, ys } => {
                let k = xs.partition_point(|v| *v <= x);
                if k == 0 {
                    ys[0]
                } else if k == xs.len() {
                    ys[k - 1]
                } else {
                    let w = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
                    ys[k - 1] + w * (ys[k] - ys[k - 1])
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HydroConfig {
    pub kernel: KernelSpec,
    #[serde(default = "default_noise")]
    pub noise: NoiseModel,
    pub profile: Profile,
    pub n_list: Vec<u64>,
    #[serde(default = "unit")]
    pub t: f64,
    #[serde(default = "pi")]
    pub r_box: f64,
    /// Largest acceptable final error under `--assert`.
    #[serde(default = "hydro_tol")]
    pub max_error: f64,
    #[serde(default)]
    pub seed: u64,
}

fn pi() -> f64 {
    std::f64::consts::PI
}

fn hydro_tol() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    pub kernel: KernelSpec,
    #[serde(default = "default_noise")]
    pub noise: NoiseModel,
    #[serde(default = "default_times")]
    pub times: Vec<usize>,
    #[serde(default = "thousand")]
    pub replicas: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_times() -> Vec<usize> {
    (6..=12).map(|e| 1usize << e).collect()
}

fn thousand() -> u64 {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsConfig {
    #[serde(default = "quarter")]
    pub sigma1_sq: f64,
    #[serde(default = "unit")]
    pub noise_variance: f64,
    /// Defaults to the stationary value `noise_variance / sigma1_sq`.
    #[serde(default)]
    pub rho0: Option<f64>,
    #[serde(default = "default_points")]
    pub points: Vec<SpaceTimePoint>,
}

fn quarter() -> f64 {
    0.25
}

fn default_points() -> Vec<SpaceTimePoint> {
    let mut v = Vec::new();
    for t in [0.25, 0.5, 1.0] {
        for r in [-1.0, 0.0, 1.0] {
            v.push(SpaceTimePoint::new(t, r));
        }
    }
    v
}

impl Default for LimitsConfig {
    fn default() -> Self {
        LimitsConfig {
            sigma1_sq: quarter(),
            noise_variance: unit(),
            rho0: None,
            points: default_points(),
        }
    }
}

/// Seed precedence: `--seed` when given, otherwise the config's own.
pub trait Seeded {
    fn set_seed(&mut self, seed: u64);
}

macro_rules! seeded {
    ($($t:ty),*) => {
        $(impl Seeded for $t {
            fn set_seed(&mut self, seed: u64) {
                self.seed = seed;
            }
        })*
    };
}

seeded!(SimulateConfig, InvariantConfig, HydroConfig, ScalingConfig, FluctConfig);
