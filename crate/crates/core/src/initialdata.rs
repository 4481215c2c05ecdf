//! Initial increment laws for the one-dimensional fluctuation experiments,
//! with their analytic mean `mu0`, variance `sigma0^2` and summed covariance
//! `rho0`.

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::invariant::{v0, StationarySampler, V0Method, DEFAULT_DEPTH};
use crate::kernel::KernelAnalysis;
use crate::lattice::{Grid, LatticeBox};
use crate::noise::{NoiseFamily, NoiseField, NoiseModel};
use crate::process::{HeightField, IncrementField};

const INITIAL_TAG: u64 = 0x1_417;

/// JSON: `{"variant": "iid", "mean": 0.5, "dist": {"family": "gaussian", "variance": 1}}`,
/// `{"variant": "ma", "coefficients": [1, 1], "innovation": {...}}`,
/// `{"variant": "pi0"}`, `{"variant": "flat", "mean": 0.5}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum InitialIncrementLaw {
    /// `eta(x) = mean + zeta(x)`, `zeta` i.i.d.
    Iid {
        #[serde(default)]
        mean: f64,
        dist: NoiseModel,
    },
    /// `eta(x) = mean + sum_j c_j zeta(x + j)`, `zeta` i.i.d.
    Ma {
        #[serde(default)]
        mean: f64,
        coefficients: Vec<f64>,
        innovation: NoiseModel,
    },
    /// The stationary law built from the dynamics' own noise, shifted by `mean`.
    Pi0 {
        #[serde(default)]
        mean: f64,
        #[serde(default)]
        depth: Option<usize>,
        #[serde(default = "yes")]
        completion: bool,
    },
    /// `eta(x) = mean`.
    Flat { mean: f64 },
}

fn yes() -> bool {
    true
}

/// Whether a mixing condition is known to hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Certainty {
    Yes,
    No,
    Unknown,
}

/// Summable-mixing certificates for the two moment/mixing regimes:
/// `sum_j (j+1)^{2/delta} alpha(j) < inf` (finite-dimensional limits) and
/// `sum_j (j+1)^{10 + 132/delta} alpha(j) < inf` (process-level limits).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingCertificate {
    pub fdd_condition: Certainty,
    pub process_condition: Certainty,
    pub note: String,
}

impl InitialIncrementLaw {
    pub fn iid(mean: f64, dist: NoiseModel) -> Self {
        InitialIncrementLaw::Iid { mean, dist }
    }

    pub fn ma(mean: f64, coefficients: Vec<f64>, innovation: NoiseModel) -> Self {
        InitialIncrementLaw::Ma {
            mean,
            coefficients,
            innovation,
        }
    }

    pub fn pi0() -> Self {
        InitialIncrementLaw::Pi0 {
            mean: 0.0,
            depth: None,
            completion: true,
        }
    }

    pub fn flat(mean: f64) -> Self {
        InitialIncrementLaw::Flat { mean }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InitialIncrementLaw::Iid { .. } => "iid",
            InitialIncrementLaw::Ma { .. } => "ma",
            InitialIncrementLaw::Pi0 { .. } => "pi0",
            InitialIncrementLaw::Flat { .. } => "flat",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InitialIncrementLaw::Iid { dist, .. } => dist.validate(),
            InitialIncrementLaw::Ma {
                coefficients,
                innovation,
                ..
            } => {
                if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(HarnessError::InvalidConfig(
                        "moving-average coefficients must be finite and nonempty".into(),
                    ));
                }
                innovation.validate()
            }
            InitialIncrementLaw::Pi0 { .. } | InitialIncrementLaw::Flat { .. } => Ok(()),
        }
    }

    /// `mu0 = E eta(0)`.
    pub fn mu0(&self) -> f64 {
        match *self {
            InitialIncrementLaw::Iid { mean, .. }
            | InitialIncrementLaw::Ma { mean, .. }
            | InitialIncrementLaw::Pi0 { mean, .. }
            | InitialIncrementLaw::Flat { mean } => mean,
        }
    }

    /// `Cov(eta(0), eta(m))`. The stationary law needs the kernel and the
    /// dynamics' noise variance.
    pub fn covariance(&self, m: i64, kernel: &KernelAnalysis, noise_variance: f64) -> Result<f64> {
        Ok(match self {
            InitialIncrementLaw::Iid { dist, .. } => {
                if m == 0 {
                    dist.variance
                } else {
                    0.0
                }
            }
            InitialIncrementLaw::Ma {
                coefficients,
                innovation,
                ..
            } => {
                let lag = m.unsigned_abs() as usize;
                let s: f64 = coefficients
                    .iter()
                    .zip(coefficients.iter().skip(lag))
                    .map(|(a, b)| a * b)
                    .sum();
                innovation.variance * s
            }
            InitialIncrementLaw::Pi0 { .. } => v0(kernel, noise_variance, m, V0Method::Fourier)?,
            InitialIncrementLaw::Flat { .. } => 0.0,
        })
    }

    pub fn sigma0_sq(&self, kernel: &KernelAnalysis, noise_variance: f64) -> Result<f64> {
        self.covariance(0, kernel, noise_variance)
    }

    /// `rho0 = sum_x Cov(eta(0), eta(x))`.
    pub fn rho0(&self, kernel: &KernelAnalysis, noise_variance: f64) -> f64 {
        match self {
            InitialIncrementLaw::Iid { dist, .. } => dist.variance,
            InitialIncrementLaw::Ma {
                coefficients,
                innovation,
                ..
            } => innovation.variance * coefficients.iter().sum::<f64>().powi(2),
            InitialIncrementLaw::Pi0 { .. } => noise_variance / kernel.variance(),
            InitialIncrementLaw::Flat { .. } => 0.0,
        }
    }

    /// Fails unless the law's random ingredient has a finite moment of `order`.
    pub fn require_moment(&self, order: u32, dynamics: &NoiseModel) -> Result<()> {
        match self {
            InitialIncrementLaw::Iid { dist, .. } => dist.require_moment(order),
            InitialIncrementLaw::Ma { innovation, .. } => innovation.require_moment(order),
            InitialIncrementLaw::Pi0 { .. } => dynamics.require_moment(order),
            InitialIncrementLaw::Flat { .. } => Ok(()),
        }
    }

    /// Mixing certificates. I.i.d., moving-average and flat laws have
    /// `alpha(j) = 0` beyond a finite lag; the stationary law is certified
    /// only for Gaussian noise.
    pub fn mixing_certificate(&self, noise_family: NoiseFamily) -> MixingCertificate {
        let both = |c: Certainty, note: String| MixingCertificate {
            fdd_condition: c,
            process_condition: c,
            note,
        };
        match self {
            InitialIncrementLaw::Iid { .. } => both(Certainty::Yes, "independent: alpha(j) = 0 for j >= 1".into()),
            InitialIncrementLaw::Ma { coefficients, .. } => both(
                Certainty::Yes,
                format!(
                    "{}-dependent: alpha(j) = 0 for j > {}",
                    coefficients.len() - 1,
                    coefficients.len() - 1
                ),
            ),
            InitialIncrementLaw::Flat { .. } => both(Certainty::Yes, "deterministic".into()),
            InitialIncrementLaw::Pi0 { .. } => match noise_family {
                NoiseFamily::Gaussian | NoiseFamily::Zero => both(
                    Certainty::Yes,
                    "Gaussian stationary law with exponentially decaying covariance".into(),
                ),
                _ => both(
                    Certainty::Unknown,
                    format!(
                        "mixing rate of the stationary law is not known for {} noise",
                        noise_family.name()
                    ),
                ),
            },
        }
    }
}

/// A law bound to a kernel and the dynamics' noise, ready to sample.
pub struct InitialSampler<'a> {
    law: InitialIncrementLaw,
    noise: NoiseField,
    stationary: Option<StationarySampler<'a>>,
}

impl<'a> InitialSampler<'a> {
    pub fn new(law: InitialIncrementLaw, kernel: &'a KernelAnalysis, noise: NoiseField) -> Result<Self> {
        law.validate()?;
        if kernel.dim() != 1 {
            return Err(HarnessError::DimensionUnsupported {
                op: "initial increment laws",
                dim: kernel.dim(),
            });
        }
        let stationary = match &law {
            InitialIncrementLaw::Pi0 { depth, completion, .. } => {
                let depth = depth.unwrap_or(DEFAULT_DEPTH);
                Some(if *completion {
                    StationarySampler::completed(kernel, noise, depth)?
                } else {
                    StationarySampler::truncated(kernel, noise, depth)?
                })
            }
            _ => None,
        };
        Ok(InitialSampler { law, noise, stationary })
    }

    pub fn law(&self) -> &InitialIncrementLaw {
        &self.law
    }

    pub fn stationary(&self) -> Option<&StationarySampler<'a>> {
        self.stationary.as_ref()
    }

    /// Increments on `window` only.
    pub fn sample_increments(&self, window: &LatticeBox, replica: u64) -> Result<IncrementField> {
        let lo = window.lo()[0];
        let len = window.extent(0);
        let values = match &self.law {
            InitialIncrementLaw::Iid { mean, dist } => {
                let f = self.noise.derive(INITIAL_TAG).with_model(*dist);
                let mut v = vec![0.0; len];
                f.fill_row(0, &[], lo, replica, &mut v);
                v.iter_mut().for_each(|x| *x += mean);
                v
            }
            InitialIncrementLaw::Ma {
                mean,
                coefficients,
                innovation,
            } => {
                let f = self.noise.derive(INITIAL_TAG).with_model(*innovation);
                let m = coefficients.len();
                let mut z = vec![0.0; len + m - 1];
                f.fill_row(0, &[], lo, replica, &mut z);
                (0..len)
                    .map(|i| mean + coefficients.iter().zip(&z[i..i + m]).map(|(c, v)| c * v).sum::<f64>())
                    .collect()
            }
            InitialIncrementLaw::Pi0 { mean, .. } => {
                let s = self.stationary.as_ref().expect("stationary sampler");
                let mut eta = s.sample(window, replica)?;
                eta.comps[0].data_mut().iter_mut().for_each(|x| *x += mean);
                return Ok(eta);
            }
            InitialIncrementLaw::Flat { mean } => vec![*mean; len],
        };
        Ok(IncrementField::new(vec![Grid::from_vec(window.clone(), values)], 0))
    }

    /// Increments on `[lo, hi]` and heights on `[lo - 1, hi]` with `h0(0) = 0`.
    pub fn sample(&self, window: &LatticeBox, replica: u64) -> Result<(IncrementField, HeightField)> {
        let (lo, hi) = (window.lo()[0], window.hi()[0]);
        if !(lo - 1..=hi).contains(&0) {
            return Err(HarnessError::WindowTooSmall(format!(
                "height window [{}, {hi}] must contain the origin",
                lo - 1
            )));
        }
        let eta = self.sample_increments(window, replica)?;
        let h = eta.heights_1d(0);
        Ok((eta, h))
    }

    /// Heights covering `hbox` (which must contain the origin), `h0(0) = 0`.
    pub fn sample_heights(&self, hbox: &LatticeBox, replica: u64) -> Result<HeightField> {
        let window = LatticeBox::interval(hbox.lo()[0] + 1, hbox.hi()[0]);
        self.sample(&window, replica).map(|(_, h)| h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{validate_kernel, KernelSpec};
    use approx::assert_abs_diff_eq;

    fn lazy() -> KernelAnalysis {
        validate_kernel(&KernelSpec::lazy()).unwrap()
    }

    #[test]
    fn rho0_values() {
        let k = lazy();
        assert_eq!(
            InitialIncrementLaw::iid(0.0, NoiseModel::gaussian(2.0)).rho0(&k, 1.0),
            2.0
        );
        assert_eq!(
            InitialIncrementLaw::ma(0.0, vec![1.0, 1.0], NoiseModel::gaussian(1.0)).rho0(&k, 1.0),
            4.0
        );
        assert_abs_diff_eq!(InitialIncrementLaw::pi0().rho0(&k, 1.0), 4.0);
        assert_eq!(InitialIncrementLaw::flat(0.3).rho0(&k, 1.0), 0.0);
    }

    #[test]
    fn rho0_is_the_covariance_sum() {
        let k = validate_kernel(&KernelSpec::one_dim(&[(0, 0.5), (1, 0.25), (2, 0.25)])).unwrap();
        let laws = [
            InitialIncrementLaw::ma(0.0, vec![1.0, -0.5, 2.0], NoiseModel::gaussian(1.5)),
            InitialIncrementLaw::pi0(),
            InitialIncrementLaw::iid(1.0, NoiseModel::gaussian(0.7)),
        ];
        for law in laws {
            let total: f64 = (-60..=60).map(|m| law.covariance(m, &k, 1.2).unwrap()).sum();
            assert!((total - law.rho0(&k, 1.2)).abs() < 1e-6, "{}", law.name());
        }
    }

    #[test]
    fn json_round_trip() {
        let law: InitialIncrementLaw = serde_json::from_str(
            r#"{"variant":"ma","coefficients":[1,1],"innovation":{"family":"gaussian","variance":1}}"#,
        )
        .unwrap();
        assert_eq!(law.mu0(), 0.0);
        let law: InitialIncrementLaw = serde_json::from_str(r#"{"variant":"pi0"}"#).unwrap();
        assert_eq!(law, InitialIncrementLaw::pi0());
        let text = serde_json::to_string(&InitialIncrementLaw::flat(0.5)).unwrap();
        assert_eq!(
            serde_json::from_str::<InitialIncrementLaw>(&text).unwrap(),
            InitialIncrementLaw::flat(0.5)
        );
    }

    #[test]
    fn flat_heights_are_linear() {
        let k = lazy();
        let s = InitialSampler::new(
            InitialIncrementLaw::flat(0.75),
            &k,
            NoiseField::new(NoiseModel::zero(), 0),
        )
        .unwrap();
        let (_, h) = s.sample(&LatticeBox::interval(-10, 10), 0).unwrap();
        for x in -11..=10 {
            assert_abs_diff_eq!(h.at(&[x]), 0.75 * x as f64, epsilon = 1e-12);
        }
        assert!(matches!(
            s.sample(&LatticeBox::interval(3, 10), 0),
            Err(HarnessError::WindowTooSmall(_))
        ));
    }

    #[test]
    fn ma_window_consistency() {
        let k = lazy();
        let law = InitialIncrementLaw::ma(0.2, vec![1.0, 1.0], NoiseModel::gaussian(1.0));
        let s = InitialSampler::new(law, &k, NoiseField::new(NoiseModel::gaussian(1.0), 5)).unwrap();
        let a = s.sample_increments(&LatticeBox::interval(-5, 20), 3).unwrap();
        let b = s.sample_increments(&LatticeBox::interval(0, 4), 3).unwrap();
        for x in 0..=4 {
            assert_eq!(a.at(0, &[x]), b.at(0, &[x]));
        }
    }

    #[test]
    fn certificates() {
        let iid = InitialIncrementLaw::iid(0.0, NoiseModel::gaussian(1.0));
        assert_eq!(
            iid.mixing_certificate(NoiseFamily::Gaussian).fdd_condition,
            Certainty::Yes
        );
        let ma = InitialIncrementLaw::ma(0.0, vec![1.0; 4], NoiseModel::gaussian(1.0));
        let c = ma.mixing_certificate(NoiseFamily::RademacherScaled);
        assert_eq!((c.fdd_condition, c.process_condition), (Certainty::Yes, Certainty::Yes));
        let p = InitialIncrementLaw::pi0().mixing_certificate(NoiseFamily::RademacherScaled);
        assert_eq!(p.fdd_condition, Certainty::Unknown);
        assert_eq!(
            InitialIncrementLaw::pi0()
                .mixing_certificate(NoiseFamily::Gaussian)
                .process_condition,
            Certainty::Yes
        );
    }

    #[test]
    fn invalid_laws() {
        assert!(InitialIncrementLaw::ma(0.0, vec![], NoiseModel::gaussian(1.0))
            .validate()
            .is_err());
        let bad = InitialIncrementLaw::Iid {
            mean: 0.0,
            dist: NoiseModel {
                family: NoiseFamily::Gaussian,
                variance: -1.0,
            },
        };
        assert!(bad.validate().is_err());
    }
}
