//! Driving noise `xi_t(x)`: mean-zero i.i.d. families with exact moments and
//! counter-based sampling keyed by `(seed, t, x, replica)`.
//!
//! Sites are grouped in blocks of 64 along the last axis. Each block owns a
//! small PRNG seeded from a hash of its key, so any site can be regenerated
//! on demand and whole rows are filled at generator speed.

use rand::rngs::SmallRng;
use rand::{Rng, RngCore, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

const BLOCK: i64 = 64;

/// Probability of the high value in the asymmetric two-point family.
pub const TWO_POINT_P_HIGH: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseFamily {
    Gaussian,
    #[serde(alias = "rademacher")]
    RademacherScaled,
    #[serde(alias = "uniform")]
    UniformCentered,
    #[serde(alias = "two-point")]
    TwoPointAsymmetric,
    /// `xi = 0`; for deterministic runs.
    Zero,
}

impl NoiseFamily {
    pub fn name(self) -> &'static str {
        match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::RademacherScaled => "rademacher-scaled",
            NoiseFamily::UniformCentered => "uniform-centered",
            NoiseFamily::TwoPointAsymmetric => "two-point-asymmetric",
            NoiseFamily::Zero => "zero",
        }
    }

    pub fn is_symmetric(self) -> bool {
        !matches!(self, NoiseFamily::TwoPointAsymmetric)
    }
}

/// A noise law: family plus variance. JSON: `{"family": "gaussian", "variance": 1.0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub family: NoiseFamily,
    #[serde(default)]
    pub variance: f64,
}

impl NoiseModel {
    pub fn new(family: NoiseFamily, variance: f64) -> Result<Self> {
        let m = NoiseModel { family, variance };
        m.validate()?;
        Ok(m)
    }

    pub fn gaussian(variance: f64) -> Self {
        NoiseModel::new(NoiseFamily::Gaussian, variance).expect("positive variance")
    }

    pub fn zero() -> Self {
        NoiseModel {
            family: NoiseFamily::Zero,
            variance: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            NoiseFamily::Zero if self.variance == 0.0 => Ok(()),
            NoiseFamily::Zero => Err(HarnessError::InvalidConfig("zero noise must have variance 0".into())),
            _ if self.variance.is_finite() && self.variance > 0.0 => Ok(()),
            _ => Err(HarnessError::InvalidConfig(format!(
                "noise variance must be positive and finite, got {}",
                self.variance
            ))),
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    /// The two values `(high, -low)` of the asymmetric two-point law.
    fn two_point_values(&self) -> (f64, f64) {
        let p = TWO_POINT_P_HIGH;
        let low = self.sd() * (p / (1.0 - p)).sqrt();
        let high = low * (1.0 - p) / p;
        (high, -low)
    }

    /// Exact `E[xi^order]` for even `order` in `2..=12` (the mean is zero,
    /// so these are central moments).
    pub fn moment(&self, order: u32) -> Result<f64> {
        if !(2..=12).contains(&order) || order % 2 == 1 {
            return Err(HarnessError::UnsupportedOrder(order));
        }
        let s2 = self.variance;
        let m = order / 2;
        Ok(match self.family {
            NoiseFamily::Gaussian => {
                let double_factorial: f64 = (1..=m).map(|j| (2 * j - 1) as f64).product();
                s2.powi(m as i32) * double_factorial
            }
            NoiseFamily::RademacherScaled => s2.powi(m as i32),
            NoiseFamily::UniformCentered => {
                let a2 = 3.0 * s2;
                a2.powi(m as i32) / (order as f64 + 1.0)
            }
            NoiseFamily::TwoPointAsymmetric => {
                let (hi, lo) = self.two_point_values();
                let p = TWO_POINT_P_HIGH;
                p * hi.powi(order as i32) + (1.0 - p) * lo.powi(order as i32)
            }
            NoiseFamily::Zero => 0.0,
        })
    }

    /// Fails unless the moment of `order` is finite. Every supported family
    /// has all moments, so this only checks the order is meaningful.
    pub fn require_moment(&self, order: u32) -> Result<()> {
        self.moment(order.max(2) + order % 2).map(|_| ())
    }
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a word sequence.
pub(crate) fn hash_words(seed: u64, words: impl IntoIterator<Item = u64>) -> u64 {
    let mut h = splitmix(seed);
    for w in words {
        h = splitmix(h ^ w.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    }
    h
}

/// A realization of the noise field, addressed by `(t, x, replica)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseField {
    model: NoiseModel,
    seed: u64,
}

impl NoiseField {
    pub fn new(model: NoiseModel, seed: u64) -> Self {
        NoiseField { model, seed }
    }

    pub fn model(&self) -> &NoiseModel {
        &self.model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent field for another purpose (initial data, auxiliary
    /// Gaussian completions), same law unless replaced by `with_model`.
    pub fn derive(&self, tag: u64) -> NoiseField {
        NoiseField {
            model: self.model,
            seed: hash_words(self.seed, [0x5EED_u64, tag]),
        }
    }

    pub fn with_model(&self, model: NoiseModel) -> NoiseField {
        NoiseField { model, seed: self.seed }
    }

    fn block_rng(&self, t: i64, prefix: &[i64], block: i64, replica: u64) -> SmallRng {
        let words = std::iter::once(t as u64)
            .chain(prefix.iter().map(|&c| c as u64))
            .chain([block as u64, replica, prefix.len() as u64]);
        SmallRng::seed_from_u64(hash_words(self.seed, words))
    }

    /// Write the first `out.len()` values of a block.
    fn block_values(&self, rng: &mut SmallRng, out: &mut [f64]) {
        let sd = self.model.sd();
        match self.model.family {
            NoiseFamily::Gaussian => {
                for v in out.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = sd * z;
                }
            }
            NoiseFamily::RademacherScaled => {
                let bits = rng.next_u64();
                for (i, v) in out.iter_mut().enumerate() {
                    *v = if (bits >> i) & 1 == 1 { sd } else { -sd };
                }
            }
            NoiseFamily::UniformCentered => {
                let a = 3f64.sqrt() * sd;
                for v in out.iter_mut() {
                    let u: f64 = rng.random();
                    *v = (2.0 * u - 1.0) * a;
                }
            }
            NoiseFamily::TwoPointAsymmetric => {
                let (hi, lo) = self.model.two_point_values();
                for v in out.iter_mut() {
                    let u: f64 = rng.random();
                    *v = if u < TWO_POINT_P_HIGH { hi } else { lo };
                }
            }
            NoiseFamily::Zero => out.fill(0.0),
        }
    }

    /// `xi_t(x)` for replica `replica`.
    pub fn sample(&self, t: i64, x: &[i64], replica: u64) -> f64 {
        if self.model.family == NoiseFamily::Zero {
            return 0.0;
        }
        let (prefix, last) = x.split_at(x.len() - 1);
        let block = last[0].div_euclid(BLOCK);
        let pos = last[0].rem_euclid(BLOCK) as usize;
        let mut rng = self.block_rng(t, prefix, block, replica);
        let mut buf = [0.0f64; BLOCK as usize];
        self.block_values(&mut rng, &mut buf[..=pos]);
        buf[pos]
    }

    /// Fill `out` with `xi_t(prefix, lo + i)` for `i in 0..out.len()`.
    pub fn fill_row(&self, t: i64, prefix: &[i64], lo: i64, replica: u64, out: &mut [f64]) {
        if self.model.family == NoiseFamily::Zero {
            out.fill(0.0);
            return;
        }
        let hi = lo + out.len() as i64;
        let mut buf = [0.0f64; BLOCK as usize];
        let mut x = lo;
        while x < hi {
            let block = x.div_euclid(BLOCK);
            let start = block * BLOCK;
            let end = (start + BLOCK).min(hi);
            let take = (end - start) as usize;
            let mut rng = self.block_rng(t, prefix, block, replica);
            self.block_values(&mut rng, &mut buf[..take]);
            let from = (x - start) as usize;
            let dst = (x - lo) as usize;
            out[dst..dst + take - from].copy_from_slice(&buf[from..take]);
            x = end;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn all_families() -> [NoiseModel; 4] {
        [
            NoiseModel::new(NoiseFamily::Gaussian, 1.7).unwrap(),
            NoiseModel::new(NoiseFamily::RademacherScaled, 1.0).unwrap(),
            NoiseModel::new(NoiseFamily::UniformCentered, 0.6).unwrap(),
            NoiseModel::new(NoiseFamily::TwoPointAsymmetric, 2.0).unwrap(),
        ]
    }

    #[test]
    fn exact_moments() {
        let g = NoiseModel::gaussian(2.0);
        assert_relative_eq!(g.moment(4).unwrap(), 12.0);
        assert_relative_eq!(g.moment(12).unwrap(), 64.0 * 10395.0);
        let r = NoiseModel::new(NoiseFamily::RademacherScaled, 1.0).unwrap();
        assert_eq!(r.moment(12).unwrap(), 1.0);
        let u = NoiseModel::new(NoiseFamily::UniformCentered, 1.0).unwrap();
        assert_relative_eq!(u.moment(4).unwrap(), 9.0 / 5.0, epsilon = 1e-15);
        for m in all_families() {
            assert_relative_eq!(m.moment(2).unwrap(), m.variance, epsilon = 1e-14);
        }
        let (hi, lo) = all_families()[3].two_point_values();
        assert_relative_eq!(
            TWO_POINT_P_HIGH * hi + (1.0 - TWO_POINT_P_HIGH) * lo,
            0.0,
            epsilon = 1e-15
        );
        assert!(matches!(g.moment(3), Err(HarnessError::UnsupportedOrder(3))));
        assert!(matches!(g.moment(14), Err(HarnessError::UnsupportedOrder(14))));
    }

    #[test]
    fn validation() {
        assert!(NoiseModel::new(NoiseFamily::Gaussian, 0.0).is_err());
        assert!(NoiseModel::new(NoiseFamily::Gaussian, f64::NAN).is_err());
        assert!(NoiseModel::new(NoiseFamily::Zero, 0.0).is_ok());
        let m: NoiseModel = serde_json::from_str(r#"{"family":"rademacher","variance":1}"#).unwrap();
        assert_eq!(m.family, NoiseFamily::RademacherScaled);
    }

    #[test]
    fn deterministic_and_row_consistent() {
        for m in all_families() {
            let f = NoiseField::new(m, 99);
            assert_eq!(f.sample(3, &[-70], 4), f.sample(3, &[-70], 4));
            assert_ne!(f.sample(3, &[-70], 4).to_bits(), f.sample(3, &[-70], 5).to_bits() ^ 1);
            let mut row = vec![0.0; 200];
            f.fill_row(-2, &[], -100, 7, &mut row);
            for (i, v) in row.iter().enumerate() {
                assert_eq!(*v, f.sample(-2, &[-100 + i as i64], 7));
            }
            let mut row2 = vec![0.0; 5];
            f.fill_row(4, &[1, -3], 60, 0, &mut row2);
            assert_eq!(row2[4], f.sample(4, &[1, -3, 64], 0));
        }
    }

    #[test]
    fn rademacher_values() {
        let f = NoiseField::new(NoiseModel::new(NoiseFamily::RademacherScaled, 1.0).unwrap(), 1);
        let mut row = vec![0.0; 1000];
        f.fill_row(0, &[], 0, 0, &mut row);
        assert!(row.iter().all(|v| *v == 1.0 || *v == -1.0));
        assert!(row.contains(&1.0) && row.contains(&-1.0));
    }

    #[test]
    fn keys_differ_across_axes() {
        let f = NoiseField::new(NoiseModel::gaussian(1.0), 5);
        let a = f.sample(1, &[2, 3], 0);
        assert_ne!(a, f.sample(2, &[1, 3], 0));
        assert_ne!(a, f.sample(1, &[3, 2], 0));
        assert_ne!(f.sample(0, &[0], 0), f.derive(1).sample(0, &[0], 0));
    }

    #[test]
    fn empirical_moments_match() {
        let n = 1_000_000usize;
        for m in all_families() {
            let f = NoiseField::new(m, 2024);
            let mut row = vec![0.0; n];
            f.fill_row(0, &[], 0, 0, &mut row);
            let m2 = row.iter().map(|v| v * v).sum::<f64>() / n as f64;
            let m4 = row.iter().map(|v| v.powi(4)).sum::<f64>() / n as f64;
            let (e2, e4, e8) = (m.moment(2).unwrap(), m.moment(4).unwrap(), m.moment(8).unwrap());
            let se2 = ((e4 - e2 * e2) / n as f64).sqrt();
            let se4 = ((e8 - e4 * e4) / n as f64).sqrt();
            assert!(
                (m2 - e2).abs() <= 3.0 * se2.max(1e-15),
                "{:?} m2 {m2} vs {e2}",
                m.family
            );
            assert!(
                (m4 - e4).abs() <= 3.0 * se4.max(1e-15),
                "{:?} m4 {m4} vs {e4}",
                m.family
            );
        }
    }
}
