//! Replica statistics: sample covariance matrices with delete-one jackknife
//! standard errors, and a small bootstrap helper.

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

/// Sample covariance of `k` coordinates over replicas, with jackknife
/// standard errors. Matrices are row-major `k x k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovEstimate {
    pub replicas: usize,
    pub dim: usize,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl CovEstimate {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.cov[i * self.dim + j]
    }

    pub fn stderr_at(&self, i: usize, j: usize) -> f64 {
        self.stderr[i * self.dim + j]
    }
}

/// Covariance of the rows of `samples` (one row per replica, all rows of
/// equal length). Rows are reduced in the given order.
pub fn covariance_jackknife(samples: &[Vec<f64>]) -> CovEstimate {
    let r = samples.len();
    assert!(r >= 3, "need at least three replicas");
    let k = samples[0].len();
    let rf = r as f64;
    let mut mean = vec![0.0; k];
    for s in samples {
        assert_eq!(s.len(), k, "ragged sample rows");
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rf);

    // Centered sums; centering leaves covariances unchanged and keeps the
    // leave-one-out updates well conditioned.
    let centered: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| s.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    let mut s1 = vec![0.0; k];
    let mut s2 = vec![0.0; k * k];
    for y in &centered {
        for a in 0..k {
            s1[a] += y[a];
            for b in 0..k {
                s2[a * k + b] += y[a] * y[b];
            }
        }
    }
    let cov: Vec<f64> = (0..k * k)
        .map(|ab| (s2[ab] - s1[ab / k] * s1[ab % k] / rf) / (rf - 1.0))
        .collect();

    let n1 = rf - 1.0;
    let mut loo_sum = vec![0.0; k * k];
    let mut loo_sq = vec![0.0; k * k];
    for y in &centered {
        for a in 0..k {
            let sa = s1[a] - y[a];
            for b in 0..k {
                let sb = s1[b] - y[b];
                let c = (s2[a * k + b] - y[a] * y[b] - sa * sb / n1) / (n1 - 1.0);
                loo_sum[a * k + b] += c;
                loo_sq[a * k + b] += c * c;
            }
        }
    }
    let stderr = (0..k * k)
        .map(|ab| {
            let m = loo_sum[ab] / rf;
            let spread = (loo_sq[ab] / rf - m * m).max(0.0);
            (n1 * spread).sqrt()
        })
        .collect();
    CovEstimate {
        replicas: r,
        dim: k,
        mean,
        cov,
        stderr,
    }
}

/// Sample mean and its standard error.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Sample variance and its jackknife standard error.
pub fn variance_stderr(xs: &[f64]) -> (f64, f64) {
    let rows: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x]).collect();
    let est = covariance_jackknife(&rows);
    (est.cov[0], est.stderr[0])
}

/// Sample correlation of paired values and its jackknife standard error.
pub fn correlation_jackknife(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (u, v) = (x - mx, y - my);
        sx += u;
        sy += v;
        sxx += u * u;
        syy += v * v;
        sxy += u * v;
    }
    let corr = |m: f64, sx: f64, sy: f64, sxx: f64, syy: f64, sxy: f64| {
        let cxy = sxy - sx * sy / m;
        let cxx = sxx - sx * sx / m;
        let cyy = syy - sy * sy / m;
        cxy / (cxx * cyy).sqrt()
    };
    let full = corr(nf, sx, sy, sxx, syy, sxy);
    let mut loo = Vec::with_capacity(n);
    for (x, y) in xs.iter().zip(ys) {
        let (u, v) = (x - mx, y - my);
        loo.push(corr(nf - 1.0, sx - u, sy - v, sxx - u * u, syy - v * v, sxy - u * v));
    }
    let m = loo.iter().sum::<f64>() / nf;
    let spread = loo.iter().map(|c| (c - m).powi(2)).sum::<f64>();
    (full, ((nf - 1.0) / nf * spread).sqrt())
}

/// Bootstrap standard error of `stat` over `n` items: `resamples` draws of
/// `n` indices with replacement, from a generator seeded by `seed`.
pub fn bootstrap_stderr<F: Fn(&[usize]) -> f64>(n: usize, resamples: usize, seed: u64, stat: F) -> f64 {
    let mut rng = SmallRng::seed_from_u64(seed);
    let mut idx = vec![0usize; n];
    let values: Vec<f64> = (0..resamples)
        .map(|_| {
            idx.iter_mut().for_each(|i| *i = rng.random_range(0..n));
            stat(&idx)
        })
        .collect();
    let m = values.iter().sum::<f64>() / resamples as f64;
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (resamples as f64 - 1.0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Brute-force delete-one jackknife for comparison.
    fn naive_jackknife(samples: &[Vec<f64>], a: usize, b: usize) -> f64 {
        let r = samples.len();
        let cov_of = |rows: &[&Vec<f64>]| {
            let n = rows.len() as f64;
            let ma = rows.iter().map(|s| s[a]).sum::<f64>() / n;
            let mb = rows.iter().map(|s| s[b]).sum::<f64>() / n;
            rows.iter().map(|s| (s[a] - ma) * (s[b] - mb)).sum::<f64>() / (n - 1.0)
        };
        let loo: Vec<f64> = (0..r)
            .map(|skip| {
                let rows: Vec<&Vec<f64>> = samples
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != skip)
                    .map(|(_, s)| s)
                    .collect();
                cov_of(&rows)
            })
            .collect();
        let m = loo.iter().sum::<f64>() / r as f64;
        ((r as f64 - 1.0) / r as f64 * loo.iter().map(|c| (c - m).powi(2)).sum::<f64>()).sqrt()
    }

    fn toy() -> Vec<Vec<f64>> {
        let mut rng = SmallRng::seed_from_u64(8);
        (0..40)
            .map(|_| {
                let z: f64 = rng.random::<f64>() - 0.5;
                let w: f64 = rng.random::<f64>() - 0.5;
                vec![z + 10.0, z + w, 3.0 * w]
            })
            .collect()
    }

    #[test]
    fn jackknife_matches_brute_force() {
        let s = toy();
        let est = covariance_jackknife(&s);
        for a in 0..3 {
            for b in 0..3 {
                assert_relative_eq!(est.stderr_at(a, b), naive_jackknife(&s, a, b), max_relative = 1e-9);
                assert_eq!(est.at(a, b), est.at(b, a));
            }
        }
    }

    #[test]
    fn deterministic_rows_give_zero() {
        let s = vec![vec![1.0, 2.0]; 30];
        let est = covariance_jackknife(&s);
        assert!(est.cov.iter().all(|c| *c == 0.0));
        assert!(est.stderr.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn correlation_of_linear_pair() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| -2.0 * x + 1.0).collect();
        let (c, se) = correlation_jackknife(&xs, &ys);
        assert_relative_eq!(c, -1.0, epsilon = 1e-12);
        assert!(se < 1e-6);
    }

    #[test]
    fn bootstrap_of_mean() {
        let xs: Vec<f64> = (0..400).map(|i| ((i * 37) % 101) as f64).collect();
        let se = bootstrap_stderr(xs.len(), 400, 3, |idx| {
            idx.iter().map(|&i| xs[i]).sum::<f64>() / idx.len() as f64
        });
        let (_, analytic) = mean_stderr(&xs);
        assert!((se / analytic - 1.0).abs() < 0.15, "{se} vs {analytic}");
    }
}
