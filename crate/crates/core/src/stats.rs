//! Mergeable streaming statistics and the distributional tests used to turn
//! limit theorems into pass/fail checks.

use std::borrow::Borrow;

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::cadlag::CadlagPath;
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::walks::Pmf;

/// Welford accumulator with Chan's pairwise merge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentAccumulator {
    count: u64,
    mean: f64,
    m2: f64,
    min: f64,
    max: f64,
}

impl Default for MomentAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentSummary {
    pub count: u64,
    pub mean: f64,
    /// Sample variance with divisor `count − 1` (0 for a single sample).
    pub variance: f64,
    /// Standard error of the mean.
    pub stderr: f64,
    pub min: f64,
    pub max: f64,
}

impl MomentAccumulator {
    pub fn new() -> Self {
        MomentAccumulator {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    pub fn update(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n_a = self.count as f64;
        let n_b = other.count as f64;
        let n = n_a + n_b;
        let delta = other.mean - self.mean;
        self.mean += delta * n_b / n;
        self.m2 += other.m2 + delta * delta * n_a * n_b / n;
        self.count += other.count;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn finalize(&self) -> Result<MomentSummary> {
        if self.count == 0 {
            return Err(Error::InvalidArgument("no samples accumulated".into()));
        }
        let variance = if self.count > 1 {
            self.m2 / (self.count - 1) as f64
        } else {
            0.0
        };
        Ok(MomentSummary {
            count: self.count,
            mean: self.mean,
            variance,
            stderr: (variance / self.count as f64).sqrt(),
            min: self.min,
            max: self.max,
        })
    }
}

impl FromIterator<f64> for MomentAccumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = MomentAccumulator::new();
        iter.into_iter().for_each(|x| acc.update(x));
        acc
    }
}

/// Co-moment accumulator for paired samples `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairAccumulator {
    count: u64,
    mean_u: f64,
    mean_v: f64,
    co_m2: f64,
}

impl PairAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, u: f64, v: f64) {
        self.count += 1;
        let n = self.count as f64;
        let du = u - self.mean_u;
        self.mean_u += du / n;
        self.mean_v += (v - self.mean_v) / n;
        self.co_m2 += du * (v - self.mean_v);
    }

    pub fn merge(&mut self, other: &PairAccumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n_a = self.count as f64;
        let n_b = other.count as f64;
        let n = n_a + n_b;
        let du = other.mean_u - self.mean_u;
        let dv = other.mean_v - self.mean_v;
        self.co_m2 += other.co_m2 + du * dv * n_a * n_b / n;
        self.mean_u += du * n_b / n;
        self.mean_v += dv * n_b / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Sample covariance with divisor `count − 1`.
    pub fn covariance(&self) -> Result<f64> {
        if self.count < 2 {
            return Err(Error::InvalidArgument(
                "covariance needs at least two pairs".into(),
            ));
        }
        Ok(self.co_m2 / (self.count - 1) as f64)
    }

    pub fn means(&self) -> (f64, f64) {
        (self.mean_u, self.mean_v)
    }
}

/// `Φ(x / √σ²)`.
pub fn gaussian_cdf(x: f64, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "variance must be positive, got {sigma2}"
        )));
    }
    Ok(0.5 * erfc(-x / (2.0 * sigma2).sqrt()))
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `samples` and
/// the centered normal CDF with variance `sigma2`. Input order is irrelevant.
pub fn ks_statistic(samples: &[f64], sigma2: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    gaussian_cdf(0.0, sigma2)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = gaussian_cdf(x, sigma2)?;
        let above = (i + 1) as f64 / m - f;
        let below = f - i as f64 / m;
        d = d.max(above).max(below);
    }
    Ok(d)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Asymptotic Kolmogorov critical coefficient `c(α)` with `P(√m D > c) = α`.
pub fn ks_critical_coefficient(alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt()
}

/// Asymptotic one-sample critical value at level `alpha` for `m` samples.
pub fn ks_critical(m: usize, alpha: f64) -> f64 {
    ks_critical_coefficient(alpha) / (m as f64).sqrt()
}

/// Asymptotic two-sample critical value at level `alpha`.
pub fn ks_two_sample_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    ks_critical_coefficient(alpha) * ((n + m) / (n * m)).sqrt()
}

/// Sample variance (divisor `m − 1`) with the standard error
/// `√((μ̂₄ − σ̂⁴(m−3)/(m−1)) / m)`.
pub fn variance_with_stderr(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < 4 {
        return Err(Error::InvalidArgument("need at least four samples".into()));
    }
    let summary = samples.iter().copied().collect::<MomentAccumulator>().finalize()?;
    let m = samples.len() as f64;
    let mu4 = samples.iter().map(|x| (x - summary.mean).powi(4)).sum::<f64>() / m;
    let v = summary.variance;
    let se2 = (mu4 - v * v * (m - 3.0) / (m - 1.0)) / m;
    Ok((v, se2.max(0.0).sqrt()))
}

/// Sample covariance of paired values with a delete-one jackknife standard error.
pub fn covariance_with_jackknife(pairs: &[(f64, f64)]) -> Result<(f64, f64)> {
    let m = pairs.len();
    if m < 3 {
        return Err(Error::InvalidArgument("need at least three pairs".into()));
    }
    let acc = pairs.iter().fold(PairAccumulator::new(), |mut acc, &(u, v)| {
        acc.update(u, v);
        acc
    });
    let cov = acc.covariance()?;
    // Leave-one-out covariances from the totals, O(m) overall.
    let mf = m as f64;
    let su: f64 = pairs.iter().map(|p| p.0).sum();
    let sv: f64 = pairs.iter().map(|p| p.1).sum();
    let (mu, mv) = acc.means();
    let cross = acc.co_m2;
    let loo: Vec<f64> = pairs
        .iter()
        .map(|&(u, v)| {
            let k = mf - 1.0;
            let mu_i = (su - u) / k;
            let mv_i = (sv - v) / k;
            // Σ_{j≠i} (u_j − mu_i)(v_j − mv_i)
            let c = cross - (u - mu) * (v - mv) - k * (mu_i - mu) * (mv_i - mv);
            c / (k - 1.0)
        })
        .collect();
    let mean_loo = loo.iter().sum::<f64>() / mf;
    let var = (mf - 1.0) / mf * loo.iter().map(|c| (c - mean_loo).powi(2)).sum::<f64>();
    Ok((cov, var.sqrt()))
}

/// Covariance of `(path(s), path(t))` across an ensemble of at least 100
/// paths, with a jackknife standard error. Paths may be produced lazily.
pub fn covariance_at<I>(paths: I, s: f64, t: f64) -> Result<(f64, f64)>
where
    I: IntoIterator,
    I::Item: Borrow<CadlagPath>,
{
    let pairs = paths
        .into_iter()
        .map(|p| {
            let p = p.borrow();
            Ok((p.evaluate(s)?, p.evaluate(t)?))
        })
        .collect::<Result<Vec<_>>>()?;
    if pairs.len() < 100 {
        return Err(Error::InvalidArgument(format!(
            "covariance needs at least 100 paths, got {}",
            pairs.len()
        )));
    }
    covariance_with_jackknife(&pairs)
}

/// `Σ_k ζ_{k+β} · pmf(k)`.
pub fn cesaro_sum(env: &Environment, pmf: &Pmf, beta: i64) -> Result<f64> {
    pmf.iter().try_fold(0.0, |acc, (&k, &w)| {
        let zeta = env.zeta(k + beta).ok_or_else(|| {
            Error::InvalidWindow(format!(
                "site {} outside environment window ({}, {}]",
                k + beta,
                env.lo(),
                env.hi()
            ))
        })?;
        Ok(acc + zeta * w)
    })
}

/// One check outcome as it appears in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub stat: String,
    pub estimate: f64,
    pub stderr: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckResult {
    /// Passes when `|estimate − target| ≤ tolerance · |target|`.
    pub fn relative(stat: impl Into<String>, estimate: f64, stderr: f64, target: f64, tolerance: f64) -> Self {
        CheckResult {
            stat: stat.into(),
            estimate,
            stderr,
            target,
            tolerance,
            pass: (estimate - target).abs() <= tolerance * target.abs(),
        }
    }

    /// Passes when `|estimate − target| ≤ tolerance`.
    pub fn absolute(stat: impl Into<String>, estimate: f64, stderr: f64, target: f64, tolerance: f64) -> Self {
        CheckResult {
            stat: stat.into(),
            estimate,
            stderr,
            target,
            tolerance,
            pass: (estimate - target).abs() <= tolerance,
        }
    }

    /// Passes when `estimate ≤ tolerance`; the target records the ideal value.
    pub fn at_most(stat: impl Into<String>, estimate: f64, stderr: f64, target: f64, tolerance: f64) -> Self {
        CheckResult {
            stat: stat.into(),
            estimate,
            stderr,
            target,
            tolerance,
            pass: estimate <= tolerance,
        }
    }
}
