//! Seeded trajectory sampling with exact binomial confidence intervals.
//!
//! Work is split into `streams` independent sub-streams. Stream `s` uses
//! `ChaCha8Rng::seed_from_u64(splitmix64(seed + s))` and draws its share of
//! the samples in order; results are merged as integer counts (or summed in
//! stream order), so the output does not depend on thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::exact::{enumeration_budget, exact_expectation, PathLaw};
use crate::functionals::{tuple_count, BoundedDifferenceFunctional};
use crate::hitting::{u_max, UMax};
use crate::kernel::{Distribution, MarkovKernel, SmallSet};

/// Human-readable description of the generator, for report headers.
pub const RNG_DESCRIPTION: &str =
    "ChaCha8Rng (rand_chacha 0.9) seeded per stream with seed_from_u64(splitmix64(seed + stream)); one f64 uniform per transition, inverse-CDF row lookup";
/// Two-sided confidence level of [`TailEstimate`] intervals.
pub const CONFIDENCE: f64 = 0.99;
pub const DEFAULT_HORIZON_CAP: usize = 10_000;
/// Stream offset used by the Monte Carlo centering pass.
const CENTERING_STREAM_OFFSET: u64 = 0x5EED_CE47_E000_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub seed: u64,
    pub samples: u64,
    pub streams: u64,
}

impl SampleSpec {
    pub fn new(seed: u64, samples: u64, streams: u64) -> Result<Self> {
        if samples == 0 || streams == 0 {
            return Err(Error::DomainError("samples and streams must be >= 1".into()));
        }
        Ok(Self { seed, samples, streams })
    }

    /// Number of samples drawn by stream `s`; the first `samples % streams`
    /// streams take one extra.
    pub fn share(&self, s: u64) -> u64 {
        self.samples / self.streams + u64::from(s < self.samples % self.streams)
    }

    pub fn stream_rng(&self, s: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(splitmix64(self.seed.wrapping_add(s)))
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn next_state(row: &[f64], uniform: f64) -> usize {
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (y, &p) in row.iter().enumerate() {
        if p > 0.0 {
            cumulative += p;
            last_positive = y;
            if uniform < cumulative {
                return y;
            }
        }
    }
    last_positive
}

/// Trajectory of length `n` started at `x`.
pub fn sample_path<R: Rng + ?Sized>(kernel: &MarkovKernel, x: usize, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    kernel.validate_state(x)?;
    if n == 0 {
        return Err(Error::HorizonTooSmall { got: 0, min: 1 });
    }
    let mut path = Vec::with_capacity(n);
    path.push(x);
    let mut current = x;
    for _ in 1..n {
        current = next_state(kernel.row(current), rng.random::<f64>());
        path.push(current);
    }
    Ok(path)
}

fn fill_path<R: Rng + ?Sized>(kernel: &MarkovKernel, path: &mut [usize], rng: &mut R) {
    for k in 1..path.len() {
        path[k] = next_state(kernel.row(path[k - 1]), rng.random::<f64>());
    }
}

/// Inverse of the regularized incomplete beta function by bisection.
fn beta_quantile(p: f64, a: f64, b: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Two-sided Clopper-Pearson interval for `successes` out of `trials`.
pub fn clopper_pearson(successes: u64, trials: u64, confidence: f64) -> (f64, f64) {
    let alpha = 1.0 - confidence;
    let (k, n) = (successes as f64, trials as f64);
    let low = if successes == 0 { 0.0 } else { beta_quantile(alpha / 2.0, k, n - k + 1.0) };
    let high = if successes >= trials { 1.0 } else { beta_quantile(1.0 - alpha / 2.0, k + 1.0, n - k) };
    (low, high)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub samples: u64,
    pub exceedances: u64,
    /// Value of `E_x f` subtracted before thresholding.
    pub centering: f64,
    /// False when the centering constant itself was estimated by simulation.
    pub centering_exact: bool,
}

/// Estimates `P_x(f - E_x f > t)`. The centering constant is exact when the
/// path count fits the enumeration budget, otherwise it is a separate
/// simulation with ten times as many samples.
pub fn mc_tail(
    kernel: &MarkovKernel,
    x: usize,
    n: usize,
    f: &BoundedDifferenceFunctional,
    t: f64,
    spec: &SampleSpec,
) -> Result<TailEstimate> {
    kernel.validate_state(x)?;
    if f.horizon() != n {
        return Err(Error::HorizonMismatch { law: n, functional: f.horizon() });
    }
    let (centering, exact) = if tuple_count(kernel.size(), n) <= enumeration_budget() {
        let start = Distribution::dirac(kernel.space().clone(), x)?;
        (exact_expectation(&PathLaw::new(kernel, &start, n)?, f)?, true)
    } else {
        let centering_spec = SampleSpec {
            seed: spec.seed ^ CENTERING_STREAM_OFFSET,
            samples: spec.samples.saturating_mul(10),
            streams: spec.streams,
        };
        (mc_mean(kernel, x, f, &centering_spec)?, false)
    };
    let mut estimate = mc_tail_centered(kernel, x, f, t, centering, spec)?;
    estimate.centering_exact = exact;
    Ok(estimate)
}

/// As [`mc_tail`] with a caller-supplied centering constant.
pub fn mc_tail_centered(
    kernel: &MarkovKernel,
    x: usize,
    f: &BoundedDifferenceFunctional,
    t: f64,
    centering: f64,
    spec: &SampleSpec,
) -> Result<TailEstimate> {
    kernel.validate_state(x)?;
    if f.states() != kernel.size() {
        return Err(Error::SpaceMismatch);
    }
    let n = f.horizon();
    let exceedances: u64 = (0..spec.streams)
        .into_par_iter()
        .map(|s| {
            let mut rng = spec.stream_rng(s);
            let mut path = vec![x; n];
            let mut hits = 0u64;
            for _ in 0..spec.share(s) {
                fill_path(kernel, &mut path, &mut rng);
                if f.eval(&path) - centering > t {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    let (ci_low, ci_high) = clopper_pearson(exceedances, spec.samples, CONFIDENCE);
    Ok(TailEstimate {
        point: exceedances as f64 / spec.samples as f64,
        ci_low,
        ci_high,
        samples: spec.samples,
        exceedances,
        centering,
        centering_exact: false,
    })
}

/// Sample mean of `f` over trajectories started at `x`.
pub fn mc_mean(kernel: &MarkovKernel, x: usize, f: &BoundedDifferenceFunctional, spec: &SampleSpec) -> Result<f64> {
    kernel.validate_state(x)?;
    let n = f.horizon();
    let sums: Vec<f64> = (0..spec.streams)
        .into_par_iter()
        .map(|s| {
            let mut rng = spec.stream_rng(s);
            let mut path = vec![x; n];
            let mut total = 0.0;
            for _ in 0..spec.share(s) {
                fill_path(kernel, &mut path, &mut rng);
                total += f.eval(&path);
            }
            total
        })
        .collect();
    Ok(sums.iter().sum::<f64>() / spec.samples as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaMgfEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
    /// Trajectories that did not return within the cap; when nonzero the mean
    /// covers completed trajectories only and is a lower bound.
    pub truncated: u64,
}

impl SigmaMgfEstimate {
    pub fn is_lower_bound(&self) -> bool {
        self.truncated > 0
    }
}

/// Empirical `E_x[u^{sigma_C}]`.
pub fn mc_sigma_mgf(
    kernel: &MarkovKernel,
    small_set: &SmallSet,
    x: usize,
    u: f64,
    spec: &SampleSpec,
    horizon_cap: usize,
) -> Result<SigmaMgfEstimate> {
    kernel.validate_state(x)?;
    let limit = u_max(kernel, small_set)?;
    let valid = u > 1.0
        && match limit {
            UMax::Finite(v) => u < v - 1e-12,
            UMax::Infinite => u.is_finite(),
        };
    if !valid {
        return Err(Error::UOutOfRange { u, u_max: limit.as_option().unwrap_or(f64::INFINITY) });
    }
    let per_stream: Vec<(f64, f64, u64, u64)> = (0..spec.streams)
        .into_par_iter()
        .map(|s| {
            let mut rng = spec.stream_rng(s);
            let (mut sum, mut sum_sq, mut done, mut truncated) = (0.0, 0.0, 0u64, 0u64);
            for _ in 0..spec.share(s) {
                let mut state = x;
                let mut steps = 0usize;
                let returned = loop {
                    state = next_state(kernel.row(state), rng.random::<f64>());
                    steps += 1;
                    if small_set.contains(state) {
                        break true;
                    }
                    if steps >= horizon_cap {
                        break false;
                    }
                };
                if returned {
                    let v = u.powi(steps as i32);
                    sum += v;
                    sum_sq += v * v;
                    done += 1;
                } else {
                    truncated += 1;
                }
            }
            (sum, sum_sq, done, truncated)
        })
        .collect();
    let (mut sum, mut sum_sq, mut done, mut truncated) = (0.0, 0.0, 0u64, 0u64);
    for (a, b, c, d) in per_stream {
        sum += a;
        sum_sq += b;
        done += c;
        truncated += d;
    }
    let count = done.max(1) as f64;
    let mean = sum / count;
    let variance = (sum_sq / count - mean * mean).max(0.0) * count / (count - 1.0).max(1.0);
    Ok(SigmaMgfEstimate { mean, std_error: (variance / count).sqrt(), samples: spec.samples, truncated })
}
