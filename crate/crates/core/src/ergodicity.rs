//! Exact total-variation decay from the small set and the fitted geometric
//! envelope `d_TV(delta_x P^n, pi) <= L r^n`.
//!
//! The envelope is only verified up to the profile horizon, so certificates
//! produced here are labelled empirical unless the caller supplies the rate.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{check_h1, stationary_distribution, tv_weights, Distribution, MarkovKernel, SmallSet};
use crate::linalg::spectral_radius;

/// Smallest rate reported; kernels that mix in one step would otherwise give `r = 0`.
pub const RATE_FLOOR: f64 = 1e-6;
/// Largest rate accepted.
pub const RATE_CEILING: f64 = 1.0 - 1e-12;
/// Rates this close to one are reported as absence of geometric decay.
pub const DECAY_THRESHOLD: f64 = 1.0 - 1e-9;
/// Profile values below this are treated as numerically zero.
pub const NOISE_FLOOR: f64 = 1e-14;
/// Minimum horizon accepted by [`fit_ergodicity`].
pub const MIN_FIT_HORIZON: usize = 10;
/// Upper cap on [`default_horizon`].
pub const MAX_HORIZON: usize = 10_000;

/// `d[n] = max_{x in C} d_TV(delta_x P^n, pi)` for `n = 0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvDecayProfile {
    pub d: Vec<f64>,
}

impl TvDecayProfile {
    pub fn horizon(&self) -> usize {
        self.d.len() - 1
    }

    /// CSV with columns `n,d_n,L_r_n`.
    pub fn to_csv(&self, cert: &ErgodicityCertificate) -> String {
        let mut out = String::from("n,d_n,L_r_n\n");
        for (n, d) in self.d.iter().enumerate() {
            let _ = writeln!(out, "{n},{d:e},{:e}", cert.envelope(n));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateMode {
    Empirical,
    UserSupplied,
}

/// Geometric ergodicity pair `(L, r)` checked on `n <= horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityCertificate {
    #[serde(rename = "L")]
    pub l: f64,
    pub r: f64,
    pub horizon: usize,
    pub mode: CertificateMode,
    /// `d[horizon]`.
    pub residual: f64,
    pub slem: f64,
    pub rate_floor_applied: bool,
}

impl ErgodicityCertificate {
    pub fn envelope(&self, n: usize) -> f64 {
        self.l * self.r.powi(n as i32)
    }

    /// Checks `d[n] <= L r^n + slack` for every `n` of the profile.
    pub fn covers(&self, profile: &TvDecayProfile, slack: f64) -> bool {
        profile
            .d
            .iter()
            .enumerate()
            .all(|(n, &d)| d <= self.envelope(n) + slack)
    }
}

pub fn tv_decay_profile(
    kernel: &MarkovKernel,
    small_set: &SmallSet,
    pi: &Distribution,
    horizon: usize,
) -> Result<TvDecayProfile> {
    if horizon < 1 {
        return Err(Error::HorizonTooSmall { got: horizon, min: 1 });
    }
    let m = kernel.size();
    if pi.size() != m {
        return Err(Error::SpaceMismatch);
    }
    let mut d = vec![0.0_f64; horizon + 1];
    for &x in small_set.indices() {
        let mut mu = vec![0.0; m];
        mu[x] = 1.0;
        for slot in d.iter_mut() {
            *slot = slot.max(tv_weights(&mu, pi.weights()));
            mu = kernel.step(&mu);
        }
    }
    Ok(TvDecayProfile { d })
}

/// Second-largest eigenvalue modulus: spectral radius of `P - 1 pi^T`.
pub fn slem(kernel: &MarkovKernel) -> Result<f64> {
    let pi = stationary_distribution(kernel)?;
    let m = kernel.size();
    let ones_pi = DMatrix::from_fn(m, m, |_, y| pi.weights()[y]);
    spectral_radius(kernel.to_dmatrix() - ones_pi)
}

/// `max(50, ceil(10 / (1 - slem)))`, capped at 10^4.
pub fn default_horizon(slem: f64) -> usize {
    if slem >= 1.0 {
        return MAX_HORIZON;
    }
    let relax = (10.0 / (1.0 - slem)).ceil();
    if relax >= MAX_HORIZON as f64 {
        MAX_HORIZON
    } else {
        (relax as usize).max(50)
    }
}

/// Fits `(L, r)`: `r` is the larger of the SLEM and the worst one-step ratio
/// on the second half of the profile (unless overridden), and `L` is the
/// smallest constant `>= 1` covering the whole profile.
pub fn fit_ergodicity(
    kernel: &MarkovKernel,
    small_set: &SmallSet,
    pi: &Distribution,
    horizon: usize,
    r_override: Option<f64>,
) -> Result<ErgodicityCertificate> {
    if let Some(r) = r_override {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::InvalidOverride(r));
        }
    }
    let h1 = check_h1(kernel);
    if !h1.irreducible {
        return Err(Error::NotIrreducible);
    }
    if horizon < MIN_FIT_HORIZON {
        return Err(Error::HorizonTooSmall { got: horizon, min: MIN_FIT_HORIZON });
    }
    let profile = tv_decay_profile(kernel, small_set, pi, horizon)?;
    let (slem, tail_ratio) = if h1.aperiodic {
        (slem(kernel)?, tail_ratio(&profile))
    } else {
        (1.0, 1.0)
    };

    let (raw_rate, mode) = match r_override {
        Some(r) => (r, CertificateMode::UserSupplied),
        None => (slem.max(tail_ratio), CertificateMode::Empirical),
    };
    if raw_rate >= DECAY_THRESHOLD {
        return Err(Error::NoGeometricDecay { rate: raw_rate });
    }
    let rate_floor_applied = raw_rate < RATE_FLOOR;
    let r = raw_rate.clamp(RATE_FLOOR, RATE_CEILING);

    let ln_r = r.ln();
    let l = profile
        .d
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > NOISE_FLOOR)
        .map(|(n, &d)| (d.ln() - n as f64 * ln_r).exp())
        .fold(1.0_f64, f64::max);

    Ok(ErgodicityCertificate {
        l,
        r,
        horizon,
        mode,
        residual: profile.d[horizon],
        slem,
        rate_floor_applied,
    })
}

fn tail_ratio(profile: &TvDecayProfile) -> f64 {
    let horizon = profile.horizon();
    let start = horizon.div_ceil(2);
    (start..horizon)
        .filter(|&n| profile.d[n] > NOISE_FLOOR)
        .map(|n| profile.d[n + 1] / profile.d[n])
        .fold(0.0_f64, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> MarkovKernel {
        MarkovKernel::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap()
    }

    fn iid() -> MarkovKernel {
        MarkovKernel::from_rows(&vec![vec![0.5, 0.3, 0.2]; 3]).unwrap()
    }

    #[test]
    fn two_state_profile_matches_closed_form() {
        let k = two_state();
        let pi = stationary_distribution(&k).unwrap();
        let c = SmallSet::all(2).unwrap();
        let profile = tv_decay_profile(&k, &c, &pi, 40).unwrap();
        for (n, d) in profile.d.iter().enumerate() {
            let expected = 2.0 / 3.0 * 0.7f64.powi(n as i32);
            assert!((d - expected).abs() < 1e-14, "n={n}: {d} vs {expected}");
        }
        assert_eq!(
            tv_decay_profile(&k, &c, &pi, 0),
            Err(Error::HorizonTooSmall { got: 0, min: 1 })
        );
    }

    #[test]
    fn iid_and_identity_profiles() {
        let k = iid();
        let pi = stationary_distribution(&k).unwrap();
        let profile = tv_decay_profile(&k, &SmallSet::all(3).unwrap(), &pi, 5).unwrap();
        assert!((profile.d[0] - 0.8).abs() < 1e-15);
        assert!(profile.d[1..].iter().all(|&d| d < 1e-15));

        let id = MarkovKernel::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let half = Distribution::uniform(id.space().clone());
        let profile = tv_decay_profile(&id, &SmallSet::new([0], 2).unwrap(), &half, 5).unwrap();
        assert!(profile.d.iter().all(|&d| d == 0.5));
    }

    #[test]
    fn slem_examples() {
        assert!((slem(&two_state()).unwrap() - 0.7).abs() < 1e-12);
        assert!(slem(&iid()).unwrap() < 1e-12);
        let lazy = MarkovKernel::from_rows(&[
            vec![0.5, 0.5, 0.0],
            vec![0.0, 0.5, 0.5],
            vec![0.5, 0.0, 0.5],
        ])
        .unwrap();
        assert!((slem(&lazy).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fit_examples() {
        let k = two_state();
        let pi = stationary_distribution(&k).unwrap();
        let cert = fit_ergodicity(&k, &SmallSet::all(2).unwrap(), &pi, 50, None).unwrap();
        assert!((cert.r - 0.7).abs() < 1e-12);
        assert_eq!(cert.l, 1.0);
        assert_eq!(cert.mode, CertificateMode::Empirical);

        let k = iid();
        let pi = stationary_distribution(&k).unwrap();
        let cert = fit_ergodicity(&k, &SmallSet::all(3).unwrap(), &pi, 50, None).unwrap();
        assert_eq!(cert.r, RATE_FLOOR);
        assert!(cert.rate_floor_applied);
        assert_eq!(cert.l, 1.0);

        let cycle = MarkovKernel::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        let pi = stationary_distribution(&cycle).unwrap();
        assert!(matches!(
            fit_ergodicity(&cycle, &SmallSet::new([0], 3).unwrap(), &pi, 50, None),
            Err(Error::NoGeometricDecay { .. })
        ));
    }

    #[test]
    fn fit_overrides_and_guards() {
        let k = two_state();
        let pi = stationary_distribution(&k).unwrap();
        let c = SmallSet::new([0], 2).unwrap();
        let cert = fit_ergodicity(&k, &c, &pi, 50, Some(0.8)).unwrap();
        assert_eq!(cert.mode, CertificateMode::UserSupplied);
        assert_eq!(cert.r, 0.8);
        assert_eq!(fit_ergodicity(&k, &c, &pi, 50, Some(1.0)), Err(Error::InvalidOverride(1.0)));
        assert_eq!(
            fit_ergodicity(&k, &c, &pi, 5, None),
            Err(Error::HorizonTooSmall { got: 5, min: 10 })
        );
        // an override faster than the true rate is absorbed by L
        let cert = fit_ergodicity(&k, &c, &pi, 50, Some(0.5)).unwrap();
        let profile = tv_decay_profile(&k, &c, &pi, 50).unwrap();
        assert!(cert.covers(&profile, 1e-12));
        assert!(cert.l > 1.0);
    }

    #[test]
    fn default_horizon_rule() {
        assert_eq!(default_horizon(0.7), 50);
        assert_eq!(default_horizon(0.99), 1000);
        assert_eq!(default_horizon(0.999_999), MAX_HORIZON);
    }

    #[test]
    fn csv_export() {
        let k = two_state();
        let pi = stationary_distribution(&k).unwrap();
        let c = SmallSet::all(2).unwrap();
        let cert = fit_ergodicity(&k, &c, &pi, 10, None).unwrap();
        let csv = tv_decay_profile(&k, &c, &pi, 10).unwrap().to_csv(&cert);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "n,d_n,L_r_n");
        assert_eq!(lines.len(), 12);
    }
}
