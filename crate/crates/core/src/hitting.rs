//! Hitting and return times of the small set, the return-time generating
//! function `E_x[u^{sigma_C}]`, and the search over `u` that maximizes the
//! concentration constant.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bound::{beta_constant, BetaResult};
use crate::ergodicity::ErgodicityCertificate;
use crate::error::{Error, Result};
use crate::kernel::{MarkovKernel, SmallSet};
use crate::linalg::spectral_radius;

/// Margin kept away from both ends of the admissible `u` interval.
pub const SEARCH_MARGIN: f64 = 1e-6;
/// Upper end of the `u` search when the generating function is finite everywhere.
pub const U_CEILING: f64 = 1e6;
pub const MIN_GRID_SIZE: usize = 8;
pub const DEFAULT_GRID_SIZE: usize = 64;
const GOLDEN_ITERATIONS: usize = 20;

/// First index `n >= i` at which a path is in the set, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HittingTime {
    At(usize),
    NotWithinHorizon,
}

impl HittingTime {
    pub fn value(self) -> Option<usize> {
        match self {
            HittingTime::At(n) => Some(n),
            HittingTime::NotWithinHorizon => None,
        }
    }
}

/// `tau_C^i = inf { n >= i : path[n] in C }`.
pub fn hitting_time(path: &[usize], small_set: &SmallSet, i: usize) -> HittingTime {
    path.iter()
        .enumerate()
        .skip(i)
        .find(|(_, &x)| small_set.contains(x))
        .map_or(HittingTime::NotWithinHorizon, |(n, _)| HittingTime::At(n))
}

/// `sigma_C = tau_C^1`.
pub fn return_time(path: &[usize], small_set: &SmallSet) -> HittingTime {
    hitting_time(path, small_set, 1)
}

/// Largest `u` for which the return-time generating function is finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UMax {
    Finite(f64),
    Infinite,
}

impl UMax {
    pub fn as_option(self) -> Option<f64> {
        match self {
            UMax::Finite(v) => Some(v),
            UMax::Infinite => None,
        }
    }

    fn admits(self, u: f64) -> bool {
        match self {
            UMax::Finite(limit) => u < limit - 1e-12,
            UMax::Infinite => true,
        }
    }
}

fn has_cycle(kernel: &MarkovKernel, outside: &[usize]) -> bool {
    // Kahn's algorithm on the positive-entry graph restricted to `outside`
    let k = outside.len();
    let edge = |a: usize, b: usize| kernel.get(outside[a], outside[b]) > 0.0;
    let mut indegree: Vec<usize> = (0..k).map(|b| (0..k).filter(|&a| edge(a, b)).count()).collect();
    let mut stack: Vec<usize> = (0..k).filter(|&b| indegree[b] == 0).collect();
    let mut removed = 0;
    while let Some(a) = stack.pop() {
        removed += 1;
        for b in 0..k {
            if edge(a, b) {
                indegree[b] -= 1;
                if indegree[b] == 0 {
                    stack.push(b);
                }
            }
        }
    }
    removed < k
}

fn sub_block(kernel: &MarkovKernel, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| kernel.get(rows[a], cols[b]))
}

/// `1 / rho(P_DD)` with `D` the complement of the small set; infinite when the
/// chain cannot stay in `D` indefinitely.
pub fn u_max(kernel: &MarkovKernel, small_set: &SmallSet) -> Result<UMax> {
    let outside = small_set.complement(kernel.size());
    if outside.is_empty() || !has_cycle(kernel, &outside) {
        return Ok(UMax::Infinite);
    }
    let radius = spectral_radius(sub_block(kernel, &outside, &outside))?;
    Ok(UMax::Finite(1.0 / radius))
}

/// `E_x[u^{sigma_C}]` for every state `x`.
///
/// Solves `g = u P_DD g + u P_DC 1` for `g(y) = E_y[u^{tau_C^0}]` on the
/// complement, sets `g = 1` on the set, and returns `u sum_y P(x, y) g(y)`.
pub fn sigma_mgf(kernel: &MarkovKernel, small_set: &SmallSet, u: f64) -> Result<Vec<f64>> {
    let limit = u_max(kernel, small_set)?;
    sigma_mgf_within(kernel, small_set, u, limit)
}

fn sigma_mgf_within(kernel: &MarkovKernel, small_set: &SmallSet, u: f64, limit: UMax) -> Result<Vec<f64>> {
    if !(u > 1.0) || !u.is_finite() || !limit.admits(u) {
        return Err(Error::UOutOfRange { u, u_max: limit.as_option().unwrap_or(f64::INFINITY) });
    }
    let m = kernel.size();
    let outside = small_set.complement(m);
    let mut g = vec![1.0; m];
    if !outside.is_empty() {
        let k = outside.len();
        let a = DMatrix::<f64>::identity(k, k) - sub_block(kernel, &outside, &outside) * u;
        let rhs = DVector::from_fn(k, |row, _| {
            u * small_set.indices().iter().map(|&y| kernel.get(outside[row], y)).sum::<f64>()
        });
        let solution = a.lu().solve(&rhs).ok_or(Error::SolverSingular)?;
        for (row, &y) in outside.iter().enumerate() {
            g[y] = solution[row];
        }
    }
    let mgf: Vec<f64> = (0..m)
        .map(|x| u * kernel.row(x).iter().zip(&g).map(|(p, gy)| p * gy).sum::<f64>())
        .collect();
    if mgf.iter().any(|v| !v.is_finite() || *v < 1.0) {
        return Err(Error::SolverSingular);
    }
    Ok(mgf)
}

/// Return-time moment condition `sup_{x in C} E_x[u^{sigma_C}] <= M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftCertificate {
    pub small_set: SmallSet,
    pub u: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub mgf: Vec<f64>,
    /// `None` when the generating function is finite for every `u`.
    pub u_max: Option<f64>,
}

/// Assembles the certificate with the tight choice `M = max_{x in C} E_x[u^{sigma_C}]`.
pub fn drift_certificate(kernel: &MarkovKernel, small_set: &SmallSet, u: f64) -> Result<DriftCertificate> {
    let limit = u_max(kernel, small_set)?;
    drift_within(kernel, small_set, u, limit)
}

fn drift_within(kernel: &MarkovKernel, small_set: &SmallSet, u: f64, limit: UMax) -> Result<DriftCertificate> {
    let mgf = sigma_mgf_within(kernel, small_set, u, limit)?;
    let m = small_set
        .indices()
        .iter()
        .map(|&x| mgf[x])
        .fold(u, f64::max);
    Ok(DriftCertificate { small_set: small_set.clone(), u, m, mgf, u_max: limit.as_option() })
}

/// Maximizes the concentration constant over `u`: a geometric grid on `u - 1`
/// spanning `(1 + 1e-6, u_max (1 - 1e-6))` (upper end `1e6` when `u_max` is
/// infinite), then golden-section refinement around the best grid point.
/// Ties go to the smaller `u`.
pub fn optimize_drift(
    kernel: &MarkovKernel,
    small_set: &SmallSet,
    erg: &ErgodicityCertificate,
    grid_size: usize,
) -> Result<(DriftCertificate, BetaResult)> {
    if grid_size < MIN_GRID_SIZE {
        return Err(Error::GridTooSmall(grid_size));
    }
    let limit = u_max(kernel, small_set)?;
    let upper = match limit {
        UMax::Finite(v) => v * (1.0 - SEARCH_MARGIN),
        UMax::Infinite => U_CEILING,
    };
    if !(upper > 1.0 + 2.0 * SEARCH_MARGIN) {
        return Err(Error::EmptyRange(limit.as_option().unwrap_or(f64::INFINITY)));
    }

    let evaluate = |log_excess: f64| -> Option<(DriftCertificate, BetaResult)> {
        let u = 1.0 + log_excess.exp();
        let drift = drift_within(kernel, small_set, u, limit).ok()?;
        let beta = beta_constant(u, drift.m, erg.l, erg.r).ok()?;
        Some((drift, beta))
    };
    let score = |candidate: &Option<(DriftCertificate, BetaResult)>| {
        candidate.as_ref().map_or(f64::NEG_INFINITY, |(_, b)| b.beta)
    };

    let lo = SEARCH_MARGIN.ln();
    let hi = (upper - 1.0).ln();
    let nodes: Vec<f64> = (0..grid_size)
        .map(|k| lo + (hi - lo) * k as f64 / (grid_size - 1) as f64)
        .collect();
    let mut best_index = 0;
    let mut best = evaluate(nodes[0]);
    for (k, &node) in nodes.iter().enumerate().skip(1) {
        let candidate = evaluate(node);
        if score(&candidate) > score(&best) {
            best = candidate;
            best_index = k;
        }
    }

    let mut a = nodes[best_index.saturating_sub(1)];
    let mut b = nodes[(best_index + 1).min(grid_size - 1)];
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let mut f1 = evaluate(x1);
    let mut f2 = evaluate(x2);
    for _ in 0..GOLDEN_ITERATIONS {
        if score(&f1) >= score(&f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = evaluate(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = evaluate(x2);
        }
    }
    for refined in [f1, f2] {
        if score(&refined) > score(&best) {
            best = refined;
        }
    }
    best.ok_or(Error::EmptyRange(limit.as_option().unwrap_or(f64::INFINITY)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ergodicity::CertificateMode;

    fn two_state() -> MarkovKernel {
        MarkovKernel::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap()
    }

    fn cert(l: f64, r: f64) -> ErgodicityCertificate {
        ErgodicityCertificate {
            l,
            r,
            horizon: 50,
            mode: CertificateMode::UserSupplied,
            residual: 0.0,
            slem: r,
            rate_floor_applied: false,
        }
    }

    #[test]
    fn hitting_examples() {
        let c = SmallSet::new([0], 2).unwrap();
        assert_eq!(hitting_time(&[0, 1, 0], &c, 0), HittingTime::At(0));
        assert_eq!(hitting_time(&[0, 1, 0], &c, 1), HittingTime::At(2));
        assert_eq!(return_time(&[0, 1, 0], &c), HittingTime::At(2));
        for i in 0..4 {
            assert_eq!(hitting_time(&[1, 1, 1], &c, i), HittingTime::NotWithinHorizon);
        }
    }

    #[test]
    fn u_max_examples() {
        let k = two_state();
        match u_max(&k, &SmallSet::new([0], 2).unwrap()).unwrap() {
            UMax::Finite(v) => assert!((v - 1.25).abs() < 1e-12),
            UMax::Infinite => panic!(),
        }
        assert_eq!(u_max(&k, &SmallSet::all(2).unwrap()).unwrap(), UMax::Infinite);
        let k3 = MarkovKernel::from_rows(&[
            vec![0.5, 0.25, 0.25],
            vec![0.25, 0.5, 0.25],
            vec![0.25, 0.25, 0.5],
        ])
        .unwrap();
        match u_max(&k3, &SmallSet::new([0], 3).unwrap()).unwrap() {
            UMax::Finite(v) => assert!((v - 4.0 / 3.0).abs() < 1e-12),
            UMax::Infinite => panic!(),
        }
        // complement with no cycle: every excursion is shorter than 2 steps
        let acyclic = MarkovKernel::from_rows(&[vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        assert_eq!(u_max(&acyclic, &SmallSet::new([0], 2).unwrap()).unwrap(), UMax::Infinite);
    }

    #[test]
    fn sigma_mgf_examples() {
        let k = two_state();
        let all = SmallSet::all(2).unwrap();
        assert_eq!(sigma_mgf(&k, &all, 1.7).unwrap(), vec![1.7, 1.7]);
        let c = SmallSet::new([0], 2).unwrap();
        let mgf = sigma_mgf(&k, &c, 1.1).unwrap();
        let expected = 0.9 * 1.1 + 0.1 * 1.1 * (0.2 * 1.1 / (1.0 - 0.8 * 1.1));
        assert!((mgf[0] - expected).abs() < 1e-13);
        assert!((mgf[0] - 1.191_666_666_666_666_7).abs() < 1e-12);
        assert!(matches!(sigma_mgf(&k, &c, 1.3), Err(Error::UOutOfRange { .. })));
        assert!(matches!(sigma_mgf(&k, &c, 1.0), Err(Error::UOutOfRange { .. })));
    }

    #[test]
    fn drift_examples() {
        let k = two_state();
        let d = drift_certificate(&k, &SmallSet::new([0], 2).unwrap(), 1.1).unwrap();
        assert!((d.m - 1.191_666_666_666_666_7).abs() < 1e-12);
        assert_eq!(drift_certificate(&k, &SmallSet::all(2).unwrap(), 1.05).unwrap().m, 1.05);
        assert_eq!(drift_certificate(&k, &SmallSet::all(2).unwrap(), 1.1).unwrap().m, 1.1);
    }

    #[test]
    fn mgf_nondecreasing_in_u() {
        let k = MarkovKernel::from_rows(&[
            vec![0.2, 0.5, 0.3],
            vec![0.1, 0.6, 0.3],
            vec![0.4, 0.4, 0.2],
        ])
        .unwrap();
        let c = SmallSet::new([0], 3).unwrap();
        let limit = u_max(&k, &c).unwrap().as_option().unwrap();
        let mut last = vec![1.0; 3];
        for step in 1..40 {
            let u = 1.0 + (limit - 1.0) * step as f64 / 41.0;
            let now = sigma_mgf(&k, &c, u).unwrap();
            assert!(now.iter().zip(&last).all(|(a, b)| a >= b));
            last = now;
        }
    }

    #[test]
    fn optimize_examples() {
        let k = two_state();
        let c = SmallSet::new([0], 2).unwrap();
        let (drift, beta) = optimize_drift(&k, &c, &cert(1.0, 0.7), 64).unwrap();
        assert!(drift.u > 1.0 && drift.u < 1.25);
        let at_fixed = beta_constant(1.1, drift_certificate(&k, &c, 1.1).unwrap().m, 1.0, 0.7).unwrap();
        assert!(beta.beta >= at_fixed.beta);
        assert!((beta.m - drift.m).abs() == 0.0 && beta.u == drift.u);

        let (drift, beta) = optimize_drift(&k, &SmallSet::all(2).unwrap(), &cert(1.0, 0.7), 64).unwrap();
        assert!(drift.u > 1.0 && drift.u < U_CEILING);
        assert!(beta.beta > 0.0);

        assert_eq!(
            optimize_drift(&k, &c, &cert(1.0, 0.7), 4).unwrap_err(),
            Error::GridTooSmall(4)
        );
    }

    #[test]
    fn refinement_never_loses_to_grid() {
        let k = two_state();
        let c = SmallSet::new([0], 2).unwrap();
        for grid in [8, 13, 64] {
            let (_, beta) = optimize_drift(&k, &c, &cert(1.3, 0.75), grid).unwrap();
            let lo = SEARCH_MARGIN.ln();
            let hi = (1.25 * (1.0 - SEARCH_MARGIN) - 1.0f64).ln();
            let grid_best = (0..grid)
                .filter_map(|j| {
                    let u = 1.0 + (lo + (hi - lo) * j as f64 / (grid - 1) as f64).exp();
                    let m = drift_certificate(&k, &c, u).ok()?.m;
                    Some(beta_constant(u, m, 1.3, 0.75).ok()?.beta)
                })
                .fold(0.0, f64::max);
            assert!(beta.beta >= grid_best);
        }
    }
}
