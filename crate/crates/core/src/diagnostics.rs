//! Exhaustive checks of the martingale machinery behind the concentration
//! bound: the decomposition `f - E_x f = sum_i (G_{i+1} - G_i)` with
//! `G_i = E_x[f | F_{tau_C^i}]`, the three increment facts, the Chernoff
//! recomposition, the truncation step and the `w_i` bound used by the
//! coupling inequality.
//!
//! Conditional expectations are computed exactly by grouping enumerated
//! paths on their prefixes; no simulation is involved.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bound::{markov_tail_bound, BetaResult};
use crate::error::{Error, Result};
use crate::exact::{lemma1_gap, value_distribution, PathLaw};
use crate::functionals::{advance, bd_check, tuple_count, BoundedDifferenceFunctional, ENUMERATION_LIMIT};
use crate::hitting::hitting_time;
use crate::kernel::{Distribution, MarkovKernel, SmallSet};
use crate::linalg::CompensatedSum;
use crate::montecarlo::splitmix64;

/// Tolerance on identities between grouped conditional expectations.
pub const IDENTITY_TOLERANCE: f64 = 1e-10;
/// Slack on the increment inequalities.
pub const FACT_SLACK: f64 = 1e-10;
/// Slack used by the coupling and `w_i` checks.
pub const LEMMA1_SLACK: f64 = 1e-12;
/// Fixed anchor state for the `w_i` and truncation constructions.
pub const ANCHOR: usize = 0;

fn check_limit(states: usize, n: usize) -> Result<()> {
    let paths = tuple_count(states, n);
    if paths > ENUMERATION_LIMIT {
        Err(Error::BudgetExceeded { paths, budget: ENUMERATION_LIMIT })
    } else {
        Ok(())
    }
}

fn check_start(kernel: &MarkovKernel, small_set: &SmallSet, x: usize) -> Result<()> {
    kernel.validate_state(x)?;
    if small_set.indices().iter().any(|&s| s >= kernel.size()) {
        return Err(Error::SpaceMismatch);
    }
    if !small_set.contains(x) {
        return Err(Error::StartNotInC(x));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub path: Vec<usize>,
    pub probability: f64,
    pub value: f64,
    /// `G_0, ..., G_{n-1}`.
    pub g: Vec<f64>,
    /// `tau_C^0, ..., tau_C^{n-1}`; `None` when the set is not reached by `n - 1`.
    pub tau: Vec<Option<usize>>,
    /// `|f - E_x f - sum_i (G_{i+1} - G_i)|` and the end-point identities hold.
    pub telescopes: bool,
}

/// Outcome of a check run over many `(path, i)` cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub passed: bool,
    pub checked: usize,
    /// Cells outside the scope of the check.
    pub skipped: usize,
    /// Smallest `rhs - lhs` over checked cells.
    pub worst_margin: Option<f64>,
    pub violation: Option<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub path: Vec<usize>,
    pub i: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Default)]
struct Tally {
    checked: usize,
    skipped: usize,
    worst: Option<f64>,
    violation: Option<Violation>,
}

impl Tally {
    fn record(&mut self, path: &[usize], i: usize, lhs: f64, rhs: f64, slack: f64) {
        self.checked += 1;
        let margin = rhs - lhs;
        self.worst = Some(self.worst.map_or(margin, |w| w.min(margin)));
        if lhs > rhs + slack && self.violation.is_none() {
            self.violation = Some(Violation { path: path.to_vec(), i, lhs, rhs });
        }
    }

    fn finish(self) -> CheckOutcome {
        CheckOutcome {
            passed: self.violation.is_none(),
            checked: self.checked,
            skipped: self.skipped,
            worst_margin: self.worst,
            violation: self.violation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleProfile {
    pub start: usize,
    pub small_set: SmallSet,
    pub horizon: usize,
    pub c: Vec<f64>,
    /// `E_x f`.
    pub mean: f64,
    pub records: Vec<PathRecord>,
    /// `G_0 = E_x f`, `G_{n-1} = f` and the telescoping sum, per path.
    pub telescoping: CheckOutcome,
    /// `E[G_{i+1} - G_i | F_{tau_C^i}] = 0` on every atom.
    pub martingale: CheckOutcome,
}

impl MartingaleProfile {
    pub fn passed(&self) -> bool {
        self.telescoping.passed && self.martingale.passed
    }
}

/// Builds `G_0, ..., G_{n-1}` on every positive-probability path from `x`.
///
/// On `{tau_C^i = j}`, `G_i = E[f | X_{0:j}]` when `j <= n - 2` and `G_i = f`
/// when `tau_C^i >= n - 1`.
pub fn martingale_profile(
    kernel: &MarkovKernel,
    x: usize,
    small_set: &SmallSet,
    n: usize,
    f: &BoundedDifferenceFunctional,
) -> Result<MartingaleProfile> {
    check_start(kernel, small_set, x)?;
    if f.horizon() != n {
        return Err(Error::HorizonMismatch { law: n, functional: f.horizon() });
    }
    if f.states() != kernel.size() {
        return Err(Error::SpaceMismatch);
    }
    check_limit(kernel.size(), n)?;

    let start = Distribution::dirac(kernel.space().clone(), x)?;
    let law = PathLaw::new(kernel, &start, n)?;
    let mut paths: Vec<Vec<usize>> = Vec::new();
    let mut probs = Vec::new();
    let mut values = Vec::new();
    let mut mean = CompensatedSum::default();
    law.for_each_path(|path, p| {
        let v = f.eval(path);
        mean.add(p * v);
        paths.push(path.to_vec());
        probs.push(p);
        values.push(v);
    })?;
    let mean = mean.value();
    let count = paths.len();

    // Paths arrive in lexicographic order, so every prefix class is a
    // contiguous run; `split[k]` is the first index where path k differs
    // from path k - 1.
    let split: Vec<usize> = (0..count)
        .map(|k| {
            if k == 0 {
                0
            } else {
                paths[k].iter().zip(&paths[k - 1]).position(|(a, b)| a != b).unwrap_or(n)
            }
        })
        .collect();
    // cond[j][k] = E[f | X_{0:j} = paths[k][0..=j]] for j <= n - 2.
    let mut cond = vec![vec![0.0; count]; n.saturating_sub(1)];
    for (j, table) in cond.iter_mut().enumerate() {
        let mut begin = 0;
        while begin < count {
            let mut end = begin + 1;
            while end < count && split[end] > j {
                end += 1;
            }
            let mut mass = CompensatedSum::default();
            let mut weighted = CompensatedSum::default();
            for k in begin..end {
                mass.add(probs[k]);
                weighted.add(probs[k] * values[k]);
            }
            let e = weighted.value() / mass.value();
            table[begin..end].iter_mut().for_each(|v| *v = e);
            begin = end;
        }
    }

    let mut telescoping = Tally::default();
    let mut records = Vec::with_capacity(count);
    for k in 0..count {
        let path = &paths[k];
        let tau: Vec<Option<usize>> = (0..n).map(|i| hitting_time(path, small_set, i).value()).collect();
        let g: Vec<f64> = tau
            .iter()
            .map(|t| match t {
                Some(j) if *j + 1 < n => cond[*j][k],
                _ => values[k],
            })
            .collect();
        let mut sum = CompensatedSum::default();
        for w in g.windows(2) {
            sum.add(w[1] - w[0]);
        }
        let scale = 1.0 + values[k].abs().max(mean.abs());
        let errors = [
            (g[0] - mean).abs(),
            (g[n - 1] - values[k]).abs(),
            (values[k] - mean - sum.value()).abs(),
        ];
        let mut ok = true;
        for (i, err) in errors.into_iter().enumerate() {
            telescoping.record(path, i, err, 0.0, IDENTITY_TOLERANCE * scale);
            ok &= err <= IDENTITY_TOLERANCE * scale;
        }
        records.push(PathRecord { path: path.clone(), probability: probs[k], value: values[k], g, tau, telescopes: ok });
    }

    let martingale = martingale_check(&records, n);
    Ok(MartingaleProfile {
        start: x,
        small_set: small_set.clone(),
        horizon: n,
        c: f.c().to_vec(),
        mean,
        records,
        telescoping: telescoping.finish(),
        martingale,
    })
}

/// Groups paths into atoms of `F_{tau_C^i}` (the prefix up to
/// `min(tau_C^i, n - 1)`) and checks that the increment averages to zero.
fn martingale_check(records: &[PathRecord], n: usize) -> CheckOutcome {
    let mut tally = Tally::default();
    for i in 0..n.saturating_sub(1) {
        let mut atoms: BTreeMap<&[usize], (CompensatedSum, CompensatedSum)> = BTreeMap::new();
        for rec in records {
            let stop = rec.tau[i].map_or(n - 1, |t| t.min(n - 1));
            let entry = atoms.entry(&rec.path[..=stop]).or_default();
            entry.0.add(rec.probability);
            entry.1.add(rec.probability * (rec.g[i + 1] - rec.g[i]));
        }
        for (prefix, (mass, weighted)) in atoms {
            let drift = (weighted.value() / mass.value()).abs();
            tally.record(prefix, i, drift, 0.0, IDENTITY_TOLERANCE);
        }
    }
    tally.finish()
}

/// `G_i - G_{i-1} = 0` whenever `x_{i-1}` is outside the small set.
pub fn fact1_check(profile: &MartingaleProfile) -> CheckOutcome {
    let mut tally = Tally::default();
    for rec in &profile.records {
        for i in 1..profile.horizon {
            if rec.tau[i - 1] == Some(i - 1) {
                tally.skipped += 1;
            } else {
                tally.record(&rec.path, i, (rec.g[i] - rec.g[i - 1]).abs(), 0.0, IDENTITY_TOLERANCE);
            }
        }
    }
    tally.finish()
}

/// The two increment bounds with `sigma = tau_C^i - (i - 1)`:
///
/// ```text
/// |G_i - G_{i-1}|   <= C1 |c|_inf sigma
/// |G_i - G_{i-1}|^2 <= C2 rho^{-2 sigma} sum_{k=i}^{n-1} c_k^2 rho^{k-i}
/// ```
///
/// on `{x_{i-1} in C, tau_C^i <= n - 1}`, where `sigma` is determined by the
/// path. Off the small set the increment must vanish; cells with
/// `tau_C^i >= n` are counted as skipped.
pub fn fact2_check(profile: &MartingaleProfile, l: f64, r: f64, rho: f64) -> Result<CheckOutcome> {
    if !(l >= 1.0) || !(r > 0.0 && r < 1.0) || !(rho >= r && rho < 1.0) {
        return Err(Error::DomainError(format!("need L >= 1 and 0 < r <= rho < 1, got L = {l}, r = {r}, rho = {rho}")));
    }
    let n = profile.horizon;
    let c = &profile.c;
    let c_sup = c.iter().cloned().fold(0.0, f64::max);
    let c1 = 5.0 * l / (1.0 - r);
    let c2 = 16.0 * l * l / (1.0 - rho);
    // weighted[i] = sum_{k=i}^{n-1} c_k^2 rho^{k-i}
    let mut weighted = vec![0.0; n + 1];
    for i in (0..n).rev() {
        weighted[i] = c[i] * c[i] + rho * weighted[i + 1];
    }
    let mut tally = Tally::default();
    for rec in &profile.records {
        for i in 1..n {
            let delta = (rec.g[i] - rec.g[i - 1]).abs();
            if rec.tau[i - 1] != Some(i - 1) {
                tally.record(&rec.path, i, delta, 0.0, FACT_SLACK);
                continue;
            }
            let Some(hit) = rec.tau[i] else {
                tally.skipped += 1;
                continue;
            };
            let sigma = (hit + 1 - i) as f64;
            tally.record(&rec.path, i, delta, c1 * c_sup * sigma, FACT_SLACK);
            let squared = c2 * rho.powf(-2.0 * sigma) * weighted[i];
            tally.record(&rec.path, i, delta * delta, squared, FACT_SLACK);
        }
    }
    Ok(tally.finish())
}

/// `E_x[exp(f - E_x f)]` against `exp(C3 |c|^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fact3Check {
    pub lhs: f64,
    pub rhs: f64,
}

impl Fact3Check {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + FACT_SLACK)
    }
}

pub fn fact3_check(
    kernel: &MarkovKernel,
    x: usize,
    small_set: &SmallSet,
    f: &BoundedDifferenceFunctional,
    beta: &BetaResult,
) -> Result<Fact3Check> {
    check_start(kernel, small_set, x)?;
    let start = Distribution::dirac(kernel.space().clone(), x)?;
    let law = PathLaw::new(kernel, &start, f.horizon())?;
    let lhs = value_distribution(&law, f)?.centered_mgf(1.0);
    Ok(Fact3Check { lhs, rhs: beta.laplace_bound(f.c_norm_sq()) })
}

/// The Chernoff chain at one `t` with `s = t / (C |c|^2)`:
///
/// ```text
/// P(f - E f > t) <= exp(-s t) E[exp(s (f - E f))] <= exp(-s t + C3 s^2 |c|^2)
/// ```
///
/// and the last expression must equal `exp(-beta t^2 / |c|^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChernoffCheck {
    pub t: f64,
    pub s: f64,
    pub exact_tail: f64,
    pub chernoff: f64,
    pub recomposed: f64,
    pub tail_bound: f64,
}

impl ChernoffCheck {
    pub fn holds(&self) -> bool {
        self.exact_tail <= self.chernoff + FACT_SLACK
            && self.chernoff <= self.recomposed * (1.0 + FACT_SLACK)
            && (self.recomposed - self.tail_bound).abs() <= FACT_SLACK
    }
}

/// One [`ChernoffCheck`] per `t`; empty when `c = 0`.
pub fn chernoff_check(
    kernel: &MarkovKernel,
    x: usize,
    small_set: &SmallSet,
    f: &BoundedDifferenceFunctional,
    beta: &BetaResult,
    t_grid: &[f64],
) -> Result<Vec<ChernoffCheck>> {
    check_start(kernel, small_set, x)?;
    let norm = f.c_norm_sq();
    if norm == 0.0 {
        return Ok(Vec::new());
    }
    let start = Distribution::dirac(kernel.space().clone(), x)?;
    let law = PathLaw::new(kernel, &start, f.horizon())?;
    let dist = value_distribution(&law, f)?;
    t_grid
        .iter()
        .map(|&t| {
            let tail_bound = markov_tail_bound(beta, t, f.c())?.value;
            let s = t / (beta.big_c * norm);
            let chernoff = (-s * t).exp() * dist.centered_mgf(s);
            let recomposed = (-s * t + beta.c3 * s * s * norm).exp();
            Ok(ChernoffCheck { t, s, exact_tail: dist.tail(t), chernoff, recomposed, tail_bound })
        })
        .collect()
}

/// Truncation step: coordinates with `c_i > eps` are frozen at the anchor
/// state, giving `f~` with difference bounds `c~`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationCheck {
    pub epsilon: f64,
    pub frozen: Vec<usize>,
    pub c_tilde: Vec<f64>,
    /// `max |f - f~|` over all tuples.
    pub max_gap: f64,
    /// `sum_{c_i > eps} c_i`.
    pub gap_bound: f64,
    /// `|c|^2 / eps`.
    pub norm_bound: f64,
    /// `f~` has bounded differences `c~`.
    pub c_tilde_valid: bool,
}

impl TruncationCheck {
    pub fn holds(&self) -> bool {
        self.c_tilde_valid
            && self.max_gap <= self.gap_bound + FACT_SLACK
            && self.gap_bound <= self.norm_bound + FACT_SLACK
    }
}

pub fn truncation_check(f: &BoundedDifferenceFunctional, epsilon: f64) -> Result<TruncationCheck> {
    if !(epsilon > 0.0) {
        return Err(Error::DomainError(format!("epsilon = {epsilon} must be > 0")));
    }
    let (m, n) = (f.states(), f.horizon());
    check_limit(m, n)?;
    let c = f.c();
    let frozen: Vec<usize> = (0..n).filter(|&i| c[i] > epsilon).collect();
    let c_tilde: Vec<f64> = c.iter().map(|&ci| if ci > epsilon { 0.0 } else { ci }).collect();

    let mut values = Vec::with_capacity(tuple_count(m, n) as usize);
    let mut max_gap = 0.0_f64;
    let mut path = vec![0usize; n];
    let mut moved = vec![0usize; n];
    loop {
        moved.copy_from_slice(&path);
        for &i in &frozen {
            moved[i] = ANCHOR;
        }
        let v = f.eval(&moved);
        max_gap = max_gap.max((f.eval(&path) - v).abs());
        values.push(v);
        if !advance(&mut path, m) {
            break;
        }
    }
    let truncated = BoundedDifferenceFunctional::tabulated(m, n, values, Some(c.to_vec()))?;
    let c_tilde_valid = bd_check(&truncated, &c_tilde)?.passed();
    let gap_bound = frozen.iter().map(|&i| c[i]).sum();
    let norm_bound = f.c_norm_sq() / epsilon;
    Ok(TruncationCheck { epsilon, frozen, c_tilde, max_gap, gap_bound, norm_bound, c_tilde_valid })
}

/// `w_i(x_i) = E[h(x*,..,x*, x_i, X_{i+1:}) - h(x*,..,x*, x*, X_{i+1:})]`
/// with the suffix run from `x_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WbarCheck {
    pub i: usize,
    pub values: Vec<f64>,
    pub sup_abs: f64,
    pub c_i: f64,
}

impl WbarCheck {
    pub fn holds(&self) -> bool {
        self.sup_abs <= self.c_i + LEMMA1_SLACK
    }
}

pub fn wbar_check(kernel: &MarkovKernel, h: &BoundedDifferenceFunctional, i: usize) -> Result<WbarCheck> {
    let (m, n) = (kernel.size(), h.horizon());
    if h.states() != m {
        return Err(Error::SpaceMismatch);
    }
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, horizon: n });
    }
    check_limit(m, n - i)?;
    let mut values = Vec::with_capacity(m);
    let mut path = vec![ANCHOR; n];
    for xi in 0..m {
        let mut acc = CompensatedSum::default();
        suffix_walk(kernel, xi, i, 1.0, &mut path, &mut |p, w| {
            let mut anchored = p.to_vec();
            anchored[i] = ANCHOR;
            acc.add(w * (h.eval(p) - h.eval(&anchored)));
        });
        values.push(acc.value());
    }
    let sup_abs = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    Ok(WbarCheck { i, values, sup_abs, c_i: h.c()[i] })
}

/// Fills `path[i] = x` and then `path[i+1..]` from the kernel.
fn suffix_walk(
    kernel: &MarkovKernel,
    x: usize,
    i: usize,
    mass: f64,
    path: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize], f64),
) {
    path[i] = x;
    if i + 1 == path.len() {
        visit(path, mass);
        return;
    }
    for (y, &p) in kernel.row(x).iter().enumerate() {
        if p > 0.0 {
            suffix_walk(kernel, y, i + 1, mass * p, path, visit);
        }
    }
    path[i + 1] = ANCHOR;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Failure {
    pub instance: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Batch {
    pub seed: u64,
    pub instances: usize,
    pub passed: usize,
    pub worst_margin: Option<f64>,
    /// First few failures, if any.
    pub failures: Vec<Lemma1Failure>,
}

/// A random kernel on `m` states; about a third of the entries are zero.
pub fn random_kernel<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<MarkovKernel> {
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            let mut row: Vec<f64> =
                (0..m).map(|_| if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random::<f64>() }).collect();
            if row.iter().all(|&p| p == 0.0) {
                row[rng.random_range(0..m)] = 1.0;
            }
            let total: f64 = row.iter().sum();
            row.iter().map(|p| p / total).collect()
        })
        .collect();
    MarkovKernel::from_rows(&rows)
}

fn random_distribution<R: Rng + ?Sized>(kernel: &MarkovKernel, rng: &mut R) -> Result<Distribution> {
    if rng.random::<f64>() < 0.25 {
        return Distribution::dirac(kernel.space().clone(), rng.random_range(0..kernel.size()));
    }
    let mass = (0..kernel.size()).map(|_| rng.random::<f64>() + 1e-3).collect();
    Distribution::from_unnormalized(kernel.space().clone(), mass)
}

/// Coupling inequality on `count` random instances with `m, n` in `2..=4`,
/// random initial laws and random tabulated functionals with minimal `c`.
pub fn lemma1_batch(count: usize, seed: u64) -> Result<Lemma1Batch> {
    let mut out = Lemma1Batch { seed, instances: count, passed: 0, worst_margin: None, failures: Vec::new() };
    for k in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed.wrapping_add(k as u64)));
        let m = rng.random_range(2..=4);
        let n = rng.random_range(2..=4);
        let kernel = random_kernel(m, &mut rng)?;
        let xi = random_distribution(&kernel, &mut rng)?;
        let xi_prime = random_distribution(&kernel, &mut rng)?;
        let values = (0..tuple_count(m, n) as usize).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = BoundedDifferenceFunctional::tabulated(m, n, values, None)?;
        let gap = lemma1_gap(&kernel, &xi, &xi_prime, &h)?;
        let margin = gap.rhs - gap.lhs;
        out.worst_margin = Some(out.worst_margin.map_or(margin, |w: f64| w.min(margin)));
        if gap.holds(LEMMA1_SLACK) {
            out.passed += 1;
        } else if out.failures.len() < 10 {
            out.failures.push(Lemma1Failure { instance: k, lhs: gap.lhs, rhs: gap.rhs });
        }
    }
    Ok(out)
}
