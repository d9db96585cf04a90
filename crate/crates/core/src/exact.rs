//! Exhaustive path-law engine: exact expectations, tail probabilities and
//! exponential moments of functionals of `(X_0, ..., X_{n-1})`, plus the
//! coupling inequality and the conditional-expectation gap checks.
//!
//! Paths are enumerated depth first in lexicographic order; zero-probability
//! branches are pruned and all accumulations use compensated summation.

use serde::{Deserialize, Serialize};

use crate::ergodicity::ErgodicityCertificate;
use crate::error::{Error, Result};
use crate::functionals::{tuple_count, BoundedDifferenceFunctional};
use crate::kernel::{marginal, tv_distance, Distribution, MarkovKernel, SmallSet};
use crate::linalg::CompensatedSum;

/// Default cap on the number of enumerated paths.
pub const DEFAULT_BUDGET: f64 = 1e7;
/// Environment variable overriding [`DEFAULT_BUDGET`].
pub const BUDGET_ENV: &str = "ERGOCERT_BUDGET";
/// Slack used by the conditional-expectation gap check.
pub const LEMMA2_TOLERANCE: f64 = 1e-10;

/// Enumeration budget, from `ERGOCERT_BUDGET` when set to a positive number.
pub fn enumeration_budget() -> f64 {
    std::env::var(BUDGET_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<f64>().ok())
        .filter(|v| *v > 0.0)
        .unwrap_or(DEFAULT_BUDGET)
}

fn check_budget(states: usize, length: usize) -> Result<()> {
    let paths = tuple_count(states, length);
    let budget = enumeration_budget();
    if paths > budget {
        Err(Error::BudgetExceeded { paths, budget })
    } else {
        Ok(())
    }
}

/// Law of `(X_0, ..., X_{n-1})` for a chain started from `initial`.
#[derive(Debug, Clone, Copy)]
pub struct PathLaw<'a> {
    pub kernel: &'a MarkovKernel,
    pub initial: &'a Distribution,
    pub horizon: usize,
}

impl<'a> PathLaw<'a> {
    pub fn new(kernel: &'a MarkovKernel, initial: &'a Distribution, horizon: usize) -> Result<Self> {
        if initial.size() != kernel.size() || initial.space() != kernel.space() {
            return Err(Error::SpaceMismatch);
        }
        if horizon == 0 {
            return Err(Error::HorizonTooSmall { got: 0, min: 1 });
        }
        Ok(Self { kernel, initial, horizon })
    }

    /// Calls `visit(path, probability)` on every positive-probability path.
    pub fn for_each_path(&self, mut visit: impl FnMut(&[usize], f64)) -> Result<()> {
        check_budget(self.kernel.size(), self.horizon)?;
        let mut path = Vec::with_capacity(self.horizon);
        walk(self.kernel, self.initial.weights(), 1.0, self.horizon, &mut path, &mut visit);
        Ok(())
    }

    /// Total enumerated probability mass; 1 up to rounding.
    pub fn total_mass(&self) -> Result<f64> {
        let mut mass = CompensatedSum::default();
        self.for_each_path(|_, p| mass.add(p))?;
        Ok(mass.value())
    }

    fn check_functional(&self, f: &BoundedDifferenceFunctional) -> Result<()> {
        if f.horizon() != self.horizon {
            return Err(Error::HorizonMismatch { law: self.horizon, functional: f.horizon() });
        }
        if f.states() != self.kernel.size() {
            return Err(Error::SpaceMismatch);
        }
        Ok(())
    }
}

/// Extends `path` to `length` with the first new position drawn from `first`
/// and the rest from the kernel rows.
fn walk(
    kernel: &MarkovKernel,
    first: &[f64],
    mass: f64,
    length: usize,
    path: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize], f64),
) {
    if path.len() == length {
        visit(path, mass);
        return;
    }
    for (x, &p) in first.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        path.push(x);
        walk(kernel, kernel.row(x), mass * p, length, path, visit);
        path.pop();
    }
}

/// Distribution of `f(X_{0:n-1})`: atoms sorted by value with their mass.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueDistribution {
    pub atoms: Vec<(f64, f64)>,
    pub mean: f64,
}

impl ValueDistribution {
    /// `P(f - E f > t)`.
    pub fn tail(&self, t: f64) -> f64 {
        let mut tail = CompensatedSum::default();
        for &(v, p) in self.atoms.iter().rev() {
            if v - self.mean > t {
                tail.add(p);
            } else {
                break;
            }
        }
        tail.value().clamp(0.0, 1.0)
    }

    /// `E[exp(s (f - E f))]`.
    pub fn centered_mgf(&self, s: f64) -> f64 {
        let mut acc = CompensatedSum::default();
        for &(v, p) in &self.atoms {
            acc.add(p * (s * (v - self.mean)).exp());
        }
        acc.value()
    }
}

pub fn value_distribution(law: &PathLaw, f: &BoundedDifferenceFunctional) -> Result<ValueDistribution> {
    law.check_functional(f)?;
    let mut samples: Vec<(f64, f64)> = Vec::new();
    let mut mean = CompensatedSum::default();
    law.for_each_path(|path, p| {
        let v = f.eval(path);
        mean.add(p * v);
        samples.push((v, p));
    })?;
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut atoms: Vec<(f64, f64)> = Vec::new();
    let mut pending: Option<(f64, CompensatedSum)> = None;
    for (v, p) in samples {
        match pending.as_mut() {
            Some((value, mass)) if *value == v => mass.add(p),
            _ => {
                if let Some((value, mass)) = pending.take() {
                    atoms.push((value, mass.value()));
                }
                let mut mass = CompensatedSum::default();
                mass.add(p);
                pending = Some((v, mass));
            }
        }
    }
    if let Some((value, mass)) = pending {
        atoms.push((value, mass.value()));
    }
    Ok(ValueDistribution { atoms, mean: mean.value() })
}

/// `E[f(X_{0:n-1})]` by path enumeration.
pub fn exact_expectation(law: &PathLaw, f: &BoundedDifferenceFunctional) -> Result<f64> {
    law.check_functional(f)?;
    let mut acc = CompensatedSum::default();
    law.for_each_path(|path, p| acc.add(p * f.eval(path)))?;
    Ok(acc.value())
}

/// `sum_i (xi P^i)(g_i)` for functionals that are sums over coordinates;
/// `None` for the other kinds. Costs `O(n m^2)` and needs no enumeration.
pub fn marginal_expectation(law: &PathLaw, f: &BoundedDifferenceFunctional) -> Result<Option<f64>> {
    law.check_functional(f)?;
    let Some(tables) = f.coordinate_tables() else {
        return Ok(None);
    };
    let mut mu = law.initial.weights().to_vec();
    let mut acc = CompensatedSum::default();
    for table in &tables {
        acc.add(mu.iter().zip(table).map(|(w, g)| w * g).sum());
        mu = law.kernel.step(&mu);
    }
    Ok(Some(acc.value()))
}

/// `P(f - E f > t)` with strict inequality.
pub fn exact_tail(law: &PathLaw, f: &BoundedDifferenceFunctional, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::DomainError(format!("t = {t} must be > 0")));
    }
    Ok(value_distribution(law, f)?.tail(t))
}

/// `E[exp(f - E f)]`.
pub fn exact_laplace(law: &PathLaw, f: &BoundedDifferenceFunctional) -> Result<f64> {
    Ok(value_distribution(law, f)?.centered_mgf(1.0))
}

/// Both sides of `|E_xi h - E_xi' h| <= 2 sum_i c_i d_TV(xi P^i, xi' P^i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Gap {
    pub lhs: f64,
    pub rhs: f64,
}

impl Lemma1Gap {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs + slack
    }
}

pub fn lemma1_gap(
    kernel: &MarkovKernel,
    xi: &Distribution,
    xi_prime: &Distribution,
    h: &BoundedDifferenceFunctional,
) -> Result<Lemma1Gap> {
    let n = h.horizon();
    let left = exact_expectation(&PathLaw::new(kernel, xi, n)?, h)?;
    let right = exact_expectation(&PathLaw::new(kernel, xi_prime, n)?, h)?;
    let mut rhs = CompensatedSum::default();
    let (mut a, mut b) = (xi.clone(), xi_prime.clone());
    for &c in h.c() {
        rhs.add(2.0 * c * tv_distance(&a, &b)?);
        a = marginal(&a, kernel, 1)?;
        b = marginal(&b, kernel, 1)?;
    }
    Ok(Lemma1Gap { lhs: (left - right).abs(), rhs: rhs.value() })
}

fn suffix_expectation(
    kernel: &MarkovKernel,
    f: &BoundedDifferenceFunctional,
    prefix: &[usize],
    first: &[f64],
) -> f64 {
    let mut acc = CompensatedSum::default();
    let mut path = prefix.to_vec();
    walk(kernel, first, 1.0, f.horizon(), &mut path, &mut |p, w| acc.add(w * f.eval(p)));
    acc.value()
}

/// `(g_i, g_{i,pi})` at `prefix = x_{0:i}`: the expectation of `f` with the
/// suffix `x_{i+1:n-1}` run from `x_i`, respectively with `x_{i+1} ~ pi`.
/// At `i = n - 1` both equal `f(prefix)`.
pub fn g_pair(
    kernel: &MarkovKernel,
    pi: &Distribution,
    f: &BoundedDifferenceFunctional,
    i: usize,
    prefix: &[usize],
) -> Result<(f64, f64)> {
    let n = f.horizon();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, horizon: n });
    }
    if prefix.len() != i + 1 {
        return Err(Error::PrefixLength { expected: i + 1, got: prefix.len() });
    }
    for &x in prefix {
        kernel.validate_state(x)?;
    }
    if f.states() != kernel.size() || pi.size() != kernel.size() {
        return Err(Error::SpaceMismatch);
    }
    if i == n - 1 {
        let v = f.eval(prefix);
        return Ok((v, v));
    }
    check_budget(kernel.size(), n - 1 - i)?;
    let from_state = suffix_expectation(kernel, f, prefix, kernel.row(prefix[i]));
    let from_pi = suffix_expectation(kernel, f, prefix, pi.weights());
    Ok((from_state, from_pi))
}

/// Exponent used for the decay factor in the gap bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayExponent {
    /// `r^{j-i}`: time elapsed since index `i`.
    Elapsed,
    /// `r^j`: absolute index. Kept to show the check can tell the two apart.
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Lemma2Check {
    Pass { checked: usize, min_margin: f64 },
    Violation { i: usize, prefix: Vec<usize>, lhs: f64, rhs: f64 },
}

impl Lemma2Check {
    pub fn passed(&self) -> bool {
        matches!(self, Lemma2Check::Pass { .. })
    }
}

/// Checks `|g_i - g_{i,pi}| <= 2L sum_{j=i+1}^{n-1} c_j r^{j-i}` for every `i`
/// and every prefix ending in the small set.
pub fn lemma2_check(
    kernel: &MarkovKernel,
    pi: &Distribution,
    small_set: &SmallSet,
    f: &BoundedDifferenceFunctional,
    erg: &ErgodicityCertificate,
) -> Result<Lemma2Check> {
    lemma2_check_with_exponent(kernel, pi, small_set, f, erg, DecayExponent::Elapsed)
}

pub fn lemma2_check_with_exponent(
    kernel: &MarkovKernel,
    pi: &Distribution,
    small_set: &SmallSet,
    f: &BoundedDifferenceFunctional,
    erg: &ErgodicityCertificate,
    exponent: DecayExponent,
) -> Result<Lemma2Check> {
    let n = f.horizon();
    let m = kernel.size();
    check_budget(m, n)?;
    let c = f.c();
    let mut checked = 0;
    let mut min_margin = f64::INFINITY;
    for i in 0..n {
        let mut rhs = CompensatedSum::default();
        for (j, &cj) in c.iter().enumerate().skip(i + 1) {
            let power = match exponent {
                DecayExponent::Elapsed => j - i,
                DecayExponent::Absolute => j,
            };
            rhs.add(cj * erg.r.powi(power as i32));
        }
        let rhs = 2.0 * erg.l * rhs.value();

        let mut head = vec![0usize; i];
        loop {
            for &last in small_set.indices() {
                let mut prefix = head.clone();
                prefix.push(last);
                let (g, g_pi) = g_pair(kernel, pi, f, i, &prefix)?;
                let lhs = (g - g_pi).abs();
                if lhs > rhs + LEMMA2_TOLERANCE {
                    return Ok(Lemma2Check::Violation { i, prefix, lhs, rhs });
                }
                checked += 1;
                min_margin = min_margin.min(rhs - lhs);
            }
            if !crate::functionals::advance(&mut head, m) {
                break;
            }
        }
    }
    Ok(Lemma2Check::Pass { checked, min_margin })
}
