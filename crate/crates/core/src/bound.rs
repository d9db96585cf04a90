//! Concentration constant for geometrically ergodic chains and the resulting
//! tail bounds, alongside the classical independent-case bound.
//!
//! With `rho = max(r, u^{-1/4})`:
//!
//! ```text
//! C1 = 5L / (1 - r)
//! C2 = 16 L^2 / (1 - rho)
//! C3 = 4L (5 / log u + 4 M L) / (1 - rho)^2
//! C  = 2 C3
//! beta = (1 - rho)^2 / (16 L) * (5 / log u + 4 M L)^{-1} = 1 / (4 C3)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaResult {
    pub beta: f64,
    pub rho: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub big_c: f64,
    pub u: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub r: f64,
}

impl BetaResult {
    /// Coordinates with `c_i` above `log u / (2 C1)` are frozen by the
    /// truncation step of the Laplace bound.
    pub fn truncation_level(&self) -> f64 {
        self.u.ln() / (2.0 * self.c1)
    }

    /// `exp(C3 ||c||^2)`, the bound on the centered exponential moment.
    pub fn laplace_bound(&self, c_norm_sq: f64) -> f64 {
        (self.c3 * c_norm_sq).exp()
    }
}

pub fn beta_constant(u: f64, m: f64, l: f64, r: f64) -> Result<BetaResult> {
    if !(u > 1.0) || !u.is_finite() {
        return Err(Error::DomainError(format!("u = {u} must be a finite real > 1")));
    }
    if !(m >= u) || !m.is_finite() {
        return Err(Error::DomainError(format!("M = {m} must be finite and >= u = {u}")));
    }
    if !(l >= 1.0) || !l.is_finite() {
        return Err(Error::DomainError(format!("L = {l} must be finite and >= 1")));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::DomainError(format!("r = {r} must lie in (0, 1)")));
    }
    let log_u = u.ln();
    let rho = r.max(u.powf(-0.25));
    let gap = 1.0 - rho;
    let bracket = 5.0 / log_u + 4.0 * m * l;
    let c1 = 5.0 * l / (1.0 - r);
    let c2 = 16.0 * l * l / gap;
    let c3 = 4.0 * l * bracket / (gap * gap);
    let beta = gap * gap / (16.0 * l) / bracket;
    Ok(BetaResult { beta, rho, c1, c2, c3, big_c: 2.0 * c3, u, m, l, r })
}

/// Tail bound `exp(-k t^2 / ||c||^2)` at one `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    pub t: f64,
    pub c_norm_sq: f64,
    pub value: f64,
    /// All `c_i = 0`: the functional is constant and the bound is vacuous.
    pub degenerate: bool,
}

pub fn c_norm_sq(c: &[f64]) -> f64 {
    c.iter().map(|x| x * x).sum()
}

fn gaussian_tail(exponent: f64, t: f64, c: &[f64]) -> Result<TailBound> {
    if !(t > 0.0) {
        return Err(Error::DomainError(format!("t = {t} must be > 0")));
    }
    if c.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::DomainError("difference bounds must be finite and >= 0".into()));
    }
    let norm = c_norm_sq(c);
    if norm == 0.0 {
        return Ok(TailBound { t, c_norm_sq: 0.0, value: 1.0, degenerate: true });
    }
    let value = (-exponent * t * t / norm).exp();
    Ok(TailBound { t, c_norm_sq: norm, value, degenerate: false })
}

pub fn markov_tail_bound(beta: &BetaResult, t: f64, c: &[f64]) -> Result<TailBound> {
    gaussian_tail(beta.beta, t, c)
}

pub fn iid_tail_bound(t: f64, c: &[f64]) -> Result<TailBound> {
    gaussian_tail(2.0, t, c)
}
