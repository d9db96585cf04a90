//! Functionals `f : X^n -> R` with the bounded difference property
//! `|f(x) - f(y)| <= sum_i c_i 1{x_i != y_i}`.
//!
//! Every constructor except [`BoundedDifferenceFunctional::tabulated`] derives a
//! valid difference vector from the structure of the functional. Tabulated
//! functionals are checked exhaustively.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `m^n` that the exhaustive checks will enumerate.
pub const ENUMERATION_LIMIT: f64 = 1e6;
/// Slack on difference comparisons.
pub const BD_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionalKind {
    /// `sum_i g_i(x_i)`, one value table per coordinate.
    Additive { tables: Vec<Vec<f64>> },
    /// `sum_i w_i 1{x_i in A}`.
    Occupation { target: Vec<usize>, weights: Vec<f64> },
    /// `max_{g in class} sum_i g(x_i)`.
    SupOfClass { class: Vec<Vec<f64>> },
    /// Explicit value per tuple, lexicographic with `x_0` most significant.
    Tabulated { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedDifferenceFunctional {
    states: usize,
    n: usize,
    c: Vec<f64>,
    #[serde(flatten)]
    kind: FunctionalKind,
}

/// `m^n` as a float, for budget comparisons.
pub fn tuple_count(states: usize, n: usize) -> f64 {
    (states as f64).powi(n as i32)
}

fn check_table(table: &[f64], states: usize) -> Result<()> {
    if table.len() != states {
        return Err(Error::InvalidFunctional(format!(
            "value table has {} entries for {states} states",
            table.len()
        )));
    }
    if table.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidFunctional("non-finite value".into()));
    }
    Ok(())
}

fn range(table: &[f64]) -> f64 {
    let hi = table.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = table.iter().cloned().fold(f64::INFINITY, f64::min);
    hi - lo
}

impl BoundedDifferenceFunctional {
    pub fn additive(states: usize, tables: Vec<Vec<f64>>) -> Result<Self> {
        if tables.is_empty() {
            return Err(Error::InvalidFunctional("horizon must be positive".into()));
        }
        for table in &tables {
            check_table(table, states)?;
        }
        let c = tables.iter().map(|t| range(t)).collect();
        Ok(Self { states, n: tables.len(), c, kind: FunctionalKind::Additive { tables } })
    }

    pub fn occupation(states: usize, target: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidFunctional("horizon must be positive".into()));
        }
        if let Some(&bad) = target.iter().find(|&&x| x >= states) {
            return Err(Error::StateOutOfRange { index: bad, size: states });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidFunctional("non-finite weight".into()));
        }
        let mut target = target;
        target.sort_unstable();
        target.dedup();
        let proper = !target.is_empty() && target.len() < states;
        let c = weights.iter().map(|w| if proper { w.abs() } else { 0.0 }).collect();
        Ok(Self {
            states,
            n: weights.len(),
            c,
            kind: FunctionalKind::Occupation { target, weights },
        })
    }

    /// Number of visits to `target` among the `n` coordinates.
    pub fn counting(states: usize, n: usize, target: Vec<usize>) -> Result<Self> {
        Self::occupation(states, target, vec![1.0; n])
    }

    pub fn sup_of_class(states: usize, n: usize, class: Vec<Vec<f64>>) -> Result<Self> {
        if n == 0 || class.is_empty() {
            return Err(Error::InvalidFunctional("need a positive horizon and a nonempty class".into()));
        }
        for g in &class {
            check_table(g, states)?;
        }
        let width = class.iter().map(|g| range(g)).fold(0.0, f64::max);
        Ok(Self { states, n, c: vec![width; n], kind: FunctionalKind::SupOfClass { class } })
    }

    /// Explicit table of `m^n` values. Without `c`, the minimal difference
    /// vector is computed; with `c`, it must pass [`bd_check`].
    pub fn tabulated(states: usize, n: usize, values: Vec<f64>, c: Option<Vec<f64>>) -> Result<Self> {
        let count = tuple_count(states, n);
        if n == 0 || count > ENUMERATION_LIMIT {
            return Err(Error::TooLargeToEnumerate { size: count, limit: ENUMERATION_LIMIT });
        }
        if values.len() as f64 != count || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidFunctional(format!(
                "expected {count} finite values, got {}",
                values.len()
            )));
        }
        let mut f = Self { states, n, c: vec![0.0; n], kind: FunctionalKind::Tabulated { values } };
        f.c = minimal_c(&f)?;
        match c {
            None => Ok(f),
            Some(c) => f.with_c(c),
        }
    }

    /// Constant functional; its difference vector is zero.
    pub fn constant(states: usize, n: usize, value: f64) -> Result<Self> {
        let mut tables = vec![vec![0.0; states]; n];
        if let Some(first) = tables.first_mut() {
            first.iter_mut().for_each(|v| *v = value);
        }
        Self::additive(states, tables)
    }

    /// Replaces the difference vector. Accepted when it dominates the derived
    /// one coordinatewise, or otherwise when the exhaustive check passes.
    pub fn with_c(mut self, c: Vec<f64>) -> Result<Self> {
        if c.len() != self.n {
            return Err(Error::LengthMismatch { expected: self.n, got: c.len() });
        }
        if c.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidFunctional("difference bounds must be finite and >= 0".into()));
        }
        let dominates = c.iter().zip(&self.c).all(|(new, old)| new >= old);
        if !dominates {
            if let BdCheck::Violation { coordinate, excess, .. } = bd_check(&self, &c)? {
                return Err(Error::NotBoundedDifference { coordinate, excess });
            }
        }
        self.c = c;
        Ok(self)
    }

    /// `s f` with difference vector `s c`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::DomainError(format!("scale {s} must be positive")));
        }
        let scale = |v: &Vec<f64>| v.iter().map(|x| x * s).collect::<Vec<_>>();
        let kind = match &self.kind {
            FunctionalKind::Additive { tables } => FunctionalKind::Additive { tables: tables.iter().map(scale).collect() },
            FunctionalKind::Occupation { target, weights } => {
                FunctionalKind::Occupation { target: target.clone(), weights: scale(weights) }
            }
            FunctionalKind::SupOfClass { class } => FunctionalKind::SupOfClass { class: class.iter().map(scale).collect() },
            FunctionalKind::Tabulated { values } => FunctionalKind::Tabulated { values: scale(values) },
        };
        Ok(Self { states: self.states, n: self.n, c: scale(&self.c), kind })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn kind(&self) -> &FunctionalKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            FunctionalKind::Additive { .. } => "additive",
            FunctionalKind::Occupation { .. } => "occupation",
            FunctionalKind::SupOfClass { .. } => "sup_of_class",
            FunctionalKind::Tabulated { .. } => "tabulated",
        }
    }

    pub fn c_sum(&self) -> f64 {
        self.c.iter().sum()
    }

    pub fn c_norm_sq(&self) -> f64 {
        self.c.iter().map(|x| x * x).sum()
    }

    pub fn c_sup(&self) -> f64 {
        self.c.iter().cloned().fold(0.0, f64::max)
    }

    /// Per-coordinate value tables when the functional is a sum over
    /// coordinates (additive and occupation kinds).
    pub fn coordinate_tables(&self) -> Option<Vec<Vec<f64>>> {
        match &self.kind {
            FunctionalKind::Additive { tables } => Some(tables.clone()),
            FunctionalKind::Occupation { target, weights } => Some(
                weights
                    .iter()
                    .map(|w| (0..self.states).map(|x| if target.contains(&x) { *w } else { 0.0 }).collect())
                    .collect(),
            ),
            _ => None,
        }
    }

    pub fn evaluate(&self, path: &[usize]) -> Result<f64> {
        if path.len() != self.n {
            return Err(Error::LengthMismatch { expected: self.n, got: path.len() });
        }
        if let Some(&bad) = path.iter().find(|&&x| x >= self.states) {
            return Err(Error::StateOutOfRange { index: bad, size: self.states });
        }
        Ok(self.eval(path))
    }

    /// Evaluation without length or range checks.
    pub(crate) fn eval(&self, path: &[usize]) -> f64 {
        match &self.kind {
            FunctionalKind::Additive { tables } => tables.iter().zip(path).map(|(g, &x)| g[x]).sum(),
            FunctionalKind::Occupation { target, weights } => weights
                .iter()
                .zip(path)
                .filter(|(_, x)| target.binary_search(x).is_ok())
                .map(|(w, _)| w)
                .sum(),
            FunctionalKind::SupOfClass { class } => class
                .iter()
                .map(|g| path.iter().map(|&x| g[x]).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max),
            FunctionalKind::Tabulated { values } => {
                let index = path.iter().fold(0usize, |acc, &x| acc * self.states + x);
                values[index]
            }
        }
    }

    fn all_values(&self) -> Result<Vec<f64>> {
        let count = tuple_count(self.states, self.n);
        if count > ENUMERATION_LIMIT {
            return Err(Error::TooLargeToEnumerate { size: count, limit: ENUMERATION_LIMIT });
        }
        if let FunctionalKind::Tabulated { values } = &self.kind {
            return Ok(values.clone());
        }
        let mut path = vec![0usize; self.n];
        let mut out = Vec::with_capacity(count as usize);
        loop {
            out.push(self.eval(&path));
            if !advance(&mut path, self.states) {
                return Ok(out);
            }
        }
    }
}

/// Lexicographic successor; returns false after the last tuple.
pub(crate) fn advance(path: &mut [usize], states: usize) -> bool {
    for slot in path.iter_mut().rev() {
        *slot += 1;
        if *slot < states {
            return true;
        }
        *slot = 0;
    }
    false
}

fn decode(mut index: usize, states: usize, n: usize) -> Vec<usize> {
    let mut path = vec![0; n];
    for slot in path.iter_mut().rev() {
        *slot = index % states;
        index /= states;
    }
    path
}

/// Result of the exhaustive bounded-difference check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BdCheck {
    Pass,
    /// First violation in lexicographic order of `(tuple, coordinate, replacement)`.
    Violation { coordinate: usize, tuple: Vec<usize>, replacement: usize, excess: f64 },
}

impl BdCheck {
    pub fn passed(&self) -> bool {
        matches!(self, BdCheck::Pass)
    }
}

/// Checks `|f(x) - f(x with x_i -> y)| <= c_i + 1e-12` over all tuples,
/// coordinates and replacements.
pub fn bd_check(f: &BoundedDifferenceFunctional, c: &[f64]) -> Result<BdCheck> {
    if c.len() != f.n {
        return Err(Error::LengthMismatch { expected: f.n, got: c.len() });
    }
    let values = f.all_values()?;
    let m = f.states;
    let strides: Vec<usize> = (0..f.n).map(|i| m.pow((f.n - 1 - i) as u32)).collect();
    for (index, &value) in values.iter().enumerate() {
        for (i, &stride) in strides.iter().enumerate() {
            let digit = (index / stride) % m;
            let base = index - digit * stride;
            for y in (0..m).filter(|&y| y != digit) {
                let diff = (value - values[base + y * stride]).abs();
                if diff > c[i] + BD_TOLERANCE {
                    return Ok(BdCheck::Violation {
                        coordinate: i,
                        tuple: decode(index, m, f.n),
                        replacement: y,
                        excess: diff - c[i],
                    });
                }
            }
        }
    }
    Ok(BdCheck::Pass)
}

/// Tightest coordinatewise difference vector.
pub fn minimal_c(f: &BoundedDifferenceFunctional) -> Result<Vec<f64>> {
    let values = f.all_values()?;
    let m = f.states;
    let mut c = vec![0.0_f64; f.n];
    for (i, slot) in c.iter_mut().enumerate() {
        let stride = m.pow((f.n - 1 - i) as u32);
        for (index, &value) in values.iter().enumerate() {
            let digit = (index / stride) % m;
            if digit != 0 {
                continue;
            }
            // spread of f along coordinate i with the other coordinates fixed
            let (mut lo, mut hi) = (value, value);
            for y in 1..m {
                let v = values[index + y * stride];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            *slot = slot.max(hi - lo);
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn evaluate_examples() {
        let f = BoundedDifferenceFunctional::additive(2, vec![vec![0.0, 1.0]; 3]).unwrap();
        assert_eq!(f.evaluate(&[0, 1, 1]).unwrap(), 2.0);
        let occ = BoundedDifferenceFunctional::counting(2, 3, vec![0]).unwrap();
        assert_eq!(occ.evaluate(&[0, 1, 0]).unwrap(), 2.0);
        let tab = BoundedDifferenceFunctional::tabulated(2, 1, vec![3.0, 7.0], None).unwrap();
        assert_eq!(tab.evaluate(&[1]).unwrap(), 7.0);
        assert_eq!(tab.c(), &[4.0]);
        assert_eq!(
            f.evaluate(&[0, 1]),
            Err(Error::LengthMismatch { expected: 3, got: 2 })
        );
    }

    #[test]
    fn bd_check_examples() {
        let f = BoundedDifferenceFunctional::counting(2, 4, vec![1]).unwrap();
        assert!(bd_check(&f, &[1.0; 4]).unwrap().passed());
        match bd_check(&f, &[0.5; 4]).unwrap() {
            BdCheck::Violation { coordinate, tuple, replacement, excess } => {
                assert_eq!((coordinate, replacement), (0, 1));
                assert_eq!(tuple, vec![0, 0, 0, 0]);
                assert!((excess - 0.5).abs() < 1e-15);
            }
            BdCheck::Pass => panic!("expected a violation"),
        }
        let constant = BoundedDifferenceFunctional::tabulated(2, 2, vec![5.0; 4], None).unwrap();
        assert!(bd_check(&constant, &[0.0, 0.0]).unwrap().passed());
        let big = BoundedDifferenceFunctional::counting(10, 7, vec![1]).unwrap();
        assert!(matches!(bd_check(&big, &[1.0; 7]), Err(Error::TooLargeToEnumerate { .. })));
    }

    #[test]
    fn minimal_c_examples() {
        let f = BoundedDifferenceFunctional::counting(2, 5, vec![1]).unwrap();
        assert_eq!(minimal_c(&f).unwrap(), vec![1.0; 5]);
        let f = BoundedDifferenceFunctional::additive(2, vec![vec![0.0, 3.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(minimal_c(&f).unwrap(), vec![3.0, 0.0]);
        let g = vec![0.0, 1.0];
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let sup = BoundedDifferenceFunctional::sup_of_class(2, 3, vec![g, neg]).unwrap();
        assert_eq!(minimal_c(&sup).unwrap(), vec![1.0; 3]);
        assert_eq!(sup.c(), &[1.0; 3]);
    }

    #[test]
    fn explicit_c_is_validated() {
        let f = BoundedDifferenceFunctional::counting(2, 3, vec![1]).unwrap();
        assert!(f.clone().with_c(vec![2.0; 3]).is_ok());
        assert!(matches!(f.with_c(vec![0.5; 3]), Err(Error::NotBoundedDifference { .. })));
        assert!(BoundedDifferenceFunctional::tabulated(2, 1, vec![0.0, 2.0], Some(vec![1.0])).is_err());
    }

    #[test]
    fn trivial_occupations_have_zero_sensitivity() {
        let all = BoundedDifferenceFunctional::counting(3, 4, vec![0, 1, 2]).unwrap();
        assert_eq!(all.c(), &[0.0; 4]);
        let none = BoundedDifferenceFunctional::counting(3, 4, vec![]).unwrap();
        assert_eq!(none.c(), &[0.0; 4]);
        assert_eq!(none.evaluate(&[0, 1, 2, 0]).unwrap(), 0.0);
    }

    fn functional_strategy() -> impl Strategy<Value = BoundedDifferenceFunctional> {
        (2usize..=3, 1usize..=4).prop_flat_map(|(m, n)| {
            prop_oneof![
                proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, m), n)
                    .prop_map(move |t| BoundedDifferenceFunctional::additive(m, t).unwrap()),
                proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, m), 1..4)
                    .prop_map(move |cl| BoundedDifferenceFunctional::sup_of_class(m, n, cl).unwrap()),
                proptest::collection::vec(-3.0f64..3.0, m.pow(n as u32))
                    .prop_map(move |v| BoundedDifferenceFunctional::tabulated(m, n, v, None).unwrap()),
            ]
        })
    }

    proptest! {
        #[test]
        fn minimal_c_is_tight(f in functional_strategy(), eps in 1e-6f64..0.5) {
            let c = minimal_c(&f).unwrap();
            prop_assert!(bd_check(&f, &c).unwrap().passed());
            prop_assert!(bd_check(&f, f.c()).unwrap().passed());
            for i in 0..c.len() {
                if c[i] > eps {
                    let mut lowered = c.clone();
                    lowered[i] -= eps;
                    prop_assert!(!bd_check(&f, &lowered).unwrap().passed());
                }
            }
        }

        #[test]
        fn scaling_scales_minimal_c(f in functional_strategy(), s in 0.1f64..10.0) {
            let base = minimal_c(&f).unwrap();
            let scaled = minimal_c(&f.scaled(s).unwrap()).unwrap();
            for (a, b) in base.iter().zip(&scaled) {
                prop_assert!((a * s - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn sup_of_additive_members_keeps_common_c(
            class in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 3), 1..5),
        ) {
            let f = BoundedDifferenceFunctional::sup_of_class(3, 3, class.clone()).unwrap();
            let width = class.iter().map(|g| range(g)).fold(0.0, f64::max);
            prop_assert!(bd_check(&f, &[width; 3]).unwrap().passed());
        }
    }
}
