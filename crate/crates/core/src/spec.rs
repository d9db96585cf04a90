//! JSON chain specification: kernel, small set, functional, start state and
//! the `t` grid to certify. See `schemas/chain-spec.schema.json`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::functionals::BoundedDifferenceFunctional;
use crate::hitting::DEFAULT_GRID_SIZE;
use crate::kernel::{MarkovKernel, SmallSet};
use crate::montecarlo::SampleSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub states: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    pub small_set: Vec<String>,
    pub functional: FunctionalSpec,
    pub start: String,
    pub horizon: usize,
    pub t_grid: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<SampleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ergodicity: Option<ErgodicitySettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErgodicitySettings {
    /// Fit horizon; defaults to ten relaxation times.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// User-supplied rate `r`, replacing the fitted one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_override: Option<f64>,
}

/// Functional description in terms of state labels, with an optional
/// explicit difference vector `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSpec {
    #[serde(flatten)]
    pub kind: FunctionalSpecKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionalSpecKind {
    /// Visits to `target` over the horizon.
    Counting { target: Vec<String> },
    /// `sum_i weights[i] 1{x_i in target}`; one weight per coordinate.
    Occupation { target: Vec<String>, weights: Vec<f64> },
    /// `sum_i tables[i][x_i]`; one table per coordinate, one value per state.
    Additive { tables: Vec<Vec<f64>> },
    /// `max_g sum_i g(x_i)` over the listed value tables.
    SupOfClass { class: Vec<Vec<f64>> },
    /// One value per tuple, lexicographic with `x_0` most significant.
    Tabulated { values: Vec<f64> },
    Constant { value: f64 },
}

/// A spec with labels resolved to indices and all objects validated.
#[derive(Debug, Clone)]
pub struct ResolvedSpec {
    pub kernel: MarkovKernel,
    pub small_set: SmallSet,
    pub start: usize,
    pub functional: BoundedDifferenceFunctional,
    pub horizon: usize,
    pub t_grid: Vec<f64>,
    pub mc: Option<SampleSpec>,
    pub ergodicity_horizon: Option<usize>,
    pub r_override: Option<f64>,
    pub grid_size: usize,
}

impl ResolvedSpec {
    pub fn start_in_small_set(&self) -> bool {
        self.small_set.contains(self.start)
    }
}

impl ChainSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if spec.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                spec.schema_version
            )));
        }
        Ok(spec)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// SHA-256 of the compact serialization, so formatting does not matter.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("spec serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn resolve(&self) -> Result<ResolvedSpec> {
        let kernel = MarkovKernel::new(&self.matrix, self.states.clone())?;
        let space = kernel.space().clone();
        let m = kernel.size();
        let small_set = SmallSet::from_labels(&space, &self.small_set)?;
        let start = space.index_of(&self.start)?;
        let n = self.horizon;
        if n == 0 {
            return Err(Error::HorizonTooSmall { got: 0, min: 1 });
        }
        if self.t_grid.is_empty() {
            return Err(Error::Parse("t_grid must not be empty".into()));
        }
        if self.t_grid.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::Parse("t_grid entries must be finite and > 0".into()));
        }
        if self.t_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parse("t_grid must be strictly increasing".into()));
        }
        let targets = |labels: &[String]| -> Result<Vec<usize>> { labels.iter().map(|l| space.index_of(l)).collect() };
        let functional = match &self.functional.kind {
            FunctionalSpecKind::Counting { target } => BoundedDifferenceFunctional::counting(m, n, targets(target)?)?,
            FunctionalSpecKind::Occupation { target, weights } => {
                check_len(n, weights.len())?;
                BoundedDifferenceFunctional::occupation(m, targets(target)?, weights.clone())?
            }
            FunctionalSpecKind::Additive { tables } => {
                check_len(n, tables.len())?;
                BoundedDifferenceFunctional::additive(m, tables.clone())?
            }
            FunctionalSpecKind::SupOfClass { class } => BoundedDifferenceFunctional::sup_of_class(m, n, class.clone())?,
            FunctionalSpecKind::Tabulated { values } => {
                BoundedDifferenceFunctional::tabulated(m, n, values.clone(), None)?
            }
            FunctionalSpecKind::Constant { value } => BoundedDifferenceFunctional::constant(m, n, *value)?,
        };
        let functional = match &self.functional.c {
            Some(c) => functional.with_c(c.clone())?,
            None => functional,
        };
        let settings = self.ergodicity.unwrap_or_default();
        Ok(ResolvedSpec {
            kernel,
            small_set,
            start,
            functional,
            horizon: n,
            t_grid: self.t_grid.clone(),
            mc: self.mc,
            ergodicity_horizon: settings.horizon,
            r_override: settings.r_override,
            grid_size: self.grid_size.unwrap_or(DEFAULT_GRID_SIZE),
        })
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}

/// `count` evenly spaced points `k * top / count`, `k = 1..=count`.
pub fn even_grid(top: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|k| top * k as f64 / count as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_STATE: &str = r#"{
        "schema_version": 1,
        "states": ["a", "b"],
        "matrix": [[0.9, 0.1], [0.2, 0.8]],
        "small_set": ["a"],
        "functional": {"kind": "counting", "target": ["b"]},
        "start": "a",
        "horizon": 4,
        "t_grid": [0.5, 1.0, 2.0]
    }"#;

    #[test]
    fn parses_and_resolves() {
        let spec = ChainSpec::from_json(TWO_STATE).unwrap();
        let r = spec.resolve().unwrap();
        assert_eq!(r.functional.c(), &[1.0; 4]);
        assert_eq!(r.start, 0);
        assert!(r.start_in_small_set());
        assert_eq!(r.grid_size, DEFAULT_GRID_SIZE);
        let again = ChainSpec::from_json(&spec.to_json_pretty()).unwrap();
        assert_eq!(again, spec);
        assert_eq!(again.hash(), spec.hash());
        assert_eq!(spec.hash().len(), 64);
    }

    #[test]
    fn rejects_bad_specs() {
        let edit = |from: &str, to: &str| ChainSpec::from_json(&TWO_STATE.replace(from, to)).and_then(|s| s.resolve());
        assert!(matches!(edit("\"start\": \"a\"", "\"start\": \"z\""), Err(Error::UnknownLabel(_))));
        assert!(matches!(edit("[0.5, 1.0, 2.0]", "[1.0, 0.5]"), Err(Error::Parse(_))));
        assert!(matches!(edit("[0.5, 1.0, 2.0]", "[0.0, 0.5]"), Err(Error::Parse(_))));
        assert!(matches!(edit("\"schema_version\": 1", "\"schema_version\": 9"), Err(Error::Parse(_))));
        assert!(matches!(edit("\"horizon\": 4", "\"horizon\": 4, \"extra\": 1"), Err(Error::Parse(_))));
        assert!(matches!(edit("[0.2, 0.8]", "[0.2, 0.7]"), Err(Error::RowSumOutOfTolerance { .. })));
        assert!(matches!(ChainSpec::from_json("{"), Err(Error::Parse(_))));
        let c_too_small = TWO_STATE.replace("\"target\": [\"b\"]", "\"target\": [\"b\"], \"c\": [0.5, 1, 1, 1]");
        assert!(matches!(
            ChainSpec::from_json(&c_too_small).unwrap().resolve(),
            Err(Error::NotBoundedDifference { .. })
        ));
    }

    #[test]
    fn grid() {
        assert_eq!(even_grid(2.0, 4), vec![0.5, 1.0, 1.5, 2.0]);
    }
}
