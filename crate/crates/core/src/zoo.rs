//! Built-in chain families used as benchmarks and smoke tests.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::spec::{even_grid, ChainSpec, FunctionalSpec, FunctionalSpecKind, SCHEMA_VERSION};

/// Horizon used by the registry entries.
pub const ZOO_HORIZON: usize = 8;
/// Number of `t` points, evenly spaced on `(0, sum c_i]`.
pub const ZOO_GRID_POINTS: usize = 20;

#[derive(Debug, Clone, Serialize)]
pub struct ZooEntry {
    pub name: &'static str,
    pub description: &'static str,
}

pub const REGISTRY: &[ZooEntry] = &[
    ZooEntry { name: "two-state", description: "two-state chain, flip rates a = 0.1 and b = 0.2, C = {s0}" },
    ZooEntry { name: "lazy-cycle", description: "lazy walk on a 3-cycle with holding probability 0.5, C = {s0}" },
    ZooEntry { name: "birth-death", description: "birth-death chain on 3 states, p = 0.3 up, q = 0.4 down, C = {s0}" },
    ZooEntry { name: "iid", description: "i.i.d. draws from (0.2, 0.3, 0.5), C = all states" },
    ZooEntry {
        name: "metropolis-two-valley",
        description: "Metropolis walk on a 5-state path with a two-valley target (slow mixing), C = {s0}",
    },
];

pub fn names() -> impl Iterator<Item = &'static str> {
    REGISTRY.iter().map(|e| e.name)
}

/// The registry entry `name` with its default parameters.
pub fn spec(name: &str) -> Result<ChainSpec> {
    match name {
        "two-state" => two_state(0.1, 0.2),
        "lazy-cycle" => lazy_cycle(3, 0.5),
        "birth-death" => birth_death(3, 0.3, 0.4),
        "iid" => iid(&[0.2, 0.3, 0.5]),
        "metropolis-two-valley" => metropolis_two_valley(5),
        other => Err(Error::UnknownZooEntry(other.to_string())),
    }
}

fn labels(m: usize) -> Vec<String> {
    (0..m).map(|x| format!("s{x}")).collect()
}

fn probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::DomainError(format!("{name} = {p} must lie in [0, 1]")))
    }
}

/// Counting functional on `target` from `s0`, with `C = small_set`.
fn assemble(name: String, matrix: Vec<Vec<f64>>, small_set: Vec<String>, target: Vec<String>) -> ChainSpec {
    let states = labels(matrix.len());
    let top = ZOO_HORIZON as f64;
    ChainSpec {
        schema_version: SCHEMA_VERSION,
        name: Some(name),
        start: states[0].clone(),
        states,
        matrix,
        small_set,
        functional: FunctionalSpec { kind: FunctionalSpecKind::Counting { target }, c: None },
        horizon: ZOO_HORIZON,
        t_grid: even_grid(top, ZOO_GRID_POINTS),
        mc: None,
        ergodicity: None,
        grid_size: None,
    }
}

pub fn two_state(a: f64, b: f64) -> Result<ChainSpec> {
    probability("a", a)?;
    probability("b", b)?;
    let matrix = vec![vec![1.0 - a, a], vec![b, 1.0 - b]];
    Ok(assemble(format!("two-state(a={a}, b={b})"), matrix, labels(1), vec!["s1".into()]))
}

pub fn lazy_cycle(m: usize, laziness: f64) -> Result<ChainSpec> {
    probability("laziness", laziness)?;
    if m < 2 {
        return Err(Error::DomainError("a cycle needs at least 2 states".into()));
    }
    let matrix = (0..m)
        .map(|x| {
            let mut row = vec![0.0; m];
            row[x] += laziness;
            row[(x + 1) % m] += 1.0 - laziness;
            row
        })
        .collect();
    let target = vec![format!("s{}", m - 1)];
    Ok(assemble(format!("lazy-cycle(m={m}, laziness={laziness})"), matrix, labels(1), target))
}

/// Up with probability `p`, down with `q`, otherwise stay; moves off the ends
/// are replaced by staying.
pub fn birth_death(m: usize, p: f64, q: f64) -> Result<ChainSpec> {
    probability("p", p)?;
    probability("q", q)?;
    if p + q > 1.0 || m < 2 {
        return Err(Error::DomainError("need p + q <= 1 and at least 2 states".into()));
    }
    let matrix = (0..m)
        .map(|x| {
            let mut row = vec![0.0; m];
            let up = if x + 1 < m { p } else { 0.0 };
            let down = if x > 0 { q } else { 0.0 };
            if x + 1 < m {
                row[x + 1] = up;
            }
            if x > 0 {
                row[x - 1] = down;
            }
            row[x] = 1.0 - up - down;
            row
        })
        .collect();
    let target = vec![format!("s{}", m - 1)];
    Ok(assemble(format!("birth-death(m={m}, p={p}, q={q})"), matrix, labels(1), target))
}

/// Every row equal to `pi`; the whole space is the small set.
pub fn iid(pi: &[f64]) -> Result<ChainSpec> {
    let total: f64 = pi.iter().sum();
    if pi.is_empty() || pi.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidDistribution("pi must be a probability vector".into()));
    }
    let m = pi.len();
    let matrix = vec![pi.to_vec(); m];
    let target = vec![format!("s{}", m - 1)];
    let name = format!("iid(pi={pi:?})");
    Ok(assemble(name, matrix, labels(m), target))
}

/// Metropolis chain on the path `0..m` with nearest-neighbour proposals and
/// target weights `100^{-min(x, m-1-x)}`: two deep valleys at the ends.
pub fn metropolis_two_valley(m: usize) -> Result<ChainSpec> {
    if m < 3 {
        return Err(Error::DomainError("need at least 3 states".into()));
    }
    let weight = |x: usize| 100f64.powi(-(x.min(m - 1 - x) as i32));
    let matrix = (0..m)
        .map(|x| {
            let mut row = vec![0.0; m];
            let mut stay = 1.0;
            for y in [x.wrapping_sub(1), x + 1] {
                if y < m {
                    let move_prob = 0.5 * (weight(y) / weight(x)).min(1.0);
                    row[y] = move_prob;
                    stay -= move_prob;
                }
            }
            row[x] += stay;
            row
        })
        .collect();
    let target: Vec<String> = (m.div_ceil(2)..m).map(|x| format!("s{x}")).collect();
    Ok(assemble(format!("metropolis-two-valley(m={m})"), matrix, labels(1), target))
}
