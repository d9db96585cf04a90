//! Finite state spaces, Markov kernels, probability vectors and the
//! irreducibility/aperiodicity check.
//!
//! Total variation is `sup_A |mu(A) - nu(A)|`, i.e. half the L1 distance, so
//! that `|mu(h) - nu(h)| <= 2 ||h||_inf d_TV(mu, nu)`.

use std::collections::{HashSet, VecDeque};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entries down to this value are treated as zero.
pub const NEGATIVE_TOLERANCE: f64 = 1e-12;
/// Rows within this distance of 1 are renormalized; anything further is rejected.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;
/// Tolerance on the total mass of a [`Distribution`].
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Ordered list of distinct state labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    labels: Vec<String>,
}

impl StateSpace {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::EmptySpace);
        }
        let mut seen = HashSet::with_capacity(labels.len());
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(Error::DuplicateLabel(label.clone()));
            }
        }
        Ok(Self { labels })
    }

    /// States labelled `"0"`, `"1"`, ... `"m-1"`.
    pub fn indexed(m: usize) -> Result<Self> {
        Self::new((0..m).map(|i| i.to_string()))
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }
}

fn same_space(a: &Arc<StateSpace>, b: &Arc<StateSpace>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// Row-stochastic transition matrix over a [`StateSpace`], stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovKernel {
    space: Arc<StateSpace>,
    matrix: Vec<f64>,
}

impl MarkovKernel {
    /// Validates a raw matrix. Entries in `[-1e-12, 0)` are set to zero and rows
    /// within `1e-9` of unit mass are renormalized to sum exactly to one.
    pub fn new<S: Into<String>>(
        raw: &[Vec<f64>],
        labels: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let space = StateSpace::new(labels)?;
        Self::with_space(Arc::new(space), raw)
    }

    /// Same as [`MarkovKernel::new`] with labels `"0".."m-1"`.
    pub fn from_rows(raw: &[Vec<f64>]) -> Result<Self> {
        let space = StateSpace::indexed(raw.len())?;
        Self::with_space(Arc::new(space), raw)
    }

    pub fn with_space(space: Arc<StateSpace>, raw: &[Vec<f64>]) -> Result<Self> {
        let m = space.size();
        if raw.len() != m || raw.iter().any(|row| row.len() != m) {
            return Err(Error::NotSquare { labels: m });
        }
        let mut matrix = Vec::with_capacity(m * m);
        for (x, row) in raw.iter().enumerate() {
            let mut cleaned = Vec::with_capacity(m);
            for (y, &p) in row.iter().enumerate() {
                if !p.is_finite() || p < -NEGATIVE_TOLERANCE {
                    return Err(Error::NegativeEntry { row: x, col: y, value: p });
                }
                cleaned.push(p.max(0.0));
            }
            let sum: f64 = cleaned.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::RowSumOutOfTolerance { row: x, sum });
            }
            if sum != 1.0 {
                cleaned.iter_mut().for_each(|p| *p /= sum);
            }
            matrix.extend(cleaned);
        }
        Ok(Self { space, matrix })
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn size(&self) -> usize {
        self.space.size()
    }

    pub fn row(&self, x: usize) -> &[f64] {
        let m = self.size();
        &self.matrix[x * m..(x + 1) * m]
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.matrix[x * self.size() + y]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.size()).map(|x| self.row(x).to_vec()).collect()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        let m = self.size();
        DMatrix::from_row_slice(m, m, &self.matrix)
    }

    /// One step of the chain: returns `mu P`.
    pub fn step(&self, weights: &[f64]) -> Vec<f64> {
        let m = self.size();
        let mut out = vec![0.0; m];
        for (x, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(self.row(x)) {
                *o += w * p;
            }
        }
        out
    }

    pub(crate) fn validate_state(&self, x: usize) -> Result<()> {
        if x < self.size() {
            Ok(())
        } else {
            Err(Error::StateOutOfRange { index: x, size: self.size() })
        }
    }
}

/// Probability vector over a [`StateSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    space: Arc<StateSpace>,
    weights: Vec<f64>,
}

impl Distribution {
    pub fn new(space: Arc<StateSpace>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != space.size() {
            return Err(Error::InvalidDistribution(format!(
                "{} weights for {} states",
                weights.len(),
                space.size()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidDistribution(format!("invalid weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("total mass {total}")));
        }
        Ok(Self { space, weights })
    }

    pub fn dirac(space: Arc<StateSpace>, x: usize) -> Result<Self> {
        let m = space.size();
        if x >= m {
            return Err(Error::StateOutOfRange { index: x, size: m });
        }
        let mut weights = vec![0.0; m];
        weights[x] = 1.0;
        Ok(Self { space, weights })
    }

    pub fn uniform(space: Arc<StateSpace>) -> Self {
        let m = space.size();
        Self { space, weights: vec![1.0 / m as f64; m] }
    }

    /// Normalizes nonnegative mass to a probability vector.
    pub fn from_unnormalized(space: Arc<StateSpace>, mass: Vec<f64>) -> Result<Self> {
        let total: f64 = mass.iter().sum();
        if !(total > 0.0) || mass.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidDistribution("mass must be nonnegative with positive total".into()));
        }
        let weights = mass.into_iter().map(|w| w / total).collect();
        Ok(Self { space, weights })
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn size(&self) -> usize {
        self.weights.len()
    }

    /// Integral of a function given by its values on the states.
    pub fn expect(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Nonempty subset of state indices, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SmallSet {
    indices: Vec<usize>,
}

impl SmallSet {
    pub fn new(indices: impl IntoIterator<Item = usize>, size: usize) -> Result<Self> {
        let mut indices: Vec<usize> = indices.into_iter().collect();
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return Err(Error::EmptySmallSet);
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= size) {
            return Err(Error::StateOutOfRange { index: bad, size });
        }
        Ok(Self { indices })
    }

    pub fn all(size: usize) -> Result<Self> {
        Self::new(0..size, size)
    }

    pub fn from_labels<S: AsRef<str>>(space: &StateSpace, labels: &[S]) -> Result<Self> {
        let indices = labels
            .iter()
            .map(|l| space.index_of(l.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(indices, space.size())
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, x: usize) -> bool {
        self.indices.binary_search(&x).is_ok()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Membership mask of length `size`.
    pub fn mask(&self, size: usize) -> Vec<bool> {
        let mut mask = vec![false; size];
        for &i in &self.indices {
            mask[i] = true;
        }
        mask
    }

    /// Sorted complement within `0..size`.
    pub fn complement(&self, size: usize) -> Vec<usize> {
        (0..size).filter(|x| !self.contains(*x)).collect()
    }
}

/// Outcome of the irreducibility/aperiodicity check.
///
/// `period` is the gcd of cycle lengths through state 0 within its
/// communicating class. It is positive whenever the kernel is irreducible;
/// for reducible kernels it is reported for information and is 0 when state 0
/// lies on no cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct H1Report {
    pub irreducible: bool,
    pub aperiodic: bool,
    pub period: usize,
}

/// `(1/2) sum_x |mu(x) - nu(x)|`.
pub fn tv_distance(mu: &Distribution, nu: &Distribution) -> Result<f64> {
    if !same_space(&mu.space, &nu.space) {
        return Err(Error::SpaceMismatch);
    }
    Ok(tv_weights(&mu.weights, &nu.weights))
}

pub(crate) fn tv_weights(a: &[f64], b: &[f64]) -> f64 {
    let l1: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    (0.5 * l1).min(1.0)
}

/// `xi P^i`.
pub fn marginal(xi: &Distribution, kernel: &MarkovKernel, i: usize) -> Result<Distribution> {
    if !same_space(&xi.space, &kernel.space) {
        return Err(Error::SpaceMismatch);
    }
    let mut weights = xi.weights.clone();
    for _ in 0..i {
        weights = kernel.step(&weights);
    }
    Ok(Distribution { space: kernel.space.clone(), weights })
}

fn successors(kernel: &MarkovKernel) -> Vec<Vec<usize>> {
    let m = kernel.size();
    (0..m)
        .map(|x| (0..m).filter(|&y| kernel.get(x, y) > 0.0).collect())
        .collect()
}

fn bfs(adj: &[Vec<usize>], start: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    level[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(x) = queue.pop_front() {
        let next = level[x].unwrap() + 1;
        for &y in &adj[x] {
            if level[y].is_none() {
                level[y] = Some(next);
                queue.push_back(y);
            }
        }
    }
    level
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Irreducibility from strong connectivity of the positive-entry graph and the
/// period as the gcd of `level(x) + 1 - level(y)` over edges of the BFS tree's
/// communicating class.
pub fn check_h1(kernel: &MarkovKernel) -> H1Report {
    let m = kernel.size();
    let forward = successors(kernel);
    let mut backward = vec![Vec::new(); m];
    for (x, ys) in forward.iter().enumerate() {
        for &y in ys {
            backward[y].push(x);
        }
    }
    let reach = bfs(&forward, 0);
    let coreach = bfs(&backward, 0);
    let irreducible = reach.iter().all(Option::is_some) && coreach.iter().all(Option::is_some);

    let in_class: Vec<bool> = (0..m)
        .map(|x| reach[x].is_some() && coreach[x].is_some())
        .collect();
    let mut period = 0;
    for x in (0..m).filter(|&x| in_class[x]) {
        for &y in forward[x].iter().filter(|&&y| in_class[y]) {
            let (lx, ly) = (reach[x].unwrap(), reach[y].unwrap());
            period = gcd(period, (lx + 1).abs_diff(ly));
        }
    }
    H1Report { irreducible, aperiodic: irreducible && period == 1, period }
}

/// Solves `(P^T - I) pi = 0` with the last equation replaced by `sum pi = 1`.
pub fn stationary_distribution(kernel: &MarkovKernel) -> Result<Distribution> {
    if !check_h1(kernel).irreducible {
        return Err(Error::NotIrreducible);
    }
    let m = kernel.size();
    let mut a = kernel.to_dmatrix().transpose() - DMatrix::<f64>::identity(m, m);
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(m);
    b[m - 1] = 1.0;
    let lu = a.clone().lu();
    let mut pi = lu.solve(&b).ok_or(Error::SolverSingular)?;
    // one step of iterative refinement
    let residual = &b - &a * &pi;
    if let Some(correction) = lu.solve(&residual) {
        pi += correction;
    }
    if pi.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolverSingular);
    }
    let mut weights: Vec<f64> = pi.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(Distribution { space: kernel.space.clone(), weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_state() -> MarkovKernel {
        MarkovKernel::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap()
    }

    fn cycle3() -> MarkovKernel {
        MarkovKernel::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn validation() {
        let k = MarkovKernel::new(&[vec![1.0]], ["a"]).unwrap();
        assert_eq!(k.size(), 1);
        assert!(MarkovKernel::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).is_ok());
        assert!(matches!(
            MarkovKernel::from_rows(&[vec![0.9, 0.2], vec![0.2, 0.8]]),
            Err(Error::RowSumOutOfTolerance { row: 0, .. })
        ));
        assert!(matches!(
            MarkovKernel::from_rows(&[vec![1.0, 0.0]]),
            Err(Error::NotSquare { .. })
        ));
        assert!(matches!(
            MarkovKernel::from_rows(&[vec![1.1, -0.1], vec![0.5, 0.5]]),
            Err(Error::NegativeEntry { row: 0, col: 1, .. })
        ));
        assert!(matches!(
            MarkovKernel::new(&[vec![0.5, 0.5], vec![0.5, 0.5]], ["a", "a"]),
            Err(Error::DuplicateLabel(_))
        ));
    }

    #[test]
    fn small_negatives_and_row_drift_are_cleaned() {
        let k = MarkovKernel::from_rows(&[vec![1.0 + 5e-10, -5e-13], vec![0.3, 0.7]]).unwrap();
        assert_eq!(k.get(0, 1), 0.0);
        assert_eq!(k.row(0).iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn tv_examples() {
        let space = Arc::new(StateSpace::indexed(2).unwrap());
        let a = Distribution::new(space.clone(), vec![0.5, 0.5]).unwrap();
        let b = Distribution::new(space.clone(), vec![0.75, 0.25]).unwrap();
        assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(tv_distance(&a, &b).unwrap(), 0.25);
        let d0 = Distribution::dirac(space.clone(), 0).unwrap();
        let d1 = Distribution::dirac(space, 1).unwrap();
        assert_eq!(tv_distance(&d0, &d1).unwrap(), 1.0);
        let other = Distribution::uniform(Arc::new(StateSpace::indexed(3).unwrap()));
        assert_eq!(tv_distance(&a, &other), Err(Error::SpaceMismatch));
    }

    #[test]
    fn stationary_examples() {
        let pi = stationary_distribution(&two_state()).unwrap();
        assert!((pi.weights()[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((pi.weights()[1] - 1.0 / 3.0).abs() < 1e-14);

        let iid = MarkovKernel::from_rows(&vec![vec![0.25; 4]; 4]).unwrap();
        let pi = stationary_distribution(&iid).unwrap();
        assert!(pi.weights().iter().all(|w| (w - 0.25).abs() < 1e-14));

        let pi = stationary_distribution(&cycle3()).unwrap();
        assert!(pi.weights().iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-14));

        let blocks = MarkovKernel::from_rows(&[
            vec![0.5, 0.5, 0.0],
            vec![0.5, 0.5, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        assert_eq!(stationary_distribution(&blocks), Err(Error::NotIrreducible));
    }

    #[test]
    fn h1_examples() {
        assert_eq!(
            check_h1(&two_state()),
            H1Report { irreducible: true, aperiodic: true, period: 1 }
        );
        assert_eq!(
            check_h1(&cycle3()),
            H1Report { irreducible: true, aperiodic: false, period: 3 }
        );
        let blocks = MarkovKernel::from_rows(&[
            vec![0.5, 0.5, 0.0, 0.0],
            vec![0.5, 0.5, 0.0, 0.0],
            vec![0.0, 0.0, 0.5, 0.5],
            vec![0.0, 0.0, 0.5, 0.5],
        ])
        .unwrap();
        assert!(!check_h1(&blocks).irreducible);
        assert!(!check_h1(&blocks).aperiodic);
    }

    #[test]
    fn marginal_examples() {
        let k = two_state();
        let d0 = Distribution::dirac(k.space().clone(), 0).unwrap();
        assert_eq!(marginal(&d0, &k, 0).unwrap(), d0);
        let one = marginal(&d0, &k, 1).unwrap();
        assert_eq!(one.weights(), &[0.9, 0.1]);
        let two = marginal(&d0, &k, 2).unwrap();
        assert!((two.weights()[0] - 0.83).abs() < 1e-15);
        assert!((two.weights()[1] - 0.17).abs() < 1e-15);
        let pi = stationary_distribution(&k).unwrap();
        for step in [1, 7, 50] {
            let moved = marginal(&pi, &k, step).unwrap();
            assert!(tv_distance(&moved, &pi).unwrap() < 1e-12);
        }
    }

    fn kernel_strategy(max_m: usize) -> impl Strategy<Value = MarkovKernel> {
        (1..=max_m).prop_flat_map(|m| {
            proptest::collection::vec(
                proptest::collection::vec(prop_oneof![Just(0.0), 0.01f64..1.0], m),
                m,
            )
            .prop_map(move |mut rows| {
                for (x, row) in rows.iter_mut().enumerate() {
                    if row.iter().all(|&w| w == 0.0) {
                        row[x] = 1.0;
                    }
                    let s: f64 = row.iter().sum();
                    row.iter_mut().for_each(|w| *w /= s);
                }
                MarkovKernel::from_rows(&rows).unwrap()
            })
        })
    }

    fn dist(space: &Arc<StateSpace>, raw: &[f64]) -> Distribution {
        let m = space.size();
        let mass: Vec<f64> = raw.iter().take(m).map(|w| w + 1e-3).collect();
        Distribution::from_unnormalized(space.clone(), mass).unwrap()
    }

    proptest! {
        #[test]
        fn tv_is_a_metric(k in kernel_strategy(5),
                          a in proptest::collection::vec(0.0f64..1.0, 5),
                          b in proptest::collection::vec(0.0f64..1.0, 5),
                          c in proptest::collection::vec(0.0f64..1.0, 5)) {
            let (a, b, c) = (dist(k.space(), &a), dist(k.space(), &b), dist(k.space(), &c));
            prop_assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
            let ab = tv_distance(&a, &b).unwrap();
            prop_assert_eq!(ab, tv_distance(&b, &a).unwrap());
            prop_assert!(ab <= tv_distance(&a, &c).unwrap() + tv_distance(&c, &b).unwrap() + 1e-12);
        }

        #[test]
        fn tv_contracts_under_the_kernel(k in kernel_strategy(5),
                                         a in proptest::collection::vec(0.0f64..1.0, 5),
                                         b in proptest::collection::vec(0.0f64..1.0, 5)) {
            let (mut a, mut b) = (dist(k.space(), &a), dist(k.space(), &b));
            let mut last = tv_distance(&a, &b).unwrap();
            for _ in 0..20 {
                a = marginal(&a, &k, 1).unwrap();
                b = marginal(&b, &k, 1).unwrap();
                let now = tv_distance(&a, &b).unwrap();
                prop_assert!(now <= last + 1e-12);
                last = now;
            }
        }

        #[test]
        fn stationary_is_invariant(k in kernel_strategy(6)) {
            if let Ok(pi) = stationary_distribution(&k) {
                let mut moved = pi.clone();
                for _ in 0..50 {
                    moved = marginal(&moved, &k, 1).unwrap();
                    for (a, b) in moved.weights().iter().zip(pi.weights()) {
                        prop_assert!((a - b).abs() <= 1e-10);
                    }
                }
                let once = k.step(pi.weights());
                for (a, b) in once.iter().zip(pi.weights()) {
                    prop_assert!((a - b).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn h1_matches_matrix_power_brute_force(k in kernel_strategy(6)) {
            let m = k.size();
            // reachability by boolean powers
            let adj: Vec<Vec<bool>> = (0..m).map(|x| (0..m).map(|y| k.get(x, y) > 0.0).collect()).collect();
            let mut reach = adj.clone();
            for x in 0..m { reach[x][x] = true; }
            for _ in 0..m {
                let mut next = reach.clone();
                for x in 0..m { for z in 0..m { if reach[x][z] { for y in 0..m { if adj[z][y] { next[x][y] = true; } } } } }
                reach = next;
            }
            let irreducible = (0..m).all(|x| (0..m).all(|y| reach[x][y]));
            let report = check_h1(&k);
            prop_assert_eq!(report.irreducible, irreducible);
            if irreducible {
                let mut power = adj.clone();
                let mut g = 0usize;
                for step in 1..=2 * m * m {
                    if power[0][0] { g = gcd(g, step); }
                    let mut next = vec![vec![false; m]; m];
                    for x in 0..m { for z in 0..m { if power[x][z] { for y in 0..m { if adj[z][y] { next[x][y] = true; } } } } }
                    power = next;
                }
                prop_assert_eq!(report.period, g);
                prop_assert_eq!(report.aperiodic, g == 1);
            } else {
                prop_assert!(!report.aperiodic);
            }
        }
    }
}
