//! Reference computations that share no code with the library.
#![allow(dead_code)]

use ergocert::kernel::{check_h1, MarkovKernel};
use rand::Rng;

/// `(re, im)` pairs.
pub type Complex = (f64, f64);

fn c_mul(a: Complex, b: Complex) -> Complex {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

fn c_div(a: Complex, b: Complex) -> Complex {
    let d = b.0 * b.0 + b.1 * b.1;
    ((a.0 * b.0 + a.1 * b.1) / d, (a.1 * b.0 - a.0 * b.1) / d)
}

fn c_abs(a: Complex) -> f64 {
    a.0.hypot(a.1)
}

/// Characteristic polynomial coefficients `[1, c_1, ..., c_m]` of a dense
/// matrix by the Faddeev-LeVerrier recursion.
pub fn char_poly(a: &[Vec<f64>]) -> Vec<f64> {
    let m = a.len();
    let mut coeffs = vec![1.0];
    let mut mk = vec![vec![0.0; m]; m];
    let mut c_prev = 1.0;
    for k in 1..=m {
        // M_k = A M_{k-1} + c_{k-1} I
        let mut next = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..m {
                let mut s = 0.0;
                for l in 0..m {
                    s += a[i][l] * mk[l][j];
                }
                next[i][j] = s + if i == j { c_prev } else { 0.0 };
            }
        }
        mk = next;
        let mut trace = 0.0;
        for i in 0..m {
            for l in 0..m {
                trace += a[i][l] * mk[l][i];
            }
        }
        c_prev = -trace / k as f64;
        coeffs.push(c_prev);
    }
    coeffs
}

/// Roots of a monic polynomial by Durand-Kerner iteration.
pub fn poly_roots(coeffs: &[f64]) -> Vec<Complex> {
    let degree = coeffs.len() - 1;
    let eval = |z: Complex| coeffs.iter().fold((0.0, 0.0), |acc, &c| {
        let p = c_mul(acc, z);
        (p.0 + c, p.1)
    });
    let seed: Complex = (0.4, 0.9);
    let mut roots: Vec<Complex> = (0..degree)
        .map(|k| (0..k).fold((1.0, 0.0), |acc, _| c_mul(acc, seed)))
        .collect();
    for _ in 0..5000 {
        let mut moved = 0.0_f64;
        for i in 0..degree {
            let mut denom = (1.0, 0.0);
            for j in 0..degree {
                if i != j {
                    denom = c_mul(denom, (roots[i].0 - roots[j].0, roots[i].1 - roots[j].1));
                }
            }
            let step = c_div(eval(roots[i]), denom);
            roots[i] = (roots[i].0 - step.0, roots[i].1 - step.1);
            moved = moved.max(c_abs(step));
        }
        if moved < 1e-15 {
            break;
        }
    }
    roots
}

/// Second largest eigenvalue modulus: drop the root nearest to 1 and take
/// the largest modulus of the rest.
pub fn slem_oracle(p: &[Vec<f64>]) -> f64 {
    let mut roots = poly_roots(&char_poly(p));
    let (unit, _) = roots
        .iter()
        .enumerate()
        .map(|(k, z)| (k, c_abs((z.0 - 1.0, z.1))))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    roots.remove(unit);
    roots.iter().map(|&z| c_abs(z)).fold(0.0, f64::max)
}

/// `E_x[u^{sigma_C}]` by summing `u^k P_x(sigma_C = k)` until the remaining
/// mass times `u^k` is negligible.
pub fn mgf_series(p: &[Vec<f64>], in_c: &[bool], u: f64, x: usize) -> f64 {
    let m = p.len();
    // mass[y] = P_x(X_k = y, X_1..X_k outside C)
    let mut mass: Vec<f64> = (0..m).map(|y| if in_c[y] { 0.0 } else { p[x][y] }).collect();
    let mut total: f64 = (0..m).filter(|&y| in_c[y]).map(|y| p[x][y]).sum::<f64>() * u;
    let mut weight = u;
    for _ in 0..2_000_000 {
        weight *= u;
        let mut next = vec![0.0; m];
        let mut hit = 0.0;
        for (y, &w) in mass.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for z in 0..m {
                if in_c[z] {
                    hit += w * p[y][z];
                } else {
                    next[z] += w * p[y][z];
                }
            }
        }
        total += weight * hit;
        mass = next;
        let rest: f64 = mass.iter().sum();
        if rest * weight < 1e-14 {
            break;
        }
    }
    total
}

/// Irreducible, aperiodic kernel on `m` states with some zero entries.
pub fn random_chain<R: Rng>(m: usize, rng: &mut R) -> MarkovKernel {
    loop {
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let raw: Vec<f64> = (0..m)
                    .map(|_| if rng.random::<f64>() < 0.25 { 0.0 } else { 0.05 + rng.random::<f64>() })
                    .collect();
                let s: f64 = raw.iter().sum();
                if s == 0.0 {
                    vec![1.0 / m as f64; m]
                } else {
                    raw.iter().map(|v| v / s).collect()
                }
            })
            .collect();
        let kernel = MarkovKernel::from_rows(&rows).unwrap();
        let h1 = check_h1(&kernel);
        if h1.irreducible && h1.aperiodic {
            return kernel;
        }
    }
}

/// All tuples of `m` states of length `n`, with their probability from the
/// start law `init`, by explicit products.
pub fn brute_force_paths(p: &[Vec<f64>], init: &[f64], n: usize) -> Vec<(Vec<usize>, f64)> {
    let m = p.len();
    let total = m.pow(n as u32);
    (0..total)
        .map(|mut code| {
            let mut path = vec![0; n];
            for slot in path.iter_mut().rev() {
                *slot = code % m;
                code /= m;
            }
            let mut prob = init[path[0]];
            for w in path.windows(2) {
                prob *= p[w[0]][w[1]];
            }
            (path, prob)
        })
        .collect()
}
