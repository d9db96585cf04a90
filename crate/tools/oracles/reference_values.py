"""Reference values frozen in the Rust tests.

    python tools/oracles/reference_values.py
"""
import mpmath as mp
from scipy.stats import beta as beta_dist

mp.mp.dps = 50


def beta_constant(u, m, l, r):
    u, m, l, r = (mp.mpf(str(v)) for v in (u, m, l, r))
    rho = max(r, u ** mp.mpf(-0.25))
    return (1 - rho) ** 2 / (16 * l) / (5 / mp.log(u) + 4 * m * l), rho


def two_state_mgf(a, b, u):
    # E_0[u^sigma] with C = {0}: stay (prob 1-a) or leave and return after a
    # geometric sojourn with exit probability b.
    a, b, u = (mp.mpf(str(v)) for v in (a, b, u))
    return u * (1 - a) + a * b * u ** 2 / (1 - u * (1 - b))


def clopper_pearson(k, n, confidence):
    alpha = 1 - confidence
    lo = beta_dist.ppf(alpha / 2, k, n - k + 1) if k > 0 else 0.0
    hi = beta_dist.ppf(1 - alpha / 2, k + 1, n - k) if k < n else 1.0
    return lo, hi


if __name__ == "__main__":
    b, _ = beta_constant(2, 2, 1, 0.5)
    print("beta(2, 2, 1, 0.5)        =", mp.nstr(b, 17))
    m = two_state_mgf(0.1, 0.2, 1.1)
    print("E_0[1.1^sigma], two-state =", mp.nstr(m, 17))
    b, rho = beta_constant(1.1, m, 1, 0.7)
    print("beta(1.1, M, 1, 0.7)      =", mp.nstr(b, 17), " rho =", mp.nstr(rho, 17))
    print("Clopper-Pearson(10, 100)  =", clopper_pearson(10, 100, 0.99))
