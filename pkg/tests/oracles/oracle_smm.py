"""Exhaustive-grid oracle for the simple mixture model.

Maximises sum_t c_t * log((1 - lam) * theta_t + lam * bg_t) over the simplex
by brute force: a 1e-4 grid for two terms; a 1e-3 simplex grid refined by a
1e-5 local grid for three terms.  Run:  python tests/oracles/oracle_smm.py
"""

import numpy as np

from _common import save

CASES = [
    {"name": "two_term", "counts": {"a": 1, "b": 1}, "background": {"a": 0.9, "b": 0.1}, "lam": 0.5},
    {"name": "two_term_skewed", "counts": {"a": 7, "b": 2}, "background": {"a": 0.6, "b": 0.4}, "lam": 0.3},
    {"name": "three_term", "counts": {"a": 4, "b": 3, "c": 2},
     "background": {"a": 0.7, "b": 0.2, "c": 0.1}, "lam": 0.4},
    {"name": "three_term_inactive", "counts": {"a": 2, "b": 5, "c": 3},
     "background": {"a": 0.8, "b": 0.15, "c": 0.05}, "lam": 0.6},
]


def objective(theta, c, bg, lam):
    mix = (1 - lam) * theta + lam * bg
    with np.errstate(divide="ignore"):
        return (c * np.log(mix)).sum(axis=-1)


def solve2(c, bg, lam):
    x = np.arange(0.0, 1.0 + 5e-5, 1e-4)
    theta = np.stack([x, 1 - x], axis=1)
    best = x[objective(theta, c, bg, lam).argmax()]
    return [float(best), float(1 - best)]


def _simplex(centre, half, step):
    xs = np.arange(centre[0] - half, centre[0] + half + step / 2, step)
    ys = np.arange(centre[1] - half, centre[1] + half + step / 2, step)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), 1 - X.ravel() - Y.ravel()], axis=1)
    return pts[(pts >= -1e-12).all(axis=1)].clip(0, 1)


def solve3(c, bg, lam):
    pts = _simplex((0.5, 0.5), 0.5, 1e-3)
    best = pts[objective(pts, c, bg, lam).argmax()]
    pts = _simplex(best, 2e-3, 1e-5)
    best = pts[objective(pts, c, bg, lam).argmax()]
    return [float(v) for v in best]


def main():
    out = {}
    for case in CASES:
        terms = sorted(case["counts"])
        c = np.array([case["counts"][t] for t in terms], float)
        bg = np.array([case["background"][t] for t in terms])
        theta = (solve2 if len(terms) == 2 else solve3)(c, bg, case["lam"])
        out[case["name"]] = dict(case, terms=terms, theta=dict(zip(terms, theta)))
    save("smm", out)


if __name__ == "__main__":
    main()
