"""Independent numerical oracles used to freeze expected values in tests."""
from __future__ import annotations

import numpy as np


def trinomial_mme_family(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Martingale kernels of the asset (2, 1, 0.5) on the uniform trinomial:
    q = (theta/2, 1 - 1.5 theta, theta) for theta in [0, 2/3]."""
    return theta / 2.0, 1.0 - 1.5 * theta, theta


def good_deal_interval_oracle(cap: float, n_grid: int = 10_000) -> tuple[float, float]:
    """Extremes of q_u over the one-parameter family under the second-moment
    cap, from an n_grid scan whose boundary crossings are pinned by bisection
    on the constraint itself (independent of any cutting plane)."""

    def violation(theta: float) -> float:
        qu, qm, qd = trinomial_mme_family(np.asarray(theta))
        return float(3.0 * (qu ** 2 + qm ** 2 + qd ** 2) - cap ** 2)

    thetas = np.linspace(0.0, 2.0 / 3.0, n_grid)
    feas = np.array([violation(t) <= 0.0 for t in thetas])
    if not feas.any():
        raise ValueError("cap excludes the whole family")

    def refine(lo: float, hi: float) -> float:
        # violation(lo) and violation(hi) straddle zero
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if violation(mid) <= 0.0:
                hi = mid
            else:
                lo = mid
        return hi

    idx = np.flatnonzero(feas)
    t_lo = thetas[idx[0]]
    t_hi = thetas[idx[-1]]
    if idx[0] > 0:
        t_lo = refine(thetas[idx[0] - 1], t_lo)
    if idx[-1] < n_grid - 1:
        # same bisection with the roles swapped around the upper crossing
        lo, hi = thetas[idx[-1] + 1], t_hi
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if violation(mid) <= 0.0:
                hi = mid
            else:
                lo = mid
        t_hi = hi
    return t_lo / 2.0, t_hi / 2.0


def binomial_constrained_oracle(tree, asset, h_set, leaf_values: dict,
                                n_grid: int = 2001) -> float:
    """Kernel-grid brute force of the hedge-penalized value recursion on a
    binomial tree.  The per-node objective is piecewise linear in the up
    weight, so the grid is augmented with the penalty kink (zero drift) and
    the interval endpoints, which the maximum must visit."""

    def node_value(node) -> float:
        if not tree.children[node]:
            return leaf_values[node]
        up, down = tree.children[node]
        vu, vd = node_value(up), node_value(down)
        su, sd, sn = asset.values[up], asset.values[down], asset.values[node]
        qs = list(np.linspace(0.0, 1.0, n_grid))
        if abs(su - sd) > 1e-15:
            kink = (sn - sd) / (su - sd)
            if 0.0 <= kink <= 1.0:
                qs.append(kink)
        best = -np.inf
        for q in qs:
            drift = q * su + (1.0 - q) * sd - sn
            pen = max(hv[0] * drift for hv in h_set.vertices)
            best = max(best, q * vu + (1.0 - q) * vd - pen)
        return best

    return node_value(tree.root)
