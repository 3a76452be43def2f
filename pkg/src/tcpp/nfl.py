"""No-free-lunch verdicts through each of the four equivalent characterizations.

Strict inequalities (the "equivalent measure" part) never reach the LP
solver: they are recast as max-min problems whose optimal value doubles as
a robustness margin.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InconsistentVerdicts, TcppError
from .lp import EQ, GE, LinearProgram, solve
from .pricing import price, random_stopping_time
from .report import CheckReport
from .scenario import ScenarioModel, minimal_penalty, subtree_duals
from .settings import DEFAULT, Settings
from .tree import (Claim, FiltrationTree, Measure, StoppingTime,
                   conditional_expectation, lift, precedes)


@dataclass
class FreeLunchCertificate:
    """Witness for one side of the verdict.

    kind 'static-arbitrage-claim': a nonnegative nonzero claim with
    nonpositive root ask price.  kind 'zero-penalty-equivalent-measure': an
    equivalent measure with zero minimal penalty.  kind 'none' when the
    model admits free lunches but no certificate is requested.
    """

    kind: str
    claim: Claim | None = None
    measure: Measure | None = None

    def __post_init__(self):
        if self.kind == "static-arbitrage-claim" and (self.claim is None or self.measure is not None):
            raise TcppError("a static certificate must carry exactly a claim")
        if self.kind == "zero-penalty-equivalent-measure" and (self.measure is None or self.claim is not None):
            raise TcppError("a measure certificate must carry exactly a measure")


def _root_duals(model: ScenarioModel, settings: Settings) -> list[tuple[np.ndarray, float]]:
    """Leaf-mass vector and aggregated root penalty of every selection."""
    tree = model.tree
    horizon = StoppingTime.at_horizon(tree)
    out = []
    for masses, pen in subtree_duals(model, tree.root, horizon, settings):
        vec = np.zeros(len(tree.leaves))
        for leaf, m in masses.items():
            vec[tree.leaf_index[leaf]] = m
        out.append((vec, pen))
    return out


def find_static_free_lunch(model: ScenarioModel,
                           settings: Settings = DEFAULT) -> FreeLunchCertificate | None:
    """Search the closed cone of nonpositively priced claims for X >= 0, X != 0.

    Two LPs cover the cone: first the unit-scale program min over the claim
    simplex of the worst dual value, then (because the cone is generated by
    arbitrarily small multiples, under which positive penalties vanish) the
    zero-penalty game whose optimizer certifies a small-scale free lunch.
    """
    tree = model.tree
    duals = _root_duals(model, settings)
    nl = len(tree.leaves)
    tol = settings.feasibility_tol

    # scale-1 program: min t, t >= E_i(X) - alpha_i, X in the simplex
    lp = LinearProgram(
        objective=[0.0] * nl + [1.0],
        constraints=[(list(-vec) + [1.0], GE, -pen) for vec, pen in duals]
        + [([1.0] * nl + [0.0], EQ, 1.0)],
        lower=[0.0] * nl + [-np.inf],
        sense="min",
    )
    sol = solve(lp, settings)
    if sol.status == "optimal" and sol.value <= tol:
        x = sol.point[:nl]
        claim = Claim(StoppingTime.at_horizon(tree),
                      {leaf: float(x[tree.leaf_index[leaf]]) for leaf in tree.leaves})
        return FreeLunchCertificate("static-arbitrage-claim", claim=claim)

    # small-scale program over the zero-penalty selections only
    zero_vecs = [vec for vec, pen in duals if pen <= tol]
    lp2 = LinearProgram(
        objective=[0.0] * nl + [1.0],
        constraints=[(list(-vec) + [1.0], GE, 0.0) for vec in zero_vecs]
        + [([1.0] * nl + [0.0], EQ, 1.0)],
        lower=[0.0] * nl + [-np.inf],
        sense="min",
    )
    sol2 = solve(lp2, settings)
    if sol2.status == "optimal" and sol2.value <= tol:
        x = sol2.point[:nl]
        # scale down until positive-penalty selections price it at <= 0
        scale = 1.0
        for vec, pen in duals:
            ev = float(vec @ x)
            if pen > tol and ev > tol:
                scale = min(scale, pen / (2.0 * ev))
        claim = Claim(StoppingTime.at_horizon(tree),
                      {leaf: float(scale * x[tree.leaf_index[leaf]])
                       for leaf in tree.leaves})
        root_price = price(model, claim, StoppingTime.at_root(tree)).values[tree.root]
        if root_price <= tol:
            return FreeLunchCertificate("static-arbitrage-claim", claim=claim)
    return None


def find_zero_penalty_equivalent_measure(model: ScenarioModel,
                                         settings: Settings = DEFAULT) -> Measure | None:
    """Best uniformly charged mixture of the zero-penalty selections.

    Maximizes the minimum leaf mass over mixtures; a strictly positive
    optimum yields an equivalent measure whose minimal penalty vanishes by
    convexity of the conjugate.
    """
    tree = model.tree
    duals = _root_duals(model, settings)
    zero_vecs = [vec for vec, pen in duals if pen <= settings.feasibility_tol]
    if not zero_vecs:
        return None
    k = len(zero_vecs)
    nl = len(tree.leaves)
    lp = LinearProgram(
        objective=[0.0] * k + [1.0],
        constraints=[([float(v[i]) for v in zero_vecs] + [-1.0], GE, 0.0)
                     for i in range(nl)]
        + [([1.0] * k + [0.0], EQ, 1.0)],
        sense="max",
    )
    sol = solve(lp, settings)
    if sol.status != "optimal" or sol.value <= settings.equivalence_floor:
        return None
    lam = sol.point[:k]
    masses = np.zeros(nl)
    for w, vec in zip(lam, zero_vecs):
        masses += w * vec
    return Measure.from_leaf_masses(tree, masses)


@dataclass
class ZeroCostStrategy:
    """X0 plus swaps (tau_i, Z_i, Y_i) self-financing under the ask/bid rule."""

    initial: Claim
    swaps: list[tuple[StoppingTime, Claim, Claim]] = field(default_factory=list)

    def payoff(self, tree: FiltrationTree) -> Claim:
        horizon = StoppingTime.at_horizon(tree)
        total = self.initial if self.initial.at == horizon else lift(tree, self.initial, horizon)
        for _, z, y in self.swaps:
            total = total + z - y
        return total


def validate_zero_cost(model: ScenarioModel, strat: ZeroCostStrategy,
                       tol: float = 1e-9) -> None:
    tree = model.tree
    root = StoppingTime.at_root(tree)
    p0 = price(model, strat.initial, root).values[tree.root]
    if p0 > tol:
        raise TcppError(f"initial claim has positive root price {p0!r}")
    prev: StoppingTime | None = None
    for tau, z, y in strat.swaps:
        if prev is not None and not precedes(tree, prev, tau):
            raise TcppError("swap times must be nondecreasing")
        prev = tau
        ask_z = price(model, z, tau)
        bid_y = -price(model, -y, tau)
        for a in tau.cut:
            if ask_z.values[a] > bid_y.values[a] + tol:
                raise TcppError(f"swap not self-financing at atom {a}")


def sample_zero_cost(model: ScenarioModel, seed: int = 0,
                     n_swaps: int = 2) -> ZeroCostStrategy:
    """Random strategy attainable at zero cost; the self-financing
    inequality binds through a bid-ask spread shift."""
    tree = model.tree
    rng = np.random.default_rng(seed)
    horizon = StoppingTime.at_horizon(tree)
    root = StoppingTime.at_root(tree)

    w = Claim(horizon, {b: rng.uniform(-1.0, 1.0) for b in tree.leaves})
    x0 = w - price(model, w, root).values[tree.root]

    swaps = []
    current = StoppingTime.at_root(tree)
    for _ in range(n_swaps):
        current = random_stopping_time(tree, rng, lo=current)
        y = Claim(horizon, {b: rng.uniform(0.0, 1.0) for b in tree.leaves})
        ask_y = price(model, y, current)
        bid_y = -price(model, -y, current)
        spread = Claim(current, {a: ask_y.values[a] - bid_y.values[a]
                                 for a in current.cut})
        z = y - lift(tree, spread, horizon)
        swaps.append((current, z, y))
    strat = ZeroCostStrategy(x0, swaps)
    validate_zero_cost(model, strat)
    return strat


@dataclass
class NflReport:
    no_free_lunch: bool
    certificate: FreeLunchCertificate
    checks: CheckReport

    def __bool__(self) -> bool:
        return self.no_free_lunch


def nfl_verdict(model: ScenarioModel, seed: int = 0, n_samples: int = 50,
                n_strategies: int = 20,
                settings: Settings = DEFAULT) -> NflReport:
    """Run all four characterizations, assert they agree, corroborate by
    sampling, and return the joint verdict with its certificate.

    Disagreement raises :class:`InconsistentVerdicts`: the equivalence is a
    theorem, so divergence can only mean an implementation bug.
    """
    tree = model.tree
    root = StoppingTime.at_root(tree)
    horizon = StoppingTime.at_horizon(tree)
    tol = settings.feasibility_tol
    rng = np.random.default_rng(seed)
    checks = CheckReport(check="no free lunch", passed=True)

    static = find_static_free_lunch(model, settings)          # condition ii
    measure = find_zero_penalty_equivalent_measure(model, settings)  # iii
    verdict_ii = static is None
    verdict_iii = measure is not None
    if verdict_ii != verdict_iii:
        raise InconsistentVerdicts(
            f"static search says {'NFL' if verdict_ii else 'free lunch'} but "
            f"measure search says {'NFL' if verdict_iii else 'free lunch'}")

    if measure is not None:
        pen = minimal_penalty(model, measure, root, horizon, settings).values[tree.root]
        if pen > tol:
            raise InconsistentVerdicts(f"certificate measure has penalty {pen!r}")
        checks.info["certificate_penalty"] = pen
        checks.info["min_density"] = min(measure.density.values())
        # iv: sandwich under the certificate measure on sampled claims
        for i in range(n_samples):
            x = Claim(horizon, {b: rng.uniform(-1.0, 1.0) for b in tree.leaves})
            sigma = random_stopping_time(tree, rng) if i % 2 else root
            ask = price(model, x, sigma)
            bid = -price(model, -x, sigma)
            e = conditional_expectation(tree, measure, x, sigma)
            for a in sigma.cut:
                if not (bid.values[a] - tol <= e.values[a] <= ask.values[a] + tol):
                    checks.add(f"sample {i} atom {a}",
                               "martingale sandwich broken under certificate measure")
        # i: sampled zero-cost strategies have nonpositive expectation
        for i in range(n_strategies):
            strat = sample_zero_cost(model, seed=seed + 1 + i,
                                     n_swaps=int(rng.integers(0, 3)))
            ev = float(measure.leaf_masses(tree) @
                       [strat.payoff(tree).values[b] for b in tree.leaves])
            if ev > tol:
                checks.add(f"strategy {i}",
                           f"zero-cost payoff has positive expectation {ev!r}")
        cert = FreeLunchCertificate("zero-penalty-equivalent-measure", measure=measure)
    else:
        claim = static.claim
        vals = np.array([claim.values[b] for b in tree.leaves])
        if np.any(vals < -tol) or vals.max() <= tol:
            raise InconsistentVerdicts("static certificate is not a free lunch claim")
        p = price(model, claim, root).values[tree.root]
        if p > tol:
            raise InconsistentVerdicts(f"static certificate priced at {p!r} > 0")
        checks.info["certificate_price"] = p
        # iv refuted: any equivalent measure would satisfy E_R(X*) <= price <= 0,
        # impossible for a nonnegative nonzero claim; i refuted by X* in K_0.
        checks.info["iv_refuted_by"] = "certificate claim"
        cert = static

    if not checks.passed:
        raise InconsistentVerdicts("sampled corroboration failed: " + checks.summary())
    return NflReport(no_free_lunch=verdict_ii, certificate=cert, checks=checks)
