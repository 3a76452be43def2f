"""Scenario-model behavior: selections, penalties, cocycle, conjugacy."""
import itertools
import math

import numpy as np
import pytest

from gen import random_claim, random_model, random_tree
from tcpp.errors import EnumerationOverflow, TcppError
from tcpp.scenario import (MeasureSelection, MenuEntry, PenaltyProcess,
                           ScenarioModel, aggregate_penalty, check_cocycle,
                           check_nondegenerate, cumulative_penalties,
                           enumerate_selections, minimal_penalty,
                           selection_to_measure)
from tcpp.settings import Settings
from tcpp.tree import Claim, FiltrationTree, Measure, StoppingTime, precedes
from tcpp.pricing import price, price_enumerated


def test_model_validation():
    tree = FiltrationTree.binomial(1)
    with pytest.raises(TcppError):
        ScenarioModel(tree, {0: [MenuEntry((0.5, 0.4), 0.0)]})   # sums to 0.9
    with pytest.raises(TcppError):
        ScenarioModel(tree, {0: [MenuEntry((0.5,), 0.0)]})        # arity
    with pytest.raises(TcppError):
        ScenarioModel(tree, {})                                   # missing node
    model = ScenarioModel(tree, {0: [MenuEntry((0.5, 0.5), -0.2)]})
    assert model.normalization_findings()  # kept constructible, flagged


def test_identity_selection_density_one():
    rng = np.random.default_rng(2)
    tree = random_tree(rng)
    model = ScenarioModel.reference(tree)
    sel = MeasureSelection.of({v: 0 for v in tree.internal_nodes()})
    q = selection_to_measure(model, sel)
    assert max(abs(q.density[v] - 1.0) for v in tree.leaves) <= 1e-12


def test_selection_density_ratio_example():
    tree = FiltrationTree.binomial(1)
    model = ScenarioModel(tree, {0: [MenuEntry((1 / 3, 2 / 3), 0.0)]})
    q = selection_to_measure(model, MeasureSelection.of({0: 0}))
    assert abs(q.density[1] - 2 / 3) <= 1e-12
    assert abs(q.density[2] - 4 / 3) <= 1e-12


def test_selection_with_zero_component_absolutely_continuous():
    tree = FiltrationTree.binomial(1)
    model = ScenarioModel(tree, {0: [MenuEntry((1.0, 0.0), 0.0)]})
    q = selection_to_measure(model, MeasureSelection.of({0: 0}))
    q.validate(tree)
    assert q.density[2] == 0.0
    assert not q.is_equivalent()


def test_enumerate_selections_count_and_cap():
    tree = FiltrationTree.binomial(2)
    menus = {v: [MenuEntry((0.5, 0.5), 0.0), MenuEntry((0.9, 0.1), 0.1)]
             for v in tree.internal_nodes()}
    model = ScenarioModel(tree, menus)
    sels = list(enumerate_selections(model))
    assert len(sels) == 8 == model.selection_count()
    with pytest.raises(EnumerationOverflow):
        list(enumerate_selections(model, Settings(max_enum=7)))


def test_aggregate_penalty_trivial_and_deterministic_sum():
    tree = FiltrationTree.binomial(2)
    menus = {0: [MenuEntry((0.3, 0.7), 0.1), MenuEntry((0.5, 0.5), 0.0)],
             1: [MenuEntry((0.5, 0.5), 0.2), MenuEntry((0.5, 0.5), 0.0)],
             2: [MenuEntry((0.8, 0.2), 0.2), MenuEntry((0.5, 0.5), 0.0)]}
    model = ScenarioModel(tree, menus)
    sel = MeasureSelection.of({0: 0, 1: 0, 2: 0})
    root = StoppingTime.at_root(tree)
    horizon = StoppingTime.at_horizon(tree)
    assert aggregate_penalty(model, sel, root, root).values[0] == 0.0
    # deterministic penalties: conditional expectation collapses to a sum
    total = aggregate_penalty(model, sel, root, horizon)
    assert abs(total.values[0] - 0.3) <= 1e-12
    zero_sel = MeasureSelection.of({0: 1, 1: 1, 2: 1})
    assert aggregate_penalty(model, zero_sel, root, horizon).values[0] == 0.0


def test_cocycle_identity_exact_for_all_triples():
    rng = np.random.default_rng(9)
    for _ in range(15):
        tree = random_tree(rng, max_periods=2)
        model = random_model(rng, tree)
        sels = list(itertools.islice(enumerate_selections(model), 4))
        for sel in sels:
            from tcpp.pricing import random_stopping_time
            nu = random_stopping_time(tree, rng)
            tau = random_stopping_time(tree, rng, lo=nu)
            sigma = random_stopping_time(tree, rng, lo=nu, hi=tau)
            a_nt = aggregate_penalty(model, sel, nu, tau)
            a_ns = aggregate_penalty(model, sel, nu, sigma)
            a_st = aggregate_penalty(model, sel, sigma, tau)
            # E_Q(alpha_{sigma,tau} | F_nu) under the chosen kernels
            g = cumulative_penalties(model, sel, tau)
            choice = sel.as_dict()
            for a in nu.cut:
                cond = _expect_below(model, choice, a, sigma, a_st.values)
                assert abs(a_nt.values[a] - (a_ns.values[a] + cond)) <= 1e-12


def _expect_below(model, choice, node, sigma, values):
    tree = model.tree
    if node in sigma.cut:
        return values[node]
    entry = model.menus[node][choice[node]]
    return sum(entry.kernel[i] * _expect_below(model, choice, c, sigma, values)
               for i, c in enumerate(tree.children[node]))


def test_check_cocycle_accepts_construction_and_flags_perturbation():
    rng = np.random.default_rng(4)
    tree = random_tree(rng, max_periods=2)
    model = random_model(rng, tree)
    sel = next(iter(enumerate_selections(model)))
    proc = PenaltyProcess.from_selection(model, sel)
    assert check_cocycle(proc, model).passed
    bad_vals = dict(proc.values)
    victim = tree.internal_nodes()[0]
    bad_vals[victim] += 0.01
    rep = check_cocycle(PenaltyProcess(sel, bad_vals), model)
    assert not rep.passed
    assert any(f"node {victim}" == f.where for f in rep.findings)


def test_cocycle_deterministic_weaker_than_stopping_times():
    # compensating perturbation at time 1 keeps every deterministic-time
    # identity but breaks additivity across a stopping time that stops
    # early on one branch only
    tree = FiltrationTree.binomial(2)
    menus = {0: [MenuEntry((0.5, 0.5), 0.1), MenuEntry((0.5, 0.5), 0.0)],
             1: [MenuEntry((0.5, 0.5), 0.3), MenuEntry((0.5, 0.5), 0.0)],
             2: [MenuEntry((0.5, 0.5), 0.2), MenuEntry((0.5, 0.5), 0.0)]}
    model = ScenarioModel(tree, menus)
    sel = MeasureSelection.of({0: 0, 1: 0, 2: 0})
    true_vals = cumulative_penalties(model, sel)
    eps = 0.05
    vals = dict(true_vals)
    vals[1] += eps / 0.5
    vals[2] -= eps / 0.5
    proc = PenaltyProcess(sel, vals)
    rep = check_cocycle(proc, model)
    assert rep.info["deterministic_passed"]
    assert not rep.passed
    flagged = {f.where for f in rep.findings}
    assert flagged & {"node 1", "node 2"}
    # the same data fails the cocycle across sigma = {up, down-down, down-up}
    sigma = StoppingTime.of([1, 5, 6])
    tau = StoppingTime.at_horizon(tree)
    nu = StoppingTime.at_root(tree)
    leg = aggregate_penalty(model, sel, nu, sigma).values[0]
    cond = 0.5 * vals[1]  # alpha_{sigma,tau} vanishes on the leaf atoms
    assert abs(vals[0] - (leg + cond)) > 1e-3


def test_minimal_penalty_zero_on_zero_penalty_member():
    rng = np.random.default_rng(13)
    tree = random_tree(rng, max_periods=2)
    model = random_model(rng, tree, sublinear=True)
    sel = next(iter(enumerate_selections(model)))
    r = selection_to_measure(model, sel)
    pen = minimal_penalty(model, r, StoppingTime.at_root(tree),
                          StoppingTime.at_horizon(tree))
    assert abs(pen.values[tree.root]) <= 1e-9


def test_minimal_penalty_mixture_example():
    tree = FiltrationTree.binomial(1)
    model = ScenarioModel(tree, {0: [MenuEntry((0.5, 0.5), 0.0),
                                     MenuEntry((1.0, 0.0), 1.0)]})
    r = Measure({1: 0.75 / 0.5, 2: 0.25 / 0.5})
    pen = minimal_penalty(model, r, StoppingTime.at_root(tree),
                          StoppingTime.at_horizon(tree))
    assert abs(pen.values[0] - 0.5) <= 1e-9


def test_minimal_penalty_infeasible_is_infinite():
    tree = FiltrationTree.binomial(1)
    model = ScenarioModel(tree, {0: [MenuEntry((0.5, 0.5), 0.0)]})
    r = Measure({1: 1.5, 2: 0.5})
    pen = minimal_penalty(model, r, StoppingTime.at_root(tree),
                          StoppingTime.at_horizon(tree))
    assert pen.values[0] == math.inf


def test_minimal_penalty_nan_on_uncharged_atom():
    tree = FiltrationTree.binomial(1)
    model = ScenarioModel(tree, {0: [MenuEntry((0.5, 0.5), 0.0),
                                     MenuEntry((1.0, 0.0), 0.0)]})
    r = Measure({1: 2.0, 2: 0.0})
    pen = minimal_penalty(model, r, StoppingTime.at_horizon(tree),
                          StoppingTime.at_horizon(tree))
    assert pen.values[1] == 0.0
    assert math.isnan(pen.values[2])


def test_minimality_against_stated_penalties():
    rng = np.random.default_rng(23)
    for _ in range(10):
        tree = random_tree(rng, max_periods=2)
        model = random_model(rng, tree, max_entries=2)
        root = StoppingTime.at_root(tree)
        horizon = StoppingTime.at_horizon(tree)
        for sel in itertools.islice(enumerate_selections(model), 32):
            stated = aggregate_penalty(model, sel, root, horizon).values[tree.root]
            r = selection_to_measure(model, sel)
            pen = minimal_penalty(model, r, root, horizon).values[tree.root]
            assert pen <= stated + 1e-9


def test_bidual_exactness_reprices_model():
    rng = np.random.default_rng(31)
    for _ in range(8):
        tree = random_tree(rng, max_periods=2)
        model = random_model(rng, tree, max_entries=2)
        root = StoppingTime.at_root(tree)
        horizon = StoppingTime.at_horizon(tree)
        sels = list(itertools.islice(enumerate_selections(model), 64))
        duals = []
        for sel in sels:
            r = selection_to_measure(model, sel)
            pen = minimal_penalty(model, r, root, horizon).values[tree.root]
            duals.append((r.leaf_masses(tree), pen))
        for _ in range(5):
            x = random_claim(rng, tree)
            direct = price(model, x, root).values[tree.root]
            vec = np.array([x.values[b] for b in tree.leaves])
            re_priced = max(float(m @ vec) - p for m, p in duals
                            if not math.isnan(p) and p != math.inf)
            assert re_priced <= direct + 1e-9
            assert abs(re_priced - direct) <= 1e-9


def test_check_nondegenerate_cases():
    tree = FiltrationTree.binomial(1)
    assert check_nondegenerate(ScenarioModel.reference(tree)).passed
    dead = ScenarioModel(tree, {0: [MenuEntry((1.0, 0.0), 0.0),
                                    MenuEntry((1.0, 0.0), 0.5)]})
    rep = check_nondegenerate(dead)
    assert not rep.passed
    assert rep.info["dead_leaves"] == [2]
    # supports jointly cover although individually they do not
    joint = ScenarioModel(tree, {0: [MenuEntry((1.0, 0.0), 0.0),
                                     MenuEntry((0.0, 1.0), 0.0)]})
    assert check_nondegenerate(joint).passed


def test_price_matches_enumeration_for_scenario_examples():
    rng = np.random.default_rng(41)
    tree = random_tree(rng, max_periods=2)
    model = random_model(rng, tree)
    sigma = StoppingTime.at_time(tree, 1)
    x = random_claim(rng, tree)
    assert price(model, x, sigma).allclose(price_enumerated(model, x, sigma), 1e-9)
