"""Command-line interface: file ingestion, dispatch, report emission.

Exit codes: 0 pass/success, 1 check failure (witnesses printed), 2 input
error.  ``--format machine`` emits one ``key<TAB>value`` record per line.
All randomized checks honor ``--seed`` and the ``TCPP_MAX_ENUM`` variable
caps enumeration.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from .errors import TcppError
from .market import (GoodDealCaps, calibrated_bounds, calibration_feasible,
                     check_extends_dynamics, constrained_price,
                     good_deal_bounds, mme_bounds)
from .marketfile import MarketData, parse_claim_file, parse_market_file
from .nfl import nfl_verdict
from .pricing import (american_price, bid_ask, check_axioms, check_sublinear,
                      check_time_consistency, random_stopping_time)
from .report import CheckReport
from .scenario import (PenaltyProcess, check_cocycle, check_nondegenerate,
                       enumerate_selections)
from .tree import Claim, FiltrationTree, StoppingTime, validate_stopping_time


class Output:
    def __init__(self, machine: bool):
        self.machine = machine

    def emit(self, key: str, value) -> None:
        if self.machine:
            print(f"{key}\t{value}")
        else:
            print(f"{key}: {value}")

    def report(self, rep: CheckReport) -> None:
        self.emit(f"check.{rep.check.replace(' ', '-')}",
                  "pass" if rep.passed else "FAIL")
        for f in rep.findings:
            self.emit("witness", f"{f.where} -- {f.message}")


def _load(args) -> MarketData:
    md = parse_market_file(args.market)
    settings = md.settings
    if args.tol is not None:
        settings = dataclasses.replace(settings, feasibility_tol=args.tol)
    env_cap = os.environ.get("TCPP_MAX_ENUM")
    if env_cap is not None:
        settings = dataclasses.replace(settings, max_enum=int(env_cap))
    md.settings = settings
    return md


def _need_model(md: MarketData):
    if md.model is None:
        raise TcppError("this command needs a scenario model (menu lines) in the market file")
    return md.model


def _parse_cut(tree: FiltrationTree, text: str) -> StoppingTime:
    if text == "root":
        return StoppingTime.at_root(tree)
    if text == "horizon":
        return StoppingTime.at_horizon(tree)
    if text.startswith("t:"):
        return StoppingTime.at_time(tree, int(text[2:]))
    cut = StoppingTime.of(int(tok) for tok in text.split(","))
    validate_stopping_time(tree, cut)
    return cut


def cmd_price(args, out: Output) -> int:
    md = _load(args)
    model = _need_model(md)
    claim = parse_claim_file(args.claim, md.tree)
    sigma = _parse_cut(md.tree, args.at)
    bid, ask = bid_ask(model, claim, sigma)
    for a in sigma.sorted():
        out.emit(f"bid.{a}", repr(bid.values[a]))
        out.emit(f"ask.{a}", repr(ask.values[a]))
    return 0


def cmd_check_tcpp(args, out: Output) -> int:
    md = _load(args)
    model = _need_model(md)
    tree = md.tree
    rng = np.random.default_rng(args.seed)
    horizon = StoppingTime.at_horizon(tree)
    samples = [(Claim(horizon, {b: rng.uniform(-2, 2) for b in tree.leaves}),
                Claim(horizon, {b: rng.uniform(-2, 2) for b in tree.leaves}))
               for _ in range(args.samples)]
    axioms = check_axioms(model, samples, seed=args.seed)
    out.report(axioms)

    chains = []
    for _ in range(5):
        sigma = random_stopping_time(tree, rng)
        chains.append((StoppingTime.at_root(tree), sigma, horizon))
    tc = check_time_consistency(model, chains, [x for x, _ in samples[:50]])
    out.report(tc)

    cocycle_ok = True
    for i, sel in enumerate(enumerate_selections(model, md.settings)):
        if i >= 8:
            break
        rep = check_cocycle(PenaltyProcess.from_selection(model, sel), model)
        if not rep.passed:
            cocycle_ok = False
            out.report(rep)
    out.emit("check.cocycle", "pass" if cocycle_ok else "FAIL")

    nd = check_nondegenerate(model)
    out.report(nd)

    sub = check_sublinear(model, seed=args.seed)
    out.emit("sublinear", str(bool(sub)).lower())
    return 0 if (axioms.passed and tc.passed and cocycle_ok and nd.passed) else 1


def cmd_nfl(args, out: Output) -> int:
    md = _load(args)
    model = _need_model(md)
    rep = nfl_verdict(model, seed=args.seed, settings=md.settings)
    out.emit("verdict", "no-free-lunch" if rep.no_free_lunch else "free-lunch")
    out.emit("certificate", rep.certificate.kind)
    if rep.certificate.measure is not None:
        for leaf in sorted(rep.certificate.measure.density):
            out.emit(f"density.{leaf}", repr(rep.certificate.measure.density[leaf]))
    if rep.certificate.claim is not None:
        for leaf in rep.certificate.claim.at.sorted():
            out.emit(f"claim.{leaf}", repr(rep.certificate.claim.values[leaf]))
    return 0 if rep.no_free_lunch else 1


def cmd_bounds(args, out: Output) -> int:
    md = _load(args)
    claim = parse_claim_file(args.claim, md.tree)
    if not md.assets:
        raise TcppError("bounds need reference assets in the market file")
    if args.kind == "mme":
        b = mme_bounds(md.tree, md.assets, claim, md.settings)
        out.emit("lower", repr(b.lower))
        out.emit("upper", repr(b.upper))
        out.emit("equivalent", str(b.has_equivalent).lower())
    elif args.kind == "calibrated":
        lo, hi = calibrated_bounds(md.tree, md.assets, md.quotes, claim, md.settings)
        out.emit("lower", repr(lo))
        out.emit("upper", repr(hi))
    else:
        caps = md.caps
        if args.good_deal_cap is not None:
            caps = GoodDealCaps.uniform(args.good_deal_cap)
        if caps is None:
            raise TcppError("good-deal bounds need caps (cap lines or --good-deal-cap)")
        lo, hi = good_deal_bounds(md.tree, md.assets, caps, claim, md.settings)
        out.emit("lower", repr(lo))
        out.emit("upper", repr(hi))
    return 0


def cmd_calibrate(args, out: Output) -> int:
    md = _load(args)
    if not md.assets:
        raise TcppError("calibration needs reference assets in the market file")
    q0 = calibration_feasible(md.tree, md.assets, md.quotes, md.settings)
    if q0 is None:
        out.emit("calibration", "infeasible")
        return 1
    out.emit("calibration", "feasible")
    for leaf in sorted(q0.density):
        out.emit(f"density.{leaf}", repr(q0.density[leaf]))
    return 0


def cmd_extends(args, out: Output) -> int:
    md = _load(args)
    model = _need_model(md)
    rep = check_extends_dynamics(model, md.assets, seed=args.seed,
                                 settings=md.settings)
    out.report(rep)
    return 0 if rep.passed else 1


def cmd_constrained(args, out: Output) -> int:
    md = _load(args)
    if md.constraint_set is None:
        raise TcppError("constrained pricing needs vertex lines in the market file")
    claim = parse_claim_file(args.claim, md.tree)
    value = constrained_price(md.tree, md.assets, md.constraint_set, claim,
                              md.settings)
    out.emit("value", repr(value.values[md.tree.root]))
    return 0


def cmd_american(args, out: Output) -> int:
    md = _load(args)
    model = _need_model(md)
    payoff = parse_claim_file(args.claim, md.tree, full_process=True)
    nu = _parse_cut(md.tree, args.at)
    tau = StoppingTime.at_horizon(md.tree)
    res = american_price(model, payoff, nu, tau, md.settings)
    for a in nu.sorted():
        out.emit(f"value.{a}", repr(res.value.values[a]))
        out.emit(f"induction.{a}", repr(res.induction.values[a]))
    out.emit("induction-agrees", str(res.agree).lower())
    return 0


_COMMANDS = {
    "price": cmd_price,
    "check-tcpp": cmd_check_tcpp,
    "nfl": cmd_nfl,
    "bounds": cmd_bounds,
    "calibrate": cmd_calibrate,
    "extends": cmd_extends,
    "constrained": cmd_constrained,
    "american": cmd_american,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="tcpp",
        description="Time-consistent bid-ask pricing on finite event trees.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--market", required=True, help="market document")
        sp.add_argument("--claim", help="claim or payoff-process file")
        sp.add_argument("--at", default="root",
                        help="cut: root, horizon, t:<k>, or node ids 'a,b,c'")
        sp.add_argument("--seed", type=int, default=20240101)
        sp.add_argument("--tol", type=float, default=None,
                        help="override the feasibility tolerance")
        sp.add_argument("--samples", type=int, default=200)
        sp.add_argument("--good-deal-cap", type=float, default=None)
        sp.add_argument("--kind", choices=["mme", "calibrated", "good-deal"],
                        default="mme")
        sp.add_argument("--format", choices=["text", "machine"], default="text")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out = Output(machine=args.format == "machine")
    needs_claim = args.command in ("price", "bounds", "constrained", "american")
    try:
        if needs_claim and not args.claim:
            raise TcppError(f"{args.command} requires --claim")
        return _COMMANDS[args.command](args, out)
    except (TcppError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
