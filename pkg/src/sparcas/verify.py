"""Property battery behind ``sparcas verify``."""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, List, Optional

from .mechanism import sparcas_auction
from .oracle import misreport_sweep, oracle_auction, oracle_max_welfare, random_instance
from .scenarios import ring_lock_fixture
from .simulator import SimConfig, Simulation, budget_balanced, run
from .workspace import generate_grid


@dataclass
class Check:
    name: str
    ok: bool
    detail: str
    counterexample: Optional[Any] = None


def _roundabout():
    w = generate_grid(16, 16)
    return next(rb for rb in w.intersections if len(rb.entries) == 4)


def _int_values(rng):
    return lambda: Fraction(rng.randint(0, 10))


def check_efficiency(count: int, seed: int = 1) -> Check:
    rb = _roundabout()
    rng = random.Random(seed)
    for i in range(count):
        anns, blocked = random_instance(rng, rb, rng.randint(1, 6), _int_values(rng))
        got = sparcas_auction(rb, anns, blocked).welfare
        best = oracle_max_welfare(rb, anns, blocked)
        if got != best:
            return Check("efficiency", False, f"instance {i}: welfare {got} != {best}",
                         {"anns": anns, "blocked": sorted(blocked)})
    return Check("efficiency", True, f"{count} instances match the exhaustive maximum")


def check_payments_match_oracle(count: int, seed: int = 2) -> Check:
    rb = _roundabout()
    rng = random.Random(seed)
    for i in range(count):
        anns, blocked = random_instance(rng, rb, rng.randint(1, 6), _int_values(rng))
        got = sparcas_auction(rb, anns, blocked)
        ref = oracle_auction(rb, anns, blocked)
        if got.payments != ref.payments:
            return Check("payment-equivalence", False, f"instance {i}: payments differ",
                         {"anns": anns, "got": got.payments, "oracle": ref.payments})
    return Check("payment-equivalence", True, f"{count} instances match the oracle")


def check_truthfulness(count: int, seed: int = 3) -> Check:
    rb = _roundabout()
    rng = random.Random(seed)
    checked = 0
    for i in range(count):
        anns, blocked = random_instance(rng, rb, rng.randint(1, 5), _int_values(rng))
        verdict = misreport_sweep(rb, anns, blocked=blocked)
        checked += verdict.checked
        if not verdict.truthful:
            d = verdict.deviations[0]
            return Check("truthfulness", False,
                         f"instance {i}: robot {d.robot} gains by reporting {d.misreport} "
                         f"({d.deviating_payoff} > {d.truthful_payoff})",
                         {"anns": anns, "deviation": d})
    return Check("truthfulness", True, f"{count} instances, {checked} misreports, none profitable")


def check_payment_signs(count: int, seed: int = 4) -> Check:
    rb = _roundabout()
    rng = random.Random(seed)
    for i in range(count):
        anns, blocked = random_instance(rng, rb, rng.randint(1, 6), _int_values(rng))
        out = sparcas_auction(rb, anns, blocked)
        for a in anns:
            p = out.payments[a.robot]
            gained = a.reported_value if a.robot in out.chosen.advancing() else 0
            if p < 0 or gained - p < 0:
                return Check("payment-signs", False,
                             f"instance {i}: robot {a.robot} pays {p} for {gained}", {"anns": anns})
    return Check("payment-signs", True, f"{count} instances: payments and payoffs >= 0")


def check_runs(seeds: int, n: int) -> Check:
    for s in range(seeds):
        rep = run(SimConfig(n=n, seed=s)).report
        if rep.collisions or rep.deadlock or rep.ring_overflows or not budget_balanced(rep):
            return Check("simulation", False,
                         f"seed {s}: collisions={rep.collisions} deadlock={rep.deadlock} "
                         f"overflows={rep.ring_overflows}", {"seed": s, "n": n})
    return Check("simulation", True, f"{seeds} runs with n={n}: no collision, deadlock or imbalance")


def check_ring_lock() -> Check:
    results = {}
    for name in ("naive", "sparcas"):
        w, robots = ring_lock_fixture()
        sim = Simulation(w, robots, name)
        peak = 0
        while not sim.finished() and not sim.deadlocked and sim.t < 100:
            sim.step()
            peak = max(peak, max(sim.ring_occupancy()))
        results[name] = (sim.deadlocked, sim.finished(), peak)
    ok = results["naive"][0] and results["sparcas"][1] and results["sparcas"][2] <= 3
    return Check("ring-lock", ok, f"naive deadlocked={results['naive'][0]}, "
                 f"sparcas finished={results['sparcas'][1]} peak ring={results['sparcas'][2]}")


def check_determinism(seed: int = 5) -> Check:
    # tie-heavy auctions: all bids equal
    rb = _roundabout()
    rng = random.Random(seed)
    for i in range(200):
        anns, blocked = random_instance(rng, rb, rng.randint(2, 6), lambda: Fraction(1))
        first = sparcas_auction(rb, anns, blocked)
        for _ in range(5):
            if sparcas_auction(rb, anns, blocked) != first:
                return Check("determinism", False, f"instance {i}: repeated auction differs",
                             {"anns": anns})
    cfg = SimConfig(width=30, height=30, n=30, seed=seed)
    if run(cfg).trace != run(cfg).trace:
        return Check("determinism", False, "repeated run produced a different trace")
    return Check("determinism", True, "repeated auctions and runs are identical")


def _guarded(name, fn, *args) -> Check:
    try:
        return fn(*args)
    except Exception as exc:  # a crash is a failed property, not an aborted battery
        return Check(name, False, f"raised {type(exc).__name__}: {exc}", repr(exc))


def battery(quick: bool = True) -> List[Check]:
    scale = 1 if quick else 10
    plan = [
        ("efficiency", check_efficiency, 1000 * scale),
        ("payment-equivalence", check_payments_match_oracle, 500 * scale),
        ("truthfulness", check_truthfulness, 50 * scale),
        ("payment-signs", check_payment_signs, 500 * scale),
        ("ring-lock", check_ring_lock),
        ("simulation", check_runs, 3 * scale, 50),
        ("determinism", check_determinism),
    ]
    return [_guarded(name, fn, *args) for name, fn, *args in plan]
