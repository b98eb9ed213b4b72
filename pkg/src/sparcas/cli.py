"""Command-line entry point: ``sparcas run | verify | replay``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from . import mechanism as mech
from .simulator import CLASSES, TRACE_HEADER, SimConfig, budget_balanced, run

log = logging.getLogger("sparcas")

CSV_SCHEMA = "# sparcas-csv v1"
OUTPUTS = ("scalability", "comparison", "class_delays", "dynamic", "payments")
DESK_MAX_WIDTH = 100
DESK_MAX_N = 200
DEFAULT_TIMEOUT = 1200.0


class SpecError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    name: str
    templates: List[dict]
    seeds: int = 20
    timeout: float = DEFAULT_TIMEOUT
    outputs: List[str] = field(default_factory=list)
    out: Optional[str] = None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        if not isinstance(d, dict):
            raise SpecError("spec: top level must be an object")
        for key in ("name", "templates"):
            if key not in d:
                raise SpecError(f"spec: missing field '{key}'")
        unknown = set(d) - {"name", "templates", "seeds", "timeout", "outputs", "out"}
        if unknown:
            raise SpecError(f"spec: unknown fields {sorted(unknown)}")
        seeds = d.get("seeds", 20)
        if not isinstance(seeds, int) or seeds < 1:
            raise SpecError(f"spec: field 'seeds' must be an integer >= 1, got {seeds!r}")
        timeout = d.get("timeout", DEFAULT_TIMEOUT)
        if not isinstance(timeout, (int, float)) or timeout <= 0:
            raise SpecError(f"spec: field 'timeout' must be positive, got {timeout!r}")
        outputs = d.get("outputs", [])
        for o in outputs:
            if o not in OUTPUTS:
                raise SpecError(f"spec: field 'outputs': unknown output {o!r}")
        templates = d["templates"]
        if not isinstance(templates, list) or not templates:
            raise SpecError("spec: field 'templates' must be a non-empty list")
        for i, t in enumerate(templates):
            try:
                SimConfig.from_dict(t)
            except (TypeError, ValueError) as exc:
                raise SpecError(f"spec: templates[{i}]: {exc}") from None
        return cls(d["name"], templates, seeds, float(timeout), list(outputs), d.get("out"))


def load_spec(path: str) -> ExperimentSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read spec {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"spec {path}: line {exc.lineno}: {exc.msg}") from None
    return ExperimentSpec.from_dict(data)


def preset_names() -> List[str]:
    return sorted(p.name[:-5] for p in resources.files("sparcas.presets").iterdir()
                  if p.name.endswith(".json"))


def load_preset(name: str) -> ExperimentSpec:
    f = resources.files("sparcas.presets") / f"{name}.json"
    if not f.is_file():
        raise SpecError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return ExperimentSpec.from_dict(json.loads(f.read_text()))


def seed_base() -> int:
    return int(os.environ.get("SPARCAS_SEED_BASE", "0"))


# --------------------------------------------------------------------------
# running and aggregating

def _one(job: Tuple[int, dict, str]) -> dict:
    idx, cfg_dict, outdir = job
    cfg = SimConfig.from_dict(cfg_dict)
    res = run(cfg)
    rep = res.report
    stem = f"t{idx:02d}_{cfg.mechanism}_w{cfg.width}_n{cfg.n}_s{cfg.seed}"
    if outdir:
        tdir = Path(outdir) / "traces"
        tdir.mkdir(parents=True, exist_ok=True)
        (tdir / f"{stem}.trace").write_text(res.trace)
        (tdir / f"{stem}.audit").write_text(res.audit)
    payments = list(rep.payments.values())
    values = list(rep.values.values())
    row = {
        "template": idx,
        "workspace": cfg.width,
        "n": cfg.n,
        "mechanism": cfg.mechanism,
        "arrival": cfg.arrival,
        "seed": cfg.seed,
        "timed_out": int(rep.timed_out),
        "offline_time": rep.offline_time,
        "auction_time": rep.auction_time,
        "planning_time": cfg.timeout if rep.timed_out and cfg.timeout else rep.planning_time,
        "makespan": rep.makespan,
        "mean_path_exec": rep.mean_path_exec,
        "sum_of_costs": rep.sum_of_costs,
        "completed": rep.completed,
        "collisions": rep.collisions,
        "deadlock": int(rep.deadlock),
        "frac_never_paid": rep.frac_never_paid,
        "mean_value": float(sum(values, Fraction(0)) / len(values)) if values else 0.0,
        "mean_payment": float(sum(payments, Fraction(0)) / len(payments)) if payments else 0.0,
        "budget_balanced": int(budget_balanced(rep)),
    }
    means = rep.class_means()
    for c in CLASSES:
        row[f"{c}_wait"] = means[c]["mean_wait"] if c in means else ""
        row[f"{c}_payment"] = means[c]["mean_payment"] if c in means else ""
    return row


def expand(spec: ExperimentSpec, seeds: Optional[int] = None, timeout: Optional[float] = None,
           full: bool = False) -> List[Tuple[int, dict]]:
    base = seed_base()
    seeds = seeds or spec.seeds
    timeout = timeout or spec.timeout
    jobs = []
    for idx, tmpl in enumerate(spec.templates):
        cfg = SimConfig.from_dict(tmpl)
        if not full and (cfg.width > DESK_MAX_WIDTH or cfg.n > DESK_MAX_N):
            log.info("skipping template %d (beyond desk scale; use --full)", idx)
            continue
        for s in range(seeds):
            d = dict(tmpl, seed=base + s, timeout=timeout)
            jobs.append((idx, d))
    return jobs


def execute(jobs: Sequence[Tuple[int, dict]], outdir: Optional[str], workers: int) -> List[dict]:
    payload = [(idx, d, outdir or "") for idx, d in jobs]
    if workers <= 1:
        return [_one(p) for p in payload]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_one, payload))


def _mean(xs: Iterable) -> float:
    xs = [float(x) for x in xs if x != ""]
    return sum(xs) / len(xs) if xs else float("nan")


def aggregate(rows: Sequence[dict], keys: Sequence[str], fields: Sequence[str]) -> List[dict]:
    """Group ``rows`` by ``keys`` and average ``fields``; also count runs and timeouts."""
    groups: Dict[tuple, List[dict]] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    out = []
    for key in sorted(groups, key=lambda k: tuple(str(x).zfill(8) for x in k)):
        rs = groups[key]
        row = dict(zip(keys, key))
        for f in fields:
            row[f] = _mean(r[f] for r in rs)
        row["runs"] = len(rs)
        row["timeouts"] = sum(int(r["timed_out"]) for r in rs)
        out.append(row)
    return out


def class_rows(rows: Sequence[dict]) -> List[dict]:
    out = []
    for agg in aggregate(rows, ("workspace", "n", "mechanism"),
                         [f"{c}_{m}" for c in CLASSES for m in ("wait", "payment")]):
        for c in CLASSES:
            out.append({"workspace": agg["workspace"], "n": agg["n"], "mechanism": agg["mechanism"],
                        "class": c, "mean_wait": agg[f"{c}_wait"],
                        "mean_payment": agg[f"{c}_payment"], "runs": agg["runs"]})
    return out


def tables(rows: Sequence[dict]) -> Dict[str, List[dict]]:
    return {
        "scalability": aggregate(rows, ("workspace", "n"),
                                 ("offline_time", "auction_time", "planning_time")),
        "comparison": aggregate(rows, ("workspace", "n", "mechanism"),
                                ("planning_time", "makespan", "mean_path_exec", "completed")),
        "class_delays": class_rows(rows),
        "dynamic": aggregate(rows, ("workspace", "n", "mechanism", "arrival"),
                             ("planning_time", "offline_time", "makespan", "completed")),
        "payments": aggregate(rows, ("workspace", "n"),
                              ("mean_value", "mean_payment", "frac_never_paid")),
    }


def write_csv(path: Path, rows: Sequence[dict], name: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"{CSV_SCHEMA} {name}\n")
        if not rows:
            return
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def read_csv(path: Path) -> List[dict]:
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith(CSV_SCHEMA):
            raise SpecError(f"{path}: missing schema line")
        return list(csv.DictReader(fh))


def cmd_run(args) -> int:
    try:
        spec = load_preset(args.preset) if args.preset else load_spec(args.spec)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out or spec.out or f"results/{spec.name}")
    out.mkdir(parents=True, exist_ok=True)
    jobs = expand(spec, args.seeds, args.timeout, args.full)
    workers = args.jobs or os.cpu_count() or 1
    log.info("%s: %d runs on %d workers", spec.name, len(jobs), workers)
    rows = execute(jobs, str(out), workers)
    write_csv(out / "runs.csv", rows, "runs")
    outputs = spec.outputs or list(OUTPUTS)
    built = tables(rows)
    for name in outputs:
        write_csv(out / f"{name}.csv", built[name], name)
    bad = [r for r in rows if r["mechanism"] != "naive" and r["collisions"]]
    print(f"{spec.name}: {len(rows)} runs, {sum(r['timed_out'] for r in rows)} timed out, "
          f"results in {out}")
    if bad:
        print(f"error: {len(bad)} runs reported collisions", file=sys.stderr)
        return 1
    return 0


# --------------------------------------------------------------------------
# replay

class TraceError(ValueError):
    pass


def parse_trace(text: str) -> Tuple[SimConfig, List[List[str]], Fraction]:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or not lines[0].startswith(TRACE_HEADER):
        raise TraceError("line 1: missing trace header")
    try:
        cfg = SimConfig.from_dict(json.loads(lines[0][len(TRACE_HEADER):]))
    except (ValueError, TypeError) as exc:
        raise TraceError(f"line 1: bad config: {exc}") from None
    records = []
    authority = None
    for no, line in enumerate(lines[1:], start=2):
        if line.startswith("# end "):
            fields = dict(tok.split("=", 1) for tok in line[6:].split())
            try:
                count = int(fields["records"])
                authority = Fraction(fields["authority"])
            except (KeyError, ValueError) as exc:
                raise TraceError(f"line {no}: bad end record: {exc}") from None
            if count != len(records):
                raise TraceError(f"line {no}: end record announces {count} records, found {len(records)}")
            if no != len(lines):
                raise TraceError(f"line {no + 1}: data after end record")
            break
        parts = line.split("\t")
        if len(parts) != 7:
            raise TraceError(f"line {no}: expected 7 tab-separated fields, got {len(parts)}")
        try:
            int(parts[0]), int(parts[1]), int(parts[2])
            if parts[3] not in ("A", "S"):
                raise ValueError(f"action {parts[3]!r}")
            for x in parts[4:]:
                Fraction(x)
        except ValueError as exc:
            raise TraceError(f"line {no}: {exc}") from None
        records.append(parts)
    if authority is None:
        raise TraceError(f"line {len(lines) + 1}: trace truncated, no end record")
    return cfg, records, authority


def reconcile(records: Sequence[Sequence[str]], authority: Fraction) -> Optional[str]:
    """None if money balances step by step, else a description of the first gap."""
    per_step: Dict[int, List[Fraction]] = {}
    for rec in records:
        acc = per_step.setdefault(int(rec[0]), [Fraction(0), Fraction(0)])
        acc[0] += Fraction(rec[5])
        acc[1] += Fraction(rec[6])
    paid = sum((v[0] for v in per_step.values()), Fraction(0))
    credited = sum((v[1] for v in per_step.values()), Fraction(0))
    if paid != credited + authority:
        return f"payments {paid} != credits {credited} + authority {authority}"
    return None


def cmd_replay(args) -> int:
    path = Path(args.trace)
    try:
        text = path.read_text()
        cfg, records, authority = parse_trace(text)
    except (OSError, TraceError) as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return 2
    gap = reconcile(records, authority)
    if gap:
        print(f"error: {path}: reconciliation failed: {gap}", file=sys.stderr)
        return 3
    res = run(cfg)
    if res.trace != text:
        mine, theirs = res.trace.split("\n"), text.split("\n")
        for no, (a, b) in enumerate(zip(mine, theirs), start=1):
            if a != b:
                break
        else:
            no = min(len(mine), len(theirs)) + 1
        print(f"error: {path}: divergence at line {no}", file=sys.stderr)
        return 1
    audit = path.with_suffix(".audit")
    if audit.exists() and audit.read_text() != res.audit:
        print(f"error: {audit}: audit log diverges", file=sys.stderr)
        return 1
    print(f"{path}: replay matches ({len(records)} records)")
    return 0


# --------------------------------------------------------------------------
# verify

def cmd_verify(args) -> int:
    from .verify import battery

    mech.set_mutation(args.mutate)
    try:
        results = battery(quick=not args.thorough)
    finally:
        mech.set_mutation(None)
    width = max(len(r.name) for r in results)
    failures = []
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.ok else 'FAIL'}  {r.detail}")
        if not r.ok:
            failures.append({"property": r.name, "detail": r.detail,
                             "counterexample": r.counterexample})
    if failures:
        out = Path(args.out or ".")
        out.mkdir(parents=True, exist_ok=True)
        dump = out / "verify_failures.json"
        dump.write_text(json.dumps(failures, indent=2, default=str))
        print(f"counterexamples written to {dump}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparcas", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment spec or preset")
    r.add_argument("spec", nargs="?", help="path to an experiment spec (JSON)")
    r.add_argument("--preset", choices=preset_names())
    r.add_argument("--seeds", type=int, help="override the number of seeds")
    r.add_argument("--timeout", type=float, help="per-run timeout in seconds")
    r.add_argument("--jobs", type=int, help="worker processes (default: CPU count)")
    r.add_argument("--out", help="output directory")
    r.add_argument("--full", action="store_true", help="include runs beyond desk scale")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run the property battery")
    v.add_argument("--mutate", choices=mech.MUTATIONS, help="test hook: break the mechanism")
    v.add_argument("--thorough", action="store_true", help="acceptance-sized battery")
    v.add_argument("--out", help="where to dump counterexamples")
    v.set_defaults(func=cmd_verify)

    rp = sub.add_parser("replay", help="re-execute a trace and compare byte for byte")
    rp.add_argument("trace")
    rp.set_defaults(func=cmd_replay)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "run" and not (args.spec or args.preset):
        parser.error("run needs a spec path or --preset")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
