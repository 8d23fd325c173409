"""Command-line entry point: ``coplan solve`` and ``coplan verify``.

Exit codes: 0 success, 1 verification failure, 2 infeasible, 3 iteration,
time or enumeration cap hit, 64 bad flags, 65 invalid instance data.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from coplan import __version__
from coplan.checks import check_plan
from coplan.ddu import EnumerationCapError, polytope_vertices, relaxed_ddu_matrix
from coplan.generate import random_instance
from coplan.instance import InstanceError, NetworkInstance, load_instance
from coplan.npccg import AlgorithmConfig, AlgorithmError, CoPlanSolution, solve_coplan, solve_worst_case
from coplan.oracle import (OracleCache, brute_force_coplan, brute_force_worst_case,
                           first_stage_candidates, worst_case_table)
from coplan.solver import SolveParams, SolverError

EXIT_OK, EXIT_FAIL, EXIT_INFEASIBLE, EXIT_LIMIT, EXIT_USAGE, EXIT_DATA = 0, 1, 2, 3, 64, 65
RESULT_SCHEMA = 1
CSV_COLUMNS = ("outer_n", "inner_j", "phase", "LB", "UB", "wall_ms", "cuts_total")
SUITES = ("worst-case", "coplan", "lemma1", "enhancements")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="coplan", description="Robust co-planning of line hardening and MHER rental.")
    p.add_argument("--version", action="version", version=f"coplan {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve the co-planning problem")
    s.add_argument("--instance", required=True)
    s.add_argument("--upsilon", type=float, help="override the resilience target")
    s.add_argument("--k", type=int, help="override the damage budget k")
    s.add_argument("--enhancements", choices=("none", "ou-prime", "warm-start", "all"), default="all")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--time-limit", type=float, default=math.inf)
    s.add_argument("--backend", choices=("highs", "reference"))
    s.add_argument("--out", default=".")

    v = sub.add_parser("verify", help="cross-check against the exhaustive oracle")
    v.add_argument("--instance", help="instance file; omitted means a seeded random micro-suite")
    v.add_argument("--suite", required=True, choices=SUITES)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--count", type=int, default=20, help="cases per suite")
    return p


def _load(path: str, upsilon: float | None = None, k: int | None = None) -> NetworkInstance:
    inst = load_instance(Path(path))
    changes = {}
    if upsilon is not None:
        changes["resilience_target"] = upsilon
    if k is not None:
        changes["k"] = k
    return inst.replace(**changes) if changes else inst


def result_dict(inst: NetworkInstance, sol: CoPlanSolution) -> dict:
    z = sol.decision
    worst = sol.worst
    cfg = asdict(sol.config)
    cfg["params"] = asdict(sol.config.params)
    return {
        "schema": RESULT_SCHEMA,
        "instance": inst.name,
        "status": sol.status,
        "src_dollars": sol.src_dollars,
        "hardened_lines": z.hardened_ids(inst) if z else [],
        "rented_mhers": z.rented_ids(inst) if z else [],
        "preallocation": z.placement(inst) if z else {},
        "worst_scenario": None if worst is None else {
            "damaged_lines": worst.scenario.damaged_ids(inst),
            "h0": {m.id: h for m, h in zip(inst.fleet.mhers, worst.scenario.h0)},
        },
        "certified_ratio": None if math.isnan(sol.certified_ratio) else sol.certified_ratio,
        "resilience_target": inst.resilience_target,
        "outer_iterations": sol.outer_iterations,
        "inner_iterations_total": sol.inner_iterations_total,
        "wall_seconds": sol.wall,
        "config": {k: (None if isinstance(v, float) and math.isinf(v) else v) for k, v in cfg.items()},
    }


def write_iterations(path: Path, records) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([r.outer_n, r.inner_j, r.phase, r.lb, r.ub, f"{r.wall_ms:.3f}", r.cuts_total])


def cmd_solve(args) -> int:
    try:
        inst = _load(args.instance, args.upsilon, args.k)
        if args.backend:
            inst = inst.replace(backend=args.backend)
    except InstanceError as exc:
        print(f"invalid instance: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"cannot read instance: {exc}", file=sys.stderr)
        return EXIT_USAGE
    params = SolveParams(seed=args.seed, time_limit=args.time_limit)
    cfg = AlgorithmConfig.with_enhancements(args.enhancements, backend=inst.backend, params=params,
                                            time_limit=args.time_limit)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        sol = solve_coplan(inst, cfg)
    except AlgorithmError as exc:
        print(f"stopped: {exc}", file=sys.stderr)
        write_iterations(out / "iterations.csv", exc.iterations)
        return EXIT_LIMIT
    except SolverError as exc:
        print(f"solver stopped: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    (out / "result.json").write_text(json.dumps(result_dict(inst, sol), indent=2) + "\n")
    write_iterations(out / "iterations.csv", sol.iterations)
    src = "n/a" if sol.src is None else f"{float(sol.src):.2f}"
    print(f"status={sol.status} src={src} certified={sol.certified_ratio:.6f} "
          f"outer={sol.outer_iterations} wall={sol.wall:.2f}s")
    return EXIT_OK if sol.status == "optimal" else EXIT_INFEASIBLE


# -- verify -----------------------------------------------------------------------


def _suite(args) -> list[NetworkInstance]:
    if args.instance:
        return [_load(args.instance)]
    return [random_instance(args.seed + i, n_vulnerable=4, n_mhers=2, periods=2) for i in range(args.count)]


def _report(name: str, ok: bool, detail: str) -> bool:
    print(f"{'PASS' if ok else 'FAIL'}  {name:<28} {detail}")
    return ok


def _verify_worst_case(insts, args) -> bool:
    rng = np.random.default_rng(args.seed)
    ok, dmax = True, 0.0
    per = max(1, args.count // len(insts))
    for inst in insts:
        cache = OracleCache(inst)
        cands = first_stage_candidates(inst)
        for z in [cands[int(i)] for i in rng.choice(len(cands), size=min(per, len(cands)), replace=False)]:
            wc = solve_worst_case(inst, z.x, z)
            bf, _ = brute_force_worst_case(inst, z.x, z, cache)
            d = abs(wc.value - bf) / max(abs(bf), 1e-9)
            dmax = max(dmax, d)
            viol = check_plan(inst, wc.plan)
            ok &= _report(f"{inst.name} {z.x}{z.chi}", d <= 1e-6 and not viol,
                          f"npccg={wc.value:.8f} oracle={bf:.8f}")
    print(f"max relative deviation {dmax:.3e}")
    return ok


def _verify_coplan(insts, args) -> bool:
    ok = True
    for inst in insts:
        table = worst_case_table(inst)
        bf = brute_force_coplan(inst, table)
        sol = solve_coplan(inst, AlgorithmConfig())
        cert = next((r.worst for r in table if r.decision == sol.decision), math.nan)
        same = sol.status == bf.status and sol.src == bf.src
        if sol.status == "optimal":
            same &= abs(sol.certified_ratio - cert) <= 1e-6
        ok &= _report(inst.name, same, f"status={sol.status}/{bf.status} src={sol.src_dollars}/"
                      f"{None if bf.src is None else float(bf.src)}")
    return ok


def _verify_lemma1(insts, args) -> bool:
    rng = np.random.default_rng(args.seed)
    ok = True
    cases = [(insts[i % len(insts)]) for i in range(args.count)] if args.instance else insts
    for inst in cases:
        cands = first_stage_candidates(inst)
        z = cands[int(rng.integers(len(cands)))]
        C, d = relaxed_ddu_matrix(inst, z.x, z.chi)
        V = polytope_vertices(C, d)
        nv = len(inst.vulnerable)
        frac = int(np.sum(np.abs(V[:, :nv] - np.round(V[:, :nv])) > 1e-9))
        ok &= _report(f"{inst.name} {z.x}{z.chi}", frac == 0 and len(V) > 0,
                      f"{len(V)} vertices, {frac} fractional u entries")
    return ok


def _verify_enhancements(insts, args) -> bool:
    ok = True
    for inst in insts:
        a = solve_coplan(inst, AlgorithmConfig.with_enhancements("none"))
        b = solve_coplan(inst, AlgorithmConfig.with_enhancements("all"))
        ok &= _report(inst.name, a.status == b.status and a.src == b.src,
                      f"src none={a.src_dollars} all={b.src_dollars} outer {a.outer_iterations}/"
                      f"{b.outer_iterations} inner {a.inner_iterations_total}/{b.inner_iterations_total}")
    return ok


def cmd_verify(args) -> int:
    print(f"# suite={args.suite} seed={args.seed}")
    try:
        insts = _suite(args)
        fn = {"worst-case": _verify_worst_case, "coplan": _verify_coplan, "lemma1": _verify_lemma1,
              "enhancements": _verify_enhancements}[args.suite]
        t0 = time.perf_counter()
        ok = fn(insts, args)
    except EnumerationCapError as exc:
        print(f"enumeration cap exceeded: {exc} (cardinality {exc.size})", file=sys.stderr)
        return EXIT_LIMIT
    except InstanceError as exc:
        print(f"invalid instance: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(f"# {'all passed' if ok else 'FAILURES'} in {time.perf_counter() - t0:.1f}s")
    return EXIT_OK if ok else EXIT_FAIL


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "solve":
        return cmd_solve(args)
    return cmd_verify(args)


if __name__ == "__main__":
    sys.exit(main())
