"""``byzlink`` command line: check, reduce, simulate, verify, tend.

Exit codes: 0 success / condition satisfied, 1 condition violated or a
verification check failed, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Any

from . import __version__
from .conditions import SizeCapError, check_condition_p, check_condition_s
from .graph import DiGraph, GraphError
from .matrix import (TraceCorruptionError, build_transition_matrix, delta, dominates_connectivity,
                     q_blocks, reconstruction_residual, reduced_graph_for, row_bound_violations,
                     spread_bound_check)
from .protocol import (ConditionViolated, ConfigError, ExecutionTrace, SimulationConfig,
                       audit_budget, audit_validity, compute_t_end, graph_beta, run)
from .reduction import connectivity_matrix, count_r, count_reduced, enumerate_reduced_graphs, fault_sets

log = logging.getLogger("byzlink")

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


class UsageError(Exception):
    pass


# -- output helpers ------------------------------------------------------


def _finite(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def canonical_json(obj, indent: int | None = 2) -> str:
    """Sorted keys, shortest round-trip floats, non-finite floats as null."""
    return json.dumps(_finite(obj), sort_keys=True, indent=indent, allow_nan=False)


def _sha256(obj) -> str:
    return hashlib.sha256(canonical_json(obj, indent=None).encode()).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    subcommand: str
    config_hash: str
    version: str = __version__
    seed: int | None = None
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    started: str = field(default_factory=_now)
    finished: str | None = None

    def finish(self) -> dict:
        self.finished = _now()
        return asdict(self)

    def stable(self) -> dict:
        """Manifest without timestamps, safe to embed in byte-stable payloads."""
        d = asdict(self)
        d.pop("started")
        d.pop("finished")
        return d


def _emit(payload: dict, out: str | None) -> None:
    text = canonical_json(payload) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("BYZLINK_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise UsageError(f"BYZLINK_THREADS={env!r} is not an integer") from exc
    return 1


def _parse_fault_set(text: str | None) -> frozenset[tuple[int, int]]:
    if not text:
        return frozenset()
    links = []
    for part in text.split(","):
        try:
            j, i = part.strip().split("-")
            links.append((int(j), int(i)))
        except ValueError as exc:
            raise UsageError(f"bad link {part!r}; expected 'j-i'") from exc
    return frozenset(links)


# -- subcommands ---------------------------------------------------------


def cmd_check(args) -> int:
    g = DiGraph.load(args.graph)
    threads = _threads(args)
    manifest = RunManifest("check", _sha256({"graph": g.to_dict(), "f": args.f,
                                             "condition": args.condition}),
                           inputs={"graph": args.graph})
    if args.witness:
        manifest.outputs["witness"] = args.witness
    result: dict[str, Any] = {"f": args.f, "n": g.n}
    witness = None
    if args.condition in ("p", "both"):
        wp = check_condition_p(g, args.f, max_nodes=args.max_nodes_p, threads=threads)
        result["condition_p"] = wp is None
        witness = witness or wp
    if args.condition in ("s", "both"):
        ws = check_condition_s(g, args.f, max_nodes=args.max_nodes_s, threads=threads)
        result["condition_s"] = ws is None
        if ws is not None:
            result["s_sources"] = len(ws.sources)
        # for "both" the S witness is more informative when P also failed
        witness = ws or witness
    if witness is not None:
        result["witness"] = witness.to_dict()
        if args.witness:
            _emit({"witness": witness.to_dict(), "manifest": manifest.stable()}, args.witness)
    result["manifest"] = manifest.finish()
    _emit(result, args.out)
    return EXIT_FAIL if witness is not None else EXIT_OK


def cmd_reduce(args) -> int:
    g = DiGraph.load(args.graph)
    F = _parse_fault_set(args.fault_set) if args.fault_set is not None else None
    if F is not None:
        if len(F) > args.f or not F <= g.edges:
            raise UsageError("fault set must be links of the graph, at most f of them")
        families = [F]
    else:
        families = list(fault_sets(g, args.f))
    if args.count_only:
        total = count_reduced(g, F, args.f) if F is not None else count_r(g, args.f)
        _emit({"count": total, "f": args.f,
               "fault_set": None if F is None else [list(e) for e in sorted(F)]}, args.out)
        return EXIT_OK
    fh = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for fs in families:
            for rg in enumerate_reduced_graphs(g, fs, args.f):
                rec = {"fault_set": [list(e) for e in sorted(fs)],
                       "removed": {str(i): sorted(r) for i, r in enumerate(rg.removed) if r},
                       "edges": [list(e) for e in sorted(rg.edges)]}
                fh.write(canonical_json(rec, indent=None) + "\n")
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    cfg = SimulationConfig.from_dict(raw, base_dir=os.path.dirname(os.path.abspath(args.config)))
    manifest = RunManifest("simulate", cfg.digest(), seed=cfg.adversary.seed,
                           inputs={"config": args.config}, outputs={"trace": args.out})
    trace = run(cfg, check_condition=False)
    trace.meta["manifest"] = manifest.stable()
    trace.to_jsonl(args.out)
    validity = audit_validity(trace)
    summary = {"iterations": trace.iterations, "final_spread": trace.spread(trace.iterations),
               "converged": trace.meta["converged"], "validity_ok": not validity,
               "validity_violations": validity, "budget_ok": not audit_budget(trace),
               "manifest": manifest.finish()}
    _emit(summary, args.summary)
    return EXIT_OK


def _bounds_from_trace(trace: ExecutionTrace, args) -> tuple[float, float]:
    cfg = trace.meta.get("config", {})
    v0 = trace.rounds[0].states
    U = args.U if args.U is not None else cfg.get("U", max(v0))
    mu = args.mu if args.mu is not None else cfg.get("mu", min(v0))
    return float(U), float(mu)


def cmd_verify(args) -> int:
    try:
        trace = ExecutionTrace.from_jsonl(args.trace)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise UsageError(f"cannot read trace {args.trace}: {exc}") from exc
    g = DiGraph.load(args.graph)
    if g.n != trace.n:
        raise UsageError(f"graph has {g.n} nodes, trace has {trace.n}")
    if g.edges != trace.graph.edges:
        raise UsageError("graph edges differ from the graph recorded in the trace")
    if args.f != trace.f:
        raise UsageError(f"--f {args.f} differs from trace f = {trace.f}")
    beta = float(graph_beta(g))
    manifest = RunManifest("verify", _sha256({"trace": trace.meta.get("config_hash"), "f": args.f,
                                              "spread": args.spread_bound, "q": args.q_blocks}),
                           seed=trace.meta.get("seed"),
                           inputs={"trace": args.trace, "graph": args.graph})
    iterations, matrices = [], []
    ok = True
    for t in range(1, trace.iterations + 1):
        try:
            tm = build_transition_matrix(trace, t)
        except (TraceCorruptionError, AssertionError) as exc:
            iterations.append({"t": t, "error": str(exc)})
            ok = False
            continue
        matrices.append(tm)
        res = reconstruction_residual(trace, tm)
        viol = row_bound_violations(tm, g, args.f, beta)
        H = connectivity_matrix(reduced_graph_for(tm, g, trace))
        entry = {"t": t, "residual": res, "residual_ok": res < 1e-9,
                 "beta_bound_ok": not viol, "dominates_H": dominates_connectivity(tm, H, beta),
                 "delta": delta(tm.M),
                 "cases": "".join({"I": "1", "II": "2", "III": "3"}[r.case] for r in tm.rows)}
        if viol:
            entry["beta_violations"] = [list(v) for v in viol]
        ok = ok and entry["residual_ok"] and entry["beta_bound_ok"] and entry["dominates_H"]
        iterations.append(entry)
    report: dict[str, Any] = {"iterations": iterations, "beta": beta, "n": g.n, "f": args.f,
                              "validity_ok": not audit_validity(trace),
                              "budget_ok": not audit_budget(trace)}
    ok = ok and report["validity_ok"] and report["budget_ok"]
    if args.spread_bound and len(matrices) == trace.iterations:
        U, mu = _bounds_from_trace(trace, args)
        sb = spread_bound_check(trace, trace.iterations, U, mu, matrices=matrices)
        report["spread_bound"] = {"ok": sb.ok, "checked": sb.checked,
                                  "max_product_error": sb.max_product_error,
                                  "violations": [list(v) for v in sb.violations[:20]]}
        ok = ok and sb.ok
    if args.q_blocks:
        usable = len(matrices) - len(matrices) % args.q_blocks
        blocks = q_blocks([tm.M for tm in matrices[:usable]], args.q_blocks, beta) if usable else []
        # the contraction bound is only promised once blocks span r*n iterations
        report["q_blocks"] = {"block": args.q_blocks, "count": len(blocks),
                              "covers_rn": args.q_blocks >= count_r(g, args.f) * g.n,
                              "ignored_tail": len(matrices) - usable,
                              "all_ok": all(b.ok for b in blocks),
                              "lam": [b.lam for b in blocks], "bound": 1.0 - beta ** args.q_blocks}
        ok = ok and report["q_blocks"]["all_ok"]
    report["ok"] = ok
    report["manifest"] = manifest.finish()
    _emit(report, args.out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_tend(args) -> int:
    g = DiGraph.load(args.graph)
    manifest = RunManifest("tend", _sha256({"graph": g.to_dict(), "f": args.f, "epsilon": args.epsilon,
                                            "U": args.U, "mu": args.mu}),
                           inputs={"graph": args.graph})
    try:
        te = compute_t_end(g, args.f, args.epsilon, args.U, args.mu)
    except ConditionViolated as exc:
        _emit({"error": str(exc), "condition_s": False, "manifest": manifest.finish()}, args.out)
        return EXIT_FAIL
    d = te.to_dict(max_digits=10_000)
    d["t_end_exact_available"] = te.t_end is not None
    d["manifest"] = manifest.finish()
    _emit(d, args.out)
    return EXIT_OK


# -- parser ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="byzlink", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes for condition checks (default: $BYZLINK_THREADS or 1)")
    # accepted after the subcommand too; SUPPRESS keeps a top-level value
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", parents=[common], help="decide Condition P and/or S")
    c.add_argument("--graph", required=True)
    c.add_argument("--f", type=int, required=True)
    c.add_argument("--condition", choices=("p", "s", "both"), default="both")
    c.add_argument("--witness", help="write the violation witness here")
    c.add_argument("--max-nodes-p", type=int, default=12)
    c.add_argument("--max-nodes-s", type=int, default=8)
    c.add_argument("--out")
    c.set_defaults(func=cmd_check)

    r = sub.add_parser("reduce", parents=[common], help="count or list link-reduced graphs")
    r.add_argument("--graph", required=True)
    r.add_argument("--f", type=int, required=True)
    r.add_argument("--fault-set", help='links as "j-i,j-i"; all fault sets when omitted')
    r.add_argument("--count-only", action="store_true")
    r.add_argument("--out")
    r.set_defaults(func=cmd_reduce)

    s = sub.add_parser("simulate", parents=[common], help="run the algorithm and write a JSONL trace")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="trace path")
    s.add_argument("--summary", help="write the summary here instead of stdout")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", parents=[common], help="reconstruct transition matrices from a trace")
    v.add_argument("--trace", required=True)
    v.add_argument("--graph", required=True)
    v.add_argument("--f", type=int, required=True)
    v.add_argument("--spread-bound", action="store_true")
    v.add_argument("--q-blocks", type=int, metavar="RN")
    v.add_argument("--U", type=float)
    v.add_argument("--mu", type=float)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    t = sub.add_parser("tend", parents=[common], help="report the worst-case termination iteration")
    t.add_argument("--graph", required=True)
    t.add_argument("--f", type=int, required=True)
    t.add_argument("--epsilon", type=float, default=1e-3)
    t.add_argument("--U", type=float, required=True)
    t.add_argument("--mu", type=float, required=True)
    t.add_argument("--out")
    t.set_defaults(func=cmd_tend)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "f", 0) is not None and getattr(args, "f", 0) < 0:
        print("error: f must be non-negative", file=sys.stderr)
        return EXIT_ERROR
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except (UsageError, GraphError, ConfigError, SizeCapError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
