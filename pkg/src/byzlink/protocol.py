"""Synchronous simulator for the trim-and-average consensus algorithm.

Each round every node sends its state on all out-links, the adversary
rewrites at most ``f`` links, receivers substitute their own state for
dropped messages, and every node averages its own state with the received values that survive
after discarding the ``f`` smallest and ``f`` largest of them.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, NamedTuple, Sequence

import mpmath
import numpy as np

from .adversary import DROPPED, AdversaryConfig, RoundView, corrupt
from .graph import DiGraph, Edge
from .reduction import count_r

log = logging.getLogger(__name__)

STOP_MODES = ("empirical", "fixed", "paper_t_end")
TRACE_FORMAT = "byzlink-trace/1"


class ConfigError(ValueError):
    """Invalid simulation configuration."""


class ConditionViolated(ValueError):
    """The graph does not satisfy Condition S but the operation requires it."""


class Trim(NamedTuple):
    low: tuple[tuple[int, float], ...]
    kept: tuple[tuple[int, float], ...]
    high: tuple[tuple[int, float], ...]


def trim(node: int, own: float, received: Sequence[tuple[int, Any]], f: int,
         trim_own: bool = False) -> Trim:
    """Sort values by (value, sender) and cut ``f`` off each end.

    By default only the received values are trimmed and the node's own value
    is always kept. With ``trim_own`` the own value joins the sorted multiset
    and may itself be cut. ``DROPPED`` entries count as the receiver's own
    state.
    """
    values = []
    for sender, value in received:
        values.append((float(own) if value is DROPPED else float(value), sender))
    if trim_own:
        values.append((float(own), node))
    if len(values) + (0 if trim_own else 1) <= 2 * f:
        raise ValueError(f"node {node}: {len(received) + 1} values cannot survive trimming 2f = {2 * f}")
    values.sort()
    pairs = [(s, v) for v, s in values]
    low, mid, high = pairs[:f], pairs[f:len(pairs) - f], pairs[len(pairs) - f:]
    if not trim_own:
        mid = sorted(mid + [(node, float(own))], key=lambda p: (p[1], p[0]))
    return Trim(tuple(low), tuple(mid), tuple(high))


def update_step(own: float, received: Sequence[tuple[int, Any]], f: int,
                node: int = -1, trim_own: bool = False) -> tuple[float, frozenset[int]]:
    """One node's update: trimmed mean with uniform weight ``1/(d + 1 - 2f)``.

    Returns the new state and the senders whose values were kept, ``node``
    included.
    """
    kept = trim(node, own, received, f, trim_own).kept
    vals = [v for _, v in kept]
    mean = math.fsum(vals) / len(vals)
    # the exact mean lies in [min, max]; clamp away the final rounding
    mean = min(max(mean, min(vals)), max(vals))
    return mean, frozenset(s for s, _ in kept)


# -- configuration -----------------------------------------------------


@dataclass(frozen=True)
class SimulationConfig:
    graph: DiGraph
    f: int
    inputs: tuple[float, ...]
    mu: float
    U: float
    epsilon: float = 1e-3
    stop_mode: str = "empirical"
    T: int | None = None
    max_iterations: int = 100_000
    adversary: AdversaryConfig = field(default_factory=AdversaryConfig)
    trim_own: bool = False

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(float(x) for x in self.inputs))
        g = self.graph
        if self.f < 0:
            raise ConfigError("f must be non-negative")
        if len(self.inputs) != g.n:
            raise ConfigError(f"need {g.n} inputs, got {len(self.inputs)}")
        if not self.mu <= self.U:
            raise ConfigError("mu must not exceed U")
        bad = [i for i, x in enumerate(self.inputs) if not self.mu <= x <= self.U]
        if bad:
            raise ConfigError(f"inputs of nodes {bad} outside [mu, U]")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.stop_mode not in STOP_MODES:
            raise ConfigError(f"unknown stop mode {self.stop_mode!r}")
        if self.stop_mode == "fixed" and (self.T is None or self.T < 0):
            raise ConfigError("fixed stop mode needs T >= 0")
        if self.adversary.f > self.f:
            raise ConfigError("adversary budget exceeds the f the algorithm trims for")
        short = [i for i in range(g.n) if g.in_degree(i) + 1 <= 2 * self.f]
        if short:
            raise ConfigError(f"nodes {short} have in-degree < 2f; trimming would empty them")

    def to_dict(self) -> dict:
        return {"graph": self.graph.to_dict(), "f": self.f, "inputs": list(self.inputs),
                "mu": self.mu, "U": self.U, "epsilon": self.epsilon,
                "stop_mode": self.stop_mode, "T": self.T, "max_iterations": self.max_iterations,
                "adversary": self.adversary.to_dict(), "trim_own": self.trim_own}

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "SimulationConfig":
        import os

        gspec = d.get("graph")
        if isinstance(gspec, str):
            path = gspec if base_dir is None or os.path.isabs(gspec) else os.path.join(base_dir, gspec)
            graph = DiGraph.load(path)
        elif isinstance(gspec, dict):
            graph = DiGraph.from_dict(gspec)
        else:
            raise ConfigError("config needs 'graph' (path or inline object)")
        f = int(d.get("f", 0))
        adv = dict(d.get("adversary", {"kind": "none"}))
        adv.setdefault("f", f)
        if "seed" in d and "seed" not in adv:
            adv["seed"] = d["seed"]
        inputs = d.get("inputs")
        if inputs is None:
            raise ConfigError("config needs 'inputs'")
        return cls(graph=graph, f=f, inputs=tuple(inputs),
                   mu=float(d.get("mu", min(inputs))), U=float(d.get("U", max(inputs))),
                   epsilon=float(d.get("epsilon", 1e-3)), stop_mode=d.get("stop_mode", "empirical"),
                   T=d.get("T"), max_iterations=int(d.get("max_iterations", 100_000)),
                   adversary=AdversaryConfig.from_dict(adv), trim_own=bool(d.get("trim_own", False)))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# -- traces ------------------------------------------------------------


@dataclass(frozen=True)
class Round:
    """State at the end of iteration ``t`` and what happened on the wire."""

    t: int
    states: tuple[float, ...]
    faults: tuple[Edge, ...] = ()
    tampered: tuple[tuple[Edge, float], ...] = ()
    dropped: tuple[Edge, ...] = ()
    kept: tuple[tuple[int, ...], ...] = ()

    def to_dict(self) -> dict:
        return {"t": self.t, "v": list(self.states),
                "faults": [list(e) for e in self.faults],
                "tampered": [[j, i, w] for (j, i), w in self.tampered],
                "dropped": [list(e) for e in self.dropped],
                "kept": {str(i): list(k) for i, k in enumerate(self.kept)}}

    @classmethod
    def from_dict(cls, d: dict, n: int) -> "Round":
        kept = d.get("kept", {})
        return cls(t=int(d["t"]), states=tuple(float(x) for x in d["v"]),
                   faults=tuple(tuple(e) for e in d.get("faults", [])),
                   tampered=tuple(((int(j), int(i)), float(w)) for j, i, w in d.get("tampered", [])),
                   dropped=tuple(tuple(e) for e in d.get("dropped", [])),
                   kept=tuple(tuple(kept.get(str(i), ())) for i in range(n)) if kept else ())


@dataclass
class ExecutionTrace:
    graph: DiGraph
    f: int
    rounds: list[Round]
    meta: dict = field(default_factory=dict)
    trim_own: bool = False

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def iterations(self) -> int:
        return self.rounds[-1].t

    def states(self, t: int) -> np.ndarray:
        return np.array(self.rounds[t].states)

    def spread(self, t: int) -> float:
        s = self.rounds[t].states
        return max(s) - min(s)

    def received(self, t: int, i: int) -> list[tuple[int, float]]:
        """Values node ``i`` used in iteration ``t`` after drop substitution."""
        prev = self.rounds[t - 1].states
        rnd = self.rounds[t]
        tampered = dict(rnd.tampered)
        dropped = set(rnd.dropped)
        out = []
        for j in self.graph.in_neighbors(i):
            e = (j, i)
            if e in dropped:
                out.append((j, prev[i]))
            elif e in tampered:
                out.append((j, tampered[e]))
            else:
                out.append((j, prev[j]))
        return out

    def faulty_senders(self, t: int, i: int) -> frozenset[int]:
        return frozenset(j for j, k in self.rounds[t].faults if k == i)

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            header = {"format": TRACE_FORMAT, "graph": self.graph.to_dict(), "f": self.f, "meta": self.meta,
                      "trim_own": self.trim_own}
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for rnd in self.rounds:
                fh.write(json.dumps(rnd.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "ExecutionTrace":
        with open(path, encoding="utf-8") as fh:
            lines = [json.loads(line) for line in fh if line.strip()]
        if not lines or lines[0].get("format") != TRACE_FORMAT:
            raise ValueError(f"{path} is not a {TRACE_FORMAT} file")
        head = lines[0]
        g = DiGraph.from_dict(head["graph"])
        rounds = [Round.from_dict(d, g.n) for d in lines[1:]]
        return cls(g, int(head["f"]), rounds, head.get("meta", {}), bool(head.get("trim_own", False)))


def audit_budget(trace: ExecutionTrace) -> list[int]:
    """Iterations whose audited fault set exceeds ``f``."""
    return [r.t for r in trace.rounds if len(r.faults) > trace.f]


def audit_validity(trace: ExecutionTrace, tol: float = 0.0) -> list[int]:
    """Iterations where the global min dropped or the global max rose."""
    bad = []
    for prev, cur in zip(trace.rounds, trace.rounds[1:]):
        if min(cur.states) < min(prev.states) - tol or max(cur.states) > max(prev.states) + tol:
            bad.append(cur.t)
    return bad


# -- simulation --------------------------------------------------------


def simulate_round(g: DiGraph, f: int, adversary: AdversaryConfig, t: int,
                   prev: Sequence[float], trim_own: bool = False) -> Round:
    view = RoundView(t, g, tuple(prev))
    overrides = corrupt(adversary, t, view)
    faults, tampered, dropped = [], [], []
    for e, w in sorted(overrides.items()):
        if w is DROPPED:
            faults.append(e)
            dropped.append(e)
        elif w != prev[e[0]]:
            faults.append(e)
            tampered.append((e, float(w)))
    tampered_map = dict(tampered)
    dropped_set = set(dropped)
    new, kept = [], []
    for i in range(g.n):
        received = []
        for j in g.in_neighbors(i):
            e = (j, i)
            if e in dropped_set:
                received.append((j, DROPPED))
            else:
                received.append((j, tampered_map.get(e, prev[j])))
        value, k = update_step(prev[i], received, f, node=i, trim_own=trim_own)
        new.append(value)
        kept.append(tuple(sorted(k)))
    return Round(t, tuple(new), tuple(faults), tuple(tampered), tuple(dropped), tuple(kept))


def run(cfg: SimulationConfig, check_condition: bool = True) -> ExecutionTrace:
    """Execute the algorithm until the configured stop rule fires."""
    g, f = cfg.graph, cfg.f
    if cfg.stop_mode == "paper_t_end":
        tend = compute_t_end(g, f, cfg.epsilon, cfg.U, cfg.mu, check=check_condition)
        if tend.t_end is None or tend.t_end > cfg.max_iterations:
            raise ConfigError(f"t_end ~ 10^{tend.log10_t_end:.1f} iterations exceeds "
                              f"max_iterations = {cfg.max_iterations}")
        horizon = tend.t_end
    elif cfg.stop_mode == "fixed":
        horizon = cfg.T
    else:
        horizon = cfg.max_iterations
    rounds = [Round(0, cfg.inputs)]
    converged = max(cfg.inputs) - min(cfg.inputs) < cfg.epsilon
    t = 0
    while t < horizon and not (cfg.stop_mode == "empirical" and converged):
        t += 1
        rnd = simulate_round(g, f, cfg.adversary, t, rounds[-1].states, cfg.trim_own)
        rounds.append(rnd)
        converged = max(rnd.states) - min(rnd.states) < cfg.epsilon
    meta = {"config": cfg.to_dict(), "config_hash": cfg.digest(), "stop_mode": cfg.stop_mode,
            "terminated_at": t, "converged": converged, "seed": cfg.adversary.seed}
    log.info("simulation stopped at t=%d, spread=%.3g", t, max(rounds[-1].states) - min(rounds[-1].states))
    return ExecutionTrace(g, f, rounds, meta, cfg.trim_own)


# -- termination bound -------------------------------------------------


@dataclass(frozen=True)
class TEnd:
    alpha: Fraction
    beta: Fraction
    r: int
    rn: int
    target: float
    log10_t_end: float
    k_end: int | None
    t_end: int | None

    @property
    def exact(self) -> bool:
        return self.t_end is not None

    def to_dict(self, max_digits: int = 10_000) -> dict:
        d = {"alpha": str(self.alpha), "beta": str(self.beta), "r": self.r, "rn": self.rn,
             "target": self.target, "log10_t_end": self.log10_t_end}
        if self.t_end is not None:
            d["t_end_digits"] = _digits(self.t_end)
            if d["t_end_digits"] <= max_digits:
                d["t_end"] = str(self.t_end)
        return d


def _digits(x: int) -> int:
    if x == 0:
        return 1
    # str(int) is capped for large ints; bit length gives a safe estimate
    est = int(x.bit_length() * math.log10(2)) + 1
    return est if 10 ** (est - 1) <= x else est - 1


def graph_alpha(g: DiGraph) -> Fraction:
    return Fraction(1, max(g.in_degree(i) for i in range(g.n)) + 1)


def graph_beta(g: DiGraph) -> Fraction:
    return graph_alpha(g) / (4 * g.n)


def _neg_log1m(x: mpmath.mpf) -> mpmath.mpf:
    """-ln(1 - x) by its power series; meant for small ``x``."""
    if x > mpmath.mpf("0.25"):
        return -mpmath.log1p(-x)
    total = mpmath.mpf(0)
    term = x
    m = 1
    eps = mpmath.eps
    while term / m > eps * total or m == 1:
        total += term / m
        term *= x
        m += 1
    return total


def blocks_needed(beta: Fraction, rn: int, target, max_exact_digits: int = 200_000
                  ) -> tuple[int | None, float]:
    """Smallest block count ``k`` with ``(1 - beta**rn)**k <= target``.

    Returns ``(k, log10 k)``; ``k`` is ``None`` when it has more than
    ``max_exact_digits`` digits. ``beta**rn`` is only ever handled through its
    logarithm until the working precision is large enough to hold it.
    """
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    if rn < 1:
        raise ValueError("rn must be positive")
    with mpmath.workdps(50):
        tgt = mpmath.mpf(target) if not isinstance(target, Fraction) else \
            mpmath.mpf(target.numerator) / target.denominator
        if tgt <= 0:
            raise ValueError("target must be positive")
        if tgt >= 1:
            return 0, float("-inf")
        if beta == 1:
            return 1, 0.0
        c = -mpmath.log(tgt)
        ln_x = rn * (mpmath.log(beta.numerator) - mpmath.log(beta.denominator))
        if ln_x > -50:
            x = mpmath.exp(ln_x)
            ln_series = mpmath.log(_neg_log1m(x)) - ln_x
        else:
            # -ln(1-x) = x(1 + x/2 + ...) and x < e^-50 makes the bracket 1 here
            ln_series = mpmath.mpf(0)
        ln_q = mpmath.log(c) - ln_x - ln_series
        log10_q = float(ln_q / mpmath.log(10))
    digits = max(1, int(math.floor(log10_q)) + 1) if log10_q > 0 else 1
    if digits > max_exact_digits:
        return None, log10_q
    with mpmath.workdps(digits + 40):
        tgt = mpmath.mpf(target) if not isinstance(target, Fraction) else \
            mpmath.mpf(target.numerator) / target.denominator
        x = (mpmath.mpf(beta.numerator) / beta.denominator) ** rn
        q = -mpmath.log(tgt) / _neg_log1m(x)
        k = int(mpmath.ceil(q))
        log10_k = float(mpmath.log10(k)) if k > 0 else float("-inf")
    return max(k, 0), log10_k


def compute_t_end(g: DiGraph, f: int, epsilon: float, U: float, mu: float, *,
                  r: int | None = None, check: bool = True,
                  max_exact_digits: int = 200_000) -> TEnd:
    """Iteration count after which the worst-case spread bound is below ``epsilon``.

    ``t_end = k * r * n`` where ``k`` is the smallest number of ``rn``-long
    blocks with ``(1 - beta**rn)**k <= epsilon / (n * max(|U|, |mu|))``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    scale = max(abs(U), abs(mu))
    if scale == 0:
        raise ValueError("max(|U|, |mu|) must be positive")
    if check:
        from .conditions import check_condition_s

        witness = check_condition_s(g, f)
        if witness is not None:
            raise ConditionViolated(f"graph violates Condition S: {witness.to_dict()}")
    alpha = graph_alpha(g)
    beta = alpha / (4 * g.n)
    if r is None:
        r = count_r(g, f)
    rn = r * g.n
    target = Fraction(epsilon) / (g.n * Fraction(scale))
    k, log10_k = blocks_needed(beta, rn, target, max_exact_digits)
    log10_t = log10_k + math.log10(rn) if k != 0 else float("-inf")
    return TEnd(alpha, beta, r, rn, float(target), log10_t,
                k, None if k is None else k * rn)
