"""Link adversaries: which links misbehave in an iteration and what they deliver.

The adversary sees a read-only snapshot of the round (states and the values
about to be sent) and returns overrides for at most ``f`` links. Every link
it does not override delivers the sent value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Mapping

import numpy as np

from .graph import DiGraph, Edge

KINDS = ("none", "drop", "constant", "offset", "random", "split")


class _Dropped:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "DROPPED"

    def __reduce__(self):
        return (_Dropped, ())


DROPPED = _Dropped()


class AdversaryBudgetError(RuntimeError):
    """More than ``f`` links were tampered with in one iteration."""


@dataclass(frozen=True)
class RoundView:
    """Pre-iteration global state handed to the adversary."""

    t: int
    graph: DiGraph
    states: tuple[float, ...]

    def sent(self, link: Edge) -> float:
        return self.states[link[0]]


@dataclass(frozen=True)
class AdversaryConfig:
    """Adversary description, JSON-compatible.

    ``params`` by kind:

    * ``constant``: ``value``
    * ``offset``: ``delta``
    * ``random``: ``low``, ``high``
    * ``split``: ``L``, ``C``, ``R``, ``F`` and optionally ``m``, ``M``,
      ``m_minus``, ``M_plus``

    Faulty links come from ``params["links"]`` when given (static set);
    otherwise ``selection`` picks them every iteration: ``"random"`` draws
    ``f`` links from the seeded generator, ``"cycle"`` walks the sorted edge
    list. ``split`` always uses ``F``.
    """

    kind: str = "none"
    f: int = 0
    params: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown adversary kind {self.kind!r}")
        if self.f < 0:
            raise ValueError("f must be non-negative")
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))
        p = self.params
        need = {"constant": ("value",), "offset": ("delta",), "random": ("low", "high"),
                "split": ("L", "R", "F")}.get(self.kind, ())
        missing = [k for k in need if k not in p]
        if missing:
            raise ValueError(f"{self.kind} adversary needs params {missing}")
        if self.kind == "random" and not p["low"] <= p["high"]:
            raise ValueError("random adversary needs low <= high")
        if "links" in p and len(p["links"]) > self.f:
            raise ValueError("static fault set larger than f")
        if self.kind == "split":
            if len(p["F"]) > self.f:
                raise ValueError("split fault set larger than f")
            if not p["L"] or not p["R"]:
                raise ValueError("split adversary needs non-empty L and R")
            if "m" in p and "M" in p and not p["m"] < p["M"]:
                raise ValueError("split adversary needs m < M")
            if "m_minus" in p and "m" in p and not p["m_minus"] < p["m"]:
                raise ValueError("split adversary needs m_minus < m")
            if "M_plus" in p and "M" in p and not p["M_plus"] > p["M"]:
                raise ValueError("split adversary needs M_plus > M")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "f": self.f, "params": _plain(dict(self.params)), "seed": self.seed}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AdversaryConfig":
        return cls(kind=d.get("kind", "none"), f=int(d.get("f", 0)),
                   params=d.get("params", {}), seed=int(d.get("seed", 0)))


def _plain(obj):
    if isinstance(obj, Mapping):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = [_plain(v) for v in obj]
        return sorted(items) if isinstance(obj, (set, frozenset)) else items
    return obj


def split_adversary(witness, f: int | None = None, **extra) -> AdversaryConfig:
    """Split adversary built from a Condition P violation witness."""
    p = witness.partition
    params = {"L": sorted(p.L), "C": sorted(p.C), "R": sorted(p.R),
              "F": [list(e) for e in sorted(witness.fault_set)]}
    params.update(extra)
    return AdversaryConfig("split", witness.f if f is None else f, params)


def _rng(cfg: AdversaryConfig, t: int) -> np.random.Generator:
    # one stream per (seed, t): replay of any single iteration needs no history
    return np.random.default_rng([cfg.seed, t])


def _select(cfg: AdversaryConfig, t: int, g: DiGraph) -> list[Edge]:
    p = cfg.params
    if "links" in p:
        links = [tuple(e) for e in p["links"]]
        for e in links:
            if e not in g.edges:
                raise ValueError(f"fault link {e} not in graph")
        return links
    edges = g.sorted_edges()
    k = min(cfg.f, len(edges))
    if k == 0:
        return []
    if p.get("selection", "random") == "cycle":
        start = ((t - 1) * k) % len(edges)
        return [edges[(start + s) % len(edges)] for s in range(k)]
    idx = _rng(cfg, t).choice(len(edges), size=k, replace=False)
    return [edges[int(x)] for x in sorted(idx)]


def _split(cfg: AdversaryConfig, view: RoundView) -> dict[Edge, float]:
    p = cfg.params
    L, C, R = set(p["L"]), set(p.get("C", ())), set(p["R"])
    m = p.get("m", min(view.states[i] for i in L))
    M = p.get("M", max(view.states[j] for j in R))
    m_minus = p.get("m_minus", m - 1.0)
    M_plus = p.get("M_plus", M + 1.0)
    middle = (m + M) / 2.0
    out = {}
    for e in p["F"]:
        e = tuple(e)
        target = e[1]
        if target in L:
            out[e] = m_minus
        elif target in R:
            out[e] = M_plus
        elif target in C:
            out[e] = middle
        else:
            raise ValueError(f"split target {target} not in L, C or R")
    return out


def corrupt(cfg: AdversaryConfig, t: int, view: RoundView) -> dict[Edge, float | _Dropped]:
    """Overrides for iteration ``t``: link -> delivered value or ``DROPPED``."""
    if cfg.kind == "none":
        return {}
    if cfg.kind == "split":
        out = _split(cfg, view)
    else:
        links = _select(cfg, t, view.graph)
        p = cfg.params
        if cfg.kind == "drop":
            out = {e: DROPPED for e in links}
        elif cfg.kind == "constant":
            out = {e: float(p["value"]) for e in links}
        elif cfg.kind == "offset":
            out = {e: view.sent(e) + float(p["delta"]) for e in links}
        else:
            rng = np.random.default_rng([cfg.seed, t, 1])
            out = {e: float(rng.uniform(p["low"], p["high"])) for e in links}
    for e in out:
        if e not in view.graph.edges:
            raise ValueError(f"adversary targeted non-edge {e}")
    if len(out) > cfg.f:
        raise AdversaryBudgetError(f"iteration {t}: {len(out)} overrides exceed f = {cfg.f}")
    return out
