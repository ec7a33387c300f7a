"""Deciding Condition P and Condition S by exhaustive enumeration.

Both checkers are brute force. No polynomial-time procedure is claimed;
size caps keep accidental 3^n or r-sized runs from starting.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

import numpy as np

from .graph import DiGraph, Edge, count_sources_from_in_masks, decompose, source_components
from .reduction import ReducedGraph, count_r, fault_sets, removal_options

log = logging.getLogger(__name__)

DEFAULT_P_MAX_NODES = 12
DEFAULT_S_MAX_NODES = 8
DEFAULT_S_MAX_REDUCED = 10**7


class SizeCapError(ValueError):
    """The requested enumeration exceeds the configured size cap."""


@dataclass(frozen=True)
class Partition:
    L: frozenset[int]
    C: frozenset[int]
    R: frozenset[int]

    def __post_init__(self):
        if not self.L or not self.R:
            raise ValueError("L and R must be non-empty")
        if self.L & self.C or self.L & self.R or self.C & self.R:
            raise ValueError("L, C, R must be disjoint")

    def covers(self, n: int) -> bool:
        return self.L | self.C | self.R == frozenset(range(n))

    def to_dict(self) -> dict:
        return {"L": sorted(self.L), "C": sorted(self.C), "R": sorted(self.R)}


def implies_relation(g: DiGraph, A: Iterable[int], B: Iterable[int], f: int,
                     removed: Iterable[Edge] = ()) -> bool:
    """``A => B``: some node of ``B`` has more than ``f`` in-links from ``A``.

    Links in ``removed`` are ignored, i.e. the relation is evaluated in
    ``(V, E - removed)``.
    """
    A, B = frozenset(A), frozenset(B)
    if not A or not B:
        raise ValueError("A and B must be non-empty")
    if A & B:
        raise ValueError("A and B must be disjoint")
    removed = frozenset(removed)
    for i in B:
        count = sum(1 for j in g.in_neighbors(i) if j in A and (j, i) not in removed)
        if count > f:
            return True
    return False


@dataclass(frozen=True)
class PViolationWitness:
    """A fault set and partition for which neither ``C u R => L`` nor ``L u C => R``."""

    graph: DiGraph = field(repr=False)
    f: int
    partition: Partition
    fault_set: frozenset[Edge]

    def __post_init__(self):
        if len(self.fault_set) > self.f or not self.fault_set <= self.graph.edges:
            raise ValueError("witness fault set must be a subset of E with size <= f")
        if not self.partition.covers(self.graph.n):
            raise ValueError("witness partition does not cover V")
        if not self.reverify():
            raise ValueError("not a Condition P violation")

    def reverify(self) -> bool:
        p = self.partition
        return (not implies_relation(self.graph, p.C | p.R, p.L, self.f, self.fault_set)
                and not implies_relation(self.graph, p.L | p.C, p.R, self.f, self.fault_set))

    def to_dict(self) -> dict:
        return {"condition": "P", "partition": self.partition.to_dict(),
                "fault_set": [list(e) for e in sorted(self.fault_set)]}


@dataclass(frozen=True)
class SViolationWitness:
    """A link-reduced graph whose decomposition has zero or several sources."""

    reduced: ReducedGraph
    sources: tuple[frozenset[int], ...]

    def __post_init__(self):
        found = tuple(source_components(decompose(self.reduced.graph())))
        if len(found) == 1 or set(found) != set(self.sources):
            raise ValueError("reduced graph does not violate Condition S")

    @property
    def fault_set(self) -> frozenset[Edge]:
        return self.reduced.fault_set

    def to_dict(self) -> dict:
        return {"condition": "S",
                "fault_set": [list(e) for e in sorted(self.fault_set)],
                "removed": {str(i): sorted(r) for i, r in enumerate(self.reduced.removed) if r},
                "edges": [list(e) for e in sorted(self.reduced.edges)],
                "sources": [sorted(s) for s in self.sources]}


# -- Condition P -------------------------------------------------------


@lru_cache(maxsize=16)
def _partitions(n: int) -> tuple[np.ndarray, np.ndarray]:
    """(L, R) bitmasks for every labelling in {L, C, R}^n with L, R non-empty.

    Order is lexicographic over the labelling of nodes 0..n-1.
    """
    digits = np.array(list(itertools.product(range(3), repeat=n)), dtype=np.int64).reshape(-1, n)
    weights = 1 << np.arange(n, dtype=np.int64)
    Ls = ((digits == 0) * weights).sum(axis=1)
    Rs = ((digits == 2) * weights).sum(axis=1)
    keep = (Ls != 0) & (Rs != 0)
    return Ls[keep], Rs[keep]


def _heavy_table(in_masks: list[int], n: int, f: int) -> np.ndarray:
    """For each node subset S, the bitmask of nodes with > f in-links from S."""
    subsets = np.arange(1 << n, dtype=np.int64)
    table = np.zeros(1 << n, dtype=np.int64)
    for i, mask in enumerate(in_masks):
        inter = subsets & mask
        counts = np.zeros_like(inter)
        for b in range(n):
            counts += (inter >> b) & 1
        table |= (counts > f).astype(np.int64) << i
    return table


def _first_p_violation(g: DiGraph, f: int, Fs: list[frozenset[Edge]]) -> tuple[int, int, int] | None:
    n = g.n
    full = (1 << n) - 1
    Ls, Rs = _partitions(n)
    base = g.in_masks()
    for F in Fs:
        masks = list(base)
        for j, i in F:
            masks[i] &= ~(1 << j)
        heavy = _heavy_table(masks, n, f)
        cond_i = (heavy[full ^ Ls] & Ls) != 0
        cond_ii = (heavy[full ^ Rs] & Rs) != 0
        bad = ~(cond_i | cond_ii)
        if bad.any():
            k = int(np.argmax(bad))
            return Fs.index(F), int(Ls[k]), int(Rs[k])
    return None


def _chunks(items: list, parts: int) -> list[list]:
    size = -(-len(items) // parts)
    return [items[k:k + size] for k in range(0, len(items), size)]


def _p_worker(payload):
    gd, f, Fs = payload
    return _first_p_violation(DiGraph.from_dict(gd), f, [frozenset(map(tuple, F)) for F in Fs])


def check_condition_p(g: DiGraph, f: int, max_nodes: int | None = DEFAULT_P_MAX_NODES,
                      threads: int = 1) -> PViolationWitness | None:
    """Return ``None`` if Condition P holds, else the first violation found.

    "First" is by enumeration order: fault sets by size then lexicographic,
    partitions lexicographic in the L/C/R labelling.
    """
    if f < 0:
        raise ValueError("f must be non-negative")
    if max_nodes is not None and g.n > max_nodes:
        raise SizeCapError(f"n = {g.n} exceeds Condition P cap {max_nodes}")
    Fs = list(fault_sets(g, f))
    if threads > 1 and len(Fs) > 1:
        chunks = _chunks(Fs, threads)
        payloads = [(g.to_dict(), f, [sorted(F) for F in c]) for c in chunks]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_p_worker, payloads))
        hit = None
        for c, res in zip(chunks, results):
            if res is not None:
                hit = (Fs.index(c[res[0]]), res[1], res[2])
                break
    else:
        hit = _first_p_violation(g, f, Fs)
    if hit is None:
        return None
    k, Lm, Rm = hit
    L = frozenset(v for v in range(g.n) if Lm >> v & 1)
    R = frozenset(v for v in range(g.n) if Rm >> v & 1)
    C = frozenset(range(g.n)) - L - R
    return PViolationWitness(g, f, Partition(L, C, R), Fs[k])


def satisfies_condition_p(g: DiGraph, f: int, **kw) -> bool:
    return check_condition_p(g, f, **kw) is None


# -- Condition S -------------------------------------------------------


def _first_s_violation(g: DiGraph, f: int, Fs: list[frozenset[Edge]]):
    n = g.n
    base = g.in_masks()
    for idx, F in enumerate(Fs):
        masks = list(base)
        for j, i in F:
            masks[i] &= ~(1 << j)
        opts = removal_options(g, F, f)
        opt_masks = [[masks[i] & ~sum(1 << j for j in rem) for rem in opts[i]] for i in range(n)]
        for pos in itertools.product(*(range(len(o)) for o in opt_masks)):
            in_masks = [opt_masks[i][p] for i, p in enumerate(pos)]
            if count_sources_from_in_masks(n, in_masks) != 1:
                return idx, tuple(opts[i][p] for i, p in enumerate(pos))
    return None


def _s_worker(payload):
    gd, f, Fs = payload
    res = _first_s_violation(DiGraph.from_dict(gd), f, [frozenset(map(tuple, F)) for F in Fs])
    if res is None:
        return None
    return res[0], [sorted(r) for r in res[1]]


def check_condition_s(g: DiGraph, f: int, max_nodes: int | None = DEFAULT_S_MAX_NODES,
                      max_reduced: int | None = DEFAULT_S_MAX_REDUCED,
                      threads: int = 1) -> SViolationWitness | None:
    """Return ``None`` if every link-reduced graph has exactly one source component."""
    if f < 0:
        raise ValueError("f must be non-negative")
    if max_nodes is not None and g.n > max_nodes:
        raise SizeCapError(f"n = {g.n} exceeds Condition S cap {max_nodes}")
    if max_reduced is not None:
        r = count_r(g, f)
        if r > max_reduced:
            raise SizeCapError(f"r = {r} link-reduced graphs exceeds cap {max_reduced}")
    Fs = list(fault_sets(g, f))
    if threads > 1 and len(Fs) > 1:
        chunks = _chunks(Fs, threads)
        payloads = [(g.to_dict(), f, [sorted(F) for F in c]) for c in chunks]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_s_worker, payloads))
        hit = None
        for c, res in zip(chunks, results):
            if res is not None:
                hit = (Fs.index(c[res[0]]), tuple(frozenset(r) for r in res[1]))
                break
    else:
        hit = _first_s_violation(g, f, Fs)
    if hit is None:
        return None
    k, removed = hit
    rg = ReducedGraph(g, Fs[k], removed)
    return SViolationWitness(rg, tuple(source_components(decompose(rg.graph()))))


def satisfies_condition_s(g: DiGraph, f: int, **kw) -> bool:
    return check_condition_s(g, f, **kw) is None


def check_equivalence(g: DiGraph, f: int) -> bool:
    """Cross-check: both exhaustive deciders agree on ``g``."""
    return satisfies_condition_p(g, f) == satisfies_condition_s(g, f)


def check_min_indegree(g: DiGraph, f: int) -> bool:
    """Necessary filter for f > 0: every node has in-degree >= 2f + 1."""
    return all(g.in_degree(i) >= 2 * f + 1 for i in range(g.n))
