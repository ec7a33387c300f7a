"""Link-reduced graphs and their connectivity matrices."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import Iterable, Iterator

import numpy as np

from .graph import DiGraph, Edge


@dataclass(frozen=True)
class ReducedGraph:
    """``base`` minus the fault set, minus up to ``f`` more in-links per node.

    ``removed[i]`` holds the senders whose links into ``i`` were dropped on
    top of the fault set. Identity is the removal choice, not the edge set.
    """

    base: DiGraph
    fault_set: frozenset[Edge]
    removed: tuple[frozenset[int], ...]

    @property
    def edges(self) -> frozenset[Edge]:
        return frozenset(
            (j, i) for j, i in self.base.edges
            if (j, i) not in self.fault_set and j not in self.removed[i]
        )

    def graph(self) -> DiGraph:
        return DiGraph(self.base.n, self.edges, self.base.labels)

    def validate(self, f: int) -> None:
        if len(self.fault_set) > f or not self.fault_set <= self.base.edges:
            raise ValueError("fault set must be a subset of E of size <= f")
        for i, rem in enumerate(self.removed):
            if len(rem) > f:
                raise ValueError(f"node {i} drops {len(rem)} > f links")
            for j in rem:
                if (j, i) not in self.base.edges or (j, i) in self.fault_set:
                    raise ValueError(f"removed link {(j, i)} not in E - F")


def fault_sets(g: DiGraph, f: int) -> Iterator[frozenset[Edge]]:
    """All ``F`` subset of ``E`` with ``|F| <= f``, by size then lexicographically."""
    edges = g.sorted_edges()
    for k in range(min(f, len(edges)) + 1):
        for combo in itertools.combinations(edges, k):
            yield frozenset(combo)


def _check_fault_set(g: DiGraph, F: frozenset[Edge], f: int) -> None:
    if f < 0:
        raise ValueError("f must be non-negative")
    if len(F) > f:
        raise ValueError(f"|F| = {len(F)} exceeds f = {f}")
    if not F <= g.edges:
        raise ValueError("fault set contains links not in the graph")


def removal_options(g: DiGraph, F: frozenset[Edge], f: int) -> list[list[frozenset[int]]]:
    """Per node, every admissible set of extra removed senders, sorted."""
    options = []
    for i in range(g.n):
        surviving = [j for j in g.in_neighbors(i) if (j, i) not in F]
        opts = []
        for k in range(min(f, len(surviving)) + 1):
            opts.extend(frozenset(c) for c in itertools.combinations(surviving, k))
        options.append(opts)
    return options


def enumerate_reduced_graphs(g: DiGraph, F: Iterable[Edge], f: int) -> Iterator[ReducedGraph]:
    F = frozenset(F)
    _check_fault_set(g, F, f)
    for choice in itertools.product(*removal_options(g, F, f)):
        yield ReducedGraph(g, F, tuple(choice))


def count_reduced(g: DiGraph, F: Iterable[Edge], f: int) -> int:
    """``|R_F|`` by the product formula, without enumerating."""
    F = frozenset(F)
    _check_fault_set(g, F, f)
    total = 1
    for i in range(g.n):
        d = sum(1 for j in g.in_neighbors(i) if (j, i) not in F)
        total *= sum(comb(d, k) for k in range(min(f, d) + 1))
    return total


def count_r(g: DiGraph, f: int) -> int:
    """Total number of link-reduced graphs over every admissible fault set."""
    return sum(count_reduced(g, F, f) for F in fault_sets(g, f))


def connectivity_matrix(rg: ReducedGraph) -> np.ndarray:
    n = rg.base.n
    H = np.eye(n, dtype=np.int64)
    for j, i in rg.edges:
        H[i, j] = 1
    return H
