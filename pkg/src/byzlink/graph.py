"""Directed graphs, strongly connected components and source components."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

Edge = tuple[int, int]


class GraphError(ValueError):
    """Raised for malformed graphs or graph files."""


@dataclass(frozen=True)
class DiGraph:
    """Simple directed graph on nodes ``0..n-1``.

    An edge ``(j, i)`` is a channel from ``j`` to ``i``. Self-loops and
    graphs with fewer than two nodes are rejected.
    """

    n: int
    edges: frozenset[Edge]
    labels: tuple[str, ...] | None = None
    _in: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)
    _out: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __init__(self, n: int, edges: Iterable[Sequence[int]], labels: Sequence[str] | None = None):
        if not isinstance(n, int) or n < 2:
            raise GraphError(f"need at least 2 nodes, got n={n!r}")
        edge_list = [tuple(int(x) for x in e) for e in edges]
        es: set[Edge] = set()
        for e in edge_list:
            if len(e) != 2:
                raise GraphError(f"edge {e!r} is not a pair")
            j, i = e
            if not (0 <= j < n and 0 <= i < n):
                raise GraphError(f"edge {e!r} out of range for n={n}")
            if j == i:
                raise GraphError(f"self-loop {e!r} not allowed")
            if e in es:
                raise GraphError(f"duplicate edge {e!r}")
            es.add(e)  # type: ignore[arg-type]
        if labels is not None:
            labels = tuple(str(x) for x in labels)
            if len(labels) != n or len(set(labels)) != n:
                raise GraphError("labels must be n distinct strings")
        ins: list[list[int]] = [[] for _ in range(n)]
        outs: list[list[int]] = [[] for _ in range(n)]
        for j, i in es:
            ins[i].append(j)
            outs[j].append(i)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", frozenset(es))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_in", tuple(tuple(sorted(x)) for x in ins))
        object.__setattr__(self, "_out", tuple(tuple(sorted(x)) for x in outs))

    def in_neighbors(self, i: int) -> tuple[int, ...]:
        return self._in[i]

    def out_neighbors(self, i: int) -> tuple[int, ...]:
        return self._out[i]

    def in_links(self, i: int) -> tuple[Edge, ...]:
        return tuple((j, i) for j in self._in[i])

    def in_degree(self, i: int) -> int:
        return len(self._in[i])

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges)

    def in_masks(self) -> list[int]:
        """Bitmask of in-neighbours for every node."""
        return [sum(1 << j for j in self._in[i]) for i in range(self.n)]

    def label(self, i: int) -> str:
        return self.labels[i] if self.labels else str(i)

    def without(self, removed: Iterable[Edge]) -> "DiGraph":
        removed = set(removed)
        return DiGraph(self.n, (e for e in self.edges if e not in removed), self.labels)

    def relabel(self, perm: Sequence[int]) -> "DiGraph":
        """Graph with node ``k`` renamed to ``perm[k]``."""
        return DiGraph(self.n, ((perm[j], perm[i]) for j, i in self.edges))

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        d: dict = {"n": self.n, "edges": [list(e) for e in self.sorted_edges()]}
        if self.labels is not None:
            d["labels"] = list(self.labels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DiGraph":
        if not isinstance(d, dict) or "n" not in d or "edges" not in d:
            raise GraphError("graph JSON needs keys 'n' and 'edges'")
        return cls(d["n"], d["edges"], d.get("labels"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def load(cls, path) -> "DiGraph":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise GraphError(f"cannot read graph {path}: {exc}") from exc
        return cls.from_dict(data)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json() + "\n")

    def to_dot(self, name: str = "G") -> str:
        lines = [f"digraph {name} {{"]
        for k in range(self.n):
            lines.append(f'  {k} [label="{self.label(k)}"];')
        for j, i in self.sorted_edges():
            lines.append(f"  {j} -> {i};")
        lines.append("}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Decomposition:
    components: tuple[frozenset[int], ...]
    dag_edges: frozenset[tuple[int, int]]
    source_indices: tuple[int, ...]

    def component_of(self, node: int) -> int:
        for k, comp in enumerate(self.components):
            if node in comp:
                return k
        raise KeyError(node)


def _tarjan(n: int, succ: Sequence[Sequence[int]]) -> list[list[int]]:
    # iterative Tarjan; recursion depth would otherwise be O(n)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, pos = work.pop()
            if pos == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            nbrs = succ[v]
            if pos < len(nbrs):
                work.append((v, pos + 1))
                w = nbrs[pos]
                if index[w] == -1:
                    work.append((w, 0))
                elif on_stack[w]:
                    low[v] = min(low[v], index[w])
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(comp)
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
    return comps


def decompose(g: DiGraph) -> Decomposition:
    """Strongly connected components, their condensation and its sources.

    Components are ordered by smallest member so results are reproducible.
    """
    comps = sorted((frozenset(c) for c in _tarjan(g.n, [g.out_neighbors(v) for v in range(g.n)])),
                   key=min)
    where = {}
    for k, comp in enumerate(comps):
        for v in comp:
            where[v] = k
    dag = {(where[j], where[i]) for j, i in g.edges if where[j] != where[i]}
    has_in = {b for _, b in dag}
    sources = tuple(k for k in range(len(comps)) if k not in has_in)
    return Decomposition(tuple(comps), frozenset(dag), sources)


def source_components(d: Decomposition) -> list[frozenset[int]]:
    return [d.components[k] for k in d.source_indices]


def reachable_from(g: DiGraph, s: int) -> set[int]:
    seen = {s}
    queue = deque([s])
    while queue:
        v = queue.popleft()
        for w in g.out_neighbors(v):
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return seen


def reaches_all(g: DiGraph, s: int) -> bool:
    if not 0 <= s < g.n:
        raise GraphError(f"node {s} not in graph")
    return len(reachable_from(g, s)) == g.n


def is_acyclic(n: int, edges: Iterable[tuple[int, int]]) -> bool:
    """Kahn's algorithm."""
    indeg = [0] * n
    succ: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        succ[a].append(b)
        indeg[b] += 1
    queue = deque(v for v in range(n) if indeg[v] == 0)
    seen = 0
    while queue:
        v = queue.popleft()
        seen += 1
        for w in succ[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                queue.append(w)
    return seen == n


def count_sources_from_in_masks(n: int, in_masks: Sequence[int]) -> int:
    """Number of source components of the graph given by in-neighbour bitmasks.

    Hot path for the condition checkers: no object construction. A node is in
    a source component iff every node that reaches it is also reached by it.
    """
    full_co = []
    for i in range(n):
        co = 1 << i
        frontier = co
        while frontier:
            nxt = 0
            f = frontier
            while f:
                low = f & -f
                nxt |= in_masks[low.bit_length() - 1]
                f ^= low
            frontier = nxt & ~co
            co |= nxt
        full_co.append(co)
    sources = set()
    for i in range(n):
        co = full_co[i]
        bit = 1 << i
        ok = True
        m = co
        while m:
            low = m & -m
            if not full_co[low.bit_length() - 1] & bit and low != bit:
                # some j reaches i but i does not reach j
                ok = False
                break
            m ^= low
        if ok:
            sources.add(co)
    return len(sources)


def fig1_graph() -> DiGraph:
    """The five-node example network: clique A-D plus B, C, D -> E."""
    clique = [(j, i) for j in range(4) for i in range(4) if i != j]
    return DiGraph(5, clique + [(1, 4), (2, 4), (3, 4)], labels="ABCDE")
