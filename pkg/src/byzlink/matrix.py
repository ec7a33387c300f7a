"""Transition matrices reconstructed from traces, and ergodicity tools.

Every iteration of the algorithm can be written as ``v[t] = M[t] v[t-1]``
with ``M[t]`` row stochastic. The rows are built from what each node kept and
trimmed: values that arrived over faulty links are re-expressed as convex
combinations of correctly received trimmed values, so only fault-free links
carry weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import DiGraph
from .protocol import ExecutionTrace, graph_beta, trim
from .reduction import ReducedGraph

ROW_SUM_TOL = 1e-12
RECON_TOL = 1e-9


class TraceCorruptionError(ValueError):
    """The trace is inconsistent with trim-and-average semantics."""


@dataclass(frozen=True)
class RowInfo:
    case: str                       # "I", "II" or "III"
    faulty: frozenset[int]          # senders over faulty links into this node
    removed: frozenset[int]         # designated removed in-neighbours
    low_good: tuple[int, ...]       # correctly received trimmed-low senders
    high_good: tuple[int, ...]      # correctly received trimmed-high senders
    splits: tuple[tuple[int, float, float], ...] = ()   # (sender, low share, high share)


@dataclass(frozen=True)
class TransitionMatrix:
    t: int
    M: np.ndarray
    rows: tuple[RowInfo, ...]

    @property
    def n(self) -> int:
        return self.M.shape[0]


def _split_weights(w: float, m_low: float, m_high: float) -> tuple[float, float]:
    """``(S, L)`` with ``S + L = 1`` and ``w = S*m_low + L*m_high``."""
    span = m_high - m_low
    scale = max(1.0, abs(m_low), abs(m_high))
    if span <= 1e-15 * scale:
        # degenerate: both anchors coincide, put everything on the low side
        return 1.0, 0.0
    if w < m_low - 1e-12 * scale or w > m_high + 1e-12 * scale:
        raise TraceCorruptionError(f"kept value {w!r} outside [{m_low!r}, {m_high!r}]")
    hi = min(1.0, max(0.0, (w - m_low) / span))
    return 1.0 - hi, hi


def _build_row(g: DiGraph, f: int, i: int, prev: np.ndarray, received, faulty: frozenset[int],
               trim_own: bool = False) -> tuple[np.ndarray, RowInfo]:
    n = g.n
    tr = trim(i, prev[i], received, f, trim_own)
    kept = [s for s, _ in tr.kept]
    kept_vals = dict(tr.kept)
    a = 1.0 / len(kept)
    low_good = tuple(s for s, _ in tr.low if s == i or s not in faulty)
    high_good = tuple(s for s, _ in tr.high if s == i or s not in faulty)
    kept_faulty = [k for k in kept if k in faulty]
    row = np.zeros(n)

    if not low_good or not high_good:
        if kept_faulty:
            raise TraceCorruptionError(f"node {i}: faulty kept value with an all-faulty trimmed side")
        for j in kept:
            row[j] += a
        if f == 0:
            removed = frozenset()
        elif not low_good:
            removed = frozenset(s for s, _ in tr.high) - {i}
        else:
            removed = frozenset(s for s, _ in tr.low) - {i}
        return row, RowInfo("III", faulty, removed, low_good, high_good)

    m_low = math.fsum(prev[j] for j in low_good) / len(low_good)
    m_high = math.fsum(prev[j] for j in high_good) / len(high_good)
    low_share = high_share = 0.0
    splits = []

    if kept_faulty:
        case = "I"
        for j in kept:
            if j not in faulty:
                row[j] += a
        for k in kept_faulty:
            s_k, l_k = _split_weights(kept_vals[k], m_low, m_high)
            if max(s_k, l_k) < 0.5:
                raise AssertionError("split weights must have one side >= 1/2")
            splits.append((k, s_k, l_k))
            low_share += a * s_k
            high_share += a * l_k
    else:
        case = "II"
        # virtual neighbour: half of one fault-free kept term is re-expressed
        # through the trimmed sides. The own term is used when it lies between
        # the anchors, otherwise a kept received term (always in range).
        scale = max(1.0, abs(m_low), abs(m_high))
        own_fits = i in kept_vals and m_low - 1e-12 * scale <= prev[i] <= m_high + 1e-12 * scale
        if own_fits:
            pivots = [i]
        elif trim_own:
            pivots = kept
        else:
            pivots = [j for j in kept if j != i][:1]
        for j in kept:
            row[j] += a / 2 if j in pivots else a
        for p in pivots:
            s_z, l_z = _split_weights(prev[p], m_low, m_high)
            splits.append((p, s_z, l_z))
            low_share += a / 2 * s_z
            high_share += a / 2 * l_z

    for j in low_good:
        row[j] += low_share / len(low_good)
    for j in high_good:
        row[j] += high_share / len(high_good)

    # remove the weaker trimmed side; compare the worst required entry of each choice
    options = [frozenset(high_good) - {i}, frozenset(low_good) - {i}]
    in_nbrs = set(g.in_neighbors(i))

    def worst(removed):
        req = {i} | (in_nbrs - faulty - removed)
        return min(row[j] for j in req)

    removed = max(options, key=worst)
    return row, RowInfo(case, faulty, removed, low_good, high_good, tuple(splits))


def build_transition_matrix(trace: ExecutionTrace, t: int) -> TransitionMatrix:
    """Row-stochastic ``M[t]`` with ``M[t] v[t-1] = v[t]`` for iteration ``t >= 1``."""
    if not 1 <= t <= trace.iterations:
        raise IndexError(f"iteration {t} not in trace")
    g, f = trace.graph, trace.f
    prev = trace.states(t - 1)
    rows, infos = [], []
    for i in range(g.n):
        row, info = _build_row(g, f, i, prev, trace.received(t, i), trace.faulty_senders(t, i),
                               trace.trim_own)
        rows.append(row)
        infos.append(info)
    M = np.vstack(rows)
    sums = M.sum(axis=1)
    if np.any(np.abs(sums - 1.0) >= ROW_SUM_TOL) or np.any(M < 0):
        raise AssertionError(f"iteration {t}: reconstructed matrix is not row stochastic")
    return TransitionMatrix(t, M, tuple(infos))


def reconstruction_residual(trace: ExecutionTrace, tm: TransitionMatrix) -> float:
    return float(np.max(np.abs(tm.M @ trace.states(tm.t - 1) - trace.states(tm.t))))


def required_entries(g: DiGraph, tm: TransitionMatrix, i: int) -> set[int]:
    info = tm.rows[i]
    return {i} | (set(g.in_neighbors(i)) - info.faulty - info.removed)


def row_bound_violations(tm: TransitionMatrix, g: DiGraph, f: int,
                         beta: float | None = None) -> list[tuple[int, int, float]]:
    """``(row, column, value)`` for every required entry below ``beta``."""
    if beta is None:
        beta = float(graph_beta(g))
    out = []
    for i in range(g.n):
        if len(tm.rows[i].removed) > f:
            out.append((i, -1, float(len(tm.rows[i].removed))))
        for j in sorted(required_entries(g, tm, i)):
            if tm.M[i, j] < beta:
                out.append((i, j, float(tm.M[i, j])))
    return out


def verify_row_bound(tm: TransitionMatrix, g: DiGraph, f: int) -> bool:
    """Every required entry is at least ``alpha / 4n`` and ``|N_i^r| <= f``."""
    return not row_bound_violations(tm, g, f)


def reduced_graph_for(tm: TransitionMatrix, g: DiGraph, trace: ExecutionTrace) -> ReducedGraph:
    """Link-reduced graph built from the iteration's fault set and removed sets."""
    F = frozenset(trace.rounds[tm.t].faults)
    return ReducedGraph(g, F, tuple(info.removed for info in tm.rows))


def dominates_connectivity(tm: TransitionMatrix, H: np.ndarray, beta: float) -> bool:
    """``beta * H <= M`` entrywise."""
    return bool(np.all(beta * H <= tm.M + 0.0))


# -- ergodicity --------------------------------------------------------


@dataclass(frozen=True)
class ErgodicityReport:
    delta: float
    lam: float


def is_row_stochastic(A: np.ndarray, tol: float = ROW_SUM_TOL) -> bool:
    A = np.asarray(A, dtype=float)
    return (A.ndim == 2 and A.shape[0] == A.shape[1] and bool(np.all(A >= -tol))
            and bool(np.all(np.abs(A.sum(axis=1) - 1.0) < max(tol, 1e-12 * A.shape[1]))))


def delta(A: np.ndarray) -> float:
    A = np.asarray(A, dtype=float)
    return float(np.max(A.max(axis=0) - A.min(axis=0)))


def lam(A: np.ndarray) -> float:
    A = np.asarray(A, dtype=float)
    overlap = np.minimum(A[:, None, :], A[None, :, :]).sum(axis=2)
    return float(1.0 - overlap.min())


def ergodicity(A: np.ndarray) -> ErgodicityReport:
    if not is_row_stochastic(A, tol=1e-9):
        raise ValueError("matrix is not row stochastic")
    return ErgodicityReport(delta(A), lam(A))


def backward_product(ms: Sequence[np.ndarray]) -> np.ndarray:
    """``ms[-1] @ ... @ ms[0]``: the first matrix is applied first."""
    if not ms:
        raise ValueError("empty product")
    n = ms[0].shape[0]
    out = np.asarray(ms[0], dtype=float)
    for A in ms[1:]:
        if A.shape != (n, n):
            raise ValueError("dimension mismatch")
        out = np.asarray(A, dtype=float) @ out
    return out


@dataclass(frozen=True)
class QBlock:
    index: int
    Q: np.ndarray
    lam: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.lam <= self.bound + 1e-12


def q_blocks(ms: Sequence[np.ndarray], block: int, beta: float) -> list[QBlock]:
    """Backward products of consecutive ``block``-long runs, with ``lam <= 1 - beta**block``."""
    if block < 1 or len(ms) % block:
        raise ValueError(f"{len(ms)} matrices do not split into blocks of {block}")
    bound = 1.0 - beta ** block
    out = []
    for k in range(len(ms) // block):
        Q = backward_product(ms[k * block:(k + 1) * block])
        out.append(QBlock(k + 1, Q, lam(Q), bound))
    return out


def has_positive_column(H: np.ndarray, power: int) -> bool:
    """Whether ``H**power`` (boolean) has a column with no zero entry."""
    B = (np.asarray(H) != 0).astype(np.int64)
    P = np.eye(B.shape[0], dtype=np.int64)
    for _ in range(power):
        P = np.minimum(P @ B, 1)
    return bool(np.any(P.min(axis=0) > 0))


@dataclass
class SpreadReport:
    checked: int
    violations: list[tuple[int, int, int, float, float]]
    max_product_error: float

    @property
    def ok(self) -> bool:
        return not self.violations


def spread_bound_check(trace: ExecutionTrace, up_to: int, U: float, mu: float,
                       tol: float = RECON_TOL, matrices: Sequence[TransitionMatrix] | None = None
                       ) -> SpreadReport:
    """Pairwise spread against ``n * delta(M[t]...M[1]) * max(|U|, |mu|)``.

    Also tracks how far ``v[t]`` is from ``(M[t]...M[1]) v[0]``.
    """
    n = trace.n
    scale = max(abs(U), abs(mu))
    up_to = min(up_to, trace.iterations)
    P = np.eye(n)
    v0 = trace.states(0)
    violations = []
    worst = 0.0
    for t in range(1, up_to + 1):
        tm = matrices[t - 1] if matrices is not None else build_transition_matrix(trace, t)
        P = tm.M @ P
        v = trace.states(t)
        worst = max(worst, float(np.max(np.abs(P @ v0 - v))))
        bound = n * delta(P) * scale
        for j in range(n):
            for k in range(j + 1, n):
                gap = abs(v[j] - v[k])
                if gap > bound + tol:
                    violations.append((t, j, k, gap, bound))
    return SpreadReport(up_to, violations, worst)


