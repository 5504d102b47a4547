"""IC* causal discovery with a Huber-robust conditional-independence test.

The graph passes through three phases:

1. :func:`skeleton` removes every pair that some conditioning set separates
   and records that set;
2. :func:`orient_colliders` puts dashed arrowheads into ``c`` on ``a - c - b``
   whenever ``c`` is absent from the separating set of ``a`` and ``b``;
3. :func:`apply_rules` closes the graph under R1 (propagate a head through a
   non-collider, marking the new link) and R2 (orient along marked paths).

Edge endpoints carry one of three marks: none, a dashed head, or a solid
head. Marked links are solid single-headed edges flagged as genuine causation.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import CausalPanelError, SampleSizeError, UndecidableError

HUBER_C = 1.345
IRLS_MAX_ITER = 50
IRLS_TOL = 1e-8
DEFAULT_MAX_COND = 2
DEFAULT_ALPHA = 0.05

EDGE_KINDS = (
    "undirected",
    "dashed_into_b",
    "dashed_into_a",
    "dashed_both",
    "directed_a_to_b",
    "marked_a_to_b",
    "directed_b_to_a",
    "marked_b_to_a",
)

DASHED = "dashed"
SOLID = "solid"


@dataclass(frozen=True)
class CiResult:
    independent: bool
    p_value: float
    conditioning_set: frozenset = frozenset()
    warning: str | None = None


# ---------------------------------------------------------------------------
# robust conditional independence


def huber_irls(y, X, c: float = HUBER_C, max_iter: int = IRLS_MAX_ITER, tol: float = IRLS_TOL):
    """Huber M-regression by IRLS with a MAD scale re-estimated each step.

    Returns ``(beta, converged)``.
    """
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    for _ in range(max_iter):
        r = y - X @ beta
        s = np.median(np.abs(r - np.median(r))) / 0.6744897501960817
        if s <= 0:
            s = np.mean(np.abs(r)) * math.sqrt(math.pi / 2)
        if s <= 0:
            return beta, True
        u = np.abs(r) / s
        w = np.where(u <= c, 1.0, c / np.maximum(u, 1e-300))
        sw = np.sqrt(w)
        new = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)[0]
        if np.max(np.abs(new - beta)) <= tol * (1.0 + np.max(np.abs(beta))):
            return new, True
        beta = new
    return beta, False


def _robust_residuals(v, Z):
    X = np.column_stack([np.ones(v.size)] + ([Z] if Z.size else []))
    beta, ok = huber_irls(v, X)
    if not ok:
        beta = np.linalg.lstsq(X, v, rcond=None)[0]
    return v - X @ beta, ok


def robust_ci_test(a, b, cond: Sequence = (), alpha: float = DEFAULT_ALPHA,
                   names: frozenset = frozenset()) -> CiResult:
    """Test ``a`` independent of ``b`` given ``cond`` via robust partial correlation.

    ``a`` and ``b`` are each regressed on ``cond`` (plus intercept) with Huber
    IRLS; the Pearson correlation of the two residual series is assessed with
    a Fisher z-test on ``n - |cond| - 3`` effective observations.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("a and b must be 1-d series of equal length")
    n = a.size
    k = len(cond)
    if n < k + 8:
        raise SampleSizeError(f"CI test with {k} conditioning variables needs n >= {k + 8}, got {n}")
    Z = np.column_stack([np.asarray(c, dtype=float) for c in cond]) if k else np.empty((n, 0))
    ra, ok_a = _robust_residuals(a, Z)
    rb, ok_b = _robust_residuals(b, Z)
    warning = None
    if not (ok_a and ok_b):
        warning = "IRLS did not converge; ordinary least squares residuals used"
    ra = ra - ra.mean()
    rb = rb - rb.mean()
    na, nb = float(ra @ ra), float(rb @ rb)
    floor = (np.finfo(float).eps * n) ** 2
    if na <= floor * max(1.0, float(a @ a)) or nb <= floor * max(1.0, float(b @ b)):
        raise UndecidableError("residual variance is zero; dependence undecidable")
    r = float(np.clip(ra @ rb / math.sqrt(na * nb), -1.0, 1.0))
    if abs(r) >= 1.0:
        p = 0.0
    else:
        z = math.atanh(r) * math.sqrt(n - k - 3)
        p = float(2.0 * ndtr(-abs(z)))
    return CiResult(p >= alpha, p, frozenset(names), warning)


class RobustCITest:
    """Memoised robust CI test over named rows of a (variables x samples) array."""

    def __init__(self, variables: Sequence[str], data, alpha: float = DEFAULT_ALPHA):
        self.variables = tuple(variables)
        self.data = np.asarray(data, dtype=float)
        self.alpha = alpha
        self._index = {v: i for i, v in enumerate(self.variables)}
        self._cache = {}

    def __call__(self, a: str, b: str, cond: Sequence[str]) -> CiResult:
        key = (frozenset((a, b)), frozenset(cond))
        if key not in self._cache:
            x, y = sorted((a, b), key=self._index.__getitem__)
            z = sorted(cond, key=self._index.__getitem__)
            self._cache[key] = robust_ci_test(
                self.data[self._index[x]], self.data[self._index[y]],
                [self.data[self._index[c]] for c in z], self.alpha, frozenset(cond),
            )
        return self._cache[key]


# ---------------------------------------------------------------------------
# marked graph


class MarkedGraph:
    """Mixed graph with per-endpoint marks; at most one edge per unordered pair."""

    def __init__(self, nodes: Sequence[str], edges=(), sepsets=None, warnings=()):
        self.nodes = tuple(nodes)
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("node names must be unique")
        self._order = {n: i for i, n in enumerate(self.nodes)}
        # canonical (u, v) with u before v -> [head_at_u, head_at_v, marked]
        self._edges = {}
        self.sepsets = {}
        self.warnings = list(warnings)
        for a, b, kind in edges:
            self.add_edge(a, b, kind)
        for pair, s in (sepsets or {}).items():
            self.sepsets[frozenset(pair)] = frozenset(s)

    # -- structure ----------------------------------------------------------
    def _key(self, a, b):
        if a == b:
            raise ValueError("self-loops are not allowed")
        return (a, b) if self._order[a] < self._order[b] else (b, a)

    def copy(self) -> "MarkedGraph":
        g = MarkedGraph(self.nodes, warnings=self.warnings)
        g._edges = {k: list(v) for k, v in self._edges.items()}
        g.sepsets = dict(self.sepsets)
        return g

    def add_edge(self, a, b, kind="undirected"):
        u, v = self._key(a, b)
        if (u, v) in self._edges:
            raise ValueError(f"edge {u}-{v} already present")
        if (u, v) != (a, b):
            kind = _flip_kind(kind)
        self._edges[(u, v)] = list(_kind_to_marks(kind))

    def remove_edge(self, a, b):
        del self._edges[self._key(a, b)]

    def adjacent(self, a, b) -> bool:
        return a != b and self._key(a, b) in self._edges

    def neighbors(self, a) -> list:
        out = [v if u == a else u for (u, v) in self._edges if a in (u, v)]
        return sorted(out, key=self._order.__getitem__)

    def n_edges(self) -> int:
        return len(self._edges)

    def head_at(self, a, b):
        """Mark at endpoint ``b`` of edge ``a - b``."""
        u, v = self._key(a, b)
        e = self._edges[(u, v)]
        return e[1] if b == v else e[0]

    def is_marked(self, a, b) -> bool:
        """True if the edge is a marked link pointing from ``a`` to ``b``."""
        if not self.adjacent(a, b):
            return False
        u, v = self._key(a, b)
        e = self._edges[(u, v)]
        return e[2] and self.head_at(a, b) == SOLID

    def kind(self, a, b) -> str:
        """Edge kind with ``a`` read as the first endpoint."""
        u, v = self._key(a, b)
        k = _marks_to_kind(*self._edges[(u, v)])
        return k if (u, v) == (a, b) else _flip_kind(k)

    def edges(self) -> list:
        """``(a, b, kind)`` triples in canonical node order."""
        keys = sorted(self._edges, key=lambda k: (self._order[k[0]], self._order[k[1]]))
        return [(u, v, _marks_to_kind(*self._edges[(u, v)])) for u, v in keys]

    def head_count(self) -> int:
        return sum((e[0] is not None) + (e[1] is not None) for e in self._edges.values())

    def sepset(self, a, b):
        return self.sepsets.get(frozenset((a, b)))

    # -- mark updates (never downgrade) ------------------------------------
    def _set_head(self, a, b, mark, marked=False) -> bool:
        u, v = self._key(a, b)
        e = self._edges[(u, v)]
        idx = 1 if b == v else 0
        changed = False
        if e[idx] is None or (e[idx] == DASHED and mark == SOLID):
            e[idx] = mark
            changed = True
        if marked and not e[2]:
            e[2] = True
            changed = True
        return changed

    def marked_path(self, src, dst, skip=None) -> bool:
        """Is there a directed path of marked links from src to dst (ignoring edge ``skip``)?"""
        skip_key = self._key(*skip) if skip else None
        seen = {src}
        queue = deque([src])
        while queue:
            x = queue.popleft()
            for y in self.neighbors(x):
                if y in seen or self._key(x, y) == skip_key or not self.is_marked(x, y):
                    continue
                if y == dst:
                    return True
                seen.add(y)
                queue.append(y)
        return False

    def has_marked_cycle(self) -> bool:
        for u, v, _ in self.edges():
            for a, b in ((u, v), (v, u)):
                if self.is_marked(a, b) and self.marked_path(b, a):
                    return True
        return False

    def warn(self, message):
        if message not in self.warnings:
            self.warnings.append(message)

    # -- comparison / serialisation ----------------------------------------
    def __eq__(self, other):
        if not isinstance(other, MarkedGraph):
            return NotImplemented
        return (self.nodes == other.nodes and self.edges() == other.edges()
                and self.sepsets == other.sepsets)

    __hash__ = None

    def __repr__(self):
        return f"MarkedGraph(nodes={list(self.nodes)}, edges={self.edges()})"

    def to_dict(self) -> dict:
        seps = []
        for pair, s in self.sepsets.items():
            a, b = sorted(pair, key=self._order.__getitem__)
            seps.append({"a": a, "b": b, "set": sorted(s, key=self._order.__getitem__)})
        seps.sort(key=lambda d: (self._order[d["a"]], self._order[d["b"]]))
        return {
            "nodes": list(self.nodes),
            "edges": [{"a": a, "b": b, "kind": k} for a, b, k in self.edges()],
            "sepsets": seps,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d) -> "MarkedGraph":
        return cls(
            d["nodes"],
            [(e["a"], e["b"], e["kind"]) for e in d["edges"]],
            {(s["a"], s["b"]): s["set"] for s in d["sepsets"]},
            d.get("warnings", ()),
        )


_KIND_MARKS = {
    "undirected": (None, None, False),
    "dashed_into_b": (None, DASHED, False),
    "dashed_into_a": (DASHED, None, False),
    "dashed_both": (DASHED, DASHED, False),
    "directed_a_to_b": (None, SOLID, False),
    "marked_a_to_b": (None, SOLID, True),
    "directed_b_to_a": (SOLID, None, False),
    "marked_b_to_a": (SOLID, None, True),
}
_MARKS_KIND = {v: k for k, v in _KIND_MARKS.items()}
_FLIP = {
    "undirected": "undirected",
    "dashed_into_b": "dashed_into_a",
    "dashed_into_a": "dashed_into_b",
    "dashed_both": "dashed_both",
    "directed_a_to_b": "directed_b_to_a",
    "directed_b_to_a": "directed_a_to_b",
    "marked_a_to_b": "marked_b_to_a",
    "marked_b_to_a": "marked_a_to_b",
}


def _kind_to_marks(kind):
    try:
        return _KIND_MARKS[kind]
    except KeyError:
        raise ValueError(f"unknown edge kind {kind!r}") from None


def _marks_to_kind(head_a, head_b, marked):
    return _MARKS_KIND[(head_a, head_b, bool(marked))]


def _flip_kind(kind):
    return _FLIP[kind]


# ---------------------------------------------------------------------------
# IC* phases

CiTest = Callable[[str, str, Sequence[str]], CiResult]


def skeleton(variables: Sequence[str], ci_test: CiTest, max_cond: int = DEFAULT_MAX_COND) -> MarkedGraph:
    """Undirected skeleton with separating sets.

    Conditioning sets are drawn from ``adj(a) | adj(b)`` minus ``{a, b}``, in
    increasing size then lexicographic (variable order) order. Adjacencies are
    frozen at the start of each size level, so the removed edge set does not
    depend on pair scan order.
    """
    g = MarkedGraph(variables)
    nodes = g.nodes
    for a, b in combinations(nodes, 2):
        g.add_edge(a, b)
    for size in range(max_cond + 1):
        snapshot = {v: set(g.neighbors(v)) for v in nodes}
        any_candidate = False
        for a, b in combinations(nodes, 2):
            if not g.adjacent(a, b):
                continue
            pool = sorted((snapshot[a] | snapshot[b]) - {a, b}, key=g._order.__getitem__)
            if len(pool) < size:
                continue
            any_candidate = True
            for cond in combinations(pool, size):
                try:
                    res = ci_test(a, b, cond)
                except CausalPanelError as exc:
                    g.warn(f"CI {a} vs {b} | {list(cond)}: {exc}; treated as dependent")
                    continue
                if res.warning:
                    g.warn(f"CI {a} vs {b} | {list(cond)}: {res.warning}")
                if res.independent:
                    g.remove_edge(a, b)
                    g.sepsets[frozenset((a, b))] = frozenset(cond)
                    break
        if not any_candidate:
            break
    return g


def orient_colliders(g: MarkedGraph) -> MarkedGraph:
    """Dashed arrowheads into ``c`` for unshielded triples with ``c`` outside the sepset.

    Expects a skeleton: edges may carry dashed heads but no solid ones.
    """
    if any(SOLID in e[:2] for e in g._edges.values()):
        raise ValueError("orient_colliders expects an unoriented skeleton (no solid arrowheads)")
    out = g.copy()
    for a, b in combinations(out.nodes, 2):
        if out.adjacent(a, b):
            continue
        common = [c for c in out.neighbors(a) if out.adjacent(c, b)]
        if not common:
            continue
        sep = out.sepset(a, b)
        if sep is None:
            raise ValueError(f"no separating set recorded for non-adjacent pair {a}, {b}")
        for c in common:
            if c in sep:
                continue
            for x in (a, b):
                out._set_head(x, c, DASHED)
                if out.head_at(c, x) is not None:
                    out.warn(f"conflicting collider orientations on {x}-{c}; kept both arrowheads")
    return out


def _r1(g: MarkedGraph) -> bool:
    changed = False
    for c in g.nodes:
        nbrs = g.neighbors(c)
        for a in nbrs:
            if g.head_at(a, c) is None:
                continue
            for b in nbrs:
                if b == a or g.adjacent(a, b) or g.head_at(b, c) is not None:
                    continue
                if g.is_marked(c, b):
                    continue
                if g.marked_path(b, c):
                    g.warn(f"R1 on {c}->{b} skipped: would close a marked cycle")
                    continue
                changed |= g._set_head(c, b, SOLID, marked=True)
    return changed


def _r2(g: MarkedGraph) -> bool:
    changed = False
    for u, v, _ in g.edges():
        for a, b in ((u, v), (v, u)):
            if g.head_at(a, b) == SOLID:
                continue
            if not g.marked_path(a, b, skip=(a, b)):
                continue
            if g.head_at(b, a) is not None:
                g.warn(f"R2 on {a}->{b} skipped: link already has a head at {a}")
                continue
            changed |= g._set_head(a, b, SOLID)
    return changed


def apply_rules(g: MarkedGraph) -> MarkedGraph:
    """Apply R1 and R2 until a full pass changes nothing."""
    out = g.copy()
    while True:
        changed = _r1(out)
        changed |= _r2(out)
        if not changed:
            return out


@dataclass(frozen=True)
class EdgeClassification:
    dependence_edges: tuple
    genuine_edges: tuple
    dependence_nodes: tuple
    genuine_nodes: tuple


def classify_edges(g: MarkedGraph) -> EdgeClassification:
    """Split edges into all remaining dependencies and marked (genuine) links."""
    dependence = tuple(g.edges())
    genuine = []
    for a, b, kind in dependence:
        if kind == "marked_a_to_b":
            genuine.append((a, b))
        elif kind == "marked_b_to_a":
            genuine.append((b, a))
    dep_nodes = {x for a, b, _ in dependence for x in (a, b)}
    gen_nodes = {x for e in genuine for x in e}
    order = g._order.__getitem__
    return EdgeClassification(
        dependence,
        tuple(genuine),
        tuple(sorted(dep_nodes, key=order)),
        tuple(sorted(gen_nodes, key=order)),
    )


def icstar(variables: Sequence[str], ci_test: CiTest, max_cond: int = DEFAULT_MAX_COND) -> MarkedGraph:
    return apply_rules(orient_colliders(skeleton(variables, ci_test, max_cond)))


def icstar_from_data(variables: Sequence[str], data, alpha: float = DEFAULT_ALPHA,
                     max_cond: int = DEFAULT_MAX_COND) -> MarkedGraph:
    return icstar(variables, RobustCITest(variables, data, alpha), max_cond)


def neighbours_of(g: MarkedGraph, node: str) -> tuple:
    return tuple(g.neighbors(node)) if node in g.nodes else ()


def genuine_neighbours_of(g: MarkedGraph, node: str) -> tuple:
    if node not in g.nodes:
        return ()
    return tuple(x for x in g.neighbors(node) if g.is_marked(x, node) or g.is_marked(node, x))
