"""Pairwise Granger-causality F-tests and the per-country causality matrix."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import f as f_dist

from .errors import CausalPanelError, CollinearityError, DegenerateSeriesError, SampleSizeError
from .panel import LABEL

ORIENTATIONS = ("row_effect", "row_cause")
DEFAULT_MAX_LAG = 2
DEFAULT_ALPHA = 0.05


@dataclass(frozen=True, eq=False)
class CausalityMatrix:
    """Square matrix of Granger p-values.

    With ``orientation="row_effect"`` (default) ``p[i, j]`` is the p-value for
    "variable j Granger-causes variable i"; ``"row_cause"`` stores the transpose.
    """

    variables: tuple
    p: np.ndarray
    max_lag: int
    alpha: float
    orientation: str = "row_effect"
    lags: np.ndarray | None = None
    warnings: tuple = ()

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        object.__setattr__(self, "variables", tuple(self.variables))
        if p.shape != (len(self.variables),) * 2:
            raise ValueError("p must be square over variables")
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"orientation must be one of {ORIENTATIONS}")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)
        if self.lags is not None:
            lags = np.array(self.lags, dtype=int)
            lags.setflags(write=False)
            object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "warnings", tuple(self.warnings))

    def pvalue(self, cause: str, effect: str) -> float:
        i, j = self.variables.index(cause), self.variables.index(effect)
        return float(self.p[j, i] if self.orientation == "row_effect" else self.p[i, j])

    def __eq__(self, other):
        if not isinstance(other, CausalityMatrix):
            return NotImplemented
        same_lags = (self.lags is None and other.lags is None) or (
            self.lags is not None and other.lags is not None and np.array_equal(self.lags, other.lags)
        )
        return (
            self.variables == other.variables
            and np.array_equal(self.p, other.p)
            and self.max_lag == other.max_lag
            and self.alpha == other.alpha
            and self.orientation == other.orientation
            and same_lags
            and self.warnings == other.warnings
        )

    __hash__ = None


@dataclass(frozen=True)
class GrangerEdge:
    cause: str
    effect: str
    p_value: float
    lag: int


def _lagged(v, lag, n_eff):
    start = len(v) - n_eff
    return np.column_stack([v[start - k: len(v) - k] for k in range(1, lag + 1)])


def _ssr(y, X):
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise CollinearityError("lag design matrix is rank deficient")
    r = y - X @ beta
    return float(r @ r)


def granger_f(x, y, lag: int) -> tuple:
    """F statistic and p-value for "x Granger-causes y" at exactly ``lag`` lags."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n_eff = y.size - lag
    target = y[lag:]
    ones = np.ones((n_eff, 1))
    own = _lagged(y, lag, n_eff)
    restricted = np.hstack([ones, own])
    full = np.hstack([restricted, _lagged(x, lag, n_eff)])
    df_den = n_eff - 2 * lag - 1
    if df_den <= 0:
        raise SampleSizeError("not enough observations for the unrestricted model")
    ssr_r = _ssr(target, restricted)
    ssr_u = _ssr(target, full)
    tiny = np.finfo(float).eps * max(1.0, float(target @ target))
    if ssr_r <= tiny:
        # y is already perfectly predicted by its own past
        return 0.0, 1.0
    if ssr_u <= tiny * np.finfo(float).eps:
        return math.inf, 0.0
    fstat = max((ssr_r - ssr_u) / lag / (ssr_u / df_den), 0.0)
    return fstat, float(f_dist.sf(fstat, lag, df_den))


def granger_pair(x, y, max_lag: int = DEFAULT_MAX_LAG) -> tuple:
    """Minimum p-value over lags 1..max_lag for "x Granger-causes y".

    Returns ``(p_value, best_lag)``; ties resolve to the smaller lag. Lag
    orders with a rank-deficient design are skipped.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d series of equal length")
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    if x.size < 5 * max_lag + 5:
        raise SampleSizeError(f"need n >= {5 * max_lag + 5} for max_lag={max_lag}, got {x.size}")
    for name, v in (("x", x), ("y", y)):
        if np.ptp(v) == 0:
            raise DegenerateSeriesError(f"series {name} is constant")
    best_p, best_lag = 2.0, None
    for lag in range(1, max_lag + 1):
        try:
            _, p = granger_f(x, y, lag)
        except CollinearityError:
            continue  # that lag order is not identifiable; try the others
        if p < best_p:
            best_p, best_lag = p, lag
    if best_lag is None:
        raise CollinearityError(f"lag design is rank deficient for every lag 1..{max_lag}")
    return min(max(best_p, 0.0), 1.0), best_lag


def causality_matrix(variables: Sequence[str], data, max_lag: int = DEFAULT_MAX_LAG,
                     alpha: float = DEFAULT_ALPHA, orientation: str = "row_effect") -> CausalityMatrix:
    """Granger p-values for every ordered pair of rows of ``data`` (variables x time).

    Pairs that cannot be tested (constant or collinear series) get p = 1 and
    a warning.
    """
    data = np.asarray(data, dtype=float)
    variables = tuple(variables)
    v = len(variables)
    if data.shape[0] != v:
        raise ValueError("data must have one row per variable")
    p = np.ones((v, v))
    lags = np.zeros((v, v), dtype=int)
    warnings = []
    for e in range(v):
        for c in range(v):
            if e == c:
                continue
            try:
                pv, lag = granger_pair(data[c], data[e], max_lag)
            except CausalPanelError as exc:
                warnings.append(f"granger {variables[c]} -> {variables[e]}: {exc}; p set to 1")
                continue
            r, k = (e, c) if orientation == "row_effect" else (c, e)
            p[r, k] = pv
            lags[r, k] = lag
    return CausalityMatrix(variables, p, max_lag, alpha, orientation, lags, tuple(warnings))


def extract_edges(m: CausalityMatrix, target: str = LABEL) -> tuple:
    """Significant directed edges, and the subset incident to ``target``.

    Returns ``(edges, target_edges)`` ordered by matrix scan (row, then column).
    """
    edges = []
    v = len(m.variables)
    for r in range(v):
        for k in range(v):
            # alpha = 1 is treated as "report every pair", including untestable p = 1 cells
            if r == k or not (m.p[r, k] < m.alpha or m.alpha >= 1.0):
                continue
            if m.orientation == "row_effect":
                cause, effect = m.variables[k], m.variables[r]
            else:
                cause, effect = m.variables[r], m.variables[k]
            lag = int(m.lags[r, k]) if m.lags is not None else 0
            edges.append(GrangerEdge(cause, effect, float(m.p[r, k]), lag))
    target_edges = [e for e in edges if target in (e.cause, e.effect)]
    return edges, target_edges
