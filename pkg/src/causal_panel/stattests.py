"""Pre-analysis gates: Shapiro-Wilk normality, normalising transforms,
augmented Dickey-Fuller stationarity, differencing, Pearson screening.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import CollinearityError, DegenerateSampleError, SampleSizeError
from .panel import LABEL, CountryPanel

ADF_KINDS = ("none", "constant", "constant_trend")
DEFAULT_PRUNE_THRESHOLD = 0.95
MAX_DIFF_ORDER = 2
TIE_TOLERANCE = 1e-9
# residual RMS below this fraction of the response RMS counts as an exact ADF fit
EXACT_FIT_RTOL = 1e-10


@dataclass(frozen=True)
class NormalityResult:
    w_statistic: float
    p_value: float
    n: int


@dataclass(frozen=True)
class AdfResult:
    tau: float
    p_value: float
    lags_used: int
    regression_kind: str
    nobs: int = 0
    gamma: float = float("nan")
    critical_values: dict = field(default_factory=dict)

    def rejects_unit_root(self, alpha: float = 0.05) -> bool:
        return self.p_value < alpha


@dataclass(frozen=True)
class SeriesMeta:
    indicator: str
    transform: str = "none"
    diff_order: int = 0
    stationary: bool = True
    normal: bool = True
    w_statistic: float | None = None
    adf_p_value: float | None = None

    def __post_init__(self):
        if not 0 <= self.diff_order <= MAX_DIFF_ORDER:
            raise ValueError("diff_order must be 0, 1 or 2")


# ---------------------------------------------------------------------------
# Shapiro-Wilk (Royston's AS R94 approximation)

_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _poly(coef, x):
    # coef in ascending powers
    return sum(c * x ** k for k, c in enumerate(coef))


@lru_cache(maxsize=256)
def _sw_weights(n: int) -> np.ndarray:
    """Antisymmetric weight vector a_1..a_n for sorted samples of size n."""
    half = n // 2
    if n == 3:
        a_half = np.array([math.sqrt(0.5)])
    else:
        m = ndtri((np.arange(1, half + 1) - 0.375) / (n + 0.25))  # negative
        summ2 = 2.0 * float(m @ m)
        ssumm2 = math.sqrt(summ2)
        rsn = 1.0 / math.sqrt(n)
        a1 = _poly(_C1, rsn) - m[0] / ssumm2
        if n > 5:
            a2 = -m[1] / ssumm2 + _poly(_C2, rsn)
            fac = math.sqrt((summ2 - 2 * m[0] ** 2 - 2 * m[1] ** 2) / (1 - 2 * a1 ** 2 - 2 * a2 ** 2))
            a_half = -m / fac
            a_half[0], a_half[1] = a1, a2
        else:
            fac = math.sqrt((summ2 - 2 * m[0] ** 2) / (1 - 2 * a1 ** 2))
            a_half = -m / fac
            a_half[0] = a1
    a = np.zeros(n)
    a[:half] = -a_half
    a[n - half:] = a_half[::-1]
    a.setflags(write=False)
    return a


def _sw_pvalue(w: float, n: int) -> float:
    if n == 3:
        p = 6.0 / math.pi * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        return min(max(p, 0.0), 1.0)
    w1 = math.log1p(-w) if w < 1.0 else -math.inf
    if n <= 11:
        gamma = _poly(_G, n)
        if w1 >= gamma:
            return 1e-99
        y = -math.log(gamma - w1)
        mean = _poly(_C3, n)
        sd = math.exp(_poly(_C4, n))
    else:
        ln = math.log(n)
        mean = _poly(_C5, ln)
        sd = math.exp(_poly(_C6, ln))
        y = w1
    if y == -math.inf:
        return 1.0
    return float(1.0 - ndtr((y - mean) / sd))


def shapiro_wilk(x: Sequence[float]) -> NormalityResult:
    """Shapiro-Wilk W with Royston's weight and p-value approximations (3 <= n <= 5000)."""
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    if n < 3 or n > 5000:
        raise SampleSizeError(f"Shapiro-Wilk needs 3 <= n <= 5000, got n={n}")
    if not np.isfinite(x).all():
        raise ValueError("sample contains non-finite values")
    centred = x - x.mean()
    ssq = float(centred @ centred)
    if ssq <= 0.0 or x[0] == x[-1]:
        raise DegenerateSampleError("all sample values are equal; W is undefined")
    a = _sw_weights(n)
    w = float((a @ centred) ** 2 / ssq)
    w = min(w, 1.0)
    return NormalityResult(w, _sw_pvalue(w, n), n)


# ---------------------------------------------------------------------------
# normalising transforms


@dataclass(frozen=True)
class Transform:
    kind: str  # none | log | power | exp
    lam: float = 1.0
    shift: float = 0.0
    centre: float = 0.0
    scale: float = 1.0

    @property
    def tag(self) -> str:
        if self.kind == "power":
            return f"power({self.lam:g})"
        return self.kind

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            if self.kind == "none":
                return x.copy()
            if self.kind == "log":
                return np.log(x + self.shift)
            if self.kind == "power":
                return np.sign(x) * np.abs(x) ** self.lam
            if self.kind == "exp":
                return np.exp((x - self.centre) / self.scale)
        raise ValueError(f"unknown transform {self.kind!r}")


POWERS = (-2.0, -1.0, -0.5, 0.5, 2.0)


def candidate_transforms(x) -> list:
    x = np.asarray(x, dtype=float)
    lo, hi = float(x.min()), float(x.max())
    shift = 0.0 if lo > 0 else (hi - lo) / x.size - lo
    cands = [Transform("none"), Transform("log", shift=shift)]
    cands += [Transform("power", lam=lam) for lam in POWERS]
    sd = float(x.std())
    if sd > 0:
        cands.append(Transform("exp", centre=float(x.mean()), scale=sd))
    return cands


def _score(y):
    if not np.isfinite(y).all():
        return None
    try:
        return shapiro_wilk(y).w_statistic
    except DegenerateSampleError:
        return None


def is_near_constant(x) -> bool:
    x = np.asarray(x, dtype=float)
    sd = float(x.std())
    return sd == 0.0 or sd <= 1e-8 * abs(float(x.mean()))


def fit_normalising_transform(x) -> Transform:
    """Candidate transform with the largest W; identity unless strictly better by 1e-9."""
    x = np.asarray(x, dtype=float)
    if x.size < 3:
        raise SampleSizeError("need at least 3 values")
    identity = Transform("none")
    if is_near_constant(x):
        return identity
    best, best_w = identity, _score(x)
    if best_w is None:
        return identity
    for t in candidate_transforms(x)[1:]:
        w = _score(t.apply(x))
        if w is not None and w > best_w + TIE_TOLERANCE:
            best, best_w = t, w
    return best


def to_normal(x) -> tuple:
    """Return ``(transformed series, transform tag)`` maximising Shapiro-Wilk W."""
    t = fit_normalising_transform(x)
    return t.apply(x), t.tag


# ---------------------------------------------------------------------------
# augmented Dickey-Fuller


def _load_adf_tables():
    text = resources.files("causal_panel").joinpath("data/adf_tables.txt").read_text("utf-8")
    tables = {"bounds": {}, "smallp": {}, "largep": {}, "crit": {}}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        rec, kind = parts[0], parts[1]
        nums = [float(p) for p in parts[2:]]
        if rec == "crit":
            tables["crit"].setdefault(kind, {})[nums[0]] = tuple(nums[1:])
        else:
            tables[rec][kind] = tuple(nums)
    return tables


ADF_TABLES = _load_adf_tables()


def mackinnon_pvalue(tau: float, kind: str = "constant") -> float:
    """Approximate asymptotic p-value of a Dickey-Fuller tau statistic."""
    lo, star, hi = ADF_TABLES["bounds"][kind]
    if tau > hi:
        return 1.0
    if tau < lo:
        return 0.0
    coef = ADF_TABLES["smallp"][kind] if tau <= star else ADF_TABLES["largep"][kind]
    return float(ndtr(_poly(coef, tau)))


def mackinnon_critical_values(kind: str, nobs: int) -> dict:
    out = {}
    for level, (b0, b1, b2, b3) in sorted(ADF_TABLES["crit"][kind].items()):
        inv = 1.0 / nobs
        out[f"{int(round(level * 100))}%"] = b0 + b1 * inv + b2 * inv ** 2 + b3 * inv ** 3
    return out


def default_max_lag(n: int) -> int:
    return int(math.floor((n - 1) ** (1.0 / 3.0)))


def _trend_columns(kind, nobs):
    if kind == "none":
        return np.empty((nobs, 0))
    if kind == "constant":
        return np.ones((nobs, 1))
    t = np.arange(1, nobs + 1, dtype=float)
    return np.column_stack([np.ones(nobs), t])


def _adf_design(x, lags, kind, trim):
    """Response Δy_t and regressors [y_{t-1}, Δy_{t-1..t-lags}, trend] with ``trim`` dropped rows."""
    dx = np.diff(x)
    nobs = dx.size - trim
    y = dx[trim:]
    cols = [x[trim:-1]]
    for i in range(1, lags + 1):
        cols.append(dx[trim - i: dx.size - i])
    X = np.column_stack(cols + [_trend_columns(kind, nobs)])
    return y, X


def _full_rank(X):
    return np.linalg.matrix_rank(X) == X.shape[1]


def _ols(y, X):
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise CollinearityError("design matrix is rank deficient")
    resid = y - X @ beta
    ssr = float(resid @ resid)
    return beta, ssr


def _aic(ssr, nobs, k):
    with np.errstate(divide="ignore"):
        llf = -nobs / 2.0 * (math.log(2 * math.pi) + np.log(ssr / nobs) + 1.0)
    return -2.0 * llf + 2.0 * k


def adf(x, max_lag: int | None = None, kind: str = "constant") -> AdfResult:
    """Augmented Dickey-Fuller test of a unit root.

    Candidate lag orders 0..max_lag are compared by AIC on a common sample
    (the rows available at ``max_lag``); the chosen order is refitted on all
    rows it allows. Lag orders whose design is rank deficient are skipped.
    """
    if kind not in ADF_KINDS:
        raise ValueError(f"kind must be one of {ADF_KINDS}")
    x = np.asarray(x, dtype=float)
    n = x.size
    if max_lag is None:
        max_lag = default_max_lag(n)
    if max_lag < 0:
        raise ValueError("max_lag must be >= 0")
    if n < 10 + max_lag:
        raise SampleSizeError(f"ADF needs n >= 10 + max_lag = {10 + max_lag}, got {n}")
    ntrend = _trend_columns(kind, 1).shape[1]
    y_all, X_all = _adf_design(x, max_lag, kind, max_lag)
    best = None
    for p in range(max_lag + 1):
        cols = list(range(1 + p)) + list(range(1 + max_lag, 1 + max_lag + ntrend))
        X = X_all[:, cols]
        if not _full_rank(X):
            continue
        _, ssr = _ols(y_all, X)
        score = (_aic(ssr, y_all.size, X.shape[1]), p)
        if best is None or score < best:
            best = score
    if best is None:
        raise CollinearityError("no identifiable ADF regression for any lag order")
    lag = best[1]
    y, X = _adf_design(x, lag, kind, lag)
    if not _full_rank(X):
        raise CollinearityError("ADF design matrix is rank deficient")
    beta, ssr = _ols(y, X)
    nobs, k = X.shape
    gamma = float(beta[0])
    if ssr <= EXACT_FIT_RTOL ** 2 * float(y @ y):
        # exact fit up to rounding: the statistic degenerates to the sign of gamma
        if abs(gamma) <= 1e-8:
            tau = 0.0
        else:
            tau = -math.inf if gamma < 0 else math.inf
    else:
        sigma2 = ssr / (nobs - k)
        cov = sigma2 * np.linalg.inv(X.T @ X)
        tau = gamma / math.sqrt(cov[0, 0])
    return AdfResult(
        tau=float(tau),
        p_value=mackinnon_pvalue(tau, kind),
        lags_used=lag,
        regression_kind=kind,
        nobs=nobs,
        gamma=gamma,
        critical_values=mackinnon_critical_values(kind, nobs),
    )


@dataclass(frozen=True, eq=False)
class Stationarized:
    values: np.ndarray
    diff_order: int
    stationary: bool
    degenerate: bool = False
    adf: AdfResult | None = None

    def __iter__(self):
        # allows ``values, order = stationarize(x)``
        return iter((self.values, self.diff_order))


def stationarize(x, max_lag: int | None = None, kind: str = "constant",
                 alpha: float = 0.05) -> Stationarized:
    """Difference up to twice until ADF rejects a unit root at ``alpha``.

    A series that becomes constant (e.g. a linear trend after one difference)
    is returned flagged ``degenerate`` without further testing.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 12:
        raise SampleSizeError(f"stationarize needs n >= 12, got {x.size}")
    current = x
    for order in range(MAX_DIFF_ORDER + 1):
        if order:
            current = np.diff(current)
        if is_near_constant(current) or np.ptp(current) == 0:
            return Stationarized(current, order, stationary=False, degenerate=True)
        ml = max_lag
        if ml is not None:
            ml = min(ml, current.size - 10)
        res = adf(current, ml, kind)
        if res.p_value < alpha or order == MAX_DIFF_ORDER:
            return Stationarized(current, order, res.p_value < alpha, adf=res)
    raise AssertionError("unreachable")


# ---------------------------------------------------------------------------
# correlation screening


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    variables: tuple
    r: np.ndarray
    excluded: tuple = ()
    warnings: tuple = ()

    def value(self, a: str, b: str) -> float:
        return float(self.r[self.variables.index(a), self.variables.index(b)])


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=float) - np.mean(a)
    b = np.asarray(b, dtype=float) - np.mean(b)
    return float(np.clip(a @ b / math.sqrt((a @ a) * (b @ b)), -1.0, 1.0))


def pearson_matrix(panel: CountryPanel, include_label: bool = False) -> CorrelationMatrix:
    """Pearson correlations between non-constant indicators of a complete panel."""
    if panel.missing.any():
        raise ValueError("pearson_matrix requires a complete panel")
    names = list(panel.indicators)
    data = [panel.values[i] for i in range(len(names))]
    if include_label:
        names.append(LABEL)
        data.append(panel.label.astype(float))
    keep, excluded, warnings = [], [], []
    for name, series in zip(names, data):
        if np.ptp(series) == 0:
            excluded.append(name)
            warnings.append(f"{panel.country_id}: {name!r} is constant; excluded from correlations")
        else:
            keep.append((name, series))
    k = len(keep)
    r = np.eye(k)
    if k:
        z = np.array([s - s.mean() for _, s in keep])
        z /= np.sqrt((z ** 2).sum(axis=1))[:, None]
        r = np.clip(z @ z.T, -1.0, 1.0)
        r = (r + r.T) / 2.0
        np.fill_diagonal(r, 1.0)
    r.setflags(write=False)
    return CorrelationMatrix(tuple(n for n, _ in keep), r, tuple(excluded), tuple(warnings))


def _pairwise_pearson(panel: CountryPanel):
    """Correlations over pairwise-complete years; undefined pairs count as 0."""
    obs = ~panel.missing
    names = []
    rows = []
    for i, name in enumerate(panel.indicators):
        seen = panel.values[i, obs[i]]
        if seen.size >= 2 and np.ptp(seen) > 0:
            names.append(name)
            rows.append(i)
    k = len(rows)
    r = np.eye(k)
    for a, b in combinations(range(k), 2):
        both = obs[rows[a]] & obs[rows[b]]
        x, y = panel.values[rows[a], both], panel.values[rows[b], both]
        if x.size >= 3 and np.ptp(x) > 0 and np.ptp(y) > 0:
            r[a, b] = r[b, a] = pearson(x, y)
        else:
            r[a, b] = r[b, a] = 0.0
    return tuple(names), r


def prune_correlated(panel: CountryPanel, threshold: float = DEFAULT_PRUNE_THRESHOLD,
                     protected=()) -> tuple:
    """Greedily drop the later indicator of each pair with |r| >= threshold.

    Scans pairs in indicator order; a protected indicator is never dropped
    (if the later member is protected, the earlier one goes instead).
    Returns ``(pruned panel, dropped names)``.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    keep_safe = set(protected) | {LABEL}
    if panel.missing.any():
        names, r = _pairwise_pearson(panel)
    else:
        cm = pearson_matrix(panel)
        names, r = cm.variables, cm.r
    alive = [True] * len(names)
    for i, j in combinations(range(len(names)), 2):
        if not (alive[i] and alive[j]):
            continue
        if abs(r[i, j]) >= threshold:
            if names[j] not in keep_safe:
                alive[j] = False
            elif names[i] not in keep_safe:
                alive[i] = False
    dropped = [n for n, a in zip(names, alive) if not a]
    return panel.drop(dropped), dropped
